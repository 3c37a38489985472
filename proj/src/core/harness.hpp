#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "analysis.hpp"
#include "clustering.hpp"
#include "dataset.hpp"
#include "model.hpp"
#include "ntk.hpp"
#include "strategies.hpp"

namespace ntkcpl {

struct NtkOptions {
  double ridge = -1.0;  // < 0 selects the scale-aware default per round
  double time = kTimeInfinity;
  bool zero_output_init = true;
  // Hidden width of the kernelized MLP; 0 reuses the classifier width.
  // Wider kernels track the infinite-width limit more closely.
  Index kernel_width = 0;
};

struct ExperimentConfig {
  std::string train_path;
  std::string test_path;
  FileFormat format = FileFormat::Binary;
  StrategySpec strategy;
  std::vector<Index> schedule;  // per-round query sizes
  Index initial_budget = 0;
  Index c_max = 1;
  Index candidate_size = 10000;
  ClusterCountRule cluster_rule = ClusterCountRule::TotalLabelsHalf;
  int fixed_cluster_count = 0;  // > 0 pins N_clu (max-cluster ablation)
  TrainConfig train;
  Index hidden_width = 64;
  NtkOptions ntk;
  std::vector<std::uint64_t> seeds;
  std::string output_dir;
  bool write_artifacts = true;

  void validate() const;
};

ExperimentConfig parse_config_json(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);

struct MetricsRecord {
  std::uint64_t seed = 0;
  int round = 0;
  Index total_labels = 0;
  std::string strategy;
  double test_accuracy = 0.0;
  double estimated_coverage = 0.0;
  double true_coverage = 0.0;
  double p_nff = 0.0;
  double p_fnf = 0.0;
  double wallclock_select_seconds = 0.0;
};

std::string metrics_csv_header();
void write_metrics_csv(const std::vector<MetricsRecord>& records,
                       const std::string& path);
std::vector<MetricsRecord> read_metrics_csv(const std::string& path);

// Runs the configured experiment for every seed: the initial round labels
// b0 cluster representatives of the self-supervised features, then each
// round selects with the strategy, queries the oracle, trains a fresh
// classifier on L, evaluates on the test split and records diagnostics.
std::vector<MetricsRecord> run_experiment(const ExperimentConfig& cfg);

// Raw records CSV, JSON summary (per-budget mean/std per strategy),
// per-strategy plot CSVs and the effective-budget-ratio table.
void emit_report(const std::vector<MetricsRecord>& records,
                 const std::string& output_dir);

// One-shot interactive state over a feature pool, backing the shared
// library's session handle: label known samples, run a single selection,
// or emit the per-round diagnostic document.
class Session {
 public:
  struct Config {
    StrategySpec strategy;
    Index candidate_size = 10000;
    Index initial_budget = 8;
    Index c_max = 64;
    ClusterCountRule cluster_rule = ClusterCountRule::TotalLabelsHalf;
    int fixed_cluster_count = 0;
    TrainConfig train;
    Index hidden_width = 64;
    NtkOptions ntk;
    std::uint64_t seed = 0;
  };

  Session(FeatureSet features, Config cfg);

  // Parses the session JSON document (strategy/train/ntk sections plus
  // candidate_size, initial_budget, c_max, seed).
  static Config parse_config(const std::string& json_text);

  void label(const std::vector<std::int64_t>& ids);
  std::vector<std::int64_t> select(Index budget);
  std::string diagnose_json();

  // Offline-inspection dumps for the current round state.
  void dump_gram(const std::string& path);
  void dump_cpl(const std::string& csv_path, const std::string& purity_path);

  const ALState& state() const { return state_; }
  const FeatureSet& features() const { return features_; }

 private:
  FeatureSet features_;
  Config cfg_;
  ALState state_;
  int round_ = 0;
};

}  // namespace ntkcpl
