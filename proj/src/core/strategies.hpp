#pragma once

#include <string>
#include <vector>

#include "clustering.hpp"
#include "dataset.hpp"
#include "model.hpp"
#include "ntk.hpp"

namespace ntkcpl {

enum class StrategyName { Random, Entropy, Coreset, Badge, Lookahead, Ntkcpl };
enum class FeatureSource { SelfSupervised, ActiveLearning };

StrategyName strategy_from_string(const std::string& name);
std::string strategy_to_string(StrategyName name);
FeatureSource feature_source_from_string(const std::string& name);

struct StrategySpec {
  StrategyName name = StrategyName::Random;
  FeatureSource feature_source = FeatureSource::SelfSupervised;
  double ridge = -1.0;  // < 0 selects the scale-aware default
  double time = kTimeInfinity;
  std::uint64_t seed = 0;
};

// Every strategy returns b distinct unlabeled sample indices.

std::vector<Index> select_random(const ALState& state, Index b,
                                 std::mt19937_64& rng);

// Top-b candidates by Shannon entropy of softmax(logits); ties toward the
// lower sample index.
std::vector<Index> select_entropy(const ALState& state, Index b,
                                  const MLPParams& classifier,
                                  const Eigen::MatrixXd& features);

// Greedy k-center over L plus the candidate set. With L empty the first
// pick is the candidate farthest from the candidate centroid.
std::vector<Index> select_coreset(const ALState& state, Index b,
                                  const Eigen::MatrixXd& features);

// kmeans++ (D^2) seeding over the candidates' gradient embeddings; the
// first seed is uniform. When every remaining D^2 weight is zero the pick
// falls back to uniform among the remaining candidates.
std::vector<Index> select_badge(const ALState& state, Index b,
                                const MLPParams& classifier,
                                const Eigen::MatrixXd& features,
                                std::mt19937_64& rng);

// Greedy maximum total L1 prediction change over the candidate set, each
// hypothetical labeled with its own currently predicted class.
// `sys` must be built over `point_samples` with L set; labels are the
// one-hot true labels of L.
std::vector<Index> select_lookahead(const ALState& state, Index b,
                                    const KernelSystem& sys,
                                    const std::vector<Index>& point_samples,
                                    const Eigen::MatrixXd& labeled_one_hot);

// Greedy empirical-risk minimization over the candidate pool with CPL
// surrogate labels: each step scans the remaining candidates, scores the
// pool risk with the candidate hypothetically added under its CPL label,
// commits the argmin (ties toward the lower sample index).
std::vector<Index> select_ntkcpl(const ALState& state, Index b,
                                 const KernelSystem& sys,
                                 const std::vector<Index>& point_samples,
                                 const CPL& cpl);

// Selection log row: `round,step,sample_id,strategy`.
void append_selection_csv(std::ostream& os, int round,
                          const std::vector<Index>& picks,
                          const std::vector<std::int64_t>& sample_ids,
                          const std::string& strategy);

}  // namespace ntkcpl
