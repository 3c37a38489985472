#pragma once

#include <string>
#include <utility>
#include <vector>

#include "common.hpp"

namespace ntkcpl {

struct ClusterModel {
  std::vector<int> assignment;          // per point, in [0,k)
  Eigen::MatrixXd centroids;            // k x d
  int k = 0;
  double inertia = 0.0;
  std::vector<double> inertia_history;  // one entry per Lloyd iteration

  double recompute_inertia(const Eigen::MatrixXd& x) const;
};

// kmeans++ seeding followed by Lloyd iterations until the assignment is
// a fixpoint or max_iter is hit. Empty clusters are repaired by moving
// the point farthest from its assigned centroid (from clusters that keep
// at least two members; ties toward the lowest point index).
ClusterModel kmeans(const Eigen::MatrixXd& x, int k, std::mt19937_64& rng,
                    int max_iter = 100);

// Lloyd with cannot-link constraints: points are assigned sequentially in
// `order` (default ascending index) to the nearest centroid that has no
// cannot-linked point already assigned in the same pass. An infeasible
// point raises a constraint error naming it.
//
// `groups` (optional, -1 for ungrouped) marks points whose cannot-links
// form class blocks, as in CPL generation. Grouped points then reserve
// clusters: a point may open a fresh cluster only while enough free
// clusters remain for the groups not yet placed, which keeps the pass
// feasible whenever k is at least the number of groups.
ClusterModel constrained_kmeans(
    const Eigen::MatrixXd& x, int k,
    const std::vector<std::pair<Index, Index>>& cannot_link,
    std::mt19937_64& rng, int max_iter = 100,
    const std::vector<Index>* order = nullptr,
    const std::vector<int>* groups = nullptr);

// Members whose predicted class differs from the cluster's dominant
// predicted class (dominance ties toward the lowest class id).
int count_confusing(const std::vector<int>& member_preds);

// Clustering-pseudo-labels over the clustered point set (the candidate
// subset plus the labeled samples).
struct CPL {
  std::vector<int> labels;  // per point, in [0, n_clu)
  int n_clu = 0;
  // Dominant true class per cluster: majority true label of the labeled
  // members when the cluster contains any, else the majority model
  // prediction (the under-coverage fallback).
  std::vector<int> dominant;
  std::vector<char> covered;              // cluster has >=1 labeled member
  std::vector<std::vector<int>> pred_counts;  // per-cluster histogram
};

// Assembles a CPL from an assignment vector: dominance, coverage and the
// per-cluster prediction histograms.
CPL make_cpl(std::vector<int> labels, int n_clu,
             const std::vector<std::pair<Index, int>>& labeled,
             const std::vector<int>& model_preds, int num_classes);

// Constrained k-means with c0 clusters and cannot-links between labeled
// pairs of differing true classes, then (n_clu - c0) splitting rounds,
// each splitting the cluster with the most confusing samples in two via
// plain 2-means on its members.
CPL generate_cpl(const Eigen::MatrixXd& features,
                 const std::vector<int>& model_preds, int c0, int n_clu,
                 const std::vector<std::pair<Index, int>>& labeled,
                 int num_classes, std::mt19937_64& rng, int max_iter = 100);

enum class ClusterCountRule {
  TotalLabelsHalf,  // half of the total labels (default)
  QueryHalf,        // half of the current query step
};

// Cluster-count schedule: round 0 uses b0; later rounds use
// min(half, c_max) where `half` follows the configured rule, clamped to
// be non-decreasing across rounds.
int cluster_schedule(Index total_labels, Index b0, Index c_max, int round,
                     ClusterCountRule rule = ClusterCountRule::TotalLabelsHalf,
                     Index query_size = 0);

// CSV dump: `sample_id,cpl_class` rows plus a per-cluster purity report.
void save_cpl_csv(const CPL& cpl, const std::vector<std::int64_t>& sample_ids,
                  const std::string& path, const std::string& purity_path);

}  // namespace ntkcpl
