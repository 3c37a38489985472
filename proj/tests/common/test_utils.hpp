#pragma once

#include <optional>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "core/common.hpp"

namespace ntkcpl::testing {

inline Eigen::MatrixXd random_matrix(Index rows, Index cols,
                                     std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> gauss(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = gauss(rng);
  }
  return m;
}

// Random symmetric PSD matrix with slack rank, plus a well-conditioned
// diagonal bump when requested.
inline Eigen::MatrixXd random_psd(Index n, std::mt19937_64& rng,
                                  double diag_bump = 0.0) {
  Eigen::MatrixXd a = random_matrix(n, n + 4, rng);
  Eigen::MatrixXd psd = a * a.transpose();
  psd.diagonal().array() += diag_bump;
  return ((psd + psd.transpose()) * 0.5).eval();
}

// Reference kernel-regression pool risk: rebuilds the ridged labeled
// block from scratch (dense solve), predicts over the pool and counts
// argmax mismatches against the CPL labels. Ties break toward the lowest
// class index. Independent of the incremental implementation under test.
inline double naive_pool_risk(const Eigen::MatrixXd& gram, double ridge,
                              std::vector<Index> labeled,
                              const std::vector<int>& cpl, int n_clu,
                              const std::vector<Index>& pool,
                              std::optional<std::pair<Index, int>> hyp) {
  std::vector<int> labs;
  for (Index p : labeled) labs.push_back(cpl[static_cast<std::size_t>(p)]);
  if (hyp.has_value()) {
    labeled.push_back(hyp->first);
    labs.push_back(hyp->second);
  }
  const Index l = static_cast<Index>(labeled.size());
  Eigen::MatrixXd kll(l, l);
  for (Index i = 0; i < l; ++i) {
    for (Index j = 0; j < l; ++j) {
      kll(i, j) = gram(labeled[static_cast<std::size_t>(i)],
                       labeled[static_cast<std::size_t>(j)]);
    }
  }
  kll.diagonal().array() += ridge;
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(l, n_clu);
  for (Index i = 0; i < l; ++i) y(i, labs[static_cast<std::size_t>(i)]) = 1.0;
  Eigen::MatrixXd alpha = kll.fullPivLu().solve(y);

  Index miss = 0;
  for (Index q : pool) {
    Eigen::RowVectorXd krow(l);
    for (Index j = 0; j < l; ++j) {
      krow(j) = gram(q, labeled[static_cast<std::size_t>(j)]);
    }
    Eigen::RowVectorXd pred = krow * alpha;
    int best = 0;
    double v = pred(0);
    for (Index c = 1; c < pred.size(); ++c) {
      if (pred(c) > v) {
        v = pred(c);
        best = static_cast<int>(c);
      }
    }
    if (best != cpl[static_cast<std::size_t>(q)]) ++miss;
  }
  return static_cast<double>(miss) / static_cast<double>(pool.size());
}

// Reference greedy NTKCPL selection: every step rebuilds the full system
// per candidate via naive_pool_risk and commits the argmin.
inline std::vector<Index> naive_ntkcpl_sequence(
    const Eigen::MatrixXd& gram, double ridge, std::vector<Index> labeled,
    const std::vector<int>& cpl, int n_clu, const std::vector<Index>& pool,
    Index budget) {
  std::vector<Index> picks;
  std::vector<char> taken(static_cast<std::size_t>(gram.rows()), 0);
  for (Index p : labeled) taken[static_cast<std::size_t>(p)] = 1;
  for (Index step = 0; step < budget; ++step) {
    Index best = -1;
    double best_risk = std::numeric_limits<double>::infinity();
    for (Index c : pool) {
      if (taken[static_cast<std::size_t>(c)]) continue;
      const double risk =
          naive_pool_risk(gram, ridge, labeled, cpl, n_clu, pool,
                          std::make_pair(c, cpl[static_cast<std::size_t>(c)]));
      if (risk < best_risk) {
        best_risk = risk;
        best = c;
      }
    }
    picks.push_back(best);
    labeled.push_back(best);
    taken[static_cast<std::size_t>(best)] = 1;
  }
  return picks;
}

}  // namespace ntkcpl::testing
