#pragma once

#include <string>
#include <vector>

#include "clustering.hpp"
#include "common.hpp"
#include "ntk.hpp"

namespace ntkcpl {

// Eq.-level decomposition of the CPL surrogate error over the pool, with
// integer counts kept alongside the fractions so the count identity
// error_cpl * N == n_nff + n_fnf holds exactly.
struct ErrorDecomposition {
  double p_nff = 0.0;  // prediction agrees with y_cpl, disagrees with y
  double p_fnf = 0.0;  // prediction agrees with y, disagrees with y_cpl
  double error_cpl = 0.0;
  double impurity_share = 0.0;       // of p_nff: true label not dominant
  double overclustering_share = 0.0; // of p_fnf: both classes map alike
  Index n_nff = 0;
  Index n_fnf = 0;
  Index n_pool = 0;
};

// Maps CPL-space scores to true-class scores by summing the columns of
// every CPL class sharing a dominant true label.
Eigen::MatrixXd label_map_g(const Eigen::MatrixXd& f_cpl_pred,
                            const std::vector<int>& dominant,
                            int num_classes);

struct PropositionResult {
  double max_deviation = 0.0;
  // Labeled gram positions whose true label is not dominant in their
  // CPL cluster (nonempty means the precondition fails).
  std::vector<Index> dominance_violations;
};

// Compares NTK regression trained on one-hot true labels against the
// g-mapped regression trained on one-hot CPL labels, on the query
// positions. Requires the zero-initial-output mode (f0 == 0).
PropositionResult verify_proposition(const KernelSystem& sys,
                                     const std::vector<int>& cpl_labels,
                                     int n_clu,
                                     const std::vector<int>& true_of_labeled,
                                     int num_classes,
                                     const std::vector<Index>& query);

// Per-sample 0-1 comparisons of the CPL-space predictions against the
// CPL label (raw argmax) and the true label (argmax after g-mapping).
ErrorDecomposition decompose_error(const Eigen::MatrixXd& ntk_preds_cpl,
                                   const std::vector<int>& y_true,
                                   const std::vector<int>& y_cpl,
                                   const std::vector<int>& dominant,
                                   int num_classes);

struct CoverageEstimate {
  double estimated = 0.0;  // 1 - pool risk (NTK vs CPL)
  double true_coverage = 0.0;
  bool has_true = false;
};

CoverageEstimate coverage_estimate(const KernelSystem& sys, const CPL& cpl,
                                   const std::vector<int>& classifier_preds,
                                   const std::vector<int>& y_true);

// Fraction of budget points where the strategy mean strictly exceeds
// baseline mean + baseline std. Grids must align.
double effective_budget_ratio(const std::vector<double>& strategy_mean,
                              const std::vector<double>& baseline_mean,
                              const std::vector<double>& baseline_std);

// Rate of the appendix claim argmax f_y == g(argmax f_cpl), measured,
// never asserted.
double argmax_agreement_rate(const Eigen::MatrixXd& preds_true_space,
                             const Eigen::MatrixXd& preds_cpl_space,
                             const std::vector<int>& dominant);

}  // namespace ntkcpl
