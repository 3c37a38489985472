#include "analysis.hpp"

#include <algorithm>
#include <cmath>

namespace ntkcpl {

Eigen::MatrixXd label_map_g(const Eigen::MatrixXd& f_cpl_pred,
                            const std::vector<int>& dominant,
                            int num_classes) {
  if (static_cast<Index>(dominant.size()) != f_cpl_pred.cols()) {
    throw_precondition("dominance must cover every CPL class");
  }
  Eigen::MatrixXd out =
      Eigen::MatrixXd::Zero(f_cpl_pred.rows(), num_classes);
  for (Index k = 0; k < f_cpl_pred.cols(); ++k) {
    const int j = dominant[static_cast<std::size_t>(k)];
    if (j < 0 || j >= num_classes) {
      throw_precondition("dominant class " + std::to_string(j) +
                         " outside [0," + std::to_string(num_classes) + ")");
    }
    out.col(j) += f_cpl_pred.col(k);
  }
  return out;
}

PropositionResult verify_proposition(const KernelSystem& sys,
                                     const std::vector<int>& cpl_labels,
                                     int n_clu,
                                     const std::vector<int>& true_of_labeled,
                                     int num_classes,
                                     const std::vector<Index>& query) {
  if (static_cast<Index>(cpl_labels.size()) != sys.gram.rows()) {
    throw_precondition("CPL labels must cover every tracked point");
  }
  if (true_of_labeled.size() != sys.labeled.size()) {
    throw_precondition("true labels must align with the labeled set");
  }
  if (sys.f0.size() > 0 && sys.f0.cwiseAbs().maxCoeff() != 0.0) {
    throw_precondition(
        "verify_proposition requires the zero-initial-output mode (f0 == 0)");
  }

  // Dominance from labeled members: per cluster, the majority true label
  // (ties toward the lowest class). Clusters without labeled members get
  // class 0; their regression columns are identically zero, so the
  // mapping choice cannot affect the comparison.
  std::vector<std::vector<int>> counts(
      static_cast<std::size_t>(n_clu),
      std::vector<int>(static_cast<std::size_t>(num_classes), 0));
  for (std::size_t i = 0; i < sys.labeled.size(); ++i) {
    const int k = cpl_labels[static_cast<std::size_t>(sys.labeled[i])];
    const int y = true_of_labeled[i];
    if (k < 0 || k >= n_clu) throw_precondition("CPL label out of range");
    if (y < 0 || y >= num_classes) throw_precondition("true label out of range");
    ++counts[static_cast<std::size_t>(k)][static_cast<std::size_t>(y)];
  }
  std::vector<int> dominant(static_cast<std::size_t>(n_clu), 0);
  for (int k = 0; k < n_clu; ++k) {
    int best = 0, best_count = -1;
    for (int c = 0; c < num_classes; ++c) {
      const int v = counts[static_cast<std::size_t>(k)][static_cast<std::size_t>(c)];
      if (v > best_count) {
        best_count = v;
        best = c;
      }
    }
    dominant[static_cast<std::size_t>(k)] = best;
  }

  PropositionResult result;
  for (std::size_t i = 0; i < sys.labeled.size(); ++i) {
    const int k = cpl_labels[static_cast<std::size_t>(sys.labeled[i])];
    if (dominant[static_cast<std::size_t>(k)] != true_of_labeled[i]) {
      result.dominance_violations.push_back(sys.labeled[i]);
    }
  }

  std::vector<int> cpl_of_labeled;
  cpl_of_labeled.reserve(sys.labeled.size());
  for (Index p : sys.labeled) {
    cpl_of_labeled.push_back(cpl_labels[static_cast<std::size_t>(p)]);
  }
  const Eigen::MatrixXd f_y =
      ntk_predict(sys, one_hot(true_of_labeled, num_classes), query);
  const Eigen::MatrixXd f_cpl =
      ntk_predict(sys, one_hot(cpl_of_labeled, n_clu), query);
  const Eigen::MatrixXd mapped = label_map_g(f_cpl, dominant, num_classes);
  result.max_deviation = (f_y - mapped).cwiseAbs().maxCoeff();
  return result;
}

ErrorDecomposition decompose_error(const Eigen::MatrixXd& ntk_preds_cpl,
                                   const std::vector<int>& y_true,
                                   const std::vector<int>& y_cpl,
                                   const std::vector<int>& dominant,
                                   int num_classes) {
  const Index n = ntk_preds_cpl.rows();
  if (static_cast<Index>(y_true.size()) != n ||
      static_cast<Index>(y_cpl.size()) != n) {
    throw_precondition("label arrays must align with the prediction rows");
  }
  const Eigen::MatrixXd mapped =
      label_map_g(ntk_preds_cpl, dominant, num_classes);

  ErrorDecomposition dec;
  dec.n_pool = n;
  Index impure = 0, overclustered = 0;
  for (Index i = 0; i < n; ++i) {
    const int k_hat = argmax_row_lowest(ntk_preds_cpl, i);
    const int j_hat = argmax_row_lowest(mapped, i);
    const bool agrees_cpl = k_hat == y_cpl[static_cast<std::size_t>(i)];
    const bool agrees_true = j_hat == y_true[static_cast<std::size_t>(i)];
    if (agrees_cpl && !agrees_true) {
      ++dec.n_nff;
      const int dom_own =
          dominant[static_cast<std::size_t>(y_cpl[static_cast<std::size_t>(i)])];
      if (dom_own != y_true[static_cast<std::size_t>(i)]) ++impure;
    } else if (agrees_true && !agrees_cpl) {
      ++dec.n_fnf;
      const int dom_pred = dominant[static_cast<std::size_t>(k_hat)];
      const int dom_own =
          dominant[static_cast<std::size_t>(y_cpl[static_cast<std::size_t>(i)])];
      if (dom_pred == dom_own) ++overclustered;
    }
  }
  const double nd = static_cast<double>(n);
  dec.p_nff = static_cast<double>(dec.n_nff) / nd;
  dec.p_fnf = static_cast<double>(dec.n_fnf) / nd;
  dec.error_cpl = static_cast<double>(dec.n_nff + dec.n_fnf) / nd;
  dec.impurity_share =
      dec.n_nff > 0 ? static_cast<double>(impure) / dec.n_nff : 0.0;
  dec.overclustering_share =
      dec.n_fnf > 0 ? static_cast<double>(overclustered) / dec.n_fnf : 0.0;
  return dec;
}

CoverageEstimate coverage_estimate(const KernelSystem& sys, const CPL& cpl,
                                   const std::vector<int>& classifier_preds,
                                   const std::vector<int>& y_true) {
  if (sys.labeled.empty()) {
    throw_precondition("coverage estimation requires a labeled set");
  }
  CoverageEstimate cov;
  cov.estimated =
      1.0 - estimate_pool_risk(sys, cpl.labels, cpl.n_clu, std::nullopt);
  if (!y_true.empty()) {
    if (classifier_preds.size() != sys.pool.size() ||
        y_true.size() != sys.pool.size()) {
      throw_precondition("coverage inputs must align with the pool");
    }
    Index hits = 0;
    for (std::size_t i = 0; i < sys.pool.size(); ++i) {
      if (classifier_preds[i] == y_true[i]) ++hits;
    }
    cov.true_coverage =
        static_cast<double>(hits) / static_cast<double>(sys.pool.size());
    cov.has_true = true;
  }
  return cov;
}

double effective_budget_ratio(const std::vector<double>& strategy_mean,
                              const std::vector<double>& baseline_mean,
                              const std::vector<double>& baseline_std) {
  if (strategy_mean.size() != baseline_mean.size() ||
      strategy_mean.size() != baseline_std.size()) {
    throw_precondition("effective budget ratio needs aligned budget grids");
  }
  if (strategy_mean.empty()) {
    throw_precondition("effective budget ratio needs a nonempty grid");
  }
  Index wins = 0;
  for (std::size_t i = 0; i < strategy_mean.size(); ++i) {
    if (strategy_mean[i] > baseline_mean[i] + baseline_std[i]) ++wins;
  }
  return static_cast<double>(wins) /
         static_cast<double>(strategy_mean.size());
}

double argmax_agreement_rate(const Eigen::MatrixXd& preds_true_space,
                             const Eigen::MatrixXd& preds_cpl_space,
                             const std::vector<int>& dominant) {
  if (preds_true_space.rows() != preds_cpl_space.rows()) {
    throw_precondition("prediction row mismatch");
  }
  const Index n = preds_true_space.rows();
  if (n == 0) return 0.0;
  Index agree = 0;
  for (Index i = 0; i < n; ++i) {
    const int j = argmax_row_lowest(preds_true_space, i);
    const int k = argmax_row_lowest(preds_cpl_space, i);
    if (dominant[static_cast<std::size_t>(k)] == j) ++agree;
  }
  return static_cast<double>(agree) / static_cast<double>(n);
}

}  // namespace ntkcpl
