#pragma once

#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "common.hpp"
#include "model.hpp"

namespace ntkcpl {

constexpr double kTimeInfinity = std::numeric_limits<double>::infinity();

// Kernel regression state over a fixed point set (the candidate subset
// plus the labeled samples). `pool` names the gram positions over which
// pool risk is averaged; `labeled` grows as samples are committed.
//
// Predictions follow f_t(x) = f0(x) + K(x,L) (K_LL + ridge I)^{-1}
// (I - exp(-t K_LL)) (Y - f0(L)); at t = infinity the exponential term
// vanishes and the cached inverse of the ridged labeled block is used.
struct KernelSystem {
  Eigen::MatrixXd gram;         // M x M, symmetric PSD
  Eigen::MatrixXd f0;           // M x C_out initial outputs
  double ridge = 0.0;
  double time = kTimeInfinity;
  std::vector<Index> pool;      // gram positions scored by pool risk
  std::vector<Index> labeled;   // gram positions in L, commit order
  Eigen::MatrixXd inv_labeled;  // inverse of gram[L,L] + ridge I
};

// Scale-aware default regularization: 1e-4 * trace(gram) / M.
double default_ridge(const Eigen::MatrixXd& gram);

// J J^T for explicit per-sample Jacobian rows.
Eigen::MatrixXd gram_from_jacobians(const Eigen::MatrixXd& jac);

KernelSystem build_system(Eigen::MatrixXd gram, Eigen::MatrixXd f0,
                          double ridge, double time = kTimeInfinity);

// Scalar-kernel empirical NTK of the classifier on X plus its initial
// outputs, assembled into a fresh system.
KernelSystem compute_gram(const MLPParams& params, const Eigen::MatrixXd& x,
                          double ridge, double time = kTimeInfinity,
                          Index head = 0);

// Sets L and (re)computes the ridged inverse. With ridge = 0 a singular
// labeled block raises a numerical-rank error suggesting a ridge.
void set_labeled(KernelSystem& sys, std::vector<Index> positions);

// O(|L|^2) Schur-complement extension of the cached inverse by one point.
void extend_labeled(KernelSystem& sys, Index position);

// Closed-form predictions for the gram positions in `query` given one-hot
// labels aligned with sys.labeled. When the label width differs from
// f0's, initial outputs are taken as zero (the zero-output-init regime).
Eigen::MatrixXd ntk_predict(const KernelSystem& sys, const Eigen::MatrixXd& y,
                            const std::vector<Index>& query);

// Fraction of pool samples whose argmax prediction (trained on L, plus an
// optional hypothetical (position,label) pair, with one-hot CPL labels)
// disagrees with their CPL label. Ties break toward the lowest class.
double estimate_pool_risk(const KernelSystem& sys,
                          const std::vector<int>& cpl_labels, int n_clu,
                          std::optional<std::pair<Index, int>> hypothetical);

// Incrementally maintained regression over the pool for greedy scans.
// Holds current predictions F and the posterior gram
//   G = K_pp - K_pL (K_LL + ridge I)^{-1} K_Lp,
// from which a hypothetical addition of pool point i with label row y is
// the rank-one update F + G[:,i] (y - F[i,:]) / (G[i,i] + ridge).
class PoolRegression {
 public:
  // y: one-hot labels (|L| x K) aligned with sys.labeled. When K matches
  // f0's width, initial outputs enter the regression; otherwise they are
  // zero.
  PoolRegression(const KernelSystem& sys, Eigen::MatrixXd y);

  Index pool_size() const { return static_cast<Index>(pool_.size()); }
  Index num_classes() const { return f_.cols(); }
  const std::vector<Index>& pool() const { return pool_; }
  const Eigen::MatrixXd& predictions() const { return f_; }
  bool committed(Index pool_pos) const {
    return committed_[static_cast<std::size_t>(pool_pos)] != 0;
  }

  // 0-1 risk of the current predictions against per-pool CPL labels.
  double risk(const std::vector<int>& pool_cpl) const;

  // Risk after hypothetically labeling pool point i; does not mutate.
  double hypothetical_risk(Index pool_pos, int label,
                           const std::vector<int>& pool_cpl) const;

  // Total L1 change of pool predictions caused by hypothetically labeling
  // pool point i (the look-ahead score). Zero when the point carries no
  // new information (duplicate of a labeled sample at ridge 0).
  double hypothetical_l1_change(Index pool_pos, int label) const;

  // Commits the hypothetical: rank-one updates of F and G.
  void commit(Index pool_pos, int label);

 private:
  double schur(Index pool_pos) const;

  double ridge_;
  double scale0_ = 0.0;  // gram diagonal scale at construction
  std::vector<Index> pool_;
  Eigen::MatrixXd f_;  // pool x K predictions
  Eigen::MatrixXd g_;  // pool x pool posterior gram
  std::vector<char> committed_;
};

// Gram dump: magic "NTKG", u32 version=1, u32 rows, u32 cols, then
// little-endian f64 entries row-major.
void save_gram(const Eigen::MatrixXd& gram, const std::string& path);
Eigen::MatrixXd load_gram(const std::string& path);

}  // namespace ntkcpl
