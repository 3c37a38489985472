#include "ntk.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace ntkcpl {

namespace {

constexpr double kEigTol = 1e-10;

void check_positions(const std::vector<Index>& positions, Index m,
                     const char* what) {
  for (Index p : positions) {
    if (p < 0 || p >= m) {
      throw_precondition(std::string(what) + " position " + std::to_string(p) +
                         " out of range");
    }
  }
}

Eigen::MatrixXd submatrix(const Eigen::MatrixXd& a,
                          const std::vector<Index>& rows,
                          const std::vector<Index>& cols) {
  Eigen::MatrixXd out(static_cast<Index>(rows.size()),
                      static_cast<Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      out(static_cast<Index>(i), static_cast<Index>(j)) = a(rows[i], cols[j]);
    }
  }
  return out;
}

// (I - exp(-t*lambda)) split by ridge handling; lambda clamped at zero to
// absorb eigenvalue roundoff. The ridge-free branch takes the lambda -> 0
// limit t, matching the gradient-flow solution on the kernel's null space.
double time_weight(double lambda, double t, double ridge) {
  const double lam = std::max(lambda, 0.0);
  if (ridge > 0.0) {
    return -std::expm1(-t * lam) / (lam + ridge);
  }
  const double x = t * lam;
  if (x < 1e-12) return t;
  return -std::expm1(-x) / lam;
}

void write_u32le(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32le(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

double default_ridge(const Eigen::MatrixXd& gram) {
  if (gram.rows() == 0) return 0.0;
  return 1e-4 * gram.trace() / static_cast<double>(gram.rows());
}

Eigen::MatrixXd gram_from_jacobians(const Eigen::MatrixXd& jac) {
  Eigen::MatrixXd gram = jac * jac.transpose();
  gram = ((gram + gram.transpose()) * 0.5).eval();
  return gram;
}

KernelSystem build_system(Eigen::MatrixXd gram, Eigen::MatrixXd f0,
                          double ridge, double time) {
  const Index m = gram.rows();
  if (m == 0 || gram.cols() != m) {
    throw_precondition("gram must be square and nonempty");
  }
  if (f0.rows() != m) {
    throw_precondition("f0 row count must match gram size");
  }
  if (ridge < 0.0) throw_precondition("ridge must be >= 0");
  KernelSystem sys;
  sys.gram = std::move(gram);
  sys.f0 = std::move(f0);
  sys.ridge = ridge;
  sys.time = time;
  sys.pool.resize(static_cast<std::size_t>(m));
  for (Index i = 0; i < m; ++i) sys.pool[static_cast<std::size_t>(i)] = i;
  return sys;
}

KernelSystem compute_gram(const MLPParams& params, const Eigen::MatrixXd& x,
                          double ridge, double time, Index head) {
  Eigen::MatrixXd gram = mlp_scalar_ntk_gram(params, x, head);
  Eigen::MatrixXd f0 = forward(params, x);
  return build_system(std::move(gram), std::move(f0), ridge, time);
}

void set_labeled(KernelSystem& sys, std::vector<Index> positions) {
  check_positions(positions, sys.gram.rows(), "labeled");
  {
    auto sorted = positions;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw_precondition("duplicate labeled position");
    }
  }
  const Index l = static_cast<Index>(positions.size());
  sys.labeled = std::move(positions);
  if (l == 0 || !std::isinf(sys.time)) {
    // Finite-time prediction goes through the eigendecomposition and
    // never touches the cached inverse.
    sys.inv_labeled.resize(0, 0);
    return;
  }
  Eigen::MatrixXd kll = submatrix(sys.gram, sys.labeled, sys.labeled);
  if (sys.ridge > 0.0) {
    kll.diagonal().array() += sys.ridge;
    Eigen::LLT<Eigen::MatrixXd> llt(kll);
    if (llt.info() != Eigen::Success) {
      throw_numeric(
          "labeled block is not positive definite; increase the ridge");
    }
    sys.inv_labeled = llt.solve(Eigen::MatrixXd::Identity(l, l));
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(kll);
    const double lmax = std::max(eig.eigenvalues().maxCoeff(), 0.0);
    if (eig.eigenvalues().minCoeff() <= kEigTol * std::max(lmax, 1e-300)) {
      throw_numeric(
          "labeled gram block is numerically singular at ridge 0; "
          "supply a positive ridge");
    }
    sys.inv_labeled = eig.eigenvectors() *
                      eig.eigenvalues().cwiseInverse().asDiagonal() *
                      eig.eigenvectors().transpose();
  }
}

void extend_labeled(KernelSystem& sys, Index position) {
  if (position < 0 || position >= sys.gram.rows()) {
    throw_precondition("extend position out of range");
  }
  if (std::find(sys.labeled.begin(), sys.labeled.end(), position) !=
      sys.labeled.end()) {
    throw_precondition("position " + std::to_string(position) +
                       " is already labeled");
  }
  const Index l = static_cast<Index>(sys.labeled.size());
  const double c = sys.gram(position, position) + sys.ridge;
  if (l == 0) {
    if (c <= 0.0) {
      throw_numeric("cannot start labeled block: nonpositive diagonal");
    }
    sys.labeled.push_back(position);
    sys.inv_labeled.resize(1, 1);
    sys.inv_labeled(0, 0) = 1.0 / c;
    return;
  }
  Eigen::VectorXd b(l);
  for (Index i = 0; i < l; ++i) {
    b(i) = sys.gram(sys.labeled[static_cast<std::size_t>(i)], position);
  }
  const Eigen::VectorXd u = sys.inv_labeled * b;
  const double s = c - b.dot(u);
  if (s <= std::max(0.0, 1e-13 * std::abs(c))) {
    throw_numeric(
        "Schur complement is not positive (rank-deficient extension); "
        "supply a positive ridge");
  }
  Eigen::MatrixXd next(l + 1, l + 1);
  next.topLeftCorner(l, l) = sys.inv_labeled + (u * u.transpose()) / s;
  next.topRightCorner(l, 1) = -u / s;
  next.bottomLeftCorner(1, l) = -u.transpose() / s;
  next(l, l) = 1.0 / s;
  sys.inv_labeled = std::move(next);
  sys.labeled.push_back(position);
}

Eigen::MatrixXd ntk_predict(const KernelSystem& sys, const Eigen::MatrixXd& y,
                            const std::vector<Index>& query) {
  const Index l = static_cast<Index>(sys.labeled.size());
  if (l == 0) throw_precondition("ntk_predict requires a nonempty labeled set");
  if (y.rows() != l) {
    throw_precondition("label rows must match the labeled set size");
  }
  check_positions(query, sys.gram.rows(), "query");

  const bool use_f0 = sys.f0.cols() == y.cols();
  Eigen::MatrixXd target = y;
  if (use_f0) {
    for (Index i = 0; i < l; ++i) {
      target.row(i) -= sys.f0.row(sys.labeled[static_cast<std::size_t>(i)]);
    }
  }

  Eigen::MatrixXd theta_target;  // (K_LL + ridge I)^-1 (I - exp(-tK)) target
  if (std::isinf(sys.time)) {
    if (sys.inv_labeled.rows() != l) {
      throw_precondition("labeled inverse is stale; call set_labeled");
    }
    theta_target = sys.inv_labeled * target;
  } else {
    Eigen::MatrixXd kll = submatrix(sys.gram, sys.labeled, sys.labeled);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(kll);
    Eigen::VectorXd w(l);
    for (Index i = 0; i < l; ++i) {
      w(i) = time_weight(eig.eigenvalues()(i), sys.time, sys.ridge);
    }
    theta_target = eig.eigenvectors() * w.asDiagonal() *
                   (eig.eigenvectors().transpose() * target);
  }

  Eigen::MatrixXd kql = submatrix(sys.gram, query, sys.labeled);
  Eigen::MatrixXd pred = kql * theta_target;
  if (use_f0) {
    for (std::size_t i = 0; i < query.size(); ++i) {
      pred.row(static_cast<Index>(i)) += sys.f0.row(query[i]);
    }
  }
  return pred;
}

double estimate_pool_risk(const KernelSystem& sys,
                          const std::vector<int>& cpl_labels, int n_clu,
                          std::optional<std::pair<Index, int>> hypothetical) {
  if (n_clu < 1) throw_precondition("n_clu must be >= 1");
  if (static_cast<Index>(cpl_labels.size()) != sys.gram.rows()) {
    throw_precondition("CPL labels must cover every tracked point");
  }
  std::vector<int> labs;
  labs.reserve(sys.labeled.size());
  for (Index p : sys.labeled) {
    labs.push_back(cpl_labels[static_cast<std::size_t>(p)]);
  }
  Eigen::MatrixXd y = one_hot(labs, n_clu);
  PoolRegression reg(sys, std::move(y));

  std::vector<int> pool_cpl;
  pool_cpl.reserve(sys.pool.size());
  for (Index p : sys.pool) {
    pool_cpl.push_back(cpl_labels[static_cast<std::size_t>(p)]);
  }

  if (!hypothetical.has_value()) {
    if (sys.labeled.empty()) {
      throw_precondition("pool risk requires L or a hypothetical sample");
    }
    return reg.risk(pool_cpl);
  }

  const auto [pos, lab] = *hypothetical;
  if (std::find(sys.labeled.begin(), sys.labeled.end(), pos) !=
      sys.labeled.end()) {
    throw_precondition("hypothetical index is already labeled");
  }
  const auto it = std::find(sys.pool.begin(), sys.pool.end(), pos);
  if (it == sys.pool.end()) {
    throw_precondition("hypothetical index is not a pool point");
  }
  const Index pool_pos = static_cast<Index>(it - sys.pool.begin());
  if (lab < 0 || lab >= n_clu) {
    throw_precondition("hypothetical label out of range");
  }
  return reg.hypothetical_risk(pool_pos, lab, pool_cpl);
}

PoolRegression::PoolRegression(const KernelSystem& sys, Eigen::MatrixXd y)
    : ridge_(sys.ridge), pool_(sys.pool) {
  scale0_ = sys.gram.diagonal().cwiseAbs().maxCoeff() + sys.ridge;
  const Index l = static_cast<Index>(sys.labeled.size());
  const Index m = static_cast<Index>(pool_.size());
  const Index k = y.cols();
  if (y.rows() != l) {
    throw_precondition("label rows must match the labeled set size");
  }
  if (m == 0) throw_precondition("pool is empty");
  if (!std::isinf(sys.time)) {
    throw_precondition("PoolRegression requires the converged (t=inf) mode");
  }
  const bool use_f0 = sys.f0.cols() == k;

  Eigen::MatrixXd kpp = submatrix(sys.gram, pool_, pool_);
  if (l == 0) {
    f_ = Eigen::MatrixXd::Zero(m, k);
    g_ = std::move(kpp);
  } else {
    if (sys.inv_labeled.rows() != l) {
      throw_precondition("labeled inverse is stale; call set_labeled");
    }
    Eigen::MatrixXd target = std::move(y);
    if (use_f0) {
      for (Index i = 0; i < l; ++i) {
        target.row(i) -= sys.f0.row(sys.labeled[static_cast<std::size_t>(i)]);
      }
    }
    Eigen::MatrixXd kpl = submatrix(sys.gram, pool_, sys.labeled);
    f_ = kpl * (sys.inv_labeled * target);
    Eigen::MatrixXd b = kpl * sys.inv_labeled;  // m x l
    g_ = kpp - b * kpl.transpose();
  }
  if (use_f0) {
    for (Index i = 0; i < m; ++i) {
      f_.row(i) += sys.f0.row(pool_[static_cast<std::size_t>(i)]);
    }
  }
  g_ = ((g_ + g_.transpose()) * 0.5).eval();

  committed_.assign(static_cast<std::size_t>(m), 0);
  for (Index i = 0; i < m; ++i) {
    if (std::find(sys.labeled.begin(), sys.labeled.end(),
                  pool_[static_cast<std::size_t>(i)]) != sys.labeled.end()) {
      committed_[static_cast<std::size_t>(i)] = 1;
    }
  }
}

double PoolRegression::schur(Index pool_pos) const {
  return g_(pool_pos, pool_pos) + ridge_;
}

double PoolRegression::risk(const std::vector<int>& pool_cpl) const {
  const Index m = f_.rows();
  if (static_cast<Index>(pool_cpl.size()) != m) {
    throw_precondition("pool CPL label count mismatch");
  }
  Index miss = 0;
  for (Index i = 0; i < m; ++i) {
    if (argmax_row_lowest(f_, i) != pool_cpl[static_cast<std::size_t>(i)]) {
      ++miss;
    }
  }
  return static_cast<double>(miss) / static_cast<double>(m);
}

double PoolRegression::hypothetical_risk(
    Index pool_pos, int label, const std::vector<int>& pool_cpl) const {
  const Index m = f_.rows();
  const Index k = f_.cols();
  if (static_cast<Index>(pool_cpl.size()) != m) {
    throw_precondition("pool CPL label count mismatch");
  }
  if (label < 0 || label >= k) {
    throw_precondition("hypothetical label out of range");
  }
  const double s = schur(pool_pos);
  if (s <= 1e-12 * scale0_) {
    return risk(pool_cpl);  // no new information
  }
  Eigen::RowVectorXd r = -f_.row(pool_pos);
  r(label) += 1.0;
  r /= s;

  Index miss = 0;
  Eigen::RowVectorXd row(k);
  for (Index i = 0; i < m; ++i) {
    row = f_.row(i) + g_(i, pool_pos) * r;
    int best = 0;
    double v = row(0);
    for (Index c = 1; c < k; ++c) {
      if (row(c) > v) {
        v = row(c);
        best = static_cast<int>(c);
      }
    }
    if (best != pool_cpl[static_cast<std::size_t>(i)]) ++miss;
  }
  return static_cast<double>(miss) / static_cast<double>(m);
}

double PoolRegression::hypothetical_l1_change(Index pool_pos,
                                              int label) const {
  const Index k = f_.cols();
  if (label < 0 || label >= k) {
    throw_precondition("hypothetical label out of range");
  }
  const double s = schur(pool_pos);
  if (s <= 1e-12 * scale0_) {
    return 0.0;
  }
  Eigen::RowVectorXd r = -f_.row(pool_pos);
  r(label) += 1.0;
  return g_.col(pool_pos).cwiseAbs().sum() * r.cwiseAbs().sum() / s;
}

void PoolRegression::commit(Index pool_pos, int label) {
  if (pool_pos < 0 || pool_pos >= f_.rows()) {
    throw_precondition("pool position out of range");
  }
  if (committed(pool_pos)) {
    throw_precondition("pool point already committed");
  }
  const double s = schur(pool_pos);
  if (s <= 1e-12 * scale0_) {
    throw_numeric(
        "Schur complement is not positive (rank-deficient extension); "
        "supply a positive ridge");
  }
  Eigen::RowVectorXd r = -f_.row(pool_pos);
  r(label) += 1.0;
  const Eigen::VectorXd g = g_.col(pool_pos);
  f_.noalias() += g * (r / s);
  g_.noalias() -= (g * g.transpose()) / s;
  committed_[static_cast<std::size_t>(pool_pos)] = 1;
}

void save_gram(const Eigen::MatrixXd& gram, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw_data("cannot write gram dump: " + path);
  os.write("NTKG", 4);
  write_u32le(os, 1);
  write_u32le(os, static_cast<std::uint32_t>(gram.rows()));
  write_u32le(os, static_cast<std::uint32_t>(gram.cols()));
  for (Index i = 0; i < gram.rows(); ++i) {
    for (Index j = 0; j < gram.cols(); ++j) {
      double v = gram(i, j);
      std::uint64_t u;
      std::memcpy(&u, &v, 8);
      unsigned char b[8];
      for (int t = 0; t < 8; ++t) {
        b[t] = static_cast<unsigned char>(u >> (8 * t));
      }
      os.write(reinterpret_cast<const char*>(b), 8);
    }
  }
  if (!os) throw_data("write failed: " + path);
}

Eigen::MatrixXd load_gram(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw_data("cannot open gram dump: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "NTKG", 4) != 0) {
    throw_data("bad magic in gram dump: " + path);
  }
  if (read_u32le(is) != 1) throw_data("unsupported gram dump version");
  const Index rows = static_cast<Index>(read_u32le(is));
  const Index cols = static_cast<Index>(read_u32le(is));
  Eigen::MatrixXd gram(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      unsigned char b[8];
      is.read(reinterpret_cast<char*>(b), 8);
      std::uint64_t u = 0;
      for (int t = 0; t < 8; ++t) {
        u |= static_cast<std::uint64_t>(b[t]) << (8 * t);
      }
      double v;
      std::memcpy(&v, &u, 8);
      gram(i, j) = v;
    }
  }
  if (!is) throw_data("truncated gram dump: " + path);
  return gram;
}

}  // namespace ntkcpl
