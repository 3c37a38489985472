#include <doctest.h>


#include <cstdio>
#include <filesystem>
#include "common/test_utils.hpp"
#include "core/ntk.hpp"

using namespace ntkcpl;

namespace {

// Linear model f(x) = W x: the Jacobian of the (single) output is x
// itself, so the scalar-head NTK is exactly X X^T.
KernelSystem linear_system(const Eigen::MatrixXd& x, double ridge,
                           double time = kTimeInfinity, int out_dim = 1) {
  Eigen::MatrixXd gram = gram_from_jacobians(x);
  Eigen::MatrixXd f0 = Eigen::MatrixXd::Zero(x.rows(), out_dim);
  return build_system(std::move(gram), std::move(f0), ridge, time);
}

}  // namespace

TEST_CASE("linear-model gram equals X X^T with nonnegative diagonal") {
  auto rng = make_rng(1);
  const Eigen::MatrixXd x = testing::random_matrix(12, 4, rng);
  const Eigen::MatrixXd gram = gram_from_jacobians(x);
  CHECK((gram - x * x.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(gram.diagonal().minCoeff() >= 0.0);

  // Duplicated rows produce identical gram rows.
  Eigen::MatrixXd xdup = x;
  xdup.row(5) = xdup.row(2);
  const Eigen::MatrixXd gdup = gram_from_jacobians(xdup);
  CHECK((gdup.row(5) - gdup.row(2)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("structured MLP gram equals the explicit Jacobian gram") {
  auto rng = make_rng(7);
  auto p = init_mlp(5, 9, 3, InitScheme::NtkParameterization, false, rng);
  const Eigen::MatrixXd x = testing::random_matrix(11, 5, rng);
  const Eigen::MatrixXd fast = mlp_scalar_ntk_gram(p, x);
  const Eigen::MatrixXd slow = gram_from_jacobians(scalar_jacobians(p, x));
  const double rel =
      (fast - slow).cwiseAbs().maxCoeff() / slow.cwiseAbs().maxCoeff();
  CHECK(rel < 1e-12);
}

TEST_CASE("gram is symmetric PSD up to roundoff") {
  auto rng = make_rng(8);
  auto p = init_mlp(4, 16, 2, InitScheme::NtkParameterization, false, rng);
  const Eigen::MatrixXd x = testing::random_matrix(20, 4, rng);
  const Eigen::MatrixXd gram = mlp_scalar_ntk_gram(p, x);
  CHECK((gram - gram.transpose()).cwiseAbs().maxCoeff() <
        1e-8 * gram.cwiseAbs().maxCoeff());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  CHECK(eig.eigenvalues().minCoeff() >=
        -1e-6 * eig.eigenvalues().cwiseAbs().maxCoeff());
}

TEST_CASE("t=0 predictions equal the initial outputs exactly") {
  auto rng = make_rng(9);
  const Eigen::MatrixXd x = testing::random_matrix(8, 3, rng);
  Eigen::MatrixXd f0 = testing::random_matrix(8, 2, rng);
  auto sys = build_system(gram_from_jacobians(x), f0, 0.0, 0.0);
  set_labeled(sys, {0, 1, 2});
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(3, 2);
  y << 1, 0, 0, 1, 1, 0;
  const Eigen::MatrixXd pred = ntk_predict(sys, y, {3, 4, 5});
  for (Index i = 0; i < 3; ++i) {
    CHECK((pred.row(i) - f0.row(3 + i)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("hand-worked identity-gram regression") {
  // X = {(1,0),(0,1)}, labels {1, 0}: the gram is I, so prediction at
  // (1,1) sums both training labels and at (0,1) reproduces the second.
  Eigen::MatrixXd x(4, 2);
  x << 1, 0, 0, 1, 1, 1, 0, 1;
  auto sys = linear_system(x, 0.0);
  set_labeled(sys, {0, 1});
  Eigen::MatrixXd y(2, 1);
  y << 1, 0;
  const Eigen::MatrixXd pred = ntk_predict(sys, y, {2, 3});
  CHECK(pred(0, 0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(pred(1, 0) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("t=inf ridge=0 interpolates the training labels") {
  auto rng = make_rng(13);
  const Eigen::MatrixXd x = testing::random_matrix(30, 30, rng);
  auto sys = linear_system(x, 0.0, kTimeInfinity, 3);
  std::vector<Index> labeled(30);
  std::vector<int> labs(30);
  for (Index i = 0; i < 30; ++i) {
    labeled[static_cast<std::size_t>(i)] = i;
    labs[static_cast<std::size_t>(i)] = static_cast<int>(i % 3);
  }
  set_labeled(sys, labeled);
  const Eigen::MatrixXd y = one_hot(labs, 3);
  const Eigen::MatrixXd pred = ntk_predict(sys, y, labeled);
  CHECK((pred - y).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("singular labeled block at ridge 0 raises a numeric error") {
  Eigen::MatrixXd x(3, 2);
  x << 1, 0, 1, 0, 0, 1;  // duplicated row
  auto sys = linear_system(x, 0.0);
  try {
    set_labeled(sys, {0, 1, 2});
    FAIL("expected a numerical-rank error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Numeric);
    CHECK(std::string(e.what()).find("ridge") != std::string::npos);
  }
}

TEST_CASE("extend from one labeled point matches the closed-form inverse") {
  Eigen::MatrixXd gram(2, 2);
  gram << 4.0, 1.0, 1.0, 3.0;
  auto sys = build_system(gram, Eigen::MatrixXd::Zero(2, 1), 0.0);
  set_labeled(sys, {0});
  extend_labeled(sys, 1);
  // Hand inverse of [[4,1],[1,3]]: (1/11) [[3,-1],[-1,4]].
  Eigen::MatrixXd expect(2, 2);
  expect << 3.0 / 11, -1.0 / 11, -1.0 / 11, 4.0 / 11;
  CHECK((sys.inv_labeled - expect).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("incremental extension tracks direct inversion on random PSD") {
  auto rng = make_rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::MatrixXd psd = testing::random_psd(20, rng, 1e-6);
    auto sys = build_system(psd, Eigen::MatrixXd::Zero(20, 1), 1e-8);
    set_labeled(sys, {0, 1, 2});
    for (Index next = 3; next < 20; ++next) extend_labeled(sys, next);

    auto direct = build_system(psd, Eigen::MatrixXd::Zero(20, 1), 1e-8);
    std::vector<Index> all(20);
    for (Index i = 0; i < 20; ++i) all[static_cast<std::size_t>(i)] = i;
    set_labeled(direct, all);
    CHECK((sys.inv_labeled - direct.inv_labeled).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("inverse identity invariant holds after extensions") {
  auto rng = make_rng(18);
  const Eigen::MatrixXd psd = testing::random_psd(15, rng);
  auto sys = build_system(psd, Eigen::MatrixXd::Zero(15, 1), 0.5);
  set_labeled(sys, {2, 7});
  extend_labeled(sys, 4);
  extend_labeled(sys, 11);
  Eigen::MatrixXd kll(4, 4);
  const std::vector<Index> l = sys.labeled;
  for (std::size_t i = 0; i < l.size(); ++i) {
    for (std::size_t j = 0; j < l.size(); ++j) {
      kll(static_cast<Index>(i), static_cast<Index>(j)) = psd(l[i], l[j]);
    }
  }
  kll.diagonal().array() += 0.5;
  const Eigen::MatrixXd identity = sys.inv_labeled * kll;
  CHECK((identity - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() <
        1e-6);
}

TEST_CASE("ridge keeps duplicated-row extensions alive; ridge0 rejects them") {
  Eigen::MatrixXd x(3, 2);
  x << 1, 2, 1, 2, 0, 1;  // rows 0 and 1 identical
  auto ridged = linear_system(x, 1e-3);
  set_labeled(ridged, {0});
  CHECK_NOTHROW(extend_labeled(ridged, 1));

  auto bare = linear_system(x, 0.0);
  set_labeled(bare, {0});
  CHECK_THROWS_AS(extend_labeled(bare, 1), Error);
}

TEST_CASE("pool risk is zero when the pool is the labeled set") {
  auto rng = make_rng(23);
  const Eigen::MatrixXd x = testing::random_matrix(10, 10, rng);
  auto sys = linear_system(x, 0.0);
  std::vector<Index> all(10);
  std::vector<int> cpl(10);
  for (Index i = 0; i < 10; ++i) {
    all[static_cast<std::size_t>(i)] = i;
    cpl[static_cast<std::size_t>(i)] = static_cast<int>(i % 4);
  }
  set_labeled(sys, all);
  sys.pool = all;
  CHECK(estimate_pool_risk(sys, cpl, 4, std::nullopt) == 0.0);
}

TEST_CASE("single-class pool risk vanishes with one labeled sample") {
  // Every candidate shares the labeled point's CPL class; the one-class
  // regression gives that class the only nonzero score wherever the
  // kernel row is nonzero. Verified against the naive rebuild.
  auto rng = make_rng(29);
  Eigen::MatrixXd x = testing::random_matrix(12, 3, rng).cwiseAbs();
  Eigen::MatrixXd gram = x * x.transpose();
  gram.array() += 1.0;  // strictly positive kernel rows
  gram = ((gram + gram.transpose()) * 0.5).eval();
  auto sys = build_system(gram, Eigen::MatrixXd::Zero(12, 1), 0.0);
  set_labeled(sys, {0});
  std::vector<int> cpl(12, 0);
  const double risk = estimate_pool_risk(sys, cpl, 3, std::nullopt);
  CHECK(risk == 0.0);
  std::vector<Index> pool(12);
  for (Index i = 0; i < 12; ++i) pool[static_cast<std::size_t>(i)] = i;
  CHECK(risk == testing::naive_pool_risk(gram, 0.0, {0}, cpl, 3, pool,
                                         std::nullopt));
}

TEST_CASE("hypothetical risk matches the naive rebuild oracle") {
  auto rng = make_rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = 14;
    const Eigen::MatrixXd psd = testing::random_psd(n, rng, 0.1);
    const double ridge = 1e-3 * psd.trace() / static_cast<double>(n);
    auto sys = build_system(psd, Eigen::MatrixXd::Zero(n, 2), ridge);
    std::vector<int> cpl(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
      cpl[static_cast<std::size_t>(i)] = static_cast<int>(rng() % 3);
    }
    set_labeled(sys, {0, 5});
    std::vector<Index> pool(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
    sys.pool = pool;
    for (Index cand = 1; cand < n; ++cand) {
      if (cand == 5) continue;
      const auto hyp =
          std::make_pair(cand, cpl[static_cast<std::size_t>(cand)]);
      const double got = estimate_pool_risk(sys, cpl, 3, hyp);
      const double want =
          testing::naive_pool_risk(psd, ridge, {0, 5}, cpl, 3, pool, hyp);
      CHECK(got == doctest::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_CASE("pool risk rejects an already-labeled hypothetical") {
  auto rng = make_rng(37);
  const Eigen::MatrixXd psd = testing::random_psd(6, rng, 0.1);
  auto sys = build_system(psd, Eigen::MatrixXd::Zero(6, 1), 0.01);
  set_labeled(sys, {1, 2});
  std::vector<int> cpl(6, 0);
  CHECK_THROWS_AS(estimate_pool_risk(sys, cpl, 2, std::make_pair(Index{2}, 0)),
                  Error);
}

TEST_CASE("finite-time prediction matches discrete gradient descent") {
  // One-layer linear network, full-batch MSE gradient flow: k steps at
  // learning rate eta correspond to t = eta * k.
  auto rng = make_rng(41);
  const Index n = 20, d = 5;
  const Eigen::MatrixXd x = testing::random_matrix(n, d, rng);
  const Eigen::MatrixXd xq = testing::random_matrix(6, d, rng);
  Eigen::MatrixXd y(n, 1);
  for (Index i = 0; i < n; ++i) y(i, 0) = (i % 2 == 0) ? 1.0 : 0.0;

  const double lr = 1e-3;
  const int steps = 1000;
  Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
  for (int s = 0; s < steps; ++s) {
    const Eigen::VectorXd resid = x * w - y.col(0);
    w -= lr * (x.transpose() * resid);  // L = 0.5 * sum of squares
  }
  const Eigen::VectorXd gd_pred = xq * w;

  Eigen::MatrixXd all(n + 6, d);
  all << x, xq;
  auto sys = linear_system(all, 0.0, lr * steps);
  std::vector<Index> labeled(n);
  for (Index i = 0; i < n; ++i) labeled[static_cast<std::size_t>(i)] = i;
  set_labeled(sys, labeled);
  std::vector<Index> query(6);
  for (Index i = 0; i < 6; ++i) query[static_cast<std::size_t>(i)] = n + i;
  const Eigen::MatrixXd ntk_pred = ntk_predict(sys, y, query);

  for (Index i = 0; i < 6; ++i) {
    const double scale = std::max(std::abs(gd_pred(i)), 1e-2);
    CHECK(std::abs(ntk_pred(i, 0) - gd_pred(i)) / scale < 1e-3);
  }
}

TEST_CASE("PoolRegression commit equals a from-scratch rebuild") {
  auto rng = make_rng(43);
  const Index n = 16;
  const Eigen::MatrixXd psd = testing::random_psd(n, rng, 0.05);
  const double ridge = 1e-4 * psd.trace() / static_cast<double>(n);
  auto sys = build_system(psd, Eigen::MatrixXd::Zero(n, 2), ridge);
  set_labeled(sys, {0, 3});
  std::vector<int> labs = {0, 1};
  PoolRegression reg(sys, one_hot(labs, 2));
  reg.commit(7, 1);
  reg.commit(12, 0);

  auto direct = build_system(psd, Eigen::MatrixXd::Zero(n, 2), ridge);
  set_labeled(direct, {0, 3, 7, 12});
  PoolRegression ref(direct, one_hot(std::vector<int>{0, 1, 1, 0}, 2));
  CHECK((reg.predictions() - ref.predictions()).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("gram dump round-trips through the binary format") {
  auto rng = make_rng(47);
  const Eigen::MatrixXd gram = testing::random_psd(9, rng);
  const auto path =
      (std::filesystem::temp_directory_path() / "gram_rt.bin").string();
  save_gram(gram, path);
  const Eigen::MatrixXd back = load_gram(path);
  CHECK((gram - back).cwiseAbs().maxCoeff() == 0.0);
  std::remove(path.c_str());
}
