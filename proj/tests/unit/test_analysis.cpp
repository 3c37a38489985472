#include <doctest.h>

#include "common/test_utils.hpp"
#include "core/analysis.hpp"
#include "core/synthetic.hpp"

using namespace ntkcpl;

namespace {

// Random instance that satisfies the dominance precondition: labeled
// samples within one cluster always share a true class.
struct PropInstance {
  KernelSystem sys;
  std::vector<int> cpl;
  std::vector<int> true_of_labeled;
  std::vector<Index> query;
  int n_clu;
  int num_classes;
};

PropInstance make_prop_instance(std::mt19937_64& rng, bool break_dominance) {
  const Index n = 18 + static_cast<Index>(rng() % 10);
  const int n_clu = 4 + static_cast<int>(rng() % 3);
  const int num_classes = 3;
  PropInstance inst;
  inst.n_clu = n_clu;
  inst.num_classes = num_classes;

  const Eigen::MatrixXd psd = testing::random_psd(n, rng, 0.2);
  const double ridge = 1e-3 * psd.trace() / static_cast<double>(n);
  inst.sys = build_system(psd, Eigen::MatrixXd::Zero(n, num_classes), ridge);

  // Each cluster carries one true class; every point gets a cluster.
  std::vector<int> cluster_class(static_cast<std::size_t>(n_clu));
  for (int k = 0; k < n_clu; ++k) {
    cluster_class[static_cast<std::size_t>(k)] =
        static_cast<int>(rng() % num_classes);
  }
  inst.cpl.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    inst.cpl[static_cast<std::size_t>(i)] = static_cast<int>(rng() % n_clu);
  }

  // Label two points in each of the first three clusters.
  std::vector<Index> labeled;
  for (int k = 0; k < 3; ++k) {
    int found = 0;
    for (Index i = 0; i < n && found < 2; ++i) {
      if (inst.cpl[static_cast<std::size_t>(i)] == k) {
        labeled.push_back(i);
        inst.true_of_labeled.push_back(
            cluster_class[static_cast<std::size_t>(k)]);
        ++found;
      }
    }
  }
  if (labeled.size() < 4) {
    // Degenerate draw; retry recursively.
    return make_prop_instance(rng, break_dominance);
  }
  if (break_dominance) {
    // Flip one labeled sample's class away from its cluster's class.
    inst.true_of_labeled[0] =
        (inst.true_of_labeled[0] + 1) % num_classes;
    // Make its cluster-mate keep the dominant class so the flipped one
    // is the minority.
  }
  set_labeled(inst.sys, labeled);
  for (Index i = 0; i < n; ++i) {
    if (std::find(labeled.begin(), labeled.end(), i) == labeled.end()) {
      inst.query.push_back(i);
    }
  }
  return inst;
}

}  // namespace

TEST_CASE("label map is the identity under identity dominance") {
  auto rng = make_rng(3);
  const Eigen::MatrixXd scores = testing::random_matrix(7, 4, rng);
  const std::vector<int> dominant = {0, 1, 2, 3};
  const Eigen::MatrixXd mapped = label_map_g(scores, dominant, 4);
  CHECK((mapped - scores).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("label map preserves row sums and adds up shared columns") {
  auto rng = make_rng(5);
  const Eigen::MatrixXd scores = testing::random_matrix(6, 5, rng);
  const std::vector<int> dominant = {0, 2, 0, 1, 2};
  const Eigen::MatrixXd mapped = label_map_g(scores, dominant, 3);
  for (Index i = 0; i < scores.rows(); ++i) {
    CHECK(mapped.row(i).sum() ==
          doctest::Approx(scores.row(i).sum()).epsilon(1e-12));
  }

  Eigen::MatrixXd two(1, 2);
  two << 0.3, 0.4;
  const Eigen::MatrixXd merged = label_map_g(two, {0, 0}, 2);
  CHECK(merged(0, 0) == doctest::Approx(0.7));
  CHECK(merged(0, 1) == 0.0);
}

TEST_CASE("proposition holds under the dominance precondition") {
  auto rng = make_rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    auto inst = make_prop_instance(rng, false);
    const auto res =
        verify_proposition(inst.sys, inst.cpl, inst.n_clu,
                           inst.true_of_labeled, inst.num_classes, inst.query);
    CHECK(res.dominance_violations.empty());
    CHECK(res.max_deviation < 1e-8);
  }
}

TEST_CASE("proposition deviation is exactly zero when CPL matches truth") {
  auto rng = make_rng(13);
  const Index n = 12;
  const Eigen::MatrixXd psd = testing::random_psd(n, rng, 0.3);
  auto sys = build_system(psd, Eigen::MatrixXd::Zero(n, 3), 0.01);
  set_labeled(sys, {0, 1, 2, 3});
  std::vector<int> cpl(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    cpl[static_cast<std::size_t>(i)] = static_cast<int>(i % 3);
  }
  const std::vector<int> truth = {0, 1, 2, 0};
  std::vector<Index> query = {4, 5, 6, 7};
  // CPL ids equal true classes for the labeled rows (ids 0,1,2,0).
  const auto res = verify_proposition(sys, cpl, 3, truth, 3, query);
  CHECK(res.dominance_violations.empty());
  CHECK(res.max_deviation == 0.0);
}

TEST_CASE("broken dominance is reported and produces real deviation") {
  auto rng = make_rng(17);
  int deviating = 0;
  for (int trial = 0; trial < 20; ++trial) {
    auto inst = make_prop_instance(rng, true);
    const auto res =
        verify_proposition(inst.sys, inst.cpl, inst.n_clu,
                           inst.true_of_labeled, inst.num_classes, inst.query);
    CHECK_FALSE(res.dominance_violations.empty());
    if (res.max_deviation > 1e-3) ++deviating;
  }
  CHECK(deviating > 10);  // flipping a label moves the regression
}

TEST_CASE("f0 must be zero for the proposition check") {
  auto rng = make_rng(19);
  const Eigen::MatrixXd psd = testing::random_psd(6, rng, 0.5);
  auto sys = build_system(psd, Eigen::MatrixXd::Ones(6, 2), 0.1);
  set_labeled(sys, {0, 1});
  std::vector<int> cpl = {0, 1, 0, 1, 0, 1};
  CHECK_THROWS_AS(verify_proposition(sys, cpl, 2, {0, 1}, 2, {2, 3}), Error);
}

TEST_CASE("decompose_error is zero for a perfect refinement") {
  // Two CPL clusters per true class, predictions always in the sample's
  // own cluster.
  const Index n = 8;
  Eigen::MatrixXd preds = Eigen::MatrixXd::Zero(n, 4);
  std::vector<int> y_true(static_cast<std::size_t>(n));
  std::vector<int> y_cpl(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const int k = static_cast<int>(i % 4);
    y_cpl[static_cast<std::size_t>(i)] = k;
    y_true[static_cast<std::size_t>(i)] = k / 2;
    preds(i, k) = 1.0;
  }
  const std::vector<int> dominant = {0, 0, 1, 1};
  const auto dec = decompose_error(preds, y_true, y_cpl, dominant, 2);
  CHECK(dec.error_cpl == 0.0);
  CHECK(dec.n_nff == 0);
  CHECK(dec.n_fnf == 0);
}

TEST_CASE("an impure sample maps to p_nff with impurity share one") {
  // Four samples, two CPL clusters with dominance {0, 1}. Sample 3 sits
  // in cluster 1 but its true class is 0; the regression votes with the
  // cluster, so it agrees with y_cpl and misses y.
  Eigen::MatrixXd preds(4, 2);
  preds << 1, 0, 1, 0, 0, 1, 0, 1;
  const std::vector<int> y_cpl = {0, 0, 1, 1};
  const std::vector<int> y_true = {0, 0, 1, 0};  // sample 3 impure
  const std::vector<int> dominant = {0, 1};
  const auto dec = decompose_error(preds, y_true, y_cpl, dominant, 2);
  CHECK(dec.p_nff == doctest::Approx(0.25));
  CHECK(dec.p_fnf == 0.0);
  CHECK(dec.impurity_share == doctest::Approx(1.0));
  CHECK(dec.error_cpl == doctest::Approx(0.25));
  CHECK(dec.n_nff + dec.n_fnf == 1);
}

TEST_CASE("sibling-cluster prediction maps to p_fnf as over-clustering") {
  // One true class split into CPL clusters 0 and 1 (both dominant 0).
  // The prediction lands in the sibling cluster: right class, wrong CPL.
  Eigen::MatrixXd preds(4, 3);
  preds << 0, 1, 0, 1, 0, 0, 0, 0, 1, 0, 0, 1;
  const std::vector<int> y_cpl = {0, 0, 2, 2};
  const std::vector<int> y_true = {0, 0, 1, 1};
  const std::vector<int> dominant = {0, 0, 1};
  const auto dec = decompose_error(preds, y_true, y_cpl, dominant, 2);
  CHECK(dec.p_fnf == doctest::Approx(0.25));
  CHECK(dec.p_nff == 0.0);
  CHECK(dec.overclustering_share == doctest::Approx(1.0));
}

TEST_CASE("count identity: error_cpl times N is the exact mismatch count") {
  auto rng = make_rng(23);
  for (int trial = 0; trial < 25; ++trial) {
    const Index n = 30;
    const int n_clu = 5;
    const Eigen::MatrixXd preds = testing::random_matrix(n, n_clu, rng);
    std::vector<int> y_true(static_cast<std::size_t>(n)),
        y_cpl(static_cast<std::size_t>(n));
    std::vector<int> dominant(static_cast<std::size_t>(n_clu));
    for (Index i = 0; i < n; ++i) {
      y_true[static_cast<std::size_t>(i)] = static_cast<int>(rng() % 3);
      y_cpl[static_cast<std::size_t>(i)] = static_cast<int>(rng() % n_clu);
    }
    for (int k = 0; k < n_clu; ++k) {
      dominant[static_cast<std::size_t>(k)] = static_cast<int>(rng() % 3);
    }
    const auto dec = decompose_error(preds, y_true, y_cpl, dominant, 3);
    const double scaled = dec.error_cpl * static_cast<double>(dec.n_pool);
    CHECK(scaled == doctest::Approx(static_cast<double>(dec.n_nff + dec.n_fnf))
                        .epsilon(1e-12));
    CHECK(dec.p_nff >= 0.0);
    CHECK(dec.p_fnf >= 0.0);
    CHECK(dec.error_cpl <= 1.0);
  }
}

TEST_CASE("coverage is exactly one when the pool is the labeled set") {
  auto rng = make_rng(29);
  const Index n = 8;
  const Eigen::MatrixXd psd = testing::random_psd(n, rng, 0.4);
  auto sys = build_system(psd, Eigen::MatrixXd::Zero(n, 2), 0.0);
  std::vector<Index> all(static_cast<std::size_t>(n));
  std::vector<int> cpl(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    all[static_cast<std::size_t>(i)] = i;
    cpl[static_cast<std::size_t>(i)] = static_cast<int>(i % 2);
  }
  set_labeled(sys, all);
  sys.pool = all;
  CPL c;
  c.n_clu = 2;
  c.labels = cpl;
  const auto cov = coverage_estimate(sys, c, {}, {});
  CHECK(cov.estimated == doctest::Approx(1.0));
  CHECK_FALSE(cov.has_true);
}

TEST_CASE("estimated coverage tracks true coverage on a separable mixture") {
  MixtureSpec spec;
  spec.n = 300;
  spec.dim = 8;
  spec.classes = 4;
  spec.sigma = 0.6;
  spec.radius = 4.0;
  spec.center_seed = 5;
  spec.sample_seed = 6;
  const auto fs = make_gaussian_mixture(spec);

  // CPL: the true classes; kernel from the raw features (linear model);
  // classifier: nearest center, evaluated per sample.
  Eigen::MatrixXd gram = fs.features * fs.features.transpose();
  gram = ((gram + gram.transpose()) * 0.5).eval();
  const double ridge = 1e-4 * gram.trace() / static_cast<double>(gram.rows());
  auto sys = build_system(gram, Eigen::MatrixXd::Zero(fs.size(), 4), ridge);
  std::vector<Index> labeled;
  for (Index i = 0; i < 50; ++i) labeled.push_back(i);
  set_labeled(sys, labeled);

  CPL c;
  c.n_clu = 4;
  c.labels = fs.true_labels;
  std::vector<int> clf_preds;
  std::vector<int> truth;
  for (Index i = 0; i < fs.size(); ++i) {
    truth.push_back(fs.true_labels[static_cast<std::size_t>(i)]);
  }
  // Nearest-center predictions stand in for the trained classifier.
  {
    Eigen::MatrixXd centers = Eigen::MatrixXd::Zero(4, fs.dim());
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(4);
    for (Index i = 0; i < fs.size(); ++i) {
      centers.row(truth[static_cast<std::size_t>(i)]) += fs.features.row(i);
      counts(truth[static_cast<std::size_t>(i)]) += 1;
    }
    for (int k = 0; k < 4; ++k) centers.row(k) /= counts(k);
    for (Index i = 0; i < fs.size(); ++i) {
      int best = 0;
      double bd = (fs.features.row(i) - centers.row(0)).squaredNorm();
      for (int k = 1; k < 4; ++k) {
        const double d = (fs.features.row(i) - centers.row(k)).squaredNorm();
        if (d < bd) {
          bd = d;
          best = k;
        }
      }
      clf_preds.push_back(best);
    }
  }
  const auto cov = coverage_estimate(sys, c, clf_preds, truth);
  REQUIRE(cov.has_true);
  CHECK(std::abs(cov.estimated - cov.true_coverage) < 0.1);
}

TEST_CASE("effective budget ratio counts strict wins over mean plus std") {
  const std::vector<double> base_mean = {0.5, 0.6, 0.7};
  const std::vector<double> base_std = {0.05, 0.05, 0.05};
  CHECK(effective_budget_ratio(base_mean, base_mean, base_std) == 0.0);

  std::vector<double> better = {0.6, 0.7, 0.8};  // +2 std everywhere
  CHECK(effective_budget_ratio(better, base_mean, base_std) == 1.0);

  std::vector<double> mixed = {0.6, 0.6, 0.7};
  CHECK(effective_budget_ratio(mixed, base_mean, base_std) ==
        doctest::Approx(1.0 / 3.0));

  CHECK_THROWS_AS(effective_budget_ratio({0.5}, base_mean, base_std), Error);
}

TEST_CASE("argmax agreement rate is measured, not asserted") {
  Eigen::MatrixXd py(3, 2);
  py << 1, 0, 0, 1, 1, 0;
  Eigen::MatrixXd pc(3, 3);
  pc << 1, 0, 0, 0, 0, 1, 0, 1, 0;
  const std::vector<int> dominant = {0, 0, 1};
  // Rows: dom(0)=0 == 0; dom(2)=1 == 1; dom(1)=0 != 0? row 2: argmax
  // py=0, dom(argmax pc=1)=0 -> agree. All three agree here.
  CHECK(argmax_agreement_rate(py, pc, dominant) == doctest::Approx(1.0));
  Eigen::MatrixXd pc2 = pc;
  pc2.row(1) << 1, 0, 0;  // now maps to class 0 while py says 1
  CHECK(argmax_agreement_rate(py, pc2, dominant) ==
        doctest::Approx(2.0 / 3.0));
}
