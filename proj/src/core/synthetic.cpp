#include "synthetic.hpp"

#include <algorithm>
#include <numeric>

namespace ntkcpl {

namespace {

Eigen::MatrixXd mixture_centers(const MixtureSpec& spec) {
  auto rng = make_rng(spec.center_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd centers(spec.classes, spec.dim);
  for (int c = 0; c < spec.classes; ++c) {
    for (Index j = 0; j < spec.dim; ++j) centers(c, j) = gauss(rng);
    centers.row(c) *= spec.radius / centers.row(c).norm();
  }
  return centers;
}

}  // namespace

FeatureSet make_gaussian_mixture(const MixtureSpec& spec) {
  if (spec.n < spec.classes || spec.dim < 1 || spec.classes < 2) {
    throw_precondition("mixture needs n >= classes >= 2 and dim >= 1");
  }
  if (spec.sigma <= 0.0 || spec.radius <= 0.0) {
    throw_precondition("mixture sigma and radius must be positive");
  }
  const Eigen::MatrixXd centers = mixture_centers(spec);

  auto rng = make_rng(spec.sample_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<int> labels(static_cast<std::size_t>(spec.n));
  for (Index i = 0; i < spec.n; ++i) {
    labels[static_cast<std::size_t>(i)] =
        static_cast<int>(i % static_cast<Index>(spec.classes));
  }
  std::shuffle(labels.begin(), labels.end(), rng);

  FeatureSet fs;
  fs.features.resize(spec.n, spec.dim);
  for (Index i = 0; i < spec.n; ++i) {
    const int c = labels[static_cast<std::size_t>(i)];
    for (Index j = 0; j < spec.dim; ++j) {
      fs.features(i, j) = centers(c, j) + spec.sigma * gauss(rng);
    }
  }
  // Keep values exactly representable in the FEATv1 payload.
  fs.features = fs.features.cast<float>().cast<double>();
  fs.true_labels = std::move(labels);
  fs.num_classes = spec.classes;
  fs.ids.resize(static_cast<std::size_t>(spec.n));
  std::iota(fs.ids.begin(), fs.ids.end(), std::int64_t{0});
  return fs;
}

double nearest_center_accuracy(const MixtureSpec& spec, const FeatureSet& fs) {
  const Eigen::MatrixXd centers = mixture_centers(spec);
  Index hits = 0;
  for (Index i = 0; i < fs.size(); ++i) {
    int best = 0;
    double best_d = (fs.features.row(i) - centers.row(0)).squaredNorm();
    for (int c = 1; c < spec.classes; ++c) {
      const double d = (fs.features.row(i) - centers.row(c)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    if (best == fs.true_labels[static_cast<std::size_t>(i)]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(fs.size());
}

}  // namespace ntkcpl
