#pragma once

#include "dataset.hpp"

namespace ntkcpl {

// Balanced isotropic Gaussian mixture. Class centers are drawn from
// center_seed (shared between train and test splits of one benchmark);
// sample noise and the row shuffle come from sample_seed.
struct MixtureSpec {
  Index n = 2000;
  Index dim = 16;
  int classes = 8;
  double sigma = 1.0;
  double radius = 4.0;  // norm of every class center
  std::uint64_t center_seed = 1;
  std::uint64_t sample_seed = 2;
};

FeatureSet make_gaussian_mixture(const MixtureSpec& spec);

// Accuracy of the nearest-center rule on a labeled set; for equal
// isotropic class covariances this is the Bayes classifier, which makes
// it a quick separability probe for generated instances.
double nearest_center_accuracy(const MixtureSpec& spec, const FeatureSet& fs);

}  // namespace ntkcpl
