#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ntkcpl {

using Index = Eigen::Index;

// Error taxonomy. Kinds map onto the C API status codes and the CLI exit
// codes (config=2, data=3, numeric=4; precondition surfaces as config).
enum class ErrorKind {
  Config,
  Data,
  Numeric,
  Precondition,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void throw_config(const std::string& msg) {
  throw Error(ErrorKind::Config, msg);
}
[[noreturn]] inline void throw_data(const std::string& msg) {
  throw Error(ErrorKind::Data, msg);
}
[[noreturn]] inline void throw_numeric(const std::string& msg) {
  throw Error(ErrorKind::Numeric, msg);
}
[[noreturn]] inline void throw_precondition(const std::string& msg) {
  throw Error(ErrorKind::Precondition, msg);
}

// splitmix64 step; used to derive independent seed streams from a master
// seed so that per-round / per-purpose RNGs do not share state.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(a) ^ (0x9e3779b97f4a7c15ULL + b));
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b,
                              std::uint64_t c) {
  return mix_seed(mix_seed(a, b), c);
}

inline std::mt19937_64 make_rng(std::uint64_t seed) {
  return std::mt19937_64(seed);
}

// Row argmax with ties broken toward the lowest column index.
inline int argmax_row_lowest(const Eigen::MatrixXd& m, Index row) {
  int best = 0;
  double v = m(row, 0);
  for (Index c = 1; c < m.cols(); ++c) {
    if (m(row, c) > v) {
      v = m(row, c);
      best = static_cast<int>(c);
    }
  }
  return best;
}

inline Eigen::MatrixXd one_hot(const std::vector<int>& labels,
                               int num_classes) {
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(
      static_cast<Index>(labels.size()), static_cast<Index>(num_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw_precondition("label " + std::to_string(labels[i]) +
                         " outside [0," + std::to_string(num_classes) + ")");
    }
    y(static_cast<Index>(i), labels[i]) = 1.0;
  }
  return y;
}

// Uniform draw without replacement from `pool`, returned sorted ascending.
// Partial Fisher-Yates on a copy; deterministic for a given generator state.
template <typename T>
std::vector<T> sample_without_replacement(std::vector<T> pool, Index k,
                                          std::mt19937_64& rng) {
  const Index n = static_cast<Index>(pool.size());
  if (k >= n) {
    return pool;
  }
  for (Index i = 0; i < k; ++i) {
    std::uniform_int_distribution<Index> pick(i, n - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(static_cast<std::size_t>(k));
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace ntkcpl
