#pragma once

#include <optional>
#include <string>
#include <vector>

#include "common.hpp"

namespace ntkcpl {

// Immutable pool of sample feature vectors. Features are stored as doubles
// but the binary on-disk payload is 32-bit float (FEATv1), so every stored
// value is exactly representable as a float.
struct FeatureSet {
  Eigen::MatrixXd features;           // N x d
  std::vector<std::int64_t> ids;      // N sample identifiers (row order)
  std::vector<int> true_labels;       // empty when no oracle labels
  int num_classes = 0;

  Index size() const { return features.rows(); }
  Index dim() const { return features.cols(); }
  bool has_labels() const { return !true_labels.empty(); }
};

enum class FileFormat { Binary, Csv };

FileFormat parse_format(const std::string& name);

// FEATv1 binary layout: magic "FEAT", u32 version=1, u32 N, u32 d,
// u32 label_flag in {0,1}, u32 C; then N*d little-endian f32 row-major;
// if label_flag=1, N u32 labels follow.
FeatureSet load_features(const std::string& path, FileFormat format);
void save_features(const FeatureSet& fs, const std::string& path,
                   FileFormat format);

// Active-learning round state over a FeatureSet. L and U partition
// [0, n); candidate is a subset of U refreshed once per round.
class ALState {
 public:
  explicit ALState(Index n);

  Index pool_size() const { return n_; }
  const std::vector<Index>& labeled() const { return labeled_; }
  const std::vector<int>& labels() const { return labels_; }
  const std::vector<Index>& unlabeled() const { return unlabeled_; }
  const std::vector<Index>& candidate() const { return candidate_; }
  bool is_labeled(Index i) const { return mask_[static_cast<size_t>(i)]; }
  int label_of(Index i) const;
  int round = 0;

  // Uniform sample without replacement from U of size min(size, |U|);
  // stored as the current candidate subset and returned.
  const std::vector<Index>& sample_candidate_subset(Index size,
                                                    std::mt19937_64& rng);

  // Returns the oracle labels for `indices`, moves them from U to L and
  // drops them from the candidate subset. All indices must be unlabeled
  // and distinct; the oracle FeatureSet must carry true labels.
  std::vector<int> query_oracle(const FeatureSet& oracle,
                                const std::vector<Index>& indices);

 private:
  Index n_;
  std::vector<Index> labeled_;
  std::vector<int> labels_;
  std::vector<Index> unlabeled_;   // sorted ascending
  std::vector<Index> candidate_;   // sorted ascending
  std::vector<char> mask_;
};

}  // namespace ntkcpl
