#pragma once

#include <string>
#include <vector>

#include "common.hpp"

namespace ntkcpl {

enum class InitScheme { NtkParameterization, Standard };
enum class LossKind { CrossEntropy, Mse };

// Two-layer classifier head trained on frozen features:
//   logits = ReLU(X*W1 + b1) * W2 + b2
// with an optional batch-norm stage on the hidden pre-activation
// (evaluation classifier only; the kernelized path never uses it).
//
// Flattened parameter order, used by the Jacobian layout and the
// checkpoint file: W1 row-major, b1, W2 row-major, b2.
struct MLPParams {
  Eigen::MatrixXd w1;  // d x h
  Eigen::VectorXd b1;  // h
  Eigen::MatrixXd w2;  // h x C
  Eigen::VectorXd b2;  // C
  InitScheme scheme = InitScheme::NtkParameterization;
  bool zero_output_init = false;

  bool has_batchnorm = false;
  Eigen::VectorXd bn_gamma, bn_beta, bn_mean, bn_var;  // h each

  Index in_dim() const { return w1.rows(); }
  Index hidden_dim() const { return w1.cols(); }
  Index out_dim() const { return w2.cols(); }
  Index param_count() const {
    return w1.size() + b1.size() + w2.size() + b2.size();
  }
};

struct TrainConfig {
  double learning_rate = 0.3;
  double momentum = 0.9;
  double weight_decay = 3e-4;
  Index batch_size = 100;
  int epochs = 100;
  LossKind loss = LossKind::CrossEntropy;
  std::uint64_t seed = 0;
  bool use_batchnorm = false;
};

// Gaussian init under the chosen scheme. The NTK parameterization is
// stored folded into the weight variances (W ~ N(0, 1/fan_in), b ~ N(0,1))
// so the forward pass needs no explicit width factors; Standard is He
// init with zero biases. zero_output_init zeroes W2 and b2, making the
// initial output identically zero.
MLPParams init_mlp(Index d, Index h, Index c, InitScheme scheme,
                   bool zero_output_init, std::mt19937_64& rng);

Eigen::MatrixXd forward(const MLPParams& p, const Eigen::MatrixXd& x);

// Hidden activations after ReLU (and batch-norm when the params carry it);
// the active-learning feature used for CPL clustering.
Eigen::MatrixXd penultimate(const MLPParams& p, const Eigen::MatrixXd& x);

std::vector<int> predict_classes(const MLPParams& p, const Eigen::MatrixXd& x);
double evaluate_accuracy(const MLPParams& p, const Eigen::MatrixXd& x,
                         const std::vector<int>& labels);

// Mini-batch SGD with momentum and weight decay; per-epoch shuffle is
// driven by cfg.seed, so training is bitwise deterministic.
MLPParams train_classifier(MLPParams params, const Eigen::MatrixXd& x,
                           const std::vector<int>& labels,
                           const TrainConfig& cfg);

// Exact analytic gradient of every logit w.r.t. the flattened parameters;
// rows are output heads. ReLU derivative at exactly 0 is taken as 0.
// Rejects batch-norm params: the kernelized path excludes batch-norm.
Eigen::MatrixXd jacobian(const MLPParams& p, const Eigen::VectorXd& x);

// Gradient of one designated output head, stacked over rows of X
// (scalar-kernel mode).
Eigen::MatrixXd scalar_jacobians(const MLPParams& p, const Eigen::MatrixXd& x,
                                 Index head = 0);

// Gram of scalar-head Jacobians, K[i][j] = <J(x_i), J(x_j)>, computed
// blockwise without materializing the Jacobians:
//   K = (X X^T + 1) .* (M M^T) + S S^T + 1
// where S holds ReLU activations and M = relu'(pre) .* W2[:,head].
Eigen::MatrixXd mlp_scalar_ntk_gram(const MLPParams& p,
                                    const Eigen::MatrixXd& x, Index head = 0);

// BADGE embedding: gradient of cross-entropy at the hallucinated label
// yhat = argmax logits w.r.t. the last layer, i.e. rows
//   e[c*h + k] = (softmax(logits)_c - 1[c == yhat]) * penultimate_k.
Eigen::MatrixXd grad_embedding(const MLPParams& p, const Eigen::MatrixXd& x);

// Checkpoint: magic "MLPC", u32 version=1, u32 d, u32 h, u32 C, u32 flags
// (bit0 zero_output_init, bit1 standard init, bit2 batch-norm), then the
// flattened parameters as little-endian f64 in the documented order,
// followed by bn_gamma, bn_beta, bn_mean, bn_var when bit2 is set.
void save_params(const MLPParams& p, const std::string& path);
MLPParams load_params(const std::string& path);

}  // namespace ntkcpl
