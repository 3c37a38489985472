#include "model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace ntkcpl {

namespace {

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;

void check_input(const MLPParams& p, const Eigen::MatrixXd& x) {
  if (x.cols() != p.in_dim()) {
    throw_precondition("input has " + std::to_string(x.cols()) +
                       " columns, model expects " +
                       std::to_string(p.in_dim()));
  }
}

Eigen::MatrixXd hidden_preact(const MLPParams& p, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd h = x * p.w1;
  h.rowwise() += p.b1.transpose();
  return h;
}

Eigen::MatrixXd bn_inference(const MLPParams& p, const Eigen::MatrixXd& h) {
  Eigen::ArrayXd scale =
      p.bn_gamma.array() / (p.bn_var.array() + kBnEps).sqrt();
  Eigen::ArrayXd shift = p.bn_beta.array() - p.bn_mean.array() * scale;
  Eigen::MatrixXd out = h;
  out.array().rowwise() *= scale.transpose();
  out.array().rowwise() += shift.transpose();
  return out;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd p = logits;
  for (Index i = 0; i < p.rows(); ++i) {
    const double m = p.row(i).maxCoeff();
    p.row(i) = (p.row(i).array() - m).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

int argmax_row(const Eigen::MatrixXd& m, Index i) {
  // Ties break toward the lowest class index.
  int best = 0;
  double v = m(i, 0);
  for (Index c = 1; c < m.cols(); ++c) {
    if (m(i, c) > v) {
      v = m(i, c);
      best = static_cast<int>(c);
    }
  }
  return best;
}

void write_f64(std::ostream& os, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

double read_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
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

MLPParams init_mlp(Index d, Index h, Index c, InitScheme scheme,
                   bool zero_output_init, std::mt19937_64& rng) {
  if (d < 1 || h < 1 || c < 1) {
    throw_precondition("init_mlp requires d, h, C >= 1");
  }
  MLPParams p;
  p.scheme = scheme;
  p.zero_output_init = zero_output_init;
  p.w1.resize(d, h);
  p.b1.resize(h);
  p.w2.resize(h, c);
  p.b2.resize(c);

  std::normal_distribution<double> gauss(0.0, 1.0);
  const double s1 = scheme == InitScheme::NtkParameterization
                        ? 1.0 / std::sqrt(static_cast<double>(d))
                        : std::sqrt(2.0 / static_cast<double>(d));
  const double s2 = scheme == InitScheme::NtkParameterization
                        ? 1.0 / std::sqrt(static_cast<double>(h))
                        : std::sqrt(2.0 / static_cast<double>(h));
  // Draw order is fixed (W1 row-major, b1, W2 row-major, b2) so a seed
  // pins the full parameter vector.
  for (Index i = 0; i < d; ++i) {
    for (Index j = 0; j < h; ++j) p.w1(i, j) = s1 * gauss(rng);
  }
  if (scheme == InitScheme::NtkParameterization) {
    for (Index j = 0; j < h; ++j) p.b1(j) = gauss(rng);
  } else {
    p.b1.setZero();
  }
  if (zero_output_init) {
    p.w2.setZero();
    p.b2.setZero();
  } else {
    for (Index i = 0; i < h; ++i) {
      for (Index j = 0; j < c; ++j) p.w2(i, j) = s2 * gauss(rng);
    }
    if (scheme == InitScheme::NtkParameterization) {
      for (Index j = 0; j < c; ++j) p.b2(j) = gauss(rng);
    } else {
      p.b2.setZero();
    }
  }
  return p;
}

Eigen::MatrixXd penultimate(const MLPParams& p, const Eigen::MatrixXd& x) {
  check_input(p, x);
  Eigen::MatrixXd h = hidden_preact(p, x);
  if (p.has_batchnorm) h = bn_inference(p, h);
  return h.cwiseMax(0.0);
}

Eigen::MatrixXd forward(const MLPParams& p, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd logits = penultimate(p, x) * p.w2;
  logits.rowwise() += p.b2.transpose();
  return logits;
}

std::vector<int> predict_classes(const MLPParams& p,
                                 const Eigen::MatrixXd& x) {
  const Eigen::MatrixXd logits = forward(p, x);
  std::vector<int> out(static_cast<std::size_t>(x.rows()));
  for (Index i = 0; i < x.rows(); ++i) {
    out[static_cast<std::size_t>(i)] = argmax_row(logits, i);
  }
  return out;
}

double evaluate_accuracy(const MLPParams& p, const Eigen::MatrixXd& x,
                         const std::vector<int>& labels) {
  if (static_cast<Index>(labels.size()) != x.rows()) {
    throw_precondition("label count does not match row count");
  }
  const auto preds = predict_classes(p, x);
  Index hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (preds[i] == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

MLPParams train_classifier(MLPParams params, const Eigen::MatrixXd& x,
                           const std::vector<int>& labels,
                           const TrainConfig& cfg) {
  check_input(params, x);
  const Index n = x.rows();
  const Index c = params.out_dim();
  const Index h = params.hidden_dim();
  if (n == 0) throw_precondition("empty training set");
  if (static_cast<Index>(labels.size()) != n) {
    throw_precondition("label count does not match row count");
  }
  if (cfg.learning_rate <= 0) throw_precondition("learning_rate must be > 0");
  if (cfg.epochs < 1) throw_precondition("epochs must be >= 1");
  if (cfg.batch_size < 1) throw_precondition("batch_size must be >= 1");
  for (int lab : labels) {
    if (lab < 0 || lab >= c) {
      throw_precondition("label " + std::to_string(lab) + " outside [0," +
                         std::to_string(c) + ")");
    }
  }

  if (cfg.use_batchnorm && !params.has_batchnorm) {
    params.has_batchnorm = true;
    params.bn_gamma = Eigen::VectorXd::Ones(h);
    params.bn_beta = Eigen::VectorXd::Zero(h);
    params.bn_mean = Eigen::VectorXd::Zero(h);
    params.bn_var = Eigen::VectorXd::Ones(h);
  }
  const bool bn = params.has_batchnorm;

  // Momentum buffers.
  Eigen::MatrixXd vw1 = Eigen::MatrixXd::Zero(params.w1.rows(), h);
  Eigen::VectorXd vb1 = Eigen::VectorXd::Zero(h);
  Eigen::MatrixXd vw2 = Eigen::MatrixXd::Zero(h, c);
  Eigen::VectorXd vb2 = Eigen::VectorXd::Zero(c);
  Eigen::VectorXd vgamma, vbeta;
  if (bn) {
    vgamma = Eigen::VectorXd::Zero(h);
    vbeta = Eigen::VectorXd::Zero(h);
  }

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  auto rng = make_rng(cfg.seed);

  const double lr = cfg.learning_rate;
  const double mu = cfg.momentum;
  const double wd = cfg.weight_decay;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Index start = 0; start < n; start += cfg.batch_size) {
      const Index m = std::min(cfg.batch_size, n - start);
      Eigen::MatrixXd xb(m, x.cols());
      std::vector<int> yb(static_cast<std::size_t>(m));
      for (Index i = 0; i < m; ++i) {
        const Index src = order[static_cast<std::size_t>(start + i)];
        xb.row(i) = x.row(src);
        yb[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(src)];
      }

      // Forward (training mode: batch statistics for batch-norm).
      Eigen::MatrixXd hpre = hidden_preact(params, xb);
      Eigen::MatrixXd hn = hpre;
      Eigen::ArrayXd mean_b, var_b, inv_std;
      Eigen::MatrixXd xhat;
      if (bn) {
        mean_b = hpre.colwise().mean().transpose().array();
        Eigen::MatrixXd centered =
            hpre.rowwise() - mean_b.matrix().transpose();
        var_b = centered.array().square().colwise().mean().transpose();
        inv_std = (var_b + kBnEps).rsqrt();
        xhat = centered;
        xhat.array().rowwise() *= inv_std.transpose();
        hn = xhat;
        hn.array().rowwise() *= params.bn_gamma.array().transpose();
        hn.array().rowwise() += params.bn_beta.array().transpose();
        // Running statistics use the unbiased batch variance.
        const double unbias =
            m > 1 ? static_cast<double>(m) / static_cast<double>(m - 1) : 1.0;
        params.bn_mean.array() =
            (1.0 - kBnMomentum) * params.bn_mean.array() +
            kBnMomentum * mean_b;
        params.bn_var.array() = (1.0 - kBnMomentum) * params.bn_var.array() +
                                kBnMomentum * unbias * var_b;
      }
      Eigen::MatrixXd act = hn.cwiseMax(0.0);
      Eigen::MatrixXd logits = act * params.w2;
      logits.rowwise() += params.b2.transpose();

      // dL/dlogits, mean-reduced over the batch.
      Eigen::MatrixXd dlogits;
      if (cfg.loss == LossKind::CrossEntropy) {
        dlogits = softmax_rows(logits);
      } else {
        dlogits = logits;  // MSE on logits vs one-hot, L = 1/(2m) sum ||.||^2
      }
      for (Index i = 0; i < m; ++i) {
        dlogits(i, yb[static_cast<std::size_t>(i)]) -= 1.0;
      }
      dlogits /= static_cast<double>(m);

      Eigen::MatrixXd gw2 = act.transpose() * dlogits;
      Eigen::VectorXd gb2 = dlogits.colwise().sum();
      Eigen::MatrixXd dact = dlogits * params.w2.transpose();
      Eigen::MatrixXd dhn =
          (hn.array() > 0.0).cast<double>() * dact.array();

      Eigen::MatrixXd dhpre;
      Eigen::VectorXd ggamma, gbeta;
      if (bn) {
        ggamma = (dhn.array() * xhat.array()).colwise().sum();
        gbeta = dhn.colwise().sum();
        Eigen::MatrixXd dxhat = dhn;
        dxhat.array().rowwise() *= params.bn_gamma.array().transpose();
        const double md = static_cast<double>(m);
        Eigen::ArrayXd sum_dxhat = dxhat.colwise().sum().transpose().array();
        Eigen::ArrayXd sum_dxhat_xhat =
            (dxhat.array() * xhat.array()).colwise().sum().transpose();
        dhpre = dxhat;
        dhpre.array().rowwise() -= sum_dxhat.transpose() / md;
        Eigen::MatrixXd tmp = xhat;
        tmp.array().rowwise() *= (sum_dxhat_xhat / md).transpose();
        dhpre -= tmp;
        dhpre.array().rowwise() *= inv_std.transpose();
      } else {
        dhpre = dhn;
      }

      Eigen::MatrixXd gw1 = xb.transpose() * dhpre;
      Eigen::VectorXd gb1 = dhpre.colwise().sum();

      // SGD with momentum; weight decay enters the gradient.
      auto step = [&](auto& param, auto& vel, const auto& grad) {
        vel = mu * vel + (grad + wd * param);
        param -= lr * vel;
      };
      step(params.w1, vw1, gw1);
      step(params.b1, vb1, gb1);
      step(params.w2, vw2, gw2);
      step(params.b2, vb2, gb2);
      if (bn) {
        step(params.bn_gamma, vgamma, ggamma);
        step(params.bn_beta, vbeta, gbeta);
      }
    }
  }
  return params;
}

Eigen::MatrixXd jacobian(const MLPParams& p, const Eigen::VectorXd& x) {
  if (p.has_batchnorm) {
    throw_precondition("jacobian is defined for the batch-norm-free path");
  }
  if (x.size() != p.in_dim()) {
    throw_precondition("jacobian input dimension mismatch");
  }
  const Index d = p.in_dim(), h = p.hidden_dim(), c = p.out_dim();
  Eigen::VectorXd pre = p.w1.transpose() * x + p.b1;
  Eigen::VectorXd mask = (pre.array() > 0.0).cast<double>();
  Eigen::VectorXd act = pre.cwiseMax(0.0);

  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(c, p.param_count());
  for (Index out = 0; out < c; ++out) {
    Eigen::VectorXd mh = mask.array() * p.w2.col(out).array();
    // W1 block, row-major (i*h + j).
    for (Index i = 0; i < d; ++i) {
      jac.block(out, i * h, 1, h) = (x(i) * mh).transpose();
    }
    jac.block(out, d * h, 1, h) = mh.transpose();  // b1
    // W2 block, row-major (j*C + k); only k == out is nonzero.
    for (Index j = 0; j < h; ++j) {
      jac(out, d * h + h + j * c + out) = act(j);
    }
    jac(out, d * h + h + h * c + out) = 1.0;  // b2
  }
  return jac;
}

Eigen::MatrixXd scalar_jacobians(const MLPParams& p, const Eigen::MatrixXd& x,
                                 Index head) {
  if (p.has_batchnorm) {
    throw_precondition("jacobian is defined for the batch-norm-free path");
  }
  check_input(p, x);
  if (head < 0 || head >= p.out_dim()) {
    throw_precondition("invalid scalar-kernel head");
  }
  const Index d = p.in_dim(), h = p.hidden_dim(), c = p.out_dim();
  const Index m = x.rows();
  Eigen::MatrixXd pre = hidden_preact(p, x);
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(m, p.param_count());
  for (Index r = 0; r < m; ++r) {
    Eigen::ArrayXd mask = (pre.row(r).transpose().array() > 0.0).cast<double>();
    Eigen::ArrayXd mh = mask * p.w2.col(head).array();
    for (Index i = 0; i < d; ++i) {
      jac.block(r, i * h, 1, h) = (x(r, i) * mh).matrix().transpose();
    }
    jac.block(r, d * h, 1, h) = mh.matrix().transpose();
    Eigen::ArrayXd act = pre.row(r).transpose().array().max(0.0);
    for (Index j = 0; j < h; ++j) {
      jac(r, d * h + h + j * c + head) = act(j);
    }
    jac(r, d * h + h + h * c + head) = 1.0;
  }
  return jac;
}

Eigen::MatrixXd mlp_scalar_ntk_gram(const MLPParams& p,
                                    const Eigen::MatrixXd& x, Index head) {
  if (p.has_batchnorm) {
    throw_precondition("the NTK gram is defined for the batch-norm-free path");
  }
  check_input(p, x);
  if (head < 0 || head >= p.out_dim()) {
    throw_precondition("invalid scalar-kernel head");
  }
  const Index m = x.rows();
  Eigen::MatrixXd pre = hidden_preact(p, x);
  Eigen::MatrixXd s = pre.cwiseMax(0.0);                       // m x h
  Eigen::MatrixXd mm = (pre.array() > 0.0).cast<double>();     // m x h
  mm.array().rowwise() *= p.w2.col(head).transpose().array();

  Eigen::MatrixXd xxt = x * x.transpose();
  Eigen::MatrixXd mmt = mm * mm.transpose();
  Eigen::MatrixXd gram =
      ((xxt.array() + 1.0) * mmt.array()).matrix() + s * s.transpose();
  gram.array() += 1.0;
  // Symmetrize away accumulation-order roundoff.
  gram = ((gram + gram.transpose()) * 0.5).eval();
  return gram;
}

Eigen::MatrixXd grad_embedding(const MLPParams& p, const Eigen::MatrixXd& x) {
  check_input(p, x);
  const Index m = x.rows(), h = p.hidden_dim(), c = p.out_dim();
  const Eigen::MatrixXd act = penultimate(p, x);
  Eigen::MatrixXd logits = act * p.w2;
  logits.rowwise() += p.b2.transpose();
  const Eigen::MatrixXd probs = softmax_rows(logits);
  Eigen::MatrixXd emb(m, h * c);
  for (Index i = 0; i < m; ++i) {
    const int yhat = argmax_row(logits, i);
    for (Index cc = 0; cc < c; ++cc) {
      const double coef = probs(i, cc) - (cc == yhat ? 1.0 : 0.0);
      emb.block(i, cc * h, 1, h) = coef * act.row(i);
    }
  }
  return emb;
}

void save_params(const MLPParams& p, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw_data("cannot write checkpoint: " + path);
  os.write("MLPC", 4);
  write_u32le(os, 1);
  write_u32le(os, static_cast<std::uint32_t>(p.in_dim()));
  write_u32le(os, static_cast<std::uint32_t>(p.hidden_dim()));
  write_u32le(os, static_cast<std::uint32_t>(p.out_dim()));
  std::uint32_t flags = 0;
  if (p.zero_output_init) flags |= 1u;
  if (p.scheme == InitScheme::Standard) flags |= 2u;
  if (p.has_batchnorm) flags |= 4u;
  write_u32le(os, flags);
  auto dump_mat = [&](const Eigen::MatrixXd& m) {
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = 0; j < m.cols(); ++j) write_f64(os, m(i, j));
    }
  };
  auto dump_vec = [&](const Eigen::VectorXd& v) {
    for (Index i = 0; i < v.size(); ++i) write_f64(os, v(i));
  };
  dump_mat(p.w1);
  dump_vec(p.b1);
  dump_mat(p.w2);
  dump_vec(p.b2);
  if (p.has_batchnorm) {
    dump_vec(p.bn_gamma);
    dump_vec(p.bn_beta);
    dump_vec(p.bn_mean);
    dump_vec(p.bn_var);
  }
  if (!os) throw_data("write failed: " + path);
}

MLPParams load_params(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw_data("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "MLPC", 4) != 0) {
    throw_data("bad magic in checkpoint: " + path);
  }
  if (read_u32le(is) != 1) throw_data("unsupported checkpoint version");
  const Index d = static_cast<Index>(read_u32le(is));
  const Index h = static_cast<Index>(read_u32le(is));
  const Index c = static_cast<Index>(read_u32le(is));
  const std::uint32_t flags = read_u32le(is);
  if (!is || d < 1 || h < 1 || c < 1) {
    throw_data("malformed checkpoint header: " + path);
  }
  MLPParams p;
  p.zero_output_init = (flags & 1u) != 0;
  p.scheme = (flags & 2u) ? InitScheme::Standard
                          : InitScheme::NtkParameterization;
  p.has_batchnorm = (flags & 4u) != 0;
  p.w1.resize(d, h);
  p.b1.resize(h);
  p.w2.resize(h, c);
  p.b2.resize(c);
  auto read_mat = [&](Eigen::MatrixXd& m) {
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = 0; j < m.cols(); ++j) m(i, j) = read_f64(is);
    }
  };
  auto read_vec = [&](Eigen::VectorXd& v) {
    for (Index i = 0; i < v.size(); ++i) v(i) = read_f64(is);
  };
  read_mat(p.w1);
  read_vec(p.b1);
  read_mat(p.w2);
  read_vec(p.b2);
  if (p.has_batchnorm) {
    p.bn_gamma.resize(h);
    p.bn_beta.resize(h);
    p.bn_mean.resize(h);
    p.bn_var.resize(h);
    read_vec(p.bn_gamma);
    read_vec(p.bn_beta);
    read_vec(p.bn_mean);
    read_vec(p.bn_var);
  }
  if (!is) throw_data("truncated checkpoint: " + path);
  return p;
}

}  // namespace ntkcpl
