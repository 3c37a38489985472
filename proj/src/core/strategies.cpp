#include "strategies.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <unordered_map>

namespace ntkcpl {

namespace {

void check_budget(const ALState& state, Index b) {
  if (b < 0) throw_precondition("budget must be >= 0");
  if (b > static_cast<Index>(state.unlabeled().size())) {
    throw_precondition("budget exceeds the unlabeled pool");
  }
}

void check_candidates(const ALState& state, Index b) {
  if (b > static_cast<Index>(state.candidate().size())) {
    throw_precondition("budget exceeds the candidate subset");
  }
}

// Maps candidate sample indices to their pool positions in the kernel
// system (sys.pool entries index point_samples).
std::vector<Index> candidate_pool_positions(
    const ALState& state, const KernelSystem& sys,
    const std::vector<Index>& point_samples) {
  std::unordered_map<Index, Index> sample_to_pool;
  for (std::size_t i = 0; i < sys.pool.size(); ++i) {
    sample_to_pool.emplace(point_samples[static_cast<std::size_t>(sys.pool[i])],
                           static_cast<Index>(i));
  }
  std::vector<Index> out;
  out.reserve(state.candidate().size());
  for (Index s : state.candidate()) {
    auto it = sample_to_pool.find(s);
    if (it == sample_to_pool.end()) {
      throw_precondition("candidate sample " + std::to_string(s) +
                         " is not a pool point of the kernel system");
    }
    out.push_back(it->second);
  }
  return out;
}

}  // namespace

StrategyName strategy_from_string(const std::string& name) {
  if (name == "random") return StrategyName::Random;
  if (name == "entropy") return StrategyName::Entropy;
  if (name == "coreset") return StrategyName::Coreset;
  if (name == "badge") return StrategyName::Badge;
  if (name == "lookahead") return StrategyName::Lookahead;
  if (name == "ntkcpl") return StrategyName::Ntkcpl;
  throw_config("unknown strategy '" + name + "'");
}

std::string strategy_to_string(StrategyName name) {
  switch (name) {
    case StrategyName::Random: return "random";
    case StrategyName::Entropy: return "entropy";
    case StrategyName::Coreset: return "coreset";
    case StrategyName::Badge: return "badge";
    case StrategyName::Lookahead: return "lookahead";
    case StrategyName::Ntkcpl: return "ntkcpl";
  }
  return "?";
}

FeatureSource feature_source_from_string(const std::string& name) {
  if (name == "self_supervised") return FeatureSource::SelfSupervised;
  if (name == "active_learning") return FeatureSource::ActiveLearning;
  throw_config("unknown feature source '" + name + "'");
}

std::vector<Index> select_random(const ALState& state, Index b,
                                 std::mt19937_64& rng) {
  check_budget(state, b);
  return sample_without_replacement(state.unlabeled(), b, rng);
}

std::vector<Index> select_entropy(const ALState& state, Index b,
                                  const MLPParams& classifier,
                                  const Eigen::MatrixXd& features) {
  check_budget(state, b);
  check_candidates(state, b);
  const auto& cand = state.candidate();
  Eigen::MatrixXd x(static_cast<Index>(cand.size()), features.cols());
  for (std::size_t i = 0; i < cand.size(); ++i) {
    x.row(static_cast<Index>(i)) = features.row(cand[i]);
  }
  const Eigen::MatrixXd logits = forward(classifier, x);
  std::vector<std::pair<double, Index>> scored;
  scored.reserve(cand.size());
  for (std::size_t i = 0; i < cand.size(); ++i) {
    const Index r = static_cast<Index>(i);
    const double m = logits.row(r).maxCoeff();
    Eigen::ArrayXd p = (logits.row(r).transpose().array() - m).exp();
    p /= p.sum();
    double entropy = 0.0;
    for (Index c = 0; c < p.size(); ++c) {
      if (p(c) > 0.0) entropy -= p(c) * std::log(p(c));
    }
    scored.emplace_back(entropy, cand[i]);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b2) {
    if (a.first != b2.first) return a.first > b2.first;
    return a.second < b2.second;
  });
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(b));
  for (Index i = 0; i < b; ++i) {
    out.push_back(scored[static_cast<std::size_t>(i)].second);
  }
  return out;
}

std::vector<Index> select_coreset(const ALState& state, Index b,
                                  const Eigen::MatrixXd& features) {
  check_budget(state, b);
  check_candidates(state, b);
  const auto& cand = state.candidate();
  const Index m = static_cast<Index>(cand.size());
  std::vector<Index> picks;
  if (b == 0) return picks;

  Eigen::VectorXd min_d2(m);
  std::vector<char> chosen(static_cast<std::size_t>(m), 0);
  Index start = 0;
  if (state.labeled().empty()) {
    // Seed with the candidate farthest from the candidate centroid.
    Eigen::RowVectorXd centroid = Eigen::RowVectorXd::Zero(features.cols());
    for (Index s : cand) centroid += features.row(s);
    centroid /= static_cast<double>(m);
    Index far = 0;
    double best = -1.0;
    for (Index i = 0; i < m; ++i) {
      const double d = (features.row(cand[static_cast<std::size_t>(i)]) -
                        centroid).squaredNorm();
      if (d > best) {
        best = d;
        far = i;
      }
    }
    picks.push_back(cand[static_cast<std::size_t>(far)]);
    chosen[static_cast<std::size_t>(far)] = 1;
    for (Index i = 0; i < m; ++i) {
      min_d2(i) = (features.row(cand[static_cast<std::size_t>(i)]) -
                   features.row(cand[static_cast<std::size_t>(far)]))
                      .squaredNorm();
    }
    start = 1;
  } else {
    min_d2.setConstant(std::numeric_limits<double>::infinity());
    for (Index l : state.labeled()) {
      for (Index i = 0; i < m; ++i) {
        min_d2(i) =
            std::min(min_d2(i), (features.row(cand[static_cast<std::size_t>(i)]) -
                                 features.row(l))
                                    .squaredNorm());
      }
    }
  }

  for (Index step = start; step < b; ++step) {
    Index far = -1;
    double best = -1.0;
    for (Index i = 0; i < m; ++i) {
      if (chosen[static_cast<std::size_t>(i)]) continue;
      if (min_d2(i) > best) {
        best = min_d2(i);
        far = i;
      }
    }
    picks.push_back(cand[static_cast<std::size_t>(far)]);
    chosen[static_cast<std::size_t>(far)] = 1;
    for (Index i = 0; i < m; ++i) {
      min_d2(i) =
          std::min(min_d2(i),
                   (features.row(cand[static_cast<std::size_t>(i)]) -
                    features.row(picks.back()))
                       .squaredNorm());
    }
  }
  return picks;
}

std::vector<Index> select_badge(const ALState& state, Index b,
                                const MLPParams& classifier,
                                const Eigen::MatrixXd& features,
                                std::mt19937_64& rng) {
  check_budget(state, b);
  check_candidates(state, b);
  const auto& cand = state.candidate();
  const Index m = static_cast<Index>(cand.size());
  std::vector<Index> picks;
  if (b == 0) return picks;

  Eigen::MatrixXd x(m, features.cols());
  for (Index i = 0; i < m; ++i) {
    x.row(i) = features.row(cand[static_cast<std::size_t>(i)]);
  }
  const Eigen::MatrixXd emb = grad_embedding(classifier, x);

  std::vector<char> chosen(static_cast<std::size_t>(m), 0);
  std::uniform_int_distribution<Index> uniform(0, m - 1);
  Index first = uniform(rng);
  picks.push_back(cand[static_cast<std::size_t>(first)]);
  chosen[static_cast<std::size_t>(first)] = 1;

  Eigen::VectorXd d2(m);
  for (Index i = 0; i < m; ++i) {
    d2(i) = (emb.row(i) - emb.row(first)).squaredNorm();
  }
  while (static_cast<Index>(picks.size()) < b) {
    double total = 0.0;
    for (Index i = 0; i < m; ++i) {
      if (!chosen[static_cast<std::size_t>(i)]) total += d2(i);
    }
    Index pick = -1;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      double acc = 0.0;
      for (Index i = 0; i < m; ++i) {
        if (chosen[static_cast<std::size_t>(i)]) continue;
        acc += d2(i);
        if (acc >= target) {
          pick = i;
          break;
        }
      }
      if (pick < 0) {
        for (Index i = m - 1; i >= 0; --i) {
          if (!chosen[static_cast<std::size_t>(i)]) {
            pick = i;
            break;
          }
        }
      }
    } else {
      // Degenerate embeddings: uniform among the remaining candidates.
      std::vector<Index> rest;
      for (Index i = 0; i < m; ++i) {
        if (!chosen[static_cast<std::size_t>(i)]) rest.push_back(i);
      }
      std::uniform_int_distribution<std::size_t> pr(0, rest.size() - 1);
      pick = rest[pr(rng)];
    }
    chosen[static_cast<std::size_t>(pick)] = 1;
    picks.push_back(cand[static_cast<std::size_t>(pick)]);
    for (Index i = 0; i < m; ++i) {
      d2(i) = std::min(d2(i), (emb.row(i) - emb.row(pick)).squaredNorm());
    }
  }
  return picks;
}

std::vector<Index> select_lookahead(const ALState& state, Index b,
                                    const KernelSystem& sys,
                                    const std::vector<Index>& point_samples,
                                    const Eigen::MatrixXd& labeled_one_hot) {
  check_budget(state, b);
  check_candidates(state, b);
  std::vector<Index> picks;
  if (b == 0) return picks;

  const auto cand_pos = candidate_pool_positions(state, sys, point_samples);
  PoolRegression reg(sys, labeled_one_hot);

  for (Index step = 0; step < b; ++step) {
    Index best_i = -1;
    double best_score = -1.0;
    int best_label = 0;
    for (std::size_t ci = 0; ci < cand_pos.size(); ++ci) {
      const Index pos = cand_pos[ci];
      if (reg.committed(pos)) continue;
      const int yhat = argmax_row_lowest(reg.predictions(), pos);
      const double score = reg.hypothetical_l1_change(pos, yhat);
      if (score > best_score) {
        best_score = score;
        best_i = static_cast<Index>(ci);
        best_label = yhat;
      }
    }
    if (best_i < 0) throw_precondition("no candidate left to select");
    reg.commit(cand_pos[static_cast<std::size_t>(best_i)], best_label);
    picks.push_back(state.candidate()[static_cast<std::size_t>(best_i)]);
  }
  return picks;
}

std::vector<Index> select_ntkcpl(const ALState& state, Index b,
                                 const KernelSystem& sys,
                                 const std::vector<Index>& point_samples,
                                 const CPL& cpl) {
  check_budget(state, b);
  check_candidates(state, b);
  std::vector<Index> picks;
  if (b == 0) return picks;
  if (cpl.labels.size() != point_samples.size()) {
    throw_precondition("CPL must cover every kernel point");
  }

  const auto cand_pos = candidate_pool_positions(state, sys, point_samples);

  // One-hot CPL labels of the current L.
  std::vector<int> labs;
  labs.reserve(sys.labeled.size());
  for (Index p : sys.labeled) {
    labs.push_back(cpl.labels[static_cast<std::size_t>(p)]);
  }
  PoolRegression reg(sys, one_hot(labs, cpl.n_clu));

  std::vector<int> pool_cpl;
  pool_cpl.reserve(sys.pool.size());
  for (Index p : sys.pool) {
    pool_cpl.push_back(cpl.labels[static_cast<std::size_t>(p)]);
  }

  for (Index step = 0; step < b; ++step) {
    Index best_i = -1;
    double best_risk = std::numeric_limits<double>::infinity();
    for (std::size_t ci = 0; ci < cand_pos.size(); ++ci) {
      const Index pos = cand_pos[ci];
      if (reg.committed(pos)) continue;
      const int ycpl =
          cpl.labels[static_cast<std::size_t>(sys.pool[static_cast<std::size_t>(pos)])];
      const double risk = reg.hypothetical_risk(pos, ycpl, pool_cpl);
      if (risk < best_risk) {
        best_risk = risk;
        best_i = static_cast<Index>(ci);
      }
    }
    if (best_i < 0) throw_precondition("no candidate left to select");
    const Index pos = cand_pos[static_cast<std::size_t>(best_i)];
    const int ycpl =
        cpl.labels[static_cast<std::size_t>(sys.pool[static_cast<std::size_t>(pos)])];
    reg.commit(pos, ycpl);
    picks.push_back(state.candidate()[static_cast<std::size_t>(best_i)]);
  }
  return picks;
}

void append_selection_csv(std::ostream& os, int round,
                          const std::vector<Index>& picks,
                          const std::vector<std::int64_t>& sample_ids,
                          const std::string& strategy) {
  for (std::size_t step = 0; step < picks.size(); ++step) {
    os << round << ',' << step << ','
       << sample_ids[static_cast<std::size_t>(picks[step])] << ',' << strategy
       << '\n';
  }
}

}  // namespace ntkcpl
