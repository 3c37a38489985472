#include "clustering.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

namespace ntkcpl {

namespace {

double sq_dist(const Eigen::MatrixXd& x, Index row,
               const Eigen::RowVectorXd& c) {
  return (x.row(row) - c).squaredNorm();
}

Eigen::MatrixXd seed_kmeanspp(const Eigen::MatrixXd& x, int k,
                              std::mt19937_64& rng) {
  const Index n = x.rows();
  Eigen::MatrixXd centroids(k, x.cols());
  std::vector<char> taken(static_cast<std::size_t>(n), 0);

  std::uniform_int_distribution<Index> uniform(0, n - 1);
  Index first = uniform(rng);
  centroids.row(0) = x.row(first);
  taken[static_cast<std::size_t>(first)] = 1;

  Eigen::VectorXd d2(n);
  for (Index i = 0; i < n; ++i) d2(i) = sq_dist(x, i, centroids.row(0));

  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Index pick = -1;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      double acc = 0.0;
      for (Index i = 0; i < n; ++i) {
        acc += d2(i);
        if (acc >= target) {
          pick = i;
          break;
        }
      }
      if (pick < 0) pick = n - 1;
    } else {
      // All remaining mass is zero (duplicates of chosen centroids):
      // fall back to a uniform draw among points not yet chosen.
      std::vector<Index> rest;
      for (Index i = 0; i < n; ++i) {
        if (!taken[static_cast<std::size_t>(i)]) rest.push_back(i);
      }
      if (rest.empty()) {
        pick = uniform(rng);
      } else {
        std::uniform_int_distribution<std::size_t> pr(0, rest.size() - 1);
        pick = rest[pr(rng)];
      }
    }
    centroids.row(c) = x.row(pick);
    taken[static_cast<std::size_t>(pick)] = 1;
    for (Index i = 0; i < n; ++i) {
      d2(i) = std::min(d2(i), sq_dist(x, i, centroids.row(c)));
    }
  }
  return centroids;
}

// Shared Lloyd loop. `adjacency` lists cannot-linked partners per point
// (empty for plain k-means); assignment is sequential in `order`;
// `groups` enables the reservation rule for class-block constraints.
ClusterModel lloyd(const Eigen::MatrixXd& x, int k,
                   const std::vector<std::vector<Index>>& adjacency,
                   std::mt19937_64& rng, int max_iter,
                   const std::vector<Index>& order,
                   const std::vector<int>* groups) {
  const Index n = x.rows();
  ClusterModel model;
  model.k = k;
  model.centroids = seed_kmeanspp(x, k, rng);
  model.assignment.assign(static_cast<std::size_t>(n), -1);

  const bool constrained = !adjacency.empty();
  const bool reserve = constrained && groups != nullptr;
  int num_groups = 0;
  if (reserve) {
    for (int g : *groups) num_groups = std::max(num_groups, g + 1);
  }
  std::vector<int> prev(static_cast<std::size_t>(n), -2);

  for (int iter = 0; iter < max_iter; ++iter) {
    // Assignment pass.
    std::vector<int> assign(static_cast<std::size_t>(n), -1);
    std::vector<Index> pending(static_cast<std::size_t>(num_groups), 0);
    std::vector<std::vector<char>> opened;  // group x cluster
    std::vector<int> opened_count(static_cast<std::size_t>(num_groups), 0);
    std::vector<char> cluster_free(static_cast<std::size_t>(k), 1);
    int free_count = k;
    if (reserve) {
      opened.assign(static_cast<std::size_t>(num_groups),
                    std::vector<char>(static_cast<std::size_t>(k), 0));
      for (Index i = 0; i < n; ++i) {
        const int g = (*groups)[static_cast<std::size_t>(i)];
        if (g >= 0) ++pending[static_cast<std::size_t>(g)];
      }
    }
    for (Index oi = 0; oi < n; ++oi) {
      const Index p = order[static_cast<std::size_t>(oi)];
      std::vector<char> forbidden(static_cast<std::size_t>(k), 0);
      if (constrained) {
        for (Index q : adjacency[static_cast<std::size_t>(p)]) {
          const int aq = assign[static_cast<std::size_t>(q)];
          if (aq >= 0) forbidden[static_cast<std::size_t>(aq)] = 1;
        }
      }
      const int g =
          reserve ? (*groups)[static_cast<std::size_t>(p)] : -1;
      int unplaced = 0;
      if (g >= 0) {
        for (int og = 0; og < num_groups; ++og) {
          if (og != g && pending[static_cast<std::size_t>(og)] > 0 &&
              opened_count[static_cast<std::size_t>(og)] == 0) {
            ++unplaced;
          }
        }
      }
      auto allowed = [&](int c, bool strict) {
        if (forbidden[static_cast<std::size_t>(c)]) return false;
        if (!strict || g < 0) return true;
        if (opened[static_cast<std::size_t>(g)][static_cast<std::size_t>(c)]) {
          return true;
        }
        // Opening a new cluster must leave one free cluster per group
        // that still has no home.
        return cluster_free[static_cast<std::size_t>(c)] != 0 &&
               free_count - 1 >= unplaced;
      };
      int best = -1;
      double best_d = std::numeric_limits<double>::infinity();
      for (int pass = 0; pass < 2 && best < 0; ++pass) {
        const bool strict = reserve && pass == 0;
        for (int c = 0; c < k; ++c) {
          if (!allowed(c, strict)) continue;
          const double d = sq_dist(x, p, model.centroids.row(c));
          if (d < best_d) {
            best_d = d;
            best = c;
          }
        }
        if (!reserve) break;
      }
      if (best < 0) {
        throw Error(ErrorKind::Precondition,
                    "cannot-link constraints leave no feasible cluster for "
                    "point " +
                        std::to_string(p));
      }
      assign[static_cast<std::size_t>(p)] = best;
      if (g >= 0) {
        --pending[static_cast<std::size_t>(g)];
        if (!opened[static_cast<std::size_t>(g)][static_cast<std::size_t>(best)]) {
          opened[static_cast<std::size_t>(g)][static_cast<std::size_t>(best)] = 1;
          ++opened_count[static_cast<std::size_t>(g)];
        }
        if (cluster_free[static_cast<std::size_t>(best)]) {
          cluster_free[static_cast<std::size_t>(best)] = 0;
          --free_count;
        }
      }
    }

    // Repair empty clusters: move the farthest point from a cluster that
    // keeps at least two members.
    std::vector<Index> sizes(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < n; ++i) {
      ++sizes[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
    }
    for (int c = 0; c < k; ++c) {
      if (sizes[static_cast<std::size_t>(c)] > 0) continue;
      Index pick = -1;
      double far = -1.0;
      for (Index i = 0; i < n; ++i) {
        const int a = assign[static_cast<std::size_t>(i)];
        if (sizes[static_cast<std::size_t>(a)] < 2) continue;
        const double d = sq_dist(x, i, model.centroids.row(a));
        if (d > far) {
          far = d;
          pick = i;
        }
      }
      if (pick < 0) {
        throw_numeric("cannot repair empty cluster: no donor cluster");
      }
      --sizes[static_cast<std::size_t>(assign[static_cast<std::size_t>(pick)])];
      assign[static_cast<std::size_t>(pick)] = c;
      ++sizes[static_cast<std::size_t>(c)];
    }

    // Update step into a working copy.
    Eigen::MatrixXd cent = Eigen::MatrixXd::Zero(k, x.cols());
    for (Index i = 0; i < n; ++i) {
      cent.row(assign[static_cast<std::size_t>(i)]) += x.row(i);
    }
    for (int c = 0; c < k; ++c) {
      cent.row(c) /= static_cast<double>(sizes[static_cast<std::size_t>(c)]);
    }
    double inertia = 0.0;
    for (Index i = 0; i < n; ++i) {
      inertia +=
          (x.row(i) - cent.row(assign[static_cast<std::size_t>(i)])).squaredNorm();
    }

    // Constrained passes are order-dependent and can propose a worse
    // assignment; accept only non-increasing inertia, else stop at the
    // best state reached.
    if (iter > 0 && inertia > model.inertia * (1.0 + 1e-12) + 1e-12) break;

    model.assignment = assign;
    model.centroids = std::move(cent);
    model.inertia = inertia;
    model.inertia_history.push_back(inertia);

    if (assign == prev) break;
    prev = assign;
  }
  return model;
}

std::vector<Index> default_order(Index n) {
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  return order;
}

int majority_lowest(const std::vector<int>& counts) {
  int best = -1, best_count = -1;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] > best_count) {
      best_count = counts[c];
      best = static_cast<int>(c);
    }
  }
  return best;
}

}  // namespace

double ClusterModel::recompute_inertia(const Eigen::MatrixXd& x) const {
  double total = 0.0;
  for (Index i = 0; i < x.rows(); ++i) {
    total += (x.row(i) - centroids.row(assignment[static_cast<std::size_t>(i)]))
                 .squaredNorm();
  }
  return total;
}

ClusterModel kmeans(const Eigen::MatrixXd& x, int k, std::mt19937_64& rng,
                    int max_iter) {
  if (k < 1) throw_precondition("k must be >= 1");
  if (static_cast<Index>(k) > x.rows()) {
    throw_precondition("k exceeds the number of points");
  }
  const auto order = default_order(x.rows());
  return lloyd(x, k, {}, rng, max_iter, order, nullptr);
}

ClusterModel constrained_kmeans(
    const Eigen::MatrixXd& x, int k,
    const std::vector<std::pair<Index, Index>>& cannot_link,
    std::mt19937_64& rng, int max_iter, const std::vector<Index>* order,
    const std::vector<int>* groups) {
  if (k < 1) throw_precondition("k must be >= 1");
  if (static_cast<Index>(k) > x.rows()) {
    throw_precondition("k exceeds the number of points");
  }
  std::vector<std::vector<Index>> adjacency;
  if (!cannot_link.empty()) {
    adjacency.resize(static_cast<std::size_t>(x.rows()));
    for (const auto& [a, b] : cannot_link) {
      if (a < 0 || a >= x.rows() || b < 0 || b >= x.rows() || a == b) {
        throw_precondition("invalid cannot-link pair");
      }
      adjacency[static_cast<std::size_t>(a)].push_back(b);
      adjacency[static_cast<std::size_t>(b)].push_back(a);
    }
  }
  const auto def = default_order(x.rows());
  const auto& ord = order ? *order : def;
  if (static_cast<Index>(ord.size()) != x.rows()) {
    throw_precondition("assignment order must cover every point");
  }
  if (groups && static_cast<Index>(groups->size()) != x.rows()) {
    throw_precondition("groups must cover every point");
  }
  return lloyd(x, k, adjacency, rng, max_iter, ord, groups);
}

int count_confusing(const std::vector<int>& member_preds) {
  if (member_preds.empty()) throw_precondition("empty cluster");
  const int maxc = *std::max_element(member_preds.begin(), member_preds.end());
  std::vector<int> counts(static_cast<std::size_t>(maxc) + 1, 0);
  for (int p : member_preds) {
    if (p < 0) throw_precondition("negative class prediction");
    ++counts[static_cast<std::size_t>(p)];
  }
  const int dominant = majority_lowest(counts);
  int confusing = 0;
  for (int p : member_preds) {
    if (p != dominant) ++confusing;
  }
  return confusing;
}

CPL generate_cpl(const Eigen::MatrixXd& features,
                 const std::vector<int>& model_preds, int c0, int n_clu,
                 const std::vector<std::pair<Index, int>>& labeled,
                 int num_classes, std::mt19937_64& rng, int max_iter) {
  const Index n = features.rows();
  if (static_cast<Index>(model_preds.size()) != n) {
    throw_precondition("model predictions must cover every clustered point");
  }
  if (c0 < 1 || c0 > n_clu) throw_precondition("need 1 <= C0 <= N_clu");
  if (static_cast<Index>(n_clu) > n) {
    throw_precondition("N_clu exceeds the clustered point count");
  }
  if (labeled.empty()) throw_precondition("generate_cpl requires labeled samples");

  // The constrained pass needs one cluster per labeled class; lift C0 to
  // that floor when N_clu allows it.
  {
    std::vector<int> seen;
    for (const auto& [pos, cls] : labeled) {
      if (std::find(seen.begin(), seen.end(), cls) == seen.end()) {
        seen.push_back(cls);
      }
    }
    c0 = std::min(std::max(c0, static_cast<int>(seen.size())), n_clu);
  }

  // Cannot-link between every labeled pair of differing true classes.
  std::vector<std::pair<Index, Index>> cannot_link;
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    for (std::size_t j = i + 1; j < labeled.size(); ++j) {
      if (labeled[i].second != labeled[j].second) {
        cannot_link.emplace_back(labeled[i].first, labeled[j].first);
      }
    }
  }

  // Assignment order: labeled points grouped by class then index, then
  // the remaining points by index. Grouping keeps the greedy pass from
  // scattering one class across all clusters before another shows up.
  std::vector<char> is_labeled(static_cast<std::size_t>(n), 0);
  std::vector<int> groups(static_cast<std::size_t>(n), -1);
  std::vector<std::pair<int, Index>> lab_sorted;
  for (const auto& [pos, cls] : labeled) {
    if (pos < 0 || pos >= n) throw_precondition("labeled position out of range");
    is_labeled[static_cast<std::size_t>(pos)] = 1;
    groups[static_cast<std::size_t>(pos)] = cls;
    lab_sorted.emplace_back(cls, pos);
  }
  std::sort(lab_sorted.begin(), lab_sorted.end());
  std::vector<Index> order;
  order.reserve(static_cast<std::size_t>(n));
  for (const auto& [cls, pos] : lab_sorted) order.push_back(pos);
  for (Index i = 0; i < n; ++i) {
    if (!is_labeled[static_cast<std::size_t>(i)]) order.push_back(i);
  }

  ClusterModel base = constrained_kmeans(features, c0, cannot_link, rng,
                                         max_iter, &order, &groups);

  std::vector<int> labels = base.assignment;
  int k = c0;
  for (int split = 0; split < n_clu - c0; ++split) {
    // Pick the eligible cluster (>= 2 members) with the most confusing
    // samples; ties toward the lowest cluster id.
    int target = -1, worst = -1;
    for (int c = 0; c < k; ++c) {
      std::vector<int> preds;
      for (Index i = 0; i < n; ++i) {
        if (labels[static_cast<std::size_t>(i)] == c) {
          preds.push_back(model_preds[static_cast<std::size_t>(i)]);
        }
      }
      if (preds.size() < 2) continue;
      const int confusing = count_confusing(preds);
      if (confusing > worst) {
        worst = confusing;
        target = c;
      }
    }
    if (target < 0) throw_numeric("no splittable cluster remains");

    std::vector<Index> members;
    for (Index i = 0; i < n; ++i) {
      if (labels[static_cast<std::size_t>(i)] == target) members.push_back(i);
    }
    Eigen::MatrixXd sub(static_cast<Index>(members.size()), features.cols());
    for (std::size_t i = 0; i < members.size(); ++i) {
      sub.row(static_cast<Index>(i)) = features.row(members[i]);
    }
    ClusterModel two = kmeans(sub, 2, rng, max_iter);
    for (std::size_t i = 0; i < members.size(); ++i) {
      if (two.assignment[i] == 1) {
        labels[static_cast<std::size_t>(members[i])] = k;
      }
    }
    ++k;
  }

  return make_cpl(std::move(labels), n_clu, labeled, model_preds, num_classes);
}

CPL make_cpl(std::vector<int> labels, int n_clu,
             const std::vector<std::pair<Index, int>>& labeled,
             const std::vector<int>& model_preds, int num_classes) {
  const Index n = static_cast<Index>(labels.size());
  if (model_preds.size() != labels.size()) {
    throw_precondition("model predictions must cover every clustered point");
  }
  CPL cpl;
  cpl.labels = std::move(labels);
  cpl.n_clu = n_clu;
  cpl.covered.assign(static_cast<std::size_t>(n_clu), 0);
  cpl.pred_counts.assign(static_cast<std::size_t>(n_clu),
                         std::vector<int>(static_cast<std::size_t>(num_classes), 0));
  std::vector<std::vector<int>> true_counts(
      static_cast<std::size_t>(n_clu),
      std::vector<int>(static_cast<std::size_t>(num_classes), 0));
  for (Index i = 0; i < n; ++i) {
    const int c = cpl.labels[static_cast<std::size_t>(i)];
    if (c < 0 || c >= n_clu) throw_precondition("cluster id out of range");
    const int p = model_preds[static_cast<std::size_t>(i)];
    if (p >= 0 && p < num_classes) {
      ++cpl.pred_counts[static_cast<std::size_t>(c)][static_cast<std::size_t>(p)];
    }
  }
  for (const auto& [pos, cls] : labeled) {
    if (pos < 0 || pos >= n) throw_precondition("labeled position out of range");
    const int c = cpl.labels[static_cast<std::size_t>(pos)];
    cpl.covered[static_cast<std::size_t>(c)] = 1;
    if (cls >= 0 && cls < num_classes) {
      ++true_counts[static_cast<std::size_t>(c)][static_cast<std::size_t>(cls)];
    }
  }
  cpl.dominant.resize(static_cast<std::size_t>(n_clu));
  for (int c = 0; c < n_clu; ++c) {
    cpl.dominant[static_cast<std::size_t>(c)] =
        cpl.covered[static_cast<std::size_t>(c)]
            ? majority_lowest(true_counts[static_cast<std::size_t>(c)])
            : majority_lowest(cpl.pred_counts[static_cast<std::size_t>(c)]);
  }
  return cpl;
}

int cluster_schedule(Index total_labels, Index b0, Index c_max, int round,
                     ClusterCountRule rule, Index query_size) {
  if (total_labels < b0) {
    throw_precondition("total_labels must be at least the initial budget");
  }
  if (b0 < 1 || c_max < 1) throw_precondition("b0 and C_max must be >= 1");
  if (round == 0) return static_cast<int>(b0);
  const Index half =
      rule == ClusterCountRule::TotalLabelsHalf ? total_labels / 2 : query_size / 2;
  Index n = std::min(half, c_max);
  n = std::max(n, std::min(b0, c_max));  // non-decreasing across rounds
  return static_cast<int>(std::max<Index>(n, 1));
}

void save_cpl_csv(const CPL& cpl, const std::vector<std::int64_t>& sample_ids,
                  const std::string& path, const std::string& purity_path) {
  if (sample_ids.size() != cpl.labels.size()) {
    throw_precondition("sample id count mismatch");
  }
  std::ofstream os(path);
  if (!os) throw_data("cannot write CPL dump: " + path);
  os << "sample_id,cpl_class\n";
  for (std::size_t i = 0; i < cpl.labels.size(); ++i) {
    os << sample_ids[i] << ',' << cpl.labels[i] << '\n';
  }
  std::ofstream ps(purity_path);
  if (!ps) throw_data("cannot write CPL purity report: " + purity_path);
  ps << "cluster,size,covered,dominant,predicted_purity\n";
  for (int c = 0; c < cpl.n_clu; ++c) {
    const auto& counts = cpl.pred_counts[static_cast<std::size_t>(c)];
    const int size = std::accumulate(counts.begin(), counts.end(), 0);
    const int top = counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
    ps << c << ',' << size << ','
       << (cpl.covered[static_cast<std::size_t>(c)] ? 1 : 0) << ','
       << cpl.dominant[static_cast<std::size_t>(c)] << ','
       << (size > 0 ? static_cast<double>(top) / size : 0.0) << '\n';
  }
}

}  // namespace ntkcpl
