#include "harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace ntkcpl {

namespace {

using nlohmann::json;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_time_field(const json& j) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "inf" || s == "infinity") return kTimeInfinity;
    throw_config("ntk.time must be a number or \"inf\"");
  }
  return j.get<double>();
}

TrainConfig parse_train(const json& j) {
  TrainConfig t;
  t.learning_rate = j.value("learning_rate", t.learning_rate);
  t.momentum = j.value("momentum", t.momentum);
  t.weight_decay = j.value("weight_decay", t.weight_decay);
  t.batch_size = j.value("batch_size", t.batch_size);
  t.epochs = j.value("epochs", t.epochs);
  t.use_batchnorm = j.value("use_batchnorm", false);
  const std::string loss = j.value("loss", std::string("cross_entropy"));
  if (loss == "cross_entropy") {
    t.loss = LossKind::CrossEntropy;
  } else if (loss == "mse") {
    t.loss = LossKind::Mse;
  } else {
    throw_config("unknown loss '" + loss + "'");
  }
  return t;
}

StrategySpec parse_strategy(const json& j) {
  StrategySpec s;
  s.name = strategy_from_string(j.value("name", std::string("random")));
  s.feature_source = feature_source_from_string(
      j.value("feature_source", std::string("self_supervised")));
  return s;
}

NtkOptions parse_ntk(const json& j) {
  NtkOptions n;
  n.ridge = j.value("ridge", -1.0);
  if (j.contains("time")) n.time = parse_time_field(j.at("time"));
  n.zero_output_init = j.value("zero_output_init", true);
  n.kernel_width = j.value("kernel_width", Index{0});
  return n;
}

ClusterCountRule parse_cluster_rule(const std::string& s) {
  if (s == "total_labels_half") return ClusterCountRule::TotalLabelsHalf;
  if (s == "query_half") return ClusterCountRule::QueryHalf;
  throw_config("unknown cluster_count_rule '" + s + "'");
}

// Per-round, per-purpose seed streams derived from the run seed.
enum SeedPurpose : std::uint64_t {
  kSeedCandidate = 1,
  kSeedInitKmeans = 2,
  kSeedKernelInit = 3,
  kSeedCpl = 4,
  kSeedTrain = 5,
  kSeedStrategy = 6,
};

std::uint64_t round_seed(std::uint64_t run_seed, int round,
                         SeedPurpose purpose) {
  return mix_seed(run_seed, static_cast<std::uint64_t>(round),
                  static_cast<std::uint64_t>(purpose));
}

Eigen::MatrixXd rows_of(const Eigen::MatrixXd& x,
                        const std::vector<Index>& rows) {
  Eigen::MatrixXd out(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Index>(i)) = x.row(rows[i]);
  }
  return out;
}

// Kernel system, CPL and bookkeeping for one active-learning round.
struct RoundContext {
  std::vector<Index> points;  // sample indices: candidates, then labeled
  std::vector<Index> labeled_positions;
  Eigen::MatrixXd x_points;   // self-supervised features of the points
  KernelSystem sys;
  CPL cpl;
  int n_clu = 0;
};

struct EngineConfig {
  StrategySpec strategy;
  Index initial_budget = 0;
  Index c_max = 1;
  ClusterCountRule cluster_rule = ClusterCountRule::TotalLabelsHalf;
  int fixed_cluster_count = 0;
  TrainConfig train;
  Index hidden_width = 64;
  NtkOptions ntk;
};

// The slice of ALState a round context needs; lets diagnostics rebuild a
// context from the pre-query candidate subset and the post-query L.
struct PoolView {
  std::vector<Index> candidates;
  std::vector<Index> labeled;  // sample indices, label order
  std::vector<int> labels;
};

PoolView pool_view(const ALState& state) {
  return {state.candidate(), state.labeled(), state.labels()};
}

int resolve_n_clu(const EngineConfig& cfg, Index total_labels, int round,
                  Index query_size, Index point_count, int labeled_classes) {
  int n_clu;
  if (cfg.fixed_cluster_count > 0) {
    n_clu = cfg.fixed_cluster_count;
  } else {
    const Index b0 = std::min(cfg.initial_budget, total_labels);
    n_clu = cluster_schedule(total_labels, std::max<Index>(b0, 1), cfg.c_max,
                             round, cfg.cluster_rule, query_size);
  }
  // Cannot-link feasibility needs one cluster per labeled class.
  n_clu = std::max(n_clu, labeled_classes);
  n_clu = static_cast<int>(std::min<Index>(n_clu, point_count));
  return std::max(n_clu, 1);
}

// Builds the round's kernel system over candidates + L and, for rounds
// past the first, the CPL via constrained clustering and splitting.
// Candidates that are already labeled (a rebuilt post-query context) are
// dropped from the point list's candidate block but remain pool points
// through their labeled entry.
RoundContext build_round_context(const FeatureSet& fs, const PoolView& view,
                                 const MLPParams& prev_clf,
                                 const EngineConfig& cfg, int round,
                                 Index query_size, std::uint64_t run_seed,
                                 bool with_cpl) {
  RoundContext ctx;
  for (Index s : view.candidates) {
    if (std::find(view.labeled.begin(), view.labeled.end(), s) ==
        view.labeled.end()) {
      ctx.points.push_back(s);
    }
  }
  const Index n_free = static_cast<Index>(ctx.points.size());
  for (Index s : view.labeled) ctx.points.push_back(s);
  ctx.labeled_positions.resize(view.labeled.size());
  for (std::size_t i = 0; i < view.labeled.size(); ++i) {
    ctx.labeled_positions[i] = n_free + static_cast<Index>(i);
  }
  ctx.x_points = rows_of(fs.features, ctx.points);

  // Pool = the candidate subset (labeled candidates stay pool points).
  std::vector<Index> pool;
  for (Index s : view.candidates) {
    const auto it = std::find(ctx.points.begin(), ctx.points.end(), s);
    pool.push_back(static_cast<Index>(it - ctx.points.begin()));
  }

  if (with_cpl) {
    const auto preds = predict_classes(prev_clf, ctx.x_points);
    std::vector<int> distinct = view.labels;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()),
                   distinct.end());
    const int labeled_classes = static_cast<int>(distinct.size());
    ctx.n_clu = resolve_n_clu(cfg, static_cast<Index>(view.labeled.size()),
                              round, query_size,
                              static_cast<Index>(ctx.points.size()),
                              labeled_classes);
    Eigen::MatrixXd f_src =
        cfg.strategy.feature_source == FeatureSource::ActiveLearning
            ? penultimate(prev_clf, ctx.x_points)
            : ctx.x_points;
    const int c0 = static_cast<int>(
        std::min<Index>(std::max<Index>(cfg.initial_budget, 1), ctx.n_clu));
    std::vector<std::pair<Index, int>> labeled_pairs;
    for (std::size_t i = 0; i < view.labeled.size(); ++i) {
      labeled_pairs.emplace_back(ctx.labeled_positions[i], view.labels[i]);
    }
    auto rng_cpl = make_rng(round_seed(run_seed, round, kSeedCpl));
    ctx.cpl = generate_cpl(f_src, preds, c0, ctx.n_clu, labeled_pairs,
                           fs.num_classes, rng_cpl);
  }

  auto rng_kernel = make_rng(round_seed(run_seed, round, kSeedKernelInit));
  const Index kwidth =
      cfg.ntk.kernel_width > 0 ? cfg.ntk.kernel_width : cfg.hidden_width;
  MLPParams params0 =
      init_mlp(fs.dim(), kwidth, fs.num_classes,
               InitScheme::NtkParameterization, cfg.ntk.zero_output_init,
               rng_kernel);
  Eigen::MatrixXd gram = mlp_scalar_ntk_gram(params0, ctx.x_points);
  const double ridge =
      cfg.ntk.ridge >= 0.0 ? cfg.ntk.ridge : default_ridge(gram);
  ctx.sys = build_system(std::move(gram), forward(params0, ctx.x_points),
                         ridge, cfg.ntk.time);
  ctx.sys.pool = std::move(pool);
  set_labeled(ctx.sys, ctx.labeled_positions);
  return ctx;
}

// Nearest unchosen candidate to each centroid, clusters in ascending id
// order, ties toward the lowest sample index.
std::vector<Index> kmeans_representatives(const Eigen::MatrixXd& x_cand,
                                          const ClusterModel& km,
                                          const std::vector<Index>& cand) {
  std::vector<Index> reps;
  std::vector<char> used(cand.size(), 0);
  for (int c = 0; c < km.k; ++c) {
    Index best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < x_cand.rows(); ++i) {
      if (used[static_cast<std::size_t>(i)]) continue;
      const double d = (x_cand.row(i) - km.centroids.row(c)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    if (best < 0) throw_numeric("fewer candidates than centroids");
    used[static_cast<std::size_t>(best)] = 1;
    reps.push_back(cand[static_cast<std::size_t>(best)]);
  }
  return reps;
}

struct RoundDiagnostics {
  double pool_risk = 0.0;
  double estimated_coverage = 0.0;
  double true_coverage = 0.0;
  double agreement_rate = 0.0;
  ErrorDecomposition dec;
};

// Diagnostics over the candidate pool with the round's CPL and the
// post-query labeled set; `clf` is the classifier trained this round.
RoundDiagnostics diagnose_round(const RoundContext& ctx, const ALState& state,
                                const MLPParams& clf, const FeatureSet& fs) {
  RoundDiagnostics diag;
  const auto& sys = ctx.sys;

  std::vector<int> cpl_of_labeled;
  for (Index p : sys.labeled) {
    cpl_of_labeled.push_back(ctx.cpl.labels[static_cast<std::size_t>(p)]);
  }
  PoolRegression reg_cpl(sys, one_hot(cpl_of_labeled, ctx.cpl.n_clu));

  std::vector<int> pool_cpl, pool_true;
  for (Index p : sys.pool) {
    pool_cpl.push_back(ctx.cpl.labels[static_cast<std::size_t>(p)]);
    const Index sample = ctx.points[static_cast<std::size_t>(p)];
    pool_true.push_back(fs.true_labels[static_cast<std::size_t>(sample)]);
  }
  diag.pool_risk = reg_cpl.risk(pool_cpl);
  diag.estimated_coverage = 1.0 - diag.pool_risk;

  diag.dec = decompose_error(reg_cpl.predictions(), pool_true, pool_cpl,
                             ctx.cpl.dominant, fs.num_classes);

  std::vector<int> true_of_labeled;
  for (Index p : sys.labeled) {
    const Index sample = ctx.points[static_cast<std::size_t>(p)];
    true_of_labeled.push_back(fs.true_labels[static_cast<std::size_t>(sample)]);
  }
  PoolRegression reg_true(sys, one_hot(true_of_labeled, fs.num_classes));
  diag.agreement_rate = argmax_agreement_rate(
      reg_true.predictions(), reg_cpl.predictions(), ctx.cpl.dominant);

  Eigen::MatrixXd x_pool(static_cast<Index>(sys.pool.size()),
                         fs.features.cols());
  for (std::size_t i = 0; i < sys.pool.size(); ++i) {
    x_pool.row(static_cast<Index>(i)) =
        fs.features.row(ctx.points[static_cast<std::size_t>(sys.pool[i])]);
  }
  const auto clf_preds = predict_classes(clf, x_pool);
  Index hits = 0;
  for (std::size_t i = 0; i < clf_preds.size(); ++i) {
    if (clf_preds[i] == pool_true[i]) ++hits;
  }
  diag.true_coverage =
      static_cast<double>(hits) / static_cast<double>(clf_preds.size());
  (void)state;
  return diag;
}

json diagnostics_to_json(const RoundDiagnostics& diag, int round,
                         Index total_labels, int n_clu) {
  json j;
  j["round"] = round;
  j["total_labels"] = total_labels;
  j["n_clu"] = n_clu;
  j["pool_risk"] = diag.pool_risk;
  j["estimated_coverage"] = diag.estimated_coverage;
  j["true_coverage"] = diag.true_coverage;
  j["argmax_agreement_rate"] = diag.agreement_rate;
  j["p_nff"] = diag.dec.p_nff;
  j["p_fnf"] = diag.dec.p_fnf;
  j["error_cpl"] = diag.dec.error_cpl;
  j["impurity_share"] = diag.dec.impurity_share;
  j["overclustering_share"] = diag.dec.overclustering_share;
  j["n_nff"] = diag.dec.n_nff;
  j["n_fnf"] = diag.dec.n_fnf;
  j["n_pool"] = diag.dec.n_pool;
  return j;
}

MLPParams train_round_classifier(const FeatureSet& fs, const ALState& state,
                                 const EngineConfig& cfg, int round,
                                 std::uint64_t run_seed) {
  auto rng = make_rng(round_seed(run_seed, round, kSeedTrain));
  MLPParams params = init_mlp(fs.dim(), cfg.hidden_width, fs.num_classes,
                              InitScheme::Standard, false, rng);
  TrainConfig tc = cfg.train;
  tc.seed = round_seed(run_seed, round, kSeedTrain) ^ 0x5a5a5a5aULL;
  return train_classifier(std::move(params), rows_of(fs.features, state.labeled()),
                          state.labels(), tc);
}

std::vector<Index> run_selection(const EngineConfig& cfg, const ALState& state,
                                 Index b, const RoundContext& ctx,
                                 const MLPParams& prev_clf,
                                 const FeatureSet& fs, int round,
                                 std::uint64_t run_seed) {
  auto rng = make_rng(round_seed(run_seed, round, kSeedStrategy));
  switch (cfg.strategy.name) {
    case StrategyName::Random:
      return select_random(state, b, rng);
    case StrategyName::Entropy:
      return select_entropy(state, b, prev_clf, fs.features);
    case StrategyName::Coreset: {
      if (cfg.strategy.feature_source == FeatureSource::ActiveLearning) {
        return select_coreset(state, b, penultimate(prev_clf, fs.features));
      }
      return select_coreset(state, b, fs.features);
    }
    case StrategyName::Badge:
      return select_badge(state, b, prev_clf, fs.features, rng);
    case StrategyName::Lookahead:
      return select_lookahead(state, b, ctx.sys, ctx.points,
                              one_hot(state.labels(), fs.num_classes));
    case StrategyName::Ntkcpl:
      return select_ntkcpl(state, b, ctx.sys, ctx.points, ctx.cpl);
  }
  throw_config("unhandled strategy");
}

}  // namespace

void ExperimentConfig::validate() const {
  if (train_path.empty()) throw_config("dataset.train path is required");
  if (test_path.empty()) throw_config("dataset.test path is required");
  if (schedule.empty()) throw_config("schedule must be nonempty");
  for (Index b : schedule) {
    if (b < 1) throw_config("schedule entries must be >= 1");
  }
  if (initial_budget < 1) throw_config("initial_budget must be >= 1");
  if (seeds.empty()) throw_config("seeds must be nonempty");
  if (candidate_size < 1) throw_config("candidate_size must be >= 1");
  if (candidate_size < initial_budget) {
    throw_config("candidate_size must be at least the initial budget");
  }
  if (c_max < 1) throw_config("c_max must be >= 1");
  if (hidden_width < 1) throw_config("hidden_width must be >= 1");
  if (fixed_cluster_count < 0) {
    throw_config("fixed_cluster_count must be >= 0");
  }
  if (train.learning_rate <= 0) throw_config("learning_rate must be > 0");
  if (train.epochs < 1) throw_config("epochs must be >= 1");
  if (train.batch_size < 1) throw_config("batch_size must be >= 1");
  if (ntk.ridge >= 0 && !(ntk.ridge >= 0)) throw_config("bad ridge");
  if (!(ntk.time > 0) && !std::isinf(ntk.time)) {
    if (ntk.time != 0) throw_config("ntk.time must be >= 0 or inf");
  }
}

ExperimentConfig parse_config_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const std::exception& e) {
    throw_config(std::string("config is not valid JSON: ") + e.what());
  }
  try {
    ExperimentConfig cfg;
    const auto& ds = j.at("dataset");
    cfg.train_path = ds.at("train").get<std::string>();
    cfg.test_path = ds.at("test").get<std::string>();
    cfg.format = parse_format(ds.value("format", std::string("binary")));
    if (j.contains("strategy")) cfg.strategy = parse_strategy(j.at("strategy"));
    cfg.schedule = j.at("schedule").get<std::vector<Index>>();
    cfg.initial_budget = j.at("initial_budget").get<Index>();
    cfg.c_max = j.value("c_max", Index{100});
    cfg.candidate_size = j.value("candidate_size", Index{10000});
    cfg.cluster_rule = parse_cluster_rule(
        j.value("cluster_count_rule", std::string("total_labels_half")));
    cfg.fixed_cluster_count = j.value("fixed_cluster_count", 0);
    if (j.contains("train")) {
      cfg.train = parse_train(j.at("train"));
      cfg.hidden_width = j.at("train").value("hidden_width", Index{64});
    }
    if (j.contains("ntk")) cfg.ntk = parse_ntk(j.at("ntk"));
    cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    cfg.output_dir = j.value("output_dir", std::string());
    cfg.write_artifacts = j.value("write_artifacts", true);
    cfg.validate();
    return cfg;
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw_config(std::string("bad config: ") + e.what());
  }
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw_config("cannot open config file: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config_json(ss.str());
}

std::string metrics_csv_header() {
  return "seed,round,total_labels,strategy,test_accuracy,estimated_coverage,"
         "true_coverage,p_nff,p_fnf,wallclock_select_seconds";
}

void write_metrics_csv(const std::vector<MetricsRecord>& records,
                       const std::string& path) {
  std::ofstream os(path);
  if (!os) throw_data("cannot write metrics CSV: " + path);
  os << metrics_csv_header() << '\n';
  for (const auto& r : records) {
    os << r.seed << ',' << r.round << ',' << r.total_labels << ','
       << r.strategy << ',' << fmt_double(r.test_accuracy) << ','
       << fmt_double(r.estimated_coverage) << ','
       << fmt_double(r.true_coverage) << ',' << fmt_double(r.p_nff) << ','
       << fmt_double(r.p_fnf) << ','
       << fmt_double(r.wallclock_select_seconds) << '\n';
  }
  if (!os) throw_data("write failed: " + path);
}

std::vector<MetricsRecord> read_metrics_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw_data("cannot open metrics CSV: " + path);
  std::string line;
  if (!std::getline(is, line)) throw_data("empty metrics CSV: " + path);
  std::vector<MetricsRecord> records;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 10) {
      throw_data("malformed metrics CSV row: " + line);
    }
    MetricsRecord r;
    r.seed = std::stoull(cells[0]);
    r.round = std::stoi(cells[1]);
    r.total_labels = std::stoll(cells[2]);
    r.strategy = cells[3];
    r.test_accuracy = std::stod(cells[4]);
    r.estimated_coverage = std::stod(cells[5]);
    r.true_coverage = std::stod(cells[6]);
    r.p_nff = std::stod(cells[7]);
    r.p_fnf = std::stod(cells[8]);
    r.wallclock_select_seconds = std::stod(cells[9]);
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<MetricsRecord> run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const FeatureSet train = load_features(cfg.train_path, cfg.format);
  const FeatureSet test = load_features(cfg.test_path, cfg.format);
  if (!train.has_labels()) {
    throw_data("training features carry no oracle labels");
  }
  if (!test.has_labels()) throw_data("test features carry no labels");

  EngineConfig ecfg{cfg.strategy,  cfg.initial_budget, cfg.c_max,
                    cfg.cluster_rule, cfg.fixed_cluster_count,
                    cfg.train,     cfg.hidden_width,   cfg.ntk};
  const std::string strategy_name = strategy_to_string(cfg.strategy.name);

  const bool artifacts = cfg.write_artifacts && !cfg.output_dir.empty();
  if (artifacts) std::filesystem::create_directories(cfg.output_dir);

  std::vector<MetricsRecord> records;
  for (std::uint64_t seed : cfg.seeds) {
    ALState state(train.size());
    MLPParams clf;
    json diag_doc = json::array();
    std::ofstream sel_os;
    if (artifacts) {
      sel_os.open(cfg.output_dir + "/selections_" + strategy_name + "_seed" +
                  std::to_string(seed) + ".csv");
      sel_os << "round,step,sample_id,strategy\n";
    }

    const int total_rounds = static_cast<int>(cfg.schedule.size());
    for (int round = 0; round <= total_rounds; ++round) {
      if (state.unlabeled().empty()) {
        std::cerr << "warning: unlabeled pool exhausted at round " << round
                  << "; truncating run\n";
        break;
      }
      Index b = round == 0 ? cfg.initial_budget
                           : cfg.schedule[static_cast<std::size_t>(round - 1)];
      if (b > static_cast<Index>(state.unlabeled().size())) {
        std::cerr << "warning: budget " << b << " exceeds unlabeled pool ("
                  << state.unlabeled().size() << "); truncating\n";
        b = static_cast<Index>(state.unlabeled().size());
      }

      auto rng_cand = make_rng(round_seed(seed, round, kSeedCandidate));
      state.sample_candidate_subset(cfg.candidate_size, rng_cand);

      std::vector<Index> picks;
      RoundContext ctx;
      const auto t0 = std::chrono::steady_clock::now();
      if (round == 0) {
        auto rng_init = make_rng(round_seed(seed, round, kSeedInitKmeans));
        const Eigen::MatrixXd x_cand = rows_of(train.features, state.candidate());
        ClusterModel km =
            kmeans(x_cand, static_cast<int>(b), rng_init);
        picks = kmeans_representatives(x_cand, km, state.candidate());
        const auto t1 = std::chrono::steady_clock::now();

        // Round-0 context: the initial clusters are the CPL.
        const auto candidates = state.candidate();
        state.query_oracle(train, picks);
        clf = train_round_classifier(train, state, ecfg, round, seed);

        ctx.points = candidates;
        ctx.x_points = x_cand;
        ctx.n_clu = km.k;
        std::vector<std::pair<Index, int>> labeled_pairs;
        ctx.labeled_positions.clear();
        for (std::size_t i = 0; i < state.labeled().size(); ++i) {
          const Index sample = state.labeled()[i];
          const auto it =
              std::find(ctx.points.begin(), ctx.points.end(), sample);
          const Index pos = static_cast<Index>(it - ctx.points.begin());
          ctx.labeled_positions.push_back(pos);
          labeled_pairs.emplace_back(pos, state.labels()[i]);
        }
        ctx.cpl = make_cpl(km.assignment, km.k, labeled_pairs,
                           predict_classes(clf, ctx.x_points),
                           train.num_classes);
        auto rng_kernel = make_rng(round_seed(seed, round, kSeedKernelInit));
        const Index kwidth = ecfg.ntk.kernel_width > 0 ? ecfg.ntk.kernel_width
                                                       : ecfg.hidden_width;
        MLPParams params0 = init_mlp(
            train.dim(), kwidth, train.num_classes,
            InitScheme::NtkParameterization, ecfg.ntk.zero_output_init,
            rng_kernel);
        Eigen::MatrixXd gram = mlp_scalar_ntk_gram(params0, ctx.x_points);
        const double ridge =
            ecfg.ntk.ridge >= 0.0 ? ecfg.ntk.ridge : default_ridge(gram);
        ctx.sys = build_system(std::move(gram),
                               forward(params0, ctx.x_points), ridge,
                               ecfg.ntk.time);
        ctx.sys.pool.resize(ctx.points.size());
        for (std::size_t i = 0; i < ctx.points.size(); ++i) {
          ctx.sys.pool[i] = static_cast<Index>(i);
        }
        set_labeled(ctx.sys, ctx.labeled_positions);

        MetricsRecord rec;
        rec.wallclock_select_seconds =
            std::chrono::duration<double>(t1 - t0).count();
        rec.seed = seed;
        rec.round = round;
        rec.total_labels = static_cast<Index>(state.labeled().size());
        rec.strategy = strategy_name;
        rec.test_accuracy = evaluate_accuracy(clf, test.features, test.true_labels);
        const auto diag = diagnose_round(ctx, state, clf, train);
        rec.estimated_coverage = diag.estimated_coverage;
        rec.true_coverage = diag.true_coverage;
        rec.p_nff = diag.dec.p_nff;
        rec.p_fnf = diag.dec.p_fnf;
        records.push_back(rec);
        diag_doc.push_back(diagnostics_to_json(diag, round, rec.total_labels,
                                               ctx.n_clu));
        if (artifacts) {
          append_selection_csv(sel_os, round, picks, train.ids, strategy_name);
        }
        continue;
      }

      // Rounds past the first.
      const MLPParams prev_clf = clf;
      ctx = build_round_context(train, pool_view(state), prev_clf, ecfg,
                                round, b, seed, /*with_cpl=*/true);
      const auto t1 = std::chrono::steady_clock::now();
      picks = run_selection(ecfg, state, b, ctx, prev_clf, train, round, seed);
      const auto t2 = std::chrono::steady_clock::now();

      const std::vector<Index> pre_candidates = state.candidate();
      state.query_oracle(train, picks);
      clf = train_round_classifier(train, state, ecfg, round, seed);

      // Fold the new labels into the kernel system for diagnostics. Picks
      // outside the candidate subset (possible for the random strategy,
      // which draws from all of U) are not gram points, so the round
      // context is rebuilt over candidates plus the updated L instead.
      const bool in_points = std::all_of(
          picks.begin(), picks.end(), [&](Index s) {
            return std::find(ctx.points.begin(), ctx.points.end(), s) !=
                   ctx.points.end();
          });
      if (in_points) {
        for (Index s : picks) {
          const auto it = std::find(ctx.points.begin(), ctx.points.end(), s);
          extend_labeled(ctx.sys, static_cast<Index>(it - ctx.points.begin()));
        }
      } else {
        PoolView rebuilt{pre_candidates, state.labeled(), state.labels()};
        ctx = build_round_context(train, rebuilt, prev_clf, ecfg, round, b,
                                  seed, /*with_cpl=*/true);
      }

      MetricsRecord rec;
      rec.seed = seed;
      rec.round = round;
      rec.total_labels = static_cast<Index>(state.labeled().size());
      rec.strategy = strategy_name;
      rec.test_accuracy =
          evaluate_accuracy(clf, test.features, test.true_labels);
      rec.wallclock_select_seconds =
          std::chrono::duration<double>(t2 - t1).count();
      const auto diag = diagnose_round(ctx, state, clf, train);
      rec.estimated_coverage = diag.estimated_coverage;
      rec.true_coverage = diag.true_coverage;
      rec.p_nff = diag.dec.p_nff;
      rec.p_fnf = diag.dec.p_fnf;
      records.push_back(rec);
      diag_doc.push_back(
          diagnostics_to_json(diag, round, rec.total_labels, ctx.n_clu));
      if (artifacts) {
        append_selection_csv(sel_os, round, picks, train.ids, strategy_name);
      }
    }

    if (artifacts) {
      std::ofstream ds(cfg.output_dir + "/diagnostics_" + strategy_name +
                       "_seed" + std::to_string(seed) + ".json");
      ds << diag_doc.dump(2) << '\n';
      save_params(clf, cfg.output_dir + "/model_" + strategy_name + "_seed" +
                           std::to_string(seed) + ".bin");
    }
  }
  return records;
}

void emit_report(const std::vector<MetricsRecord>& records,
                 const std::string& output_dir) {
  if (records.empty()) throw_precondition("no records to report");
  std::filesystem::create_directories(output_dir);
  write_metrics_csv(records, output_dir + "/records.csv");

  // strategy -> budget -> accuracies
  std::map<std::string, std::map<Index, std::vector<double>>> table;
  for (const auto& r : records) {
    table[r.strategy][r.total_labels].push_back(r.test_accuracy);
  }

  auto mean_of = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  auto std_of = [&](const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
  };

  json summary;
  for (const auto& [strategy, budgets] : table) {
    json rows = json::array();
    std::ofstream plot(output_dir + "/plot_" + strategy + ".csv");
    plot << "total_labels,mean,std\n";
    for (const auto& [budget, accs] : budgets) {
      const double m = mean_of(accs);
      const double s = std_of(accs);
      rows.push_back({{"total_labels", budget},
                      {"mean", m},
                      {"std", s},
                      {"runs", accs.size()}});
      plot << budget << ',' << fmt_double(m) << ',' << fmt_double(s) << '\n';
    }
    summary[strategy] = rows;
  }
  {
    std::ofstream os(output_dir + "/summary.json");
    os << summary.dump(2) << '\n';
  }

  // Effective budget ratio against the random baseline when present.
  std::ofstream ratio(output_dir + "/effective_budget_ratio.csv");
  ratio << "strategy,effective_budget_ratio\n";
  const auto base_it = table.find("random");
  if (base_it != table.end()) {
    for (const auto& [strategy, budgets] : table) {
      if (strategy == "random") continue;
      std::vector<double> sm, bm, bs;
      for (const auto& [budget, accs] : budgets) {
        const auto bit = base_it->second.find(budget);
        if (bit == base_it->second.end()) continue;
        sm.push_back(mean_of(accs));
        bm.push_back(mean_of(bit->second));
        bs.push_back(std_of(bit->second));
      }
      if (sm.empty()) continue;
      ratio << strategy << ','
            << fmt_double(effective_budget_ratio(sm, bm, bs)) << '\n';
    }
  }
}

Session::Session(FeatureSet features, Config cfg)
    : features_(std::move(features)), cfg_(std::move(cfg)),
      state_(features_.size()) {
  if (!features_.has_labels()) {
    throw_data("session features carry no oracle labels");
  }
}

Session::Config Session::parse_config(const std::string& json_text) {
  json j;
  try {
    j = json_text.empty() ? json::object() : json::parse(json_text);
  } catch (const std::exception& e) {
    throw_config(std::string("session config is not valid JSON: ") + e.what());
  }
  Config cfg;
  if (j.contains("strategy")) cfg.strategy = parse_strategy(j.at("strategy"));
  cfg.candidate_size = j.value("candidate_size", Index{10000});
  cfg.initial_budget = j.value("initial_budget", Index{8});
  cfg.c_max = j.value("c_max", Index{64});
  cfg.cluster_rule = parse_cluster_rule(
      j.value("cluster_count_rule", std::string("total_labels_half")));
  cfg.fixed_cluster_count = j.value("fixed_cluster_count", 0);
  if (j.contains("train")) {
    cfg.train = parse_train(j.at("train"));
    cfg.hidden_width = j.at("train").value("hidden_width", Index{64});
  }
  if (j.contains("ntk")) cfg.ntk = parse_ntk(j.at("ntk"));
  cfg.seed = j.value("seed", std::uint64_t{0});
  return cfg;
}

void Session::label(const std::vector<std::int64_t>& ids) {
  std::vector<Index> rows;
  rows.reserve(ids.size());
  for (std::int64_t id : ids) {
    if (id < 0 || id >= static_cast<std::int64_t>(features_.size())) {
      throw_precondition("unknown sample id " + std::to_string(id));
    }
    rows.push_back(static_cast<Index>(id));
  }
  state_.query_oracle(features_, rows);
}

std::vector<std::int64_t> Session::select(Index budget) {
  if (budget < 1) throw_precondition("budget must be >= 1");
  EngineConfig ecfg{cfg_.strategy,  cfg_.initial_budget, cfg_.c_max,
                    cfg_.cluster_rule, cfg_.fixed_cluster_count,
                    cfg_.train,    cfg_.hidden_width,   cfg_.ntk};
  const int round = round_;
  auto rng_cand = make_rng(round_seed(cfg_.seed, round, kSeedCandidate));
  state_.sample_candidate_subset(cfg_.candidate_size, rng_cand);

  std::vector<Index> picks;
  const bool needs_model = cfg_.strategy.name != StrategyName::Random &&
                           cfg_.strategy.name != StrategyName::Coreset;
  if (state_.labeled().empty() && needs_model) {
    // Initial-round rule: representatives of b clusters on the features.
    auto rng_init = make_rng(round_seed(cfg_.seed, round, kSeedInitKmeans));
    const Eigen::MatrixXd x_cand =
        rows_of(features_.features, state_.candidate());
    ClusterModel km = kmeans(x_cand, static_cast<int>(budget), rng_init);
    picks = kmeans_representatives(x_cand, km, state_.candidate());
  } else if (state_.labeled().empty() &&
             cfg_.strategy.name == StrategyName::Random) {
    auto rng = make_rng(round_seed(cfg_.seed, round, kSeedStrategy));
    picks = select_random(state_, budget, rng);
  } else if (state_.labeled().empty()) {
    picks = select_coreset(state_, budget, features_.features);
  } else {
    const MLPParams clf = train_round_classifier(
        features_, state_, ecfg, std::max(round, 1), cfg_.seed);
    const bool needs_kernel =
        cfg_.strategy.name == StrategyName::Lookahead ||
        cfg_.strategy.name == StrategyName::Ntkcpl;
    RoundContext ctx;
    if (needs_kernel) {
      ctx = build_round_context(
          features_, pool_view(state_), clf, ecfg, std::max(round, 1), budget,
          cfg_.seed,
          /*with_cpl=*/cfg_.strategy.name == StrategyName::Ntkcpl);
    }
    picks = run_selection(ecfg, state_, budget, ctx, clf, features_,
                          std::max(round, 1), cfg_.seed);
  }
  ++round_;
  std::vector<std::int64_t> out;
  out.reserve(picks.size());
  for (Index p : picks) {
    out.push_back(features_.ids[static_cast<std::size_t>(p)]);
  }
  return out;
}

std::string Session::diagnose_json() {
  if (state_.labeled().empty()) {
    throw_precondition("diagnosis requires labeled samples");
  }
  EngineConfig ecfg{cfg_.strategy,  cfg_.initial_budget, cfg_.c_max,
                    cfg_.cluster_rule, cfg_.fixed_cluster_count,
                    cfg_.train,    cfg_.hidden_width,   cfg_.ntk};
  const int round = std::max(round_, 1);
  auto rng_cand = make_rng(round_seed(cfg_.seed, round, kSeedCandidate));
  state_.sample_candidate_subset(cfg_.candidate_size, rng_cand);
  const MLPParams clf =
      train_round_classifier(features_, state_, ecfg, round, cfg_.seed);
  RoundContext ctx =
      build_round_context(features_, pool_view(state_), clf, ecfg, round, 0,
                          cfg_.seed, /*with_cpl=*/true);
  const auto diag = diagnose_round(ctx, state_, clf, features_);
  json j = diagnostics_to_json(
      diag, round, static_cast<Index>(state_.labeled().size()), ctx.n_clu);
  return j.dump(2);
}

void Session::dump_gram(const std::string& path) {
  if (state_.labeled().empty()) {
    throw_precondition("gram dump requires labeled samples");
  }
  EngineConfig ecfg{cfg_.strategy,  cfg_.initial_budget, cfg_.c_max,
                    cfg_.cluster_rule, cfg_.fixed_cluster_count,
                    cfg_.train,    cfg_.hidden_width,   cfg_.ntk};
  const int round = std::max(round_, 1);
  auto rng_cand = make_rng(round_seed(cfg_.seed, round, kSeedCandidate));
  state_.sample_candidate_subset(cfg_.candidate_size, rng_cand);
  const MLPParams clf =
      train_round_classifier(features_, state_, ecfg, round, cfg_.seed);
  RoundContext ctx =
      build_round_context(features_, pool_view(state_), clf, ecfg, round, 0,
                          cfg_.seed, /*with_cpl=*/false);
  save_gram(ctx.sys.gram, path);
}

void Session::dump_cpl(const std::string& csv_path,
                       const std::string& purity_path) {
  if (state_.labeled().empty()) {
    throw_precondition("CPL dump requires labeled samples");
  }
  EngineConfig ecfg{cfg_.strategy,  cfg_.initial_budget, cfg_.c_max,
                    cfg_.cluster_rule, cfg_.fixed_cluster_count,
                    cfg_.train,    cfg_.hidden_width,   cfg_.ntk};
  const int round = std::max(round_, 1);
  auto rng_cand = make_rng(round_seed(cfg_.seed, round, kSeedCandidate));
  state_.sample_candidate_subset(cfg_.candidate_size, rng_cand);
  const MLPParams clf =
      train_round_classifier(features_, state_, ecfg, round, cfg_.seed);
  RoundContext ctx =
      build_round_context(features_, pool_view(state_), clf, ecfg, round, 0,
                          cfg_.seed, /*with_cpl=*/true);
  std::vector<std::int64_t> ids;
  ids.reserve(ctx.points.size());
  for (Index p : ctx.points) {
    ids.push_back(features_.ids[static_cast<std::size_t>(p)]);
  }
  save_cpl_csv(ctx.cpl, ids, csv_path, purity_path);
}

}  // namespace ntkcpl
