#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "core/harness.hpp"
#include "core/synthetic.hpp"

using namespace ntkcpl;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) {
    path = fs::temp_directory_path() / name;
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str(const std::string& leaf = "") const {
    return leaf.empty() ? path.string() : (path / leaf).string();
  }
};

// Small mixture written to disk for config-driven runs.
void write_benchmark(const TempDir& dir, Index n_train, Index n_test) {
  MixtureSpec spec;
  spec.n = n_train;
  spec.dim = 6;
  spec.classes = 3;
  spec.sigma = 0.7;
  spec.radius = 3.5;
  spec.center_seed = 101;
  spec.sample_seed = 102;
  save_features(make_gaussian_mixture(spec), dir.str("train.feat"),
                FileFormat::Binary);
  spec.n = n_test;
  spec.sample_seed = 103;
  save_features(make_gaussian_mixture(spec), dir.str("test.feat"),
                FileFormat::Binary);
}

std::string base_config(const TempDir& dir, const std::string& strategy,
                        const std::string& extra = "") {
  std::ostringstream os;
  os << R"({
    "dataset": {"train": ")"
     << dir.str("train.feat") << R"(", "test": ")" << dir.str("test.feat")
     << R"(", "format": "binary"},
    "strategy": {"name": ")"
     << strategy << R"(", "feature_source": "active_learning"},
    "schedule": [5, 5],
    "initial_budget": 5,
    "c_max": 8,
    "candidate_size": 120,
    "train": {"learning_rate": 0.2, "momentum": 0.9, "weight_decay": 0.0003,
              "batch_size": 50, "epochs": 30, "hidden_width": 16},
    "ntk": {"zero_output_init": true},
    "seeds": [11, 12])"
     << extra << "\n}";
  return os.str();
}

std::string strip_wallclock(const std::string& csv) {
  std::istringstream is(csv);
  std::ostringstream os;
  std::string line;
  while (std::getline(is, line)) {
    const auto pos = line.rfind(',');
    os << line.substr(0, pos) << '\n';
  }
  return os.str();
}

std::string slurp(const std::string& path) {
  std::ifstream is(path);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config parsing validates and errors with the config kind") {
  CHECK_THROWS_AS(parse_config_json("not json"), Error);
  try {
    parse_config_json("{}");
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
  }
  try {
    parse_config_json(R"({"dataset": {"train": "a", "test": "b"},
                          "schedule": [], "initial_budget": 5,
                          "seeds": [1]})");
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("schedule") != std::string::npos);
  }
}

TEST_CASE("two-round two-seed run produces the expected record ledger") {
  TempDir dir("ntkcpl_harness_a");
  write_benchmark(dir, 150, 80);
  auto cfg = parse_config_json(base_config(dir, "random"));
  cfg.write_artifacts = false;
  const auto records = run_experiment(cfg);
  // One initial + two scheduled rounds per seed.
  CHECK(records.size() == 6);
  Index prev = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (i % 3 == 0) prev = 0;
    CHECK(records[i].total_labels > prev);
    prev = records[i].total_labels;
    CHECK(records[i].strategy == "random");
  }
  CHECK(records[2].total_labels == 15);
}

TEST_CASE("identical configs give identical CSV bytes modulo wallclock") {
  TempDir dir("ntkcpl_harness_b");
  write_benchmark(dir, 150, 80);
  auto cfg = parse_config_json(base_config(dir, "ntkcpl"));
  cfg.write_artifacts = false;
  const auto rec1 = run_experiment(cfg);
  const auto rec2 = run_experiment(cfg);
  write_metrics_csv(rec1, dir.str("m1.csv"));
  write_metrics_csv(rec2, dir.str("m2.csv"));
  CHECK(strip_wallclock(slurp(dir.str("m1.csv"))) ==
        strip_wallclock(slurp(dir.str("m2.csv"))));
}

TEST_CASE("metrics CSV round-trips through the reader") {
  TempDir dir("ntkcpl_harness_c");
  std::vector<MetricsRecord> records(1);
  records[0].seed = 4;
  records[0].round = 2;
  records[0].total_labels = 15;
  records[0].strategy = "entropy";
  records[0].test_accuracy = 0.625;
  records[0].estimated_coverage = 0.5;
  records[0].true_coverage = 0.375;
  records[0].p_nff = 0.125;
  records[0].p_fnf = 0.0625;
  records[0].wallclock_select_seconds = 0.25;
  write_metrics_csv(records, dir.str("m.csv"));
  const auto back = read_metrics_csv(dir.str("m.csv"));
  REQUIRE(back.size() == 1);
  CHECK(back[0].seed == 4);
  CHECK(back[0].strategy == "entropy");
  CHECK(back[0].test_accuracy == 0.625);
  CHECK(back[0].p_fnf == 0.0625);

  const std::string raw = slurp(dir.str("m.csv"));
  CHECK(raw.find(metrics_csv_header()) == 0);
  CHECK(std::count(raw.begin(), raw.end(), '\n') == 2);  // header + 1 row
}

TEST_CASE("report emits summary, plots and the ratio table") {
  TempDir dir("ntkcpl_harness_d");
  std::vector<MetricsRecord> records;
  for (int seed = 0; seed < 5; ++seed) {
    for (const std::string strat : {"random", "ntkcpl"}) {
      MetricsRecord r;
      r.seed = static_cast<std::uint64_t>(seed);
      r.round = 1;
      r.total_labels = 10;
      r.strategy = strat;
      r.test_accuracy = 0.5 + 0.01 * seed;  // identical curves
      records.push_back(r);
    }
  }
  emit_report(records, dir.str());
  CHECK(fs::exists(dir.str("records.csv")));
  CHECK(fs::exists(dir.str("summary.json")));
  CHECK(fs::exists(dir.str("plot_random.csv")));
  CHECK(fs::exists(dir.str("plot_ntkcpl.csv")));

  const std::string summary = slurp(dir.str("summary.json"));
  // Mean of 0.50..0.54 is 0.52.
  CHECK(summary.find("0.52") != std::string::npos);

  const std::string ratio = slurp(dir.str("effective_budget_ratio.csv"));
  CHECK(ratio.find("ntkcpl,0") != std::string::npos);  // identical -> 0.0
}

TEST_CASE("summary statistics are recomputable from the raw records") {
  TempDir dir("ntkcpl_harness_e");
  write_benchmark(dir, 120, 60);
  auto cfg = parse_config_json(base_config(dir, "entropy"));
  cfg.write_artifacts = false;
  const auto records = run_experiment(cfg);
  emit_report(records, dir.str());
  const auto back = read_metrics_csv(dir.str("records.csv"));
  REQUIRE(back.size() == records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(back[i].test_accuracy == records[i].test_accuracy);
    CHECK(back[i].estimated_coverage == records[i].estimated_coverage);
  }
}

TEST_CASE("budget exhaustion truncates with the labels it could get") {
  TempDir dir("ntkcpl_harness_f");
  write_benchmark(dir, 18, 30);  // pool smaller than the plan
  std::string cfg_text = base_config(dir, "random");
  cfg_text.replace(cfg_text.find("[5, 5]"), 6, "[10, 10]");
  auto cfg = parse_config_json(cfg_text);
  cfg.candidate_size = 18;
  cfg.write_artifacts = false;
  const auto records = run_experiment(cfg);
  // Per seed: round0 5 labels, round1 10, round2 truncated to 3.
  REQUIRE(records.size() == 6);
  CHECK(records[2].total_labels == 18);
}

TEST_CASE("session selects, labels and diagnoses through the same engine") {
  MixtureSpec spec;
  spec.n = 160;
  spec.dim = 6;
  spec.classes = 3;
  spec.sigma = 0.7;
  spec.radius = 3.5;
  spec.center_seed = 7;
  spec.sample_seed = 8;
  auto fs = make_gaussian_mixture(spec);

  Session::Config cfg = Session::parse_config(R"({
    "strategy": {"name": "ntkcpl", "feature_source": "active_learning"},
    "candidate_size": 100,
    "initial_budget": 6,
    "c_max": 8,
    "train": {"epochs": 20, "learning_rate": 0.2, "hidden_width": 16},
    "seed": 5
  })");
  Session session(fs, cfg);

  const auto first = session.select(6);
  CHECK(first.size() == 6);
  session.label(first);
  CHECK(session.state().labeled().size() == 6);

  const auto second = session.select(4);
  CHECK(second.size() == 4);
  for (std::int64_t id : second) {
    CHECK_FALSE(session.state().is_labeled(static_cast<Index>(id)));
  }
  session.label(second);

  const std::string diag = session.diagnose_json();
  CHECK(diag.find("estimated_coverage") != std::string::npos);
  CHECK(diag.find("p_nff") != std::string::npos);
  CHECK(diag.find("argmax_agreement_rate") != std::string::npos);
}

TEST_CASE("session rejects diagnosis without labels") {
  MixtureSpec spec;
  spec.n = 50;
  spec.dim = 4;
  spec.classes = 2;
  spec.center_seed = 9;
  spec.sample_seed = 10;
  auto fs = make_gaussian_mixture(spec);
  Session session(fs, Session::parse_config(""));
  CHECK_THROWS_AS(session.diagnose_json(), Error);
}
