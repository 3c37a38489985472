// Command-line front end over the ntkcpl shared-library C API.
//
// Subcommands: synth, ingest, run, select, diagnose, report.
// Exit codes: 0 success, 2 config error, 3 data error, 4 numerical-rank
// error, 1 anything else.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ntkcpl/ntkcpl.h"

namespace {

using nlohmann::json;

int fail(ntkcpl_status status) {
  std::cerr << "error: " << ntkcpl_last_error() << '\n';
  return static_cast<int>(status);
}

std::vector<int64_t> parse_id_list(const std::string& spec) {
  std::vector<int64_t> ids;
  std::string text = spec;
  if (!text.empty() && text[0] == '@') {
    std::ifstream is(text.substr(1));
    if (!is) {
      throw CLI::ValidationError("--labeled", "cannot open id file");
    }
    std::stringstream ss;
    ss << is.rdbuf();
    text = ss.str();
  }
  std::string cur;
  for (char c : text + ",") {
    if (c == ',' || c == '\n' || c == ' ' || c == '\t' || c == '\r') {
      if (!cur.empty()) {
        ids.push_back(std::stoll(cur));
        cur.clear();
      }
    } else {
      cur += c;
    }
  }
  return ids;
}

struct SessionOpts {
  std::string features_path;
  std::string format = "binary";
  std::string strategy = "ntkcpl";
  std::string feature_source = "self_supervised";
  std::string labeled;
  int64_t candidate_size = 10000;
  int64_t initial_budget = 8;
  int64_t c_max = 64;
  int64_t hidden_width = 64;
  uint64_t seed = 0;
  double ridge = -1.0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--features", features_path, "feature pool file")
        ->required();
    cmd->add_option("--format", format, "binary|csv");
    cmd->add_option("--strategy", strategy,
                    "random|entropy|coreset|badge|lookahead|ntkcpl");
    cmd->add_option("--feature-source", feature_source,
                    "self_supervised|active_learning");
    cmd->add_option("--labeled", labeled,
                    "comma-separated labeled sample ids, or @file");
    cmd->add_option("--candidate-size", candidate_size, "candidate subset size");
    cmd->add_option("--initial-budget", initial_budget, "b0");
    cmd->add_option("--c-max", c_max, "maximum cluster count");
    cmd->add_option("--hidden-width", hidden_width, "classifier hidden width");
    cmd->add_option("--seed", seed, "random seed");
    cmd->add_option("--ridge", ridge, "kernel ridge (<0 = scale-aware default)");
  }

  std::string config_json() const {
    json j;
    j["strategy"] = {{"name", strategy}, {"feature_source", feature_source}};
    j["candidate_size"] = candidate_size;
    j["initial_budget"] = initial_budget;
    j["c_max"] = c_max;
    j["train"] = {{"hidden_width", hidden_width}};
    j["ntk"] = {{"ridge", ridge}};
    j["seed"] = seed;
    return j.dump();
  }
};

struct SessionHandle {
  ntkcpl_features* features = nullptr;
  ntkcpl_session* session = nullptr;
  ~SessionHandle() {
    ntkcpl_session_free(session);
    ntkcpl_features_free(features);
  }
};

ntkcpl_status open_session(const SessionOpts& opts, SessionHandle& h) {
  ntkcpl_status st = ntkcpl_features_load(opts.features_path.c_str(),
                                          opts.format.c_str(), &h.features);
  if (st != NTKCPL_OK) return st;
  st = ntkcpl_session_create(h.features, opts.config_json().c_str(),
                             &h.session);
  if (st != NTKCPL_OK) return st;
  if (!opts.labeled.empty()) {
    const auto ids = parse_id_list(opts.labeled);
    st = ntkcpl_session_label(h.session, ids.data(), ids.size());
  }
  return st;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NTKCPL active-learning engine"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a Gaussian-mixture pool");
  std::string synth_out, synth_format = "binary";
  int64_t synth_n = 2000, synth_dim = 16, synth_classes = 8;
  double synth_sigma = 1.0, synth_radius = 4.0;
  uint64_t synth_center_seed = 1, synth_sample_seed = 2;
  synth->add_option("--out", synth_out, "output feature file")->required();
  synth->add_option("--format", synth_format, "binary|csv");
  synth->add_option("--n", synth_n, "sample count");
  synth->add_option("--dim", synth_dim, "feature dimension");
  synth->add_option("--classes", synth_classes, "class count");
  synth->add_option("--sigma", synth_sigma, "within-class noise");
  synth->add_option("--radius", synth_radius, "class center norm");
  synth->add_option("--center-seed", synth_center_seed,
                    "seed for the class centers");
  synth->add_option("--sample-seed", synth_sample_seed,
                    "seed for sample noise and shuffling");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "convert feature files");
  std::string ingest_in, ingest_in_format = "csv";
  std::string ingest_out, ingest_out_format = "binary";
  ingest->add_option("--in", ingest_in, "input file")->required();
  ingest->add_option("--in-format", ingest_in_format, "binary|csv");
  ingest->add_option("--out", ingest_out, "output file")->required();
  ingest->add_option("--out-format", ingest_out_format, "binary|csv");

  // run
  auto* run = app.add_subcommand("run", "run an experiment config");
  std::string run_config, run_outdir;
  run->add_option("--config", run_config, "experiment config JSON")->required();
  run->add_option("--output-dir", run_outdir, "override the output directory");

  // select
  auto* select = app.add_subcommand("select", "one-shot sample selection");
  SessionOpts select_opts;
  select_opts.attach(select);
  int64_t select_budget = 1;
  std::string select_out;
  select->add_option("--budget", select_budget, "samples to select")
      ->required();
  select->add_option("--out", select_out, "output CSV (default stdout)");

  // diagnose
  auto* diagnose =
      app.add_subcommand("diagnose", "error decomposition and coverage");
  SessionOpts diag_opts;
  diag_opts.attach(diagnose);
  std::string diag_out, diag_gram, diag_cpl, diag_cpl_purity;
  diagnose->add_option("--out", diag_out, "output JSON (default stdout)");
  diagnose->add_option("--dump-gram", diag_gram, "write the NTK gram dump");
  diagnose->add_option("--dump-cpl", diag_cpl, "write the CPL assignment CSV");
  diagnose->add_option("--dump-cpl-purity", diag_cpl_purity,
                       "write the CPL purity report CSV");

  // report
  auto* report = app.add_subcommand("report", "aggregate records CSVs");
  std::vector<std::string> report_inputs;
  std::string report_outdir;
  report->add_option("--output-dir", report_outdir, "output directory")
      ->required();
  report->add_option("records", report_inputs, "records CSV files")
      ->required();

  CLI11_PARSE(app, argc, argv);

  if (synth->parsed()) {
    json params = {{"n", synth_n},          {"dim", synth_dim},
                   {"classes", synth_classes}, {"sigma", synth_sigma},
                   {"radius", synth_radius},   {"center_seed", synth_center_seed},
                   {"sample_seed", synth_sample_seed}};
    ntkcpl_features* fs = nullptr;
    ntkcpl_status st = ntkcpl_features_synth(params.dump().c_str(), &fs);
    if (st != NTKCPL_OK) return fail(st);
    st = ntkcpl_features_save(fs, synth_out.c_str(), synth_format.c_str());
    ntkcpl_features_free(fs);
    if (st != NTKCPL_OK) return fail(st);
    std::cout << "wrote " << synth_out << '\n';
    return 0;
  }

  if (ingest->parsed()) {
    ntkcpl_features* fs = nullptr;
    ntkcpl_status st = ntkcpl_features_load(ingest_in.c_str(),
                                            ingest_in_format.c_str(), &fs);
    if (st != NTKCPL_OK) return fail(st);
    uint32_t n = 0, d = 0, c = 0;
    int has_labels = 0;
    ntkcpl_features_info(fs, &n, &d, &c, &has_labels);
    st = ntkcpl_features_save(fs, ingest_out.c_str(),
                              ingest_out_format.c_str());
    ntkcpl_features_free(fs);
    if (st != NTKCPL_OK) return fail(st);
    std::cout << "wrote " << ingest_out << " (" << n << " samples, " << d
              << " dims" << (has_labels ? ", labeled" : "") << ")\n";
    return 0;
  }

  if (run->parsed()) {
    std::ifstream is(run_config);
    if (!is) {
      std::cerr << "error: cannot open config " << run_config << '\n';
      return 2;
    }
    std::stringstream ss;
    ss << is.rdbuf();
    const ntkcpl_status st = ntkcpl_run_experiment(
        ss.str().c_str(), run_outdir.empty() ? nullptr : run_outdir.c_str());
    if (st != NTKCPL_OK) return fail(st);
    std::cout << "run complete\n";
    return 0;
  }

  if (select->parsed()) {
    SessionHandle h;
    ntkcpl_status st = open_session(select_opts, h);
    if (st != NTKCPL_OK) return fail(st);
    std::vector<int64_t> ids(static_cast<size_t>(select_budget));
    size_t count = 0;
    st = ntkcpl_session_select(h.session, static_cast<size_t>(select_budget),
                               ids.data(), &count);
    if (st != NTKCPL_OK) return fail(st);
    std::ostringstream csv;
    csv << "round,step,sample_id,strategy\n";
    for (size_t i = 0; i < count; ++i) {
      csv << 0 << ',' << i << ',' << ids[i] << ',' << select_opts.strategy
          << '\n';
    }
    if (select_out.empty()) {
      std::cout << csv.str();
    } else {
      std::ofstream os(select_out);
      os << csv.str();
    }
    return 0;
  }

  if (diagnose->parsed()) {
    SessionHandle h;
    ntkcpl_status st = open_session(diag_opts, h);
    if (st != NTKCPL_OK) return fail(st);
    char* doc = nullptr;
    st = ntkcpl_session_diagnose(h.session, &doc);
    if (st != NTKCPL_OK) return fail(st);
    if (diag_out.empty()) {
      std::cout << doc << '\n';
    } else {
      std::ofstream os(diag_out);
      os << doc << '\n';
    }
    ntkcpl_string_free(doc);
    if (!diag_gram.empty()) {
      st = ntkcpl_session_dump_gram(h.session, diag_gram.c_str());
      if (st != NTKCPL_OK) return fail(st);
    }
    if (!diag_cpl.empty()) {
      const std::string purity =
          diag_cpl_purity.empty() ? diag_cpl + ".purity.csv" : diag_cpl_purity;
      st = ntkcpl_session_dump_cpl(h.session, diag_cpl.c_str(), purity.c_str());
      if (st != NTKCPL_OK) return fail(st);
    }
    return 0;
  }

  if (report->parsed()) {
    std::vector<const char*> paths;
    paths.reserve(report_inputs.size());
    for (const auto& p : report_inputs) paths.push_back(p.c_str());
    const ntkcpl_status st =
        ntkcpl_report(paths.data(), paths.size(), report_outdir.c_str());
    if (st != NTKCPL_OK) return fail(st);
    std::cout << "report written to " << report_outdir << '\n';
    return 0;
  }

  return 0;
}
