#include "ntkcpl/ntkcpl.h"

#include <cstring>
#include <string>

#include <json.hpp>

#include "core/harness.hpp"
#include "core/synthetic.hpp"

namespace {

thread_local std::string g_last_error;

ntkcpl_status to_status(const ntkcpl::Error& e) {
  switch (e.kind()) {
    case ntkcpl::ErrorKind::Config: return NTKCPL_CONFIG_ERROR;
    case ntkcpl::ErrorKind::Precondition: return NTKCPL_CONFIG_ERROR;
    case ntkcpl::ErrorKind::Data: return NTKCPL_DATA_ERROR;
    case ntkcpl::ErrorKind::Numeric: return NTKCPL_NUMERIC_ERROR;
  }
  return NTKCPL_ERROR;
}

template <typename Fn>
ntkcpl_status guarded(Fn&& fn) {
  try {
    fn();
    return NTKCPL_OK;
  } catch (const ntkcpl::Error& e) {
    g_last_error = e.what();
    return to_status(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return NTKCPL_ERROR;
  } catch (...) {
    g_last_error = "unknown failure";
    return NTKCPL_ERROR;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out != nullptr) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

struct ntkcpl_features {
  ntkcpl::FeatureSet fs;
};

struct ntkcpl_session {
  ntkcpl::Session session;
};

extern "C" {

const char* ntkcpl_version(void) { return "1.0.0"; }

const char* ntkcpl_last_error(void) { return g_last_error.c_str(); }

ntkcpl_status ntkcpl_features_load(const char* path, const char* format,
                                   ntkcpl_features** out) {
  return guarded([&] {
    if (path == nullptr || out == nullptr) {
      ntkcpl::throw_config("null argument");
    }
    const auto fmt =
        ntkcpl::parse_format(format != nullptr ? format : "binary");
    *out = new ntkcpl_features{ntkcpl::load_features(path, fmt)};
  });
}

ntkcpl_status ntkcpl_features_save(const ntkcpl_features* features,
                                   const char* path, const char* format) {
  return guarded([&] {
    if (features == nullptr || path == nullptr) {
      ntkcpl::throw_config("null argument");
    }
    const auto fmt =
        ntkcpl::parse_format(format != nullptr ? format : "binary");
    ntkcpl::save_features(features->fs, path, fmt);
  });
}

ntkcpl_status ntkcpl_features_info(const ntkcpl_features* features,
                                   uint32_t* n, uint32_t* dim,
                                   uint32_t* num_classes, int* has_labels) {
  return guarded([&] {
    if (features == nullptr) ntkcpl::throw_config("null handle");
    if (n != nullptr) *n = static_cast<uint32_t>(features->fs.size());
    if (dim != nullptr) *dim = static_cast<uint32_t>(features->fs.dim());
    if (num_classes != nullptr) {
      *num_classes = static_cast<uint32_t>(features->fs.num_classes);
    }
    if (has_labels != nullptr) {
      *has_labels = features->fs.has_labels() ? 1 : 0;
    }
  });
}

void ntkcpl_features_free(ntkcpl_features* features) { delete features; }

ntkcpl_status ntkcpl_features_synth(const char* params_json,
                                    ntkcpl_features** out) {
  return guarded([&] {
    if (out == nullptr) ntkcpl::throw_config("null argument");
    ntkcpl::MixtureSpec spec;
    if (params_json != nullptr && params_json[0] != '\0') {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(params_json);
      } catch (const std::exception& e) {
        ntkcpl::throw_config(std::string("bad synth params: ") + e.what());
      }
      spec.n = j.value("n", spec.n);
      spec.dim = j.value("dim", spec.dim);
      spec.classes = j.value("classes", spec.classes);
      spec.sigma = j.value("sigma", spec.sigma);
      spec.radius = j.value("radius", spec.radius);
      spec.center_seed = j.value("center_seed", spec.center_seed);
      spec.sample_seed = j.value("sample_seed", spec.sample_seed);
    }
    *out = new ntkcpl_features{ntkcpl::make_gaussian_mixture(spec)};
  });
}

ntkcpl_status ntkcpl_session_create(const ntkcpl_features* features,
                                    const char* config_json,
                                    ntkcpl_session** out) {
  return guarded([&] {
    if (features == nullptr || out == nullptr) {
      ntkcpl::throw_config("null argument");
    }
    auto cfg = ntkcpl::Session::parse_config(
        config_json != nullptr ? config_json : "");
    *out = new ntkcpl_session{
        ntkcpl::Session(features->fs, std::move(cfg))};
  });
}

ntkcpl_status ntkcpl_session_label(ntkcpl_session* session,
                                   const int64_t* ids, size_t count) {
  return guarded([&] {
    if (session == nullptr || (ids == nullptr && count > 0)) {
      ntkcpl::throw_config("null argument");
    }
    session->session.label(std::vector<int64_t>(ids, ids + count));
  });
}

ntkcpl_status ntkcpl_session_select(ntkcpl_session* session, size_t budget,
                                    int64_t* out_ids, size_t* out_count) {
  return guarded([&] {
    if (session == nullptr || out_ids == nullptr || out_count == nullptr) {
      ntkcpl::throw_config("null argument");
    }
    const auto picks =
        session->session.select(static_cast<ntkcpl::Index>(budget));
    *out_count = picks.size();
    std::memcpy(out_ids, picks.data(), picks.size() * sizeof(int64_t));
  });
}

ntkcpl_status ntkcpl_session_diagnose(ntkcpl_session* session,
                                      char** json_out) {
  return guarded([&] {
    if (session == nullptr || json_out == nullptr) {
      ntkcpl::throw_config("null argument");
    }
    *json_out = dup_string(session->session.diagnose_json());
    if (*json_out == nullptr) throw std::bad_alloc();
  });
}

ntkcpl_status ntkcpl_session_dump_gram(ntkcpl_session* session,
                                       const char* path) {
  return guarded([&] {
    if (session == nullptr || path == nullptr) {
      ntkcpl::throw_config("null argument");
    }
    session->session.dump_gram(path);
  });
}

ntkcpl_status ntkcpl_session_dump_cpl(ntkcpl_session* session,
                                      const char* csv_path,
                                      const char* purity_path) {
  return guarded([&] {
    if (session == nullptr || csv_path == nullptr || purity_path == nullptr) {
      ntkcpl::throw_config("null argument");
    }
    session->session.dump_cpl(csv_path, purity_path);
  });
}

void ntkcpl_session_free(ntkcpl_session* session) { delete session; }

ntkcpl_status ntkcpl_run_experiment(const char* config_json,
                                    const char* output_dir) {
  return guarded([&] {
    if (config_json == nullptr) ntkcpl::throw_config("null config");
    auto cfg = ntkcpl::parse_config_json(config_json);
    if (output_dir != nullptr && output_dir[0] != '\0') {
      cfg.output_dir = output_dir;
    }
    if (cfg.output_dir.empty()) {
      ntkcpl::throw_config("an output directory is required");
    }
    const auto records = ntkcpl::run_experiment(cfg);
    ntkcpl::write_metrics_csv(records, cfg.output_dir + "/metrics.csv");
    ntkcpl::emit_report(records, cfg.output_dir);
  });
}

ntkcpl_status ntkcpl_report(const char* const* records_csv_paths,
                            size_t count, const char* output_dir) {
  return guarded([&] {
    if (records_csv_paths == nullptr || count == 0 || output_dir == nullptr) {
      ntkcpl::throw_config("report needs records CSVs and an output dir");
    }
    std::vector<ntkcpl::MetricsRecord> records;
    for (size_t i = 0; i < count; ++i) {
      auto part = ntkcpl::read_metrics_csv(records_csv_paths[i]);
      records.insert(records.end(), part.begin(), part.end());
    }
    ntkcpl::emit_report(records, output_dir);
  });
}

void ntkcpl_string_free(char* s) { std::free(s); }

}  // extern "C"
