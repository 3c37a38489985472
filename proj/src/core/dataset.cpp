#include "dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace ntkcpl {

namespace {

constexpr char kMagic[4] = {'F', 'E', 'A', 'T'};

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f32(std::ostream& os, float v) {
  std::uint32_t u;
  std::memcpy(&u, &v, 4);
  write_u32(os, u);
}

float read_f32(std::istream& is) {
  std::uint32_t u = read_u32(is);
  float v;
  std::memcpy(&v, &u, 4);
  return v;
}

void validate_rows(const Eigen::MatrixXd& features) {
  for (Index i = 0; i < features.rows(); ++i) {
    for (Index j = 0; j < features.cols(); ++j) {
      if (!std::isfinite(features(i, j))) {
        throw_data("non-finite feature value at row " + std::to_string(i));
      }
    }
  }
}

void validate_labels(const std::vector<int>& labels, int num_classes) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw_data("label out of range [0," + std::to_string(num_classes) +
                 ") at row " + std::to_string(i));
    }
  }
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

FeatureSet load_binary(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw_data("cannot open feature file: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) {
    throw_data("bad magic in feature file (expected FEAT): " + path);
  }
  const std::uint32_t version = read_u32(is);
  if (version != 1) {
    throw_data("unsupported FEAT version " + std::to_string(version));
  }
  const std::uint32_t n = read_u32(is);
  const std::uint32_t d = read_u32(is);
  const std::uint32_t label_flag = read_u32(is);
  const std::uint32_t c = read_u32(is);
  if (!is || n == 0 || d == 0 || label_flag > 1) {
    throw_data("malformed FEAT header in " + path);
  }
  FeatureSet fs;
  fs.features.resize(static_cast<Index>(n), static_cast<Index>(d));
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j = 0; j < d; ++j) {
      fs.features(static_cast<Index>(i), static_cast<Index>(j)) =
          static_cast<double>(read_f32(is));
    }
  }
  if (label_flag == 1) {
    fs.true_labels.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) {
      fs.true_labels[i] = static_cast<int>(read_u32(is));
    }
    fs.num_classes = static_cast<int>(c);
  }
  if (!is) throw_data("truncated feature file: " + path);
  fs.ids.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) fs.ids[i] = i;
  validate_rows(fs.features);
  if (fs.has_labels()) validate_labels(fs.true_labels, fs.num_classes);
  return fs;
}

FeatureSet load_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw_data("cannot open feature file: " + path);
  std::string line;
  if (!std::getline(is, line)) throw_data("empty CSV file: " + path);
  auto header = split_csv_line(line);
  bool has_label = !header.empty() && header.back() == "label";
  const std::size_t d = header.size() - (has_label ? 1 : 0);
  if (d == 0) throw_data("CSV header declares no feature columns: " + path);

  std::vector<std::vector<float>> rows;
  std::vector<int> labels;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw_data("CSV row " + std::to_string(lineno) + " has " +
                 std::to_string(cells.size()) + " cells, expected " +
                 std::to_string(header.size()));
    }
    std::vector<float> row(d);
    for (std::size_t j = 0; j < d; ++j) {
      char* end = nullptr;
      row[j] = std::strtof(cells[j].c_str(), &end);
      if (end == cells[j].c_str() || *end != '\0') {
        throw_data("CSV row " + std::to_string(lineno) +
                   ": cannot parse feature value '" + cells[j] + "'");
      }
    }
    if (has_label) {
      char* end = nullptr;
      long lab = std::strtol(cells[d].c_str(), &end, 10);
      if (end == cells[d].c_str() || *end != '\0' || lab < 0) {
        throw_data("CSV row " + std::to_string(lineno) + ": bad label '" +
                   cells[d] + "'");
      }
      labels.push_back(static_cast<int>(lab));
    }
    rows.push_back(std::move(row));
    ++lineno;
  }
  if (rows.empty()) throw_data("CSV contains no data rows: " + path);

  FeatureSet fs;
  fs.features.resize(static_cast<Index>(rows.size()), static_cast<Index>(d));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      fs.features(static_cast<Index>(i), static_cast<Index>(j)) =
          static_cast<double>(rows[i][j]);
    }
  }
  if (has_label) {
    fs.true_labels = std::move(labels);
    fs.num_classes =
        1 + *std::max_element(fs.true_labels.begin(), fs.true_labels.end());
  }
  fs.ids.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    fs.ids[i] = static_cast<std::int64_t>(i);
  }
  validate_rows(fs.features);
  return fs;
}

void save_binary(const FeatureSet& fs, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw_data("cannot write feature file: " + path);
  os.write(kMagic, 4);
  write_u32(os, 1);
  write_u32(os, static_cast<std::uint32_t>(fs.size()));
  write_u32(os, static_cast<std::uint32_t>(fs.dim()));
  write_u32(os, fs.has_labels() ? 1u : 0u);
  write_u32(os, static_cast<std::uint32_t>(fs.num_classes));
  for (Index i = 0; i < fs.size(); ++i) {
    for (Index j = 0; j < fs.dim(); ++j) {
      write_f32(os, static_cast<float>(fs.features(i, j)));
    }
  }
  if (fs.has_labels()) {
    for (int lab : fs.true_labels) {
      write_u32(os, static_cast<std::uint32_t>(lab));
    }
  }
  if (!os) throw_data("write failed: " + path);
}

void save_csv(const FeatureSet& fs, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw_data("cannot write feature file: " + path);
  for (Index j = 0; j < fs.dim(); ++j) {
    if (j) os << ',';
    os << 'f' << j;
  }
  if (fs.has_labels()) os << ",label";
  os << '\n';
  char buf[32];
  for (Index i = 0; i < fs.size(); ++i) {
    for (Index j = 0; j < fs.dim(); ++j) {
      // %.9g round-trips any f32 exactly.
      std::snprintf(buf, sizeof(buf), "%.9g",
                    static_cast<double>(static_cast<float>(fs.features(i, j))));
      if (j) os << ',';
      os << buf;
    }
    if (fs.has_labels()) os << ',' << fs.true_labels[static_cast<size_t>(i)];
    os << '\n';
  }
  if (!os) throw_data("write failed: " + path);
}

}  // namespace

FileFormat parse_format(const std::string& name) {
  if (name == "binary") return FileFormat::Binary;
  if (name == "csv") return FileFormat::Csv;
  throw_config("unknown feature file format '" + name +
               "' (expected binary|csv)");
}

FeatureSet load_features(const std::string& path, FileFormat format) {
  return format == FileFormat::Binary ? load_binary(path) : load_csv(path);
}

void save_features(const FeatureSet& fs, const std::string& path,
                   FileFormat format) {
  if (format == FileFormat::Binary) {
    save_binary(fs, path);
  } else {
    save_csv(fs, path);
  }
}

ALState::ALState(Index n) : n_(n), mask_(static_cast<std::size_t>(n), 0) {
  if (n <= 0) throw_precondition("ALState requires a nonempty pool");
  unlabeled_.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) unlabeled_[static_cast<std::size_t>(i)] = i;
}

int ALState::label_of(Index i) const {
  for (std::size_t k = 0; k < labeled_.size(); ++k) {
    if (labeled_[k] == i) return labels_[k];
  }
  throw_precondition("index " + std::to_string(i) + " is not labeled");
}

const std::vector<Index>& ALState::sample_candidate_subset(
    Index size, std::mt19937_64& rng) {
  if (size < 1) throw_precondition("candidate size must be >= 1");
  if (unlabeled_.empty()) throw_precondition("unlabeled pool is empty");
  candidate_ = sample_without_replacement(unlabeled_, size, rng);
  return candidate_;
}

std::vector<int> ALState::query_oracle(const FeatureSet& oracle,
                                       const std::vector<Index>& indices) {
  if (!oracle.has_labels()) {
    throw_precondition("oracle FeatureSet carries no true labels");
  }
  std::vector<Index> seen;
  for (Index i : indices) {
    if (i < 0 || i >= n_) {
      throw_precondition("query index " + std::to_string(i) + " out of range");
    }
    if (mask_[static_cast<std::size_t>(i)] ||
        std::find(seen.begin(), seen.end(), i) != seen.end()) {
      throw_precondition("index " + std::to_string(i) + " already labeled");
    }
    seen.push_back(i);
  }
  std::vector<int> out;
  out.reserve(indices.size());
  for (Index i : indices) {
    const int lab = oracle.true_labels[static_cast<std::size_t>(i)];
    labeled_.push_back(i);
    labels_.push_back(lab);
    mask_[static_cast<std::size_t>(i)] = 1;
    out.push_back(lab);
  }
  auto drop = [&](std::vector<Index>& v) {
    v.erase(std::remove_if(v.begin(), v.end(),
                           [&](Index i) {
                             return mask_[static_cast<std::size_t>(i)] != 0;
                           }),
            v.end());
  };
  drop(unlabeled_);
  drop(candidate_);
  return out;
}

}  // namespace ntkcpl
