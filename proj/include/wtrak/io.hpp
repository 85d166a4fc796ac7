#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "wtrak/anomaly.hpp"
#include "wtrak/certification.hpp"
#include "wtrak/covariance.hpp"
#include "wtrak/feature_matrix.hpp"

namespace wtrak {

using Json = nlohmann::ordered_json;

// Binary feature file, little-endian throughout:
//   bytes 0..7   magic "WTRAKF01"
//   bytes 8..15  n (u64)
//   bytes 16..23 d (u64)
//   bytes 24..31 flags (u64; bit 0 = labels present)
//   n*d*8 bytes  row-major IEEE-754 doubles
//   n bytes      labels as {0,1} bytes, only when flagged
// Binary labels only; real-valued targets go through the CSV format.
inline constexpr char kFeatureMagic[8] = {'W', 'T', 'R', 'A',
                                          'K', 'F', '0', '1'};

namespace detail {

inline void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  require(is.good(), Errc::truncated_file, "header ends early");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline bool is_csv_path(const std::string& path) {
  return std::filesystem::path(path).extension() == ".csv";
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

inline double parse_double(const std::string& field) {
  const char* begin = field.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  require(end == begin + field.size() && !field.empty(), Errc::non_finite_value,
          "unparseable numeric field: '" + field + "'");
  require(std::isfinite(v), Errc::non_finite_value,
          "non-finite value in file: '" + field + "'");
  return v;
}

}  // namespace detail

inline void save_features_binary(const std::string& path,
                                 const FeatureMatrix& fm) {
  fm.validate();
  if (fm.has_labels())
    require(fm.labels_binary(), Errc::bad_labels,
            "binary format stores only {0,1} labels; use CSV for real targets");
  std::ofstream os(path, std::ios::binary);
  require(os.good(), Errc::io_error, "cannot open for writing: " + path);
  os.write(kFeatureMagic, 8);
  detail::put_u64(os, static_cast<std::uint64_t>(fm.n()));
  detail::put_u64(os, static_cast<std::uint64_t>(fm.d()));
  detail::put_u64(os, fm.has_labels() ? 1u : 0u);
  for (Index i = 0; i < fm.n(); ++i)
    for (Index j = 0; j < fm.d(); ++j) {
      const double v = fm.values(i, j);
      os.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
  if (fm.has_labels())
    for (Index i = 0; i < fm.n(); ++i) {
      const char b = (*fm.labels)[i] == 1.0 ? 1 : 0;
      os.write(&b, 1);
    }
  require(os.good(), Errc::io_error, "write failed: " + path);
}

inline void save_features_csv(const std::string& path, const FeatureMatrix& fm) {
  fm.validate();
  std::ofstream os(path);
  require(os.good(), Errc::io_error, "cannot open for writing: " + path);
  os << "id";
  for (Index j = 0; j < fm.d(); ++j) os << ",f" << j;
  if (fm.has_labels()) os << ",label";
  os << "\n";
  for (Index i = 0; i < fm.n(); ++i) {
    os << fm.ids[static_cast<std::size_t>(i)];
    for (Index j = 0; j < fm.d(); ++j)
      os << ',' << detail::format_double(fm.values(i, j));
    if (fm.has_labels()) os << ',' << detail::format_double((*fm.labels)[i]);
    os << "\n";
  }
  require(os.good(), Errc::io_error, "write failed: " + path);
}

inline void save_features(const std::string& path, const FeatureMatrix& fm) {
  detail::is_csv_path(path) ? save_features_csv(path, fm)
                            : save_features_binary(path, fm);
}

inline FeatureMatrix load_features_binary(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(is.good(), Errc::io_error, "cannot open: " + path);
  char magic[8];
  is.read(magic, 8);
  require(is.good(), Errc::truncated_file, "file shorter than header");
  require(std::memcmp(magic, kFeatureMagic, 8) == 0, Errc::bad_magic,
          "not a feature file (bad magic): " + path);
  const std::uint64_t n = detail::get_u64(is);
  const std::uint64_t d = detail::get_u64(is);
  const std::uint64_t flags = detail::get_u64(is);
  require(n >= 1 && d >= 1, Errc::bad_spec, "empty feature file");

  FeatureMatrix fm;
  fm.values = Matrix(static_cast<Index>(n), static_cast<Index>(d));
  for (std::uint64_t i = 0; i < n; ++i)
    for (std::uint64_t j = 0; j < d; ++j) {
      double v;
      is.read(reinterpret_cast<char*>(&v), sizeof v);
      require(is.good(), Errc::truncated_file, "payload ends early");
      require(std::isfinite(v), Errc::non_finite_value,
              "non-finite value in payload");
      fm.values(static_cast<Index>(i), static_cast<Index>(j)) = v;
    }
  if (flags & 1u) {
    Vector labels(static_cast<Index>(n));
    for (std::uint64_t i = 0; i < n; ++i) {
      char b;
      is.read(&b, 1);
      require(is.good(), Errc::truncated_file, "label block ends early");
      require(b == 0 || b == 1, Errc::bad_labels,
              "label bytes must be 0 or 1");
      labels[static_cast<Index>(i)] = b;
    }
    fm.labels = std::move(labels);
  }
  is.peek();
  require(is.eof(), Errc::truncated_file, "trailing bytes after payload");
  fm.ids = default_ids(fm.values.rows());
  fm.validate();
  return fm;
}

inline FeatureMatrix load_features_csv(const std::string& path) {
  std::ifstream is(path);
  require(is.good(), Errc::io_error, "cannot open: " + path);
  std::string line;
  require(static_cast<bool>(std::getline(is, line)), Errc::truncated_file,
          "missing CSV header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_csv_line(line);
  require(header.size() >= 2 && header[0] == "id", Errc::bad_spec,
          "CSV header must start with 'id' and name at least one feature");
  const bool has_labels = header.back() == "label";
  const std::size_t d = header.size() - 1 - (has_labels ? 1 : 0);
  require(d >= 1, Errc::bad_spec, "CSV names no feature columns");

  std::vector<std::string> ids;
  std::vector<double> flat;
  std::vector<double> labels;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    require(fields.size() == header.size(), Errc::truncated_file,
            "row has " + std::to_string(fields.size()) + " fields, expected " +
                std::to_string(header.size()));
    ids.push_back(fields[0]);
    for (std::size_t j = 0; j < d; ++j)
      flat.push_back(detail::parse_double(fields[1 + j]));
    if (has_labels) labels.push_back(detail::parse_double(fields.back()));
  }
  require(!ids.empty(), Errc::bad_spec, "CSV contains no data rows");

  FeatureMatrix fm;
  const Index n = static_cast<Index>(ids.size());
  fm.values = Matrix(n, static_cast<Index>(d));
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < static_cast<Index>(d); ++j)
      fm.values(i, j) = flat[static_cast<std::size_t>(i) * d +
                             static_cast<std::size_t>(j)];
  fm.ids = std::move(ids);
  if (has_labels) {
    Vector y(n);
    for (Index i = 0; i < n; ++i) y[i] = labels[static_cast<std::size_t>(i)];
    fm.labels = std::move(y);
  }
  fm.validate();
  return fm;
}

inline FeatureMatrix load_features(const std::string& path) {
  return detail::is_csv_path(path) ? load_features_csv(path)
                                   : load_features_binary(path);
}

// ---- report serialization ------------------------------------------------

inline Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Json spectrum_to_json(const SpectrumReport& r, Json config) {
  Json j;
  j["config"] = std::move(config);
  j["condition_number"] = r.condition_number;
  j["raw_min_eigenvalue"] = r.raw_min_eigenvalue;
  j["reduction_prediction"] = r.reduction_prediction;
  j["eigenvalues"] = r.eigenvalues;
  j["euclidean_amplification"] = r.euclidean_amplification;
  j["natural_amplification"] = r.natural_amplification;
  return j;
}

inline Json frontier_to_json(const CertificationReport& r, Json config) {
  Json j;
  j["config"] = std::move(config);
  j["grid"] = r.epsilon_grid;
  Json series = Json::array();
  for (const auto& s : r.series) {
    Json e;
    e["metric"] = metric_name(s.metric);
    e["fractions"] = s.fractions;
    e["lipschitz"] = Json{{"max", s.l_max}, {"mean", s.l_mean}};
    series.push_back(std::move(e));
  }
  j["series"] = std::move(series);
  Json summary;
  summary["pair_count"] = r.pair_count;
  summary["pairs_per_test"] = r.pairs_per_test;
  summary["sampled"] = r.sampled;
  if (r.reduction_ratio) summary["reduction_ratio"] = *r.reduction_ratio;
  j["summary"] = std::move(summary);
  return j;
}

inline Json comparison_to_json(const ComparisonTable& t) {
  Json j;
  j["l_nat"] = Json{{"max", t.l_nat_max}, {"mean", t.l_nat_mean}};
  j["l_euc"] = Json{{"max", t.l_euc_max}, {"mean", t.l_euc_mean}};
  j["reduction_ratio"] = t.reduction_ratio;
  j["reduction_prediction"] = t.reduction_prediction;
  j["agreement_factor"] = t.agreement_factor;
  j["reference_epsilon"] = t.reference_epsilon;
  j["certified_at_reference"] = Json{{"natural", t.certified_natural},
                                     {"euclidean", t.certified_euclidean}};
  return j;
}

inline Json anomaly_to_json(const AnomalyReport& r, Json config) {
  Json j;
  j["config"] = std::move(config);
  j["auroc"] = r.auroc;
  j["average_precision"] = r.average_precision;
  Json topk;
  for (const auto& [frac, rec] : r.topk_recall) {
    char key[16];
    std::snprintf(key, sizeof key, "%g", frac);
    topk[key] = rec;
  }
  j["topk_recall"] = std::move(topk);
  j["mean_separation"] = r.mean_separation;
  j["corruption_rate"] = r.corruption_rate;
  j["n"] = r.n;
  j["flip_count"] = r.flip_count;
  j["tie_policy"] = r.tie_policy;
  return j;
}

inline void write_text_file(const std::string& path, const std::string& body) {
  std::ofstream os(path, std::ios::binary);  // binary: byte-stable output
  require(os.good(), Errc::io_error, "cannot open for writing: " + path);
  os << body;
  require(os.good(), Errc::io_error, "write failed: " + path);
}

inline void write_json_file(const std::string& path, const Json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

inline void write_spectrum_csv(const std::string& path,
                               const SpectrumReport& r) {
  std::string body = "k,eigenvalue,euclidean_amplification,natural_amplification\n";
  for (std::size_t k = 0; k < r.eigenvalues.size(); ++k) {
    body += std::to_string(k + 1);
    body += ',';
    body += detail::format_double(r.eigenvalues[k]);
    body += ',';
    body += detail::format_double(r.euclidean_amplification[k]);
    body += ',';
    body += detail::format_double(r.natural_amplification[k]);
    body += '\n';
  }
  write_text_file(path, body);
}

inline void write_frontier_csv(const std::string& path,
                               const CertificationReport& r) {
  const auto* nat = r.find(Metric::natural);
  const auto* euc = r.find(Metric::euclidean);
  std::string body = "epsilon";
  if (nat) body += ",natural_frac";
  if (euc) body += ",euclidean_frac";
  body += '\n';
  for (std::size_t g = 0; g < r.epsilon_grid.size(); ++g) {
    body += detail::format_double(r.epsilon_grid[g]);
    if (nat) {
      body += ',';
      body += detail::format_double(nat->fractions[g]);
    }
    if (euc) {
      body += ',';
      body += detail::format_double(euc->fractions[g]);
    }
    body += '\n';
  }
  write_text_file(path, body);
}

inline void write_curve_csv(const std::string& path, const std::string& header,
                            const std::vector<CurvePoint>& pts) {
  std::string body = header + "\n";
  for (const auto& p : pts) {
    body += detail::format_double(p.x);
    body += ',';
    body += detail::format_double(p.y);
    body += '\n';
  }
  write_text_file(path, body);
}

}  // namespace wtrak
