#pragma once

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "preqmdl/errors.hpp"

namespace preqmdl {

/// n x D value matrix (row-major) with optional n x D intervention mask.
struct Dataset {
  std::vector<std::string> names;
  std::size_t num_rows = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> mask;  // empty, or 1 where the cell was set by an intervention

  Dataset() = default;
  Dataset(std::vector<std::string> column_names, std::size_t rows)
      : names(std::move(column_names)), num_rows(rows), values(rows * names.size(), 0.0) {}

  int num_nodes() const { return static_cast<int>(names.size()); }
  bool has_mask() const { return !mask.empty(); }

  double& at(std::size_t row, int col) { return values[row * names.size() + static_cast<std::size_t>(col)]; }
  double at(std::size_t row, int col) const { return values[row * names.size() + static_cast<std::size_t>(col)]; }

  bool masked(std::size_t row, int col) const {
    return has_mask() && mask[row * names.size() + static_cast<std::size_t>(col)] != 0;
  }
  void set_masked(std::size_t row, int col, bool on) {
    if (!has_mask()) mask.assign(values.size(), 0);
    mask[row * names.size() + static_cast<std::size_t>(col)] = on ? 1 : 0;
  }

  std::vector<double> column(int col) const {
    std::vector<double> out(num_rows);
    for (std::size_t i = 0; i < num_rows; ++i) out[i] = at(i, col);
    return out;
  }

  /// Per-row skip flags for one node (all zero without a mask).
  std::vector<std::uint8_t> mask_column(int col) const {
    std::vector<std::uint8_t> out(num_rows, 0);
    if (has_mask())
      for (std::size_t i = 0; i < num_rows; ++i) out[i] = mask[i * names.size() + static_cast<std::size_t>(col)];
    return out;
  }

  std::size_t masked_count() const {
    std::size_t c = 0;
    for (auto m : mask) c += m != 0;
    return c;
  }

  void validate() const {
    if (values.size() != num_rows * names.size()) throw DataError("dataset shape does not match its value buffer");
    if (has_mask() && mask.size() != values.size()) throw DataError("mask shape does not match the dataset");
    for (double v : values)
      if (!std::isfinite(v)) throw DataError("dataset contains a non-finite value");
  }
};

inline bool operator==(const Dataset& a, const Dataset& b) {
  return a.names == b.names && a.num_rows == b.num_rows && a.values == b.values && a.mask == b.mask;
}

/// Default node names: A, B, C, ... then X26, X27, ...
inline std::vector<std::string> default_node_names(int num_nodes) {
  std::vector<std::string> out;
  for (int d = 0; d < num_nodes; ++d)
    out.push_back(d < 26 ? std::string(1, static_cast<char>('A' + d)) : "X" + std::to_string(d));
  return out;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// Shortest representation that round-trips exactly.
inline std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw DataError("cannot format value");
  return std::string(buf, end);
}

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    auto field = line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) field.remove_suffix(1);
    out.push_back(field);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double parse_double(std::string_view s, std::size_t line_no) {
  double v = 0.0;
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw DataError("line " + std::to_string(line_no) + ": cannot parse number '" + std::string(s) + "'");
  return v;
}

}  // namespace detail

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Header row of names, then one row of numbers per sample.
inline Dataset parse_dataset_csv(std::string_view text) {
  Dataset ds;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool header = true;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    auto fields = detail::split_fields(line);
    if (header) {
      for (auto f : fields) ds.names.emplace_back(f);
      header = false;
      continue;
    }
    if (fields.size() != ds.names.size())
      throw DataError("line " + std::to_string(line_no) + ": expected " + std::to_string(ds.names.size()) +
                      " fields, got " + std::to_string(fields.size()));
    for (auto f : fields) ds.values.push_back(detail::parse_double(f, line_no));
    ++ds.num_rows;
  }
  if (ds.names.empty()) throw DataError("dataset CSV has no header");
  ds.validate();
  return ds;
}

/// Attaches a 0/1 mask CSV of identical shape (with header row) to `ds`.
inline void attach_mask_csv(Dataset& ds, std::string_view text) {
  Dataset m = parse_dataset_csv(text);
  if (m.names.size() != ds.names.size() || m.num_rows != ds.num_rows)
    throw DataError("mask CSV shape does not match the dataset");
  ds.mask.resize(m.values.size());
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    if (m.values[i] != 0.0 && m.values[i] != 1.0) throw DataError("mask CSV must contain only 0 and 1");
    ds.mask[i] = m.values[i] != 0.0;
  }
}

inline std::string dataset_to_csv(const Dataset& ds) {
  std::string out;
  for (std::size_t d = 0; d < ds.names.size(); ++d) out += (d ? "," : "") + ds.names[d];
  out += '\n';
  for (std::size_t i = 0; i < ds.num_rows; ++i) {
    for (int d = 0; d < ds.num_nodes(); ++d) {
      if (d) out += ',';
      out += format_number(ds.at(i, d));
    }
    out += '\n';
  }
  return out;
}

inline std::string mask_to_csv(const Dataset& ds) {
  std::string out;
  for (std::size_t d = 0; d < ds.names.size(); ++d) out += (d ? "," : "") + ds.names[d];
  out += '\n';
  for (std::size_t i = 0; i < ds.num_rows; ++i) {
    for (int d = 0; d < ds.num_nodes(); ++d) {
      if (d) out += ',';
      out += ds.masked(i, d) ? '1' : '0';
    }
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Categorical view
// ---------------------------------------------------------------------------

/// Integer-coded columns with per-column cardinality.
struct CategoricalTable {
  std::vector<std::vector<int>> columns;
  std::vector<int> cardinalities;
  std::vector<std::vector<std::uint8_t>> skip;  // per column; empty when no mask

  std::size_t num_rows() const { return columns.empty() ? 0 : columns.front().size(); }
  int num_nodes() const { return static_cast<int>(columns.size()); }
};

/// Requires non-negative integer values. Cardinality is max value + 1 unless given explicitly.
inline CategoricalTable to_categorical(const Dataset& ds, std::span<const int> cardinalities = {}) {
  CategoricalTable t;
  const int D = ds.num_nodes();
  if (!cardinalities.empty() && static_cast<int>(cardinalities.size()) != D)
    throw DataError("cardinality list length does not match the number of columns");
  t.columns.assign(D, std::vector<int>(ds.num_rows));
  t.cardinalities.assign(D, 1);
  for (int d = 0; d < D; ++d) {
    int maxv = 0;
    for (std::size_t i = 0; i < ds.num_rows; ++i) {
      const double v = ds.at(i, d);
      if (v < 0 || v != std::floor(v) || v > 1e6)
        throw DataError("column '" + ds.names[d] + "' is not a non-negative integer category index");
      t.columns[d][i] = static_cast<int>(v);
      maxv = std::max(maxv, t.columns[d][i]);
    }
    t.cardinalities[d] = cardinalities.empty() ? maxv + 1 : cardinalities[d];
    if (maxv >= t.cardinalities[d])
      throw DataError("column '" + ds.names[d] + "' has a value outside its cardinality");
  }
  if (ds.has_mask()) {
    t.skip.resize(D);
    for (int d = 0; d < D; ++d) t.skip[d] = ds.mask_column(d);
  }
  return t;
}

// ---------------------------------------------------------------------------
// Hashing
// ---------------------------------------------------------------------------

/// Git blob object id (SHA-1 of "blob <size>\0<content>") as lowercase hex.
inline std::string content_hash(std::string_view content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw Error("cannot allocate hash context");
  EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
  EVP_DigestUpdate(ctx, header.data(), header.size());
  EVP_DigestUpdate(ctx, content.data(), content.size());
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

/// Hash over the CSV rendering of values and mask.
inline std::string dataset_hash(const Dataset& ds) {
  std::string payload = dataset_to_csv(ds);
  if (ds.has_mask()) payload += mask_to_csv(ds);
  return content_hash(payload);
}

}  // namespace preqmdl
