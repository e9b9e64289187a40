#pragma once

// libsvm text datasets, flat key = value config files and CSV helpers.

#include "dsnewton/objectives.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dsnewton {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// One "label idx:val idx:val ..." line. Indices are 1-based and strictly increasing.
struct LibsvmRecord {
  double label = 0.0;
  std::vector<std::pair<Eigen::Index, double>> features;
};

enum class LabelMode {
  Raw,     ///< keep labels as read
  Binary,  ///< map {-1,+1} to {0,1}; accept {0,1}; reject anything else
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_double(std::string_view tok, std::size_t line, const char* what) {
  double v = 0.0;
  const auto* end = tok.data() + tok.size();
  auto [p, ec] = std::from_chars(tok.data(), end, v);
  if (ec != std::errc() || p != end) throw ParseError(std::string("bad ") + what + " '" + std::string(tok) + "'", line);
  return v;
}

inline long long parse_int(std::string_view tok, std::size_t line, const char* what) {
  long long v = 0;
  const auto* end = tok.data() + tok.size();
  auto [p, ec] = std::from_chars(tok.data(), end, v);
  if (ec != std::errc() || p != end) throw ParseError(std::string("bad ") + what + " '" + std::string(tok) + "'", line);
  return v;
}

/// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, p);
}

}  // namespace detail

inline LibsvmRecord parse_libsvm_line(std::string_view text, std::size_t line) {
  if (const auto hash = text.find('#'); hash != std::string_view::npos) text = text.substr(0, hash);
  text = detail::trim(text);
  if (text.empty()) throw ParseError("empty record", line);
  LibsvmRecord rec;
  std::size_t pos = 0;
  bool first = true;
  while (pos < text.size()) {
    const auto next = text.find_first_of(" \t", pos);
    const std::string_view tok = text.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos);
    pos = next == std::string_view::npos ? text.size() : text.find_first_not_of(" \t", next);
    if (pos == std::string_view::npos) pos = text.size();
    if (first) {
      rec.label = detail::parse_double(tok, line, "label");
      first = false;
      continue;
    }
    const auto colon = tok.find(':');
    if (colon == std::string_view::npos) throw ParseError("feature '" + std::string(tok) + "' lacks ':'", line);
    const long long idx = detail::parse_int(tok.substr(0, colon), line, "index");
    if (idx < 1) throw ParseError("feature index must be >= 1", line);
    const double val = detail::parse_double(tok.substr(colon + 1), line, "value");
    if (!rec.features.empty() && idx <= rec.features.back().first) {
      if (idx == rec.features.back().first) throw ParseError("duplicate feature index " + std::to_string(idx), line);
      throw ParseError("feature indices not increasing at " + std::to_string(idx), line);
    }
    rec.features.emplace_back(static_cast<Eigen::Index>(idx), val);
  }
  return rec;
}

/// Dense dataset with d = max(max index, min_dim).
inline Dataset parse_libsvm(std::istream& in, LabelMode mode = LabelMode::Raw, Eigen::Index min_dim = 0) {
  std::vector<LibsvmRecord> recs;
  std::string line;
  std::size_t lineno = 0;
  Eigen::Index d = min_dim;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view body = line;
    if (const auto hash = body.find('#'); hash != std::string_view::npos) body = body.substr(0, hash);
    if (detail::trim(body).empty()) continue;
    LibsvmRecord rec = parse_libsvm_line(body, lineno);
    if (mode == LabelMode::Binary) {
      if (rec.label == -1.0) rec.label = 0.0;
      else if (rec.label == 1.0 || rec.label == 0.0) {
      } else {
        throw ParseError("label " + detail::format_double(rec.label) + " is not binary", lineno);
      }
    }
    if (!rec.features.empty()) d = std::max(d, rec.features.back().first);
    recs.push_back(std::move(rec));
  }
  if (recs.empty()) throw ParseError("no records", lineno);
  Dataset data{Matrix::Zero(static_cast<Eigen::Index>(recs.size()), d), Vector(static_cast<Eigen::Index>(recs.size()))};
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    data.y[r] = recs[i].label;
    for (const auto& [idx, val] : recs[i].features) data.X(r, idx - 1) = val;
  }
  return data;
}

inline Dataset parse_libsvm(const std::string& path, LabelMode mode = LabelMode::Raw, Eigen::Index min_dim = 0) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return parse_libsvm(in, mode, min_dim);
}

/// Writes nonzero entries only.
inline void write_libsvm(std::ostream& out, const Dataset& data) {
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    out << detail::format_double(data.y[i]);
    for (Eigen::Index j = 0; j < data.cols(); ++j)
      if (data.X(i, j) != 0.0) out << ' ' << (j + 1) << ':' << detail::format_double(data.X(i, j));
    out << '\n';
  }
}

/// Flat "key = value" file; '#' starts a comment. Later keys override earlier ones.
using KeyValues = std::map<std::string, std::string>;

inline KeyValues parse_key_values(std::istream& in) {
  KeyValues kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view body = line;
    if (const auto hash = body.find('#'); hash != std::string_view::npos) body = body.substr(0, hash);
    body = detail::trim(body);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected 'key = value'", lineno);
    const std::string key(detail::trim(body.substr(0, eq)));
    if (key.empty()) throw ParseError("empty key", lineno);
    kv[key] = std::string(detail::trim(body.substr(eq + 1)));
  }
  return kv;
}

inline KeyValues parse_key_values_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path + "'");
  return parse_key_values(in);
}

/// Minimal CSV row writer; fields are numbers or identifiers without commas.
class CsvWriter {
 public:
  CsvWriter(std::ostream& out, const std::vector<std::string>& header) : out_(out) { row(header); }

  template <typename... Ts>
  void write(const Ts&... fields) {
    bool first = true;
    ((out_ << (first ? "" : ",") << field(fields), first = false), ...);
    out_ << '\n';
  }

  void row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) out_ << (i ? "," : "") << fields[i];
    out_ << '\n';
  }

 private:
  static std::string field(double v) { return detail::format_double(v); }
  static std::string field(const std::string& s) { return s; }
  static std::string field(const char* s) { return s; }
  template <typename T>
    requires std::is_integral_v<T>
  static std::string field(T v) {
    return std::to_string(v);
  }

  std::ostream& out_;
};

}  // namespace dsnewton
