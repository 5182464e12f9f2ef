#pragma once

// Run configuration parsing and byte-stable artifact writers.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "geoconc/chain.hpp"
#include "geoconc/experiments.hpp"
#include "geoconc/functionals.hpp"
#include "geoconc/splitting.hpp"

namespace geoconc::io {

using Json = nlohmann::json;

inline constexpr const char* kToolName = "geoconc";
inline constexpr const char* kVersion = "0.1.0";

// --- Number formatting ------------------------------------------------------

// 17 significant digits, C locale.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline void write_string(std::ostream& os, const std::string& s) {
  os << Json(s).dump();
}

inline void write_json(std::ostream& os, const Json& j, int indent, int depth) {
  const std::string pad(static_cast<std::size_t>(indent * (depth + 1)), ' ');
  const std::string close(static_cast<std::size_t>(indent * depth), ' ');
  switch (j.type()) {
    case Json::value_t::object: {
      if (j.empty()) {
        os << "{}";
        return;
      }
      os << "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) os << ",\n";
        first = false;
        os << pad;
        write_string(os, it.key());
        os << ": ";
        write_json(os, it.value(), indent, depth + 1);
      }
      os << "\n" << close << "}";
      return;
    }
    case Json::value_t::array: {
      if (j.empty()) {
        os << "[]";
        return;
      }
      // Arrays of scalars stay on one line.
      bool flat = true;
      for (const auto& v : j) flat = flat && !v.is_structured();
      if (flat) {
        os << "[";
        for (std::size_t i = 0; i < j.size(); ++i) {
          if (i) os << ", ";
          write_json(os, j[i], indent, depth + 1);
        }
        os << "]";
        return;
      }
      os << "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) os << ",\n";
        os << pad;
        write_json(os, j[i], indent, depth + 1);
      }
      os << "\n" << close << "]";
      return;
    }
    case Json::value_t::number_float: {
      const double v = j.get<double>();
      os << (std::isfinite(v) ? format_double(v) : "null");
      return;
    }
    default:
      os << j.dump();
  }
}

}  // namespace detail

/// Deterministic serialization: sorted keys, 17-digit floats, LF endings.
inline std::string to_json_text(const Json& j) {
  std::ostringstream os;
  detail::write_json(os, j, 2, 0);
  os << "\n";
  return os.str();
}

// Non-finite doubles are carried as strings in JSON ("inf").
inline Json number(double v) { return std::isfinite(v) ? Json(v) : Json(format_double(v)); }

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string config_digest(const Json& resolved) { return hex64(fnv1a64(to_json_text(resolved))); }

// --- CSV --------------------------------------------------------------------

class CsvWriter {
 public:
  CsvWriter(const std::string& digest, const std::vector<std::string>& header) {
    out_ << "# tool=" << kToolName << " version=" << kVersion << " config_digest=" << digest
         << "\n";
    row_strings(header);
  }

  template <typename... Cells>
  void row(const Cells&... cells) {
    bool first = true;
    ((out_ << (first ? "" : ",") << cell(cells), first = false), ...);
    out_ << "\n";
  }

  void row_strings(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << "\n";
  }

  std::string str() const { return out_.str(); }

 private:
  static std::string cell(double v) { return format_double(v); }
  static std::string cell(bool v) { return v ? "1" : "0"; }
  static std::string cell(const std::string& v) { return v; }
  static std::string cell(const char* v) { return v; }
  template <typename T>
    requires std::is_integral_v<T>
  static std::string cell(T v) {
    return std::to_string(v);
  }

  std::ostringstream out_;
};

// --- Config schema ----------------------------------------------------------

struct ChainConfig {
  TransitionKernel kernel;
  std::string type;
  std::size_t s_max = 0;  // ladder only
};

template <typename T>
T require(const Json& j, const char* key, const char* where) {
  if (!j.contains(key)) throw InvalidArgument(std::string(where) + ": missing '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw InvalidArgument(std::string(where) + ": field '" + key + "' has the wrong type");
  }
}

template <typename T>
T optional_field(const Json& j, const char* key, T fallback, const char* where) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw InvalidArgument(std::string(where) + ": field '" + key + "' has the wrong type");
  }
}

inline Json default_chain_json() { return {{"type", "two_state"}, {"a", 0.2}, {"b", 0.4}}; }

inline ChainConfig parse_chain(const Json& j) {
  if (!j.is_object()) throw InvalidArgument("chain: expected an object");
  const auto type = require<std::string>(j, "type", "chain");
  if (type == "dense") {
    const auto rows = require<std::vector<std::vector<double>>>(j, "matrix", "chain");
    if (rows.empty()) throw InvalidArgument("chain: empty matrix");
    Matrix P(rows.size(), rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != rows.size()) throw InvalidArgument("chain: matrix must be square");
      for (std::size_t c = 0; c < rows.size(); ++c) P(r, c) = rows[r][c];
    }
    auto labels = optional_field<std::vector<std::string>>(j, "labels", {}, "chain");
    return {TransitionKernel(std::move(P), std::move(labels)), type, 0};
  }
  if (type == "two_state") {
    return {two_state_kernel(require<double>(j, "a", "chain"), require<double>(j, "b", "chain")),
            type, 0};
  }
  if (type == "ladder") {
    const auto s_max = require<std::size_t>(j, "s_max", "chain");
    if (s_max < 3) throw InvalidArgument("chain: ladder needs s_max >= 3");
    return {ladder_kernel(s_max), type, s_max};
  }
  throw InvalidArgument("chain: unknown type '" + type + "' (dense, two_state, ladder)");
}

inline std::vector<std::size_t> parse_states(const Json& j, const char* key, std::size_t n,
                                             const char* where) {
  const auto v = require<std::vector<std::size_t>>(j, key, where);
  for (auto s : v)
    if (s >= n) throw InvalidArgument(std::string(where) + ": state " + std::to_string(s) +
                                      " outside 0.." + std::to_string(n - 1));
  return v;
}

/// Certificate fields: C (required), m (default 1), delta (default
/// min(delta_max, 0.999)), nu ("row_min" or explicit weights).
inline MinorizationCertificate parse_certificate(const Json& j, const ChainConfig& chain) {
  const std::size_t n = chain.kernel.size();
  if (j.is_null()) {
    // Ladder: the bottom rung; otherwise the whole space.
    std::vector<std::size_t> C;
    if (chain.type == "ladder") {
      C = {0};
    } else {
      for (std::size_t s = 0; s < n; ++s) C.push_back(s);
    }
    return make_certificate(chain.kernel, C);
  }
  if (!j.is_object()) throw InvalidArgument("certificate: expected an object");
  auto C = parse_states(j, "C", n, "certificate");
  const int m = optional_field<int>(j, "m", 1, "certificate");
  if (m < 1) throw InvalidArgument("certificate: m must be >= 1");
  std::optional<double> delta;
  if (j.contains("delta") && !j.at("delta").is_null()) {
    delta = require<double>(j, "delta", "certificate");
    if (!(*delta > 0.0 && *delta <= 1.0))
      throw InvalidArgument("certificate: delta must lie in (0, 1]");
  }
  std::optional<Distribution> nu;
  if (j.contains("nu") && j.at("nu").is_array()) {
    auto w = require<std::vector<double>>(j, "nu", "certificate");
    if (w.size() != n) throw InvalidArgument("certificate: nu has the wrong dimension");
    nu = Distribution(std::move(w));
  } else if (j.contains("nu") && j.at("nu") != "row_min") {
    throw InvalidArgument("certificate: nu must be \"row_min\" or a weight vector");
  }
  return make_certificate(chain.kernel, std::move(C), m, delta, std::move(nu));
}

struct FunctionalConfig {
  FunctionalSpec spec;
  std::string kind;
  std::string f_name;  // remark1 only
};

/// Functional fields: type = visit_count (C, default {0}), additive (g),
/// remark1 (f). The horizon is supplied separately.
// g is either a weight per state or {"type": "indicator", "states": [...]}.
inline std::vector<double> parse_weights(const Json& j, std::size_t S) {
  if (!j.contains("g")) throw InvalidArgument("functional: missing field 'g'");
  const Json& g = j.at("g");
  if (g.is_object()) {
    const auto type = require<std::string>(g, "type", "functional.g");
    if (type != "indicator") throw InvalidArgument("functional.g: unknown type '" + type + "' (indicator)");
    std::vector<double> w(S, 0.0);
    for (auto s : parse_states(g, "states", S, "functional.g")) w[s] = 1.0;
    return w;
  }
  auto w = require<std::vector<double>>(j, "g", "functional");
  if (w.size() != S) throw InvalidArgument("functional: g needs one weight per state");
  for (double v : w)
    if (!std::isfinite(v)) throw InvalidArgument("functional: weights must be finite");
  return w;
}

inline FunctionalConfig parse_functional(const Json& j, const ChainConfig& chain, std::size_t n) {
  const std::size_t S = chain.kernel.size();
  if (j.is_null()) return {visit_count({0}, S, n), "visit_count", ""};
  if (!j.is_object()) throw InvalidArgument("functional: expected an object");
  const auto kind = require<std::string>(j, "kind", "functional");
  if (kind == "visit_count") {
    auto C = j.contains("C") ? parse_states(j, "C", S, "functional") : std::vector<std::size_t>{0};
    return {visit_count(C, S, n), kind, ""};
  }
  if (kind == "additive") return {additive(parse_weights(j, S), n), kind, ""};
  if (kind == "remark1") {
    if (chain.type != "ladder") throw InvalidArgument("functional: remark1 needs the ladder chain");
    const auto f = optional_field<std::string>(j, "f", "sqrt_log", "functional");
    return {ladder_functional(chain.s_max, n, default_minorant(named_growth_function(f))), kind, f};
  }
  throw InvalidArgument("functional: unknown kind '" + kind + "' (visit_count, additive, remark1)");
}

inline Json certificate_json(const MinorizationCertificate& c) {
  Json nu = Json::array();
  for (double w : c.nu.weights()) nu.push_back(w);
  return {{"C", c.C}, {"m", c.m}, {"delta", c.delta}, {"nu", nu}};
}

inline Json ledger_json(const ConstantLedger& L) {
  return {{"M1", L.M1},     {"rho", L.rho}, {"kappa", L.kappa}, {"R_C", L.R_C},
          {"epsilon0", L.epsilon0}, {"sigma", L.sigma}, {"M2", L.M2}, {"M3", L.M3},
          {"M4", L.M4},     {"M5", L.M5},   {"M6", L.M6},       {"M7", L.M7},
          {"M0", L.M0},     {"admissible", L.admissible()}, {"provenance", L.provenance}};
}

}  // namespace geoconc::io
