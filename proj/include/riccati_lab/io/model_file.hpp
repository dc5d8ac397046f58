#pragma once

#include <map>
#include <set>
#include <string>

#include "riccati_lab/io/text.hpp"
#include "riccati_lab/models.hpp"

namespace riccati_lab::io {

inline constexpr const char* kModelVersion = "riccati-lab-model/1";

// Layout:
//   version = riccati-lab-model/1
//   model_id = <id>
//   [dims]        n, m, p, horizon (number or inf), parabolic_block (0-based)
//   [A] [B] [R]   one row per line, row-major, 17 significant digits
//   [assumption]  gamma, N, epsilon, q, omega, eta, M, delta
//   [metadata]    free-form key = value (optional)

inline std::string write_model(const LqModel& m) {
  std::ostringstream os;
  os << "version = " << kModelVersion << "\n";
  os << "model_id = " << m.model_id << "\n";
  os << "[dims]\n";
  os << "n = " << m.n() << "\nm = " << m.m() << "\np = " << m.p() << "\n";
  os << "horizon = " << (m.horizon ? format_double(*m.horizon) : std::string("inf")) << "\n";
  os << "parabolic_block =";
  for (int i : m.parabolic_block) os << " " << i;
  os << "\n";
  auto matrix = [&](const char* name, const Matrix& x) {
    os << "[" << name << "]\n";
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      for (Eigen::Index j = 0; j < x.cols(); ++j) os << (j ? " " : "") << format_double(x(i, j));
      os << "\n";
    }
  };
  matrix("A", m.A);
  matrix("B", m.B);
  matrix("R", m.R);
  const auto& a = m.assumption;
  os << "[assumption]\n";
  os << "gamma = " << format_double(a.gamma) << "\n";
  os << "N = " << format_double(a.N) << "\n";
  os << "epsilon = " << format_double(a.epsilon) << "\n";
  os << "q = " << format_double(a.q) << "\n";
  os << "omega = " << format_double(a.omega) << "\n";
  os << "eta = " << format_double(a.eta) << "\n";
  os << "M = " << format_double(a.M) << "\n";
  os << "delta = " << format_double(a.delta) << "\n";
  if (!m.metadata.empty()) {
    os << "[metadata]\n";
    for (const auto& [k, v] : m.metadata) os << k << " = " << v << "\n";
  }
  return os.str();
}

inline LqModel read_model(const std::string& text) {
  std::map<std::string, std::map<std::string, std::string>> kv;
  std::map<std::string, std::vector<std::string>> rows;
  std::string section;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw FormatError("bad section header: " + t);
      section = t.substr(1, t.size() - 2);
      static const std::set<std::string> known{"dims", "A", "B", "R", "assumption", "metadata"};
      if (!known.count(section)) throw FormatError("unknown section [" + section + "]");
      rows[section];
      continue;
    }
    if (section == "A" || section == "B" || section == "R") {
      rows[section].push_back(t);
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw FormatError("expected key = value: " + t);
    kv[section][trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  auto get = [&](const std::string& sec, const std::string& key) -> const std::string& {
    auto s = kv.find(sec);
    if (s == kv.end() || !s->second.count(key)) throw FormatError("missing " + (sec.empty() ? "" : sec + ".") + key);
    return s->second.at(key);
  };
  if (get("", "version") != kModelVersion) throw FormatError("unsupported model version: " + get("", "version"));
  LqModel m;
  m.model_id = get("", "model_id");
  const long n = parse_int(get("dims", "n")), mm = parse_int(get("dims", "m")), p = parse_int(get("dims", "p"));
  if (n < 0 || mm < 0 || p < 0) throw FormatError("negative dimension");
  const std::string& h = get("dims", "horizon");
  if (h != "inf") m.horizon = parse_double(h);
  for (const auto& tok : split_ws(get("dims", "parabolic_block")))
    m.parabolic_block.push_back(static_cast<int>(parse_int(tok)));
  auto matrix = [&](const std::string& name, long r, long c) {
    Matrix x(r, c);
    const auto& lines = rows[name];
    const long expected_rows = c == 0 ? 0 : r;
    if (static_cast<long>(lines.size()) != expected_rows)
      throw FormatError("section [" + name + "] has wrong row count");
    for (long i = 0; i < expected_rows; ++i) {
      const auto toks = split_ws(lines[i]);
      if (static_cast<long>(toks.size()) != c) throw FormatError("section [" + name + "] has wrong column count");
      for (long j = 0; j < c; ++j) x(i, j) = parse_double(toks[j]);
    }
    return x;
  };
  m.A = matrix("A", n, n);
  m.B = matrix("B", n, mm);
  m.R = matrix("R", p, n);
  auto& a = m.assumption;
  a.gamma = parse_double(get("assumption", "gamma"));
  a.N = parse_double(get("assumption", "N"));
  a.epsilon = parse_double(get("assumption", "epsilon"));
  a.q = parse_double(get("assumption", "q"));
  a.omega = parse_double(get("assumption", "omega"));
  a.eta = parse_double(get("assumption", "eta"));
  a.M = parse_double(get("assumption", "M"));
  a.delta = parse_double(get("assumption", "delta"));
  if (kv.count("metadata"))
    for (const auto& [k, v] : kv["metadata"]) m.metadata[k] = v;
  return m;
}

inline LqModel load_model(const std::filesystem::path& path) { return read_model(read_file(path)); }

inline void save_model(const LqModel& m, const std::filesystem::path& path) {
  write_file_atomic(path, write_model(m));
}

}  // namespace riccati_lab::io
