#pragma once

#include <sstream>
#include <string>

#include "riccati_lab/dre.hpp"
#include "riccati_lab/io/text.hpp"

namespace riccati_lab::io {

// # model_id = <id>
// # integrator = rk4 | implicit-midpoint
// # n = <n>, m = <m>
// t,P_0_0,...,P_{n-1}_{n-1},K_0_0,...,K_{m-1}_{n-1}
// one row per node, row-major, 17 significant digits

inline std::string write_dre_csv(const DreSolution& sol) {
  const Eigen::Index n = sol.P.front().rows();
  const Eigen::Index m = sol.K.empty() ? 0 : sol.K.front().rows();
  std::ostringstream os;
  os << "# model_id = " << sol.model_id << "\n";
  os << "# integrator = " << to_string(sol.integrator) << "\n";
  os << "# n = " << n << ", m = " << m << "\n";
  os << "t";
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) os << ",P_" << i << "_" << j;
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < n; ++j) os << ",K_" << i << "_" << j;
  os << "\n";
  for (std::size_t k = 0; k < sol.size(); ++k) {
    os << format_double(sol.grid[k]);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) os << "," << format_double(sol.P[k](i, j));
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < n; ++j) os << "," << format_double(sol.K[k](i, j));
    os << "\n";
  }
  return os.str();
}

/// Parses the CSV; derivatives are left empty (see attach_derivatives).
inline DreSolution read_dre_csv(const std::string& text) {
  DreSolution sol;
  std::istringstream in(text);
  std::string line;
  long n = -1, m = -1;
  bool header_seen = false;
  std::vector<double> times;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t[0] == '#') {
      const std::string body = trim(t.substr(1));
      if (body.rfind("model_id", 0) == 0) sol.model_id = trim(body.substr(body.find('=') + 1));
      else if (body.rfind("integrator", 0) == 0) sol.integrator = parse_integrator(trim(body.substr(body.find('=') + 1)));
      else if (body.rfind("n =", 0) == 0) {
        for (const auto& part : split(body, ',')) {
          const auto kv = split(part, '=');
          if (kv.size() != 2) throw FormatError("bad dimension line: " + body);
          const std::string key = trim(kv[0]);
          if (key == "n") n = parse_int(kv[1]);
          else if (key == "m") m = parse_int(kv[1]);
        }
      }
      continue;
    }
    if (!header_seen) {
      if (t.rfind("t,", 0) != 0 && t != "t") throw FormatError("missing DRE column header");
      header_seen = true;
      continue;
    }
    if (n < 0 || m < 0) throw FormatError("DRE CSV lacks the dimension line");
    const auto cells = split(t, ',');
    if (static_cast<long>(cells.size()) != 1 + n * n + m * n) throw FormatError("DRE CSV row has wrong width");
    times.push_back(parse_double(cells[0]));
    Matrix p(n, n), k(m, n);
    std::size_t c = 1;
    for (long i = 0; i < n; ++i)
      for (long j = 0; j < n; ++j) p(i, j) = parse_double(cells[c++]);
    for (long i = 0; i < m; ++i)
      for (long j = 0; j < n; ++j) k(i, j) = parse_double(cells[c++]);
    sol.P.push_back(p);
    sol.K.push_back(k);
  }
  if (times.size() < 2) throw FormatError("DRE CSV needs at least two rows");
  try {
    sol.grid = TimeGrid(times);
  } catch (const PreconditionError& e) {
    throw FormatError(std::string("DRE CSV time column: ") + e.what());
  }
  return sol;
}

}  // namespace riccati_lab::io
