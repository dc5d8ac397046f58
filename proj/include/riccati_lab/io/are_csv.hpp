#pragma once

#include <sstream>
#include <string>

#include "riccati_lab/are.hpp"
#include "riccati_lab/io/text.hpp"

namespace riccati_lab::io {

// # model_id = <id>
// # n = <n>, m = <m>
// P_0_0,...,K_0_0,...,closed_loop_abscissa,method,residual
// <one data row>

inline std::string write_are_csv(const AreSolution& sol, const std::string& model_id) {
  const Eigen::Index n = sol.P.rows(), m = sol.K.rows();
  std::ostringstream os;
  os << "# model_id = " << model_id << "\n";
  os << "# n = " << n << ", m = " << m << "\n";
  bool first = true;
  auto sep = [&] {
    if (!first) os << ",";
    first = false;
  };
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) sep(), os << "P_" << i << "_" << j;
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < n; ++j) sep(), os << "K_" << i << "_" << j;
  sep(), os << "closed_loop_abscissa,method,residual\n";
  first = true;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) sep(), os << format_double(sol.P(i, j));
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < n; ++j) sep(), os << format_double(sol.K(i, j));
  sep();
  os << format_double(sol.closed_loop_abscissa()) << "," << sol.method << "," << format_double(sol.residual) << "\n";
  return os.str();
}

struct AreCsvRecord {
  std::string model_id;
  Matrix P, K;
  double closed_loop_abscissa = 0.0;
  std::string method;
  double residual = 0.0;
};

inline AreCsvRecord read_are_csv(const std::string& text) {
  AreCsvRecord r;
  std::istringstream in(text);
  std::string line;
  long n = -1, m = -1;
  std::vector<std::string> rows;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t[0] == '#') {
      const std::string body = trim(t.substr(1));
      if (body.rfind("model_id", 0) == 0) r.model_id = trim(body.substr(body.find('=') + 1));
      else if (body.rfind("n =", 0) == 0)
        for (const auto& part : split(body, ',')) {
          const auto kv = split(part, '=');
          if (kv.size() != 2) throw FormatError("bad dimension line: " + body);
          (trim(kv[0]) == "n" ? n : m) = parse_int(kv[1]);
        }
      continue;
    }
    rows.push_back(t);
  }
  if (n < 0 || m < 0) throw FormatError("ARE CSV lacks the dimension line");
  if (rows.size() != 2) throw FormatError("ARE CSV needs a header row and one data row");
  const auto cells = split(rows[1], ',');
  if (static_cast<long>(cells.size()) != n * n + m * n + 3) throw FormatError("ARE CSV row has wrong width");
  r.P.resize(n, n);
  r.K.resize(m, n);
  std::size_t c = 0;
  for (long i = 0; i < n; ++i)
    for (long j = 0; j < n; ++j) r.P(i, j) = parse_double(cells[c++]);
  for (long i = 0; i < m; ++i)
    for (long j = 0; j < n; ++j) r.K(i, j) = parse_double(cells[c++]);
  r.closed_loop_abscissa = parse_double(cells[c++]);
  r.method = trim(cells[c++]);
  r.residual = parse_double(cells[c++]);
  return r;
}

}  // namespace riccati_lab::io
