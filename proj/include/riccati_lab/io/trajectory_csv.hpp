#pragma once

#include <sstream>
#include <string>

#include "riccati_lab/io/text.hpp"
#include "riccati_lab/semiflow/paths.hpp"

namespace riccati_lab::io {

// # model_id = <id>
// t,y_0,...,y_{n-1},u_0,...,u_{m-1},running_cost
// Controls are the node values; running cost is cumulative (0 when untracked).

inline std::string write_trajectory_csv(const Trajectory& traj, const std::string& model_id) {
  const Eigen::Index n = traj.states.rows();
  const Eigen::Index m = traj.controls ? traj.controls->dim() : 0;
  std::ostringstream os;
  os << "# model_id = " << model_id << "\nt";
  for (Eigen::Index i = 0; i < n; ++i) os << ",y_" << i;
  for (Eigen::Index i = 0; i < m; ++i) os << ",u_" << i;
  os << ",running_cost\n";
  for (std::size_t k = 0; k < traj.grid.size(); ++k) {
    os << format_double(traj.grid[k]);
    for (Eigen::Index i = 0; i < n; ++i) os << "," << format_double(traj.states(i, static_cast<Eigen::Index>(k)));
    for (Eigen::Index i = 0; i < m; ++i) os << "," << format_double(traj.controls->values(i, static_cast<Eigen::Index>(k)));
    os << "," << format_double(traj.running_cost.empty() ? 0.0 : traj.running_cost[k]) << "\n";
  }
  return os.str();
}

}  // namespace riccati_lab::io
