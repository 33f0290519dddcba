#pragma once

// Local measurement vector of a bus:
//   [pd, qd,
//    pre:  V, omega, p_ij (incident branches, ascending id), q_ij (same order),
//    post: V, omega, p_ij, q_ij]
// Powers in MW / MVAr seen from the bus, V in p.u., omega in Hz. Branches out
// of service after the contingency read 0 in the post block.

#include <set>
#include <string>
#include <vector>

#include "lshed/power_flow.hpp"

namespace lshed {

inline constexpr int kFeatureLayoutVersion = 1;

inline std::size_t feature_length(std::size_t degree) { return 2 + 2 * (2 + 2 * degree); }

inline std::vector<std::string> feature_names(const NetworkCase& c, std::size_t bus) {
  const auto& inc = c.incident_branches(bus);
  std::vector<std::string> names{"pd", "qd"};
  for (const char* phase : {"pre", "post"}) {
    const std::string p(phase);
    names.push_back(p + "_v");
    names.push_back(p + "_omega");
    for (int id : inc) names.push_back(p + "_p" + std::to_string(id));
    for (int id : inc) names.push_back(p + "_q" + std::to_string(id));
  }
  return names;
}

/// `c` holds the sampled demand; `outaged` lists the post-contingency outages.
inline std::vector<double> build_features(const NetworkCase& c, std::size_t bus, const PowerFlowState& pre,
                                          const PowerFlowState& post, double omega_pre, double omega_post,
                                          const std::vector<int>& outaged) {
  const auto& inc = c.incident_branches(bus);
  const int id = c.buses[bus].id;
  std::set<int> out(outaged.begin(), outaged.end());
  std::vector<double> x{c.buses[bus].p_demand, c.buses[bus].q_demand};
  x.reserve(feature_length(inc.size()));
  auto block = [&](const PowerFlowState& st, double omega, bool is_post) {
    x.push_back(st.v_mag[bus]);
    x.push_back(omega);
    for (int br : inc) {
      const auto& f = st.branch_flows[c.branch_index(br)];
      const bool from = c.branches[c.branch_index(br)].from_bus == id;
      x.push_back(is_post && out.count(br) ? 0.0 : (from ? f.p_from : f.p_to) * c.base_mva);
    }
    for (int br : inc) {
      const auto& f = st.branch_flows[c.branch_index(br)];
      const bool from = c.branches[c.branch_index(br)].from_bus == id;
      x.push_back(is_post && out.count(br) ? 0.0 : (from ? f.q_from : f.q_to) * c.base_mva);
    }
  };
  block(pre, omega_pre, false);
  block(post, omega_post, true);
  return x;
}

}  // namespace lshed
