#pragma once

// Local identifiability of line-outage contingencies.
//
// The flow change caused by contingency k is d^(k) f^(k), with f^(k) the
// pre-outage flows on the outaged branches. At bus i only the rows of d for
// incident branches are observed, so two contingencies can be told apart
// locally iff the column spaces of their local submatrices differ, i.e. some
// principal angle between them is nonzero.

#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "lshed/numerics.hpp"
#include "lshed/power_flow.hpp"

namespace lshed {

inline DenseMatrix isf_matrix(const NetworkCase& c) { return injection_shift_factors(c); }

struct OutageSensitivity {
  std::string contingency_id;
  std::vector<int> outaged;  // column order
  DenseMatrix d;             // branches x outaged
};

/// Flow-change sensitivities of every branch to the pre-outage flows of the
/// outaged set, from base-case shift factors:  d = M (I - P)^-1, where column
/// o of M is the flow response to a unit transfer across outaged branch o and
/// P is M restricted to the outaged rows. Outaged rows are -e_o.
inline OutageSensitivity outage_sensitivity(const NetworkCase& c, const Contingency& k, const DenseMatrix* isf = nullptr) {
  validate_contingency(c, k);
  if (!check_connectivity(c, k)) throw IslandingError("contingency '" + k.id + "' islands the network");
  DenseMatrix own;
  if (!isf) {
    own = isf_matrix(c);
    isf = &own;
  }
  const std::size_t nl = c.num_branches();
  const std::size_t no = k.outaged_branches.size();
  DenseMatrix m(nl, no);
  std::vector<std::size_t> rows;
  for (std::size_t o = 0; o < no; ++o) {
    const std::size_t l = c.branch_index(k.outaged_branches[o]);
    rows.push_back(l);
    const std::size_t from = c.bus_index(c.branches[l].from_bus);
    const std::size_t to = c.bus_index(c.branches[l].to_bus);
    for (std::size_t r = 0; r < nl; ++r) m(r, o) = (*isf)(r, from) - (*isf)(r, to);
  }
  DenseMatrix ip = DenseMatrix::identity(no) - m.select_rows(rows);
  // d = M (I-P)^-1  <=>  (I-P)^T d^T = M^T
  DenseMatrix dt;
  try {
    dt = LuFactorization(ip.transpose(), 1e-10).solve(m.transpose());
  } catch (const SingularMatrixError&) {
    throw IslandingError("contingency '" + k.id + "': I - P is singular (islanding)");
  }
  OutageSensitivity s{k.id, k.outaged_branches, dt.transpose()};
  for (std::size_t o = 0; o < no; ++o)
    for (std::size_t c2 = 0; c2 < no; ++c2) s.d(rows[o], c2) = o == c2 ? -1.0 : 0.0;
  return s;
}

/// Classic single-line distribution factors (S_:m - S_:n) / (1 - S_lm + S_ln)
/// for outaged branch l = (m, n).
inline std::vector<double> single_line_lodf(const NetworkCase& c, const DenseMatrix& isf, int branch_id) {
  const std::size_t l = c.branch_index(branch_id);
  const std::size_t m = c.bus_index(c.branches[l].from_bus);
  const std::size_t n = c.bus_index(c.branches[l].to_bus);
  const double denom = 1.0 - isf(l, m) + isf(l, n);
  std::vector<double> out(c.num_branches());
  for (std::size_t r = 0; r < out.size(); ++r) out[r] = (isf(r, m) - isf(r, n)) / denom;
  out[l] = -1.0;
  return out;
}

/// Rows of d for the branches incident to bus index `bus`, ascending id.
inline DenseMatrix local_submatrix(const OutageSensitivity& s, const NetworkCase& c, std::size_t bus) {
  std::vector<std::size_t> rows;
  for (int id : c.incident_branches(bus)) rows.push_back(c.branch_index(id));
  return s.d.select_rows(rows);
}

struct SubspaceSeparation {
  int bus = 0;
  std::string k, k_prime;
  std::vector<double> sigma;  // descending
  std::vector<double> beta;   // radians, non-decreasing
  double min_sigma = 1.0;
  double max_overshoot = 0.0;  // largest sigma above 1 before clamping
  bool identifiable = false;
  std::string warning;
};

inline SubspaceSeparation principal_angles(const DenseMatrix& da, const DenseMatrix& db, double tol = 1e-6) {
  if (da.rows() != db.rows()) throw ValidationError("principal_angles: row counts differ");
  SubspaceSeparation out;
  const DenseMatrix qa = qr_orthonormal(da);
  const DenseMatrix qb = qr_orthonormal(db);
  if (qa.cols() == 0 || qb.cols() == 0) {
    out.identifiable = false;
    out.warning = "zero-rank subspace";
    return out;
  }
  const auto svd = svd_small(qa.transpose() * qb);
  const std::size_t r = std::min(qa.cols(), qb.cols());
  for (std::size_t l = 0; l < r && l < svd.sigma.size(); ++l) {
    out.max_overshoot = std::max(out.max_overshoot, svd.sigma[l] - 1.0);
    const double s = std::clamp(svd.sigma[l], 0.0, 1.0);
    out.sigma.push_back(s);
    out.beta.push_back(std::acos(s));
  }
  out.min_sigma = out.sigma.empty() ? 1.0 : out.sigma.back();
  out.identifiable = out.min_sigma < 1.0 - tol;
  return out;
}

inline SubspaceSeparation check_pair(const NetworkCase& c, std::size_t bus, const Contingency& k, const Contingency& kp,
                                     double tol = 1e-6) {
  const DenseMatrix isf = isf_matrix(c);
  const auto sa = outage_sensitivity(c, k, &isf);
  const auto sb = outage_sensitivity(c, kp, &isf);
  auto sep = principal_angles(local_submatrix(sa, c, bus), local_submatrix(sb, c, bus), tol);
  sep.bus = c.buses[bus].id;
  sep.k = k.id;
  sep.k_prime = kp.id;
  return sep;
}

struct IdentifiabilityReport {
  std::vector<SubspaceSeparation> pairs;
  bool all_identifiable = true;
};

/// Every unordered pair of the list at one bus. A singleton list is
/// vacuously identifiable.
inline IdentifiabilityReport check_set(const NetworkCase& c, std::size_t bus, const std::vector<Contingency>& list,
                                       double tol = 1e-6) {
  const DenseMatrix isf = isf_matrix(c);
  std::vector<DenseMatrix> local;
  for (const auto& k : list) local.push_back(local_submatrix(outage_sensitivity(c, k, &isf), c, bus));
  IdentifiabilityReport rep;
  for (std::size_t a = 0; a < list.size(); ++a)
    for (std::size_t b = a + 1; b < list.size(); ++b) {
      auto sep = principal_angles(local[a], local[b], tol);
      sep.bus = c.buses[bus].id;
      sep.k = list[a].id;
      sep.k_prime = list[b].id;
      rep.all_identifiable = rep.all_identifiable && sep.identifiable;
      rep.pairs.push_back(std::move(sep));
    }
  return rep;
}

inline std::string identifiability_csv_header() { return "bus,k,k_prime,min_sigma,max_beta_deg,identifiable\n"; }

inline std::string identifiability_csv_rows(const IdentifiabilityReport& rep) {
  std::ostringstream o;
  char buf[64];
  for (const auto& p : rep.pairs) {
    const double beta = p.beta.empty() ? 0.0 : p.beta.back() * 180.0 / std::numbers::pi;
    o << p.bus << ',' << p.k << ',' << p.k_prime << ',';
    std::snprintf(buf, sizeof buf, "%.17g,%.17g", p.min_sigma, beta);
    o << buf << ',' << (p.identifiable ? 1 : 0) << '\n';
  }
  return o.str();
}

}  // namespace lshed
