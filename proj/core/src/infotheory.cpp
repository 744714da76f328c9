#include "relpretext/infotheory.hpp"

#include <algorithm>
#include <cmath>

#include "relpretext/csv.hpp"
#include "relpretext/error.hpp"

namespace relpretext {

namespace {

constexpr double kLog2 = 0.6931471805599453;

double log2_safe(double p) { return std::log(p) / kLog2; }

void require_disjoint(const std::vector<int>& a, const std::vector<int>& b) {
  for (int x : a)
    for (int y : b)
      if (x == y) fail("OverlappingGroups", "variable groups must be disjoint");
}

std::vector<int> concat(std::vector<int> a, const std::vector<int>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

DiscreteJoint::DiscreteJoint(std::vector<std::string> names, std::vector<int> supports,
                             std::vector<double> probs)
    : names_(std::move(names)), supports_(std::move(supports)), probs_(std::move(probs)) {
  check(!supports_.empty() && supports_.size() <= 6, "OverlappingGroups",
        "joint must have 1..6 variables");
  if (names_.empty())
    for (size_t i = 0; i < supports_.size(); ++i) names_.push_back("v" + std::to_string(i));
  check(names_.size() == supports_.size(), "OverlappingGroups", "one name per variable");
  size_t cells = 1;
  for (int s : supports_) {
    check(s >= 1 && s <= 8, "OverlappingGroups", "supports must be 1..8");
    cells *= static_cast<size_t>(s);
  }
  check(probs_.size() == cells, "OverlappingGroups", "probability table size mismatch");
  double total = 0.0;
  for (double p : probs_) {
    check(p >= 0.0, "OverlappingGroups", "negative probability");
    total += p;
  }
  check(std::abs(total - 1.0) <= 1e-12, "OverlappingGroups", "probabilities must sum to 1");

  strides_.assign(supports_.size(), 1);
  for (int v = static_cast<int>(supports_.size()) - 2; v >= 0; --v)
    strides_[v] = strides_[v + 1] * supports_[v + 1];
}

int DiscreteJoint::var_index(const std::string& name) const {
  for (size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return static_cast<int>(i);
  fail("OverlappingGroups", "no variable named " + name);
}

void DiscreteJoint::enumerate(
    const std::vector<int>& vars,
    const std::function<void(const std::vector<int>&, double)>& fn) const {
  // Walk the full table once, projecting each cell onto `vars`.
  const size_t cells = probs_.size();
  std::vector<int> assign(vars.size());
  for (size_t idx = 0; idx < cells; ++idx) {
    for (size_t k = 0; k < vars.size(); ++k)
      assign[k] = static_cast<int>(idx / strides_[vars[k]]) % supports_[vars[k]];
    fn(assign, probs_[idx]);
  }
}

DiscreteJoint DiscreteJoint::marginal(const std::vector<int>& vars) const {
  std::vector<int> supports;
  std::vector<std::string> names;
  for (int v : vars) {
    check(v >= 0 && v < num_vars(), "OverlappingGroups", "variable index out of range");
    supports.push_back(supports_[v]);
    names.push_back(names_[v]);
  }
  size_t cells = 1;
  std::vector<int> strides(vars.size(), 1);
  for (int k = static_cast<int>(vars.size()) - 2; k >= 0; --k)
    strides[k] = strides[k + 1] * supports[k + 1];
  for (int s : supports) cells *= static_cast<size_t>(s);
  std::vector<double> probs(cells, 0.0);
  enumerate(vars, [&](const std::vector<int>& assign, double p) {
    size_t idx = 0;
    for (size_t k = 0; k < assign.size(); ++k) idx += static_cast<size_t>(assign[k]) * strides[k];
    probs[idx] += p;
  });
  // Re-normalize the last ulps so the marginal passes its own validation.
  double total = 0.0;
  for (double p : probs) total += p;
  if (total > 0)
    for (auto& p : probs) p /= total;
  return DiscreteJoint(std::move(names), std::move(supports), std::move(probs));
}

double DiscreteJoint::marginal_prob(const std::vector<int>& vars,
                                    const std::vector<int>& assign) const {
  double total = 0.0;
  enumerate(vars, [&](const std::vector<int>& a, double p) {
    if (a == assign) total += p;
  });
  return total;
}

double DiscreteJoint::entropy(const std::vector<int>& vars) const {
  DiscreteJoint m = marginal(vars);
  double h = 0.0;
  for (double p : m.probs_)
    if (p > 0) h -= p * log2_safe(p);
  return h;
}

double DiscreteJoint::mutual_info(const std::vector<int>& A, const std::vector<int>& B) const {
  require_disjoint(A, B);
  DiscreteJoint ab = marginal(concat(A, B));
  const size_t na = A.size();
  // Marginal tables inside the projected joint.
  std::vector<int> ia(na), ib(B.size());
  for (size_t i = 0; i < na; ++i) ia[i] = static_cast<int>(i);
  for (size_t i = 0; i < B.size(); ++i) ib[i] = static_cast<int>(na + i);
  DiscreteJoint pa = ab.marginal(ia);
  DiscreteJoint pb = ab.marginal(ib);

  double info = 0.0;
  ab.enumerate(concat(ia, ib), [&](const std::vector<int>& assign, double p) {
    if (p <= 0) return;
    std::vector<int> a_assign(assign.begin(), assign.begin() + na);
    std::vector<int> b_assign(assign.begin() + na, assign.end());
    size_t aidx = 0, bidx = 0;
    for (size_t k = 0; k < a_assign.size(); ++k)
      aidx += static_cast<size_t>(a_assign[k]) * pa.strides_[k];
    for (size_t k = 0; k < b_assign.size(); ++k)
      bidx += static_cast<size_t>(b_assign[k]) * pb.strides_[k];
    info += p * log2_safe(p / (pa.probs_[aidx] * pb.probs_[bidx]));
  });
  return info;
}

double DiscreteJoint::cond_mutual_info(const std::vector<int>& A, const std::vector<int>& B,
                                       const std::vector<int>& C) const {
  require_disjoint(A, B);
  require_disjoint(A, C);
  require_disjoint(B, C);
  // I(A;B|C) = sum p(a,b,c) log2[ p(c) p(a,b,c) / (p(a,c) p(b,c)) ]
  DiscreteJoint abc = marginal(concat(concat(A, B), C));
  const size_t na = A.size(), nb = B.size(), nc = C.size();
  std::vector<int> ia(na), ib(nb), ic(nc);
  for (size_t i = 0; i < na; ++i) ia[i] = static_cast<int>(i);
  for (size_t i = 0; i < nb; ++i) ib[i] = static_cast<int>(na + i);
  for (size_t i = 0; i < nc; ++i) ic[i] = static_cast<int>(na + nb + i);
  DiscreteJoint pc = abc.marginal(ic);
  DiscreteJoint pac = abc.marginal(concat(ia, ic));
  DiscreteJoint pbc = abc.marginal(concat(ib, ic));

  double info = 0.0;
  std::vector<int> all = concat(concat(ia, ib), ic);
  abc.enumerate(all, [&](const std::vector<int>& assign, double p) {
    if (p <= 0) return;
    size_t cidx = 0, acidx = 0, bcidx = 0;
    for (size_t k = 0; k < nc; ++k)
      cidx += static_cast<size_t>(assign[na + nb + k]) * pc.strides_[k];
    for (size_t k = 0; k < na; ++k) acidx += static_cast<size_t>(assign[k]) * pac.strides_[k];
    for (size_t k = 0; k < nc; ++k)
      acidx += static_cast<size_t>(assign[na + nb + k]) * pac.strides_[na + k];
    for (size_t k = 0; k < nb; ++k) bcidx += static_cast<size_t>(assign[na + k]) * pbc.strides_[k];
    for (size_t k = 0; k < nc; ++k)
      bcidx += static_cast<size_t>(assign[na + nb + k]) * pbc.strides_[nb + k];
    double pcv = pc.probs_[cidx];
    double pacv = pac.probs_[acidx];
    double pbcv = pbc.probs_[bcidx];
    if (pcv <= 0 || pacv <= 0 || pbcv <= 0) return;
    info += p * log2_safe(pcv * p / (pacv * pbcv));
  });
  return info;
}

double DiscreteJoint::total_correlation(const std::vector<int>& vars) const {
  DiscreteJoint joint = marginal(vars);
  std::vector<DiscreteJoint> singles;
  for (size_t k = 0; k < vars.size(); ++k) singles.push_back(joint.marginal({static_cast<int>(k)}));
  std::vector<int> all(vars.size());
  for (size_t k = 0; k < vars.size(); ++k) all[k] = static_cast<int>(k);
  double tc = 0.0;
  joint.enumerate(all, [&](const std::vector<int>& assign, double p) {
    if (p <= 0) return;
    double prod = 1.0;
    for (size_t k = 0; k < assign.size(); ++k) prod *= singles[k].probs_[assign[k]];
    tc += p * log2_safe(p / prod);
  });
  return tc;
}

DiscreteJoint DiscreteJoint::random(Rng& rng, std::vector<int> supports,
                                    std::vector<std::string> names) {
  size_t cells = 1;
  for (int s : supports) cells *= static_cast<size_t>(s);
  // Dirichlet(1,...,1): normalized iid exponentials.
  std::vector<double> probs(cells);
  double total = 0.0;
  for (auto& p : probs) {
    p = rng.exponential();
    total += p;
  }
  for (auto& p : probs) p /= total;
  // Compensate rounding so the validator's 1e-12 sum check holds.
  double sum = 0.0;
  for (double p : probs) sum += p;
  probs.back() += 1.0 - sum;
  if (probs.back() < 0) probs.back() = 0;
  return DiscreteJoint(std::move(names), std::move(supports), std::move(probs));
}

std::vector<CheckResult> verify_identities(int trials, uint64_t seed, double tol) {
  struct Named {
    const char* name;
    double max = 0.0;
  };
  Named checks[] = {
      {"nonneg_mi"}, {"nonneg_cmi"}, {"chain_rule"}, {"multivariate_mi"},
      {"entropy_mi"}, {"cmi_cond_entropy"}, {"joint_entropy_tc"},
  };
  Rng root(seed);
  for (int trial = 0; trial < trials; ++trial) {
    Rng rng = root.fork(trial);
    auto dim = [&]() { return static_cast<int>(rng.uniform_int(2, 4)); };
    DiscreteJoint j = DiscreteJoint::random(rng, {dim(), dim(), dim()}, {"x", "y", "z"});
    const std::vector<int> x{0}, y{1}, z{2}, xy{0, 1};

    double i_xy = j.mutual_info(x, y);
    double i_yz = j.mutual_info(y, z);
    double i_xz = j.mutual_info(x, z);
    double i_xy_z = j.cond_mutual_info(x, y, z);
    double i_yz_x = j.cond_mutual_info(y, z, x);
    double i_xz_y = j.cond_mutual_info(x, z, y);

    checks[0].max = std::max(checks[0].max, std::max({-i_xy, -i_yz, -i_xz}));
    checks[1].max = std::max(checks[1].max, std::max({-i_xy_z, -i_yz_x, -i_xz_y}));

    // I(xy; z) = I(y; z) + I(x; z | y)
    double lhs = j.mutual_info(xy, z);
    checks[2].max = std::max(checks[2].max, std::abs(lhs - (i_yz + i_xz_y)));

    // Multivariate MI is symmetric across its three expansions.
    double m1 = i_xy - i_xy_z;
    double m2 = i_yz - i_yz_x;
    double m3 = i_xz - i_xz_y;
    checks[3].max = std::max(checks[3].max, std::max(std::abs(m1 - m2), std::abs(m1 - m3)));

    // H(x) = H(x|y) + I(x;y), with H(x|y) = H(x,y) - H(y).
    double hx = j.entropy(x);
    double hx_given_y = j.entropy({0, 1}) - j.entropy(y);
    checks[4].max = std::max(checks[4].max, std::abs(hx - (hx_given_y + i_xy)));

    // I(x;y|z) = H(x|z) - H(x|yz)
    double hx_given_z = j.entropy({0, 2}) - j.entropy(z);
    double hx_given_yz = j.entropy({0, 1, 2}) - j.entropy({1, 2});
    checks[5].max = std::max(checks[5].max, std::abs(i_xy_z - (hx_given_z - hx_given_yz)));

    // H(y1..yn) = sum H(yi) - TC(y1..yn), on a fresh joint with 2..4 vars.
    int nv = static_cast<int>(rng.uniform_int(2, 4));
    std::vector<int> sup;
    for (int k = 0; k < nv; ++k) sup.push_back(static_cast<int>(rng.uniform_int(2, 3)));
    DiscreteJoint jy = DiscreteJoint::random(rng, sup);
    std::vector<int> all(nv);
    double sum_h = 0.0;
    for (int k = 0; k < nv; ++k) {
      all[k] = k;
      sum_h += jy.entropy({k});
    }
    double joint_h = jy.entropy(all);
    double tc = jy.total_correlation(all);
    checks[6].max = std::max(checks[6].max, std::abs(joint_h - (sum_h - tc)));
  }

  std::vector<CheckResult> results;
  for (const auto& c : checks)
    results.push_back({c.name, trials, std::max(c.max, 0.0), c.max <= tol});
  return results;
}

CheckResult verify_dpi(int trials, uint64_t seed, double tol) {
  Rng root(seed);
  double max_violation = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    Rng rng = root.fork(Rng::mix(0xd91, trial));
    int ny = static_cast<int>(rng.uniform_int(2, 4));
    int nx = static_cast<int>(rng.uniform_int(2, 4));
    int nxp = static_cast<int>(rng.uniform_int(2, 4));
    DiscreteJoint pyx = DiscreteJoint::random(rng, {ny, nx}, {"y", "x"});

    // Random channel K(x'|x); y -> x -> x' Markov by construction.
    std::vector<double> channel(static_cast<size_t>(nx) * nxp);
    for (int xi = 0; xi < nx; ++xi) {
      double total = 0.0;
      for (int xo = 0; xo < nxp; ++xo) {
        channel[xi * nxp + xo] = rng.exponential();
        total += channel[xi * nxp + xo];
      }
      for (int xo = 0; xo < nxp; ++xo) channel[xi * nxp + xo] /= total;
    }
    std::vector<double> probs(static_cast<size_t>(ny) * nx * nxp);
    for (int yi = 0; yi < ny; ++yi)
      for (int xi = 0; xi < nx; ++xi)
        for (int xo = 0; xo < nxp; ++xo)
          probs[(static_cast<size_t>(yi) * nx + xi) * nxp + xo] =
              pyx.probs()[yi * nx + xi] * channel[xi * nxp + xo];
    double sum = 0.0;
    for (double p : probs) sum += p;
    probs.back() += 1.0 - sum;
    DiscreteJoint j({"y", "x", "xp"}, {ny, nx, nxp}, std::move(probs));

    double i_yx = j.mutual_info({0}, {1});
    double i_yxp = j.mutual_info({0}, {2});
    max_violation = std::max(max_violation, i_yxp - i_yx);
  }
  return {"dpi", trials, std::max(max_violation, 0.0), max_violation <= tol};
}

TheoremReport verify_theorem1(int trials, uint64_t seed, double tol) {
  Rng root(seed);
  TheoremReport rep;
  rep.theorem = {"theorem1", trials, 0.0, true};
  rep.corollary = {"corollary1", trials, 0.0, true};
  rep.indep_equality = {"theorem1_indep_t", trials, 0.0, true};

  for (int trial = 0; trial < trials; ++trial) {
    Rng rng = root.fork(Rng::mix(0x7211, trial));
    int nx = static_cast<int>(rng.uniform_int(2, 4));
    int nt = static_cast<int>(rng.uniform_int(2, 4));
    int ny = static_cast<int>(rng.uniform_int(2, 4));
    DiscreteJoint j = DiscreteJoint::random(rng, {nx, nt, ny}, {"x", "t", "y"});
    const std::vector<int> x{0}, t{1}, y{2}, xt{0, 1};

    // z1 := (x, t) and z2 := x are deterministic copies, the strongest
    // constructible sufficient representations, so
    //   I(z1; y) = I(xt; y)  and  I(z2; y) = I(x; y).
    double i_z1y = j.mutual_info(xt, y);
    double i_z2y = j.mutual_info(x, y);
    double gap = i_z1y - i_z2y;
    rep.gaps.push_back(gap);
    rep.theorem.max_violation = std::max(rep.theorem.max_violation, -gap);

    // Corollary: I(z1;y) = I(x;y) + I(t;y|x) and the sum dominates I(x;y).
    double i_ty_x = j.cond_mutual_info(t, y, x);
    double identity_err = std::abs(i_z1y - (i_z2y + i_ty_x));
    double dominance = -(i_z1y - i_z2y + tol);  // i.e. requires i_z1y >= i_z2y - tol
    rep.corollary.max_violation =
        std::max({rep.corollary.max_violation, identity_err, dominance});

    // Equality case: t independent of (x, y) makes the gap collapse.
    DiscreteJoint pxy = j.marginal({0, 2});
    std::vector<double> pt(nt);
    double total = 0.0;
    for (auto& p : pt) {
      p = rng.exponential();
      total += p;
    }
    for (auto& p : pt) p /= total;
    std::vector<double> probs(static_cast<size_t>(nx) * nt * ny);
    for (int xi = 0; xi < nx; ++xi)
      for (int ti = 0; ti < nt; ++ti)
        for (int yi = 0; yi < ny; ++yi)
          probs[(static_cast<size_t>(xi) * nt + ti) * ny + yi] =
              pxy.probs()[xi * ny + yi] * pt[ti];
    double sum = 0.0;
    for (double p : probs) sum += p;
    probs.back() += 1.0 - sum;
    DiscreteJoint jind({"x", "t", "y"}, {nx, nt, ny}, std::move(probs));
    double gap_ind = jind.mutual_info(xt, y) - jind.mutual_info(x, y);
    rep.indep_equality.max_violation =
        std::max(rep.indep_equality.max_violation, std::abs(gap_ind));
  }

  rep.theorem.max_violation = std::max(rep.theorem.max_violation, 0.0);
  rep.theorem.pass = rep.theorem.max_violation <= tol;
  rep.corollary.max_violation = std::max(rep.corollary.max_violation, 0.0);
  rep.corollary.pass = rep.corollary.max_violation <= tol;
  rep.indep_equality.pass = rep.indep_equality.max_violation <= tol;
  return rep;
}

void write_infotheory_report_csv(const std::string& path,
                                 const std::vector<CheckResult>& results) {
  CsvWriter w(path);
  w.write_row({"check", "trials", "max_violation", "pass"});
  for (const auto& r : results)
    w.write_row({r.name, std::to_string(r.trials), format_double(r.max_violation),
                 r.pass ? "1" : "0"});
}

}  // namespace relpretext
