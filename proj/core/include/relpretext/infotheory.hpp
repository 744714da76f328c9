#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "relpretext/rng.hpp"

namespace relpretext {

// Dense joint probability table over a handful of finite random variables.
// All information quantities are direct summations over the joint, in bits,
// with 0 * log 0 := 0.
class DiscreteJoint {
 public:
  DiscreteJoint(std::vector<std::string> names, std::vector<int> supports,
                std::vector<double> probs);

  int num_vars() const { return static_cast<int>(supports_.size()); }
  int support(int v) const { return supports_[v]; }
  const std::vector<double>& probs() const { return probs_; }
  const std::vector<std::string>& names() const { return names_; }
  int var_index(const std::string& name) const;

  DiscreteJoint marginal(const std::vector<int>& vars) const;

  // Joint entropy H(vars) of the marginal over `vars`.
  double entropy(const std::vector<int>& vars) const;
  // I(A; B), groups must be disjoint.
  double mutual_info(const std::vector<int>& A, const std::vector<int>& B) const;
  // I(A; B | C), all three pairwise disjoint.
  double cond_mutual_info(const std::vector<int>& A, const std::vector<int>& B,
                          const std::vector<int>& C) const;
  // TC(vars) = sum_i H(v_i) - H(vars), computed by direct summation.
  double total_correlation(const std::vector<int>& vars) const;

  // Symmetric Dirichlet with concentration 1 (uniform over the simplex).
  static DiscreteJoint random(Rng& rng, std::vector<int> supports,
                              std::vector<std::string> names = {});

 private:
  double marginal_prob(const std::vector<int>& vars, const std::vector<int>& assign) const;
  void enumerate(const std::vector<int>& vars,
                 const std::function<void(const std::vector<int>&, double)>& fn) const;

  std::vector<std::string> names_;
  std::vector<int> supports_;
  std::vector<int> strides_;
  std::vector<double> probs_;
};

struct CheckResult {
  std::string name;
  int trials = 0;
  double max_violation = 0.0;
  bool pass = false;
};

// Every identity used in the appendix-style proofs, each checked on `trials`
// random joints at 1e-9 bits:
//   nonnegativity of I and conditional I; chain rule I(xy;z)=I(y;z)+I(x;z|y);
//   multivariate MI symmetry I(x;y)-I(x;y|z) = I(y;z)-I(y;z|x) = I(x;z)-I(x;z|y);
//   H(x)=H(x|y)+I(x;y); I(x;y|z)=H(x|z)-H(x|yz); H(y1..yn)=sum H(yi) - TC.
std::vector<CheckResult> verify_identities(int trials, uint64_t seed, double tol = 1e-9);

// y -> x -> x' with x' a random channel of x: I(y;x) >= I(y;x').
CheckResult verify_dpi(int trials, uint64_t seed, double tol = 1e-9);

struct TheoremReport {
  CheckResult theorem;          // I(z1;y) >= I(z2;y) with z1=(x,t), z2=x
  CheckResult corollary;        // I(z1;y) = I(x;y) + I(t;y|x) >= I(x;y)
  CheckResult indep_equality;   // gap == 0 when t is independent of (x,y)
  std::vector<double> gaps;     // I(z1;y) - I(z2;y) per trial
};

TheoremReport verify_theorem1(int trials, uint64_t seed, double tol = 1e-9);

void write_infotheory_report_csv(const std::string& path,
                                 const std::vector<CheckResult>& results);

}  // namespace relpretext
