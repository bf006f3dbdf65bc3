#pragma once

#include "htmle/data.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

namespace htmle {

namespace policy_kind {

// d(t, x) = value
struct Static {
  double value = 1.0;
};

// d(t, x) = hi if x[covariate] > threshold else lo. The covariate may be named
// and resolved against a dataset later.
struct DynamicThreshold {
  int covariate = -1;
  std::string covariate_name;
  double threshold = 0.0;
  double hi = 1.0;
  double lo = 0.0;
};

// d(t, x) = t + delta if t + delta <= u(x), else t. u(x) is a constant, a
// per-row vector, or a named auxiliary column; no bound when none is given.
struct AdditiveShift {
  double delta = 0.0;
  std::optional<double> cap_constant;
  std::string cap_column;
  Vector cap_values;
};

// d(t, x, eps) = t if eps < delta else 0
struct IpsiDown {
  double delta = 1.0;
};

// d(t, x, eps) = t if eps < delta else 1
struct IpsiUp {
  double delta = 1.0;
};

struct Identity {};

}  // namespace policy_kind

using PolicyKind = std::variant<policy_kind::Static, policy_kind::DynamicThreshold, policy_kind::AdditiveShift,
                                policy_kind::IpsiDown, policy_kind::IpsiUp, policy_kind::Identity>;

// A hypothetical intervention on the treatment. Immutable value object;
// randomized policies draw eps_i ~ U(0,1) from a counter-based stream keyed on
// (seed, i), so the shifted treatment depends only on the seed and row order.
class Policy {
 public:
  Policy() : kind_(policy_kind::Identity{}) {}
  explicit Policy(PolicyKind kind, std::uint64_t seed = 0);

  static Policy identity() { return Policy(policy_kind::Identity{}); }
  static Policy static_value(double value) { return Policy(policy_kind::Static{value}); }
  static Policy dynamic(int covariate, double threshold, double hi = 1.0, double lo = 0.0);
  static Policy shift(double delta, std::optional<double> cap = std::nullopt);
  static Policy shift(double delta, Vector cap);
  static Policy ipsi_down(double delta, std::uint64_t seed);
  static Policy ipsi_up(double delta, std::uint64_t seed);

  const PolicyKind& kind() const { return kind_; }
  std::uint64_t seed() const { return seed_; }

  bool is_identity() const { return std::holds_alternative<policy_kind::Identity>(kind_); }
  bool is_ipsi() const {
    return std::holds_alternative<policy_kind::IpsiDown>(kind_) || std::holds_alternative<policy_kind::IpsiUp>(kind_);
  }

  // Caller's assertion that d is piecewise smooth invertible in t (continuous
  // treatments). Recorded for reporting only.
  bool smooth_invertible() const { return smooth_invertible_; }
  Policy& set_smooth_invertible(bool flag) {
    smooth_invertible_ = flag;
    return *this;
  }

  // Auxiliary column a shift policy reads its bound from, or empty.
  std::string required_column() const;

  // Fills named covariate / bound references from the dataset.
  Policy resolve(const TwoPartDataset& data) const;

  // Shifted treatment for rows [first_row, first_row + t.size()). first_row
  // only offsets the eps stream, so chunked application matches whole-vector
  // application.
  Vector apply(const Vector& t, const Matrix& x, std::size_t first_row = 0) const;
  Vector apply(const TwoPartDataset& data) const { return resolve(data).apply(data.t(), data.x()); }

  // The randomizer eps_i used for row i.
  double epsilon(std::size_t row) const;

  std::string describe() const;

 private:
  PolicyKind kind_;
  std::uint64_t seed_ = 0;
  bool smooth_invertible_ = false;
};

// Parses the policy mini-language:
//   identity | static:<v> | dynamic:<cov><op-gt><thr>?<hi>:<lo>
//   shift:<+/-delta>[,cap=<value>|,cap=col:<column>] | ipsi-down:<delta> | ipsi-up:<delta>
// Throws ConfigError on malformed input.
Policy parse_policy(std::string_view text, std::uint64_t seed = 0);

// g^d(t, x) / g(t, x) for binary-treatment IPSI policies given the fitted
// propensity g1 = P(T = 1 | X). Throws ConfigError for other policies and
// DataError for non-binary t or g1 outside (0, 1).
Vector analytic_ratio(const Policy& policy, const Vector& t, const Vector& g1);

}  // namespace htmle
