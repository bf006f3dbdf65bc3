#include "htmle/policy.hpp"

#include "htmle/error.hpp"
#include "htmle/rng.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

namespace htmle {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void check_ipsi_delta(double delta) {
  if (!(delta > 0.0 && delta <= 1.0)) throw ConfigError("IPSI risk ratio must lie in (0, 1]");
}

void check_binary(const Vector& t) {
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    if (t[i] != 0.0 && t[i] != 1.0) {
      throw DataError("IPSI policy requires a binary treatment; found " + std::to_string(t[i]) + " at index " +
                      std::to_string(i));
    }
  }
}

double parse_number(std::string_view s, std::string_view context) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(value)) {
    throw ConfigError("policy: cannot parse number '" + std::string(s) + "' in " + std::string(context));
  }
  return value;
}

}  // namespace

Policy::Policy(PolicyKind kind, std::uint64_t seed) : kind_(std::move(kind)), seed_(seed) {
  std::visit(overloaded{[](const policy_kind::IpsiDown& k) { check_ipsi_delta(k.delta); },
                        [](const policy_kind::IpsiUp& k) { check_ipsi_delta(k.delta); },
                        [](const auto&) {}},
             kind_);
}

Policy Policy::dynamic(int covariate, double threshold, double hi, double lo) {
  return Policy(policy_kind::DynamicThreshold{covariate, {}, threshold, hi, lo});
}

Policy Policy::shift(double delta, std::optional<double> cap) {
  return Policy(policy_kind::AdditiveShift{delta, cap, {}, {}});
}

Policy Policy::shift(double delta, Vector cap) {
  return Policy(policy_kind::AdditiveShift{delta, std::nullopt, {}, std::move(cap)});
}

Policy Policy::ipsi_down(double delta, std::uint64_t seed) { return Policy(policy_kind::IpsiDown{delta}, seed); }
Policy Policy::ipsi_up(double delta, std::uint64_t seed) { return Policy(policy_kind::IpsiUp{delta}, seed); }

std::string Policy::required_column() const {
  if (auto* s = std::get_if<policy_kind::AdditiveShift>(&kind_)) return s->cap_column;
  return {};
}

Policy Policy::resolve(const TwoPartDataset& data) const {
  Policy out = *this;
  if (auto* d = std::get_if<policy_kind::DynamicThreshold>(&out.kind_)) {
    if (!d->covariate_name.empty()) {
      int idx = data.covariate_index(d->covariate_name);
      if (idx < 0 && d->covariate_name.size() > 1 && d->covariate_name[0] == 'x') {
        // x<k>: k-th covariate, 1-based
        int k = 0;
        auto name = std::string_view(d->covariate_name).substr(1);
        auto [ptr, ec] = std::from_chars(name.data(), name.data() + name.size(), k);
        if (ec == std::errc{} && ptr == name.data() + name.size()) idx = k - 1;
      }
      if (idx < 0 || idx >= static_cast<int>(data.covariates())) {
        throw ConfigError("policy: covariate '" + d->covariate_name + "' not found");
      }
      d->covariate = idx;
    }
  }
  if (auto* s = std::get_if<policy_kind::AdditiveShift>(&out.kind_)) {
    if (!s->cap_column.empty()) {
      const Vector* col = data.aux(s->cap_column);
      if (col == nullptr) throw ConfigError("policy: bound column '" + s->cap_column + "' not loaded");
      s->cap_values = *col;
    }
  }
  return out;
}

double Policy::epsilon(std::size_t row) const {
  return bits_to_unit(mix64(stream_seed(seed_, 0x1b5d) + static_cast<std::uint64_t>(row)));
}

Vector Policy::apply(const Vector& t, const Matrix& x, std::size_t first_row) const {
  if (x.rows() != t.size()) throw DataError("policy: covariate rows do not match treatment length");
  const Eigen::Index n = t.size();
  Vector out(n);
  std::visit(
      overloaded{
          [&](const policy_kind::Identity&) { out = t; },
          [&](const policy_kind::Static& k) { out.setConstant(k.value); },
          [&](const policy_kind::DynamicThreshold& k) {
            if (k.covariate < 0 || k.covariate >= x.cols()) {
              throw ConfigError("policy: dynamic rule covariate is unresolved or out of range");
            }
            for (Eigen::Index i = 0; i < n; ++i) out[i] = x(i, k.covariate) > k.threshold ? k.hi : k.lo;
          },
          [&](const policy_kind::AdditiveShift& k) {
            if (!k.cap_column.empty() && k.cap_values.size() == 0) {
              throw ConfigError("policy: bound column '" + k.cap_column + "' is unresolved");
            }
            if (k.cap_values.size() != 0 && k.cap_values.size() != n) {
              throw DataError("policy: bound vector length does not match treatment length");
            }
            for (Eigen::Index i = 0; i < n; ++i) {
              const double shifted = t[i] + k.delta;
              double cap = std::numeric_limits<double>::infinity();
              if (k.cap_constant) cap = *k.cap_constant;
              if (k.cap_values.size() != 0) cap = k.cap_values[i];
              out[i] = shifted <= cap ? shifted : t[i];
            }
          },
          [&](const policy_kind::IpsiDown& k) {
            check_binary(t);
            for (Eigen::Index i = 0; i < n; ++i) {
              out[i] = epsilon(first_row + static_cast<std::size_t>(i)) < k.delta ? t[i] : 0.0;
            }
          },
          [&](const policy_kind::IpsiUp& k) {
            check_binary(t);
            for (Eigen::Index i = 0; i < n; ++i) {
              out[i] = epsilon(first_row + static_cast<std::size_t>(i)) < k.delta ? t[i] : 1.0;
            }
          },
      },
      kind_);
  return out;
}

std::string Policy::describe() const {
  std::ostringstream os;
  os.precision(12);
  std::visit(overloaded{
                 [&](const policy_kind::Identity&) { os << "identity"; },
                 [&](const policy_kind::Static& k) { os << "static:" << k.value; },
                 [&](const policy_kind::DynamicThreshold& k) {
                   os << "dynamic:";
                   if (!k.covariate_name.empty()) {
                     os << k.covariate_name;
                   } else {
                     os << 'x' << (k.covariate + 1);
                   }
                   os << '>' << k.threshold << '?' << k.hi << ':' << k.lo;
                 },
                 [&](const policy_kind::AdditiveShift& k) {
                   os << "shift:" << (k.delta >= 0 ? "+" : "") << k.delta;
                   if (!k.cap_column.empty()) {
                     os << ",cap=col:" << k.cap_column;
                   } else if (k.cap_constant) {
                     os << ",cap=" << *k.cap_constant;
                   } else if (k.cap_values.size() != 0) {
                     os << ",cap=<vector>";
                   }
                 },
                 [&](const policy_kind::IpsiDown& k) { os << "ipsi-down:" << k.delta; },
                 [&](const policy_kind::IpsiUp& k) { os << "ipsi-up:" << k.delta; },
             },
             kind_);
  return os.str();
}

Policy parse_policy(std::string_view text, std::uint64_t seed) {
  const std::string context = "'" + std::string(text) + "'";
  if (text == "identity") return Policy::identity();
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) throw ConfigError("policy: unknown policy " + context);
  const auto head = text.substr(0, colon);
  const auto body = text.substr(colon + 1);

  if (head == "static") return Policy::static_value(parse_number(body, context));
  if (head == "ipsi-down") return Policy::ipsi_down(parse_number(body, context), seed);
  if (head == "ipsi-up") return Policy::ipsi_up(parse_number(body, context), seed);
  if (head == "shift") {
    policy_kind::AdditiveShift k;
    const auto comma = body.find(',');
    k.delta = parse_number(body.substr(0, comma), context);
    if (comma != std::string_view::npos) {
      auto opt = body.substr(comma + 1);
      if (opt.substr(0, 4) != "cap=") throw ConfigError("policy: expected cap= in " + context);
      opt.remove_prefix(4);
      if (opt.substr(0, 4) == "col:") {
        opt.remove_prefix(4);
        if (opt.empty()) throw ConfigError("policy: empty bound column in " + context);
        k.cap_column = std::string(opt);
      } else {
        k.cap_constant = parse_number(opt, context);
      }
    }
    return Policy(std::move(k));
  }
  if (head == "dynamic") {
    // <cov>><thr>?<hi>:<lo>
    const auto gt = body.find('>');
    const auto q = body.find('?');
    const auto c = body.rfind(':');
    if (gt == std::string_view::npos || q == std::string_view::npos || c == std::string_view::npos || !(gt < q && q < c)) {
      throw ConfigError("policy: dynamic rule must look like x3>0.2?1:0, got " + context);
    }
    policy_kind::DynamicThreshold k;
    k.covariate_name = std::string(body.substr(0, gt));
    if (k.covariate_name.empty()) throw ConfigError("policy: dynamic rule has no covariate in " + context);
    k.threshold = parse_number(body.substr(gt + 1, q - gt - 1), context);
    k.hi = parse_number(body.substr(q + 1, c - q - 1), context);
    k.lo = parse_number(body.substr(c + 1), context);
    return Policy(std::move(k));
  }
  throw ConfigError("policy: unknown policy " + context);
}

Vector analytic_ratio(const Policy& policy, const Vector& t, const Vector& g1) {
  if (!policy.is_ipsi()) throw ConfigError("analytic density ratio is only available for IPSI policies");
  if (t.size() != g1.size()) throw DataError("analytic_ratio: t and propensity lengths differ");
  check_binary(t);
  Vector r(t.size());
  const bool down = std::holds_alternative<policy_kind::IpsiDown>(policy.kind());
  const double delta = down ? std::get<policy_kind::IpsiDown>(policy.kind()).delta
                            : std::get<policy_kind::IpsiUp>(policy.kind()).delta;
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    const double p1 = g1[i];
    if (!(p1 > 0.0 && p1 < 1.0)) {
      throw DataError("analytic_ratio: propensity " + std::to_string(p1) + " at index " + std::to_string(i) +
                      " violates positivity");
    }
    const double p0 = 1.0 - p1;
    const double ti = t[i];
    if (down) {
      // g^d(t,x) = t*delta*g(1,x) + (1-t)*(1 - delta*g(1,x))
      const double gd = ti * delta * p1 + (1.0 - ti) * (1.0 - delta * p1);
      r[i] = gd / (ti == 1.0 ? p1 : p0);
    } else {
      // g^d(t,x) = t*(1 - delta*g(0,x)) + (1-t)*delta*g(0,x)
      const double gd = ti * (1.0 - delta * p0) + (1.0 - ti) * delta * p0;
      r[i] = gd / (ti == 1.0 ? p1 : p0);
    }
  }
  return r;
}

}  // namespace htmle
