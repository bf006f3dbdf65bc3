#include "htmle/report.hpp"

#include <json.hpp>

#include <cmath>
#include <iomanip>
#include <sstream>

namespace htmle {

namespace {

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

std::string variance_label(const EstimateReport& r) {
  if (r.variance_method == VarianceMethod::Bootstrap) return "bootstrap(" + std::to_string(r.bootstrap_b) + ")";
  return "eif";
}

}  // namespace

std::string reports_jsonl(std::span<const EstimateReport> reports, bool include_eif) {
  std::string out;
  for (const auto& r : reports) {
    nlohmann::json j;
    j["estimator"] = method_name(r.method);
    j["policy"] = r.policy;
    j["n"] = r.n;
    j["psi"] = number_or_null(r.psi);
    j["std_err"] = number_or_null(r.std_err);
    j["ci_low"] = number_or_null(r.ci_low);
    j["ci_high"] = number_or_null(r.ci_high);
    j["variance"] = variance_label(r);
    j["eif_std_err"] = number_or_null(r.eif_std_err);
    j["mean_eif"] = number_or_null(r.mean_eif);
    j["eps_m"] = number_or_null(r.eps_m);
    j["eps_q"] = number_or_null(r.eps_q);
    j["eps"] = number_or_null(r.eps);
    j["min_r"] = number_or_null(r.min_r);
    j["max_r"] = number_or_null(r.max_r);
    j["converged"] = r.converged;
    j["degenerate_variance"] = r.degenerate_variance;
    j["warnings"] = r.warnings;
    if (include_eif) j["eif"] = std::vector<double>(r.eif.data(), r.eif.data() + r.eif.size());
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string reports_csv(std::span<const EstimateReport> reports) {
  std::ostringstream os;
  os << std::setprecision(12);
  os << "estimator,policy,n,psi,std_err,ci_low,ci_high,variance,mean_eif,eps_m,eps_q,eps,min_r,max_r,converged\n";
  for (const auto& r : reports) {
    os << method_name(r.method) << ",\"" << r.policy << "\"," << r.n << ',' << r.psi << ',' << r.std_err << ','
       << r.ci_low << ',' << r.ci_high << ',' << variance_label(r) << ',' << r.mean_eif << ',';
    auto opt = [&](double v) {
      if (std::isfinite(v)) os << v;
      os << ',';
    };
    opt(r.eps_m);
    opt(r.eps_q);
    opt(r.eps);
    os << r.min_r << ',' << r.max_r << ',' << (r.converged ? "true" : "false") << '\n';
  }
  return os.str();
}

std::string reports_table(std::span<const EstimateReport> reports) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << std::left << std::setw(10) << "estimator" << std::right << std::setw(14) << "psi" << std::setw(12) << "std_err"
     << std::setw(14) << "ci_low" << std::setw(14) << "ci_high" << "  variance\n";
  for (const auto& r : reports) {
    os << std::left << std::setw(10) << method_name(r.method) << std::right << std::setw(14) << r.psi << std::setw(12)
       << r.std_err << std::setw(14) << r.ci_low << std::setw(14) << r.ci_high << "  " << variance_label(r) << '\n';
  }
  if (!reports.empty()) os << "\npolicy: " << reports.front().policy << "   n = " << reports.front().n << '\n';
  os << std::setprecision(6);
  for (const auto& r : reports) {
    os << method_name(r.method) << ": mean EIF " << std::scientific << std::setprecision(3) << r.mean_eif << std::fixed
       << std::setprecision(6);
    if (std::isfinite(r.eps_m)) os << ", eps_m " << r.eps_m << ", eps_q " << r.eps_q;
    if (std::isfinite(r.eps)) os << ", eps " << r.eps;
    os << ", r in [" << r.min_r << ", " << r.max_r << "], " << (r.converged ? "converged" : "NOT converged");
    if (r.variance_method == VarianceMethod::Bootstrap) os << ", EIF std_err " << r.eif_std_err;
    os << '\n';
    for (const auto& w : r.warnings) os << "  warning: " << w << '\n';
  }
  return os.str();
}

}  // namespace htmle
