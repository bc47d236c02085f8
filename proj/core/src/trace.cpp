#include "perfpred/trace.hpp"

#include <cmath>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

namespace perfpred {

std::string format_real(double v) { return fmt::format("{}", v); }

std::string digest_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", h);
}

Trace::Trace(std::uint64_t seed, std::string config_digest)
    : seed_(seed), config_digest_(std::move(config_digest)) {}

void Trace::append(TraceRecord r) {
  if (!records_.empty()) {
    const auto& last = records_.back();
    if (r.k <= last.k)
      throw std::invalid_argument(fmt::format("Trace: step index {} not after {}", r.k, last.k));
    if (r.deployments < last.deployments)
      throw std::invalid_argument("Trace: deployment counter decreased");
    if (r.samples < last.samples) throw std::invalid_argument("Trace: sample counter decreased");
    if (r.theta.size() != last.theta.size())
      throw std::invalid_argument("Trace: iterate dimension changed");
  }
  const bool finite = r.theta.allFinite() && std::isfinite(r.pr_est) && std::isfinite(r.pr_se) &&
                      (!r.dist_ps || std::isfinite(*r.dist_ps)) &&
                      (!r.dist_po || std::isfinite(*r.dist_po));
  if (!finite) throw std::invalid_argument(fmt::format("Trace: nonfinite value at step {}", r.k));
  records_.push_back(std::move(r));
}

void Trace::add_diagnostic(const std::string& name, double value) {
  diagnostics_[name].push_back(value);
}

void Trace::write_csv(std::ostream& out) const {
  const Index d = records_.empty() ? 0 : records_.front().theta.size();
  out << "k";
  for (Index i = 0; i < d; ++i) out << ",theta_" << i;
  out << ",deployments,samples,pr_est,pr_se,dist_ps,dist_po\n";
  for (const auto& r : records_) {
    out << r.k;
    for (Index i = 0; i < d; ++i) out << ',' << format_real(r.theta[i]);
    out << ',' << r.deployments << ',' << r.samples << ',' << format_real(r.pr_est) << ','
        << format_real(r.pr_se) << ',';
    if (r.dist_ps) out << format_real(*r.dist_ps);
    out << ',';
    if (r.dist_po) out << format_real(*r.dist_po);
    out << '\n';
  }
}

std::string Trace::to_csv() const {
  std::ostringstream os;
  write_csv(os);
  return os.str();
}

nlohmann::json Trace::sidecar() const {
  nlohmann::json j;
  j["seed"] = seed_;
  j["config_digest"] = config_digest_;
  j["steps"] = records_.size();
  j["meta"] = meta_;
  j["diagnostics"] = diagnostics_;
  return j;
}

}  // namespace perfpred
