#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "perfpred/core.hpp"

namespace perfpred {

struct TraceRecord {
  std::size_t k = 0;
  ParamPoint theta;
  std::size_t deployments = 0;
  std::size_t samples = 0;
  double pr_est = 0.0;
  double pr_se = 0.0;
  std::optional<double> dist_ps;
  std::optional<double> dist_po;
};

/// Per-iteration record of a solver run. append() enforces strictly
/// increasing step indices, nondecreasing deployment counts and finite values.
class Trace {
 public:
  Trace() = default;
  Trace(std::uint64_t seed, std::string config_digest);

  void append(TraceRecord record);

  const std::vector<TraceRecord>& records() const noexcept { return records_; }
  bool empty() const noexcept { return records_.empty(); }
  std::size_t size() const noexcept { return records_.size(); }
  const TraceRecord& back() const { return records_.back(); }
  const TraceRecord& operator[](std::size_t i) const { return records_[i]; }

  std::uint64_t seed() const noexcept { return seed_; }
  const std::string& config_digest() const noexcept { return config_digest_; }
  void set_config_digest(std::string digest) { config_digest_ = std::move(digest); }

  /// Named per-step diagnostic series (bias proxy, inner products, ...),
  /// serialized into the JSON sidecar.
  void add_diagnostic(const std::string& name, double value);
  const std::map<std::string, std::vector<double>>& diagnostics() const noexcept {
    return diagnostics_;
  }

  /// Free-form metadata for the sidecar: constants, evaluation path, flags.
  nlohmann::json& meta() noexcept { return meta_; }
  const nlohmann::json& meta() const noexcept { return meta_; }

  /// Header: k,theta_0..theta_{d-1},deployments,samples,pr_est,pr_se,dist_ps,dist_po.
  /// Absent distances are written as empty fields.
  void write_csv(std::ostream& out) const;
  std::string to_csv() const;

  /// Sidecar with seed, config digest, metadata and diagnostics.
  nlohmann::json sidecar() const;

 private:
  std::uint64_t seed_ = 0;
  std::string config_digest_;
  std::vector<TraceRecord> records_;
  std::map<std::string, std::vector<double>> diagnostics_;
  nlohmann::json meta_ = nlohmann::json::object();
};

/// Shortest round-trip decimal representation used by every CSV writer.
std::string format_real(double v);

/// 64-bit FNV-1a digest of `text`, as 16 lowercase hex digits.
std::string digest_hex(std::string_view text);

}  // namespace perfpred
