#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <array>
#include <cstddef>
#include <vector>

namespace perfpred::collective {

/// Exact probabilities; every table operation is closed over the rationals.
using Rational = boost::multiprecision::cpp_rational;

/// Joint law over a finite feature domain X = {0, ..., n-1} and labels {0, 1}.
class TabularPopulation {
 public:
  /// mass[x][y]; entries must be nonnegative and sum to 1.
  explicit TabularPopulation(std::vector<std::array<Rational, 2>> mass);

  /// From integer weights, normalized exactly.
  static TabularPopulation from_weights(const std::vector<std::array<long long, 2>>& weights);
  /// From doubles (converted exactly); the total must be 1 within 1e-12 and is
  /// then renormalized exactly.
  static TabularPopulation from_doubles(const std::vector<std::array<double, 2>>& mass);

  std::size_t domain_size() const noexcept { return mass_.size(); }
  const Rational& mass(std::size_t x, int y) const { return mass_.at(x)[static_cast<std::size_t>(y)]; }
  Rational marginal(std::size_t x) const { return mass_.at(x)[0] + mass_.at(x)[1]; }
  Rational total() const;

 private:
  std::vector<std::array<Rational, 2>> mass_;
};

/// Collective strategy: plant g(x) and relabel to target_label, with
/// participating fraction alpha in (0, 1].
struct SignalPlan {
  std::vector<std::size_t> signal;  ///< g as a table, total on X
  int target_label = 1;
  Rational alpha{1};

  void validate(std::size_t domain_size) const;
};

/// xi = P0-mass (feature marginal) of the image set g(X).
Rational signal_density(const TabularPopulation& base, const SignalPlan& plan);

/// alpha P* + (1 - alpha) P0 with P* the law of (g(x), y*) for (x, y) ~ P0.
TabularPopulation mixture(const TabularPopulation& base, const SignalPlan& plan);

/// Bayes-optimal classifier on the mixture. Ties and zero-mass points go to
/// the label opposite target_label; zero-mass points are listed.
struct Classifier {
  std::vector<int> labels;
  std::vector<std::size_t> zero_mass_points;

  int operator()(std::size_t x) const { return labels.at(x); }
};

Classifier bayes_firm(const TabularPopulation& mixed, int target_label);

/// S(alpha) = P_{x ~ P0}{ f(g(x)) = y* }, exact.
Rational success_probability(const TabularPopulation& base, const SignalPlan& plan,
                             const Classifier& firm);

/// 1 - ((1 - alpha) / alpha) * xi.
Rational success_lower_bound(const Rational& alpha, const Rational& xi);

struct RevenueModel {
  std::vector<Rational> baseline;  ///< h(x), must satisfy h(g(x)) = h(x)
  Rational beta_perf{0};
  Rational noise_mean{0};          ///< mean of Z; must be zero
};

/// E[Y | C] - E[h(X)] for Y = h(X) + beta f(X) + Z, evaluated by brute-force
/// expectation over the tabular law. Requires target_label == 1 (f = 1 is
/// promotion). Throws naming the first x with h(g(x)) != h(x).
Rational revenue_uplift(const TabularPopulation& base, const SignalPlan& plan,
                        const Classifier& firm, const RevenueModel& revenue);

/// Number of single-point label flips that would lower the mixture 0-1 risk
/// (zero for a Bayes-optimal classifier).
std::size_t improving_flips(const TabularPopulation& mixed, const Classifier& firm);

/// Total variation distance between two tables on the same domain.
Rational total_variation(const TabularPopulation& p, const TabularPopulation& q);

double to_double(const Rational& r);

}  // namespace perfpred::collective
