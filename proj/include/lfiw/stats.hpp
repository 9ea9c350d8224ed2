#pragma once

#include <span>

namespace lfiw::stats {

double mean(std::span<const double> x);
/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
double stddev(std::span<const double> x);
double standard_error(std::span<const double> x);

/// sqrt(se_a^2 + se_b^2): standard error of the difference of two means.
double pooled_standard_error(std::span<const double> a, std::span<const double> b);
/// sqrt((s_a^2 + s_b^2) / 2).
double pooled_stddev(std::span<const double> a, std::span<const double> b);

struct PairedTTest {
  double mean_difference = 0.0;
  double t = 0.0;
  int dof = 0;
  double p_value = 1.0;  ///< two-sided
};

/// Two-sided paired t-test on a - b. Identical samples give p = 1.
PairedTTest paired_t_test(std::span<const double> a, std::span<const double> b);

/// Pearson chi-squared goodness-of-fit p-value for counts against equal
/// expected frequencies.
double chi_squared_uniform_p_value(std::span<const double> counts);

}  // namespace lfiw::stats
