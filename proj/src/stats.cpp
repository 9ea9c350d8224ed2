#include "lfiw/stats.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace lfiw::stats {

double mean(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("mean of an empty sample");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double stddev(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

double standard_error(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("standard error of an empty sample");
  return stddev(x) / std::sqrt(static_cast<double>(x.size()));
}

double pooled_standard_error(std::span<const double> a, std::span<const double> b) {
  const double sa = standard_error(a);
  const double sb = standard_error(b);
  return std::sqrt(sa * sa + sb * sb);
}

double pooled_stddev(std::span<const double> a, std::span<const double> b) {
  const double sa = stddev(a);
  const double sb = stddev(b);
  return std::sqrt((sa * sa + sb * sb) / 2.0);
}

PairedTTest paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("paired_t_test: need two equal samples of size >= 2");
  std::vector<double> diff(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
  PairedTTest out;
  out.dof = static_cast<int>(diff.size()) - 1;
  out.mean_difference = mean(diff);
  const double se = standard_error(diff);
  if (se == 0.0) {
    out.t = out.mean_difference == 0.0 ? 0.0 : std::copysign(INFINITY, out.mean_difference);
    out.p_value = out.mean_difference == 0.0 ? 1.0 : 0.0;
    return out;
  }
  out.t = out.mean_difference / se;
  const boost::math::students_t dist(out.dof);
  out.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(out.t)));
  return out;
}

double chi_squared_uniform_p_value(std::span<const double> counts) {
  if (counts.size() < 2) throw std::invalid_argument("chi-squared test needs at least two cells");
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  const double expected = total / static_cast<double>(counts.size());
  double stat = 0.0;
  for (double c : counts) stat += (c - expected) * (c - expected) / expected;
  const boost::math::chi_squared dist(static_cast<double>(counts.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

}  // namespace lfiw::stats
