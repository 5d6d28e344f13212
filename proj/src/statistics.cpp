#include "crl/evaluation.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <spdlog/spdlog.h>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace crl {

namespace {

double sample_variance(std::span<const double> v, double mean) {
  double ss = 0.0;
  for (double x : v) {
    ss += (x - mean) * (x - mean);
  }
  return ss / static_cast<double>(v.size() - 1);
}

}  // namespace

double student_t_two_sided_p(double t, double df) {
  if (!(df > 0.0)) {
    throw std::invalid_argument("degrees of freedom must be positive");
  }
  if (std::isinf(t)) {
    return 0.0;
  }
  const boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

SampleSummary summarize(std::span<const double> values) {
  SampleSummary s;
  if (values.empty()) {
    return s;
  }
  double sum = 0.0;
  for (double v : values) {
    sum += v;
  }
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() >= 2) {
    s.std_error = std::sqrt(sample_variance(values, s.mean) / static_cast<double>(values.size()));
  }
  return s;
}

WelchResult welch_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) {
    throw std::invalid_argument("Welch's t-test needs at least two samples per group");
  }
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double mean_a = summarize(a).mean;
  const double mean_b = summarize(b).mean;
  const double va = sample_variance(a, mean_a) / na;
  const double vb = sample_variance(b, mean_b) / nb;
  WelchResult r;
  if (va + vb == 0.0) {
    r.df = std::numeric_limits<double>::quiet_NaN();
    if (mean_a == mean_b) {
      return {0.0, r.df, 1.0};
    }
    spdlog::warn("Welch's t-test on two constant samples with different means");
    r.t = mean_a > mean_b ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    r.p = 0.0;
    return r;
  }
  r.t = (mean_a - mean_b) / std::sqrt(va + vb);
  r.df = (va + vb) * (va + vb) / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
  r.p = student_t_two_sided_p(r.t, r.df);
  return r;
}

Improvement percent_improvement(double candidate, double reference, double baseline) {
  if (reference == baseline) {
    throw std::domain_error("percent improvement is undefined when the reference equals the baseline");
  }
  return {(candidate - baseline) / (reference - baseline) - 1.0, candidate >= baseline};
}

}  // namespace crl
