#include "confslate/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>

#include "confslate/error.hpp"

namespace confslate::metrics {

void RatingCounts::add(int confidence, bool is_correct) {
  if (confidence < 1 || confidence > 4) {
    throw Error(ErrorCode::InvalidConfidence, fmt::format("confidence {} not in 1..4", confidence));
  }
  auto& bins = is_correct ? correct : incorrect;
  ++bins[static_cast<std::size_t>(confidence - 1)];
}

long long RatingCounts::n_correct() const noexcept {
  return std::accumulate(correct.begin(), correct.end(), 0LL);
}

long long RatingCounts::n_incorrect() const noexcept {
  return std::accumulate(incorrect.begin(), incorrect.end(), 0LL);
}

RatingCounts count_ratings(std::span<const Rating> sample) {
  RatingCounts counts;
  for (const auto& r : sample) {
    counts.add(r.confidence, r.correct);
  }
  return counts;
}

std::optional<double> auroc2(const RatingCounts& counts) {
  const long long nc = counts.n_correct();
  const long long ni = counts.n_incorrect();
  if (nc == 0 || ni == 0) {
    return std::nullopt;
  }
  // Walk the criterion from strictest (conf >= 4) to laxest (conf >= 1).
  double area = 0.0;
  long long hits = 0;
  long long false_alarms = 0;
  double prev_h = 0.0;
  double prev_f = 0.0;
  for (std::size_t k = 4; k-- > 0;) {
    hits += counts.correct[k];
    false_alarms += counts.incorrect[k];
    const double h = static_cast<double>(hits) / static_cast<double>(nc);
    const double f = static_cast<double>(false_alarms) / static_cast<double>(ni);
    area += (f - prev_f) * (h + prev_h) / 2.0;
    prev_h = h;
    prev_f = f;
  }
  return area;
}

std::optional<double> auroc2(std::span<const Rating> sample) {
  return auroc2(count_ratings(sample));
}

std::vector<CalibrationBin> calibration_curve(std::span<const Prediction> predictions, int n_bins) {
  if (n_bins < 1) {
    throw Error(ErrorCode::ValidationError, "calibration_curve needs at least one bin");
  }
  std::vector<double> sum_p(static_cast<std::size_t>(n_bins), 0.0);
  std::vector<long long> positives(static_cast<std::size_t>(n_bins), 0);
  std::vector<long long> counts(static_cast<std::size_t>(n_bins), 0);
  for (const auto& pr : predictions) {
    if (!(pr.probability >= 0.0 && pr.probability <= 1.0)) {
      throw Error(ErrorCode::InvalidProbability, fmt::format("prediction {} outside [0,1]", pr.probability));
    }
    const auto bin = static_cast<std::size_t>(
        std::min(static_cast<int>(pr.probability * n_bins), n_bins - 1));
    sum_p[bin] += pr.probability;
    positives[bin] += pr.outcome ? 1 : 0;
    ++counts[bin];
  }
  std::vector<CalibrationBin> out;
  for (std::size_t b = 0; b < counts.size(); ++b) {
    if (counts[b] == 0) {
      continue;
    }
    const auto n = static_cast<double>(counts[b]);
    out.push_back({sum_p[b] / n, static_cast<double>(positives[b]) / n, counts[b]});
  }
  return out;
}

namespace {

void check_distribution(std::span<const double> p, const char* name) {
  double total = 0.0;
  for (double v : p) {
    if (!std::isfinite(v) || v < 0.0) {
      throw Error(ErrorCode::InvalidDistribution, fmt::format("{} has a negative or non-finite entry", name));
    }
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw Error(ErrorCode::InvalidDistribution, fmt::format("{} sums to {}, not 1", name, total));
  }
}

}  // namespace

double jsd(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size() || p.empty()) {
    throw Error(ErrorCode::InvalidDistribution, "jsd needs two non-empty vectors of equal length");
  }
  check_distribution(p, "P");
  check_distribution(q, "Q");
  double kl_p = 0.0;
  double kl_q = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) {
      kl_p += p[i] * std::log2(p[i] / m);
    }
    if (q[i] > 0.0) {
      kl_q += q[i] * std::log2(q[i] / m);
    }
  }
  return std::clamp(0.5 * kl_p + 0.5 * kl_q, 0.0, 1.0);
}

double mean(std::span<const double> xs) {
  if (xs.empty()) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double stddev(std::span<const double> xs) {
  if (xs.size() < 2) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) {
    ss += (x - m) * (x - m);
  }
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

double student_t_two_sided_p(double t, double df) {
  if (std::isnan(t)) {
    return 1.0;
  }
  if (std::isinf(t)) {
    return 0.0;
  }
  const boost::math::students_t dist(df);
  return std::clamp(2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))), 0.0, 1.0);
}

RegressionFit ols_fit(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 3) {
    throw Error(ErrorCode::InsufficientData, "ols_fit needs at least 3 paired points");
  }
  const auto n = static_cast<double>(xs.size());
  const double mx = mean(xs);
  const double my = mean(ys);
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0.0) {
    throw Error(ErrorCode::InsufficientData, "ols_fit: xs are all equal");
  }
  RegressionFit fit;
  fit.n = xs.size();
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double r = ys[i] - (fit.intercept + fit.slope * xs[i]);
    ss_res += r * r;
  }
  fit.r_squared = syy == 0.0 ? 0.0 : std::clamp(1.0 - ss_res / syy, 0.0, 1.0);

  const double df = n - 2.0;
  const double se = std::sqrt(ss_res / df / sxx);
  if (se == 0.0) {
    fit.t_stat = fit.slope == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), fit.slope);
  } else {
    fit.t_stat = fit.slope / se;
  }
  fit.p_value = student_t_two_sided_p(fit.t_stat, df);
  return fit;
}

TTestResult t_test(std::span<const double> a, std::span<const double> b, TTestMode mode) {
  if (a.size() < 2 || b.size() < 2) {
    throw Error(ErrorCode::InsufficientData, "t_test needs at least two values per sample");
  }
  const auto na = static_cast<double>(a.size());
  const auto nb = static_cast<double>(b.size());
  const double diff = mean(a) - mean(b);
  const double va = std::pow(stddev(a), 2);
  const double vb = std::pow(stddev(b), 2);

  TTestResult r;
  double se = 0.0;
  if (mode == TTestMode::Pooled) {
    r.df = na + nb - 2.0;
    const double pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / r.df;
    se = std::sqrt(pooled * (1.0 / na + 1.0 / nb));
  } else {
    const double sa = va / na;
    const double sb = vb / nb;
    se = std::sqrt(sa + sb);
    const double denom = sa * sa / (na - 1.0) + sb * sb / (nb - 1.0);
    r.df = denom == 0.0 ? na + nb - 2.0 : (sa + sb) * (sa + sb) / denom;
  }
  if (se == 0.0) {
    r.t = diff == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), diff);
  } else {
    r.t = diff / se;
  }
  r.p = student_t_two_sided_p(r.t, r.df);
  return r;
}

}  // namespace confslate::metrics
