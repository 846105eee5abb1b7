#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

namespace confslate::metrics {

struct Rating {
  int confidence = 1;  // 1..4
  bool correct = false;
};

/// Confidence histograms split by correctness.
struct RatingCounts {
  std::array<long long, 4> correct{};
  std::array<long long, 4> incorrect{};

  void add(int confidence, bool is_correct);
  [[nodiscard]] long long n_correct() const noexcept;
  [[nodiscard]] long long n_incorrect() const noexcept;
};

RatingCounts count_ratings(std::span<const Rating> sample);

/// Area under the type-2 ROC built from hit rate P(conf >= k | correct) and
/// false-alarm rate P(conf >= k | incorrect), k = 4..2, anchored at (0,0) and
/// (1,1). Undefined (nullopt) without both classes.
std::optional<double> auroc2(std::span<const Rating> sample);
std::optional<double> auroc2(const RatingCounts& counts);

struct CalibrationBin {
  double mean_prediction = 0.0;
  double empirical_rate = 0.0;
  long long count = 0;
};

struct Prediction {
  double probability = 0.0;
  bool outcome = false;
};

/// Equal-width bins on [0, 1]; empty bins are omitted. Throws ValidationError
/// when n_bins < 1.
std::vector<CalibrationBin> calibration_curve(std::span<const Prediction> predictions, int n_bins);

/// Jensen-Shannon divergence with base-2 logs. Throws InvalidDistribution.
double jsd(std::span<const double> p, std::span<const double> q);

struct RegressionFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  double t_stat = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};

/// Least squares with a two-sided Student-t test on the slope (n - 2 df).
/// Throws InsufficientData for n < 3 or constant xs.
RegressionFit ols_fit(std::span<const double> xs, std::span<const double> ys);

enum class TTestMode { Pooled, Welch };

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
};

/// Two-sample two-sided t-test. Throws InsufficientData when a sample has
/// fewer than two values.
TTestResult t_test(std::span<const double> a, std::span<const double> b, TTestMode mode = TTestMode::Pooled);

/// Two-sided tail probability P(|T| >= |t|) for Student-t with df degrees.
double student_t_two_sided_p(double t, double df);

double mean(std::span<const double> xs);
/// Sample standard deviation (n - 1).
double stddev(std::span<const double> xs);

}  // namespace confslate::metrics
