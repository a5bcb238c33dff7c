#pragma once

namespace wsi {

/// Standard normal CDF, evaluated through erfc so both tails keep full
/// relative precision.
double normal_cdf(double x) noexcept;

/// Inverse of normal_cdf on (0, 1). Rational initial guess refined by one
/// Halley step; absolute error below 1e-14 over (1e-300, 1 - 1e-16).
double normal_quantile(double prob);

/// Upper alpha/2 critical value, e.g. 1.959964 for alpha = 0.05.
double z_critical(double alpha);

} // namespace wsi
