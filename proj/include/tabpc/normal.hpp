#pragma once

namespace tabpc {

/// Standard normal CDF.
double normal_cdf(double z);

/// Standard normal quantile function for p in (0, 1).  Acklam's rational
/// approximation (|relative error| < 1.15e-9) followed by one Halley step
/// against erfc, which brings it to near machine precision.  Returns -inf/inf
/// at p = 0/1 and NaN outside [0, 1].
double normal_ppf(double p);

double normal_log_pdf(double z);

}  // namespace tabpc
