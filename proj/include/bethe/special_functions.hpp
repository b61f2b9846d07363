#pragma once

#include <functional>

namespace bethe::sf {

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112352797;
inline constexpr double kHalfLog2Pi = 0.91893853320467274178032973640561763986;

/// Standard normal density.
double npdf(double x);

/// Standard normal CDF. Monotone, saturates cleanly in both tails.
double ndtr(double x);

/// log of the standard normal CDF, finite and accurate far into the left
/// tail (relative accuracy ~1e-12 down to x = -40 and beyond).
double log_ndtr(double x);

/// Inverse Mills ratio h(x) = npdf(x)/ndtr(x). Stable for x << 0 where it
/// grows like -x, and for x >> 0 where it decays like npdf(x).
double mills_ratio(double x);

/// Closed-form probit-Gaussian convolution: the probability that a probit
/// unit with scale c fires for label y (+-1) when its input is Gaussian with
/// mean mu_f and variance v_f.
double probit_gauss_conv(double y, double mu_f, double v_f, double c);

/// Negative log density of y under a Gaussian with mean mu_f and total
/// variance V (observation noise plus message variance). Includes the
/// 0.5*log(2*pi) constant.
double gauss_conv_nll(double y, double mu_f, double V);

/// Inverse of ndtr to ~1e-9 absolute (Wichura's AS241 rational approximation).
double ndtri(double p);

/// log(1 + exp(x)) without overflow.
double softplus(double x);

/// Logistic sigmoid, the softplus derivative.
double sigmoid(double x);

}  // namespace bethe::sf
