#pragma once

// Autocorrelation-method linear prediction with white-noise compensation.
//
// Sign convention: x[n] is predicted as sum_{i=1..p} a_i x[n-i], so
// `coefficients[i-1]` holds a_i (no leading 1, no sign flip).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "plclab/error.hpp"

namespace plclab {

// Biased estimate r[k] = (1/N) sum_{n=k}^{N-1} x[n] x[n-k], k = 0..max_lag.
inline std::vector<double> autocorrelation(std::span<const double> x,
                                           std::size_t max_lag) {
  std::vector<double> r(max_lag + 1, 0.0);
  const std::size_t n = x.size();
  if (n == 0) return r;
  for (std::size_t k = 0; k <= max_lag && k < n; ++k) {
    double acc = 0.0;
    for (std::size_t i = k; i < n; ++i) acc += x[i] * x[i - k];
    r[k] = acc / static_cast<double>(n);
  }
  return r;
}

struct LevinsonResult {
  std::vector<double> coefficients;  // a_1..a_p
  std::vector<double> reflection;    // k_1..k_p (zero beyond stable_order)
  double error = 0.0;                // final prediction-error power
  std::size_t stable_order = 0;      // orders actually solved
};

// Solves the Toeplitz normal equations R a = r[1..p] in O(p^2). If the
// prediction-error power stops being positive (or r[0] <= 0) the recursion
// halts and the remaining coefficients stay zero.
inline LevinsonResult levinson_durbin(std::span<const double> r,
                                      std::size_t order) {
  if (r.size() < order + 1) {
    throw Error("levinson_durbin: need order+1 autocorrelation lags");
  }
  LevinsonResult out;
  out.coefficients.assign(order, 0.0);
  out.reflection.assign(order, 0.0);
  double err = r[0];
  if (!(err > 0.0)) return out;

  std::vector<double>& a = out.coefficients;
  std::vector<double> prev(order, 0.0);
  for (std::size_t m = 1; m <= order; ++m) {
    double acc = r[m];
    for (std::size_t i = 1; i < m; ++i) acc -= a[i - 1] * r[m - i];
    const double k = acc / err;
    const double next_err = err * (1.0 - k * k);
    if (!(next_err > 0.0) || !std::isfinite(k)) break;

    std::copy(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(m - 1),
              prev.begin());
    for (std::size_t i = 1; i < m; ++i) a[i - 1] = prev[i - 1] - k * prev[m - i - 1];
    a[m - 1] = k;
    out.reflection[m - 1] = k;
    err = next_err;
    out.stable_order = m;
  }
  out.error = err;
  return out;
}

struct ArModel {
  std::vector<double> coefficients;  // a_1..a_p
  std::vector<double> reflection;
  std::vector<double> context;       // samples the model was fitted on
  double noise_comp = 0.0;

  std::size_t order() const noexcept { return coefficients.size(); }
  bool fitted() const noexcept { return !coefficients.empty(); }
};

// Fits an AR(order) model on `context`: biased autocorrelation, r[0] scaled
// by (1 + noise_comp), Levinson-Durbin.
inline ArModel fit_ar(std::span<const double> context, std::size_t order,
                      double noise_comp) {
  if (order == 0) throw Error("fit_ar: order must be >= 1");
  if (context.size() < 2 * order) {
    throw Error("fit_ar: context too short (" + std::to_string(context.size()) +
                " samples for order " + std::to_string(order) + ")");
  }
  for (double v : context) {
    if (!std::isfinite(v)) throw Error("fit_ar: non-finite sample in context");
  }
  if (noise_comp < 0.0) throw Error("fit_ar: noise_comp must be >= 0");
  std::vector<double> r = autocorrelation(context, order);
  r[0] *= 1.0 + noise_comp;
  LevinsonResult lev = levinson_durbin(r, order);

  ArModel m;
  m.coefficients = std::move(lev.coefficients);
  m.reflection = std::move(lev.reflection);
  m.context.assign(context.begin(), context.end());
  m.noise_comp = noise_comp;
  return m;
}

// Burg lattice fit: reflection coefficients from forward/backward errors,
// no analysis window. Always stable (|k| <= 1). Optional alternative to
// fit_ar; no white-noise compensation is applied.
inline ArModel fit_ar_burg(std::span<const double> context, std::size_t order) {
  if (order == 0) throw Error("fit_ar_burg: order must be >= 1");
  if (context.size() < 2 * order) {
    throw Error("fit_ar_burg: context too short (" + std::to_string(context.size()) +
                " samples for order " + std::to_string(order) + ")");
  }
  for (double v : context) {
    if (!std::isfinite(v)) throw Error("fit_ar_burg: non-finite sample in context");
  }
  const std::size_t n = context.size();
  std::vector<double> f(context.begin(), context.end());
  std::vector<double> b(context.begin(), context.end());
  ArModel m;
  m.coefficients.assign(order, 0.0);
  m.reflection.assign(order, 0.0);
  std::vector<double>& a = m.coefficients;
  std::vector<double> prev(order, 0.0);
  for (std::size_t p = 1; p <= order; ++p) {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = p; i < n; ++i) {
      num += f[i] * b[i - 1];
      den += f[i] * f[i] + b[i - 1] * b[i - 1];
    }
    if (!(den > 0.0)) break;
    const double k = 2.0 * num / den;
    for (std::size_t i = n - 1; i >= p; --i) {
      const double fi = f[i];
      const double bi = b[i - 1];
      f[i] = fi - k * bi;
      b[i] = bi - k * fi;
    }
    std::copy(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(p - 1), prev.begin());
    for (std::size_t i = 1; i < p; ++i) a[i - 1] = prev[i - 1] - k * prev[p - i - 1];
    a[p - 1] = k;
    m.reflection[p - 1] = k;
  }
  m.context.assign(context.begin(), context.end());
  return m;
}

// Free-running extrapolation of `history` (most recent sample last).
inline std::vector<double> ar_extrapolate(std::span<const double> coefficients,
                                          std::span<const double> history,
                                          std::size_t horizon) {
  const std::size_t p = coefficients.size();
  if (history.size() < p) throw Error("ar_extrapolate: history shorter than order");
  // buf = [last p history samples | predictions]
  std::vector<double> buf(p + horizon, 0.0);
  std::copy(history.end() - static_cast<std::ptrdiff_t>(p), history.end(),
            buf.begin());
  for (std::size_t n = p; n < p + horizon; ++n) {
    double acc = 0.0;
    for (std::size_t i = 1; i <= p; ++i) acc += coefficients[i - 1] * buf[n - i];
    buf[n] = acc;
  }
  return {buf.begin() + static_cast<std::ptrdiff_t>(p), buf.end()};
}

inline std::vector<double> predict_packet(const ArModel& m, std::size_t horizon) {
  if (!m.fitted()) throw Error("predict_packet: unfitted model");
  return ar_extrapolate(m.coefficients, m.context, horizon);
}

}  // namespace plclab
