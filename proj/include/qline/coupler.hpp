#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "qline/device.hpp"
#include "qline/units.hpp"

// Time-dependent coupler control. A programmed waveform is a train of
// rectangles filtered by a Gaussian kernel (the control-line filter); the
// filtered external phase delta_ext(t) is mapped sample by sample through
// the junction phase relation to delta(t), then to g(t), kappa(t) and the
// coupler-generated qubit detuning.

namespace qline {

struct WaveformSegment {
  double start = 0.0;    // s
  double duration = 0.0; // s
};

struct CouplerWaveform {
  double w_fwhm = 0.0;              // Gaussian filter FWHM, s; 0 = unfiltered
  std::vector<WaveformSegment> segments;
  double amplitude_on = pi;         // delta_ext at full scale, rad
  double delta_off = 0.0;           // rad; bias point where the coupler is off
  double sample_dt = 5e-12;         // s

  void validate() const {
    if (w_fwhm < 0.0) throw std::invalid_argument("CouplerWaveform: w_fwhm must be >= 0");
    if (sample_dt <= 0.0) throw std::invalid_argument("CouplerWaveform: sample_dt must be positive");
    double prev_end = -1e300;
    for (const auto& s : segments) {
      if (s.duration < 0.0) throw std::invalid_argument("CouplerWaveform: segment duration must be >= 0");
      if (s.start < prev_end)
        throw std::invalid_argument("CouplerWaveform: segments must be time-ordered and non-overlapping");
      prev_end = s.start + s.duration;
    }
  }
};

struct ControlTrace {
  double dt = 0.0;                // s, uniform grid spacing
  double t0 = 0.0;                // s, time of sample 0
  std::vector<double> delta_ext;  // rad
  std::vector<double> delta;      // rad
  std::vector<double> g;          // rad/s
  std::vector<double> kappa;      // rad/s
  std::vector<double> delta_omega_q; // rad/s

  std::size_t size() const { return g.size(); }
  double t_end() const { return t0 + dt * double(size() - 1); }

  // clamped linear interpolation; constant extrapolation outside the grid
  double sample(const std::vector<double>& series, double t) const {
    if (series.empty()) return 0.0;
    const double x = (t - t0) / dt;
    if (x <= 0.0) return series.front();
    const double last = double(series.size() - 1);
    if (x >= last) return series.back();
    const std::size_t i = std::size_t(x);
    const double f = x - double(i);
    return series[i] * (1.0 - f) + series[i + 1] * f;
  }
  double g_at(double t) const { return sample(g, t); }
  double kappa_at(double t) const { return sample(kappa, t); }
  double detuning_at(double t) const { return sample(delta_omega_q, t); }
};

// The DC bias point where the junction phase sits at pi/2 and the coupling
// vanishes: delta_off = pi/2 + (2 L_g + L_w) / L_T.
inline double delta_off_bias(const CouplerParams& c) {
  c.validate();
  return 0.5 * pi + (2.0 * c.l_g + c.l_w) / c.l_t;
}

// Solve delta_ext = delta + r sin(delta), r = (2 L_g + L_w) / L_T, for delta
// on the branch containing [pi/2, pi]. Bracketed bisection; the map is
// monotone there for r < 1 and remains bracketed for any r because
// f(pi/2) = delta_off - delta_ext and f(pi) = pi - delta_ext.
inline double solve_junction_phase(double delta_ext, const CouplerParams& c) {
  c.validate();
  const double r = (2.0 * c.l_g + c.l_w) / c.l_t;
  const auto forward = [r](double d) { return d + r * std::sin(d); };

  double lo = 0.5 * pi, hi = pi;
  double flo = forward(lo) - delta_ext;
  double fhi = forward(hi) - delta_ext;
  const double tol = 1e-13;
  if (std::abs(flo) < tol) return lo;
  if (std::abs(fhi) < tol) return hi;
  // a filtered waveform can overshoot the endpoints by rounding only
  if (flo > 0.0 && flo < 1e-9) return lo;
  if (fhi < 0.0 && fhi > -1e-9) return hi;
  if (flo * fhi > 0.0)
    throw std::domain_error("solve_junction_phase: delta_ext outside the [delta_off, pi] branch");

  const int max_iter = 200;
  double mid = 0.5 * (lo + hi);
  for (int i = 0; i < max_iter; ++i) {
    mid = 0.5 * (lo + hi);
    const double fm = forward(mid) - delta_ext;
    if (std::abs(fm) < tol || 0.5 * (hi - lo) < 1e-15) return mid;
    if (flo * fm <= 0.0) {
      hi = mid;
    } else {
      lo = mid;
      flo = fm;
    }
  }
  const double residual = std::abs(forward(mid) - delta_ext);
  if (residual > 1e-12)
    throw std::runtime_error("solve_junction_phase: no convergence, bracket [" +
                             std::to_string(lo) + ", " + std::to_string(hi) +
                             "], residual " + std::to_string(residual));
  return mid;
}

namespace detail {

// normalized Gaussian kernel samples, truncated at +-5 sigma
inline std::vector<double> gaussian_kernel(double w_fwhm, double dt) {
  if (w_fwhm <= 0.0) return {1.0};
  const double sigma = w_fwhm / (2.0 * std::sqrt(2.0 * std::log(2.0)));
  const int half = std::max(1, int(std::ceil(5.0 * sigma / dt)));
  std::vector<double> k(2 * half + 1);
  double sum = 0.0;
  for (int i = -half; i <= half; ++i) {
    const double x = double(i) * dt;
    k[i + half] = std::exp(-0.5 * x * x / (sigma * sigma));
    sum += k[i + half];
  }
  for (auto& v : k) v /= sum;
  return k;
}

}  // namespace detail

// Rectangle train convolved with the filter kernel, scaled onto
// [delta_off, amplitude_on]. The grid spans the waveform padded by the
// kernel half-width on both sides, extended to t_end if requested.
inline ControlTrace shape_waveform(const CouplerWaveform& w, double t_start = 0.0,
                                   double t_end = -1.0) {
  w.validate();
  const double dt = w.sample_dt;
  const auto kernel = detail::gaussian_kernel(w.w_fwhm, dt);
  const int khalf = int(kernel.size() / 2);

  double last = t_start;
  for (const auto& s : w.segments) last = std::max(last, s.start + s.duration);
  const double pad = double(khalf) * dt;
  if (t_end < 0.0) t_end = last + pad + 10.0 * dt;

  const std::size_t n = std::size_t(std::ceil((t_end - t_start) / dt)) + 1;
  ControlTrace tr;
  tr.dt = dt;
  tr.t0 = t_start;

  // unit-amplitude rectangle train on the padded grid; each sample holds the
  // fractional overlap of its cell with the segments, so segment edges are
  // not quantized to the grid
  std::vector<double> rect(n + 2 * khalf, 0.0);
  for (std::size_t i = 0; i < rect.size(); ++i) {
    const double t = t_start + (double(i) - double(khalf)) * dt;
    const double cell_lo = t - 0.5 * dt, cell_hi = t + 0.5 * dt;
    double covered = 0.0;
    for (const auto& s : w.segments) {
      const double lo = std::max(cell_lo, s.start);
      const double hi = std::min(cell_hi, s.start + s.duration);
      if (hi > lo) covered += hi - lo;
    }
    rect[i] = covered / dt;
  }

  tr.delta_ext.resize(n);
  const double scale = w.amplitude_on - w.delta_off;
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < kernel.size(); ++j) acc += kernel[j] * rect[i + j];
    tr.delta_ext[i] = w.delta_off + scale * acc;
  }
  return tr;
}

// Full per-sample control pipeline: delta_ext -> delta -> g -> kappa and the
// coupler-generated qubit detuning. With compensated = true the detuning is
// identically zero (the bias pulse cancels the shift exactly).
inline ControlTrace control_trace(const CouplerWaveform& w, const QubitParams& q,
                                  const ModeSpec& m, const CouplerParams& c,
                                  bool compensated, double t_start = 0.0, double t_end = -1.0) {
  ControlTrace tr = shape_waveform(w, t_start, t_end);
  const std::size_t n = tr.delta_ext.size();
  tr.delta.resize(n);
  tr.g.resize(n);
  tr.kappa.resize(n);
  tr.delta_omega_q.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    tr.delta[i] = solve_junction_phase(tr.delta_ext[i], c);
    tr.g[i] = coupling_g(q, m, c, tr.delta[i]);
    tr.kappa[i] = decay_rate_kappa(tr.g[i], m.omega_fsr);
    if (!compensated) tr.delta_omega_q[i] = qubit_frequency_shift(q, m, c, tr.g[i]);
  }
  return tr;
}

// Convenience: a trace that is identically off over [t_start, t_end].
inline ControlTrace off_trace(const CouplerParams& c, double t_start, double t_end,
                              double dt = 5e-12) {
  CouplerWaveform w;
  w.sample_dt = dt;
  w.delta_off = delta_off_bias(c);
  ControlTrace tr;
  tr.dt = dt;
  tr.t0 = t_start;
  const std::size_t n = std::size_t(std::ceil((t_end - t_start) / dt)) + 1;
  tr.delta_ext.assign(n, w.delta_off);
  tr.delta.assign(n, 0.5 * pi);
  tr.g.assign(n, 0.0);
  tr.kappa.assign(n, 0.0);
  tr.delta_omega_q.assign(n, 0.0);
  return tr;
}

}  // namespace qline
