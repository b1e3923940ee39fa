#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <stdexcept>
#include <vector>

#include "qline/coupler.hpp"
#include "qline/qinfo.hpp"
#include "qline/units.hpp"

// Strong-coupling dynamics from input-output theory with time delay. The
// qubit coherence sigma obeys
//   d sigma / dt = -(i dw(t) + kappa(t)/2) sigma + sqrt(kappa(t)) a_in(t),
//   a_out(t)     = sqrt(kappa(t)) sigma(t) - a_in(t),
// with the delayed feedback a_in(t) = a_out(t - 2 T_ell) for the single
// qubit bouncing a photon off the shorted far end, and the cross links
// a_in,1(t) = a_out,2(t - T_ell), a_in,2(t) = a_out,1(t - T_ell) for two
// qubits at opposite ends. Amplitude-level equations are exact here because
// the protocols carry at most one excitation.
//
// Integration is fixed-step RK4; the output field and its cumulative energy
// are recorded on a half-step grid via third-order dense output so that the
// delayed lookups fall on stored samples whenever the delay is a multiple of
// dt/2, and are linearly interpolated otherwise.

namespace qline {

// Uniformly sampled delayed-field record.
struct FieldHistory {
  double t0 = 0.0;
  double spacing = 0.0; // s, = dt/2
  std::vector<cd> samples;

  // vacuum (0) before the recording starts
  cd at(double t) const {
    if (samples.empty() || t < t0) return {0.0, 0.0};
    double x = (t - t0) / spacing;
    const double xr = std::round(x);
    if (std::abs(x - xr) < 1e-6) x = xr;
    if (x <= 0.0) return samples.front();
    const double last = double(samples.size() - 1);
    if (x >= last) return samples.back();
    const std::size_t i = std::size_t(x);
    const double f = x - double(i);
    return samples[i] * (1.0 - f) + samples[i + 1] * f;
  }
};

struct PhotonEnvelope {
  std::vector<double> times; // s
  std::vector<double> flux;  // |a|^2, 1/s
  double integrated = 0.0;   // total probability carried by the envelope
};

struct ItinerantTrace {
  std::vector<double> times;
  std::vector<double> p_e1, p_e2;
  std::vector<double> flux_out1, flux_in1;
  std::vector<double> flux_out2, flux_in2;
  std::vector<double> kappa1, kappa2;
  double final_pe1 = 0.0, final_pe2 = 0.0;
  cd final_sigma1{0.0, 0.0}, final_sigma2{0.0, 0.0};
  double max_budget_error = 0.0; // worst |1 - (populations + in-flight)|
};

namespace detail {

struct EmitterParams {
  const ControlTrace* ctrl = nullptr;
};

struct EmitterState {
  cd sigma{0.0, 0.0};
  double e_out = 0.0; // cumulative emitted energy integral of |a_out|^2
};

inline cd sigma_rhs(double kappa, double detuning, cd sigma, cd a_in) {
  return -(im * detuning + 0.5 * kappa) * sigma + std::sqrt(kappa) * a_in;
}

// classical RK4 dense-output weights at theta = 1/2
inline constexpr double b_mid[4] = {5.0 / 24.0, 4.0 / 24.0, 4.0 / 24.0, -1.0 / 24.0};

}  // namespace detail

// Single qubit facing the shorted line; round-trip feedback after `delay`.
inline ItinerantTrace pingpong(const ControlTrace& ctrl, double delay, double t_final, double dt,
                               int record_stride = 1) {
  if (dt <= 0.0 || delay <= dt) throw std::invalid_argument("pingpong: need dt > 0 and delay > dt");
  if (ctrl.size() == 0) throw std::invalid_argument("pingpong: empty control trace");
  if (ctrl.t_end() < t_final - 1e-15)
    throw std::invalid_argument("pingpong: control trace does not cover the horizon");

  const long n_steps = std::lround(t_final / dt);
  FieldHistory hist;
  hist.t0 = 0.0;
  hist.spacing = 0.5 * dt;
  hist.samples.reserve(2 * n_steps + 2);

  FieldHistory e_hist; // cumulative emitted energy, for the in-flight budget
  e_hist.t0 = 0.0;
  e_hist.spacing = 0.5 * dt;
  e_hist.samples.reserve(2 * n_steps + 2);

  detail::EmitterState st;
  st.sigma = 1.0; // excited qubit

  ItinerantTrace out;
  const auto a_in_at = [&](double t) { return hist.at(t - delay); };

  {
    const double k0 = ctrl.kappa_at(0.0);
    hist.samples.push_back(std::sqrt(k0) * st.sigma - a_in_at(0.0));
    e_hist.samples.push_back(0.0);
  }

  const auto record = [&](double t, cd a_in, cd a_out, double kappa) {
    out.times.push_back(t);
    out.p_e1.push_back(std::norm(st.sigma));
    out.flux_out1.push_back(std::norm(a_out));
    out.flux_in1.push_back(std::norm(a_in));
    out.kappa1.push_back(kappa);
    const double in_flight = st.e_out - e_hist.at(t - delay).real();
    const double budget = std::norm(st.sigma) + in_flight;
    out.max_budget_error = std::max(out.max_budget_error, std::abs(budget - 1.0));
  };
  record(0.0, a_in_at(0.0), hist.samples[0], ctrl.kappa_at(0.0));

  for (long i = 0; i < n_steps; ++i) {
    const double t = double(i) * dt;
    const double tm = t + 0.5 * dt, t1 = t + dt;
    const double k_a = ctrl.kappa_at(t), k_m = ctrl.kappa_at(tm), k_b = ctrl.kappa_at(t1);
    const double d_a = ctrl.detuning_at(t), d_m = ctrl.detuning_at(tm), d_b = ctrl.detuning_at(t1);
    const cd in_a = a_in_at(t), in_m = a_in_at(tm), in_b = a_in_at(t1);

    const cd k1 = detail::sigma_rhs(k_a, d_a, st.sigma, in_a);
    const cd k2 = detail::sigma_rhs(k_m, d_m, st.sigma + 0.5 * dt * k1, in_m);
    const cd k3 = detail::sigma_rhs(k_m, d_m, st.sigma + 0.5 * dt * k2, in_m);
    const cd k4 = detail::sigma_rhs(k_b, d_b, st.sigma + dt * k3, in_b);

    const auto flux = [](double kappa, cd sigma, cd a_in) {
      return std::norm(std::sqrt(kappa) * sigma - a_in);
    };
    const double e1 = flux(k_a, st.sigma, in_a);
    const double e2 = flux(k_m, st.sigma + 0.5 * dt * k1, in_m);
    const double e3 = flux(k_m, st.sigma + 0.5 * dt * k2, in_m);
    const double e4 = flux(k_b, st.sigma + dt * k3, in_b);

    const cd sigma_mid = st.sigma + dt * (detail::b_mid[0] * k1 + detail::b_mid[1] * k2 +
                                          detail::b_mid[2] * k3 + detail::b_mid[3] * k4);
    const double e_mid = st.e_out + dt * (detail::b_mid[0] * e1 + detail::b_mid[1] * e2 +
                                          detail::b_mid[2] * e3 + detail::b_mid[3] * e4);

    st.sigma += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    st.e_out += (dt / 6.0) * (e1 + 2.0 * e2 + 2.0 * e3 + e4);

    hist.samples.push_back(std::sqrt(k_m) * sigma_mid - in_m);
    e_hist.samples.push_back(e_mid);
    const cd out_b = std::sqrt(k_b) * st.sigma - in_b;
    hist.samples.push_back(out_b);
    e_hist.samples.push_back(st.e_out);

    if ((i + 1) % record_stride == 0 || i + 1 == n_steps) record(t1, in_b, out_b, k_b);
  }
  out.final_pe1 = std::norm(st.sigma);
  out.final_sigma1 = st.sigma;
  return out;
}

// Two qubits at opposite ends of the line; one-way delay between them.
inline ItinerantTrace two_qubit_transfer(const ControlTrace& ctrl1, const ControlTrace& ctrl2,
                                         double delay, double t_final, double dt,
                                         cd sigma1_0 = {1.0, 0.0}, cd sigma2_0 = {0.0, 0.0},
                                         int record_stride = 1) {
  if (dt <= 0.0 || delay <= dt)
    throw std::invalid_argument("two_qubit_transfer: need dt > 0 and delay > dt");
  if (ctrl1.t_end() < t_final - 1e-15 || ctrl2.t_end() < t_final - 1e-15)
    throw std::invalid_argument("two_qubit_transfer: control traces do not cover the horizon");

  const long n_steps = std::lround(t_final / dt);
  FieldHistory hist[2], e_hist[2];
  for (int q = 0; q < 2; ++q) {
    hist[q].t0 = e_hist[q].t0 = 0.0;
    hist[q].spacing = e_hist[q].spacing = 0.5 * dt;
    hist[q].samples.reserve(2 * n_steps + 2);
    e_hist[q].samples.reserve(2 * n_steps + 2);
  }

  detail::EmitterState st[2];
  st[0].sigma = sigma1_0;
  st[1].sigma = sigma2_0;
  const ControlTrace* ctrl[2] = {&ctrl1, &ctrl2};

  // input of qubit q is the delayed output of the other qubit
  const auto a_in_at = [&](int q, double t) { return hist[1 - q].at(t - delay); };

  for (int q = 0; q < 2; ++q) {
    const double k0 = ctrl[q]->kappa_at(0.0);
    hist[q].samples.push_back(std::sqrt(k0) * st[q].sigma - a_in_at(q, 0.0));
    e_hist[q].samples.push_back(0.0);
  }

  ItinerantTrace out;
  const auto record = [&](double t) {
    out.times.push_back(t);
    out.p_e1.push_back(std::norm(st[0].sigma));
    out.p_e2.push_back(std::norm(st[1].sigma));
    const cd in1 = a_in_at(0, t), in2 = a_in_at(1, t);
    out.flux_in1.push_back(std::norm(in1));
    out.flux_in2.push_back(std::norm(in2));
    out.flux_out1.push_back(std::norm(std::sqrt(ctrl1.kappa_at(t)) * st[0].sigma - in1));
    out.flux_out2.push_back(std::norm(std::sqrt(ctrl2.kappa_at(t)) * st[1].sigma - in2));
    out.kappa1.push_back(ctrl1.kappa_at(t));
    out.kappa2.push_back(ctrl2.kappa_at(t));
    const double in_flight = (st[0].e_out - e_hist[0].at(t - delay).real()) +
                             (st[1].e_out - e_hist[1].at(t - delay).real());
    const double budget = std::norm(st[0].sigma) + std::norm(st[1].sigma) + in_flight;
    out.max_budget_error = std::max(out.max_budget_error, std::abs(budget - 1.0));
  };
  record(0.0);

  for (long i = 0; i < n_steps; ++i) {
    const double t = double(i) * dt;
    const double tm = t + 0.5 * dt, t1 = t + dt;
    cd sigma_new[2], sigma_mid[2];
    double e_new[2], e_mid[2];
    cd out_mid[2], out_end[2];

    for (int q = 0; q < 2; ++q) {
      const double k_a = ctrl[q]->kappa_at(t), k_m = ctrl[q]->kappa_at(tm),
                   k_b = ctrl[q]->kappa_at(t1);
      const double d_a = ctrl[q]->detuning_at(t), d_m = ctrl[q]->detuning_at(tm),
                   d_b = ctrl[q]->detuning_at(t1);
      const cd in_a = a_in_at(q, t), in_m = a_in_at(q, tm), in_b = a_in_at(q, t1);

      const cd k1 = detail::sigma_rhs(k_a, d_a, st[q].sigma, in_a);
      const cd k2 = detail::sigma_rhs(k_m, d_m, st[q].sigma + 0.5 * dt * k1, in_m);
      const cd k3 = detail::sigma_rhs(k_m, d_m, st[q].sigma + 0.5 * dt * k2, in_m);
      const cd k4 = detail::sigma_rhs(k_b, d_b, st[q].sigma + dt * k3, in_b);

      const auto flux = [](double kappa, cd sigma, cd a_in) {
        return std::norm(std::sqrt(kappa) * sigma - a_in);
      };
      const double e1 = flux(k_a, st[q].sigma, in_a);
      const double e2 = flux(k_m, st[q].sigma + 0.5 * dt * k1, in_m);
      const double e3 = flux(k_m, st[q].sigma + 0.5 * dt * k2, in_m);
      const double e4 = flux(k_b, st[q].sigma + dt * k3, in_b);

      sigma_mid[q] = st[q].sigma + dt * (detail::b_mid[0] * k1 + detail::b_mid[1] * k2 +
                                         detail::b_mid[2] * k3 + detail::b_mid[3] * k4);
      e_mid[q] = st[q].e_out + dt * (detail::b_mid[0] * e1 + detail::b_mid[1] * e2 +
                                     detail::b_mid[2] * e3 + detail::b_mid[3] * e4);
      sigma_new[q] = st[q].sigma + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      e_new[q] = st[q].e_out + (dt / 6.0) * (e1 + 2.0 * e2 + 2.0 * e3 + e4);
      out_mid[q] = std::sqrt(k_m) * sigma_mid[q] - in_m;
      out_end[q] = std::sqrt(k_b) * sigma_new[q] - in_b;
    }
    // commit after both emitters were advanced on the same history snapshot
    for (int q = 0; q < 2; ++q) {
      st[q].sigma = sigma_new[q];
      st[q].e_out = e_new[q];
      hist[q].samples.push_back(out_mid[q]);
      hist[q].samples.push_back(out_end[q]);
      e_hist[q].samples.push_back(e_mid[q]);
      e_hist[q].samples.push_back(e_new[q]);
    }
    if ((i + 1) % record_stride == 0 || i + 1 == n_steps) record(t1);
  }
  out.final_pe1 = std::norm(st[0].sigma);
  out.final_pe2 = std::norm(st[1].sigma);
  out.final_sigma1 = st[0].sigma;
  out.final_sigma2 = st[1].sigma;
  return out;
}

inline PhotonEnvelope envelope_from_series(const std::vector<double>& times,
                                           const std::vector<double>& flux) {
  PhotonEnvelope env;
  env.times = times;
  env.flux = flux;
  for (std::size_t i = 1; i < times.size(); ++i)
    env.integrated += 0.5 * (flux[i] + flux[i - 1]) * (times[i] - times[i - 1]);
  return env;
}

// Flux-weighted skewness of an envelope; 0 for a time-symmetric pulse.
inline double envelope_skewness(const PhotonEnvelope& env) {
  double w = 0.0, mean = 0.0;
  for (std::size_t i = 0; i < env.times.size(); ++i) {
    w += env.flux[i];
    mean += env.flux[i] * env.times[i];
  }
  if (w <= 0.0) return 0.0;
  mean /= w;
  double m2 = 0.0, m3 = 0.0;
  for (std::size_t i = 0; i < env.times.size(); ++i) {
    const double d = env.times[i] - mean;
    m2 += env.flux[i] * d * d;
    m3 += env.flux[i] * d * d * d;
  }
  m2 /= w;
  m3 /= w;
  return m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
}

struct SweepPoint {
  double param = 0.0;
  double value = 0.0;
};

struct SweepResult {
  std::vector<SweepPoint> points;
  double best_param = 0.0;
  double best_value = 0.0;
};

// Evaluate a capture metric over a parameter grid and refine the argmax with
// a parabola through the best sample and its neighbors.
inline SweepResult capture_sweep(const std::vector<double>& grid,
                                 const std::function<double(double)>& eval) {
  if (grid.empty()) throw std::invalid_argument("capture_sweep: empty grid");
  SweepResult res;
  res.points.reserve(grid.size());
  std::size_t best = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    res.points.push_back({grid[i], eval(grid[i])});
    if (res.points[i].value > res.points[best].value) best = i;
  }
  res.best_param = res.points[best].param;
  res.best_value = res.points[best].value;
  if (best > 0 && best + 1 < grid.size()) {
    const double y0 = res.points[best - 1].value, y1 = res.points[best].value,
                 y2 = res.points[best + 1].value;
    const double denom = y0 - 2.0 * y1 + y2;
    if (denom < 0.0) {
      const double h = 0.5 * (res.points[best + 1].param - res.points[best - 1].param);
      const double shift = 0.5 * (y0 - y2) / denom;
      res.best_param = res.points[best].param + shift * h;
      res.best_value = y1 - 0.25 * (y0 - y2) * shift;
    }
  }
  return res;
}

// Decoherence applied on top of the amplitude-level protocol as closed-form
// per-qubit channels over the protocol duration.
struct ProtocolDecoherence {
  double t1[2] = {0.0, 0.0};
  double t_phi[2] = {0.0, 0.0}; // already includes any transfer enhancement
  double duration = 0.0;
};

// Assemble the two-qubit state from the final single-excitation amplitudes.
// The field remainder traces to ground-state weight; T1 and pure dephasing
// act as local channels for the protocol duration.
inline Mat4 assemble_bell_state(cd alpha, cd beta, const ProtocolDecoherence& dec) {
  Vec4 phi = Vec4::Zero();
  phi(2) = alpha; // excitation on qubit 1 -> |eg>
  phi(1) = beta;  // excitation on qubit 2 -> |ge>
  const double p_field = std::max(0.0, 1.0 - std::norm(alpha) - std::norm(beta));
  Mat4 rho = phi * phi.adjoint();
  rho(0, 0) += p_field;
  for (int q = 0; q < 2; ++q) {
    const double p = dec.t1[q] > 0.0 ? 1.0 - std::exp(-dec.duration / dec.t1[q]) : 0.0;
    const double d = dec.t_phi[q] > 0.0 ? std::exp(-dec.duration / dec.t_phi[q]) : 1.0;
    const auto ad = amplitude_damping_kraus(p);
    const auto dp = dephasing_kraus(d);
    rho = q == 0 ? apply_local_channels(rho, ad, {pauli(0)}) : apply_local_channels(rho, {pauli(0)}, ad);
    rho = q == 0 ? apply_local_channels(rho, dp, {pauli(0)}) : apply_local_channels(rho, {pauli(0)}, dp);
  }
  return rho;
}

struct HalfPhotonBellResult {
  Mat4 rho;
  ItinerantTrace trace;
  double emitted_probability = 0.0; // after the truncated first pulse
};

// Release half the excitation with a truncated emission pulse and capture it
// at the far qubit; returns the dressed two-qubit state.
inline HalfPhotonBellResult half_photon_bell(const ControlTrace& ctrl1_half,
                                             const ControlTrace& ctrl2, double delay,
                                             double t_final, double dt,
                                             const ProtocolDecoherence& dec) {
  ItinerantTrace tr = two_qubit_transfer(ctrl1_half, ctrl2, delay, t_final, dt);
  HalfPhotonBellResult res;
  res.emitted_probability = 1.0 - tr.final_pe1;
  ProtocolDecoherence d = dec;
  if (d.duration <= 0.0) d.duration = t_final;
  res.rho = assemble_bell_state(tr.final_sigma1, tr.final_sigma2, d);
  res.trace = std::move(tr);
  return res;
}

}  // namespace qline
