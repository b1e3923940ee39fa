#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "qline/coupler.hpp"
#include "qline/device_io.hpp"
#include "qline/units.hpp"

using namespace qline;
using Catch::Approx;

namespace {

CouplerWaveform make_waveform(const CouplerParams& c, double w_fwhm_ns,
                              std::vector<std::pair<double, double>> segs_ns,
                              double amplitude = 1.0, double dt_ns = 0.005) {
  CouplerWaveform w;
  w.w_fwhm = ns_to_s(w_fwhm_ns);
  w.delta_off = delta_off_bias(c);
  w.amplitude_on = w.delta_off + amplitude * (pi - w.delta_off);
  w.sample_dt = ns_to_s(dt_ns);
  for (auto [start, dur] : segs_ns) w.segments.push_back({ns_to_s(start), ns_to_s(dur)});
  return w;
}

}  // namespace

TEST_CASE("off bias point", "[coupler]") {
  const DeviceParams dev = reference_device();
  CHECK(delta_off_bias(dev.coupler[0]) == Approx(2.4541885529).margin(1e-9));

  // zero-inductance limit approaches pi/2
  CouplerParams tiny{1e-15, 0.0, nh_to_h(0.566)};
  CHECK(delta_off_bias(tiny) == Approx(0.5 * pi).margin(1e-5));

  // solving the flux-phase relation at delta_off returns pi/2 exactly
  CHECK(solve_junction_phase(delta_off_bias(dev.coupler[0]), dev.coupler[0]) == 0.5 * pi);
}

TEST_CASE("junction phase solver", "[coupler]") {
  const DeviceParams dev = reference_device();
  const auto& c = dev.coupler[0];
  const double r = (2.0 * c.l_g + c.l_w) / c.l_t;

  CHECK(solve_junction_phase(pi, c) == Approx(pi).margin(1e-12));

  // the branch is monotone for this device: d/d delta = 1 + r cos(delta) > 0
  double min_slope = 1e9;
  for (double d = 0.5 * pi; d <= pi; d += 1e-3) min_slope = std::min(min_slope, 1.0 + r * std::cos(d));
  CHECK(min_slope > 0.0);

  // independent bisection oracle at delta_ext = 2.8 rad
  const double target = 2.8;
  double lo = 0.5 * pi, hi = pi;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    ((mid + r * std::sin(mid) - target) < 0.0 ? lo : hi) = mid;
  }
  CHECK(solve_junction_phase(target, c) == Approx(0.5 * (lo + hi)).margin(1e-10));

  // forward(solve(x)) = x across the branch
  const double d_off = delta_off_bias(c);
  for (int i = 0; i <= 50; ++i) {
    const double x = d_off + (pi - d_off) * double(i) / 50.0;
    const double d = solve_junction_phase(x, c);
    CHECK(std::abs(d + r * std::sin(d) - x) < 1e-12);
  }

  CHECK_THROWS_AS(solve_junction_phase(d_off - 0.1, c), std::domain_error);
}

TEST_CASE("waveform shaping", "[coupler]") {
  const DeviceParams dev = reference_device();
  const auto& c = dev.coupler[0];
  const double d_off = delta_off_bias(c);

  SECTION("unfiltered pulse is the exact rectangle train") {
    const auto w = make_waveform(c, 0.0, {{2.0, 4.0}});
    const ControlTrace tr = shape_waveform(w, 0.0, ns_to_s(10.0));
    CHECK(tr.sample(tr.delta_ext, ns_to_s(1.0)) == Approx(d_off).margin(1e-14));
    CHECK(tr.sample(tr.delta_ext, ns_to_s(4.0)) == Approx(pi).margin(1e-14));
    CHECK(tr.sample(tr.delta_ext, ns_to_s(7.0)) == Approx(d_off).margin(1e-14));
  }

  SECTION("quiescent value far before the first segment") {
    const auto w = make_waveform(c, 2.0, {{40.0, 10.0}});
    const ControlTrace tr = shape_waveform(w, 0.0, ns_to_s(60.0));
    CHECK(tr.sample(tr.delta_ext, 0.0) == Approx(d_off).margin(1e-12));
    CHECK(tr.sample(tr.delta_ext, ns_to_s(45.0)) == Approx(pi).margin(1e-9));
  }

  SECTION("10-90 rise time of the filtered step") {
    // oracle: dense numerical convolution of the Gaussian with a step
    const double w_fwhm = 2.0; // ns
    const double sigma = w_fwhm / (2.0 * std::sqrt(2.0 * std::log(2.0)));
    const double dt = 1e-4;
    double t10_oracle = 0.0, t90_oracle = 0.0, prev = 0.0;
    for (double t = -10.0; t < 10.0; t += dt) {
      // step response = cumulative Gaussian
      const double v = 0.5 * (1.0 + std::erf(t / (sigma * std::sqrt(2.0))));
      if (prev < 0.1 && v >= 0.1) t10_oracle = t;
      if (prev < 0.9 && v >= 0.9) t90_oracle = t;
      prev = v;
    }
    const double rise_oracle = t90_oracle - t10_oracle;

    const auto w = make_waveform(c, w_fwhm, {{20.0, 40.0}}, 1.0, 0.001);
    const ControlTrace tr = shape_waveform(w, 0.0, ns_to_s(70.0));
    const double lo = d_off + 0.1 * (pi - d_off), hi = d_off + 0.9 * (pi - d_off);
    double t10 = 0.0, t90 = 0.0;
    for (std::size_t i = 1; i < tr.delta_ext.size(); ++i) {
      const double t = s_to_ns(tr.t0 + tr.dt * double(i));
      if (tr.delta_ext[i - 1] < lo && tr.delta_ext[i] >= lo) t10 = t;
      if (tr.delta_ext[i - 1] < hi && tr.delta_ext[i] >= hi) t90 = t;
    }
    const double rise = t90 - t10;
    CHECK(rise == Approx(rise_oracle).margin(0.01));
    CHECK(rise == Approx(1.0884 * w_fwhm).margin(0.01));
  }
}

TEST_CASE("control trace pipeline", "[coupler]") {
  const DeviceParams dev = reference_device();
  const auto& c = dev.coupler[0];
  const ModeSpec m = dev.relay_mode();

  SECTION("all-off waveform gives identically zero coupling") {
    const auto w = make_waveform(c, 2.0, {});
    const ControlTrace tr = control_trace(w, dev.qubit[0], m, c, false, 0.0, ns_to_s(5.0));
    for (std::size_t i = 0; i < tr.size(); ++i) {
      CHECK(tr.g[i] == 0.0);
      CHECK(tr.kappa[i] == 0.0);
      CHECK(tr.delta_omega_q[i] == 0.0);
    }
  }

  SECTION("full-scale plateau reaches the maximum coupling") {
    const auto w = make_waveform(c, 2.0, {{5.0, 20.0}});
    const ControlTrace tr = control_trace(w, dev.qubit[0], m, c, false, 0.0, ns_to_s(30.0));
    const double t_mid = ns_to_s(15.0);
    CHECK(rad_to_mhz(std::abs(tr.sample(tr.g, t_mid))) == Approx(47.8).margin(0.5));
    CHECK(rad_to_mhz(tr.sample(tr.kappa, t_mid)) == Approx(175.0).margin(15.0));
    CHECK(rad_to_mhz(tr.sample(tr.delta_omega_q, t_mid)) == Approx(-200.0).margin(20.0));
    CHECK(tr.sample(tr.kappa, 0.0) == Approx(0.0).margin(1e-6));
  }

  SECTION("compensated mode zeroes the detuning") {
    const auto w = make_waveform(c, 3.0, {{5.0, 10.0}});
    const ControlTrace tr = control_trace(w, dev.qubit[0], m, c, true, 0.0, ns_to_s(25.0));
    for (double v : tr.delta_omega_q) CHECK(v == 0.0);
  }

  SECTION("plateau coupling is monotone in waveform amplitude") {
    double prev = -1.0;
    for (double amp : {0.4, 0.6, 0.8, 1.0}) {
      const auto w = make_waveform(c, 2.0, {{5.0, 20.0}}, amp);
      const ControlTrace tr = control_trace(w, dev.qubit[0], m, c, true, 0.0, ns_to_s(30.0));
      const double g_mid = std::abs(tr.sample(tr.g, ns_to_s(15.0)));
      CHECK(g_mid > prev);
      prev = g_mid;
    }
  }

  SECTION("kappa is nonnegative and vanishes with the coupling") {
    const auto w = make_waveform(c, 2.0, {{2.0, 6.0}});
    const ControlTrace tr = control_trace(w, dev.qubit[0], m, c, true, 0.0, ns_to_s(15.0));
    for (std::size_t i = 0; i < tr.size(); ++i) {
      CHECK(tr.kappa[i] >= 0.0);
      if (tr.delta[i] == 0.5 * pi) CHECK(tr.g[i] == 0.0);
    }
  }
}
