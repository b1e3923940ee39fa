#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "qline/units.hpp"

// Static circuit model of the device: transmission-line standing modes as
// series RLC equivalents, coupler mutual inductance, qubit-mode coupling,
// coupler-generated frequency shifts, and the Fermi-golden-rule decay rate
// into the continuum limit of the mode ladder.

namespace qline {

struct LineParams {
  double c_per_m = 0.0;      // specific capacitance, F/m
  double l_per_m = 0.0;      // specific inductance, H/m
  double length = 0.0;       // m
  double mean_quality = 0.0; // <Q> of the standing modes; 0 = lossless

  void validate() const {
    if (c_per_m <= 0.0 || l_per_m <= 0.0 || length <= 0.0)
      throw std::invalid_argument("LineParams: C', L' and length must be positive");
    if (mean_quality < 0.0)
      throw std::invalid_argument("LineParams: mean quality factor must be >= 0");
  }
};

struct QubitParams {
  double c_q = 0.0;            // qubit capacitance, F
  double l_j = 0.0;            // junction inductance, H
  double idle_frequency = 0.0; // rad/s
  double anharmonicity = 0.0;  // rad/s, recorded only (two-level truncation)
  double t1 = 0.0;             // s
  double t2 = 0.0;             // s
  double f_g = 1.0;            // P(read g | prepared g)
  double f_e = 1.0;            // P(read e | prepared e)

  void validate() const {
    if (c_q <= 0.0 || l_j <= 0.0 || idle_frequency <= 0.0)
      throw std::invalid_argument("QubitParams: C_q, L_J and idle frequency must be positive");
    if (t1 <= 0.0 || t2 <= 0.0)
      throw std::invalid_argument("QubitParams: T1 and T2 must be positive");
    if (f_g < 0.0 || f_g > 1.0 || f_e < 0.0 || f_e > 1.0)
      throw std::invalid_argument("QubitParams: readout fidelities must lie in [0,1]");
    // T2 > 2 T1 has no extractable pure-dephasing rate; tolerated (t_phi()
    // then reports none) but worth noticing
    if (1.0 / t2 - 0.5 / t1 < 0.0)
      std::fprintf(stderr, "QubitParams: T2 > 2 T1, treating pure dephasing as absent\n");
  }

  // pure-dephasing time from 1/Tphi = 1/T2 - 1/(2 T1); infinity-free guard
  double t_phi() const {
    const double rate = 1.0 / t2 - 0.5 / t1;
    if (rate <= 0.0) return 0.0; // 0 encodes "no pure dephasing"
    return 1.0 / rate;
  }
};

struct CouplerParams {
  double l_g = 0.0; // inductance to ground on each side, H
  double l_w = 0.0; // stray wiring inductance, H
  double l_t = 0.0; // coupler junction inductance, H

  void validate() const {
    if (l_g <= 0.0 || l_t <= 0.0)
      throw std::invalid_argument("CouplerParams: L_g and L_T must be positive");
    if (l_w < 0.0)
      throw std::invalid_argument("CouplerParams: L_w must be >= 0");
  }
};

// Series RLC equivalent of one standing mode.
struct ModeSpec {
  int index_n = 0;      // half-wave harmonic number
  double omega_n = 0.0; // rad/s
  double l_n = 0.0;     // H
  double c_n = 0.0;     // F
  double r_n = 0.0;     // Ohm; 0 when lossless
  double q_n = 0.0;     // omega_n L_n / R_n; 0 when lossless
  double t_ell = 0.0;   // one-way travel time of the parent line, s
  double omega_fsr = 0.0;
};

// One-way photon travel time from the distributed constants.
inline double line_travel_time(const LineParams& line) {
  line.validate();
  return line.length * std::sqrt(line.l_per_m * line.c_per_m);
}

inline double characteristic_impedance(const LineParams& line) {
  line.validate();
  return std::sqrt(line.l_per_m / line.c_per_m);
}

// Free spectral range of a half-wave line with travel time T_ell.
inline double fsr_from_travel_time(double t_ell) {
  if (t_ell <= 0.0) throw std::invalid_argument("fsr_from_travel_time: T_ell must be positive");
  return pi / t_ell;
}

// FSR back-solved from one identified mode (harmonic n at omega_n).
inline double fsr_from_mode_anchor(int n, double omega_n) {
  if (n < 1 || omega_n <= 0.0)
    throw std::invalid_argument("fsr_from_mode_anchor: need n >= 1 and omega_n > 0");
  return omega_n / n;
}

inline ModeSpec mode_from_fsr(const LineParams& line, int n, double omega_fsr) {
  if (n < 1) throw std::invalid_argument("mode_from_fsr: mode index must be >= 1");
  ModeSpec m;
  m.index_n = n;
  m.omega_fsr = omega_fsr;
  m.t_ell = pi / omega_fsr;
  m.omega_n = n * omega_fsr;
  m.l_n = 0.5 * line.l_per_m * line.length;
  m.c_n = 1.0 / (double(n) * double(n) * omega_fsr * omega_fsr * m.l_n);
  if (line.mean_quality > 0.0) {
    m.q_n = line.mean_quality;
    m.r_n = m.omega_n * m.l_n / m.q_n;
  }
  return m;
}

// Equivalent lumped elements for harmonics n_lo..n_hi, using the FSR implied
// by the distributed constants. For the measured (calibrated) spacing, pass
// an explicit FSR through mode_from_fsr.
inline std::vector<ModeSpec> mode_spectrum(const LineParams& line, int n_lo, int n_hi) {
  line.validate();
  if (n_lo < 1 || n_hi < n_lo)
    throw std::invalid_argument("mode_spectrum: need 1 <= n_lo <= n_hi");
  const double omega_fsr = fsr_from_travel_time(line_travel_time(line));
  std::vector<ModeSpec> modes;
  modes.reserve(n_hi - n_lo + 1);
  for (int n = n_lo; n <= n_hi; ++n) modes.push_back(mode_from_fsr(line, n, omega_fsr));
  return modes;
}

// Effective qubit-line mutual inductance M(delta) through the coupler.
// The junction contributes L_T / cos(delta); at delta = pi/2 that diverges
// and M -> 0, which is returned exactly.
inline double mutual_inductance(const CouplerParams& c, double delta) {
  c.validate();
  const double cd = std::cos(delta);
  if (std::abs(cd) < 1e-10) return 0.0;
  const double denom = 2.0 * c.l_g + c.l_w + c.l_t / cd;
  if (std::abs(denom) < 1e-3 * c.l_g)
    throw std::domain_error("mutual_inductance: coupler denominator vanishes (singular bias point)");
  return c.l_g * c.l_g / denom;
}

// Coupling between a qubit at omega_i and the mode m, at junction phase delta.
inline double coupling_g(const QubitParams& q, const ModeSpec& m, const CouplerParams& c,
                         double delta) {
  const double mu = mutual_inductance(c, delta);
  if (mu == 0.0) return 0.0;
  return -(mu / 2.0) *
         std::sqrt(q.idle_frequency * m.omega_n / ((c.l_g + q.l_j) * (c.l_g + m.l_n)));
}

// Fermi-golden-rule decay rate of a qubit into the mode continuum.
inline double decay_rate_kappa(double g, double omega_fsr) {
  if (omega_fsr <= 0.0) throw std::invalid_argument("decay_rate_kappa: omega_fsr must be positive");
  return two_pi * g * g / omega_fsr;
}

// Coupler-generated frequency shifts of the qubit and of the mode.
inline double qubit_frequency_shift(const QubitParams& q, const ModeSpec& m,
                                    const CouplerParams& c, double g) {
  return -g * std::sqrt((c.l_g + m.l_n) / (c.l_g + q.l_j));
}

inline double mode_frequency_shift(const QubitParams& q, const ModeSpec& m,
                                   const CouplerParams& c, double g) {
  return -g * std::sqrt((c.l_g + q.l_j) / (c.l_g + m.l_n));
}

// Full device: two qubits, two couplers, one shared line. The measured
// travel time and the harmonic number of the working mode are calibration
// inputs; the nominal travel time from the distributed constants is kept as
// a cross-check.
struct DeviceParams {
  QubitParams qubit[2];
  CouplerParams coupler[2];
  LineParams line;
  double measured_travel_time = 0.0; // s; 0 = use nominal
  int working_mode = 73;             // harmonic used as relay / frame anchor
  double working_mode_freq = 0.0;    // rad/s; 0 = working_mode * fsr

  void validate() const {
    qubit[0].validate();
    qubit[1].validate();
    coupler[0].validate();
    coupler[1].validate();
    line.validate();
    if (working_mode < 1) throw std::invalid_argument("DeviceParams: working_mode must be >= 1");
  }

  double travel_time() const {
    return measured_travel_time > 0.0 ? measured_travel_time : line_travel_time(line);
  }

  // Calibrated FSR: back-solved from the identified working mode when its
  // frequency is known, else from the measured travel time, else nominal.
  double omega_fsr() const {
    if (working_mode_freq > 0.0) return fsr_from_mode_anchor(working_mode, working_mode_freq);
    return fsr_from_travel_time(travel_time());
  }

  ModeSpec mode(int n) const { return mode_from_fsr(line, n, omega_fsr()); }
  ModeSpec relay_mode() const { return mode(working_mode); }
};

}  // namespace qline
