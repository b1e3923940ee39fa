#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/KroneckerProduct>

#include "qline/units.hpp"

// Density-matrix and process-matrix machinery: linear-inversion state
// tomography, least-squares process tomography, physicality / CPTP
// projection, fidelities, concurrence, and the one- and two-qubit noise
// channels used to dress simulated states.
//
// Conventions: |g> = (1,0), |e> = (0,1); two-qubit basis {gg, ge, eg, ee}
// ordered as kron(qubit1, qubit2); sigma_z = |g><g| - |e><e| so the ground
// state is the +z pole of the Bloch sphere. Equatorial axes are labelled by
// the angle phi from +x toward +y. Process matrices use the operator basis
// {I, X, Y, Z} in that order.

namespace qline {

using cd = std::complex<double>;
using Mat2 = Eigen::Matrix2cd;
using Mat4 = Eigen::Matrix4cd;
using Vec2 = Eigen::Vector2cd;
using Vec4 = Eigen::Vector4cd;

inline const cd im{0.0, 1.0};

inline Vec2 ket_g() { return Vec2(1.0, 0.0); }
inline Vec2 ket_e() { return Vec2(0.0, 1.0); }

inline Mat2 pauli(int k) {
  Mat2 m;
  switch (k) {
    case 0: m << 1, 0, 0, 1; break;
    case 1: m << 0, 1, 1, 0; break;
    case 2: m << 0, -im, im, 0; break;
    case 3: m << 1, 0, 0, -1; break;
    default: throw std::invalid_argument("pauli: index must be 0..3");
  }
  return m;
}

// equatorial Bloch axis at angle phi from +x toward +y
inline Mat2 sigma_axis(double phi) {
  Mat2 m;
  m << 0, std::exp(-im * phi), std::exp(im * phi), 0;
  return m;
}

// rotation by angle theta about the equatorial axis at phi
inline Mat2 rot_equator(double phi, double theta) {
  const Mat2 n = sigma_axis(phi);
  return std::cos(0.5 * theta) * Mat2::Identity() - im * std::sin(0.5 * theta) * n;
}

inline Mat2 rot_z(double phi) {
  Mat2 m;
  m << std::exp(-im * 0.5 * phi), 0, 0, std::exp(im * 0.5 * phi);
  return m;
}

inline Vec4 bell_triplet() {
  Vec4 psi = Vec4::Zero();
  psi(1) = 1.0 / std::sqrt(2.0); // |ge>
  psi(2) = 1.0 / std::sqrt(2.0); // |eg>
  return psi;
}

inline Vec4 bell_singlet() {
  Vec4 psi = Vec4::Zero();
  psi(1) = 1.0 / std::sqrt(2.0);
  psi(2) = -1.0 / std::sqrt(2.0);
  return psi;
}

template <typename Derived>
Eigen::MatrixXcd hermitize(const Eigen::MatrixBase<Derived>& m) {
  return 0.5 * (m + m.adjoint());
}

// Validation thresholds for reconstructed or propagated density matrices.
template <typename Derived>
void check_density(const Eigen::MatrixBase<Derived>& rho, double herm_tol = 1e-10,
                   double trace_tol = 1e-9, double psd_tol = 1e-9) {
  if (rho.rows() != rho.cols()) throw std::invalid_argument("check_density: matrix not square");
  if ((rho - rho.adjoint()).cwiseAbs().maxCoeff() > herm_tol)
    throw std::invalid_argument("check_density: not Hermitian");
  if (std::abs(rho.trace().real() - 1.0) > trace_tol || std::abs(rho.trace().imag()) > trace_tol)
    throw std::invalid_argument("check_density: trace != 1");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(hermitize(rho));
  if (es.eigenvalues().minCoeff() < -psd_tol)
    throw std::invalid_argument("check_density: negative eigenvalue beyond tolerance");
}

// Eigenvalue clipping: diagonalize, zero out negative eigenvalues,
// renormalize the trace. Identity on already-physical states.
inline Eigen::MatrixXcd project_to_physical(const Eigen::MatrixXcd& rho) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(hermitize(rho));
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
  const double s = ev.sum();
  if (s <= 0.0) throw std::runtime_error("project_to_physical: state projects to zero");
  ev /= s;
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint();
}

template <typename VecT>
double fidelity_state(const Eigen::MatrixXcd& rho, const VecT& psi) {
  return std::real((psi.adjoint() * rho * psi)(0, 0));
}

// Wootters concurrence of a two-qubit state.
inline double concurrence(const Mat4& rho) {
  check_density(rho, 1e-8, 1e-6, 1e-6);
  const Mat4 yy = Eigen::kroneckerProduct(pauli(2), pauli(2));
  const Mat4 rho_tilde = yy * rho.conjugate() * yy;
  Eigen::ComplexEigenSolver<Mat4> es(rho * rho_tilde);
  std::array<double, 4> lam{};
  for (int i = 0; i < 4; ++i) lam[i] = std::sqrt(std::max(0.0, es.eigenvalues()(i).real()));
  std::sort(lam.begin(), lam.end(), std::greater<>());
  return std::max(0.0, lam[0] - lam[1] - lam[2] - lam[3]);
}

// ---------------------------------------------------------------------------
// State tomography
// ---------------------------------------------------------------------------

enum class TomoGate { I, X90, Y90 };

// Tomography pulse: a pi/2 rotation whose axis may be advanced around the
// equator by a calibration phase (identity ignores the phase).
inline Mat2 tomo_gate_matrix(TomoGate g, double equator_phase = 0.0) {
  switch (g) {
    case TomoGate::I: return Mat2::Identity();
    case TomoGate::X90: return rot_equator(equator_phase, 0.5 * pi);
    case TomoGate::Y90: return rot_equator(0.5 * pi + equator_phase, 0.5 * pi);
  }
  throw std::invalid_argument("tomo_gate_matrix: bad gate");
}

struct TomographySetting {
  TomoGate gate1 = TomoGate::I;
  TomoGate gate2 = TomoGate::I;
  double phase1 = 0.0;
  double phase2 = 0.0;
};

inline std::vector<TomographySetting> standard_settings_2q(double phase1 = 0.0,
                                                           double phase2 = 0.0) {
  const std::array<TomoGate, 3> gates{TomoGate::I, TomoGate::X90, TomoGate::Y90};
  std::vector<TomographySetting> s;
  for (auto g1 : gates)
    for (auto g2 : gates) s.push_back({g1, g2, phase1, phase2});
  return s;
}

// z-basis outcome probabilities (gg, ge, eg, ee) after the tomography pulses
inline Eigen::Vector4d measurement_probabilities(const Mat4& rho, const Mat2& u1, const Mat2& u2) {
  const Mat4 u = Eigen::kroneckerProduct(u1, u2);
  const Mat4 r = u * rho * u.adjoint();
  Eigen::Vector4d p;
  for (int i = 0; i < 4; ++i) p(i) = std::max(0.0, r(i, i).real());
  return p;
}

inline Eigen::Vector2d measurement_probabilities(const Mat2& rho, const Mat2& u) {
  const Mat2 r = u * rho * u.adjoint();
  Eigen::Vector2d p;
  for (int i = 0; i < 2; ++i) p(i) = std::max(0.0, r(i, i).real());
  return p;
}

inline std::vector<Eigen::Vector4d> synthetic_tomography_data(
    const Mat4& rho, const std::vector<TomographySetting>& settings) {
  std::vector<Eigen::Vector4d> out;
  out.reserve(settings.size());
  for (const auto& s : settings)
    out.push_back(measurement_probabilities(rho, tomo_gate_matrix(s.gate1, s.phase1),
                                            tomo_gate_matrix(s.gate2, s.phase2)));
  return out;
}

// Linear-inversion reconstruction from the 9 two-qubit settings. Expands rho
// over the 16 Pauli products with real coefficients and solves the resulting
// real least-squares system; exact on consistent synthetic data.
inline Mat4 state_tomography(const std::vector<TomographySetting>& settings,
                             const std::vector<Eigen::Vector4d>& probs, bool project = true) {
  if (settings.size() != probs.size() || settings.size() < 9)
    throw std::invalid_argument("state_tomography: need >= 9 settings with matching data");
  for (const auto& p : probs)
    if (std::abs(p.sum() - 1.0) > 1e-9)
      throw std::invalid_argument("state_tomography: outcome probabilities must sum to 1");

  const int rows = int(settings.size()) * 4;
  Eigen::MatrixXd design(rows, 16);
  Eigen::VectorXd b(rows);
  for (std::size_t s = 0; s < settings.size(); ++s) {
    const Mat2 u1 = tomo_gate_matrix(settings[s].gate1, settings[s].phase1);
    const Mat2 u2 = tomo_gate_matrix(settings[s].gate2, settings[s].phase2);
    const Mat4 u = Eigen::kroneckerProduct(u1, u2);
    for (int o = 0; o < 4; ++o) {
      b(int(s) * 4 + o) = probs[s](o);
      for (int j = 0; j < 4; ++j)
        for (int k = 0; k < 4; ++k) {
          const Mat4 basis = Eigen::kroneckerProduct(pauli(j), pauli(k));
          const Mat4 rotated = u * basis * u.adjoint();
          design(int(s) * 4 + o, j * 4 + k) = 0.25 * rotated(o, o).real();
        }
    }
  }
  const Eigen::VectorXd t = design.completeOrthogonalDecomposition().solve(b);
  Mat4 rho = Mat4::Zero();
  for (int j = 0; j < 4; ++j)
    for (int k = 0; k < 4; ++k)
      rho += 0.25 * t(j * 4 + k) * Eigen::kroneckerProduct(pauli(j), pauli(k));
  rho = hermitize(rho);
  if (project) rho = project_to_physical(rho);
  return rho;
}

// Single-qubit variant from the 3 standard settings.
inline Mat2 state_tomography_1q(const std::array<Eigen::Vector2d, 3>& probs, double phase = 0.0,
                                bool project = true) {
  const std::array<TomoGate, 3> gates{TomoGate::I, TomoGate::X90, TomoGate::Y90};
  Eigen::MatrixXd design(6, 4);
  Eigen::VectorXd b(6);
  for (int s = 0; s < 3; ++s) {
    if (std::abs(probs[s].sum() - 1.0) > 1e-9)
      throw std::invalid_argument("state_tomography_1q: outcome probabilities must sum to 1");
    const Mat2 u = tomo_gate_matrix(gates[s], phase);
    for (int o = 0; o < 2; ++o) {
      b(s * 2 + o) = probs[s](o);
      for (int j = 0; j < 4; ++j) {
        const Mat2 rotated = u * pauli(j) * u.adjoint();
        design(s * 2 + o, j) = 0.5 * rotated(o, o).real();
      }
    }
  }
  const Eigen::VectorXd t = design.completeOrthogonalDecomposition().solve(b);
  Mat2 rho = Mat2::Zero();
  for (int j = 0; j < 4; ++j) rho += 0.5 * t(j) * pauli(j);
  rho = hermitize(rho);
  if (project) rho = Mat2(project_to_physical(rho));
  return rho;
}

// ---------------------------------------------------------------------------
// Process tomography
// ---------------------------------------------------------------------------

// The four preparation states |g>, (|g>-i|e>)/sqrt2, (|g>+|e>)/sqrt2, |e>.
inline std::array<Mat2, 4> process_input_states() {
  const double s = 1.0 / std::sqrt(2.0);
  std::array<Vec2, 4> kets;
  kets[0] = ket_g();
  kets[1] = s * (ket_g() - im * ket_e());
  kets[2] = s * (ket_g() + ket_e());
  kets[3] = ket_e();
  std::array<Mat2, 4> rhos;
  for (int i = 0; i < 4; ++i) rhos[i] = kets[i] * kets[i].adjoint();
  return rhos;
}

inline Mat2 apply_chi(const Mat4& chi, const Mat2& rho) {
  Mat2 out = Mat2::Zero();
  for (int m = 0; m < 4; ++m)
    for (int n = 0; n < 4; ++n) out += chi(m, n) * pauli(m) * rho * pauli(n);
  return out;
}

inline Mat4 chi_identity() {
  Mat4 chi = Mat4::Zero();
  chi(0, 0) = 1.0;
  return chi;
}

// Frobenius projection onto the trace-preserving affine set
// sum_mn chi_mn P_n P_m = I.
inline Mat4 project_trace_preserving(const Mat4& chi) {
  Eigen::MatrixXcd a(4, 16);
  for (int m = 0; m < 4; ++m)
    for (int n = 0; n < 4; ++n) {
      const Mat2 pnm = pauli(n) * pauli(m);
      for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) a(r * 2 + c, m * 4 + n) = pnm(r, c);
    }
  Eigen::VectorXcd x(16);
  for (int m = 0; m < 4; ++m)
    for (int n = 0; n < 4; ++n) x(m * 4 + n) = chi(m, n);
  Eigen::VectorXcd target(4);
  target << 1.0, 0.0, 0.0, 1.0;
  const Eigen::VectorXcd resid = a * x - target;
  const Eigen::MatrixXcd aat = a * a.adjoint();
  x -= a.adjoint() * aat.ldlt().solve(resid);
  Mat4 out;
  for (int m = 0; m < 4; ++m)
    for (int n = 0; n < 4; ++n) out(m, n) = x(m * 4 + n);
  return out;
}

// Alternating projection between the PSD cone and the trace-preserving set.
inline Mat4 cptp_project(Mat4 chi, int max_iter = 500, double tol = 1e-10) {
  for (int it = 0; it < max_iter; ++it) {
    const Mat4 prev = chi;
    Eigen::SelfAdjointEigenSolver<Mat4> es(Mat4(hermitize(chi)));
    const Eigen::Vector4d ev = es.eigenvalues().cwiseMax(0.0);
    chi = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint();
    chi = project_trace_preserving(chi);
    if ((chi - prev).cwiseAbs().maxCoeff() < tol) break;
  }
  return Mat4(hermitize(chi));
}

// Least-squares chi matrix from four preparation/outcome pairs, followed by
// CPTP projection.
inline Mat4 process_tomography(const std::array<Mat2, 4>& rho_in,
                               const std::array<Mat2, 4>& rho_out, bool project = true) {
  Eigen::MatrixXcd a(16, 16);
  Eigen::VectorXcd b(16);
  for (int k = 0; k < 4; ++k)
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 2; ++c) {
        const int row = k * 4 + r * 2 + c;
        b(row) = rho_out[k](r, c);
        for (int m = 0; m < 4; ++m)
          for (int n = 0; n < 4; ++n) {
            const Mat2 op = pauli(m) * rho_in[k] * pauli(n);
            a(row, m * 4 + n) = op(r, c);
          }
      }
  const Eigen::MatrixXcd gram = a.adjoint() * a;
  if (std::abs(gram.determinant()) < 1e-20)
    throw std::invalid_argument("process_tomography: preparation states are rank deficient");
  const Eigen::VectorXcd x = a.completeOrthogonalDecomposition().solve(b);
  Mat4 chi;
  for (int m = 0; m < 4; ++m)
    for (int n = 0; n < 4; ++n) chi(m, n) = x(m * 4 + n);
  chi = hermitize(chi);
  if (project) chi = cptp_project(chi);
  return chi;
}

inline double fidelity_process(const Mat4& chi, const Mat4& chi_ideal) {
  return std::real((chi * chi_ideal).trace());
}

// ---------------------------------------------------------------------------
// Phase calibration
// ---------------------------------------------------------------------------

struct PhaseCalibration {
  double angle = 0.0;
  double fidelity = 0.0;
  bool degenerate = false;
};

inline Mat4 rotate_q2_z(const Mat4& rho, double phi) {
  const Mat4 u = Eigen::kroneckerProduct(Mat2::Identity(), rot_z(phi));
  return u * rho * u.adjoint();
}

// Detected equator phase of a two-qubit state relative to the target Bell
// vector: the returned angle is the z-rotation (on qubit 2) the state has
// accumulated, so rotate_q2_z(rho, -angle) maximizes the fidelity. Coarse
// scan plus golden-section refinement.
template <typename VecT>
PhaseCalibration dynamical_phase_calibration(const Mat4& rho, const VecT& target) {
  const auto objective = [&](double phi) { return fidelity_state(rotate_q2_z(rho, -phi), target); };
  const int n_scan = 720;
  double best_phi = 0.0, best_f = -1.0, worst_f = 2.0;
  for (int i = 0; i < n_scan; ++i) {
    const double phi = two_pi * double(i) / double(n_scan);
    const double f = objective(phi);
    if (f > best_f) {
      best_f = f;
      best_phi = phi;
    }
    worst_f = std::min(worst_f, f);
  }
  PhaseCalibration cal;
  if (best_f - worst_f < 1e-9) {
    cal.degenerate = true;
    cal.fidelity = objective(0.0);
    return cal;
  }
  // golden-section refinement on the bracketing scan interval
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = best_phi - two_pi / n_scan, b = best_phi + two_pi / n_scan;
  double c = b - gr * (b - a), d = a + gr * (b - a);
  while (b - a > 1e-7) {
    if (objective(c) > objective(d)) {
      b = d;
    } else {
      a = c;
    }
    c = b - gr * (b - a);
    d = a + gr * (b - a);
  }
  cal.angle = std::fmod(0.5 * (a + b) + two_pi, two_pi);
  cal.fidelity = objective(cal.angle);
  return cal;
}

// Deterministic z-phase accumulated by a transferred qubit state, detected
// from a set of preparation/outcome pairs; applying rot_z(angle) to the
// outcomes cancels it. Mirrors the calibrated rotation the tomography pulses
// receive in the experiment.
inline double calibrate_transfer_phase(const std::array<Mat2, 4>& rho_in,
                                       const std::array<Mat2, 4>& rho_out) {
  const auto objective = [&](double phi) {
    const Mat2 u = rot_z(phi);
    double f = 0.0;
    for (int k = 0; k < 4; ++k)
      f += std::real((u * rho_out[k] * u.adjoint() * rho_in[k]).trace());
    return f;
  };
  const int n_scan = 720;
  double best_phi = 0.0, best_f = -1e9;
  for (int i = 0; i < n_scan; ++i) {
    const double phi = two_pi * double(i) / double(n_scan);
    const double f = objective(phi);
    if (f > best_f) {
      best_f = f;
      best_phi = phi;
    }
  }
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = best_phi - two_pi / n_scan, b = best_phi + two_pi / n_scan;
  while (b - a > 1e-8) {
    const double nc = b - gr * (b - a), nd = a + gr * (b - a);
    if (objective(nc) > objective(nd)) {
      b = nd;
    } else {
      a = nc;
    }
  }
  return std::fmod(0.5 * (a + b) + two_pi, two_pi);
}

// ---------------------------------------------------------------------------
// Noise channels
// ---------------------------------------------------------------------------

// amplitude damping (|e> -> |g| with probability p)
inline std::vector<Mat2> amplitude_damping_kraus(double p) {
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("amplitude_damping_kraus: p in [0,1]");
  Mat2 k0, k1;
  k0 << 1, 0, 0, std::sqrt(1.0 - p);
  k1 << 0, std::sqrt(p), 0, 0;
  return {k0, k1};
}

// pure dephasing with coherence retention factor d = exp(-t/Tphi)
inline std::vector<Mat2> dephasing_kraus(double d) {
  if (d < 0.0 || d > 1.0) throw std::invalid_argument("dephasing_kraus: factor in [0,1]");
  Mat2 k0 = std::sqrt(0.5 * (1.0 + d)) * pauli(0);
  Mat2 k1 = std::sqrt(0.5 * (1.0 - d)) * pauli(3);
  return {k0, k1};
}

inline Mat2 apply_channel(const Mat2& rho, const std::vector<Mat2>& kraus) {
  Mat2 out = Mat2::Zero();
  for (const auto& k : kraus) out += k * rho * k.adjoint();
  return out;
}

// independent single-qubit channels on a two-qubit state
inline Mat4 apply_local_channels(const Mat4& rho, const std::vector<Mat2>& kraus1,
                                 const std::vector<Mat2>& kraus2) {
  Mat4 out = Mat4::Zero();
  for (const auto& a : kraus1)
    for (const auto& b : kraus2) {
      const Mat4 k = Eigen::kroneckerProduct(a, b);
      out += k * rho * k.adjoint();
    }
  return out;
}

inline Mat2 reduce_to_qubit1(const Mat4& rho) {
  Mat2 r;
  r << rho(0, 0) + rho(1, 1), rho(0, 2) + rho(1, 3), rho(2, 0) + rho(3, 1),
      rho(2, 2) + rho(3, 3);
  return r;
}

inline Mat2 reduce_to_qubit2(const Mat4& rho) {
  Mat2 r;
  r << rho(0, 0) + rho(2, 2), rho(0, 1) + rho(2, 3), rho(1, 0) + rho(3, 2),
      rho(1, 1) + rho(3, 3);
  return r;
}

}  // namespace qline
