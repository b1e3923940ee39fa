#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "qline/qinfo.hpp"
#include "qline/units.hpp"

// Weak-coupling dynamics: the qubit-multimode Hamiltonian restricted to the
// single-excitation subspace, evolved either as eigenvalue spectra or under
// the Lindblad master equation with qubit T1, qubit pure dephasing, and
// optional per-mode photon loss.
//
// Basis of the truncated space (dimension N+3):
//   index 0        vacuum (no excitation anywhere)
//   index 1, 2     excitation in qubit 1 / qubit 2
//   index 3..N+2   photon in standing mode k = 0..N-1
// The rotating frame sits at the center of the mode ladder, so mode k is
// detuned by (k - (N-1)/2) * omega_fsr.

namespace qline {

struct MultimodeSystem {
  int n_modes = 5;
  double omega_fsr = 0.0;      // rad/s
  int central_harmonic = 73;   // physical harmonic at the ladder center
  bool exact_coupling = false; // scale g_{i,n} by sqrt(n/central) per mode
  double t1[2] = {0.0, 0.0};   // s; 0 = no decay
  double t_phi[2] = {0.0, 0.0}; // s; 0 = no pure dephasing
  double mean_quality = 0.0;   // per-mode loss omega_n/<Q>; 0 = lossless

  int dim() const { return n_modes + 3; }

  double mode_detuning(int k) const {
    return (double(k) - 0.5 * double(n_modes - 1)) * omega_fsr;
  }

  // physical harmonic number of ladder slot k (exact for odd N; for even N
  // the ladder straddles the working mode and slots round outward)
  double mode_harmonic(int k) const {
    return double(central_harmonic) + double(k) - 0.5 * double(n_modes - 1);
  }

  double coupling_scale(int k) const {
    if (!exact_coupling) return 1.0;
    return std::sqrt(mode_harmonic(k) / double(central_harmonic));
  }
};

// One piecewise-constant control interval.
struct RelayStage {
  double duration = 0.0;   // s
  double g1 = 0.0;         // qubit-1 base coupling, rad/s (0 = off)
  double g2 = 0.0;
  double detuning1 = 0.0;  // rad/s, rotating frame
  double detuning2 = 0.0;
  double dephasing_scale = 1.0; // multiplies Tphi during this stage
};

struct SimTrace {
  std::vector<double> times;               // s
  std::vector<double> p_q1, p_q2;          // excited-state populations
  std::vector<std::vector<double>> p_mode; // [mode][sample]
};

namespace detail {

inline Eigen::MatrixXcd stage_hamiltonian(const MultimodeSystem& sys, const RelayStage& st) {
  const int d = sys.dim();
  Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(d, d);
  h(1, 1) = st.detuning1;
  h(2, 2) = st.detuning2;
  for (int k = 0; k < sys.n_modes; ++k) {
    const int mk = 3 + k;
    h(mk, mk) = sys.mode_detuning(k);
    const double scale = sys.coupling_scale(k);
    if (st.g1 != 0.0) {
      h(1, mk) = st.g1 * scale;
      h(mk, 1) = st.g1 * scale;
    }
    if (st.g2 != 0.0) {
      h(2, mk) = st.g2 * scale;
      h(mk, 2) = st.g2 * scale;
    }
  }
  return h;
}

struct CollapseTerm {
  int from = 0; // |to><from| at rate gamma
  int to = 0;
  double gamma = 0.0;
};

inline std::vector<CollapseTerm> collapse_terms(const MultimodeSystem& sys,
                                                double dephasing_scale) {
  std::vector<CollapseTerm> terms;
  for (int i = 0; i < 2; ++i) {
    if (sys.t1[i] > 0.0) terms.push_back({1 + i, 0, 1.0 / sys.t1[i]});
    if (sys.t_phi[i] > 0.0)
      terms.push_back({1 + i, 1 + i, 2.0 / (sys.t_phi[i] * dephasing_scale)});
  }
  if (sys.mean_quality > 0.0) {
    for (int k = 0; k < sys.n_modes; ++k) {
      const double omega_n = sys.mode_harmonic(k) * sys.omega_fsr;
      terms.push_back({3 + k, 0, omega_n / sys.mean_quality});
    }
  }
  return terms;
}

// dρ = -i[H,ρ] + Σ γ (AρA† - ½{A†A, ρ}) for A = |to><from|
inline Eigen::MatrixXcd master_rhs(const Eigen::MatrixXcd& h,
                                   const std::vector<CollapseTerm>& terms,
                                   const Eigen::MatrixXcd& rho) {
  Eigen::MatrixXcd drho = -im * (h * rho - rho * h);
  for (const auto& t : terms) {
    drho(t.to, t.to) += t.gamma * rho(t.from, t.from).real();
    drho.row(t.from) -= (0.5 * t.gamma) * rho.row(t.from);
    drho.col(t.from) -= (0.5 * t.gamma) * rho.col(t.from);
  }
  return drho;
}

}  // namespace detail

struct LindbladResult {
  Eigen::MatrixXcd rho;
  SimTrace trace;
};

// Fixed-step RK4 on the vectorized master equation over a stage schedule.
// Records populations every record_stride steps. Aborts if the trace drifts
// beyond 1e-6.
inline LindbladResult lindblad_evolve(const MultimodeSystem& sys, Eigen::MatrixXcd rho,
                                      const std::vector<RelayStage>& schedule, double dt,
                                      int record_stride = 10) {
  if (dt <= 0.0) throw std::invalid_argument("lindblad_evolve: dt must be positive");
  const int d = sys.dim();
  if (rho.rows() != d || rho.cols() != d)
    throw std::invalid_argument("lindblad_evolve: state dimension mismatch");

  LindbladResult out;
  out.trace.p_mode.resize(sys.n_modes);
  double t = 0.0;
  long step = 0;
  const auto record = [&]() {
    out.trace.times.push_back(t);
    out.trace.p_q1.push_back(rho(1, 1).real());
    out.trace.p_q2.push_back(rho(2, 2).real());
    for (int k = 0; k < sys.n_modes; ++k) out.trace.p_mode[k].push_back(rho(3 + k, 3 + k).real());
  };
  record();

  for (const auto& st : schedule) {
    const Eigen::MatrixXcd h = detail::stage_hamiltonian(sys, st);
    const auto terms = detail::collapse_terms(sys, st.dephasing_scale);
    const long n_steps = std::lround(st.duration / dt);
    for (long i = 0; i < n_steps; ++i) {
      const Eigen::MatrixXcd k1 = detail::master_rhs(h, terms, rho);
      const Eigen::MatrixXcd k2 = detail::master_rhs(h, terms, rho + 0.5 * dt * k1);
      const Eigen::MatrixXcd k3 = detail::master_rhs(h, terms, rho + 0.5 * dt * k2);
      const Eigen::MatrixXcd k4 = detail::master_rhs(h, terms, rho + dt * k3);
      rho += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      rho = 0.5 * (rho + rho.adjoint().eval());
      t += dt;
      if (++step % record_stride == 0) record();
      if (std::abs(rho.trace().real() - 1.0) > 1e-6)
        throw std::runtime_error(
            "lindblad_evolve: trace drift exceeds 1e-6, reduce dt (currently " +
            std::to_string(s_to_ns(dt)) + " ns)");
    }
  }
  if (step % record_stride != 0) record();
  out.rho = rho;
  return out;
}

// Closed-system amplitude evolution on the excited block; used for timing
// calibration where decoherence is irrelevant.
inline Eigen::VectorXcd schroedinger_evolve(const MultimodeSystem& sys, Eigen::VectorXcd c,
                                            const std::vector<RelayStage>& schedule, double dt) {
  const int d = sys.dim();
  if (c.size() != d) throw std::invalid_argument("schroedinger_evolve: dimension mismatch");
  for (const auto& st : schedule) {
    const Eigen::MatrixXcd h = detail::stage_hamiltonian(sys, st);
    const long n_steps = std::lround(st.duration / dt);
    for (long i = 0; i < n_steps; ++i) {
      const Eigen::VectorXcd k1 = -im * (h * c);
      const Eigen::VectorXcd k2 = -im * (h * (c + 0.5 * dt * k1));
      const Eigen::VectorXcd k3 = -im * (h * (c + 0.5 * dt * k2));
      const Eigen::VectorXcd k4 = -im * (h * (c + dt * k3));
      c += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
  }
  return c;
}

// Sorted eigenvalues of the single-excitation Hamiltonian block (coupled
// qubits + modes) at the given working point; sweeping the detuning outside
// of this call reproduces the spectroscopy fits.
inline Eigen::VectorXd hamiltonian_eigenfrequencies(const MultimodeSystem& sys, double g1,
                                                    double g2, double detuning1,
                                                    double detuning2) {
  const bool q1 = g1 != 0.0, q2 = g2 != 0.0;
  const int nq = int(q1) + int(q2);
  const int d = sys.n_modes + nq;
  Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(d, d);
  int row = 0;
  if (q1) h(row, row) = detuning1, ++row;
  if (q2) h(row, row) = detuning2, ++row;
  for (int k = 0; k < sys.n_modes; ++k) {
    const int mk = nq + k;
    h(mk, mk) = sys.mode_detuning(k);
    const double scale = sys.coupling_scale(k);
    int qr = 0;
    if (q1) {
      h(qr, mk) = g1 * scale;
      h(mk, qr) = g1 * scale;
      ++qr;
    }
    if (q2) {
      h(qr, mk) = g2 * scale;
      h(mk, qr) = g2 * scale;
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h);
  return es.eigenvalues();
}

// ---------------------------------------------------------------------------
// Relay protocols
// ---------------------------------------------------------------------------

struct RelayProtocol {
  double g = mhz_to_rad(5.0); // on-state coupling of both qubits
  double swap_time_1 = 0.0;   // s; <= 0 requests calibration
  double swap_time_2 = 0.0;
  bool sqrt2_dephasing = true;
  double dt = 1e-11;          // s
};

// Shared swap duration that maximizes the two-stage transfer, located by a
// coarse sweep of the closed-system dynamics plus parabolic refinement.
inline double calibrate_swap_time(const MultimodeSystem& sys, double g, double dt = 5e-12) {
  const double tau0 = 0.25 * two_pi / g; // bare half-swap pi/(2g)
  const double lo = 0.85 * tau0, hi = 1.20 * tau0;
  const int n_pts = 36;
  const auto transfer = [&](double tau) {
    Eigen::VectorXcd c = Eigen::VectorXcd::Zero(sys.dim());
    c(1) = 1.0;
    std::vector<RelayStage> stages(2);
    stages[0].duration = tau;
    stages[0].g1 = g;
    stages[1].duration = tau;
    stages[1].g2 = g;
    c = schroedinger_evolve(sys, c, stages, dt);
    return std::norm(c(2));
  };
  double best_tau = tau0, best_p = -1.0;
  std::vector<double> taus(n_pts), ps(n_pts);
  for (int i = 0; i < n_pts; ++i) {
    taus[i] = lo + (hi - lo) * double(i) / double(n_pts - 1);
    ps[i] = transfer(taus[i]);
    if (ps[i] > best_p) {
      best_p = ps[i];
      best_tau = taus[i];
    }
  }
  // parabolic refinement through the best point and its neighbors
  for (int i = 1; i + 1 < n_pts; ++i) {
    if (taus[i] == best_tau) {
      const double d1 = ps[i + 1] - ps[i - 1];
      const double d2 = ps[i + 1] - 2.0 * ps[i] + ps[i - 1];
      if (d2 < 0.0) best_tau = taus[i] - 0.5 * (taus[i] - taus[i - 1]) * d1 / d2 / 1.0;
      break;
    }
  }
  return best_tau;
}

inline Eigen::MatrixXcd embed_qubit1(const MultimodeSystem& sys, const Mat2& rho_q1) {
  Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(sys.dim(), sys.dim());
  rho(0, 0) = rho_q1(0, 0);
  rho(0, 1) = rho_q1(0, 1);
  rho(1, 0) = rho_q1(1, 0);
  rho(1, 1) = rho_q1(1, 1);
  return rho;
}

// Partial trace onto qubit 2. Populations left in qubit 1 or the modes
// appear as ground-state weight; their coherences to qubit 2 trace out.
inline Mat2 reduce_to_q2(const Eigen::MatrixXcd& rho) {
  Mat2 out = Mat2::Zero();
  const int d = int(rho.rows());
  for (int i = 0; i < d; ++i)
    if (i != 2) out(0, 0) += rho(i, i).real();
  out(1, 1) = rho(2, 2).real();
  out(0, 1) = rho(0, 2);
  out(1, 0) = rho(2, 0);
  return out;
}

// Joint two-qubit state, tracing out the modes.
inline Mat4 reduce_to_two_qubits(const Eigen::MatrixXcd& rho) {
  Mat4 out = Mat4::Zero();
  const int d = int(rho.rows());
  double pg = rho(0, 0).real();
  for (int i = 3; i < d; ++i) pg += rho(i, i).real();
  out(0, 0) = pg;                // |gg>
  out(1, 1) = rho(2, 2).real();  // |ge> : excitation in qubit 2
  out(2, 2) = rho(1, 1).real();  // |eg> : excitation in qubit 1
  out(0, 1) = rho(0, 2);
  out(1, 0) = rho(2, 0);
  out(0, 2) = rho(0, 1);
  out(2, 0) = rho(1, 0);
  out(2, 1) = rho(1, 2);         // <eg|rho|ge>
  out(1, 2) = rho(2, 1);
  return out;
}

inline std::vector<RelayStage> relay_schedule(const RelayProtocol& p, double tau1, double tau2) {
  const double scale = p.sqrt2_dephasing ? std::sqrt(2.0) : 1.0;
  std::vector<RelayStage> stages(2);
  stages[0].duration = tau1;
  stages[0].g1 = p.g;
  stages[0].dephasing_scale = scale;
  stages[1].duration = tau2;
  stages[1].g2 = p.g;
  stages[1].dephasing_scale = scale;
  return stages;
}

struct RelayTransferResult {
  Mat2 rho_out;
  SimTrace trace;
  double swap_time = 0.0; // s, the stage duration actually used
};

// Sequential swap Q1 -> relay mode -> Q2 with abrupt coupling switching.
inline RelayTransferResult relay_transfer(const MultimodeSystem& sys, const Mat2& rho_in,
                                          const RelayProtocol& proto) {
  double tau1 = proto.swap_time_1, tau2 = proto.swap_time_2;
  if (tau1 <= 0.0 || tau2 <= 0.0) {
    const double tau = calibrate_swap_time(sys, proto.g);
    if (tau1 <= 0.0) tau1 = tau;
    if (tau2 <= 0.0) tau2 = tau;
  }
  auto res = lindblad_evolve(sys, embed_qubit1(sys, rho_in), relay_schedule(proto, tau1, tau2),
                             proto.dt);
  return {reduce_to_q2(res.rho), std::move(res.trace), tau1};
}

struct RelayBellResult {
  Mat4 rho;
  SimTrace trace;
  double half_swap_time = 0.0;
  double full_swap_time = 0.0;
};

// Half swap on Q1 followed by a full mode -> Q2 swap; the joint state after
// tracing out the modes approaches the Bell singlet.
inline RelayBellResult relay_bell(const MultimodeSystem& sys, const RelayProtocol& proto) {
  double tau2 = proto.swap_time_2;
  if (tau2 <= 0.0) tau2 = calibrate_swap_time(sys, proto.g);
  const double tau_half = proto.swap_time_1 > 0.0 ? proto.swap_time_1 : 0.5 * tau2;
  Mat2 excited = Mat2::Zero();
  excited(1, 1) = 1.0;
  auto res = lindblad_evolve(sys, embed_qubit1(sys, excited),
                             relay_schedule(proto, tau_half, tau2), proto.dt);
  return {reduce_to_two_qubits(res.rho), std::move(res.trace), tau_half, tau2};
}

}  // namespace qline
