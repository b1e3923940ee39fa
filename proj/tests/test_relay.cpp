#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "qline/device_io.hpp"
#include "qline/relay.hpp"
#include "qline/units.hpp"

using namespace qline;
using Catch::Approx;

namespace {

MultimodeSystem table_system(int n_modes, bool decoherence) {
  const DeviceParams dev = reference_device();
  MultimodeSystem sys;
  sys.n_modes = n_modes;
  sys.omega_fsr = dev.omega_fsr();
  sys.central_harmonic = dev.working_mode;
  if (decoherence) {
    sys.t1[0] = dev.qubit[0].t1;
    sys.t1[1] = dev.qubit[1].t1;
    sys.t_phi[0] = dev.qubit[0].t_phi();
    sys.t_phi[1] = dev.qubit[1].t_phi();
  }
  return sys;
}

Eigen::MatrixXcd excited_q1(const MultimodeSystem& sys) {
  Eigen::MatrixXcd rho = Eigen::MatrixXcd::Zero(sys.dim(), sys.dim());
  rho(1, 1) = 1.0;
  return rho;
}

}  // namespace

TEST_CASE("eigenfrequencies of the coupled block", "[relay]") {
  SECTION("resonant single mode splits by exactly 2g") {
    MultimodeSystem sys = table_system(1, false);
    const double g = mhz_to_rad(5.0);
    const Eigen::VectorXd ev = hamiltonian_eigenfrequencies(sys, g, 0.0, 0.0, 0.0);
    REQUIRE(ev.size() == 2);
    CHECK(ev(1) - ev(0) == Approx(2.0 * g).epsilon(1e-12));
  }

  SECTION("uncoupled spectrum is the bare lines") {
    MultimodeSystem sys = table_system(4, false);
    const Eigen::VectorXd ev = hamiltonian_eigenfrequencies(sys, mhz_to_rad(1e-9), 0.0,
                                                            mhz_to_rad(33.0), 0.0);
    REQUIRE(ev.size() == 5);
    // bare mode detunings plus the bare qubit line, sorted
    std::vector<double> expected;
    for (int k = 0; k < 4; ++k) expected.push_back(sys.mode_detuning(k));
    expected.push_back(mhz_to_rad(33.0));
    std::sort(expected.begin(), expected.end());
    for (int i = 0; i < 5; ++i) CHECK(ev(i) == Approx(expected[i]).margin(1.0));
  }

  SECTION("avoided crossing near every mode of a six-mode ladder") {
    MultimodeSystem sys = table_system(6, false);
    const double g = mhz_to_rad(5.0);
    for (int k = 0; k < 6; ++k) {
      // on resonance with mode k the local gap is 2 g within a few percent
      const Eigen::VectorXd ev =
          hamiltonian_eigenfrequencies(sys, g, 0.0, sys.mode_detuning(k), 0.0);
      double min_gap = 1e18;
      for (int i = 0; i + 1 < ev.size(); ++i) min_gap = std::min(min_gap, ev(i + 1) - ev(i));
      CHECK(min_gap == Approx(2.0 * g).epsilon(0.02));
    }
  }
}

TEST_CASE("lindblad invariants", "[relay]") {
  const double g = mhz_to_rad(5.0);

  SECTION("vacuum Rabi full swap on a single resonant mode") {
    MultimodeSystem sys = table_system(1, false);
    std::vector<RelayStage> st(1);
    st[0].duration = 0.25 * two_pi / g; // pi/(2g) = 50 ns
    st[0].g1 = g;
    const auto res = lindblad_evolve(sys, excited_q1(sys), st, 1e-11);
    CHECK(res.rho(1, 1).real() < 1e-6);
    CHECK(res.rho(3, 3).real() == Approx(1.0).margin(1e-6));
  }

  SECTION("trace, hermiticity and positivity with decoherence") {
    MultimodeSystem sys = table_system(5, true);
    std::vector<RelayStage> st(2);
    st[0].duration = ns_to_s(52.0);
    st[0].g1 = g;
    st[0].dephasing_scale = std::sqrt(2.0);
    st[1].duration = ns_to_s(52.0);
    st[1].g2 = g;
    st[1].dephasing_scale = std::sqrt(2.0);
    const auto res = lindblad_evolve(sys, excited_q1(sys), st, 1e-11);
    CHECK(std::abs(res.rho.trace().real() - 1.0) < 1e-6);
    CHECK((res.rho - res.rho.adjoint()).cwiseAbs().maxCoeff() < 1e-9);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(res.rho);
    CHECK(es.eigenvalues().minCoeff() > -1e-6);
  }

  SECTION("excitation conserved without decoherence") {
    MultimodeSystem sys = table_system(5, false);
    std::vector<RelayStage> st(1);
    st[0].duration = ns_to_s(80.0);
    st[0].g1 = g;
    st[0].g2 = g;
    const auto res = lindblad_evolve(sys, excited_q1(sys), st, 5e-12);
    double total = res.rho(1, 1).real() + res.rho(2, 2).real();
    for (int k = 0; k < sys.n_modes; ++k) total += res.rho(3 + k, 3 + k).real();
    CHECK(total == Approx(1.0).margin(1e-8));
  }

  SECTION("uncoupled qubit decays exponentially with T1") {
    MultimodeSystem sys = table_system(3, true);
    std::vector<RelayStage> st(1);
    st[0].duration = ns_to_s(400.0);
    const auto res = lindblad_evolve(sys, excited_q1(sys), st, 1e-11);
    const double expected = std::exp(-ns_to_s(400.0) / sys.t1[0]);
    CHECK(res.rho(1, 1).real() == Approx(expected).epsilon(1e-6));
  }

  SECTION("oversized step triggers the trace guard") {
    MultimodeSystem sys = table_system(5, true);
    std::vector<RelayStage> st(1);
    st[0].duration = ns_to_s(100.0);
    st[0].g1 = g;
    CHECK_THROWS_AS(lindblad_evolve(sys, excited_q1(sys), st, 5e-9), std::runtime_error);
  }
}

TEST_CASE("relay transfer protocol", "[relay]") {
  const double g = mhz_to_rad(5.0);

  SECTION("single-mode ideal relay is the identity channel") {
    MultimodeSystem sys = table_system(1, false);
    RelayProtocol proto;
    proto.g = g;
    proto.swap_time_1 = proto.swap_time_2 = 0.25 * two_pi / g;
    proto.dt = 1e-11;

    Mat2 rho_in;
    rho_in << 0.3, cd(0.2, 0.1), cd(0.2, -0.1), 0.7;
    const auto res = relay_transfer(sys, rho_in, proto);
    CHECK(std::abs(res.rho_out(1, 1).real() - 0.7) < 1e-6);
    CHECK(std::abs(std::abs(res.rho_out(0, 1)) - std::abs(rho_in(0, 1))) < 1e-6);
  }

  SECTION("ground input is a fixed point") {
    MultimodeSystem sys = table_system(5, true);
    RelayProtocol proto;
    proto.g = g;
    proto.swap_time_1 = proto.swap_time_2 = ns_to_s(52.0);
    Mat2 ground = Mat2::Zero();
    ground(0, 0) = 1.0;
    const auto res = relay_transfer(sys, ground, proto);
    CHECK(res.rho_out(0, 0).real() == Approx(1.0).margin(1e-9));
    CHECK(std::abs(res.rho_out(0, 1)) < 1e-9);
  }

  SECTION("calibrated swap time sits near the bare half period") {
    MultimodeSystem sys = table_system(5, false);
    const double tau = calibrate_swap_time(sys, g);
    CHECK(s_to_ns(tau) > 45.0);
    CHECK(s_to_ns(tau) < 60.0);
  }

  SECTION("mode-count convergence of the relay Bell fidelity") {
    RelayProtocol proto;
    proto.g = g;
    proto.swap_time_2 = ns_to_s(52.0);
    proto.swap_time_1 = ns_to_s(26.0);
    double f[2];
    int idx = 0;
    for (int n : {5, 7}) {
      MultimodeSystem sys = table_system(n, true);
      const auto bell = relay_bell(sys, proto);
      f[idx++] = fidelity_state(bell.rho, bell_singlet());
    }
    CHECK(std::abs(f[0] - f[1]) < 0.003);
  }
}

TEST_CASE("relay bell generation", "[relay]") {
  const double g = mhz_to_rad(5.0);

  SECTION("ideal half swap yields a unit-fidelity singlet") {
    MultimodeSystem sys = table_system(1, false);
    RelayProtocol proto;
    proto.g = g;
    proto.swap_time_2 = 0.25 * two_pi / g;
    proto.swap_time_1 = 0.5 * proto.swap_time_2;
    proto.dt = 1e-11;
    const auto res = relay_bell(sys, proto);
    CHECK(fidelity_state(res.rho, bell_singlet()) == Approx(1.0).margin(1e-6));
    CHECK(concurrence(res.rho) == Approx(1.0).margin(1e-6));
  }

  SECTION("trace of the reduced state is preserved") {
    MultimodeSystem sys = table_system(5, true);
    RelayProtocol proto;
    proto.g = g;
    const auto res = relay_bell(sys, proto);
    CHECK(std::abs(res.rho.trace().real() - 1.0) < 1e-6);
    CHECK(res.rho(3, 3).real() < 1e-9); // no double excitation
  }
}
