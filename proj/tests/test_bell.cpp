#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "qline/bell.hpp"
#include "test_util.hpp"

using namespace qline;
using Catch::Approx;

namespace {
const ReadoutModel readout_q1{0.984, 0.950};
const ReadoutModel readout_q2{0.984, 0.942};
}  // namespace

TEST_CASE("projective outcome probabilities", "[bell]") {
  SECTION("singlet anticorrelates along any common axis") {
    const Vec4 psi = bell_singlet();
    const Mat4 rho = psi * psi.adjoint();
    for (double phi : {0.0, 0.4, 1.3, 2.9}) {
      const Eigen::Vector4d p = outcome_probabilities(rho, phi, phi);
      CHECK(p(0) == Approx(0.0).margin(1e-12));
      CHECK(p(3) == Approx(0.0).margin(1e-12));
      CHECK(p(1) == Approx(0.5).margin(1e-12));
      CHECK(p(2) == Approx(0.5).margin(1e-12));
      CHECK(correlator(p) == Approx(-1.0).margin(1e-12));
    }
  }

  SECTION("triplet correlates along x") {
    const Vec4 psi = bell_triplet();
    const Mat4 rho = psi * psi.adjoint();
    CHECK(correlator(outcome_probabilities(rho, 0.0, 0.0)) == Approx(1.0).margin(1e-12));
  }

  SECTION("maximally mixed state is flat") {
    const Mat4 rho = 0.25 * Mat4::Identity();
    const Eigen::Vector4d p = outcome_probabilities(rho, 0.7, 2.1);
    for (int i = 0; i < 4; ++i) CHECK(p(i) == Approx(0.25).margin(1e-12));
  }

  SECTION("rotation construction equals direct projectors") {
    Rng rng(3);
    const Mat4 rho = qline_test::random_density(rng, 4);
    for (double phi1 : {0.0, 0.9, 4.0})
      for (double phi2 : {0.3, 2.2}) {
        const Eigen::Vector4d p = outcome_probabilities(rho, phi1, phi2);
        const Mat2 pg1 = 0.5 * (Mat2::Identity() + sigma_axis(phi1));
        const Mat2 pe1 = 0.5 * (Mat2::Identity() - sigma_axis(phi1));
        const Mat2 pg2 = 0.5 * (Mat2::Identity() + sigma_axis(phi2));
        const Mat2 pe2 = 0.5 * (Mat2::Identity() - sigma_axis(phi2));
        const Mat2 proj1[2] = {pg1, pe1};
        const Mat2 proj2[2] = {pg2, pe2};
        for (int o1 = 0; o1 < 2; ++o1)
          for (int o2 = 0; o2 < 2; ++o2) {
            const Mat4 proj = Eigen::kroneckerProduct(proj1[o1], proj2[o2]);
            const double expected = std::real((rho * proj).trace());
            CHECK(p(o1 * 2 + o2) == Approx(expected).margin(1e-12));
          }
      }
  }
}

TEST_CASE("readout confusion model", "[bell]") {
  SECTION("perfect readout is the identity") {
    const ReadoutModel ideal{1.0, 1.0};
    const Eigen::Vector4d p(0.1, 0.2, 0.3, 0.4);
    CHECK((apply_readout(p, ideal, ideal) - p).cwiseAbs().maxCoeff() < 1e-15);
  }

  SECTION("correction inverts application exactly") {
    const Eigen::Vector4d p(0.05, 0.45, 0.35, 0.15);
    const Eigen::Vector4d degraded = apply_readout(p, readout_q1, readout_q2);
    const auto corrected = correct_readout(degraded, readout_q1, readout_q2);
    CHECK_FALSE(corrected.clipped);
    CHECK((corrected.p - p).cwiseAbs().maxCoeff() < 1e-12);
  }

  SECTION("brute-force kron application as oracle") {
    const Eigen::Vector4d p(0.3, 0.3, 0.2, 0.2);
    Eigen::Matrix2d c1, c2; // column-stochastic P(report row | true col)
    c1 << readout_q1.f_g, 1.0 - readout_q1.f_e, 1.0 - readout_q1.f_g, readout_q1.f_e;
    c2 << readout_q2.f_g, 1.0 - readout_q2.f_e, 1.0 - readout_q2.f_g, readout_q2.f_e;
    Eigen::Vector4d expected = Eigen::Vector4d::Zero();
    for (int r1 = 0; r1 < 2; ++r1)
      for (int r2 = 0; r2 < 2; ++r2)
        for (int t1 = 0; t1 < 2; ++t1)
          for (int t2 = 0; t2 < 2; ++t2)
            expected(r1 * 2 + r2) += c1(r1, t1) * c2(r2, t2) * p(t1 * 2 + t2);
    CHECK((apply_readout(p, readout_q1, readout_q2) - expected).cwiseAbs().maxCoeff() < 1e-14);
  }

  SECTION("correlator shrinks by the visibility product plus an offset") {
    const Vec4 psi = bell_triplet();
    const Mat4 rho = psi * psi.adjoint();
    const Eigen::Vector4d p = outcome_probabilities(rho, 0.0, 0.0);
    const double e_true = correlator(p);
    const double e_meas = correlator(apply_readout(p, readout_q1, readout_q2));
    const double lam = (readout_q1.f_g + readout_q1.f_e - 1.0) *
                       (readout_q2.f_g + readout_q2.f_e - 1.0);
    const double offset = (readout_q1.f_g - readout_q1.f_e) * (readout_q2.f_g - readout_q2.f_e);
    // single-qubit equatorial moments vanish for a Bell state
    CHECK(e_meas == Approx(lam * e_true + offset).margin(1e-12));
  }

  SECTION("non-invertible confusion is rejected") {
    const ReadoutModel junk{0.5, 0.5};
    CHECK_THROWS_AS(correct_readout(Eigen::Vector4d(0.25, 0.25, 0.25, 0.25), junk, readout_q2),
                    std::invalid_argument);
  }
}

TEST_CASE("chsh correlation", "[bell]") {
  SECTION("triplet reaches 2 sqrt 2 at pi/4") {
    const Vec4 psi = bell_triplet();
    const Mat4 rho = psi * psi.adjoint();
    CHECK(chsh_s(rho, 0.25 * pi) == Approx(2.0 * std::sqrt(2.0)).margin(1e-9));
  }

  SECTION("calibrated singlet frame reaches 2 sqrt 2 at 7 pi/4") {
    const Vec4 psi = chsh_singlet_frame();
    const Mat4 rho = psi * psi.adjoint();
    CHECK(chsh_s(rho, 1.75 * pi) == Approx(2.0 * std::sqrt(2.0)).margin(1e-9));
    // and it is a singlet up to a local z rotation
    CHECK(fidelity_state(rotate_q2_z(rho, -0.5 * pi), bell_singlet()) ==
          Approx(1.0).margin(1e-12));
  }

  SECTION("sweep argmax positions") {
    const Vec4 t = bell_triplet();
    const Vec4 s = chsh_singlet_frame();
    const auto sweep_t =
        chsh_theta_sweep(Mat4(t * t.adjoint()), readout_q1, readout_q2, 100, 100, 1);
    const auto sweep_s =
        chsh_theta_sweep(Mat4(s * s.adjoint()), readout_q1, readout_q2, 100, 100, 1);
    CHECK(sweep_t.argmax_corrected == Approx(0.25 * pi).margin(two_pi / 100.0));
    CHECK(sweep_s.argmax_corrected == Approx(1.75 * pi).margin(two_pi / 100.0));
    CHECK(sweep_t.max_corrected == Approx(2.0 * std::sqrt(2.0)).margin(1e-3));
  }

  SECTION("periodicity in theta") {
    Rng rng(17);
    const Mat4 rho = qline_test::random_density(rng, 4);
    for (double theta : {0.3, 1.9}) CHECK(chsh_s(rho, theta) == Approx(chsh_s(rho, theta + two_pi)).margin(1e-12));
  }

  SECTION("tsirelson bound on random states") {
    Rng rng(29);
    const double bound = 2.0 * std::sqrt(2.0) + 1e-9;
    for (int k = 0; k < 200; ++k) {
      const Mat4 rho = qline_test::random_density(rng, 4);
      for (int i = 0; i < 24; ++i) {
        const double theta = two_pi * double(i) / 24.0;
        CHECK(std::abs(chsh_s(rho, theta)) <= bound);
      }
    }
  }

  SECTION("classical bound on product states") {
    Rng rng(31);
    for (int k = 0; k < 100; ++k) {
      const Mat4 rho = qline_test::random_product_state(rng);
      for (int i = 0; i < 24; ++i) {
        const double theta = two_pi * double(i) / 24.0;
        CHECK(std::abs(chsh_s(rho, theta)) <= 2.0 + 1e-9);
      }
    }
  }
}

TEST_CASE("shot sampling", "[bell]") {
  SECTION("deterministic for a fixed seed") {
    const Eigen::Vector4d p(0.4, 0.1, 0.2, 0.3);
    Rng a(123), b(123);
    const ShotTable ta = sample_shots(p, 5000, a);
    const ShotTable tb = sample_shots(p, 5000, b);
    CHECK(ta.n_gg == tb.n_gg);
    CHECK(ta.n_ge == tb.n_ge);
    CHECK(ta.n_eg == tb.n_eg);
    CHECK(ta.n_ee == tb.n_ee);
  }

  SECTION("degenerate distribution lands in one bin") {
    Rng rng(7);
    const ShotTable t = sample_shots(Eigen::Vector4d(1, 0, 0, 0), 1000, rng);
    CHECK(t.n_gg == 1000);
    CHECK(t.total == 1000);
  }

  SECTION("sampled S converges to the exact value") {
    const Vec4 psi = bell_triplet();
    const Mat4 rho = psi * psi.adjoint();
    const double theta = 0.25 * pi;
    const double s_exact = chsh_s(rho, theta);
    Rng rng(2024);
    std::array<ShotTable, 4> tables;
    const auto pairs = chsh_axis_pairs(theta);
    for (int k = 0; k < 4; ++k)
      tables[k] =
          sample_shots(outcome_probabilities(rho, pairs[k].first, pairs[k].second), 1000000, rng);
    const auto est = chsh_from_shots(tables);
    CHECK(std::abs(est.s - s_exact) < 0.01);
    CHECK(est.sigma < 0.005);
  }

  SECTION("propagated error bar agrees with bootstrap") {
    const Vec4 psi = bell_triplet();
    const Mat4 rho = 0.9 * psi * psi.adjoint() + 0.1 * 0.25 * Mat4::Identity();
    const double theta = 0.6;
    Rng rng(55);
    std::array<ShotTable, 4> tables;
    const auto pairs = chsh_axis_pairs(theta);
    for (int k = 0; k < 4; ++k) {
      Eigen::Vector4d p = outcome_probabilities(Mat4(rho), pairs[k].first, pairs[k].second);
      p = apply_readout(p, readout_q1, readout_q2);
      tables[k] = sample_shots(p, 10000, rng);
    }
    const auto raw = chsh_from_shots(tables);
    const double sigma_boot = chsh_bootstrap_sigma(tables, rng, 400);
    CHECK(raw.sigma == Approx(sigma_boot).epsilon(0.3));

    const auto corr = chsh_from_shots(tables, &readout_q1, &readout_q2);
    CHECK(corr.sigma > raw.sigma); // inversion amplifies shot noise
  }
}
