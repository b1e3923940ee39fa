#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "qline/qinfo.hpp"
#include "qline/units.hpp"

// Single-shot measurement model and CHSH statistics. Readout is a per-qubit
// confusion matrix built from the assignment fidelities (F_g, F_e);
// equatorial-axis measurements are implemented as a pi/2 rotation followed
// by a z-basis measurement. Shot sampling uses a seeded generator with a
// fixed, platform-independent contract: std::mt19937_64 with uniforms formed
// as (x >> 11) * 2^-53.

namespace qline {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  double uniform() { return double(gen_() >> 11) * 0x1.0p-53; }
  std::uint64_t raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
};

// Row-stochastic single-qubit assignment matrix: row = prepared state,
// column = reported state.
struct ReadoutModel {
  double f_g = 1.0;
  double f_e = 1.0;

  Eigen::Matrix2d matrix() const {
    Eigen::Matrix2d m;
    m << f_g, 1.0 - f_g, 1.0 - f_e, f_e;
    return m;
  }
  bool invertible() const { return f_g + f_e - 1.0 > 1e-12; }
};

// Map true outcome probabilities (gg, ge, eg, ee) to reported ones.
inline Eigen::Vector4d apply_readout(const Eigen::Vector4d& p, const ReadoutModel& r1,
                                     const ReadoutModel& r2) {
  const Eigen::Matrix4d k =
      Eigen::kroneckerProduct(r1.matrix().transpose(), r2.matrix().transpose());
  return k * p;
}

struct CorrectedProbabilities {
  Eigen::Vector4d p;
  bool clipped = false; // shot noise pushed the inversion out of the simplex
};

inline CorrectedProbabilities correct_readout(const Eigen::Vector4d& p_meas,
                                              const ReadoutModel& r1, const ReadoutModel& r2) {
  if (!r1.invertible() || !r2.invertible())
    throw std::invalid_argument("correct_readout: confusion matrix not invertible (F_g + F_e <= 1)");
  const Eigen::Matrix4d k =
      Eigen::kroneckerProduct(r1.matrix().transpose(), r2.matrix().transpose());
  CorrectedProbabilities out;
  out.p = k.inverse() * p_meas;
  if (out.p.minCoeff() < 0.0 || out.p.maxCoeff() > 1.0) {
    out.clipped = true;
    out.p = out.p.cwiseMax(0.0).cwiseMin(1.0);
    const double s = out.p.sum();
    if (s <= 0.0) throw std::runtime_error("correct_readout: inversion produced an empty simplex");
    out.p /= s;
  }
  return out;
}

// rotation that maps the equatorial axis at angle phi onto the z axis, so a
// z-basis measurement afterwards reports the +1 eigenstate of sigma_axis(phi)
// as outcome g: U^dag sigma_z U = sigma_axis(phi) for U rotated about the
// perpendicular equatorial axis at phi - pi/2
inline Mat2 measurement_rotation(double phi) { return rot_equator(phi - 0.5 * pi, 0.5 * pi); }

// Projective outcome probabilities for equatorial axes (phi1 on qubit 1).
inline Eigen::Vector4d outcome_probabilities(const Mat4& rho, double phi1, double phi2) {
  return measurement_probabilities(rho, measurement_rotation(phi1), measurement_rotation(phi2));
}

inline double correlator(const Eigen::Vector4d& p) { return p(0) - p(1) - p(2) + p(3); }

// Measurement axes of the CHSH set: a = x, a' = y on qubit 1; b at angle
// theta and b' perpendicular on qubit 2.
struct ChshAxes {
  double a = 0.0;
  double a_prime = 0.5 * pi;
  double b(double theta) const { return theta; }
  double b_prime(double theta) const { return theta + 0.5 * pi; }
};

inline std::array<std::pair<double, double>, 4> chsh_axis_pairs(double theta,
                                                                const ChshAxes& ax = {}) {
  return {{{ax.a, ax.b(theta)},
           {ax.a, ax.b_prime(theta)},
           {ax.a_prime, ax.b(theta)},
           {ax.a_prime, ax.b_prime(theta)}}};
}

// S = E(a,b) - E(a,b') + E(a',b) + E(a',b') evaluated exactly from rho.
inline double chsh_s(const Mat4& rho, double theta, const ReadoutModel* r1 = nullptr,
                     const ReadoutModel* r2 = nullptr) {
  const auto pairs = chsh_axis_pairs(theta);
  const double sign[4] = {1.0, -1.0, 1.0, 1.0};
  double s = 0.0;
  for (int i = 0; i < 4; ++i) {
    Eigen::Vector4d p = outcome_probabilities(rho, pairs[i].first, pairs[i].second);
    if (r1 && r2) p = apply_readout(p, *r1, *r2);
    s += sign[i] * correlator(p);
  }
  return s;
}

// Bell states in the frame the CHSH sweep is calibrated to: the triplet
// correlation peaks at theta = pi/4; the singlet is referenced after the
// equator phase calibration that places its peak at theta = 7 pi/4.
inline Vec4 chsh_singlet_frame() {
  Vec4 psi = Vec4::Zero();
  psi(1) = -im / std::sqrt(2.0); // |ge>
  psi(2) = cd(1.0, 0.0) / std::sqrt(2.0); // |eg>
  return psi;
}

// ---------------------------------------------------------------------------
// Shot sampling
// ---------------------------------------------------------------------------

struct ShotTable {
  long n_gg = 0, n_ge = 0, n_eg = 0, n_ee = 0;
  long total = 0;

  Eigen::Vector4d frequencies() const {
    if (total <= 0) throw std::invalid_argument("ShotTable: no shots");
    return Eigen::Vector4d(double(n_gg), double(n_ge), double(n_eg), double(n_ee)) /
           double(total);
  }
};

inline ShotTable sample_shots(const Eigen::Vector4d& p, long n_shots, Rng& rng) {
  if (n_shots <= 0) throw std::invalid_argument("sample_shots: n_shots must be positive");
  Eigen::Vector4d q = p.cwiseMax(0.0);
  const double s = q.sum();
  if (s <= 0.0) throw std::invalid_argument("sample_shots: zero probability vector");
  q /= s;
  double cdf[4];
  double acc = 0.0;
  for (int i = 0; i < 4; ++i) {
    acc += q(i);
    cdf[i] = acc;
  }
  cdf[3] = 1.0;
  ShotTable t;
  t.total = n_shots;
  long* slots[4] = {&t.n_gg, &t.n_ge, &t.n_eg, &t.n_ee};
  for (long k = 0; k < n_shots; ++k) {
    const double u = rng.uniform();
    int o = 0;
    while (o < 3 && u > cdf[o]) ++o;
    ++(*slots[o]);
  }
  return t;
}

// variance of a linear functional w.p of multinomial frequencies
inline double multinomial_variance(const Eigen::Vector4d& w, const Eigen::Vector4d& p, long n) {
  const double mean = w.dot(p);
  double second = 0.0;
  for (int i = 0; i < 4; ++i) second += w(i) * w(i) * p(i);
  return std::max(0.0, second - mean * mean) / double(n);
}

struct ChshEstimate {
  double s = 0.0;
  double sigma = 0.0;
};

// S and its shot-noise uncertainty from the four axis-pair tables. With a
// readout model the frequencies are first corrected and the variance is
// propagated through the inversion.
inline ChshEstimate chsh_from_shots(const std::array<ShotTable, 4>& tables,
                                    const ReadoutModel* r1 = nullptr,
                                    const ReadoutModel* r2 = nullptr) {
  const double sign[4] = {1.0, -1.0, 1.0, 1.0};
  Eigen::Vector4d v(1.0, -1.0, -1.0, 1.0);
  ChshEstimate est;
  double var = 0.0;
  for (int i = 0; i < 4; ++i) {
    const Eigen::Vector4d freq = tables[i].frequencies();
    Eigen::Vector4d w = v;
    Eigen::Vector4d p_for_var = freq;
    double e;
    if (r1 && r2) {
      const Eigen::Matrix4d k =
          Eigen::kroneckerProduct(r1->matrix().transpose(), r2->matrix().transpose());
      w = k.transpose().inverse() * v; // E_corr = v . K^-1 p = w . p
      const auto corr = correct_readout(freq, *r1, *r2);
      e = v.dot(corr.p);
    } else {
      e = v.dot(freq);
    }
    est.s += sign[i] * e;
    var += multinomial_variance(w, p_for_var, tables[i].total);
  }
  est.sigma = std::sqrt(var);
  return est;
}

// bootstrap cross-check of the propagated uncertainty
inline double chsh_bootstrap_sigma(const std::array<ShotTable, 4>& tables, Rng& rng,
                                   int n_resamples = 1000, const ReadoutModel* r1 = nullptr,
                                   const ReadoutModel* r2 = nullptr) {
  std::vector<double> s_values(n_resamples);
  for (int k = 0; k < n_resamples; ++k) {
    std::array<ShotTable, 4> resampled;
    for (int i = 0; i < 4; ++i)
      resampled[i] = sample_shots(tables[i].frequencies(), tables[i].total, rng);
    s_values[k] = chsh_from_shots(resampled, r1, r2).s;
  }
  double mean = 0.0;
  for (double v : s_values) mean += v;
  mean /= n_resamples;
  double var = 0.0;
  for (double v : s_values) var += (v - mean) * (v - mean);
  return std::sqrt(var / double(n_resamples - 1));
}

// ---------------------------------------------------------------------------
// Theta sweep
// ---------------------------------------------------------------------------

struct ChshSweepRow {
  double theta = 0.0;
  double s_exact_raw = 0.0;
  double s_exact_corrected = 0.0;
  double s_raw = 0.0;       // sampled
  double s_corrected = 0.0; // sampled + inverted
  double sigma_raw = 0.0;
  double sigma_corrected = 0.0;
};

struct ChshSweep {
  std::vector<ChshSweepRow> rows;
  double argmax_raw = 0.0, max_raw = 0.0;           // from the exact raw curve
  double argmax_corrected = 0.0, max_corrected = 0.0;
};

inline ChshSweep chsh_theta_sweep(const Mat4& rho, const ReadoutModel& r1, const ReadoutModel& r2,
                                  int n_theta, long n_shots, std::uint64_t seed) {
  if (n_theta < 3) throw std::invalid_argument("chsh_theta_sweep: need at least 3 angles");
  ChshSweep sw;
  sw.rows.resize(n_theta);
  for (int i = 0; i < n_theta; ++i) {
    const double theta = two_pi * double(i) / double(n_theta);
    auto& row = sw.rows[i];
    row.theta = theta;
    row.s_exact_corrected = chsh_s(rho, theta);
    row.s_exact_raw = chsh_s(rho, theta, &r1, &r2);
    Rng rng(seed + std::uint64_t(i));
    std::array<ShotTable, 4> tables;
    const auto pairs = chsh_axis_pairs(theta);
    for (int k = 0; k < 4; ++k) {
      Eigen::Vector4d p = outcome_probabilities(rho, pairs[k].first, pairs[k].second);
      p = apply_readout(p, r1, r2);
      tables[k] = sample_shots(p, n_shots, rng);
    }
    const auto raw = chsh_from_shots(tables);
    const auto corr = chsh_from_shots(tables, &r1, &r2);
    row.s_raw = raw.s;
    row.sigma_raw = raw.sigma;
    row.s_corrected = corr.s;
    row.sigma_corrected = corr.sigma;
  }

  // argmax of the exact curves with parabolic refinement on the cyclic grid
  const auto refine = [&](auto&& value) {
    int best = 0;
    for (int i = 1; i < n_theta; ++i)
      if (value(sw.rows[i]) > value(sw.rows[best])) best = i;
    const double h = two_pi / double(n_theta);
    const double y0 = value(sw.rows[(best + n_theta - 1) % n_theta]);
    const double y1 = value(sw.rows[best]);
    const double y2 = value(sw.rows[(best + 1) % n_theta]);
    double theta = sw.rows[best].theta, peak = y1;
    const double denom = y0 - 2.0 * y1 + y2;
    if (denom < 0.0) {
      const double shift = 0.5 * (y0 - y2) / denom;
      theta += shift * h;
      peak = y1 - 0.25 * (y0 - y2) * shift;
    }
    return std::pair<double, double>(std::fmod(theta + two_pi, two_pi), peak);
  };
  std::tie(sw.argmax_raw, sw.max_raw) = refine([](const ChshSweepRow& r) { return r.s_exact_raw; });
  std::tie(sw.argmax_corrected, sw.max_corrected) =
      refine([](const ChshSweepRow& r) { return r.s_exact_corrected; });
  return sw;
}

}  // namespace qline
