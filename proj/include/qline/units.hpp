#pragma once

#include <cmath>
#include <numbers>

// Unit conventions used throughout the library:
//   frequencies and rates   rad/s (angular)
//   time                    s
//   inductance/capacitance  H / F
// Configuration files and CSV columns use engineering units (GHz, MHz, ns,
// nH, fF, us) and are converted at the boundary with the helpers below.

namespace qline {

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

// cyclic frequency (Hz) <-> angular frequency (rad/s)
constexpr double hz_to_rad(double f_hz) { return two_pi * f_hz; }
constexpr double rad_to_hz(double w) { return w / two_pi; }

constexpr double ghz_to_rad(double f_ghz) { return two_pi * f_ghz * 1e9; }
constexpr double mhz_to_rad(double f_mhz) { return two_pi * f_mhz * 1e6; }
constexpr double rad_to_ghz(double w) { return w / (two_pi * 1e9); }
constexpr double rad_to_mhz(double w) { return w / (two_pi * 1e6); }

constexpr double ns_to_s(double t_ns) { return t_ns * 1e-9; }
constexpr double s_to_ns(double t_s) { return t_s * 1e9; }
constexpr double us_to_s(double t_us) { return t_us * 1e-6; }
constexpr double s_to_us(double t_s) { return t_s * 1e6; }

constexpr double nh_to_h(double l_nh) { return l_nh * 1e-9; }
constexpr double h_to_nh(double l_h) { return l_h * 1e9; }
constexpr double ff_to_f(double c_ff) { return c_ff * 1e-15; }
constexpr double f_to_ff(double c_f) { return c_f * 1e15; }

}  // namespace qline
