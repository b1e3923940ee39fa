#pragma once

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "qline/device.hpp"
#include "qline/units.hpp"

// Device parameter files: JSON with engineering units (Hz, fF, nH, us).
// reference_device() holds the bundled characterization table; the shipped
// data/device.json encodes the same values and is pinned to it by a test.

namespace qline {

inline DeviceParams reference_device() {
  DeviceParams d;

  d.qubit[0].c_q = ff_to_f(90.0);
  d.qubit[0].l_j = nh_to_h(8.34);
  d.qubit[0].idle_frequency = ghz_to_rad(5.809);
  d.qubit[0].anharmonicity = mhz_to_rad(-160.0);
  d.qubit[0].t1 = us_to_s(16.0);
  d.qubit[0].t2 = us_to_s(0.89);
  d.qubit[0].f_g = 0.984;
  d.qubit[0].f_e = 0.950;

  d.qubit[1].c_q = ff_to_f(90.0);
  d.qubit[1].l_j = nh_to_h(8.57);
  d.qubit[1].idle_frequency = ghz_to_rad(5.731);
  d.qubit[1].anharmonicity = mhz_to_rad(-162.0);
  d.qubit[1].t1 = us_to_s(11.0);
  d.qubit[1].t2 = us_to_s(0.85);
  d.qubit[1].f_g = 0.984;
  d.qubit[1].f_e = 0.942;

  d.coupler[0].l_g = nh_to_h(0.2);
  d.coupler[0].l_w = nh_to_h(0.1);
  d.coupler[0].l_t = nh_to_h(0.566);

  d.coupler[1].l_g = nh_to_h(0.2);
  d.coupler[1].l_w = nh_to_h(0.1);
  d.coupler[1].l_t = nh_to_h(0.564);

  d.line.c_per_m = 173e-12;
  d.line.l_per_m = 402e-9;
  d.line.length = 0.78;
  d.line.mean_quality = 1.44e5;

  d.measured_travel_time = ns_to_s(6.3);
  d.working_mode = 73;
  d.working_mode_freq = ghz_to_rad(5.744);
  return d;
}

inline nlohmann::json device_to_json(const DeviceParams& d) {
  nlohmann::json j;
  for (int i = 0; i < 2; ++i) {
    nlohmann::json q;
    q["C_q_fF"] = f_to_ff(d.qubit[i].c_q);
    q["L_J_nH"] = h_to_nh(d.qubit[i].l_j);
    q["omega_Hz"] = rad_to_hz(d.qubit[i].idle_frequency);
    q["anharmonicity_Hz"] = rad_to_hz(d.qubit[i].anharmonicity);
    q["T1_us"] = s_to_us(d.qubit[i].t1);
    q["T2_us"] = s_to_us(d.qubit[i].t2);
    q["F_g"] = d.qubit[i].f_g;
    q["F_e"] = d.qubit[i].f_e;
    j["qubits"].push_back(q);
    nlohmann::json c;
    c["L_g_nH"] = h_to_nh(d.coupler[i].l_g);
    c["L_w_nH"] = h_to_nh(d.coupler[i].l_w);
    c["L_T_nH"] = h_to_nh(d.coupler[i].l_t);
    j["couplers"].push_back(c);
  }
  j["line"]["specific_capacitance_pF_per_m"] = d.line.c_per_m * 1e12;
  j["line"]["specific_inductance_nH_per_m"] = d.line.l_per_m * 1e9;
  j["line"]["length_m"] = d.line.length;
  if (d.line.mean_quality > 0.0) j["line"]["mean_quality_factor"] = d.line.mean_quality;
  if (d.measured_travel_time > 0.0)
    j["line"]["measured_travel_time_ns"] = s_to_ns(d.measured_travel_time);
  j["working_mode"]["harmonic"] = d.working_mode;
  if (d.working_mode_freq > 0.0)
    j["working_mode"]["omega_Hz"] = rad_to_hz(d.working_mode_freq);
  return j;
}

inline DeviceParams device_from_json(const nlohmann::json& j) {
  DeviceParams d;
  for (int i = 0; i < 2; ++i) {
    const auto& q = j.at("qubits").at(i);
    d.qubit[i].c_q = ff_to_f(q.at("C_q_fF").get<double>());
    d.qubit[i].l_j = nh_to_h(q.at("L_J_nH").get<double>());
    d.qubit[i].idle_frequency = hz_to_rad(q.at("omega_Hz").get<double>());
    d.qubit[i].anharmonicity = hz_to_rad(q.value("anharmonicity_Hz", 0.0));
    d.qubit[i].t1 = us_to_s(q.at("T1_us").get<double>());
    d.qubit[i].t2 = us_to_s(q.at("T2_us").get<double>());
    d.qubit[i].f_g = q.at("F_g").get<double>();
    d.qubit[i].f_e = q.at("F_e").get<double>();
    const auto& c = j.at("couplers").at(i);
    d.coupler[i].l_g = nh_to_h(c.at("L_g_nH").get<double>());
    d.coupler[i].l_w = nh_to_h(c.at("L_w_nH").get<double>());
    d.coupler[i].l_t = nh_to_h(c.at("L_T_nH").get<double>());
  }
  const auto& l = j.at("line");
  d.line.c_per_m = l.at("specific_capacitance_pF_per_m").get<double>() * 1e-12;
  d.line.l_per_m = l.at("specific_inductance_nH_per_m").get<double>() * 1e-9;
  d.line.length = l.at("length_m").get<double>();
  d.line.mean_quality = l.value("mean_quality_factor", 0.0);
  d.measured_travel_time = ns_to_s(l.value("measured_travel_time_ns", 0.0));
  if (j.contains("working_mode")) {
    d.working_mode = j["working_mode"].value("harmonic", 73);
    d.working_mode_freq = hz_to_rad(j["working_mode"].value("omega_Hz", 0.0));
  }
  d.validate();
  return d;
}

inline DeviceParams load_device(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_device: cannot open " + path.string());
  nlohmann::json j;
  f >> j;
  return device_from_json(j);
}

}  // namespace qline
