#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

// CSV / JSON emission helpers. Numbers are formatted with a fixed printf
// contract ("%.12g", C locale semantics) so that identical inputs produce
// byte-identical files.

namespace qline {

inline std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : header_(std::move(header)) {}

  void add_row(const std::vector<double>& row) {
    if (row.size() != header_.size())
      throw std::invalid_argument("CsvWriter: row width does not match header");
    rows_.push_back(row);
  }

  std::string str() const {
    std::string out;
    for (std::size_t i = 0; i < header_.size(); ++i) {
      out += header_[i];
      out += (i + 1 < header_.size()) ? ',' : '\n';
    }
    for (const auto& row : rows_) {
      for (std::size_t i = 0; i < row.size(); ++i) {
        out += fmt_g(row[i]);
        out += (i + 1 < row.size()) ? ',' : '\n';
      }
    }
    return out;
  }

  void write(const std::filesystem::path& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("CsvWriter: cannot open " + path.string());
    f << str();
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<double>> rows_;
};

// complex matrix as nested arrays of [re, im] pairs, with basis labels
inline nlohmann::json matrix_to_json(const Eigen::MatrixXcd& m,
                                     const std::vector<std::string>& basis) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      row.push_back({m(r, c).real(), m(r, c).imag()});
    rows.push_back(row);
  }
  return nlohmann::json{{"basis", basis}, {"matrix", rows}};
}

inline Eigen::MatrixXcd matrix_from_json(const nlohmann::json& j) {
  const auto& rows = j.at("matrix");
  const Eigen::Index n = Eigen::Index(rows.size());
  Eigen::MatrixXcd m(n, n);
  for (Eigen::Index r = 0; r < n; ++r)
    for (Eigen::Index c = 0; c < n; ++c)
      m(r, c) = std::complex<double>(rows[r][c][0].get<double>(), rows[r][c][1].get<double>());
  return m;
}

inline const std::vector<std::string> two_qubit_basis_labels{"gg", "ge", "eg", "ee"};
inline const std::vector<std::string> pauli_basis_labels{"I", "X", "Y", "Z"};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_text: cannot open " + path.string());
  f << text;
}

// FNV-1a 64-bit content hash, hex encoded
inline std::string file_hash(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("file_hash: cannot open " + path.string());
  std::uint64_t h = 1469598103934665603ull;
  char c;
  while (f.get(c)) {
    h ^= std::uint64_t(static_cast<unsigned char>(c));
    h *= 1099511628211ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace qline
