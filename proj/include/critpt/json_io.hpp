#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "critpt/dlae.hpp"
#include "critpt/errors.hpp"
#include "critpt/matrix.hpp"

namespace critpt {

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  const std::size_t rows = j.at("rows").get<std::size_t>();
  const std::size_t cols = j.at("cols").get<std::size_t>();
  std::vector<double> data = j.at("data").get<std::vector<double>>();
  return Matrix(rows, cols, std::move(data));
}

/// NetworkParams as {"widths": [...], "layers": [matrix, ...]}.
inline std::string params_to_json(const NetworkParams& p) {
  std::string out = "{\"widths\":[";
  for (std::size_t i = 0; i < p.arch.widths.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(p.arch.widths[i]);
  }
  out += "],\"layers\":[";
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    if (k) out += ',';
    out += matrix_to_json(p.layers[k]);
  }
  out += "]}";
  return out;
}

inline NetworkParams params_from_json(const nlohmann::json& j) {
  Architecture arch(j.at("widths").get<std::vector<std::size_t>>());
  NetworkParams p;
  p.arch = arch;
  for (const auto& layer : j.at("layers")) p.layers.push_back(matrix_from_json(layer));
  if (!p.shapes_match(arch)) throw invalid_input("params json: inconsistent layer shapes");
  return p;
}

inline NetworkParams params_from_json_text(const std::string& text) {
  return params_from_json(nlohmann::json::parse(text));
}

/// Dataset manifest (spectrum, basis, provenance); the sample matrix X lives
/// in its own file and sigma is recomputed as X X^T / N on load.
inline std::string dataset_to_json(const Dataset& ds, const std::string& x_file) {
  std::string out = "{\"d\":" + std::to_string(ds.d()) +
                    ",\"n_samples\":" + std::to_string(ds.n_samples()) +
                    ",\"spectrum_rule\":\"" + ds.spectrum_rule + "\"" +
                    ",\"seed\":" + std::to_string(ds.seed) +
                    ",\"generator_id\":\"" + ds.generator_id + "\"" +
                    ",\"x_file\":\"" + x_file + "\"" + ",\"spectrum\":[";
  for (std::size_t i = 0; i < ds.spectrum.size(); ++i) {
    if (i) out += ',';
    out += format_double(ds.spectrum[i]);
  }
  out += "],\"basis\":" + matrix_to_json(ds.basis) + "}";
  return out;
}

inline Dataset dataset_from_json(const nlohmann::json& j, const Matrix& x) {
  Dataset ds;
  ds.x = x;
  ds.sigma = Dataset::second_moment(ds.x);
  ds.spectrum = j.at("spectrum").get<std::vector<double>>();
  ds.basis = matrix_from_json(j.at("basis"));
  ds.seed = j.at("seed").get<std::uint64_t>();
  ds.spectrum_rule = j.at("spectrum_rule").get<std::string>();
  ds.generator_id = j.at("generator_id").get<std::string>();
  if (ds.spectrum.size() != ds.d() || ds.basis.rows() != ds.d())
    throw invalid_input("dataset json: inconsistent dimensions");
  return ds;
}

}  // namespace critpt
