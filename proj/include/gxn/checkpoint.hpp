#pragma once

// JSON checkpoint: {"format", "version", "config_hash", "parameters": {name:
// {"shape": [r, c], "data": hex of little-endian IEEE-754 doubles}}}.
// Hex keeps every bit, so save/load is an exact round trip.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "gxn/autodiff.hpp"

namespace gxn {

inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline std::string encode_doubles(const Matrix& m) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(static_cast<std::size_t>(m.size()) * 16);
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      const auto bits = std::bit_cast<std::uint64_t>(m(i, j));
      for (int byte = 0; byte < 8; ++byte) {
        const auto b = static_cast<unsigned>((bits >> (8 * byte)) & 0xffu);
        out.push_back(kHex[b >> 4]);
        out.push_back(kHex[b & 0xfu]);
      }
    }
  }
  return out;
}

inline unsigned hex_digit(char c) {
  if (c >= '0' && c <= '9') return static_cast<unsigned>(c - '0');
  if (c >= 'a' && c <= 'f') return static_cast<unsigned>(c - 'a' + 10);
  if (c >= 'A' && c <= 'F') return static_cast<unsigned>(c - 'A' + 10);
  throw std::runtime_error(std::string("checkpoint: bad hex digit '") + c + "'");
}

inline Matrix decode_doubles(const std::string& hex, Index rows, Index cols) {
  if (hex.size() != static_cast<std::size_t>(rows * cols) * 16)
    throw std::runtime_error("checkpoint: data length does not match shape " + shape_string(rows, cols));
  Matrix m(rows, cols);
  std::size_t pos = 0;
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      std::uint64_t bits = 0;
      for (int byte = 0; byte < 8; ++byte) {
        const std::uint64_t b = hex_digit(hex[pos]) << 4 | hex_digit(hex[pos + 1]);
        bits |= b << (8 * byte);
        pos += 2;
      }
      m(i, j) = std::bit_cast<double>(bits);
    }
  }
  return m;
}

}  // namespace detail

inline nlohmann::json checkpoint_json(const ParameterStore& store, const std::string& config_hash) {
  nlohmann::json params = nlohmann::json::object();
  for (const Parameter* p : store.all())
    params[p->name()] = {{"shape", {p->rows(), p->cols()}}, {"data", detail::encode_doubles(p->value)}};
  return {{"format", "gxn-checkpoint"},
          {"version", kCheckpointVersion},
          {"config_hash", config_hash},
          {"parameters", params}};
}

// Loads values into an existing store. Every stored parameter must exist with
// the same shape and vice versa; a non-empty expected_hash must match.
inline void load_checkpoint_json(const nlohmann::json& doc, ParameterStore& store,
                                 const std::string& expected_hash = {}) {
  if (doc.value("format", "") != "gxn-checkpoint") throw std::runtime_error("checkpoint: unknown format");
  if (doc.value("version", 0) != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + doc.value("version", nlohmann::json(0)).dump());
  if (!expected_hash.empty() && doc.value("config_hash", "") != expected_hash)
    throw std::runtime_error("checkpoint: config hash " + doc.value("config_hash", std::string("?")) +
                             " does not match " + expected_hash);
  const auto& params = doc.at("parameters");
  if (params.size() != store.size())
    throw std::runtime_error("checkpoint: holds " + std::to_string(params.size()) + " parameters, model has " +
                             std::to_string(store.size()));
  for (Parameter* p : store.all()) {
    if (!params.contains(p->name())) throw std::runtime_error("checkpoint: missing parameter " + p->name());
    const auto& entry = params.at(p->name());
    const Index rows = entry.at("shape").at(0).get<Index>();
    const Index cols = entry.at("shape").at(1).get<Index>();
    if (rows != p->rows() || cols != p->cols())
      throw std::runtime_error("checkpoint: parameter " + p->name() + " has shape " + shape_string(rows, cols) +
                               ", model expects " + shape_string(p->rows(), p->cols()));
    p->value = detail::decode_doubles(entry.at("data").get<std::string>(), rows, cols);
  }
}

inline void save_checkpoint(const ParameterStore& store, const std::string& path, const std::string& config_hash) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  out << checkpoint_json(store, config_hash).dump(1) << '\n';
}

inline void load_checkpoint(const std::string& path, ParameterStore& store, const std::string& expected_hash = {}) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path);
  load_checkpoint_json(nlohmann::json::parse(in), store, expected_hash);
}

}  // namespace gxn
