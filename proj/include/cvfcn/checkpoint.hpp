#pragma once

#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "cvfcn/ctensor.hpp"
#include "cvfcn/error.hpp"
#include "cvfcn/net.hpp"

namespace cvfcn {

/// "CVM1", u32 LE config length, JSON config, then one CVT payload per
/// tensor: the trainable parameters in topology order followed by each BN
/// layer's running mean and running covariance.
inline constexpr char kCheckpointMagic[4] = {'C', 'V', 'M', '1'};

inline nlohmann::json config_to_json(const NetConfig& c) {
  return {{"in_channels", c.in_channels},   {"num_classes", c.num_classes},       {"widths", c.widths},
          {"width_scale", c.width_scale_str()}, {"enable_skips", c.enable_skips}, {"enable_locmaps", c.enable_locmaps},
          {"keep_prob", c.keep_prob}};
}

inline NetConfig config_from_json(const nlohmann::json& j) {
  try {
    NetConfig c;
    c.in_channels = j.at("in_channels").get<std::size_t>();
    c.num_classes = j.at("num_classes").get<std::size_t>();
    c.widths = j.at("widths").get<std::array<std::size_t, kDepth>>();
    c.set_width_scale(j.at("width_scale").get<std::string>());
    c.enable_skips = j.at("enable_skips").get<bool>();
    c.enable_locmaps = j.at("enable_locmaps").get<bool>();
    c.keep_prob = j.at("keep_prob").get<double>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what());
  }
}

namespace detail {

template <typename M>
auto checkpoint_tensors(M& m) {
  auto out = m.parameters();
  for (auto& n : m.norms) {
    out.push_back(&n.running_mean);
    out.push_back(&n.running_cov);
  }
  return out;
}

}  // namespace detail

/// `extra` is stored verbatim under "meta" (training provenance).
inline void write_checkpoint(std::ostream& out, const NetModel& m, const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json j = {{"config", config_to_json(m.config)}, {"seed", m.seed}, {"meta", extra}};
  const auto tensors = detail::checkpoint_tensors(m);
  j["tensor_count"] = tensors.size();
  const std::string text = j.dump();
  const auto len = static_cast<std::uint32_t>(text.size());
  out.write(kCheckpointMagic, 4);
  const unsigned char lb[4] = {static_cast<unsigned char>(len), static_cast<unsigned char>(len >> 8),
                               static_cast<unsigned char>(len >> 16), static_cast<unsigned char>(len >> 24)};
  out.write(reinterpret_cast<const char*>(lb), 4);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto* t : tensors) write_cvt(out, *t);
  if (!out) throw FormatError("checkpoint write failed");
}

struct LoadedCheckpoint {
  NetModel model;
  nlohmann::json meta;
};

inline LoadedCheckpoint read_checkpoint(std::istream& in) {
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || std::string(magic, 4) != std::string(kCheckpointMagic, 4)) throw FormatError("not a CVM1 checkpoint");
  unsigned char lb[4] = {};
  in.read(reinterpret_cast<char*>(lb), 4);
  if (in.gcount() != 4) throw FormatError("checkpoint truncated in header");
  const std::uint32_t len = lb[0] | (lb[1] << 8) | (lb[2] << 16) | (static_cast<std::uint32_t>(lb[3]) << 24);
  if (len > (1u << 24)) throw FormatError("checkpoint config length implausible");
  std::string text(len, '\0');
  in.read(text.data(), len);
  if (in.gcount() != static_cast<std::streamsize>(len)) throw FormatError("checkpoint truncated in config");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint config is not valid JSON: ") + e.what());
  }
  if (!j.contains("config")) throw FormatError("checkpoint config missing");
  LoadedCheckpoint ck;
  ck.model = NetModel::build(config_from_json(j["config"]), InitSpec{});
  ck.model.seed = j.value("seed", std::uint64_t{0});
  ck.meta = j.value("meta", nlohmann::json::object());
  auto tensors = detail::checkpoint_tensors(ck.model);
  if (j.value("tensor_count", std::size_t{0}) != tensors.size()) throw FormatError("checkpoint tensor count mismatch");
  for (auto* t : tensors) {
    CTensor v = read_cvt(in);
    if (v.shape() != t->shape())
      throw FormatError("checkpoint tensor shape " + shape_str(v.shape()) + " does not match expected " + shape_str(t->shape()));
    *t = std::move(v);
  }
  return ck;
}

inline void save_checkpoint(const std::string& path, const NetModel& m, const nlohmann::json& extra = nlohmann::json::object()) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  write_checkpoint(out, m, extra);
}

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint '" + path + "'");
  return read_checkpoint(in);
}

}  // namespace cvfcn
