#pragma once

// JSON forms of configurations and reports (nlohmann::json).

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "latentmark/battery.hpp"
#include "latentmark/channel.hpp"
#include "latentmark/experiments.hpp"
#include "latentmark/swa.hpp"

namespace latentmark {

using json = nlohmann::json;

inline std::string u128_hex(uint128 v) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(32, '0');
  for (int i = 31; i >= 0; --i, v >>= 4) out[static_cast<std::size_t>(i)] = kDigits[static_cast<unsigned>(v & 0xF)];
  return out;
}

namespace detail {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kConfig, std::string("bad value for '") + key + "': " + e.what());
  }
}

inline void require_object(const json& j, const char* what) {
  if (!j.is_object()) throw Error(ErrorKind::kConfig, std::string(what) + " must be a JSON object");
}

}  // namespace detail

// --- channel ---------------------------------------------------------------

inline json to_json_value(const ChannelModel& m) {
  switch (m.kind) {
    case ChannelKind::kIdentity: return {{"kind", "identity"}};
    case ChannelKind::kSignFlip: return {{"kind", "sign_flip"}, {"p", m.flip_prob}};
    case ChannelKind::kAdditiveGaussian: return {{"kind", "additive_gaussian"}, {"sigma", m.sigma}};
    case ChannelKind::kRegionalErase: return {{"kind", "regional_erase"}, {"fraction", m.erase_fraction}};
    case ChannelKind::kComposite: {
      json parts = json::array();
      for (const auto& c : m.components) parts.push_back(to_json_value(c));
      return {{"kind", "composite"}, {"components", parts}};
    }
  }
  return {};
}

inline ChannelModel channel_from_json(const json& j) {
  detail::require_object(j, "channel");
  const auto kind = detail::get_or<std::string>(j, "kind", "");
  ChannelModel m;
  if (kind == "identity") {
    m = ChannelModel::identity();
  } else if (kind == "sign_flip") {
    m = ChannelModel::sign_flip(detail::get_or<double>(j, "p", -1.0));
  } else if (kind == "additive_gaussian") {
    m = ChannelModel::additive_gaussian(detail::get_or<double>(j, "sigma", -1.0));
  } else if (kind == "regional_erase") {
    m = ChannelModel::regional_erase(detail::get_or<double>(j, "fraction", -1.0));
  } else if (kind == "composite") {
    std::vector<ChannelModel> parts;
    for (const auto& c : j.value("components", json::array())) parts.push_back(channel_from_json(c));
    m = ChannelModel::composite(std::move(parts));
  } else {
    throw Error(ErrorKind::kConfig, "unknown channel kind '" + kind + "'");
  }
  m.validate();
  return m;
}

// --- watermark config ------------------------------------------------------

inline json to_json_value(const SwaConfig& c) {
  json j = {{"split", {{"seed", c.split.seed}, {"wm", c.split.wm}, {"rest", c.split.rest}}},
            {"seed_bits", c.seed_bits},
            {"redundancy", c.redundancy},
            {"height", c.height},
            {"width", c.width},
            {"seed_construction", c.construction == SeedConstruction::kSign ? "sign" : "raw"}};
  if (c.embedder == EmbedderKind::kGaussianShading) {
    j["embedder"] = "gs";
    j["payload_hex"] = c.payload.to_hex();
    j["payload_bits"] = c.payload.bit_length();
  } else {
    j["embedder"] = "tr";
    json values = json::array();
    for (const auto& v : c.ring_key.ring_values) values.push_back({v.real(), v.imag()});
    j["ring_key"] = {{"radius", c.ring_key.radius}, {"values", values}};
  }
  return j;
}

/// Reads the watermark part of a config. Missing fields take the defaults
/// (split 1/3/0 for gs and 1/1/2 for tr, M = 8, R = 64, 64 x 64).
inline SwaConfig swa_from_json(const json& j) {
  detail::require_object(j, "config");
  SwaConfig c;
  const auto embedder = detail::get_or<std::string>(j, "embedder", "gs");
  if (embedder == "gs") {
    c.embedder = EmbedderKind::kGaussianShading;
    c.split = {1, 3, 0};
  } else if (embedder == "tr") {
    c.embedder = EmbedderKind::kTreeRing;
    c.split = {1, 1, 2};
  } else {
    throw Error(ErrorKind::kConfig, "embedder must be 'gs' or 'tr'");
  }
  if (j.contains("split")) {
    const json& s = j["split"];
    detail::require_object(s, "split");
    c.split = {detail::get_or<std::size_t>(s, "seed", c.split.seed), detail::get_or<std::size_t>(s, "wm", c.split.wm),
               detail::get_or<std::size_t>(s, "rest", c.split.rest)};
  }
  c.seed_bits = detail::get_or<std::size_t>(j, "seed_bits", 8);
  c.redundancy = detail::get_or<std::size_t>(j, "redundancy", 64);
  c.height = detail::get_or<std::size_t>(j, "height", 64);
  c.width = detail::get_or<std::size_t>(j, "width", 64);
  const auto construction = detail::get_or<std::string>(j, "seed_construction", "sign");
  if (construction == "sign") c.construction = SeedConstruction::kSign;
  else if (construction == "raw") c.construction = SeedConstruction::kRawValue;
  else throw Error(ErrorKind::kConfig, "seed_construction must be 'sign' or 'raw'");

  if (c.embedder == EmbedderKind::kGaussianShading) {
    if (!j.contains("payload_hex")) throw Error(ErrorKind::kConfig, "missing payload_hex");
    const auto bits = detail::get_or<std::size_t>(j, "payload_bits", kGsBits);
    c.payload = WatermarkPayload::from_hex(detail::get_or<std::string>(j, "payload_hex", ""), bits);
  } else {
    if (!j.contains("ring_key")) throw Error(ErrorKind::kConfig, "missing ring_key");
    const json& k = j["ring_key"];
    detail::require_object(k, "ring_key");
    const auto radius = detail::get_or<std::size_t>(k, "radius", kDefaultRingRadius);
    if (k.contains("values")) {
      c.ring_key.radius = radius;
      for (const auto& v : k["values"]) {
        if (!v.is_array() || v.size() != 2) throw Error(ErrorKind::kConfig, "ring values are [re, im] pairs");
        c.ring_key.ring_values.emplace_back(v[0].get<double>(), v[1].get<double>());
      }
    } else if (k.contains("seed")) {
      RngState rng = RngState::from_seed(detail::get_or<std::uint64_t>(k, "seed", 0));
      c.ring_key = RingKey::random(radius, c.height, c.width, rng);
    } else {
      throw Error(ErrorKind::kConfig, "ring_key needs 'values' or 'seed'");
    }
  }
  c.validate();
  return c;
}

// --- attack ----------------------------------------------------------------

inline json to_json_value(const probe::Hyperparameters& hp) {
  return {{"lr", hp.lr},
          {"momentum", hp.momentum},
          {"decay", hp.decay},
          {"decay_every", hp.decay_every},
          {"batch", hp.batch},
          {"steps", hp.steps},
          {"lambda", {hp.lambda.at, hp.lambda.dtc, hp.lambda.gc}},
          {"feature_dim", hp.feature_dim},
          {"trace_every", hp.trace_every}};
}

inline probe::Hyperparameters hyperparameters_from_json(const json& j) {
  detail::require_object(j, "attack");
  probe::Hyperparameters hp;
  hp.lr = detail::get_or<double>(j, "lr", hp.lr);
  hp.momentum = detail::get_or<double>(j, "momentum", hp.momentum);
  hp.decay = detail::get_or<double>(j, "decay", hp.decay);
  hp.decay_every = detail::get_or<std::size_t>(j, "decay_every", hp.decay_every);
  hp.batch = detail::get_or<std::size_t>(j, "batch", hp.batch);
  hp.steps = detail::get_or<std::size_t>(j, "steps", hp.steps);
  hp.feature_dim = detail::get_or<std::size_t>(j, "feature_dim", hp.feature_dim);
  hp.trace_every = detail::get_or<std::size_t>(j, "trace_every", hp.trace_every);
  if (j.contains("lambda")) {
    const auto l = detail::get_or<std::vector<double>>(j, "lambda", {});
    if (l.size() != 3) throw Error(ErrorKind::kConfig, "lambda must have three weights");
    hp.lambda = {l[0], l[1], l[2]};
  }
  hp.validate();
  return hp;
}

/// Battery defaults used by the CLI and the acceptance suite.
inline probe::BatteryConfig default_battery() {
  probe::BatteryConfig b;
  b.surrogate.pool = 8;
  b.surrogate.generation = ChannelModel::default_calibrated();
  b.surrogate.drift = 0.3;
  b.surrogate.train = 256;
  b.surrogate.test = 128;
  b.hp.steps = 200;
  b.targets_per_class = 20;
  return b;
}

inline json to_json_value(const probe::BatteryConfig& b) {
  return {{"targets_per_class", b.targets_per_class},
          {"pool", b.surrogate.pool},
          {"drift", b.surrogate.drift},
          {"train", b.surrogate.train},
          {"test", b.surrogate.test},
          {"generation", to_json_value(b.surrogate.generation)},
          {"balanced_payloads", b.balanced_payloads}};
}

/// Battery settings come from "battery"; extractor hyperparameters from
/// "attack" (battery default: 200 steps).
inline probe::BatteryConfig battery_from_json(const json& root) {
  probe::BatteryConfig b = default_battery();
  if (root.contains("attack")) {
    json merged = to_json_value(b.hp);
    merged.update(root["attack"]);
    b.hp = hyperparameters_from_json(merged);
  }
  if (root.contains("battery")) {
    const json& j = root["battery"];
    detail::require_object(j, "battery");
    b.targets_per_class = detail::get_or<std::size_t>(j, "targets_per_class", b.targets_per_class);
    b.surrogate.pool = detail::get_or<std::size_t>(j, "pool", b.surrogate.pool);
    b.surrogate.drift = detail::get_or<double>(j, "drift", b.surrogate.drift);
    b.surrogate.train = detail::get_or<std::size_t>(j, "train", b.surrogate.train);
    b.surrogate.test = detail::get_or<std::size_t>(j, "test", b.surrogate.test);
    b.balanced_payloads = detail::get_or<bool>(j, "balanced_payloads", b.balanced_payloads);
    if (j.contains("generation")) b.surrogate.generation = channel_from_json(j["generation"]);
  }
  b.validate();
  return b;
}

// --- reports ---------------------------------------------------------------

inline json to_json_value(const VerificationStats& s) {
  return {{"trials", s.trials},
          {"auc", s.auc},
          {"tpr_at_1fpr", s.tpr_at_1fpr},
          {"seed_recovery", s.seed_recovery},
          {"mean_bit_accuracy", s.mean_bit_accuracy}};
}

inline json to_json_value(const probe::ModelReport& m, bool with_trace) {
  json j = {{"kind", probe::to_string(m.kind)}, {"index", m.index}, {"mmd", m.mmd}, {"control_mmd", m.control_mmd}};
  if (with_trace) {
    json trace = json::array();
    for (const auto& t : m.trace) trace.push_back({t.step, t.at, t.dtc, t.gc});
    j["loss_trace"] = trace;
  }
  return j;
}

inline json to_json_value(const probe::AttackReport& r, bool with_trace) {
  json models = json::array();
  for (const auto& m : r.watermarked) models.push_back(to_json_value(m, with_trace));
  return {{"variant", r.variant},
          {"auc", r.auc},
          {"stealthiness", r.stealthiness},
          {"control_auc", r.control_auc},
          {"watermarked_models", models}};
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::kConfig, "invalid JSON in " + path.string() + ": " + e.what());
  }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error(ErrorKind::kIo, "write failed: " + path.string());
}

}  // namespace latentmark
