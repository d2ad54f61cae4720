// latentmark: command-line front end. Every report goes to --out (or stdout)
// as JSON; failures print {"error": {...}} on stderr and exit non-zero.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "latentmark/io.hpp"
#include "latentmark/latentmark.hpp"

namespace lm = latentmark;
using lm::json;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

// Top-level streams split from --master-seed.
enum : std::uint64_t { kStreamEmbed = 1, kStreamRingCalibration = 2, kStreamExperiment = 3, kStreamRingKey = 4 };

constexpr std::size_t kRingCalibrationSamples = 10000;
constexpr double kRingCalibrationFpr = 0.01;

struct Options {
  std::string config_path;
  std::uint64_t master_seed = 0;
  std::string out;
  std::size_t workers = 1;
  std::string input;
};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::size_t resolve_workers(std::size_t flag) {
  if (const char* env = std::getenv("LATENTMARK_WORKERS")) {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(env, &used);
      if (used == std::string(env).size() && v > 0) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
    throw UsageError("LATENTMARK_WORKERS must be a positive integer");
  }
  return flag == 0 ? 1 : flag;
}

json load_config(const Options& opt) {
  if (opt.config_path.empty()) return json::object();
  json j = lm::read_json_file(opt.config_path);
  if (!j.is_object()) throw lm::Error(lm::ErrorKind::kConfig, "config must be a JSON object");
  return j;
}

lm::ChannelModel channel_of(const json& cfg) {
  return cfg.contains("channel") ? lm::channel_from_json(cfg["channel"]) : lm::ChannelModel::default_calibrated();
}

std::size_t count_of(const json& cfg, const char* key, std::size_t fallback) {
  const auto v = lm::detail::get_or<std::size_t>(cfg, key, fallback);
  if (v == 0) throw lm::Error(lm::ErrorKind::kConfig, std::string(key) + " must be >= 1");
  return v;
}

std::vector<std::size_t> list_of(const json& cfg, const char* key, std::vector<std::size_t> fallback) {
  auto v = lm::detail::get_or<std::vector<std::size_t>>(cfg, key, std::move(fallback));
  if (v.empty()) throw UsageError(std::string(key) + " must not be empty");
  return v;
}

std::uint64_t experiment_seed(const Options& opt) {
  return lm::RngState::derive(opt.master_seed, {kStreamExperiment}).next_u64();
}

void emit(const Options& opt, const json& report) {
  const std::string text = report.dump(2) + "\n";
  if (opt.out.empty()) {
    std::cout << text;
  } else {
    lm::write_text_file(opt.out, text);
  }
}

json header(const char* command, const Options& opt, json resolved) {
  return {{"command", command}, {"master_seed", opt.master_seed}, {"config", std::move(resolved)}};
}

// Tree-Ring keys may be given by seed; without either form the key is drawn
// from the master seed so that the config stays optional.
lm::SwaConfig swa_of(json& cfg, const Options& opt) {
  if (cfg.value("embedder", std::string("gs")) == "tr" && !cfg.contains("ring_key")) {
    cfg["ring_key"] = {{"radius", lm::kDefaultRingRadius},
                       {"seed", lm::RngState::derive(opt.master_seed, {kStreamRingKey}).next_u64()}};
  }
  return lm::swa_from_json(cfg);
}

std::optional<double> ring_threshold(const lm::SwaConfig& cfg, const Options& opt) {
  if (cfg.embedder != lm::EmbedderKind::kTreeRing) return std::nullopt;
  lm::RngState rng = lm::RngState::derive(opt.master_seed, {kStreamRingCalibration});
  return lm::calibrate_ring_threshold(cfg, kRingCalibrationFpr, kRingCalibrationSamples, rng);
}

json verify_json(const lm::VerifyResult& r, std::optional<double> threshold) {
  json j = {{"recovered_seed_hex", r.recovered_seed.to_hex()},
            {"seed_bits", r.recovered_seed.bit_length()},
            {"score", r.score},
            {"decision", r.decision}};
  j["bit_accuracy"] = r.bit_accuracy ? json(*r.bit_accuracy) : json(nullptr);
  j["threshold"] = threshold ? json(*threshold) : json(lm::kDefaultBitAccuracyThreshold);
  return j;
}

int cmd_embed(const Options& opt) {
  if (opt.out.empty()) throw UsageError("embed needs --out <file.ltn>");
  json cfg = load_config(opt);
  const lm::SwaConfig swa = swa_of(cfg, opt);
  lm::RngState rng = lm::RngState::derive(opt.master_seed, {kStreamEmbed});
  const lm::EmbedResult res = lm::swa_embed(swa, rng);
  lm::write_latent(res.latent, opt.out);

  const lm::uint128 key = res.seed.as_integer();
  json sidecar = header("embed", opt, lm::to_json_value(swa));
  sidecar["latent"] = std::filesystem::path(opt.out).filename().string();
  sidecar["shape"] = {res.latent.channels(), res.latent.height(), res.latent.width()};
  sidecar["seed_hex"] = res.seed.to_hex();
  sidecar["payload_hex"] = swa.embedder == lm::EmbedderKind::kGaussianShading ? json(swa.payload.to_hex()) : json(nullptr);
  sidecar["permutation"] = {{"generator", "pcg64"},
                            {"state_hex", lm::u128_hex(key)},
                            {"increment_hex", lm::u128_hex(lm::kPcgDefaultIncrement)},
                            {"length", swa.shuffle_length()}};
  lm::write_text_file(opt.out + ".json", sidecar.dump(2) + "\n");
  return 0;
}

int cmd_verify(const Options& opt) {
  json cfg = load_config(opt);
  const lm::SwaConfig swa = swa_of(cfg, opt);
  const lm::LatentTensor z = lm::read_latent(opt.input);
  const auto threshold = ring_threshold(swa, opt);
  json report = header("verify", opt, lm::to_json_value(swa));
  report.update(verify_json(lm::swa_verify(z, swa, threshold), threshold));
  emit(opt, report);
  return 0;
}

int cmd_sweep_redundancy(const Options& opt) {
  json cfg = load_config(opt);
  const lm::SwaConfig swa = swa_of(cfg, opt);
  const auto channel = channel_of(cfg);
  const auto trials = count_of(cfg, "trials", 1000);
  const auto rs = list_of(cfg, "r_list", {4, 8, 16, 24, 32, 40, 64});
  const auto rows = lm::sweep_redundancy(swa, channel, rs, trials, experiment_seed(opt), opt.workers);
  json resolved = lm::to_json_value(swa);
  resolved["channel"] = lm::to_json_value(channel);
  resolved["trials"] = trials;
  resolved["r_list"] = rs;
  json table = json::array();
  for (const auto& row : rows) {
    json r = lm::to_json_value(row.stats);
    r["redundancy"] = row.redundancy;
    table.push_back(r);
  }
  json report = header("sweep-redundancy", opt, resolved);
  report["rows"] = table;
  emit(opt, report);
  return 0;
}

int cmd_sweep_seedbits(const Options& opt) {
  json cfg = load_config(opt);
  const lm::SwaConfig swa = swa_of(cfg, opt);
  const auto channel = channel_of(cfg);
  const auto trials = count_of(cfg, "trials", 1000);
  const auto ms = list_of(cfg, "m_list", {4, 8, 16, 32});
  const auto battery = lm::battery_from_json(cfg);
  const auto runs = count_of(cfg, "battery_runs", 1);
  const auto rows = lm::sweep_seedbits(swa, channel, ms, trials, battery, runs, experiment_seed(opt), opt.workers);
  json resolved = lm::to_json_value(swa);
  resolved["channel"] = lm::to_json_value(channel);
  resolved["trials"] = trials;
  resolved["m_list"] = ms;
  resolved["attack"] = lm::to_json_value(battery.hp);
  resolved["battery"] = lm::to_json_value(battery);
  resolved["battery_runs"] = runs;
  json table = json::array();
  for (const auto& row : rows) {
    json r = lm::to_json_value(row.stats);
    r["seed_bits"] = row.seed_bits;
    r["stealthiness"] = row.stealthiness;
    r["run_stealthiness"] = row.run_stealthiness;
    table.push_back(r);
  }
  json report = header("sweep-seedbits", opt, resolved);
  report["rows"] = table;
  emit(opt, report);
  return 0;
}

int cmd_attack(const Options& opt) {
  json cfg = load_config(opt);
  const lm::SwaConfig swa = swa_of(cfg, opt);
  const auto battery = lm::battery_from_json(cfg);
  const auto runs = count_of(cfg, "battery_runs", 1);
  const auto summary = lm::run_attack(swa, battery, runs, experiment_seed(opt), opt.workers);
  json resolved = lm::to_json_value(swa);
  resolved["attack"] = lm::to_json_value(battery.hp);
  resolved["battery"] = lm::to_json_value(battery);
  resolved["battery_runs"] = runs;
  json run_list = json::array();
  for (const auto& run : summary.runs) {
    json clean = json::array();
    for (const auto& m : run.clean) clean.push_back(lm::to_json_value(m, true));
    run_list.push_back({{"plain", lm::to_json_value(run.plain, true)},
                        {"wrapped", lm::to_json_value(run.wrapped, true)},
                        {"clean_models", clean}});
  }
  json report = header("attack", opt, resolved);
  report["runs"] = run_list;
  report["summary"] = {{"median_stealthiness_plain", summary.median_stealthiness_plain},
                       {"median_stealthiness_wrapped", summary.median_stealthiness_wrapped},
                       {"stealth_gap", summary.median_stealthiness_wrapped - summary.median_stealthiness_plain},
                       {"median_control_auc", summary.median_control_auc}};
  emit(opt, report);
  return 0;
}

int cmd_ablate_seed(const Options& opt) {
  json cfg = load_config(opt);
  const lm::SwaConfig swa = swa_of(cfg, opt);
  const auto channel = channel_of(cfg);
  const auto trials = count_of(cfg, "trials", 1000);
  const auto res = lm::ablate_seed_construction(swa, channel, trials, experiment_seed(opt), opt.workers);
  json resolved = lm::to_json_value(swa);
  resolved.erase("seed_construction");
  resolved["channel"] = lm::to_json_value(channel);
  resolved["trials"] = trials;
  json report = header("ablate-seed", opt, resolved);
  report["with_construction"] = lm::to_json_value(res.with_construction);
  report["without_construction"] = lm::to_json_value(res.without_construction);
  emit(opt, report);
  return 0;
}

int fail(const std::string& kind, const std::string& message, int code) {
  std::cerr << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent watermark embedding, verification and probe-attack experiments"};
  app.require_subcommand(1);
  Options opt;
  app.add_option("--config", opt.config_path, "JSON configuration file");
  app.add_option("--master-seed", opt.master_seed, "Root of all randomness");
  app.add_option("--out", opt.out, "Output path (report JSON, or the latent for embed)");
  app.add_option("--workers", opt.workers, "Worker threads (LATENTMARK_WORKERS overrides)");

  auto* embed = app.add_subcommand("embed", "Write one watermarked latent and its sidecar JSON");
  auto* verify = app.add_subcommand("verify", "Verify a latent file");
  verify->add_option("input", opt.input, "LTN1 latent")->required();
  auto* sweep_r = app.add_subcommand("sweep-redundancy", "Verification AUC against redundancy");
  auto* sweep_m = app.add_subcommand("sweep-seedbits", "Verification AUC and stealthiness against seed length");
  auto* attack = app.add_subcommand("attack", "Probe-attack battery, unwrapped vs wrapped");
  auto* ablate = app.add_subcommand("ablate-seed", "Sign-derived vs raw-value seed construction");
  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), kExitUsage);
  }

  try {
    opt.workers = resolve_workers(opt.workers);
    if (embed->parsed()) return cmd_embed(opt);
    if (verify->parsed()) return cmd_verify(opt);
    if (sweep_r->parsed()) return cmd_sweep_redundancy(opt);
    if (sweep_m->parsed()) return cmd_sweep_seedbits(opt);
    if (attack->parsed()) return cmd_attack(opt);
    if (ablate->parsed()) return cmd_ablate_seed(opt);
  } catch (const UsageError& e) {
    return fail("usage", e.what(), kExitUsage);
  } catch (const lm::Error& e) {
    return fail(std::string(lm::to_string(e.kind())), e.what(), kExitFailure);
  } catch (const json::exception& e) {
    return fail("config", e.what(), kExitFailure);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), kExitFailure);
  }
  return fail("usage", "no subcommand", kExitUsage);
}
