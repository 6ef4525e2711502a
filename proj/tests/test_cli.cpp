#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "app.hpp"
#include "crfwi/errors.hpp"
#include "test_util.hpp"

using namespace crfwi;
using namespace crfwi::app;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path write_config(const fs::path& dir, const std::string& name, const json& doc) {
  const auto p = dir / name;
  std::ofstream(p) << doc.dump(2);
  return p;
}

struct Run {
  int code;
  std::string out, err;
};

Run run_cli(const std::string& command, const fs::path& config, const fs::path& out_dir,
            bool dry_run = false, bool plots = false, std::optional<std::uint64_t> seed = {}) {
  RunOptions o;
  o.command = command;
  o.config_path = config.string();
  o.out_dir = out_dir.string();
  o.dry_run = dry_run;
  o.plots = plots;
  o.seed = seed;
  std::ostringstream out, err;
  const int code = app::run(o, out, err);
  return {code, out.str(), err.str()};
}

json small_layered() {
  return json{{"preset", "layered-1d"},
              {"model", {{"nz", 40}, {"interface", 20}}},
              {"source", {{"nt", 300}}},
              {"inversion", {{"epochs", 5}, {"metrics_every", 1}}}};
}

std::set<std::string> listing(const fs::path& dir) {
  std::set<std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) out.insert(e.path().filename().string());
  return out;
}

std::string config_error(const json& doc) {
  try {
    parse_config(doc);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST(Config, UnknownKeysAreErrors) {
  EXPECT_NE(config_error(json{{"sead", 1}}).find("'sead'"), std::string::npos);
  EXPECT_NE(config_error(json{{"inversion", {{"epoch", 3}}}}).find("'inversion.epoch'"), std::string::npos);
  EXPECT_NE(config_error(json{{"ntk", {{"width", {64}}}}}).find("'ntk.width'"), std::string::npos);
}

TEST(Config, TypeAndValueErrorsNameTheKey) {
  EXPECT_NE(config_error(json{{"source", {{"dt", "fast"}}}}).find("'source.dt'"), std::string::npos);
  EXPECT_NE(config_error(json{{"inversion", {{"epochs", -1}}}}).find("'inversion.epochs'"), std::string::npos);
  EXPECT_NE(config_error(json{{"inversion", {{"method", "kriging"}}}}).find("kriging"), std::string::npos);
  EXPECT_NE(config_error(json{{"model", {{"kind", "vgrd"}}}}).find("model.path"), std::string::npos);
  EXPECT_FALSE(config_error(json{{"preset", "nope"}}).empty());
}

TEST(Config, ParseErrorsReportLine) {
  const auto dir = crfwi::testing::temp_dir("cli_parse");
  const auto p = dir / "bad.json";
  std::ofstream(p) << "{\n  \"seed\": 1,\n  \"model\": {\"kind\": }\n}\n";
  try {
    load_config_document(p.string());
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  const auto r = run_cli("synth", p, dir / "out");
  EXPECT_EQ(r.code, kConfigError);
  EXPECT_FALSE(fs::exists(dir / "out"));
}

TEST(Config, HashIgnoresKeyOrder) {
  const auto a = json::parse(R"({"seed": 3, "model": {"kind": "layered-1d", "nz": 10}})");
  const auto b = json::parse(R"({"model": {"nz": 10, "kind": "layered-1d"}, "seed": 3})");
  EXPECT_EQ(fnv1a64(canonical_json(a)), fnv1a64(canonical_json(b)));
  EXPECT_NE(fnv1a64(canonical_json(a)), fnv1a64(canonical_json(json{{"seed", 4}})));
  // Published FNV-1a test vectors.
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cull);
  EXPECT_EQ(hex64(0xabcull), "0000000000000abc");
}

TEST(Presets, MarmousiAcquisition) {
  const auto c = parse_config(json{{"preset", "marmousi"}});
  const auto s = build_setup(c);
  EXPECT_EQ(s.truth_core.nz, 94u);
  EXPECT_EQ(s.truth_core.nx, 288u);
  EXPECT_DOUBLE_EQ(s.truth_core.dx, 15.0);
  ASSERT_EQ(s.geometry.sources.size(), 13u);
  EXPECT_DOUBLE_EQ(double(s.geometry.sources[1].ix - s.geometry.sources[0].ix) * s.truth.dx, 300.0);
  EXPECT_DOUBLE_EQ(double(s.geometry.receivers[1].ix - s.geometry.receivers[0].ix) * s.truth.dx, 15.0);
  EXPECT_DOUBLE_EQ(c.source.peak_freq_hz, 8.0);
  EXPECT_DOUBLE_EQ(s.cfg.dt, 1.9e-3);
  EXPECT_EQ(s.cfg.nt, 1000u);
  EXPECT_EQ(s.geometry.boundary, Boundary::FreeSurfaceTop);
}

TEST(Presets, SaltAcquisition) {
  const auto c = parse_config(json{{"preset", "salt"}});
  const auto s = build_setup(c);
  ASSERT_EQ(s.geometry.sources.size(), 24u);
  EXPECT_DOUBLE_EQ(double(s.geometry.sources[1].ix - s.geometry.sources[0].ix) * s.truth.dx, 100.0);
  EXPECT_DOUBLE_EQ(double(s.geometry.receivers[1].ix - s.geometry.receivers[0].ix) * s.truth.dx, 10.0);
  EXPECT_DOUBLE_EQ(c.source.peak_freq_hz, 10.0);
  EXPECT_DOUBLE_EQ(s.cfg.dt, 1.5e-3);
  EXPECT_EQ(s.cfg.nt, 2500u);
}

TEST(Presets, AllShippedPresetsParse) {
  for (const auto& e : fs::directory_iterator(preset_dir())) {
    const auto doc = load_config_document(e.path().string());
    const auto c = parse_config(doc);
    EXPECT_NO_THROW(build_setup(c)) << e.path();
  }
}

TEST(Synth, DeterministicAndFullyListed) {
  const auto dir = crfwi::testing::temp_dir("cli_synth");
  const auto cfg = write_config(dir, "c.json", small_layered());
  ASSERT_EQ(run_cli("synth", cfg, dir / "a").code, kOk);
  ASSERT_EQ(run_cli("synth", cfg, dir / "b").code, kOk);
  EXPECT_EQ(slurp(dir / "a" / "shot_000.sgth"), slurp(dir / "b" / "shot_000.sgth"));
  EXPECT_EQ(slurp(dir / "a" / "truth.vgrd"), slurp(dir / "b" / "truth.vgrd"));
  const auto manifest = json::parse(slurp(dir / "a" / "manifest.json"));
  std::set<std::string> listed;
  for (const auto& a : manifest["artifacts"]) listed.insert(a.get<std::string>());
  EXPECT_EQ(listed, listing(dir / "a"));
  EXPECT_EQ(manifest["command"], "synth");
  EXPECT_EQ(manifest["version"], kVersion);
  EXPECT_EQ(load_shot_gather((dir / "a" / "shot_000.sgth").string()).nt, 300u);
}

TEST(DryRun, WritesNothingAndPrintsPlan) {
  const auto dir = crfwi::testing::temp_dir("cli_dry");
  auto doc = small_layered();
  doc["inversion"]["snapshot_every"] = 2;
  const auto cfg = write_config(dir, "c.json", doc);
  const auto r = run_cli("invert", cfg, dir / "out", true, true);
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_FALSE(fs::exists(dir / "out"));
  const auto plan = json::parse(r.out);
  std::set<std::string> planned;
  for (const auto& a : plan["artifacts"]) planned.insert(a.get<std::string>());
  EXPECT_TRUE(planned.count("snapshot_0004.vgrd"));
  EXPECT_TRUE(planned.count("convergence.svg"));

  // The real run emits exactly the planned files.
  ASSERT_EQ(run_cli("invert", cfg, dir / "out", false, true).code, kOk);
  EXPECT_EQ(planned, listing(dir / "out"));
}

TEST(Invert, ZeroEpochsSingleRow) {
  const auto dir = crfwi::testing::temp_dir("cli_zero");
  auto doc = small_layered();
  doc["inversion"]["epochs"] = 0;
  const auto cfg = write_config(dir, "c.json", doc);
  ASSERT_EQ(run_cli("invert", cfg, dir / "out").code, kOk);
  std::istringstream csv(slurp(dir / "out" / "inversion.csv"));
  std::string line;
  std::size_t rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 2u);
}

TEST(Invert, RerunIsIdentical) {
  const auto dir = crfwi::testing::temp_dir("cli_rerun");
  auto doc = small_layered();
  doc["inversion"]["method"] = "siren";
  doc["data"] = {{"noise_sigma_factor", 0.1}};
  const auto cfg = write_config(dir, "c.json", doc);
  ASSERT_EQ(run_cli("invert", cfg, dir / "a", false, false, 7).code, kOk);
  ASSERT_EQ(run_cli("invert", cfg, dir / "b", false, false, 7).code, kOk);
  for (const auto& f : {"inversion.csv", "final.vgrd", "final_metrics.csv"})
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
  const auto ma = json::parse(slurp(dir / "a" / "manifest.json"));
  const auto mb = json::parse(slurp(dir / "b" / "manifest.json"));
  EXPECT_EQ(ma["config_hash"], mb["config_hash"]);
  EXPECT_EQ(ma["seed"], 7);
  // A different seed changes the noise and the network init.
  ASSERT_EQ(run_cli("invert", cfg, dir / "c", false, false, 8).code, kOk);
  EXPECT_NE(slurp(dir / "a" / "final.vgrd"), slurp(dir / "c" / "final.vgrd"));
}

TEST(Invert, ObservedDataFromSynth) {
  const auto dir = crfwi::testing::temp_dir("cli_observed");
  auto doc = small_layered();
  const auto cfg = write_config(dir, "c.json", doc);
  ASSERT_EQ(run_cli("synth", cfg, dir / "data").code, kOk);
  doc["data"] = {{"observed_dir", (dir / "data").string()}};
  const auto cfg2 = write_config(dir, "c2.json", doc);
  ASSERT_EQ(run_cli("invert", cfg2, dir / "from_files").code, kOk);
  ASSERT_EQ(run_cli("invert", cfg, dir / "in_memory").code, kOk);
  // Gathers are stored as float32, so the two runs agree to single precision.
  const auto a = load_velocity_grid((dir / "from_files" / "final.vgrd").string());
  const auto b = load_velocity_grid((dir / "in_memory" / "final.vgrd").string());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.values[i], b.values[i], 1e-3);

  doc["data"] = {{"observed_dir", (dir / "missing").string()}};
  const auto cfg3 = write_config(dir, "c3.json", doc);
  EXPECT_EQ(run_cli("invert", cfg3, dir / "x").code, kConfigError);
}

TEST(ExitCodes, ConfigAndGuard) {
  const auto dir = crfwi::testing::temp_dir("cli_codes");
  auto bad = small_layered();
  bad["inversion"]["epochz"] = 1;
  EXPECT_EQ(run_cli("invert", write_config(dir, "bad.json", bad), dir / "o").code, kConfigError);

  auto cfl = small_layered();
  cfl["source"]["dt"] = 0.01;
  const auto r = run_cli("synth", write_config(dir, "cfl.json", cfl), dir / "o");
  EXPECT_EQ(r.code, kConfigError);
  EXPECT_NE(r.err.find("CFL"), std::string::npos);

  // J would need (nt - 1) x 3000 entries, above the guard.
  json big{{"model", {{"kind", "layered-1d"}, {"nz", 3000}, {"interface", 1500}}},
           {"source", {{"nt", 20000}, {"dt", 0.001}}},
           {"ntk", {{"methods", {"grid"}}, {"time_stride", 1}, {"stationarity", false}}}};
  const auto g = run_cli("ntk", write_config(dir, "big.json", big), dir / "o");
  EXPECT_EQ(g.code, kGuardRefusal);
  EXPECT_NE(g.err.find("needs"), std::string::npos);
}

TEST(Ntk, SpectrumFilesAndOrderingRow) {
  const auto dir = crfwi::testing::temp_dir("cli_ntk");
  json doc{{"preset", "ntk-1d"}, {"ntk", {{"stationarity", false}}}};
  const auto cfg = write_config(dir, "c.json", doc);
  const auto r = run_cli("ntk", cfg, dir / "out");
  ASSERT_EQ(r.code, kOk) << r.err;
  const auto files = listing(dir / "out");
  std::size_t spectra = 0;
  for (const auto& f : files) {
    spectra += f.rfind("spectrum_", 0) == 0;
    EXPECT_EQ(f.find(".svg"), std::string::npos);
  }
  EXPECT_EQ(spectra, 5u);

  std::istringstream csv(slurp(dir / "out" / "slopes.csv"));
  std::string line, verdict;
  std::getline(csv, line);
  std::vector<MethodSpectrum> parsed;
  while (std::getline(csv, line)) {
    const auto comma = line.find(',');
    const auto name = line.substr(0, comma), value = line.substr(comma + 1);
    if (name == "ordering") verdict = value;
    else parsed.push_back({name, {}, std::stod(value)});
  }
  EXPECT_EQ(parsed.size(), 5u);
  EXPECT_EQ(verdict, decay_ordering(parsed).ok ? "pass" : "fail");
}

TEST(Metrics, ComparesGrids) {
  const auto dir = crfwi::testing::temp_dir("cli_metrics");
  const auto a = crfwi::testing::random_grid(6, 7, 10, 1);
  save_velocity_grid(a, (dir / "a.vgrd").string());
  save_velocity_grid(a, (dir / "b.vgrd").string());
  json doc{{"metrics", {{"estimate", (dir / "a.vgrd").string()}, {"reference", (dir / "b.vgrd").string()}}}};
  ASSERT_EQ(run_cli("metrics", write_config(dir, "c.json", doc), dir / "out").code, kOk);
  EXPECT_NE(slurp(dir / "out" / "metrics.csv").find("mse,0\n"), std::string::npos);
  json missing{{"metrics", {{"estimate", (dir / "a.vgrd").string()}}}};
  EXPECT_EQ(run_cli("metrics", write_config(dir, "m.json", missing), dir / "o2").code, kConfigError);
}

TEST(Plots, WrittenOnlyWhenAsked) {
  const auto dir = crfwi::testing::temp_dir("cli_plots");
  const auto cfg = write_config(dir, "c.json", small_layered());
  ASSERT_EQ(run_cli("invert", cfg, dir / "p", false, true).code, kOk);
  EXPECT_TRUE(fs::exists(dir / "p" / "convergence.svg"));
  EXPECT_EQ(slurp(dir / "p" / "final.svg").rfind("<svg", 0), 0u);
}
