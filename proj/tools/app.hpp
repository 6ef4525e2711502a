#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "crfwi/inversion.hpp"
#include "crfwi/models.hpp"
#include "crfwi/ntk_lab.hpp"

namespace crfwi::app {

inline constexpr const char* kVersion = "crfwi 0.1.0";

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kNumericFailure = 3,
  kGuardRefusal = 4,
};

struct ModelConfig {
  std::string kind = "layered-1d";
  // Unset sizes fall back to each generator's own defaults.
  std::optional<std::size_t> nz, nx;
  std::optional<double> spacing;
  double v_top = 1500.0, v_bottom = 2000.0;
  std::size_t interface_cell = 50;
  std::size_t column = 144;
  std::string path;
};

struct AcquisitionConfig {
  std::size_t shots = 1;
  std::size_t shot_spacing = 10;
  std::size_t receiver_spacing = 1;
  std::size_t depth = 1;  // source/receiver row below the top of the model (2D)
  std::size_t source_cell = 0, receiver_cell = 0;  // 1D, relative to the model top
};

struct SourceConfig {
  double peak_freq_hz = 10.0;
  double dt = 1e-3;
  std::size_t nt = 1000;
};

struct InitialConfig {
  std::string kind = "smooth";
  double sigma_cells = 6.0;
  double velocity = 2000.0;
  double v_top = 1500.0, v_bottom = 3000.0;
  std::string path;
};

struct DataConfig {
  Scenario scenario;
  std::string observed_dir;
};

struct InvertConfig {
  InversionMethod method;
  std::string method_name = "grid";
};

struct NtkConfig {
  std::vector<std::string> methods{"grid", "hash", "ig", "siren", "lowrank"};
  NtkProblemOptions problem;
  bool stationarity = true;
  StationarityOptions stationarity_opts;
};

struct MetricsConfig {
  std::string estimate, reference;
};

struct Config {
  std::uint64_t seed = 0;
  ModelConfig model;
  std::optional<Boundary> boundary;
  std::size_t pml_width = 20;
  AcquisitionConfig acquisition;
  SourceConfig source;
  InitialConfig initial;
  DataConfig data;
  InvertConfig invert;
  NtkConfig ntk;
  MetricsConfig metrics;
};

/// Strict reader: unknown keys and wrong types raise ConfigError naming the key.
/// A top-level "preset" names a file in the preset directory that the document
/// is merged onto.
Config parse_config(const nlohmann::json& doc);
nlohmann::json load_config_document(const std::string& path);
std::filesystem::path preset_dir();

std::string canonical_json(const nlohmann::json& doc);
std::uint64_t fnv1a64(const std::string& bytes);
std::string hex64(std::uint64_t v);

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<std::string> artifacts;
  double wall_time_s = 0.0;
  std::string version = kVersion;
  nlohmann::json to_json() const;
};

/// Padded truth, start model and acquisition built from a config.
struct Setup {
  VelocityGrid truth_core, truth;
  Padding pad;
  AcquisitionGeometry geometry;
  Wavelet wavelet;
  SolverConfig cfg;
};

Setup build_setup(const Config& cfg);
VelocityGrid build_initial(const Config& cfg, const Setup& setup);  // unpadded
ReprSpec repr_for(const std::string& method, const InversionMethod& base);

struct RunOptions {
  std::string command;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  bool dry_run = false;
  bool plots = false;
};

/// Runs one command and maps failures onto exit codes. Progress and the
/// dry-run plan go to `out`, diagnostics to `err`.
int run(const RunOptions& opts, std::ostream& out, std::ostream& err);

}  // namespace crfwi::app
