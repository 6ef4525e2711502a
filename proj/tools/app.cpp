#include "app.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "crfwi/errors.hpp"
#include "plots.hpp"

namespace crfwi::app {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& msg) { throw ConfigError("config: " + msg); }

// Tracks which keys of one object were consumed so leftovers can be rejected.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(where() + "must be an object");
  }

  bool has(const std::string& key) {
    used_.insert(key);
    return j_.contains(key);
  }

  double number(const std::string& key, double def) {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_number()) fail(name(key) + " must be a number");
    return v.get<double>();
  }

  double positive(const std::string& key, double def) {
    const double v = number(key, def);
    if (!(v > 0.0)) fail(name(key) + " must be > 0");
    return v;
  }

  std::size_t count(const std::string& key, std::size_t def) {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_number_unsigned()) fail(name(key) + " must be a non-negative integer");
    return v.get<std::size_t>();
  }

  std::uint64_t u64(const std::string& key, std::uint64_t def) {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_number_unsigned()) fail(name(key) + " must be a non-negative integer");
    return v.get<std::uint64_t>();
  }

  bool flag(const std::string& key, bool def) {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_boolean()) fail(name(key) + " must be true or false");
    return v.get<bool>();
  }

  std::string text(const std::string& key, const std::string& def) {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_string()) fail(name(key) + " must be a string");
    return v.get<std::string>();
  }

  template <class T, class Check>
  std::vector<T> list(const std::string& key, std::vector<T> def, Check check, const char* what) {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_array()) fail(name(key) + " must be an array of " + what);
    std::vector<T> out;
    for (const auto& e : v) {
      if (!check(e)) fail(name(key) + " must be an array of " + what);
      out.push_back(e.template get<T>());
    }
    return out;
  }

  std::vector<double> numbers(const std::string& key, std::vector<double> def = {}) {
    return list<double>(key, std::move(def), [](const json& e) { return e.is_number(); }, "numbers");
  }
  std::vector<std::size_t> counts(const std::string& key, std::vector<std::size_t> def = {}) {
    return list<std::size_t>(key, std::move(def), [](const json& e) { return e.is_number_unsigned(); },
                             "non-negative integers");
  }
  std::vector<std::string> texts(const std::string& key, std::vector<std::string> def = {}) {
    return list<std::string>(key, std::move(def), [](const json& e) { return e.is_string(); }, "strings");
  }

  const json* object(const std::string& key) {
    if (!has(key)) return nullptr;
    return &j_.at(key);
  }

  std::string name(const std::string& key) const { return "'" + path_ + key + "'"; }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!used_.count(k)) fail("unknown key " + name(k));
  }

 private:
  std::string where() const { return path_.empty() ? "document " : "'" + path_ + "' "; }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

const std::set<std::string> kModelKinds{"layered-1d", "two-layer-2d", "marmousi", "marmousi-trace",
                                        "marmousi-crop", "salt", "vgrd"};
const std::set<std::string> kInitialKinds{"smooth", "constant", "linear", "truth", "vgrd"};

std::string method_key(const std::string& m) {
  if (m == "grid" || m == "direct-grid") return "grid";
  if (m == "siren") return "siren";
  if (m == "gabor") return "gabor";
  if (m == "lowrank" || m == "low-rank") return "lowrank";
  if (m == "hash" || m == "hash-grid") return "hash";
  if (m == "ig" || m == "hybrid-ig") return "ig";
  return {};
}

json resolve_preset(json doc) {
  if (!doc.is_object() || !doc.contains("preset")) return doc;
  if (!doc["preset"].is_string()) fail("'preset' must be a string");
  const auto name = doc["preset"].get<std::string>();
  const auto path = preset_dir() / (name + ".json");
  if (!std::filesystem::exists(path)) fail("unknown preset '" + name + "' (looked in " + path.string() + ")");
  json base = resolve_preset(load_config_document(path.string()));
  doc.erase("preset");
  base.merge_patch(doc);
  return base;
}

void parse_model(Reader r, ModelConfig& m) {
  m.kind = r.text("kind", m.kind);
  if (!kModelKinds.count(m.kind)) fail("unknown model kind '" + m.kind + "'");
  if (r.has("nz")) m.nz = r.count("nz", 0);
  if (r.has("nx")) m.nx = r.count("nx", 0);
  if (r.has("spacing")) m.spacing = r.positive("spacing", 1.0);
  m.v_top = r.positive("v_top", m.v_top);
  m.v_bottom = r.positive("v_bottom", m.v_bottom);
  m.interface_cell = r.count("interface", m.interface_cell);
  m.column = r.count("column", m.column);
  m.path = r.text("path", m.path);
  if (m.kind == "vgrd" && m.path.empty()) fail("'model.path' is required for kind vgrd");
  r.finish();
}

void parse_acquisition(Reader r, AcquisitionConfig& a) {
  a.shots = r.count("shots", a.shots);
  a.shot_spacing = r.count("shot_spacing", a.shot_spacing);
  a.receiver_spacing = r.count("receiver_spacing", a.receiver_spacing);
  a.depth = r.count("depth", a.depth);
  a.source_cell = r.count("source_cell", a.source_cell);
  a.receiver_cell = r.count("receiver_cell", a.receiver_cell);
  if (a.shots == 0) fail("'acquisition.shots' must be >= 1");
  if (a.receiver_spacing == 0) fail("'acquisition.receiver_spacing' must be >= 1");
  r.finish();
}

void parse_source(Reader r, SourceConfig& s) {
  s.peak_freq_hz = r.positive("peak_freq_hz", s.peak_freq_hz);
  s.dt = r.positive("dt", s.dt);
  s.nt = r.count("nt", s.nt);
  if (s.nt == 0) fail("'source.nt' must be >= 1");
  r.finish();
}

void parse_initial(Reader r, InitialConfig& i) {
  i.kind = r.text("kind", i.kind);
  if (!kInitialKinds.count(i.kind)) fail("unknown initial model kind '" + i.kind + "'");
  i.sigma_cells = r.positive("sigma_cells", i.sigma_cells);
  i.velocity = r.positive("velocity", i.velocity);
  i.v_top = r.positive("v_top", i.v_top);
  i.v_bottom = r.positive("v_bottom", i.v_bottom);
  i.path = r.text("path", i.path);
  if (i.kind == "vgrd" && i.path.empty()) fail("'initial.path' is required for kind vgrd");
  r.finish();
}

void parse_data(Reader r, DataConfig& d) {
  d.scenario.noise_sigma_factor = r.number("noise_sigma_factor", 0.0);
  if (r.has("highpass_hz")) d.scenario.highpass_cutoff_hz = r.positive("highpass_hz", 1.0);
  if (r.has("shot_subset")) d.scenario.shot_subset = r.counts("shot_subset");
  d.observed_dir = r.text("observed_dir", d.observed_dir);
  try {
    d.scenario.validate();
  } catch (const std::invalid_argument& e) {
    fail(std::string("'data': ") + e.what());
  }
  r.finish();
}

void parse_inversion(Reader r, InvertConfig& inv) {
  auto& m = inv.method;
  inv.method_name = r.text("method", inv.method_name);
  if (method_key(inv.method_name).empty()) fail("unknown inversion method '" + inv.method_name + "'");
  m.epochs = r.count("epochs", m.epochs);
  if (r.has("lr")) m.lr = r.positive("lr", 1.0);
  m.tv = r.flag("tv", m.tv);
  m.tv_alpha_x = r.number("tv_alpha_x", m.tv_alpha_x);
  m.tv_alpha_z = r.number("tv_alpha_z", m.tv_alpha_z);
  if (r.has("bands")) {
    if (r.object("bands")->is_string()) {
      if (r.text("bands", "") != "multiscale") fail("'inversion.bands' must be \"multiscale\" or an array of cutoffs");
      m.bands = band_schedule();
    } else {
      m.bands = r.numbers("bands");
    }
  }
  m.minibatch = r.count("minibatch", m.minibatch);
  m.metrics_every = r.count("metrics_every", m.metrics_every);
  if (m.metrics_every == 0) fail("'inversion.metrics_every' must be >= 1");
  m.snapshot_every = r.count("snapshot_every", m.snapshot_every);
  m.mask_pml = r.flag("mask_pml", m.mask_pml);
  m.repr.output_scale = r.positive("output_scale", m.repr.output_scale);
  m.repr.min_velocity = r.number("min_velocity", m.repr.min_velocity);
  m.repr.max_velocity = r.number("max_velocity", m.repr.max_velocity);
  if (!(m.repr.min_velocity < m.repr.max_velocity)) fail("'inversion.min_velocity' must be below max_velocity");
  r.finish();
}

void parse_ntk(Reader r, NtkConfig& n) {
  n.methods = r.texts("methods", n.methods);
  if (n.methods.empty()) fail("'ntk.methods' must not be empty");
  for (const auto& m : n.methods)
    if (method_key(m).empty()) fail("unknown method '" + m + "' in 'ntk.methods'");
  n.problem.smooth_sigma_cells = r.positive("smooth_sigma_cells", n.problem.smooth_sigma_cells);
  n.problem.sampling.time_stride = r.count("time_stride", n.problem.sampling.time_stride);
  n.problem.sampling.receiver_stride = r.count("receiver_stride", n.problem.sampling.receiver_stride);
  if (n.problem.sampling.time_stride == 0 || n.problem.sampling.receiver_stride == 0)
    fail("'ntk' strides must be >= 1");
  n.stationarity = r.flag("stationarity", n.stationarity);
  auto& s = n.stationarity_opts;
  s.widths = r.counts("widths", s.widths);
  s.seeds = r.count("seeds", s.seeds);
  s.epochs = r.count("epochs", s.epochs);
  s.train_width = r.count("train_width", s.train_width);
  s.kernel_every = r.count("kernel_every", s.kernel_every);
  s.lr = r.positive("lr", s.lr);
  s.output_scale = r.positive("output_scale", s.output_scale);
  s.omega0 = r.positive("omega0", s.omega0);
  if (s.widths.empty() || s.seeds == 0 || s.train_width == 0 || s.kernel_every == 0)
    fail("'ntk' stationarity settings must be non-empty and >= 1");
  r.finish();
}

void parse_metrics(Reader r, MetricsConfig& m) {
  m.estimate = r.text("estimate", m.estimate);
  m.reference = r.text("reference", m.reference);
  r.finish();
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot read " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

std::filesystem::path preset_dir() {
  if (const char* env = std::getenv("CRFWI_PRESET_DIR")) return env;
#ifdef CRFWI_PRESET_DIR
  return CRFWI_PRESET_DIR;
#else
  return "presets";
#endif
}

json load_config_document(const std::string& path) {
  const auto text = read_text(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: " + path + ": " + e.what());
  }
  return resolve_preset(std::move(doc));
}

Config parse_config(const json& raw) {
  const json doc = resolve_preset(raw);
  Config c;
  Reader r(doc, "");
  c.seed = r.u64("seed", c.seed);
  if (const auto* m = r.object("model")) parse_model(Reader(*m, "model."), c.model);
  if (r.has("boundary")) {
    const auto b = r.text("boundary", "");
    if (b == "free-surface") c.boundary = Boundary::FreeSurfaceTop;
    else if (b == "pml-all-sides") c.boundary = Boundary::PmlAllSides;
    else fail("'boundary' must be \"free-surface\" or \"pml-all-sides\"");
  }
  c.pml_width = r.count("pml_width", c.pml_width);
  if (const auto* a = r.object("acquisition")) parse_acquisition(Reader(*a, "acquisition."), c.acquisition);
  if (const auto* s = r.object("source")) parse_source(Reader(*s, "source."), c.source);
  if (const auto* i = r.object("initial")) parse_initial(Reader(*i, "initial."), c.initial);
  if (const auto* d = r.object("data")) parse_data(Reader(*d, "data."), c.data);
  if (const auto* v = r.object("inversion")) parse_inversion(Reader(*v, "inversion."), c.invert);
  if (const auto* n = r.object("ntk")) parse_ntk(Reader(*n, "ntk."), c.ntk);
  if (const auto* m = r.object("metrics")) parse_metrics(Reader(*m, "metrics."), c.metrics);
  r.finish();
  return c;
}

std::string canonical_json(const json& doc) { return doc.dump(); }  // object keys are kept sorted

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

json RunManifest::to_json() const {
  return json{{"command", command},     {"config_hash", config_hash}, {"seed", seed},
              {"artifacts", artifacts}, {"wall_time_s", wall_time_s}, {"version", version}};
}

namespace {

VelocityGrid build_model(const ModelConfig& m) {
  if (m.kind == "layered-1d")
    return layered_1d(m.nz.value_or(100), m.spacing.value_or(10.0), m.v_top, m.v_bottom, m.interface_cell);
  if (m.kind == "two-layer-2d")
    return two_layer_2d(m.nz.value_or(40), m.nx.value_or(80), m.spacing.value_or(10.0), m.v_top,
                        m.v_bottom, m.interface_cell);
  if (m.kind == "marmousi") return marmousi_like(m.nz.value_or(94), m.nx.value_or(288), m.spacing.value_or(15.0));
  if (m.kind == "marmousi-trace") return marmousi_trace(m.column);
  if (m.kind == "marmousi-crop") return marmousi_crop();
  if (m.kind == "salt") return salt_like(m.nz.value_or(75), m.nx.value_or(250), m.spacing.value_or(10.0));
  return load_velocity_grid(m.path);
}

}  // namespace

Setup build_setup(const Config& c) {
  Setup s;
  s.truth_core = build_model(c.model);
  const bool one_d = s.truth_core.nx == 1;
  const Boundary boundary = c.boundary.value_or(one_d ? Boundary::PmlAllSides : Boundary::FreeSurfaceTop);
  s.pad = halo_padding(s.truth_core, c.pml_width, boundary);
  s.truth = pad_model(s.truth_core, s.pad);
  const auto& a = c.acquisition;
  if (one_d) {
    if (a.source_cell >= s.truth_core.nz || a.receiver_cell >= s.truth_core.nz)
      fail("1D source/receiver cell outside the model");
    s.geometry.boundary = boundary;
    s.geometry.sources = {{s.pad.top + a.source_cell, 0}};
    s.geometry.receivers = {{s.pad.top + a.receiver_cell, 0}};
  } else {
    if (a.depth >= s.truth_core.nz) fail("'acquisition.depth' is below the model");
    try {
      s.geometry = surface_geometry(s.pad.left, s.pad.left + s.truth_core.nx - 1, s.pad.top + a.depth,
                                    a.shots, a.shot_spacing, a.receiver_spacing, boundary);
    } catch (const std::invalid_argument& e) {
      fail(std::string("'acquisition': ") + e.what());
    }
  }
  s.wavelet = ricker(c.source.peak_freq_hz, c.source.dt, c.source.nt);
  s.cfg.dt = c.source.dt;
  s.cfg.nt = c.source.nt;
  s.cfg.pml_width = c.pml_width;
  const auto stab = stability_check(s.truth, s.cfg);
  if (!stab.ok) fail(stab.message);
  s.cfg = freeze_pml(s.cfg, s.truth);
  return s;
}

VelocityGrid build_initial(const Config& c, const Setup& s) {
  const auto& i = c.initial;
  const auto& t = s.truth_core;
  if (i.kind == "smooth") return gaussian_smooth(t, i.sigma_cells);
  if (i.kind == "constant") return VelocityGrid::constant(t.nz, t.nx, t.dz, t.dx, i.velocity);
  if (i.kind == "linear") return linear_gradient(t, i.v_top, i.v_bottom);
  if (i.kind == "truth") return t;
  auto g = load_velocity_grid(i.path);
  if (g.nz != t.nz || g.nx != t.nx) fail("initial model shape does not match the model");
  return g;
}

ReprSpec repr_for(const std::string& method, const InversionMethod& base) {
  ReprSpec s = base.repr;
  const auto key = method_key(method);
  if (key == "grid") s.variant = DirectGridSpec{};
  else if (key == "siren") s.variant = SirenSpec{};
  else if (key == "gabor") s.variant = GaborSpec{};
  else if (key == "lowrank") s.variant = LowRankSpec{};
  else if (key == "hash") s.variant = HashGridSpec{};
  else if (key == "ig") s.variant = HybridIgSpec{};
  else fail("unknown method '" + method + "'");
  return s;
}

namespace {

struct Context {
  const RunOptions& opts;
  Config cfg;
  std::uint64_t seed;
  RunManifest manifest;
  std::ostream& out;
  std::ostream& err;

  std::string path(const std::string& name) const {
    return (std::filesystem::path(opts.out_dir) / name).string();
  }
  // Writers record the artifact; in a dry run they only record it.
  void text(const std::string& name, const std::string& body) {
    manifest.artifacts.push_back(name);
    if (!opts.dry_run) write_text_atomic(path(name), body);
  }
  void grid(const std::string& name, const VelocityGrid& g) {
    manifest.artifacts.push_back(name);
    if (!opts.dry_run) save_velocity_grid(g, path(name));
  }
  void gather(const std::string& name, const ShotGather& g) {
    manifest.artifacts.push_back(name);
    if (!opts.dry_run) save_shot_gather(g, path(name));
  }
  template <class Make>
  void plot(const std::string& name, Make make) {
    if (!opts.plots) return;
    if (opts.dry_run) {
      manifest.artifacts.push_back(name);
      return;
    }
    try {
      write_text_atomic(path(name), make());
      manifest.artifacts.push_back(name);
    } catch (const std::exception& e) {
      err << "warning: plot " << name << " skipped: " << e.what() << "\n";
    }
  }
};

std::string shot_name(std::size_t s) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "shot_%03zu.sgth", s);
  return buf;
}

std::string snapshot_name(std::size_t epoch) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "snapshot_%04zu.vgrd", epoch);
  return buf;
}

std::pair<double, double> value_range(const VelocityGrid& g) {
  const auto [lo, hi] = std::minmax_element(g.values.begin(), g.values.end());
  return {*lo, *hi > *lo ? *hi : *lo + 1.0};
}

void cmd_synth(Context& ctx) {
  const auto setup = build_setup(ctx.cfg);
  std::vector<ShotGather> gathers;
  if (!ctx.opts.dry_run) gathers = simulate_all(setup.truth, setup.wavelet, setup.geometry, setup.cfg);
  ctx.grid("truth.vgrd", setup.truth_core);
  for (std::size_t s = 0; s < setup.geometry.sources.size(); ++s)
    ctx.gather(shot_name(s), ctx.opts.dry_run ? ShotGather{} : gathers[s]);
  ctx.plot("truth.svg", [&] {
    const auto [lo, hi] = value_range(setup.truth_core);
    return plots::raster_svg(setup.truth_core, lo, hi, "true model");
  });
}

ShotData observed_data(Context& ctx, const Setup& setup) {
  const auto& dir = ctx.cfg.data.observed_dir;
  if (dir.empty()) return ShotData::all(simulate_all(setup.truth, setup.wavelet, setup.geometry, setup.cfg));
  std::vector<ShotGather> g;
  for (std::size_t s = 0; s < setup.geometry.sources.size(); ++s) {
    auto gather = load_shot_gather((std::filesystem::path(dir) / shot_name(s)).string());
    if (gather.n_receivers != setup.geometry.receivers.size() || gather.nt != setup.cfg.nt)
      fail("observed gather " + shot_name(s) + " does not match the acquisition");
    g.push_back(std::move(gather));
  }
  return ShotData::all(std::move(g));
}

void cmd_invert(Context& ctx) {
  const auto& c = ctx.cfg;
  const auto setup = build_setup(c);
  const auto m0 = build_initial(c, setup);
  InversionMethod method = c.invert.method;
  method.repr = repr_for(c.invert.method_name, method);
  method.seed = ctx.seed;

  if (ctx.opts.dry_run) {
    ctx.grid("initial.vgrd", m0);
    ctx.text("inversion.csv", {});
    ctx.grid("final.vgrd", m0);
    ctx.text("final_metrics.csv", {});
    if (method.snapshot_every) {
      for (std::size_t e = 0; e < method.epochs; e += method.snapshot_every) ctx.grid(snapshot_name(e), m0);
      if (method.epochs > 0 && method.epochs % method.snapshot_every == 0)
        ctx.grid(snapshot_name(method.epochs), m0);
    }
    ctx.plot("convergence.svg", [] { return std::string(); });
    ctx.plot("final.svg", [] { return std::string(); });
    return;
  }

  InversionProblem problem;
  problem.m0 = pad_model(m0, setup.pad);
  problem.truth = setup.truth;
  problem.geometry = setup.geometry;
  problem.wavelet = setup.wavelet;
  problem.cfg = setup.cfg;
  problem.halo = setup.pad;
  problem.observed = degrade_data(observed_data(ctx, setup), c.data.scenario, ctx.seed);

  ctx.out << "inverting with " << repr_name(method.repr) << " for " << method.epochs << " epochs\n";
  const auto report = run_inversion(problem, method);

  ctx.grid("initial.vgrd", m0);
  std::ostringstream csv;
  write_inversion_csv(report, csv);
  ctx.text("inversion.csv", csv.str());
  const auto final_core = crop_model(report.final_model, setup.pad);
  ctx.grid("final.vgrd", final_core);
  std::ostringstream mcsv;
  write_metrics_csv(evaluate_metrics(final_core, setup.truth_core), mcsv);
  ctx.text("final_metrics.csv", mcsv.str());
  for (const auto& [epoch, snap] : report.snapshots) ctx.grid(snapshot_name(epoch), crop_model(snap, setup.pad));
  ctx.plot("convergence.svg", [&] {
    return plots::curve_svg({{"misfit", report.misfit}}, "data misfit", true);
  });
  ctx.plot("final.svg", [&] {
    const auto [lo, hi] = value_range(setup.truth_core);
    return plots::raster_svg(final_core, lo, hi, "inverted model");
  });
  ctx.out << "misfit " << report.misfit.front() << " -> " << report.misfit.back() << "\n";
}

void cmd_ntk(Context& ctx) {
  const auto& c = ctx.cfg;
  const auto trace = build_model(c.model);
  if (trace.nx != 1) fail("the ntk command needs a 1D model");
  NtkProblemOptions po = c.ntk.problem;
  po.pml_width = c.pml_width;
  po.peak_freq_hz = c.source.peak_freq_hz;
  po.dt = c.source.dt;
  po.nt = c.source.nt;
  std::vector<std::string> keys;
  for (const auto& m : c.ntk.methods) keys.push_back(method_key(m));

  if (ctx.opts.dry_run) {
    for (const auto& k : keys) ctx.text("spectrum_" + k + ".csv", {});
    ctx.text("slopes.csv", {});
    if (c.ntk.stationarity) {
      ctx.text("stationarity.csv", {});
      ctx.text("width_stats.csv", {});
    }
    ctx.plot("spectra.svg", [] { return std::string(); });
    if (c.ntk.stationarity) ctx.plot("stationarity.svg", [] { return std::string(); });
    return;
  }

  const auto problem = make_ntk_problem(trace, po);
  const auto j = sensitivity_jacobian(problem.m0, problem.wavelet, problem.geometry, problem.cfg,
                                      problem.sampling, problem.cells);
  std::vector<MethodSpectrum> spectra;
  InversionMethod base;
  base.repr = c.invert.method.repr;
  for (const auto& k : keys) {
    spectra.push_back(method_spectrum(problem, j, repr_for(k, base), ctx.seed));
    std::ostringstream os;
    write_spectrum_csv(spectra.back().spectrum, os);
    ctx.text("spectrum_" + k + ".csv", os.str());
    ctx.out << k << " slope " << spectra.back().slope << "\n";
  }
  const auto verdict = decay_ordering(spectra);
  std::ostringstream slopes;
  slopes << "method,slope\n";
  for (const auto& s : spectra) slopes << s.method << ',' << s.slope << "\n";
  slopes << "ordering," << (verdict.ok ? "pass" : "fail") << "\n";
  ctx.text("slopes.csv", slopes.str());

  std::optional<StationarityTrace> trace_out;
  if (c.ntk.stationarity) {
    auto so = c.ntk.stationarity_opts;
    so.seed = ctx.seed;
    trace_out = stationarity_experiment(problem, so);
    std::ostringstream a, b;
    write_stationarity_csv(*trace_out, a);
    write_width_stats_csv(*trace_out, b);
    ctx.text("stationarity.csv", a.str());
    ctx.text("width_stats.csv", b.str());
  }
  ctx.plot("spectra.svg", [&] {
    std::vector<plots::Series> s;
    for (const auto& m : spectra) s.push_back({m.method, m.spectrum.eigenvalues});
    return plots::loglog_svg(s, "normalized wave-NTK spectra");
  });
  if (trace_out)
    ctx.plot("stationarity.svg", [&] {
      return plots::curve_svg({{"nuclear", trace_out->delta_nuclear}, {"frobenius", trace_out->delta_frobenius}},
                              "relative kernel drift", false);
    });
}

void cmd_metrics(Context& ctx) {
  const auto& m = ctx.cfg.metrics;
  if (m.estimate.empty() || m.reference.empty()) fail("'metrics.estimate' and 'metrics.reference' are required");
  const auto est = load_velocity_grid(m.estimate);
  const auto ref = load_velocity_grid(m.reference);
  if (est.nz != ref.nz || est.nx != ref.nx) fail("metrics: grids differ in shape");
  std::ostringstream os;
  const auto r = evaluate_metrics(est, ref);
  write_metrics_csv(r, os);
  ctx.text("metrics.csv", os.str());
  ctx.out << "mse " << r.mse << " mae " << r.mae << " ssim " << r.ssim << "\n";
}

}  // namespace

int run(const RunOptions& opts, std::ostream& out, std::ostream& err) {
  const auto t0 = std::chrono::steady_clock::now();
  try {
    if (opts.config_path.empty()) fail("--config is required");
    const json doc = load_config_document(opts.config_path);
    Context ctx{opts, parse_config(doc), 0, {}, out, err};
    ctx.seed = opts.seed.value_or(ctx.cfg.seed);
    ctx.manifest.command = opts.command;
    ctx.manifest.seed = ctx.seed;
    ctx.manifest.config_hash = hex64(fnv1a64(canonical_json(doc)));
    if (!opts.dry_run) std::filesystem::create_directories(opts.out_dir);

    if (opts.command == "synth") cmd_synth(ctx);
    else if (opts.command == "invert") cmd_invert(ctx);
    else if (opts.command == "ntk") cmd_ntk(ctx);
    else if (opts.command == "metrics") cmd_metrics(ctx);
    else fail("unknown command '" + opts.command + "'");

    ctx.manifest.artifacts.push_back("manifest.json");
    ctx.manifest.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (opts.dry_run) {
      out << ctx.manifest.to_json().dump(2) << "\n";
      return kOk;
    }
    write_text_atomic(ctx.path("manifest.json"), ctx.manifest.to_json().dump(2) + "\n");
    return kOk;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const NumericBlowup& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kNumericFailure;
  } catch (const ResourceGuard& e) {
    err << "refused: " << e.what() << "\n";
    return kGuardRefusal;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace crfwi::app
