#include <iostream>

#include <CLI11.hpp>

#include "app.hpp"

int main(int argc, char** argv) {
  using namespace crfwi::app;
  CLI::App cli{"Continuous-representation FWI toolkit"};
  cli.set_version_flag("--version", kVersion);
  cli.require_subcommand(1);

  RunOptions opts;
  std::uint64_t seed = 0;
  const struct {
    const char* name;
    const char* help;
  } commands[] = {{"synth", "simulate observed gathers for a configured model"},
                  {"invert", "run an inversion and write curves and models"},
                  {"ntk", "wave-NTK spectra and stationarity experiment on a 1D model"},
                  {"metrics", "compare two velocity grids"}};
  std::vector<CLI::App*> subs;
  std::vector<CLI::Option*> seed_opts;
  for (const auto& c : commands) {
    auto* sub = cli.add_subcommand(c.name, c.help);
    sub->add_option("--config", opts.config_path, "JSON config file")->required();
    seed_opts.push_back(sub->add_option("--seed", seed, "seed for every random stream"));
    sub->add_option("--out", opts.out_dir, "output directory")->capture_default_str();
    sub->add_flag("--dry-run", opts.dry_run, "validate and print the manifest plan only");
    sub->add_flag("--plots", opts.plots, "also write SVG figures");
    subs.push_back(sub);
  }

  try {
    cli.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return cli.exit(e);
  } catch (const CLI::ParseError& e) {
    cli.exit(e);
    return kConfigError;
  }
  for (std::size_t i = 0; i < subs.size(); ++i)
    if (subs[i]->parsed()) {
      opts.command = subs[i]->get_name();
      if (seed_opts[i]->count()) opts.seed = seed;
    }
  return run(opts, std::cout, std::cerr);
}
