// sparsemb: batch experiments driven by a JSON config.
#include <iostream>

#include "CLI11.hpp"
#include "sparsemb/cli.hpp"

namespace sc = sparsemb::cli;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> depth;
  std::string out;
  int threads = 1;
  bool print = false;
};

void add_common(CLI::App* app, Common& c)
{
  app->add_option("config", c.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "master seed, overrides run.seed");
  app->add_option("--window-depth", c.depth, "finest window level, overrides window.k_max");
  app->add_option("--out", c.out, "output directory, overrides output.dir");
  app->add_option("--threads", c.threads, "accepted for compatibility; runs are single-threaded")
      ->check(CLI::PositiveNumber);
  app->add_flag("--print", c.print, "also print the report to stdout");
}

int run(const std::string& command, const std::string& sub, const Common& c)
{
  try {
    sc::ExperimentConfig cfg = sc::load_config(c.config);
    cfg.command = command;
    if (c.seed) cfg.seed = *c.seed;
    if (c.depth) cfg.k_max = *c.depth;
    if (!c.out.empty()) cfg.out_dir = c.out;
    const sc::Output out = sc::run_command(cfg, sub);
    const std::string stem = sub.empty() ? command : command + "_" + sub;
    sc::write_output(out, cfg.out_dir, stem);
    if (c.print) std::cout << out.report.dump(2) << "\n";
    std::cerr << stem << ": wrote " << cfg.out_dir << "/" << stem << ".json (hash "
              << out.report["report_hash"].get<std::string>() << ")\n";
    return sc::kOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return sc::exit_code_for(e);
  }
}

}  // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Sparse form experiments on shifted dyadic grids"};
  app.require_subcommand(1);
  Common common;
  std::string sub;

  for (const char* name : {"a0", "verify", "extremize", "ap", "a2check", "series"}) {
    auto* s = app.add_subcommand(name);
    add_common(s, common);
  }
  auto* bessel = app.add_subcommand("bessel", "Bessel kernel checks");
  bessel->add_option("mode", sub, "scaling | bounds | lambda0 | majorant")
      ->required()
      ->check(CLI::IsMember({"scaling", "bounds", "lambda0", "majorant"}));
  add_common(bessel, common);
  auto* cond = app.add_subcommand("conditions", "weight conditions for the Bessel embedding");
  cond->add_option("case", sub, "p-le-q | q-lt-p")->required()->check(CLI::IsMember({"p-le-q", "q-lt-p"}));
  add_common(cond, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : sc::kConfigError;
  }
  const auto subs = app.get_subcommands();
  return run(subs.front()->get_name(), sub, common);
}
