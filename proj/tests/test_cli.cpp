#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>

#include "sparsemb/cli.hpp"

using namespace sparsemb;
using namespace sparsemb::cli;
namespace fs = std::filesystem;

namespace {

const std::string kCli = SPARSEMB_CLI_PATH;
const std::string kConfigs = SPARSEMB_CONFIG_DIR;

int run_cli(const std::string& args)
{
  const int rc = std::system((kCli + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

fs::path scratch(const std::string& name)
{
  const auto dir = fs::temp_directory_path() / ("sparsemb_test_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

json read_json(const fs::path& p)
{
  std::ifstream in(p);
  return json::parse(in);
}

std::vector<fs::path> config_files()
{
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(kConfigs))
    if (e.path().extension() == ".json") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST(Config, RoundTripIsByteStable)
{
  const std::string once = emit_config(ExperimentConfig{});
  EXPECT_EQ(emit_config(parse_config(once)), once);
  for (const auto& path : config_files()) {
    const std::string text = emit_config(load_config(path.string()));
    EXPECT_EQ(emit_config(parse_config(text)), text) << path;
  }
}

TEST(Config, FieldsSurvive)
{
  ExperimentConfig c;
  c.d = 2;
  c.shift = {1, -1};
  c.p = {3, 1.5};
  c.weights = {"power:beta=0.5", "lebesgue"};
  c.family.generator = "cubes";
  c.family.cubes = {"tau=1,-1;k=2;m=0,1"};
  c.mesh_level = 9;
  c.series.r = 0.25;
  c.bessel.epsilons = {0.5};
  c.conditions.weight = "power:beta=-0.25";
  const auto back = parse_config(emit_config(c));
  EXPECT_EQ(back.shift, c.shift);
  EXPECT_EQ(back.p, c.p);
  EXPECT_EQ(back.weights, c.weights);
  EXPECT_EQ(back.family.cubes, c.family.cubes);
  EXPECT_EQ(back.mesh_level, c.mesh_level);
  EXPECT_EQ(back.series.r, c.series.r);
  EXPECT_EQ(back.bessel.epsilons, c.bessel.epsilons);
  EXPECT_EQ(back.conditions.weight, c.conditions.weight);
}

TEST(Config, Rejects)
{
  EXPECT_THROW(parse_config("{\"problem\": {\"dd\": 1}}"), ParseError);
  EXPECT_THROW(parse_config("{\"extra\": 1}"), ParseError);
  EXPECT_THROW(parse_config("{\"problem\": {\"d\": \"one\"}}"), ParseError);
  EXPECT_THROW(parse_config("{"), ParseError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), ParseError);
}

TEST(Generators, Tower)
{
  ExperimentConfig c;
  c.d = 2;
  c.shift = {0, 0};
  c.family = {"tower", -2, 5, {}, {}};
  const auto cubes = generate_cubes(c);
  ASSERT_EQ(cubes.size(), 8u);
  for (std::size_t i = 0; i < cubes.size(); ++i) {
    EXPECT_EQ(cubes[i].level, -2 + static_cast<int>(i));
    EXPECT_EQ(corner(cubes[i]), (std::vector<Rational>{0, 0}));
  }
  EXPECT_EQ(build_family(c).eta, 0.75);
}

TEST(Generators, AnnuliOutward)
{
  ExperimentConfig c;
  c.family = {"annuli", 0, 4, {}, {}};
  const auto cubes = generate_cubes(c);
  ASSERT_EQ(cubes.size(), 5u);
  for (std::size_t i = 0; i + 1 < cubes.size(); ++i) EXPECT_GT(cubes[i].level, cubes[i + 1].level);
  for (const auto& q : cubes) EXPECT_EQ(corner(q, 0), side_length_exact(q));
  EXPECT_EQ(build_family(c).eta, 1.0);
}

TEST(Generators, FullTreeAndLevel)
{
  ExperimentConfig c;
  c.d = 2;
  c.shift = {0, 0};
  c.family = {"full_tree", 0, 3, {}, {}};
  EXPECT_EQ(generate_cubes(c).size(), 1u + 4 + 16 + 64);
  c.family = {"level", 3, 3, {}, {}};
  c.radius = "1";
  EXPECT_EQ(generate_cubes(c).size(), 256u);
  c.family.generator = "spiral";
  EXPECT_THROW(generate_cubes(c), ParseError);
}

TEST(Generators, FileRoundTrip)
{
  const auto dir = scratch("family");
  ExperimentConfig c;
  c.family = {"tower", 0, 6, {}, {}};
  const auto fam = build_family(c);
  const auto path = dir / "fam.txt";
  {
    std::ofstream f(path);
    f << serialize_family(fam);
  }
  ExperimentConfig d = c;
  d.family = {"file", {}, {}, {}, path.string()};
  EXPECT_EQ(family_hash(build_family(d)), family_hash(fam));
  fs::remove_all(dir);
}

TEST(Report, NumbersAndHash)
{
  EXPECT_EQ(num(kInf), "inf");
  EXPECT_EQ(num(-kInf), "-inf");
  EXPECT_EQ(num(std::nan("")), "nan");
  EXPECT_EQ(num(1.5), 1.5);
  json a{{"value", 1.0}, {"timestamp", "then"}};
  json b{{"value", 1.0}, {"timestamp", "now"}, {"report_hash", "x"}};
  EXPECT_EQ(canonical_hash(a), canonical_hash(b));
  b["value"] = 2.0;
  EXPECT_NE(canonical_hash(a), canonical_hash(b));
  EXPECT_EQ(hex64(0xcbf29ce484222325ull), "cbf29ce484222325");
}

TEST(Report, ExitCodes)
{
  EXPECT_EQ(exit_code_for(ParseError("x")), kConfigError);
  EXPECT_EQ(exit_code_for(DomainError("x")), kConfigError);
  EXPECT_EQ(exit_code_for(QuadratureError("x")), kNumericError);
  EXPECT_EQ(exit_code_for(std::runtime_error("x")), kNumericError);
}

TEST(Report, RunCommandInProcess)
{
  ExperimentConfig c;
  c.family = {"tower", 0, 6, {}, {}};
  c.k_max = 6;
  c.variant = "sup";
  const auto out = run_command(c);
  EXPECT_EQ(out.report["command"], "a0");
  EXPECT_EQ(out.report["report_hash"], canonical_hash(out.report));
  EXPECT_TRUE(out.report["family_hash"].is_string());
  c.command = "nope";
  EXPECT_THROW(run_command(c), ParseError);
}

TEST(Binary, EveryConfigRuns)
{
  const auto dir = scratch("all");
  const std::map<std::string, std::string> sub{{"bessel", "scaling"},
                                               {"conditions_p_le_q", "p-le-q"},
                                               {"conditions_q_lt_p", "q-lt-p"}};
  for (const auto& path : config_files()) {
    const std::string stem = path.stem().string();
    if (stem == "bessel") continue;  // covered below, subcommand by subcommand
    const std::string cmd = stem.substr(0, stem.find('_'));
    std::string args = cmd + " ";
    if (sub.count(stem)) args += sub.at(stem) + " ";
    EXPECT_EQ(run_cli(args + path.string() + " --out " + dir.string()), 0) << stem;
  }
  for (const char* mode : {"scaling", "bounds", "majorant"})
    EXPECT_EQ(run_cli(std::string("bessel ") + mode + " " + kConfigs + "/bessel.json --out " + dir.string()), 0)
        << mode;
  EXPECT_TRUE(fs::exists(dir / "a0.json"));
  EXPECT_TRUE(fs::exists(dir / "bessel_scaling.json"));
  EXPECT_TRUE(fs::exists(dir / "bessel_kernel_table.csv"));
  fs::remove_all(dir);
}

TEST(Binary, Deterministic)
{
  const auto dir = scratch("det");
  const std::string cfg = kConfigs + "/verify_tower.json";
  ASSERT_EQ(run_cli("verify " + cfg + " --out " + (dir / "a").string()), 0);
  ASSERT_EQ(run_cli("verify " + cfg + " --out " + (dir / "b").string()), 0);
  const auto a = read_json(dir / "a" / "verify.json"), b = read_json(dir / "b" / "verify.json");
  EXPECT_EQ(a["report_hash"], b["report_hash"]);
  ASSERT_EQ(run_cli("verify " + cfg + " --seed 8 --out " + (dir / "c").string()), 0);
  EXPECT_NE(read_json(dir / "c" / "verify.json")["report_hash"], a["report_hash"]);
  fs::remove_all(dir);
}

TEST(Binary, Overrides)
{
  const auto dir = scratch("over");
  const auto cfg = dir / "tower.json";
  {
    // family levels default to the window, so the depth override moves both
    std::ofstream f(cfg);
    f << "{\"family\": {\"generator\": \"tower\"}, \"window\": {\"k_min\": 0, \"k_max\": 10}}";
  }
  ASSERT_EQ(run_cli("a0 " + cfg.string() + " --window-depth 6 --out " + dir.string()), 0);
  const auto rep = read_json(dir / "a0.json");
  EXPECT_EQ(rep["config"]["window"]["k_max"], 6);
  // a family deeper than the overridden window is a config error
  EXPECT_EQ(run_cli("a0 " + kConfigs + "/a0_tower.json --window-depth 6 --out " + dir.string()), 2);
  fs::remove_all(dir);
}

TEST(Binary, ConfigErrorsExitTwo)
{
  const auto dir = scratch("err");
  const auto bad = dir / "bad.json";
  {
    std::ofstream f(bad);
    f << "{\"problem\": {\"unknown\": 3}}";
  }
  EXPECT_EQ(run_cli("a0 " + bad.string() + " --out " + dir.string()), 2);
  EXPECT_EQ(run_cli("a0 " + (dir / "missing.json").string()), 2);
  EXPECT_EQ(run_cli("frobnicate"), 2);
  EXPECT_EQ(run_cli("bessel sideways " + kConfigs + "/bessel.json"), 2);
  const auto domain = dir / "domain.json";
  {
    std::ofstream f(domain);
    f << "{\"problem\": {\"p\": [0.5, 2]}}";
  }
  EXPECT_EQ(run_cli("a0 " + domain.string() + " --out " + dir.string()), 2);
  fs::remove_all(dir);
}
