#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>
#include <sys/wait.h>
#include <unistd.h>

#include "ksadv/cli/experiments.hpp"

using namespace ksadv;
using namespace ksadv::cli;
namespace fs = std::filesystem;

namespace {
constexpr double pi = std::numbers::pi;

const char* kZeroSim = R"([experiment]
name = simulate
[grid]
L1 = pi
L2 = pi
N1 = 16
N2 = 16
[stepper]
dt = 1e-3
t_end = 0.05
record_every = 5
[initial]
kind = zero
)";

const char* kRandomSim = R"([experiment]
name = simulate
seed = 11
[grid]
L1 = 2*pi
L2 = 3*pi/2
N1 = 16
N2 = 16
[flow]
kind = alternating_shear
amplitude = 3
period = 0.1
[stepper]
dt = 1e-3
t_end = 0.2
record_every = 20
[initial]
kind = random
l2 = 0.5
mean = 0.25
)";

class Workspace {
 public:
  Workspace() : dir_(fs::temp_directory_path() / ("ksadv_cli_" + std::to_string(::getpid()) + "_" + next())) {
    fs::create_directories(dir_);
  }
  ~Workspace() {
    std::error_code ec;
    fs::remove_all(dir_, ec);
  }
  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(dir_ / name, std::ios::binary) << text;
    return dir_ / name;
  }
  const fs::path& dir() const { return dir_; }

 private:
  static std::string next() {
    static int n = 0;
    return std::to_string(n++);
  }
  fs::path dir_;
};

int run_binary(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + KSADV_RUN_BINARY + " " + args + " >/dev/null 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string slurp(const fs::path& p) { return read_file(p); }

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}
}  // namespace

TEST(Config, RealExpressions) {
  EXPECT_DOUBLE_EQ(parse_real("pi"), pi);
  EXPECT_DOUBLE_EQ(parse_real(" 4*pi "), 4 * pi);
  EXPECT_DOUBLE_EQ(parse_real("3*pi/2"), 1.5 * pi);
  EXPECT_DOUBLE_EQ(parse_real("1e-3"), 1e-3);
  EXPECT_DOUBLE_EQ(parse_real("-2.5"), -2.5);
  EXPECT_THROW(parse_real("2pi"), ConfigError);
  EXPECT_THROW(parse_real(""), ConfigError);
  EXPECT_THROW(parse_real("1/0"), ConfigError);
  EXPECT_EQ(parse_real_list("0, 10,50", "x"), (std::vector<double>{0, 10, 50}));
}

TEST(Config, ParsesSections) {
  const auto c = parse_config(kRandomSim);
  EXPECT_EQ(c.experiment, Experiment::simulate);
  EXPECT_EQ(c.seed, 11u);
  EXPECT_DOUBLE_EQ(c.grid.L2, 1.5 * pi);
  EXPECT_EQ(c.flow.kind, FlowKind::alternating_shear);
  EXPECT_DOUBLE_EQ(c.flow.period, 0.1);
  EXPECT_EQ(c.initial.kind, InitialKind::random);
  EXPECT_EQ(c.record_every, 20u);
  EXPECT_EQ(c.text, kRandomSim);
}

TEST(Config, RejectsBeforeCompute) {
  const std::string base = "[experiment]\nname = simulate\n";
  EXPECT_THROW(parse_config(base + "[grid]\nN3 = 4\n"), ConfigError);
  EXPECT_THROW(parse_config(base + "[mesh]\nN1 = 4\n"), ConfigError);
  EXPECT_THROW(parse_config("stray = 1\n" + base), ConfigError);
  EXPECT_THROW(parse_config("[experiment]\nname = nonsense\n"), ConfigError);
  EXPECT_THROW(parse_config("[grid]\nN1 = 16\n"), ConfigError);
  EXPECT_THROW(parse_config(base + "[grid]\nN1 = 15\n"), ConfigError);
  EXPECT_THROW(parse_config(base + "[grid]\nL1 = -pi\n"), ConfigError);
  EXPECT_THROW(parse_config(base + "[stepper]\ndt = 0\n"), ConfigError);
  EXPECT_THROW(parse_config(base + "[stepper]\nscheme = RK45\n"), ConfigError);
  EXPECT_THROW(parse_config(base + "[flow]\nkind = vortex\n"), ConfigError);
  EXPECT_THROW(parse_config(base + "[flow]\nkind = user_spectral\n"), ConfigError);
  EXPECT_THROW(parse_config(base + "[initial]\nkind = single_mode\nk1 = 11\n"), ConfigError);
  EXPECT_THROW(parse_config(base + "[dissipation]\nprobes = 10\n"), ConfigError);
  EXPECT_THROW(parse_config(base + "[dissipation]\namplitudes = 1, x\n"), ConfigError);
  EXPECT_THROW(parse_config(base + "[grid]\nN1 = 16\nN1 = 16\n"), ConfigError);
  EXPECT_NO_THROW(parse_config(base + "# comment\n[grid]\nN1 = 16 \n"));
}

TEST(Config, FlowAndInitialData) {
  auto c = parse_config(kRandomSim);
  const auto v = make_flow(c);
  EXPECT_EQ(v.kind(), FlowKind::alternating_shear);
  EXPECT_DOUBLE_EQ(v.amplitude(), 3.0);
  EXPECT_DOUBLE_EQ(make_flow(c, 7.0).amplitude(), 7.0);
  const auto g = grid_of(c);
  const auto a = make_initial(c, g), b = make_initial(c, g);
  EXPECT_EQ((a - b).max_abs(), 0.0);
  EXPECT_NEAR(a.mean(), 0.25, 1e-15);
  EXPECT_NEAR(l2_norm(project_mean_free(a)), 0.5, 1e-12);
  c.seed = 12;
  EXPECT_GT((make_initial(c, g) - a).max_abs(), 0.0);
}

TEST(Report, EmptyRunSetIsHeaderOnly) { EXPECT_EQ(emit_report({}), "# ksadv run report\n"); }

TEST(Report, NamesStatementAndTabulates) {
  const auto md = emit_report({{"dissipation-sweep", "dissipation time", {}, {{{"amplitude", "tau*"}, {{"0", "11"}}}}}});
  EXPECT_NE(md.find("## dissipation-sweep"), std::string::npos);
  EXPECT_NE(md.find("Exercises: dissipation time"), std::string::npos);
  EXPECT_NE(md.find("| amplitude | tau* |\n| --- | --- |\n| 0 | 11 |"), std::string::npos);
}

TEST(Manifest, Sha256KnownVectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Runner, ZeroDataGivesZeroTrajectory) {
  Workspace ws;
  const auto cfg = ws.write("zero.ini", kZeroSim);
  const auto out = ws.dir() / "out";
  ASSERT_EQ(run_binary("--config " + cfg.string() + " --out " + out.string()), 0);
  EXPECT_EQ(first_line(out / "trajectory.csv"), "t,l2,h1dot,h2dot,mean,energy_residual,cum_h2");
  std::ifstream in(out / "trajectory.csv");
  std::string line;
  std::getline(in, line);
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(line.substr(line.find(',')), ",0,0,0,0,0,0") << line;
  }
  EXPECT_EQ(rows, 11);
  EXPECT_EQ(slurp(out / "config.ini"), kZeroSim);
}

TEST(Runner, ManifestHashesEveryFile) {
  Workspace ws;
  const auto cfg = ws.write("sim.ini", kRandomSim);
  const auto out = ws.dir() / "out";
  ASSERT_EQ(run_binary("--config " + cfg.string() + " --out " + out.string()), 0);
  const auto m = nlohmann::json::parse(slurp(out / "manifest.json"));
  EXPECT_EQ(m["experiment"], "simulate");
  EXPECT_EQ(m["config_sha256"], sha256_hex(kRandomSim));
  std::set<std::string> listed;
  for (const auto& f : m["files"]) {
    listed.insert(f["path"].get<std::string>());
    EXPECT_EQ(f["sha256"], sha256_file(out / f["path"].get<std::string>()));
    EXPECT_EQ(f["bytes"], fs::file_size(out / f["path"].get<std::string>()));
  }
  for (const auto& e : fs::directory_iterator(out))
    if (e.path().filename() != "manifest.json") EXPECT_TRUE(listed.count(e.path().filename().string()));
  EXPECT_TRUE(listed.count("report.md"));
  EXPECT_TRUE(listed.count("config.ini"));
}

TEST(Runner, BitIdenticalAcrossRunsAndThreadCounts) {
  Workspace ws;
  const auto cfg = ws.write("sim.ini", kRandomSim);
  const auto a = ws.dir() / "a", b = ws.dir() / "b", c = ws.dir() / "c";
  ASSERT_EQ(run_binary("--config " + cfg.string() + " --out " + a.string()), 0);
  ASSERT_EQ(run_binary("--config " + cfg.string() + " --out " + b.string() + " --threads 3"), 0);
  ASSERT_EQ(run_binary("--config " + cfg.string() + " --out " + c.string() + " --seed 12"), 0);
  for (const char* f : {"trajectory.csv", "report.md", "manifest.json"}) EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  EXPECT_NE(slurp(a / "trajectory.csv"), slurp(c / "trajectory.csv"));
  EXPECT_EQ(nlohmann::json::parse(slurp(c / "manifest.json"))["seed"], 12);
}

TEST(Runner, OutputDirectoryFromEnvironment) {
  Workspace ws;
  const auto cfg = ws.write("zero.ini", kZeroSim);
  const auto out = ws.dir() / "env_out";
  ASSERT_EQ(run_binary("--config " + cfg.string(), "KSADV_OUT=" + out.string()), 0);
  EXPECT_TRUE(fs::exists(out / "manifest.json"));
}

TEST(Runner, ExitCodes) {
  Workspace ws;
  const auto out = ws.dir() / "out";
  EXPECT_EQ(run_binary("--config " + (ws.dir() / "missing.ini").string() + " --out " + out.string()), 2);
  const auto bad = ws.write("bad.ini", std::string(kZeroSim) + "[stepper]\nwarp = 9\n");
  EXPECT_EQ(run_binary("--config " + bad.string() + " --out " + out.string()), 2);
  EXPECT_FALSE(fs::exists(out));
  EXPECT_EQ(run_binary("--config " + bad.string() + " --experiment nope --out " + out.string()), 2);
  EXPECT_EQ(run_binary("--bogus"), 2);

  // dt above the CFL limit of the flow
  std::string text = kRandomSim;
  text.replace(text.find("amplitude = 3"), 13, "amplitude = 900");
  EXPECT_EQ(run_binary("--config " + ws.write("cfl.ini", text).string() + " --out " + out.string()), 2);

  // growth on the 4 pi box trips the L2 ceiling
  const auto grow = ws.write("grow.ini", R"([experiment]
name = simulate
[grid]
L1 = 4*pi
L2 = 4*pi
N1 = 16
N2 = 16
[stepper]
dt = 0.05
t_end = 60
equation = linear_ks
l2_ceiling = 10
[initial]
kind = single_mode
k1 = 1
k2 = 0
amplitude = 1
)");
  EXPECT_EQ(run_binary("--config " + grow.string() + " --out " + (ws.dir() / "grow").string()), 3);
  EXPECT_TRUE(fs::exists(ws.dir() / "grow" / "manifest.json"));

  // global envelopes on a growing-mode box
  const auto env = ws.write("env.ini", "[experiment]\nname = lemma-envelopes\n[grid]\nL1 = 4*pi\nL2 = pi\nN1 = 16\nN2 = 16\n");
  EXPECT_EQ(run_binary("--config " + env.string() + " --out " + (ws.dir() / "env").string()), 4);
  const auto consts = nlohmann::json::parse(slurp(ws.dir() / "env" / "constants.json"));
  EXPECT_TRUE(consts["gamma2"].is_null());
  EXPECT_FALSE(consts["growing_modes"].empty());
}

TEST(Runner, UserFlowFileRelativeToConfig) {
  Workspace ws;
  ws.write("cells.flow", "# k1 k2 v1 v2\n0 1 0.5 0 0 0\n1 1 0 0.25 0 -0.25\n");
  const std::string text = R"([experiment]
name = simulate
[grid]
N1 = 16
N2 = 16
[flow]
kind = user_spectral
file = cells.flow
amplitude = 2
[stepper]
t_end = 0.05
[initial]
l2 = 0.3
)";
  const auto cfg = ws.write("flow.ini", text);
  const auto c = load_config(cfg);
  EXPECT_EQ(make_flow(c).kind(), FlowKind::user_spectral);
  EXPECT_DOUBLE_EQ(make_flow(c).amplitude(), 2.0);
  EXPECT_EQ(run_binary("--config " + cfg.string() + " --out " + (ws.dir() / "a").string()), 0);

  std::string missing = text;
  missing.replace(missing.find("cells.flow"), 10, "nope.flow");
  EXPECT_EQ(run_binary("--config " + ws.write("m.ini", missing).string() + " --out " + (ws.dir() / "b").string()), 2);
  EXPECT_FALSE(fs::exists(ws.dir() / "b"));
  ws.write("div.flow", "1 0 1 0 0 0\n");
  std::string div = text;
  div.replace(div.find("cells.flow"), 10, "div.flow");
  EXPECT_EQ(run_binary("--config " + ws.write("d.ini", div).string() + " --out " + (ws.dir() / "c").string()), 2);
}

TEST(Runner, ExperimentOverride) {
  Workspace ws;
  const auto cfg = ws.write("zero.ini", kZeroSim);
  const auto out = ws.dir() / "out";
  ASSERT_EQ(run_binary("--config " + cfg.string() + " --experiment lemma-envelopes --out " + out.string()), 0);
  EXPECT_EQ(first_line(out / "envelopes.csv"), "lemma,s,t,measured,bound");
  const auto j = nlohmann::json::parse(slurp(out / "constants.json"));
  EXPECT_DOUBLE_EQ(j["beta"].get<double>(), 12.0);
  EXPECT_EQ(j["lemmas"].size(), 4u);
}

TEST(Runner, DecayStudyCertifiesSmallDataOnPiBox) {
  Workspace ws;
  const auto cfg = ws.write("decay.ini", R"([experiment]
name = decay-study
seed = 4
[grid]
L1 = pi
L2 = pi
N1 = 16
N2 = 16
[stepper]
dt = 1e-3
t_end = 1
record_every = 50
[initial]
kind = random
l2 = 0.05
mean = 0.1
)");
  const auto out = ws.dir() / "out";
  ASSERT_EQ(run_binary("--config " + cfg.string() + " --out " + out.string()), 0);
  const auto j = nlohmann::json::parse(slurp(out / "certificates.json"));
  EXPECT_DOUBLE_EQ(j["mu"].get<double>(), 3.0);
  EXPECT_NEAR(j["tau_star"].get<double>(), std::log(2.0) / 16.0, 1e-2 * std::log(2.0) / 16.0);
  EXPECT_TRUE(j["chain"]["all_certified"].get<bool>());
  EXPECT_GE(j["chain"]["window_count"].get<int>(), 20);
  EXPECT_TRUE(j["global_bound"]["holds"].get<bool>());
  EXPECT_NE(slurp(out / "report.md").find("decay-study"), std::string::npos);
}

TEST(Runner, DissipationSweepFormats) {
  Workspace ws;
  const auto cfg = ws.write("sweep.ini", R"([experiment]
name = dissipation-sweep
[grid]
L1 = 3*pi/2
L2 = 3*pi/2
N1 = 16
N2 = 16
[flow]
kind = steady_shear
[dissipation]
amplitudes = 0, 2
)");
  const auto out = ws.dir() / "out";
  ASSERT_EQ(run_binary("--config " + cfg.string() + " --out " + out.string()), 0);
  EXPECT_EQ(first_line(out / "sweep.csv"), "flow,amplitude,s,t,norm_estimate");
  std::ifstream in(out / "summary.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "flow,amplitude,tau_star,method");
  std::vector<double> tau;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string flow, amp, t, method;
    std::getline(ss, flow, ',');
    std::getline(ss, amp, ',');
    std::getline(ss, t, ',');
    std::getline(ss, method, ',');
    tau.push_back(std::stod(t));
    EXPECT_TRUE(method == "power_iteration" || method == "random_probe");
  }
  ASSERT_EQ(tau.size(), 2u);
  const double tau0 = std::log(2.0) / std::pow(4.0 / 3.0, 4);
  EXPECT_NEAR(tau[0], tau0, 0.01 * tau0);
  EXPECT_LE(tau[1], tau0 * 1.01);
}

TEST(Runner, PicardVerifyReportsContraction) {
  Workspace ws;
  const auto cfg = ws.write("picard.ini", R"([experiment]
name = picard-verify
seed = 2
[grid]
L1 = pi
L2 = pi
N1 = 16
N2 = 16
[flow]
kind = steady_shear
amplitude = 1
[stepper]
dt = 1e-4
[initial]
kind = random
l2 = 0.5
[picard]
nodes = 64
bilinear_pairs = 20
bilinear_nodes = 32
)");
  const auto out = ws.dir() / "out";
  ASSERT_EQ(run_binary("--config " + cfg.string() + " --out " + out.string()), 0);
  const auto j = nlohmann::json::parse(slurp(out / "picard.json"));
  for (const char* k : {"T", "iterations", "contraction_ratio", "residual", "eta1", "eta2", "delta"})
    EXPECT_TRUE(j.contains(k)) << k;
  EXPECT_LT(j["contraction_ratio"].get<double>(), 1.0);
  EXPECT_LE(j["integrator_gap"].get<double>(), 1e-6);
  EXPECT_EQ(first_line(out / "picard_gaps.csv"), "iteration,gap");
}
