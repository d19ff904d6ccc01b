#include <gtest/gtest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include "omnistereo/io/attention_io.hpp"
#include "omnistereo/io/pfm.hpp"
#include "omnistereo/omnistereo.hpp"

using namespace omnistereo;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string output;  // stdout and stderr interleaved
};

RunResult run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + OMNISTEREO_CLI + std::string(" ") + args + " 2>&1";
  RunResult r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (pipe == nullptr) return r;
  char buf[4096];
  std::size_t n = 0;
  while ((n = std::fread(buf, 1, sizeof(buf), pipe)) > 0) r.output.append(buf, n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::map<std::string, std::string> key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / ("omnistereo_test_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir_);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<float> u(0.5f, 9.0f);
    io::PfmImage img{64, 32, 1, {}};
    for (int k = 0; k < 64 * 32; ++k) img.data.push_back(u(rng));
    io::write_pfm(path("pano.pfm"), img);
    io::PfmImage cas{32, 64, 1, {}};
    for (int k = 0; k < 32 * 64; ++k) cas.data.push_back(u(rng));
    io::write_pfm(path("depth.pfm"), cas);
  }
  static void TearDownTestSuite() { fs::remove_all(dir_); }
  static std::string path(const std::string& name) { return (dir_ / name).string(); }
  static fs::path dir_;
};

fs::path Cli::dir_;

}  // namespace

TEST_F(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run("--help").code, 0);
  auto r = run("");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("omnistereo: error[usage]:"), std::string::npos);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("convert --in " + path("pano.pfm")).code, 2);  // missing --out and --to
  EXPECT_EQ(run("match --left a --right b --baseline 1 --cost nope").code, 2);
  EXPECT_EQ(run("--threads 0 eval --pred a --gt b").code, 2);
}

TEST_F(Cli, FormatAndIoErrorsExitThree) {
  auto r = run("eval --pred " + path("missing.pfm") + " --gt " + path("depth.pfm"));
  EXPECT_EQ(r.code, 3);
  io::write_file(path("trunc.pfm"), io::read_file(path("depth.pfm")).substr(0, 100));
  r = run("eval --pred " + path("trunc.pfm") + " --gt " + path("depth.pfm"));
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.output.find("error[format]"), std::string::npos);
  EXPECT_NE(r.output.find("at byte"), std::string::npos);
  io::write_file(path("bad_rig.json"), "{\"schema_version\": 9}");
  EXPECT_EQ(run("pipeline --rig " + path("bad_rig.json") + " --out " + path("x.pfm")).code, 3);
}

TEST_F(Cli, DomainErrorsExitFour) {
  // 200 hypotheses do not fit a 64-column image.
  auto r = run("match --left " + path("pano.pfm") + " --right " + path("pano.pfm") +
               " --baseline 1 --max-disp 200 --out-disp " + path("d.pfm") + " --out-conf " + path("c.pfm"));
  EXPECT_EQ(r.code, 4);
  EXPECT_NE(r.output.find("error[domain]"), std::string::npos);
  r = run("eval --pred " + path("pano.pfm") + " --gt " + path("depth.pfm"));  // 64x32 vs 32x64
  EXPECT_EQ(r.code, 4);
  EXPECT_EQ(run("to-depth --disp " + path("pano.pfm") + " --baseline -1 --out " + path("z.pfm")).code, 4);
}

TEST_F(Cli, IdentityConvertIsBitwiseCopy) {
  const auto r = run("convert --in " + path("pano.pfm") + " --out " + path("same.pfm") + " --from erp --to erp --interp nearest");
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(io::read_file(path("same.pfm")), io::read_file(path("pano.pfm")));
}

TEST_F(Cli, EvalIdenticalMaps) {
  auto r = run("eval --pred " + path("depth.pfm") + " --gt " + path("depth.pfm") + " --kind depth --json " +
               path("m.json"));
  ASSERT_EQ(r.code, 0) << r.output;
  const auto kv = key_values(r.output);
  EXPECT_EQ(kv.at("kind"), "depth");
  EXPECT_EQ(std::stod(kv.at("mae")), 0.0);
  EXPECT_EQ(std::stod(kv.at("delta1")), 100.0);
  EXPECT_EQ(std::stod(kv.at("count")), 2048.0);
  EXPECT_NE(io::read_file(path("m.json")).find("\"abs_rel\""), std::string::npos);
  r = run("eval --pred " + path("depth.pfm") + " --gt " + path("depth.pfm") + " --kind disparity");
  EXPECT_EQ(std::stod(key_values(r.output).at("px1")), 0.0);
}

TEST_F(Cli, AttentionOracleAgrees) {
  ASSERT_EQ(run("attn-init --out " + path("p.bin") + " --channels 4 --heads 2 --span 5").code, 0);
  FeatureMap<double> x = FeatureMap<double>::zeros(8, 3, 4);
  for (std::size_t k = 0; k < x.data.size(); ++k) x.data[k] = std::sin(0.37 * static_cast<double>(k));
  io::write_pfm(path("t.pfm"), io::tensor_to_pfm(x));
  const auto r = run("attn --tensor " + path("t.pfm") + " --params " + path("p.bin") + " --channels 4 --out " +
                     path("y.pfm") + " --oracle");
  ASSERT_EQ(r.code, 0) << r.output;
  const auto kv = key_values(r.output);
  EXPECT_LE(std::stod(kv.at("oracle_max_abs_diff")), 1e-12);
  EXPECT_GT(std::stod(kv.at("multiplies")), 0.0);
  const auto y = io::tensor_from_pfm(io::read_pfm(path("y.pfm")), 4);
  EXPECT_EQ(y.height, 8);
  EXPECT_EQ(y.width, 3);
}

TEST_F(Cli, ThreadEnvironmentVariableDoesNotChangeOutput) {
  const std::string args = "convert --in " + path("pano.pfm") + " --from erp --to cassini --rot 10,20,30 --out ";
  ASSERT_EQ(run(args + path("a.pfm"), "OMNISTEREO_THREADS=1").code, 0);
  ASSERT_EQ(run(args + path("b.pfm"), "OMNISTEREO_THREADS=5").code, 0);
  ASSERT_EQ(run(args + path("c.pfm") + " --threads 3", "OMNISTEREO_THREADS=bogus").code, 0);
  EXPECT_EQ(io::read_file(path("a.pfm")), io::read_file(path("b.pfm")));
  EXPECT_EQ(io::read_file(path("a.pfm")), io::read_file(path("c.pfm")));
}

TEST_F(Cli, VizWritesPng) {
  ASSERT_EQ(run("viz --in " + path("depth.pfm") + " --out " + path("v.png") + " --min 0 --max 10").code, 0);
  EXPECT_EQ(io::read_file(path("v.png")).substr(1, 3), "PNG");
  EXPECT_EQ(run("viz --in " + path("depth.pfm") + " --out " + path("v.png") + " --cmap nope").code, 2);
}
