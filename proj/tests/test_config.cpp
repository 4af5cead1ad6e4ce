#include <filesystem>
#include <string>

#include <gtest/gtest.h>

#include "psfunmix/config.hpp"
#include "psfunmix/errors.hpp"

using namespace psfunmix;

namespace {

const std::filesystem::path kConfigDir = PSFUNMIX_CONFIG_DIR;

constexpr const char* kMinimal = R"({
  "grid": {"T": 2.0, "N": 401},
  "support": {"Delta": 0.1, "spikes": [3, 2]},
  "params": {"theta": [0.03, 0.08]}
})";

std::string with(const std::string& extra) {
  std::string s = kMinimal;
  s.insert(s.rfind('}'), ",\n" + extra);
  return s;
}

}  // namespace

TEST(Config, ShippedConfigsParse) {
  for (const char* name : {"fig1.json", "fig2.json", "fig3.json", "libs_synth.json"}) {
    const auto c = load_config(kConfigDir / name);
    EXPECT_EQ(c.family, "lorentz") << name;
    EXPECT_NE(c.hash(), 0u) << name;
  }
  const auto fig2 = load_config(kConfigDir / "fig2.json");
  EXPECT_EQ(fig2.delta_list(), (std::vector<double>{1e-3, 5e-4, 2.5e-4}));
  EXPECT_EQ(fig2.certify.lipschitz.samples, 21);
  EXPECT_EQ(fig2.landscape.resolution, 41);
  const auto s = fig2.setup();
  EXPECT_EQ(s.support.spike_counts(), (std::vector<int>{10, 5}));
  EXPECT_NEAR(s.Delta(), 1e-3, 1e-15);
  const auto fig3 = load_config(kConfigDir / "fig3.json");
  EXPECT_EQ(fig3.montecarlo.trials, 50);
  EXPECT_EQ(fig3.montecarlo.bins, 12);
  const auto libs = load_config(kConfigDir / "libs_synth.json");
  EXPECT_EQ(libs.libs.seeds, 20);
  EXPECT_EQ(libs.libs.baseline.smoothness, 1e5);
}

TEST(Config, MinimalConfigDefaults) {
  const auto c = parse_config(kMinimal);
  const auto s = c.setup();
  EXPECT_EQ(s.truth.eta, uniform_amplitudes(s.support));
  EXPECT_EQ(c.solver.method, SolveMethod::LevenbergMarquardt);
  EXPECT_EQ(c.seed, 1u);
  ASSERT_TRUE(c.Delta.has_value());
  EXPECT_EQ(c.delta_list(), std::vector<double>{0.1});
  // the declared recipe is rebuilt, not rescaled, at a new separation
  EXPECT_NEAR(c.setup_at(0.2).Delta(), 0.2, 1e-15);
  EXPECT_EQ(c.setup_at(0.2).support.all_locations(),
            interleaved_support({3, 2}, 0.2).all_locations());
}

TEST(Config, SolverAndSeedPropagate) {
  const auto c = parse_config(with(R"("solver": {"method": "gd", "step": 0.5}, "seed": 9)"));
  EXPECT_EQ(c.solver.method, SolveMethod::GradientDescent);
  EXPECT_EQ(c.montecarlo.solver.method, SolveMethod::GradientDescent);
  EXPECT_EQ(c.libs.fit.solver.step, 0.5);
  EXPECT_EQ(c.montecarlo.seed, 9u);
  EXPECT_EQ(c.libs.synthetic.seed, 9u);
}

TEST(Config, MalformedJsonReportsLine) {
  try {
    parse_config("{\n  \"grid\": {\"T\": 2.0,\n  \"N\": }\n}");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(Config, ValidationErrors) {
  const std::vector<std::string> bad{
      with(R"("kernel": {"family": "voigt"})"),
      with(R"("solver": {"method": "newton"})"),
      with(R"("solver": {"lm_scaling": "none"})"),
      with(R"("solver": {"max_iters": 1.5})"),
      with(R"("experiment": {"deltas": [0.1, -0.2]})"),
      with(R"("threads": "four")"),
      R"({"grid": {"T": -1, "N": 10}})",
      R"({"grid": {"T": 1}})",
      R"({"grid": {"T": 2.0, "N": 401}, "support": {"spikes": [1]}})",
      R"({"grid": {"T": 2.0, "N": 401}, "support": {"Delta": 0.1, "spikes": [3, 2]},
          "params": {"theta": [0.03]}})",
      R"({"grid": {"T": 2.0, "N": 401}, "support": {"Delta": 0.1, "spikes": [3, 2]},
          "params": {"theta": [0.03, 0.08], "eta": [1, 1]}})",
      R"({"grid": {"T": 2.0, "N": 401}, "support": {"Delta": 0.1, "spikes": [3, 2]},
          "params": {"theta": [0.03, 100.0]}})",
      R"([1, 2])",
  };
  for (const auto& text : bad) EXPECT_THROW(parse_config(text), ValidationError) << text;
  EXPECT_THROW(parse_config(R"({"grid": {"T": 2.0, "N": 401}})").setup(), ValidationError);
  EXPECT_THROW(load_config(kConfigDir / "missing.json"), Error);
}

TEST(Config, HashIgnoresFormattingButNotValues) {
  const auto a = parse_config(kMinimal);
  const auto b = parse_config(
      R"({"params":{"theta":[0.03,0.08]},"support":{"spikes":[3,2],"Delta":0.1},"grid":{"N":401,"T":2.0}})");
  const auto c = parse_config(R"({"params":{"theta":[0.03,0.08]},"support":{"spikes":[3,2],"Delta":0.1},"grid":{"N":401,"T":2.5}})");
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_NE(a.hash(), c.hash());
  EXPECT_EQ(a.hash(), parse_config(kMinimal).hash());
}
