#include "tace/config.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace tace;

TEST(Presets, AllNamesResolve) {
  for (const auto& name : preset_names()) {
    Preset p = make_preset(name);
    p.train.validate();
    if (p.env.multi_agent) {
      EXPECT_GE(p.env.mpe.agent_count, 1);
    } else {
      EXPECT_GE(p.env.grid.goals.size(), 2u);
    }
  }
  EXPECT_THROW(make_preset("grid999"), InputError);
}

TEST(Presets, ReferenceHyperparameters) {
  Preset p = make_preset("grid50");
  EXPECT_DOUBLE_EQ(p.train.policy_lr, 0.000018);
  EXPECT_DOUBLE_EQ(p.train.value_lr, 0.00012);
  EXPECT_DOUBLE_EQ(p.train.gamma, 0.99);
  EXPECT_DOUBLE_EQ(p.train.clip_epsilon, 0.20);
  EXPECT_EQ(p.train.episodes_per_iter, 8);
  EXPECT_EQ(p.train.epochs_per_iter, 65);
  EXPECT_EQ(p.train.memory_capacity, 5);
  EXPECT_DOUBLE_EQ(p.train.sigma_init, 0.5);
  EXPECT_EQ(p.env.grid.max_steps, 160);

  EXPECT_EQ(make_preset("grid70").env.grid.max_steps, 220);
  EXPECT_EQ(make_preset("mpe70").env.mpe.base.max_steps, 240);
}

TEST(Config, JsonRoundTrip) {
  TrainConfig t;
  t.policy_lr = 3.25e-4;
  t.goal_count = 3;
  t.kernel_family = KernelFamily::laplace;
  t.estimator = MmdEstimator::unbiased;
  t.hidden_dims = {32, 16};
  nlohmann::json j = config_to_json(t);
  TrainConfig back;
  apply_config_json(back, j);
  EXPECT_EQ(config_to_json(back).dump(), j.dump());
}

TEST(Config, UnknownKeyRejected) {
  TrainConfig t;
  nlohmann::json j;
  j["polcy_lr"] = 1e-4;  // typo must fail loudly
  EXPECT_THROW(apply_config_json(t, j), InputError);
}

TEST(Config, FileOverlayAppliesSection) {
  const auto path =
      (std::filesystem::temp_directory_path() / "tace_cfg.json").string();
  {
    std::ofstream out(path);
    out << R"({"grid20": {"policy_lr": 9e-5, "max_episode_len": 64},
               "grid50": {"sigma_init": 0.42}})";
  }
  Preset p20 = load_preset("grid20", path);
  EXPECT_DOUBLE_EQ(p20.train.policy_lr, 9e-5);
  EXPECT_EQ(p20.env.grid.max_steps, 64);
  Preset p50 = load_preset("grid50", path);
  EXPECT_DOUBLE_EQ(p50.train.sigma_init, 0.42);
  // untouched sections keep preset values
  EXPECT_EQ(p50.env.grid.max_steps, 160);
  std::remove(path.c_str());
}

TEST(Algorithms, NamesAndModes) {
  EXPECT_EQ(algorithm_from_string("tcppo"), Algorithm::tcppo);
  EXPECT_EQ(algorithm_from_string("ippo"), Algorithm::ippo);
  EXPECT_THROW(algorithm_from_string("dqn"), InputError);
  EXPECT_TRUE(is_constrained(Algorithm::tcppo));
  EXPECT_TRUE(is_constrained(Algorithm::tcmae));
  EXPECT_FALSE(is_constrained(Algorithm::ppo));
  EXPECT_FALSE(is_constrained(Algorithm::ippo));
  EXPECT_TRUE(is_multi_agent(Algorithm::tcmae));
  EXPECT_FALSE(is_multi_agent(Algorithm::ppo));
}
