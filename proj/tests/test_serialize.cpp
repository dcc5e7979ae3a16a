#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "petbench/error.hpp"
#include "petbench/pipeline.hpp"
#include "petbench/serialize.hpp"
#include "test_util.hpp"

namespace petbench {
namespace {

namespace fs = std::filesystem;

Json reparse(const Json& j) { return Json::parse(j.dump()); }

ErrorKind kind_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::Io;
}

TEST(Serialize, NumberTags) {
  EXPECT_EQ(number_or_tag(INFINITY), "inf");
  EXPECT_EQ(number_or_tag(-INFINITY), "-inf");
  EXPECT_EQ(number_or_tag(NAN), "nan");
  EXPECT_TRUE(std::isnan(number_from_json(Json("nan"))));
  EXPECT_EQ(number_from_json(Json("-inf")), -INFINITY);
  EXPECT_EQ(number_from_json(Json(0.25)), 0.25);
  EXPECT_EQ(kind_of([] { number_from_json(Json("infinity")); }), ErrorKind::Config);
}

TEST(Serialize, RewardAndPolicyRoundTrip) {
  Rng rng(1);
  const auto r = testing::random_reward(3, 4, 2.0, rng);
  EXPECT_EQ(reward_from_json(reparse(to_json(r))), r);
  const auto p = testing::random_policy(3, 4, rng);
  EXPECT_EQ(policy_from_json(reparse(to_json(p))), p);
  const auto mu = testing::random_distribution(5, rng);
  EXPECT_EQ(distribution_from_json(reparse(to_json(mu))), mu);
}

TEST(Serialize, DatasetRoundTrip) {
  Rng rng(2);
  const auto d = testing::random_dataset(3, 4, 50, rng);
  EXPECT_EQ(dataset_from_json(reparse(to_json(d))), d);
  Json bad = to_json(d);
  bad["tuples"][0] = Json::array({0, 1});
  EXPECT_EQ(kind_of([&] { dataset_from_json(bad); }), ErrorKind::Config);
}

TEST(Serialize, WorldRoundTrip) {
  WorldConfig wc;
  wc.seed = 9;
  const World w = make_world(wc);
  const World back = world_from_json(reparse(to_json(w)));
  EXPECT_EQ(back.true_reward, w.true_reward);
  EXPECT_EQ(back.mu, w.mu);
  EXPECT_EQ(back.pair_dist, w.pair_dist);
  EXPECT_EQ(back.pi_ref, w.pi_ref);
  EXPECT_EQ(back.pi0, w.pi0);
  EXPECT_EQ(back.uncovered, w.uncovered);
  EXPECT_EQ(back.seed, w.seed);
  EXPECT_EQ(to_json(back.config), to_json(w.config));
}

TEST(Serialize, ConfigRoundTrips) {
  PetConfig pc;
  pc.beta = 3.5;
  pc.mode = PetMode::Sampled;
  EXPECT_EQ(to_json(pet_config_from_json(to_json(pc))), to_json(pc));
  OptConfig oc;
  oc.method = OptMethod::PolicyGradient;
  oc.eta = 0.2;
  EXPECT_EQ(to_json(opt_config_from_json(to_json(oc))), to_json(oc));
  TrainConfig tc;
  tc.init = RewardInit::Zero;
  EXPECT_EQ(to_json(train_config_from_json(to_json(tc))), to_json(tc));
  RunConfig rc = RunConfig::defaults();
  rc.seed = 77;
  EXPECT_EQ(to_json(run_config_from_json(reparse(to_json(rc)))), to_json(rc));
}

TEST(Serialize, UnknownFieldsRejected) {
  Json j = to_json(PetConfig{});
  j["betta"] = 1.0;
  EXPECT_EQ(kind_of([&] { pet_config_from_json(j); }), ErrorKind::Config);
  Json w = to_json(WorldConfig{});
  w["colour"] = "red";
  EXPECT_EQ(kind_of([&] { world_config_from_json(w); }), ErrorKind::Config);
  Json r = to_json(RunConfig::defaults());
  r["extra"] = 1;
  EXPECT_EQ(kind_of([&] { run_config_from_json(r); }), ErrorKind::Config);
}

TEST(Serialize, WrongTypesRejected) {
  Json j = to_json(PetConfig{});
  j["iterations"] = "many";
  EXPECT_EQ(kind_of([&] { pet_config_from_json(j); }), ErrorKind::Config);
  Json m = to_json(OptConfig{});
  m["method"] = "ppo";
  EXPECT_THROW(opt_config_from_json(m), Error);
}

TEST(Serialize, BoundReportTagsInfinity) {
  BoundReport b;
  b.rhs = INFINITY;
  b.coverage = INFINITY;
  b.coverage_unbounded = true;
  const Json j = reparse(to_json(b));
  EXPECT_EQ(j["rhs"], "inf");
  EXPECT_EQ(j["coverage"], "inf");
  EXPECT_EQ(j["coverage_is_estimate"], true);
}

TEST(Serialize, FileRoundTripAddsSchemaVersion) {
  const fs::path dir = fs::temp_directory_path() / "petbench_serialize_test";
  fs::create_directories(dir);
  Json j;
  j["a"] = 1;
  write_json_file(dir / "x.json", j);
  const Json back = read_json_file(dir / "x.json");
  EXPECT_EQ(back["schema_version"], kSchemaVersion);
  EXPECT_EQ(back["a"], 1);
  EXPECT_EQ(kind_of([&] { read_json_file(dir / "missing.json"); }), ErrorKind::Io);
  std::ofstream(dir / "broken.json") << "{not json";
  EXPECT_EQ(kind_of([&] { read_json_file(dir / "broken.json"); }), ErrorKind::Config);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace petbench
