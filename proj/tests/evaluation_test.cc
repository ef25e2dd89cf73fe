#include <gtest/gtest.h>

#include "funcanon/error.hpp"
#include "funcanon/evaluation.hpp"
#include "funcanon/fixtures.hpp"
#include "funcanon/pipeline.hpp"
#include "funcanon/random.hpp"

namespace funcanon {
namespace {

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::kInvalidArgument;
}

TrialOutcome outcome(std::vector<bool> stages, int plan_length = 2) {
  return {"s", 0, 0, plan_length, std::move(stages), {}};
}

// n outcomes failing stage 1, k failing stage 2, the rest succeeding.
std::vector<TrialOutcome> synthetic(int fail1, int fail2, int pass) {
  std::vector<TrialOutcome> out;
  for (int i = 0; i < fail1; ++i) out.push_back(outcome({false}));
  for (int i = 0; i < fail2; ++i) out.push_back(outcome({true, false}));
  for (int i = 0; i < pass; ++i) out.push_back(outcome({true, true}));
  return out;
}

TEST(Metrics, StageRatesCompose) {
  const Metrics m = compute_metrics(synthetic(9, 6, 10));
  EXPECT_EQ(m.trials, 25);
  EXPECT_DOUBLE_EQ(100.0 * m.sub1_sr, 64.0);
  ASSERT_TRUE(m.sub2_sr);
  EXPECT_DOUBLE_EQ(100.0 * *m.sub2_sr, 62.5);
  EXPECT_DOUBLE_EQ(100.0 * m.sr, 40.0);
  EXPECT_NEAR(m.sr, m.sub1_sr * *m.sub2_sr, 1e-15);
}

TEST(Metrics, AllPass) {
  const Metrics m = compute_metrics(synthetic(0, 0, 25));
  EXPECT_EQ(m.sr, 1.0);
  EXPECT_EQ(m.sub1_sr, 1.0);
  EXPECT_EQ(*m.sub2_sr, 1.0);
}

TEST(Metrics, Sub2NullWithoutSub1) {
  const Metrics m = compute_metrics(synthetic(5, 0, 0));
  EXPECT_FALSE(m.sub2_sr.has_value());
  EXPECT_TRUE(metrics_to_json(m).at("sub2_sr").is_null());
  EXPECT_EQ(m.sr, 0.0);
}

TEST(Metrics, IdentitiesOnRandomSets) {
  Rng rng(1);
  for (int i = 0; i < 500; ++i) {
    const int a = static_cast<int>(rng.index(20)), b = static_cast<int>(rng.index(20)),
              c = static_cast<int>(rng.index(20));
    if (a + b + c == 0) continue;
    const Metrics m = compute_metrics(synthetic(a, b, c));
    EXPECT_LE(m.sr, m.sub1_sr);
    EXPECT_EQ(m.sub1, b + c);
    EXPECT_EQ(m.sub2, c);
    if (m.sub1 == 0) {
      EXPECT_FALSE(m.sub2_sr);
    } else {
      EXPECT_DOUBLE_EQ(*m.sub2_sr, static_cast<double>(m.sub2) / m.sub1);
      EXPECT_NEAR(m.sr, m.sub1_sr * *m.sub2_sr, 1e-12);
    }
    for (double v : {m.sr, m.sub1_sr, m.sub2_sr.value_or(0.0)}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Metrics, ErroredTrialsFail) {
  auto o = outcome({true, true});
  o.error = "boom";
  EXPECT_FALSE(o.success());
  EXPECT_FALSE(outcome({true}).success());
}

TEST(MeanStd, PopulationAndNulls) {
  const auto s = mean_std({0.2, 0.4, std::nullopt, 0.6});
  EXPECT_NEAR(*s.mean, 0.4, 1e-15);
  EXPECT_NEAR(*s.std, std::sqrt(0.08 / 3.0), 1e-15);
  EXPECT_FALSE(mean_std({std::nullopt}).mean);
}

// Kettle and teapot manifests from label-selected functional sets, kettle as anchor.
struct World {
  std::vector<AlignmentManifest> manifests;
  std::vector<Demonstration> demos;
};

World make_world() {
  World w;
  const auto kettle = fixtures::make_kettle();
  const auto teapot = fixtures::make_teapot();
  AnchorRegistry reg;
  for (const auto* f : {&kettle, &teapot}) {
    const PointCloud cloud = normalize_model(f->cloud).first;
    for (const auto& [verb, label] : {std::pair{"grasp", "handle"}, std::pair{"pour", "spout"}}) {
      FunctionalSet fs{f->object_id, f->category, verb, Role::kActive, {}, {}};
      FunctionalRegion r;
      for (std::size_t i = 0; i < f->labels.size(); ++i)
        if (f->labels[i] == label) r.point_indices.push_back(i);
      fs.regions.push_back(r);
      if (f == &kettle) reg.register_vector("vessel", functional_vector(fs, cloud));
      w.manifests.push_back(canonicalize(f->object_id, "vessel", cloud, fs, reg).manifest);
    }
  }
  w.demos.push_back(fixtures::make_grasp_demo("grasp-0", kettle, rot_z(0.4), 1));
  w.demos.push_back(fixtures::make_pour_demo("pour-0", kettle, "cup", rot_z(0.4),
                                             SE3Pose::from_translation({0.6, 0, 0}), 2));
  return w;
}

JudgeContext context_for(const World& w) {
  JudgeContext ctx{w.manifests, {}};
  for (const auto& d : w.demos) ctx.add_reference(d);
  return ctx;
}

Scenario scenario_for(const std::string& vessel, const SE3Pose& vessel_pose) {
  Scenario s;
  s.scenario_id = "pour water / " + vessel;
  s.plan = {"pour water", {{1, "grasp", kGripperActor, vessel}, {2, "pour", vessel, "cup"}}};
  s.placements = {{vessel, vessel_pose},
                  {"cup", SE3Pose::from_translation({0.6, 0, 0})},
                  {kGripperActor, SE3Pose::from_translation({0, 0, 0.8})}};
  return s;
}

TEST(Judge, ReferenceDemoOnItsObjectSucceeds) {
  const World w = make_world();
  const auto ctx = context_for(w);
  const Demonstration& pour = w.demos[1];
  const Scenario s = scenario_for("kettle", pour.actor_pose);
  EXPECT_TRUE(judge_subtask(pour.trajectory, s, pour.primitive, ctx));
}

TEST(Judge, DisplacedFinalWaypointFails) {
  const World w = make_world();
  const auto ctx = context_for(w);
  const Demonstration& pour = w.demos[1];
  const Scenario s = scenario_for("kettle", pour.actor_pose);
  auto wps = pour.trajectory.waypoints();
  wps.back() = wps.back().with_translation(wps.back().translation() + Vec3(0.05, 0, 0));
  EXPECT_FALSE(judge_subtask(Trajectory(wps, pour.trajectory.gripper(), FrameTag::world()), s, pour.primitive, ctx));
  // a shift inside the tolerance still passes
  wps.back() = pour.trajectory.back().with_translation(pour.trajectory.back().translation() + Vec3(0.01, 0, 0));
  EXPECT_TRUE(judge_subtask(Trajectory(wps, pour.trajectory.gripper(), FrameTag::world()), s, pour.primitive, ctx));
}

TEST(Judge, TransferredTrajectoryOnTargetSucceeds) {
  const World w = make_world();
  const auto ctx = context_for(w);
  const TransferExecutor exec(w.demos, w.manifests);
  const Scenario s = scenario_for("teapot", compose(SE3Pose::from_translation({0.1, -0.2, 0}), rot_z(2.0)));
  for (const auto& step : s.plan.steps) EXPECT_TRUE(judge_subtask(exec.execute(s, step, 0), s, step, ctx));
}

TEST(Judge, MissingFrame) {
  const World w = make_world();
  const auto ctx = context_for(w);
  Scenario s = scenario_for("kettle", SE3Pose());
  const AVOPrimitive unknown{2, "pour", "vase", "cup"};
  s.placements["vase"] = SE3Pose();
  EXPECT_EQ(code_of([&] { judge_subtask(w.demos[1].trajectory, s, unknown, ctx); }), ErrorCode::kFrameMissing);
  JudgeContext empty{w.manifests, {}};
  EXPECT_EQ(code_of([&] { judge_subtask(w.demos[1].trajectory, s, w.demos[1].primitive, empty); }),
            ErrorCode::kFrameMissing);
}

TEST(Evaluate, NoiselessTransferAlwaysSucceeds) {
  const World w = make_world();
  const auto ctx = context_for(w);
  const TransferExecutor exec(w.demos, w.manifests);
  EvalOptions opts;
  opts.trials = 5;
  const auto report = evaluate({scenario_for("kettle", SE3Pose()), scenario_for("teapot", SE3Pose())}, exec, ctx, opts);
  EXPECT_EQ(report.outcomes.size(), 30u);
  EXPECT_EQ(*report.sr.mean, 1.0);
  EXPECT_EQ(*report.sr.std, 0.0);
  EXPECT_EQ(*report.sub2_sr.mean, 1.0);
  EXPECT_TRUE(report.errors.empty());
  EXPECT_EQ(report.per_seed.size(), 3u);
}

TEST(Evaluate, DeterministicAndOrderIndependent) {
  const World w = make_world();
  const auto ctx = context_for(w);
  const TransferExecutor exec(w.demos, w.manifests, TransferMethod::kOffset, 0.01);
  EvalOptions opts;
  opts.trials = 8;
  const std::vector<Scenario> sc{scenario_for("kettle", SE3Pose()), scenario_for("teapot", SE3Pose())};
  const auto a = evaluate(sc, exec, ctx, opts).to_json();
  opts.parallel = false;
  const auto b = evaluate({sc[1], sc[0]}, exec, ctx, opts).to_json();
  EXPECT_EQ(a.dump(), b.dump());
  EXPECT_EQ(a.at("schema_version"), EvalReport::kSchemaVersion);
}

TEST(Evaluate, FailuresRecordedNotFatal) {
  const World w = make_world();
  const auto ctx = context_for(w);
  const TransferExecutor exec(w.demos, w.manifests);
  Scenario broken = scenario_for("vase", SE3Pose());
  Scenario unplaced = scenario_for("kettle", SE3Pose());
  unplaced.placements.erase("cup");
  unplaced.scenario_id = "unplaced";
  EvalOptions opts;
  opts.trials = 2;
  opts.seeds = {7};
  const auto report = evaluate({broken, unplaced, scenario_for("teapot", SE3Pose())}, exec, ctx, opts);
  EXPECT_EQ(report.per_scenario.at("pour water / teapot").sr, 1.0);
  EXPECT_EQ(report.per_scenario.at("pour water / vase").sr, 0.0);
  EXPECT_FALSE(report.per_scenario.contains("unplaced"));
  EXPECT_EQ(report.errors.size(), 3u);  // two vase trials and the invalid scenario
}

TEST(Scenario, ValidationAndJson) {
  Scenario s = scenario_for("kettle", rot_z(0.3));
  EXPECT_NO_THROW(s.validate());
  const Scenario back = scenario_from_json(scenario_to_json(s));
  EXPECT_EQ(scenario_to_json(back), scenario_to_json(s));
  s.tolerances.position = 0.0;
  EXPECT_EQ(code_of([&] { s.validate(); }), ErrorCode::kInvalidArgument);
  s = scenario_for("kettle", SE3Pose());
  s.placements.erase("kettle");
  EXPECT_EQ(code_of([&] { s.validate(); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(parse_variation("category"), VariationLevel::kCategory);
}

TEST(Defaults, ProtocolAndTolerances) {
  const EvalOptions o;
  EXPECT_EQ(o.trials, 25);
  EXPECT_EQ(o.seeds.size(), 3u);
  const Tolerances t;
  EXPECT_EQ(t.position, 0.02);
  EXPECT_EQ(t.orientation, 0.1);
}

TEST(PipelineConfig, StrictSections) {
  const json objects = json::array({{{"object_id", "kettle"}, {"category", "vessel"}, {"cloud", "kettle.json"}}});
  const json base = {{"seed", 3}, {"objects", objects}};
  EXPECT_EQ(PipelineConfig::from_json(base).seed, 3u);
  EXPECT_EQ(code_of([] { PipelineConfig::from_json(json{{"objects", json::array()}}); }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([&] {
              json j = base;
              j["colour"] = "red";
              PipelineConfig::from_json(j);
            }),
            ErrorCode::kParseError);
  EXPECT_EQ(code_of([&] {
              json j = base;
              j["train"] = {{"epoch", 3}};
              PipelineConfig::from_json(j);
            }),
            ErrorCode::kParseError);
  const auto cfg = PipelineConfig::from_json(json{{"objects", objects}, {"train", {{"enabled", false}, {"lr", 0.5}}},
                                                  {"evaluate", {{"executors", {"transfer"}}}}});
  EXPECT_FALSE(cfg.train_enabled);
  EXPECT_EQ(cfg.train.lr, 0.5);
  EXPECT_EQ(cfg.train.batch, 64);
  EXPECT_EQ(code_of([&] { PipelineConfig::from_json(json{{"objects", objects}, {"train", {{"enabled", false}}}}); }),
            ErrorCode::kInvalidArgument);
}

}  // namespace
}  // namespace funcanon
