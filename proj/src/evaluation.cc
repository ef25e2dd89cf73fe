#include "funcanon/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numbers>

#include "funcanon/error.hpp"
#include "funcanon/random.hpp"

namespace funcanon {

std::string variation_name(VariationLevel v) {
  switch (v) {
    case VariationLevel::kPose:
      return "pose";
    case VariationLevel::kInstance:
      return "instance";
    case VariationLevel::kCategory:
      return "category";
  }
  return "pose";
}

VariationLevel parse_variation(const std::string& text) {
  if (text == "pose") return VariationLevel::kPose;
  if (text == "instance") return VariationLevel::kInstance;
  if (text == "category") return VariationLevel::kCategory;
  throw Error(ErrorCode::kInvalidArgument, "variation must be pose, instance or category, got '" + text + "'");
}

void Scenario::validate() const {
  if (!(tolerances.position > 0.0) || !(tolerances.orientation > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, scenario_id + ": tolerances must be positive");
  }
  if (plan.steps.empty()) throw Error(ErrorCode::kInvalidArgument, scenario_id + ": empty plan");
  for (const auto& s : plan.steps) {
    for (const auto* id : {&s.actor, &s.object}) {
      if (!placements.contains(*id)) {
        throw Error(ErrorCode::kInvalidArgument, scenario_id + ": '" + *id + "' has no placement");
      }
    }
  }
}

json scenario_to_json(const Scenario& s) {
  json placements = json::object();
  for (const auto& [id, p] : s.placements) placements[id] = pose_to_json(p);
  return {{"scenario_id", s.scenario_id},
          {"plan", plan_to_json(s.plan)},
          {"placements", placements},
          {"variation", variation_name(s.variation)},
          {"tolerances", {{"position", s.tolerances.position}, {"orientation", s.tolerances.orientation}}}};
}

Scenario scenario_from_json(const json& j) {
  Scenario s;
  try {
    s.scenario_id = j.at("scenario_id").get<std::string>();
    s.plan = plan_from_json(j.at("plan"));
    for (const auto& [id, p] : j.at("placements").items()) s.placements.emplace(id, pose_from_json(p));
    s.variation = parse_variation(j.value("variation", std::string("pose")));
    if (j.contains("tolerances")) {
      s.tolerances.position = j["tolerances"].value("position", s.tolerances.position);
      s.tolerances.orientation = j["tolerances"].value("orientation", s.tolerances.orientation);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("scenario: ") + e.what());
  }
  s.validate();
  return s;
}

SE3Pose functional_offset_pose(const SE3Pose& world, const SE3Pose& placement, const AlignmentManifest& manifest) {
  const SE3Pose canonical = compose(manifest.frame().pose, compose(invert(placement), world));
  return canonical.with_translation(canonical.translation() - manifest.canonical_vector().v);
}

namespace {

const AlignmentManifest* entity_manifest(const std::vector<AlignmentManifest>& manifests,
                                         const AVOPrimitive& primitive) {
  return find_manifest(manifests, functional_entity(primitive), primitive.verb, Role::kActive);
}

}  // namespace

void JudgeContext::add_reference(const Demonstration& demo) {
  const auto* m = find_manifest(manifests, demo.source_object_id, demo.primitive.verb, Role::kActive);
  if (m == nullptr) {
    throw Error(ErrorCode::kFrameMissing, "no functional frame for " + demo.source_object_id + " under " +
                                              demo.primitive.verb);
  }
  references[demo.primitive.verb] =
      functional_offset_pose(demo.trajectory.waypoints().back(), entity_pose(demo), *m);
}

bool judge_subtask(const Trajectory& executed, const Scenario& scenario, const AVOPrimitive& primitive,
                   const JudgeContext& context) {
  if (!executed.frame().is_world()) {
    throw Error(ErrorCode::kFrameMismatch, "judged trajectory must be in the world frame");
  }
  const std::string& entity = functional_entity(primitive);
  const auto* m = entity_manifest(context.manifests, primitive);
  if (m == nullptr) {
    throw Error(ErrorCode::kFrameMissing, "no functional frame for " + entity + " under " + primitive.verb);
  }
  auto placement = scenario.placements.find(entity);
  if (placement == scenario.placements.end()) {
    throw Error(ErrorCode::kFrameMissing, entity + " is not placed in " + scenario.scenario_id);
  }
  auto ref = context.references.find(primitive.verb);
  if (ref == context.references.end()) {
    throw Error(ErrorCode::kFrameMissing, "no reference pose for " + primitive.verb);
  }
  const SE3Pose got = functional_offset_pose(executed.waypoints().back(), placement->second, *m);
  const double dt = (got.translation() - ref->second.translation()).norm();
  const double dr = rotation_distance(got.rotation(), ref->second.rotation());
  return dt <= scenario.tolerances.position && dr <= scenario.tolerances.orientation;
}

TransferExecutor::TransferExecutor(std::vector<Demonstration> demos, std::vector<AlignmentManifest> manifests,
                                   TransferMethod method, double noise)
    : demos_(std::move(demos)), manifests_(std::move(manifests)), method_(method), noise_(noise) {
  std::sort(demos_.begin(), demos_.end(), [](const auto& a, const auto& b) { return a.demo_id < b.demo_id; });
}

Trajectory TransferExecutor::execute(const Scenario& scenario, const AVOPrimitive& primitive,
                                     std::uint64_t seed) const {
  auto demo = std::find_if(demos_.begin(), demos_.end(),
                           [&](const Demonstration& d) { return d.primitive.verb == primitive.verb; });
  if (demo == demos_.end()) throw Error(ErrorCode::kInvalidArgument, "no demonstration for " + primitive.verb);
  const auto* src = find_manifest(manifests_, demo->source_object_id, primitive.verb, Role::kActive);
  const auto* dst = entity_manifest(manifests_, primitive);
  if (src == nullptr || dst == nullptr) {
    throw Error(ErrorCode::kFrameMissing, "no functional frame for " +
                                              (src == nullptr ? demo->source_object_id : functional_entity(primitive)));
  }
  const TransferRecord r = transfer_demo(*demo, *src, *dst, method_);
  Trajectory world = to_world_frame(r.transferred, dst->frame(), scenario.placements.at(dst->object_id));
  if (noise_ <= 0.0) return world;
  Rng rng(seed);
  std::vector<SE3Pose> noisy;
  for (const auto& w : world.waypoints()) noisy.push_back(w.with_translation(w.translation() + noise_ * rng.normal_vector(3)));
  return Trajectory(std::move(noisy), world.gripper(), FrameTag::world());
}

Eigen::VectorXd instance_feature(const std::string& object_id, int dim) {
  return stub_embedding(object_id, dim, 0x5eed);
}

PolicyExecutor::PolicyExecutor(PolicyCheckpoint checkpoint, std::vector<AlignmentManifest> manifests)
    : checkpoint_(std::move(checkpoint)), manifests_(std::move(manifests)) {}

Trajectory PolicyExecutor::execute(const Scenario& scenario, const AVOPrimitive& primitive, std::uint64_t seed) const {
  const auto* m = entity_manifest(manifests_, primitive);
  if (m == nullptr) {
    throw Error(ErrorCode::kFrameMissing,
                "no functional frame for " + functional_entity(primitive) + " under " + primitive.verb);
  }
  const PolicyDims& d = checkpoint_.dims;
  const PolicyState state =
      encode_state(checkpoint_.encoder, scenario.placements.at(primitive.actor), scenario.placements.at(primitive.object),
                   instance_feature(primitive.actor, d.feature_dim), instance_feature(primitive.object, d.feature_dim),
                   primitive.verb);
  const Eigen::VectorXd chunk = sample_action(checkpoint_, state, seed);
  const Trajectory functional = decode_chunk(chunk, m->canonical_vector().v, FrameTag::functional(m->object_id));
  return to_world_frame(functional, m->frame(), scenario.placements.at(m->object_id));
}

bool TrialOutcome::success() const {
  return error.empty() && static_cast<int>(stages.size()) == plan_length &&
         std::all_of(stages.begin(), stages.end(), [](bool b) { return b; });
}

Metrics compute_metrics(const std::vector<TrialOutcome>& outcomes) {
  Metrics m;
  m.trials = static_cast<int>(outcomes.size());
  for (const auto& o : outcomes) {
    if (!o.stages.empty() && o.stages[0]) ++m.sub1;
    if (o.stages.size() > 1 && o.stages[0] && o.stages[1]) ++m.sub2;
    if (o.success()) ++m.full;
  }
  if (m.trials > 0) {
    m.sr = static_cast<double>(m.full) / m.trials;
    m.sub1_sr = static_cast<double>(m.sub1) / m.trials;
  }
  if (m.sub1 > 0) m.sub2_sr = static_cast<double>(m.sub2) / m.sub1;
  return m;
}

MeanStd mean_std(const std::vector<std::optional<double>>& values) {
  std::vector<double> v;
  for (const auto& x : values) {
    if (x) v.push_back(*x);
  }
  if (v.empty()) return {};
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / static_cast<double>(v.size()))};
}

json metrics_to_json(const Metrics& m) {
  return {{"trials", m.trials},
          {"sub1_successes", m.sub1},
          {"sub2_successes", m.sub2},
          {"full_successes", m.full},
          {"sr", m.sr},
          {"sub1_sr", m.sub1_sr},
          {"sub2_sr", m.sub2_sr ? json(*m.sub2_sr) : json(nullptr)}};
}

namespace {

json mean_std_json(const MeanStd& s) {
  return {{"mean", s.mean ? json(*s.mean) : json(nullptr)}, {"std", s.std ? json(*s.std) : json(nullptr)}};
}

Scenario perturbed(const Scenario& s, Rng& rng, double jitter) {
  Scenario out = s;
  for (auto& [id, pose] : out.placements) {
    const double yaw = rng.uniform(-std::numbers::pi, std::numbers::pi);
    const Vec3 shift(rng.uniform(-jitter, jitter), rng.uniform(-jitter, jitter), 0.0);
    pose = compose(SE3Pose::from_translation(shift), compose(pose, rot_z(yaw)));
  }
  return out;
}

std::vector<TrialOutcome> run_scenario(const Scenario& scenario, const Executor& executor,
                                       const JudgeContext& context, const EvalOptions& options) {
  std::vector<TrialOutcome> out;
  for (std::uint64_t seed : options.seeds) {
    for (int trial = 0; trial < options.trials; ++trial) {
      TrialOutcome o{scenario.scenario_id, seed, trial, static_cast<int>(scenario.plan.steps.size()), {}, {}};
      const std::uint64_t trial_seed = derive_seed(seed, scenario.scenario_id, static_cast<std::uint64_t>(trial));
      Rng rng(trial_seed);
      try {
        const Scenario placed = perturbed(scenario, rng, options.placement_jitter);
        for (std::size_t k = 0; k < placed.plan.steps.size(); ++k) {
          const AVOPrimitive& step = placed.plan.steps[k];
          const Trajectory executed = executor.execute(placed, step, derive_seed(trial_seed, "step", k));
          const bool ok = judge_subtask(executed, placed, step, context);
          o.stages.push_back(ok);
          if (!ok) break;
        }
      } catch (const Error& e) {
        o.error = e.what();
      }
      out.push_back(std::move(o));
    }
  }
  return out;
}

}  // namespace

EvalReport evaluate(const std::vector<Scenario>& scenarios, const Executor& executor, const JudgeContext& context,
                    const EvalOptions& options) {
  if (options.trials < 1 || options.seeds.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "evaluation needs at least one trial and one seed");
  }
  EvalReport report;
  report.executor = executor.name();
  report.options = options;

  std::vector<std::vector<TrialOutcome>> per(scenarios.size());
  std::vector<std::string> invalid(scenarios.size());
  auto run_one = [&](std::size_t i) {
    try {
      scenarios[i].validate();
      per[i] = run_scenario(scenarios[i], executor, context, options);
    } catch (const Error& e) {
      invalid[i] = scenarios[i].scenario_id + ": " + e.what();
    }
  };
  if (options.parallel && scenarios.size() > 1) {
    std::vector<std::future<void>> jobs;
    for (std::size_t i = 0; i < scenarios.size(); ++i) jobs.push_back(std::async(std::launch::async, run_one, i));
    for (auto& j : jobs) j.get();
  } else {
    for (std::size_t i = 0; i < scenarios.size(); ++i) run_one(i);
  }

  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    report.tolerances[scenarios[i].scenario_id] = scenarios[i].tolerances;
    if (!invalid[i].empty()) report.errors.push_back(invalid[i]);
    for (auto& o : per[i]) {
      if (!o.error.empty()) {
        report.errors.push_back(o.scenario_id + " seed " + std::to_string(o.seed) + " trial " +
                                std::to_string(o.trial) + ": " + o.error);
      }
      report.outcomes.push_back(std::move(o));
    }
  }
  std::sort(report.outcomes.begin(), report.outcomes.end(), [](const auto& a, const auto& b) {
    return std::tie(a.scenario_id, a.seed, a.trial) < std::tie(b.scenario_id, b.seed, b.trial);
  });
  std::sort(report.errors.begin(), report.errors.end());

  std::map<std::uint64_t, std::vector<TrialOutcome>> by_seed;
  std::map<std::string, std::vector<TrialOutcome>> by_scenario;
  for (const auto& o : report.outcomes) {
    by_seed[o.seed].push_back(o);
    by_scenario[o.scenario_id].push_back(o);
  }
  std::vector<std::optional<double>> sr, sub1, sub2;
  for (const auto& [seed, outs] : by_seed) {
    const Metrics m = compute_metrics(outs);
    report.per_seed[seed] = m;
    sr.emplace_back(m.sr);
    sub1.emplace_back(m.sub1_sr);
    sub2.push_back(m.sub2_sr);
  }
  for (const auto& [id, outs] : by_scenario) report.per_scenario[id] = compute_metrics(outs);
  report.sr = mean_std(sr);
  report.sub1_sr = mean_std(sub1);
  report.sub2_sr = mean_std(sub2);
  return report;
}

json EvalReport::to_json() const {
  json seeds = json::array();
  for (const auto& [seed, m] : per_seed) {
    json j = metrics_to_json(m);
    j["seed"] = seed;
    seeds.push_back(j);
  }
  json scen = json::object();
  for (const auto& [id, m] : per_scenario) scen[id] = metrics_to_json(m);
  json tol = json::object();
  for (const auto& [id, t] : tolerances) tol[id] = {{"position", t.position}, {"orientation", t.orientation}};
  json outs = json::array();
  for (const auto& o : outcomes) {
    json j{{"scenario_id", o.scenario_id}, {"seed", o.seed},       {"trial", o.trial},
           {"stages", o.stages},           {"success", o.success()}};
    if (!o.error.empty()) j["error"] = o.error;
    outs.push_back(j);
  }
  return {{"schema_version", kSchemaVersion},
          {"executor", executor},
          {"trials_per_seed", options.trials},
          {"seeds", options.seeds},
          {"placement_jitter", options.placement_jitter},
          {"sr", mean_std_json(sr)},
          {"sub1_sr", mean_std_json(sub1_sr)},
          {"sub2_sr", mean_std_json(sub2_sr)},
          {"per_seed", seeds},
          {"per_scenario", scen},
          {"tolerances", tol},
          {"errors", errors},
          {"outcomes", outs}};
}

}  // namespace funcanon
