#include "funcanon/pipeline.hpp"

#include <algorithm>
#include <numbers>
#include <set>

#include "funcanon/chat_client.hpp"
#include "funcanon/error.hpp"
#include "funcanon/random.hpp"

namespace funcanon {
namespace fs = std::filesystem;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorCode::kParseError, where + " must be an object");
  for (const auto& [k, _] : j.items()) {
    if (!allowed.contains(k)) throw Error(ErrorCode::kParseError, "unknown key '" + k + "' in " + where);
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

std::string query_tag(const std::string& object_id, const PipelineConfig::Query& q) {
  return object_id + "." + q.verb + "." + role_name(q.role);
}

struct LoadedObject {
  PipelineConfig::ObjectSpec spec;
  PointCloud cloud;  // normalized model
  ModelNormalization normalization;
  std::vector<std::string> labels;
};

LoadedObject load_object(const PipelineConfig::ObjectSpec& spec) {
  LoadedObject o{spec, {}, {}, {}};
  PointCloud raw;
  if (spec.cloud.extension() == ".ply") {
    raw = load_cloud(spec.cloud);
  } else {
    const json j = read_json_file(spec.cloud);
    raw = cloud_from_json(j);
    if (j.contains("labels")) o.labels = fixtures::fixture_from_json(j).labels;
  }
  std::tie(o.cloud, o.normalization) = normalize_model(raw);
  return o;
}

template <typename F>
auto stage(const std::string& name, const fs::path& out, F&& body) {
  try {
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    write_json_file(out / "failure.json", json{{"stage", name}, {"error", e.what()}});
    throw StageError(name, e.code(), e.what());
  } catch (const std::exception& e) {
    write_json_file(out / "failure.json", json{{"stage", name}, {"error", e.what()}});
    throw StageError(name, ErrorCode::kIoError, e.what());
  }
}

Scenario make_scenario(const PipelineConfig& c, const std::string& target, const std::string& anchor_category,
                       const std::string& target_category, const std::string& anchor) {
  RulesDecomposer rules;
  Scenario s;
  s.scenario_id = normalize_task(c.task) + " / " + target;
  s.plan = decompose(c.task, {target, c.receiver}, rules);
  s.placements[target] = SE3Pose::identity();
  s.placements[c.receiver] = SE3Pose::from_translation(Vec3(0.6, 0.0, 0.0));
  s.placements[kGripperActor] =
      SE3Pose(Eigen::AngleAxisd(std::numbers::pi, Vec3::UnitX()).toRotationMatrix(), Vec3(0.0, 0.0, 0.8));
  s.variation = target == anchor                     ? VariationLevel::kPose
                : target_category == anchor_category ? VariationLevel::kInstance
                                                     : VariationLevel::kCategory;
  s.tolerances = c.tolerances;
  return s;
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& j, const fs::path& base_dir) {
  PipelineConfig c;
  try {
    check_keys(j, {"seed", "output_dir", "category", "objects", "propose", "recognize", "align", "transfer", "train",
                   "evaluate"},
               "pipeline config");
    c.seed = j.value("seed", c.seed);
    if (j.contains("output_dir")) c.output_dir = resolve(base_dir, j["output_dir"].get<std::string>());
    c.category = j.value("category", c.category);
    for (const auto& o : j.at("objects")) {
      check_keys(o, {"object_id", "category", "cloud"}, "objects[]");
      c.objects.push_back({o.at("object_id").get<std::string>(), o.value("category", c.category),
                           resolve(base_dir, o.at("cloud").get<std::string>())});
    }
    if (const json p = j.value("propose", json::object()); true) {
      check_keys(p, {"provider", "m", "restarts", "append_coordinates"}, "propose");
      c.provider = p.value("provider", c.provider);
      c.m = p.value("m", c.m);
      c.proposal.restarts = p.value("restarts", c.proposal.restarts);
      c.proposal.append_coordinates = p.value("append_coordinates", c.proposal.append_coordinates);
    }
    if (const json r = j.value("recognize", json::object()); true) {
      check_keys(r, {"backend", "oracle_table", "cache", "queries"}, "recognize");
      c.backend = r.value("backend", c.backend);
      c.oracle_table = resolve(base_dir, r.value("oracle_table", std::string()));
      c.cache = resolve(base_dir, r.value("cache", std::string()));
      if (r.contains("queries")) {
        c.queries.clear();
        for (const auto& q : r["queries"]) {
          check_keys(q, {"verb", "role"}, "recognize.queries[]");
          c.queries.push_back({q.at("verb").get<std::string>(), parse_role(q.value("role", std::string("active")))});
        }
      }
    }
    if (const json a = j.value("align", json::object()); true) {
      check_keys(a, {"anchor", "normalization"}, "align");
      c.anchor = a.value("anchor", c.anchor);
      const std::string norm = a.value("normalization", std::string("point-mean"));
      if (norm == "point-mean") {
        c.normalization = VectorNormalization::kPointMean;
      } else if (norm == "region-count") {
        c.normalization = VectorNormalization::kRegionCount;
      } else {
        throw Error(ErrorCode::kInvalidArgument, "align.normalization must be point-mean or region-count");
      }
    }
    if (const json t = j.value("transfer", json::object()); true) {
      check_keys(t, {"demos", "targets", "method"}, "transfer");
      c.demos = resolve(base_dir, t.value("demos", std::string()));
      c.targets = t.value("targets", c.targets);
      c.method = parse_method(t.value("method", std::string("offset")));
    }
    if (json t = j.value("train", json::object()); true) {
      if (t.is_object() && t.contains("enabled")) {
        c.train_enabled = t["enabled"].get<bool>();
        t.erase("enabled");
      }
      c.train = TrainConfig::from_json(t);
    }
    if (const json e = j.value("evaluate", json::object()); true) {
      check_keys(e,
                 {"executors", "trials", "seeds", "placement_jitter", "position_tolerance", "orientation_tolerance",
                  "execution_noise", "task", "receiver"},
                 "evaluate");
      c.executors = e.value("executors", c.executors);
      c.eval.trials = e.value("trials", c.eval.trials);
      c.eval.seeds = e.value("seeds", c.eval.seeds);
      c.eval.placement_jitter = e.value("placement_jitter", c.eval.placement_jitter);
      c.tolerances.position = e.value("position_tolerance", c.tolerances.position);
      c.tolerances.orientation = e.value("orientation_tolerance", c.tolerances.orientation);
      c.execution_noise = e.value("execution_noise", c.execution_noise);
      c.task = e.value("task", c.task);
      c.receiver = e.value("receiver", c.receiver);
    }
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::kParseError, std::string("pipeline config: ") + ex.what());
  }
  if (c.objects.empty()) throw Error(ErrorCode::kInvalidArgument, "pipeline config lists no objects");
  if (c.m < 1) throw Error(ErrorCode::kInvalidArgument, "propose.m must be positive");
  if (c.backend != "oracle" && c.backend != "remote") {
    throw Error(ErrorCode::kInvalidArgument, "recognize.backend must be oracle or remote");
  }
  for (const auto& e : c.executors) {
    if (e != "transfer" && e != "policy") throw Error(ErrorCode::kInvalidArgument, "unknown executor '" + e + "'");
    if (e == "policy" && !c.train_enabled) {
      throw Error(ErrorCode::kInvalidArgument, "the policy executor needs training enabled");
    }
  }
  if (c.eval.trials < 1 || c.eval.seeds.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "evaluate needs at least one trial and one seed");
  }
  if (!(c.tolerances.position > 0.0) || !(c.tolerances.orientation > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "tolerances must be positive");
  }
  if (c.anchor.empty()) c.anchor = c.objects.front().object_id;
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  return from_json(read_json_file(path), path.parent_path());
}

std::vector<TrainingExample> build_training_set(const std::vector<TransferRecord>& records,
                                                const std::vector<Demonstration>& demos,
                                                const StateEncoder& encoder, const PolicyDims& dims) {
  std::vector<TrainingExample> out;
  for (const auto& r : records) {
    auto demo = std::find_if(demos.begin(), demos.end(), [&](const auto& d) { return d.demo_id == r.demo_id; });
    if (demo == demos.end()) throw Error(ErrorCode::kInvalidArgument, "record for unknown demo " + r.demo_id);
    AVOPrimitive p = demo->primitive;
    if (p.actor == demo->source_object_id) p.actor = r.target_object_id;
    if (p.object == demo->source_object_id) p.object = r.target_object_id;
    PolicyState s = encode_state(encoder, demo->actor_pose, demo->object_pose, instance_feature(p.actor, dims.feature_dim),
                                 instance_feature(p.object, dims.feature_dim), p.verb);
    out.push_back({std::move(s), encode_chunk(r.transferred, r.v_t.v, dims.horizon)});
  }
  return out;
}

json run_pipeline(const PipelineConfig& c) {
  const fs::path out = c.output_dir;
  fs::create_directories(out);
  fs::remove(out / "failure.json");
  json report{{"schema_version", 1}, {"seed", c.seed}, {"category", c.category}};
  json stages = json::object();
  std::vector<std::string> artifacts;
  auto persist = [&](const std::string& rel, const json& j) {
    write_json_file(out / rel, j);
    artifacts.push_back(rel);
  };

  // propose
  std::vector<LoadedObject> objects;
  std::map<std::string, std::vector<FunctionalRegion>> proposals;
  stage("propose", out, [&] {
    auto provider = make_feature_provider(c.provider);
    json summary = json::object();
    for (const auto& spec : c.objects) {
      LoadedObject o = load_object(spec);
      auto regions = propose_regions(o.cloud, *provider, c.m, derive_seed(c.seed, "propose:" + spec.object_id),
                                     c.proposal);
      json j = proposal_to_json(spec.object_id, c.m, regions);
      j["normalization"] = normalization_to_json(o.normalization);
      persist("proposals/" + spec.object_id + ".json", j);
      summary[spec.object_id] = regions.size();
      proposals[spec.object_id] = std::move(regions);
      objects.push_back(std::move(o));
    }
    stages["propose"] = {{"provider", c.provider}, {"m", c.m}, {"regions", summary}};
    return 0;
  });

  // recognize
  std::map<std::string, FunctionalSet> sets;
  stage("recognize", out, [&] {
    std::unique_ptr<ClassifierBackend> backend;
    std::shared_ptr<ResponseCache> cache;
    if (c.backend == "oracle") {
      if (c.oracle_table.empty()) {
        std::vector<std::string> cats;
        for (const auto& o : c.objects) cats.push_back(o.category);
        backend = std::make_unique<OracleClassifier>(fixtures::vessel_oracle_table(cats));
      } else {
        backend = std::make_unique<OracleClassifier>(OracleClassifier::from_json(read_json_file(c.oracle_table)));
      }
    } else {
      cache = c.cache.empty() ? std::make_shared<ResponseCache>() : std::make_shared<ResponseCache>(c.cache);
      backend = std::make_unique<RemoteClassifier>(ChatClient::from_environment(cache));
    }
    json summary = json::object();
    for (const auto& o : objects) {
      const auto& regions = proposals.at(o.spec.object_id);
      const auto labels =
          o.labels.empty() ? std::vector<std::string>(regions.size()) : label_regions(regions, o.labels);
      for (const auto& q : c.queries) {
        FunctionalSet fs = build_functional_set(o.spec.object_id, regions, o.cloud, labels, q.verb, q.role,
                                                o.spec.category, *backend);
        const std::string tag = query_tag(o.spec.object_id, q);
        persist("recognition/" + tag + ".json", functional_set_to_json(fs));
        std::vector<int> ids;
        for (const auto& r : fs.regions) ids.push_back(r.region_id);
        summary[tag] = ids;
        sets[tag] = std::move(fs);
      }
    }
    if (cache) cache->save();
    stages["recognize"] = {{"backend", c.backend}, {"accepted_regions", summary}};
    return 0;
  });

  // align
  std::vector<AlignmentManifest> manifests;
  stage("align", out, [&] {
    auto anchor = std::find_if(objects.begin(), objects.end(),
                               [&](const auto& o) { return o.spec.object_id == c.anchor; });
    if (anchor == objects.end()) throw Error(ErrorCode::kNoAnchor, "anchor " + c.anchor + " is not a listed object");
    json summary = json::array();
    for (const auto& q : c.queries) {
      AnchorRegistry registry;
      const FunctionalSet& anchor_set = sets.at(query_tag(c.anchor, q));
      if (anchor_set.empty()) continue;
      registry.register_vector(c.category, functional_vector(anchor_set, anchor->cloud, c.normalization));
      for (const auto& o : objects) {
        const FunctionalSet& fs = sets.at(query_tag(o.spec.object_id, q));
        if (fs.empty()) continue;
        Canonicalization canon = canonicalize(o.spec.object_id, c.category, o.cloud, fs, registry, c.normalization);
        json j = manifest_to_json(canon.manifest);
        j["normalization"] = normalization_to_json(o.normalization);
        persist("alignment/" + query_tag(o.spec.object_id, q) + ".json", j);
        summary.push_back(manifest_to_json(canon.manifest));
        manifests.push_back(std::move(canon.manifest));
      }
    }
    if (manifests.empty()) throw Error(ErrorCode::kNoAnchor, "no functional vectors for the anchor");
    stages["align"] = {{"anchor", c.anchor}, {"manifests", summary}};
    return 0;
  });

  // transfer
  std::vector<Demonstration> demos;
  AugmentResult augmented;
  stage("transfer", out, [&] {
    if (c.targets.empty()) throw Error(ErrorCode::kNoTargets, "the transfer stage has no target objects");
    if (c.demos.empty()) throw Error(ErrorCode::kInvalidArgument, "transfer.demos is not set");
    demos = load_demonstrations(c.demos);
    if (demos.empty()) throw Error(ErrorCode::kInvalidArgument, "no demonstrations in " + c.demos.string());
    augmented = augment_category(demos, c.targets, manifests, c.method);
    std::string lines;
    for (const auto& r : augmented.records) lines += transfer_record_to_json(r).dump() + "\n";
    write_text_file(out / "transfer/augmented.jsonl", lines);
    artifacts.push_back("transfer/augmented.jsonl");
    json failures = json::array();
    for (const auto& f : augmented.failures) {
      failures.push_back({{"demo_id", f.demo_id}, {"target_object_id", f.target_object_id}, {"error", f.message}});
    }
    persist("transfer/failures.json", failures);
    if (augmented.records.empty()) throw Error(ErrorCode::kInvalidArgument, "every transfer pair failed");
    stages["transfer"] = {{"method", method_name(c.method)},
                          {"demos", demos.size()},
                          {"targets", c.targets},
                          {"records", augmented.records.size()},
                          {"failures", failures}};
    return 0;
  });

  // train
  std::optional<PolicyCheckpoint> checkpoint;
  if (c.train_enabled) {
    stage("train", out, [&] {
      Vocabulary vocab;
      StateEncoder encoder(c.train.dims, vocab, derive_seed(c.seed, "encoder"));
      const auto dataset = build_training_set(augmented.records, demos, encoder, c.train.dims);
      std::string lines;
      for (const auto& ex : dataset) {
        lines += json{{"state", ex.state.to_json()}, {"chunk", vec_to_json(ex.chunk)}}.dump() + "\n";
      }
      write_text_file(out / "train/dataset.jsonl", lines);
      artifacts.push_back("train/dataset.jsonl");
      TrainResult result = train(dataset, c.train, derive_seed(c.seed, "train"));
      checkpoint = PolicyCheckpoint{c.train.dims,        c.train.schedule(), std::move(encoder),
                                    std::move(result.denoiser), c.train, std::move(result.loss_curve),
                                    std::move(result.normalizer)};
      persist("train/checkpoint.json", checkpoint->to_json());
      stages["train"] = {{"examples", dataset.size()},
                         {"epochs", c.train.epochs},
                         {"parameters", checkpoint->denoiser.parameter_count()},
                         {"config", c.train.to_json()},
                         {"initial_loss", checkpoint->loss_curve.empty() ? json(nullptr) : json(checkpoint->loss_curve.front())},
                         {"final_loss", checkpoint->loss_curve.empty() ? json(nullptr) : json(checkpoint->loss_curve.back())}};
      return 0;
    });
  }

  // evaluate
  stage("evaluate", out, [&] {
    auto anchor = std::find_if(c.objects.begin(), c.objects.end(),
                               [&](const auto& o) { return o.object_id == c.anchor; });
    std::vector<Scenario> scenarios;
    for (const auto& t : c.targets) {
      auto spec = std::find_if(c.objects.begin(), c.objects.end(), [&](const auto& o) { return o.object_id == t; });
      scenarios.push_back(make_scenario(c, t, anchor->category, spec == c.objects.end() ? "" : spec->category,
                                        c.anchor));
    }
    json scen = json::array();
    for (const auto& s : scenarios) scen.push_back(scenario_to_json(s));
    persist("evaluate/scenarios.json", scen);

    JudgeContext context{manifests, {}};
    std::set<std::string> seen;
    for (const auto& d : demos) {
      if (seen.insert(d.primitive.verb).second) context.add_reference(d);
    }
    json reports = json::object();
    for (const auto& name : c.executors) {
      std::unique_ptr<Executor> executor;
      if (name == "transfer") {
        executor = std::make_unique<TransferExecutor>(demos, manifests, c.method, c.execution_noise);
      } else {
        executor = std::make_unique<PolicyExecutor>(*checkpoint, manifests);
      }
      const EvalReport r = evaluate(scenarios, *executor, context, c.eval);
      persist("evaluate/" + name + ".json", r.to_json());
      json j = r.to_json();
      j.erase("outcomes");
      reports[name] = j;
    }
    stages["evaluate"] = reports;
    return 0;
  });

  report["stages"] = stages;
  std::sort(artifacts.begin(), artifacts.end());
  report["artifacts"] = artifacts;
  write_json_file(out / "report.json", report);
  return report;
}

fs::path write_fixture_inputs(const fs::path& dir, std::uint64_t seed) {
  fs::create_directories(dir / "objects");
  fs::create_directories(dir / "demos");
  const auto kettle = fixtures::make_kettle("kettle", derive_seed(seed, "kettle"));
  const auto teapot = fixtures::make_teapot("teapot", derive_seed(seed, "teapot"));
  write_json_file(dir / "objects/kettle.json", fixtures::fixture_to_json(kettle));
  write_json_file(dir / "objects/teapot.json", fixtures::fixture_to_json(teapot));
  write_json_file(dir / "oracle.json", oracle_table_to_json(fixtures::vessel_oracle_table({"kettle", "teapot"})));

  Rng rng(derive_seed(seed, "fixture-demos"));
  for (int k = 0; k < 3; ++k) {
    const SE3Pose kettle_pose(rot_z(rng.uniform(-1.0, 1.0)).rotation(),
                              Vec3(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), 0.0));
    const SE3Pose cup_pose = compose(kettle_pose, SE3Pose::from_translation(Vec3(0.0, 0.6, 0.0)));
    const std::string suffix = std::to_string(k);
    const auto grasp = fixtures::make_grasp_demo("grasp-" + suffix, kettle, kettle_pose, rng.next());
    const auto pour = fixtures::make_pour_demo("pour-" + suffix, kettle, "cup", kettle_pose, cup_pose, rng.next());
    write_json_file(dir / "demos" / (grasp.demo_id + ".json"), demonstration_to_json(grasp));
    write_json_file(dir / "demos" / (pour.demo_id + ".json"), demonstration_to_json(pour));
  }

  ordered_json config{
      {"seed", seed},
      {"output_dir", "out"},
      {"category", "vessel"},
      {"objects",
       {{{"object_id", "kettle"}, {"category", "kettle"}, {"cloud", "objects/kettle.json"}},
        {{"object_id", "teapot"}, {"category", "teapot"}, {"cloud", "objects/teapot.json"}}}},
      {"propose", {{"provider", "geometric"}, {"m", kDefaultRegionCount}, {"restarts", 10}}},
      {"recognize",
       {{"backend", "oracle"},
        {"oracle_table", "oracle.json"},
        {"queries", {{{"verb", "grasp"}, {"role", "active"}}, {{"verb", "pour"}, {"role", "active"}}}}}},
      {"align", {{"anchor", "kettle"}, {"normalization", "point-mean"}}},
      {"transfer", {{"demos", "demos"}, {"targets", {"kettle", "teapot"}}, {"method", "offset"}}},
      {"train", {{"enabled", true}, {"epochs", 10000}, {"lr", 1e-3}, {"batch", 64}}},
      {"evaluate",
       {{"executors", {"transfer", "policy"}},
        {"trials", 25},
        {"seeds", {0, 1, 2}},
        {"position_tolerance", 0.02},
        {"orientation_tolerance", 0.1},
        {"execution_noise", 0.008},
        {"task", "pour water"},
        {"receiver", "cup"}}}};
  write_text_file(dir / "pipeline.json", config.dump(2) + "\n");
  return dir / "pipeline.json";
}

}  // namespace funcanon
