// funcanon command-line interface.
#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <memory>
#include <sstream>

#include "funcanon/chat_client.hpp"
#include "funcanon/decomposition.hpp"
#include "funcanon/error.hpp"
#include "funcanon/evaluation.hpp"
#include "funcanon/fixtures.hpp"
#include "funcanon/pipeline.hpp"
#include "funcanon/policy.hpp"
#include "funcanon/random.hpp"
#include "funcanon/region_proposal.hpp"
#include "funcanon/transfer.hpp"

namespace fs = std::filesystem;
using namespace funcanon;

namespace {

constexpr int kExitInvalidConfig = 2;
constexpr int kExitStageFailure = 3;

// Raised for unreadable or malformed inputs and flags.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename F>
auto load(F&& f) {
  try {
    return f();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

void emit(const std::string& out, const json& j) {
  if (out.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    write_json_file(out, j);
  }
}

void emit_text(const std::string& out, const std::string& text) {
  if (out.empty()) {
    std::cout << text;
  } else {
    write_text_file(out, text);
  }
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(' ');
    const auto e = item.find_last_not_of(' ');
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

struct ObjectInput {
  std::string object_id;
  PointCloud cloud;  // normalized model
  ModelNormalization normalization;
  std::vector<std::string> labels;
};

ObjectInput load_object(const std::string& path, const std::string& id) {
  return load([&] {
    ObjectInput o;
    o.object_id = id.empty() ? fs::path(path).stem().string() : id;
    PointCloud raw;
    if (fs::path(path).extension() == ".ply") {
      raw = load_cloud(path);
    } else {
      const json j = read_json_file(path);
      raw = cloud_from_json(j);
      if (j.contains("labels")) o.labels = fixtures::fixture_from_json(j).labels;
      if (id.empty() && j.contains("object_id")) o.object_id = j["object_id"].get<std::string>();
    }
    std::tie(o.cloud, o.normalization) = normalize_model(raw);
    return o;
  });
}

std::vector<AlignmentManifest> load_manifests(const std::string& dir) {
  return load([&] {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.path().extension() == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<AlignmentManifest> out;
    for (const auto& f : files) out.push_back(manifest_from_json(read_json_file(f)));
    return out;
  });
}

std::shared_ptr<ResponseCache> open_cache(const std::string& path) {
  return path.empty() ? std::make_shared<ResponseCache>() : std::make_shared<ResponseCache>(path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Functional canonicalization, trajectory transfer and diffusion policy tools"};
  app.require_subcommand(1);

  // propose
  auto* propose = app.add_subcommand("propose", "Cluster a point cloud into candidate functional regions");
  std::string p_cloud, p_provider = "geometric", p_id, p_out;
  int p_m = kDefaultRegionCount, p_restarts = 10;
  std::uint64_t p_seed = 0;
  bool p_coords = false;
  propose->add_option("--cloud", p_cloud, "PLY or JSON point cloud")->required();
  propose->add_option("--provider", p_provider)->check(CLI::IsMember({"geometric", "file"}));
  propose->add_option("--m", p_m, "number of regions");
  propose->add_option("--seed", p_seed);
  propose->add_option("--restarts", p_restarts);
  propose->add_flag("--append-coordinates", p_coords);
  propose->add_option("--object-id", p_id);
  propose->add_option("--out", p_out);

  // recognize
  auto* recognize = app.add_subcommand("recognize", "Select the regions serving a (verb, role)");
  std::string r_cloud, r_proposal, r_verb, r_role = "active", r_category, r_backend = "oracle", r_oracle, r_cache,
                                                         r_out;
  recognize->add_option("--cloud", r_cloud)->required();
  recognize->add_option("--proposal", r_proposal)->required();
  recognize->add_option("--verb", r_verb)->required();
  recognize->add_option("--role", r_role)->check(CLI::IsMember({"active", "passive"}));
  recognize->add_option("--category", r_category)->required();
  recognize->add_option("--backend", r_backend)->check(CLI::IsMember({"oracle", "remote"}));
  recognize->add_option("--oracle", r_oracle, "oracle table JSON");
  recognize->add_option("--cache", r_cache, "response cache JSON");
  recognize->add_option("--out", r_out);

  // align
  auto* align = app.add_subcommand("align", "Canonical Z heading of an object against a category anchor");
  std::string a_object, a_set, a_anchor, a_verb, a_role = "active", a_category = "vessel", a_out;
  bool a_region_count = false;
  align->add_option("--object", a_object, "object point cloud")->required();
  align->add_option("--functional-set", a_set, "output of recognize")->required();
  align->add_option("--anchor", a_anchor, "anchor manifest file, or this object's id")->required();
  align->add_option("--verb", a_verb)->required();
  align->add_option("--role", a_role)->check(CLI::IsMember({"active", "passive"}));
  align->add_option("--category", a_category);
  align->add_flag("--region-count", a_region_count, "divide by the number of accepted regions");
  align->add_option("--out", a_out);

  // decompose
  auto* decomp = app.add_subcommand("decompose", "Split a task into actor-verb-object steps");
  std::string d_task, d_objects, d_backend = "rules", d_cache, d_out;
  decomp->add_option("--task", d_task)->required();
  decomp->add_option("--objects", d_objects, "comma-separated object names")->required();
  decomp->add_option("--backend", d_backend)->check(CLI::IsMember({"rules", "remote"}));
  decomp->add_option("--cache", d_cache);
  decomp->add_option("--out", d_out);

  // transfer
  auto* transfer = app.add_subcommand("transfer", "Transfer demonstrations onto target objects");
  std::string t_demos, t_targets, t_method = "offset", t_manifests, t_out;
  transfer->add_option("--demos", t_demos)->required();
  transfer->add_option("--targets", t_targets, "comma-separated object ids")->required();
  transfer->add_option("--method", t_method)->check(CLI::IsMember({"offset", "frame"}));
  transfer->add_option("--manifests", t_manifests, "directory of alignment manifests")->required();
  transfer->add_option("--out", t_out, "JSON-lines output");

  // train
  auto* trainc = app.add_subcommand("train", "Train the diffusion policy");
  std::string tr_data, tr_config, tr_out = "checkpoint.json";
  std::uint64_t tr_seed = 0;
  std::optional<int> tr_epochs;
  std::optional<double> tr_lr;
  trainc->add_option("--data", tr_data, "JSON-lines of {state, chunk}")->required();
  trainc->add_option("--config", tr_config, "training config JSON");
  trainc->add_option("--seed", tr_seed);
  trainc->add_option("--epochs", tr_epochs);
  trainc->add_option("--lr", tr_lr);
  trainc->add_option("--out", tr_out);

  // infer
  auto* infer = app.add_subcommand("infer", "Sample an action chunk");
  std::string i_ckpt, i_state, i_out;
  std::uint64_t i_seed = 0;
  infer->add_option("--ckpt", i_ckpt)->required();
  infer->add_option("--state", i_state)->required();
  infer->add_option("--seed", i_seed);
  infer->add_option("--out", i_out);

  // evaluate
  auto* evalc = app.add_subcommand("evaluate", "Kinematic success rates over scenarios");
  std::string e_scenarios, e_executor = "transfer", e_demos, e_manifests, e_ckpt, e_seeds = "0,1,2", e_out;
  std::string e_method = "offset";
  int e_trials = 25;
  double e_noise = 0.0, e_jitter = 0.1;
  evalc->add_option("--scenarios", e_scenarios, "JSON list of scenarios")->required();
  evalc->add_option("--executor", e_executor)->check(CLI::IsMember({"transfer", "policy"}));
  evalc->add_option("--demos", e_demos, "demonstration directory")->required();
  evalc->add_option("--manifests", e_manifests)->required();
  evalc->add_option("--ckpt", e_ckpt);
  evalc->add_option("--method", e_method)->check(CLI::IsMember({"offset", "frame"}));
  evalc->add_option("--trials", e_trials);
  evalc->add_option("--seeds", e_seeds);
  evalc->add_option("--noise", e_noise, "execution noise std (m)");
  evalc->add_option("--jitter", e_jitter, "placement jitter (m)");
  evalc->add_option("--out", e_out);

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "Run every stage end to end");
  std::string pp_config, pp_out;
  std::optional<std::uint64_t> pp_seed;
  std::optional<int> pp_trials, pp_epochs;
  std::optional<std::string> pp_method;
  pipe->add_option("--config", pp_config)->required();
  pipe->add_option("--seed", pp_seed);
  pipe->add_option("--out", pp_out, "output directory");
  pipe->add_option("--trials", pp_trials);
  pipe->add_option("--epochs", pp_epochs);
  pipe->add_option("--method", pp_method)->check(CLI::IsMember({"offset", "frame"}));

  // make-fixtures
  auto* fix = app.add_subcommand("make-fixtures", "Write synthetic objects, demos and a pipeline config");
  std::string f_out;
  std::uint64_t f_seed = 0;
  fix->add_option("--out", f_out)->required();
  fix->add_option("--seed", f_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInvalidConfig;
  }

  try {
    if (*propose) {
      const ObjectInput o = load_object(p_cloud, p_id);
      auto provider = load([&] { return make_feature_provider(p_provider); });
      ProposalOptions opts{p_coords, p_restarts};
      const auto regions = propose_regions(o.cloud, *provider, p_m, p_seed, opts);
      json j = proposal_to_json(o.object_id, p_m, regions);
      j["normalization"] = normalization_to_json(o.normalization);
      emit(p_out, j);
    } else if (*recognize) {
      const ObjectInput o = load_object(r_cloud, "");
      const auto regions = load([&] { return proposal_from_json(read_json_file(r_proposal)); });
      const Role role = parse_role(r_role);
      std::unique_ptr<ClassifierBackend> backend;
      std::shared_ptr<ResponseCache> cache;
      if (r_backend == "oracle") {
        if (r_oracle.empty()) throw ConfigError("--oracle is required with the oracle backend");
        backend = load([&] {
          return std::make_unique<OracleClassifier>(OracleClassifier::from_json(read_json_file(r_oracle)));
        });
      } else {
        cache = open_cache(r_cache);
        backend = std::make_unique<RemoteClassifier>(ChatClient::from_environment(cache));
      }
      const auto labels =
          o.labels.empty() ? std::vector<std::string>(regions.size()) : label_regions(regions, o.labels);
      const FunctionalSet fs =
          build_functional_set(o.object_id, regions, o.cloud, labels, r_verb, role, r_category, *backend);
      if (cache) cache->save();
      for (const auto& w : fs.warnings) std::cerr << "warning: " << w << "\n";
      emit(r_out, functional_set_to_json(fs));
    } else if (*align) {
      const ObjectInput o = load_object(a_object, "");
      const FunctionalSet fs = load([&] { return functional_set_from_json(read_json_file(a_set)); });
      if (fs.verb != a_verb || role_name(fs.role) != a_role) {
        throw ConfigError("functional set is for (" + fs.verb + ", " + role_name(fs.role) + ")");
      }
      const auto mode = a_region_count ? VectorNormalization::kRegionCount : VectorNormalization::kPointMean;
      AnchorRegistry registry;
      if (fs::exists(a_anchor)) {
        const AlignmentManifest anchor = load([&] { return manifest_from_json(read_json_file(a_anchor)); });
        registry.register_vector(a_category, anchor.canonical_vector());
      } else if (a_anchor == fs.object_id) {
        registry.register_vector(a_category, functional_vector(fs, o.cloud, mode));
      }
      const Canonicalization c = canonicalize(fs.object_id, a_category, o.cloud, fs, registry, mode);
      json j = manifest_to_json(c.manifest);
      j["normalization"] = normalization_to_json(o.normalization);
      emit(a_out, j);
    } else if (*decomp) {
      const auto objects = split_list(d_objects);
      std::unique_ptr<DecomposerBackend> backend;
      std::shared_ptr<ResponseCache> cache;
      if (d_backend == "rules") {
        backend = std::make_unique<RulesDecomposer>();
      } else {
        cache = open_cache(d_cache);
        backend = std::make_unique<RemoteDecomposer>(ChatClient::from_environment(cache));
      }
      const TaskPlan plan = decompose(d_task, objects, *backend);
      if (cache) cache->save();
      const std::string text = plan_to_json(plan).dump(2) + "\n";
      emit_text(d_out, text);
    } else if (*transfer) {
      const auto demos = load([&] { return load_demonstrations(t_demos); });
      const auto manifests = load_manifests(t_manifests);
      const auto method = parse_method(t_method);
      const AugmentResult r = augment_category(demos, split_list(t_targets), manifests, method);
      std::string lines;
      for (const auto& rec : r.records) lines += transfer_record_to_json(rec).dump() + "\n";
      emit_text(t_out, lines);
      for (const auto& f : r.failures) {
        std::cerr << "failed " << f.demo_id << " -> " << f.target_object_id << ": " << f.message << "\n";
      }
      if (r.records.empty()) return kExitStageFailure;
    } else if (*trainc) {
      TrainConfig config = load([&] {
        return tr_config.empty() ? TrainConfig{} : TrainConfig::from_json(read_json_file(tr_config));
      });
      if (tr_epochs) config.epochs = *tr_epochs;
      if (tr_lr) config.lr = *tr_lr;
      std::vector<TrainingExample> data = load([&] {
        std::vector<TrainingExample> out;
        for (const auto& j : read_json_lines(tr_data)) {
          out.push_back({PolicyState::from_json(j.at("state")), vec_from_json(j.at("chunk"))});
        }
        return out;
      });
      StateEncoder encoder(config.dims, Vocabulary(), derive_seed(tr_seed, "encoder"));
      TrainResult result = train(data, config, tr_seed);
      PolicyCheckpoint ckpt{config.dims,       config.schedule(), std::move(encoder), std::move(result.denoiser),
                            config,            std::move(result.loss_curve), std::move(result.normalizer)};
      write_json_file(tr_out, ckpt.to_json());
      std::cout << "epochs " << ckpt.loss_curve.size();
      if (!ckpt.loss_curve.empty()) {
        std::cout << " initial_loss " << ckpt.loss_curve.front() << " final_loss " << ckpt.loss_curve.back();
      }
      std::cout << "\n";
    } else if (*infer) {
      const PolicyCheckpoint ckpt = load([&] { return PolicyCheckpoint::from_json(read_json_file(i_ckpt)); });
      const PolicyState state = load([&] { return PolicyState::from_json(read_json_file(i_state)); });
      if (state.concat().size() != ckpt.dims.state_dim()) throw ConfigError("state dimension does not match checkpoint");
      const Eigen::VectorXd chunk = sample_action(ckpt, state, i_seed);
      const Trajectory t = decode_chunk(chunk, Vec3::Zero(), FrameTag::world());
      emit(i_out, json{{"chunk", vec_to_json(chunk)}, {"waypoints", waypoints_to_json(t)}});
    } else if (*evalc) {
      std::vector<Scenario> scenarios = load([&] {
        std::vector<Scenario> out;
        for (const auto& s : read_json_file(e_scenarios)) out.push_back(scenario_from_json(s));
        return out;
      });
      const auto demos = load([&] { return load_demonstrations(e_demos); });
      const auto manifests = load_manifests(e_manifests);
      EvalOptions opts;
      opts.trials = e_trials;
      opts.placement_jitter = e_jitter;
      opts.seeds.clear();
      for (const auto& s : split_list(e_seeds)) opts.seeds.push_back(load([&] { return std::stoull(s); }));
      JudgeContext context{manifests, {}};
      std::set<std::string> seen;
      for (const auto& d : demos) {
        if (seen.insert(d.primitive.verb).second) context.add_reference(d);
      }
      std::unique_ptr<Executor> executor;
      if (e_executor == "transfer") {
        executor = std::make_unique<TransferExecutor>(demos, manifests, parse_method(e_method), e_noise);
      } else {
        if (e_ckpt.empty()) throw ConfigError("--ckpt is required with the policy executor");
        executor = std::make_unique<PolicyExecutor>(
            load([&] { return PolicyCheckpoint::from_json(read_json_file(e_ckpt)); }), manifests);
      }
      emit(e_out, evaluate(scenarios, *executor, context, opts).to_json());
    } else if (*pipe) {
      PipelineConfig config = load([&] { return PipelineConfig::load(pp_config); });
      if (pp_seed) config.seed = *pp_seed;
      if (!pp_out.empty()) config.output_dir = pp_out;
      if (pp_trials) config.eval.trials = *pp_trials;
      if (pp_epochs) config.train.epochs = *pp_epochs;
      if (pp_method) config.method = parse_method(*pp_method);
      const json report = run_pipeline(config);
      std::cout << (config.output_dir / "report.json").string() << "\n";
      (void)report;
    } else if (*fix) {
      std::cout << write_fixture_inputs(f_out, f_seed).string() << "\n";
    }
  } catch (const ConfigError& e) {
    std::cerr << "invalid config: " << e.what() << "\n";
    return kExitInvalidConfig;
  } catch (const StageError& e) {
    std::cerr << e.what() << "\n";
    return kExitStageFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitStageFailure;
  }
  return 0;
}
