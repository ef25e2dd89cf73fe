#include "funcanon/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "funcanon/error.hpp"
#include "funcanon/random.hpp"

namespace funcanon {

std::string prediction_name(Prediction p) { return p == Prediction::kEpsilon ? "epsilon" : "sample"; }

Prediction parse_prediction(const std::string& text) {
  if (text == "epsilon") return Prediction::kEpsilon;
  if (text == "sample") return Prediction::kSample;
  throw Error(ErrorCode::kInvalidArgument, "prediction must be epsilon or sample, got '" + text + "'");
}

json PolicyDims::to_json() const {
  return {{"pose_width", pose_width}, {"feature_dim", feature_dim}, {"verb_dim", verb_dim},
          {"horizon", horizon},       {"time_dim", time_dim},       {"encoder_hidden", encoder_hidden},
          {"hidden", hidden},         {"prediction", prediction_name(prediction)}};
}

PolicyDims PolicyDims::from_json(const json& j) {
  PolicyDims d;
  try {
    d.pose_width = j.value("pose_width", d.pose_width);
    d.feature_dim = j.value("feature_dim", d.feature_dim);
    d.verb_dim = j.value("verb_dim", d.verb_dim);
    d.horizon = j.value("horizon", d.horizon);
    d.time_dim = j.value("time_dim", d.time_dim);
    d.encoder_hidden = j.value("encoder_hidden", d.encoder_hidden);
    d.hidden = j.value("hidden", d.hidden);
    d.prediction = parse_prediction(j.value("prediction", prediction_name(d.prediction)));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("dims: ") + e.what());
  }
  if (d.pose_width < 1 || d.feature_dim < 1 || d.verb_dim < 1 || d.horizon < 1 || d.time_dim < 2 ||
      d.time_dim % 2 != 0) {
    throw Error(ErrorCode::kInvalidArgument, "invalid policy dimensions");
  }
  return d;
}

Eigen::VectorXd PolicyState::concat() const {
  Eigen::VectorXd out(h_delta.size() + f_actor.size() + f_object.size() + verb.size());
  out << h_delta, f_actor, f_object, verb;
  return out;
}

json PolicyState::to_json() const {
  return {{"h_delta", vec_to_json(h_delta)},
          {"f_A", vec_to_json(f_actor)},
          {"f_O", vec_to_json(f_object)},
          {"v", vec_to_json(verb)}};
}

PolicyState PolicyState::from_json(const json& j) {
  try {
    return {vec_from_json(j.at("h_delta")), vec_from_json(j.at("f_A")), vec_from_json(j.at("f_O")),
            vec_from_json(j.at("v"))};
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("policy state: ") + e.what());
  }
}

std::array<double, 12> relative_pose_vector(const SE3Pose& actor_pose, const SE3Pose& object_pose) {
  return compose(invert(object_pose), actor_pose).flat();
}

Eigen::VectorXd stub_embedding(const std::string& id, int dim, std::uint64_t salt) {
  Rng rng(derive_seed(salt, id));
  return rng.normal_vector(dim) / std::sqrt(static_cast<double>(dim));
}

StateEncoder::StateEncoder(const PolicyDims& dims, const Vocabulary& vocabulary, std::uint64_t seed)
    : pose_mlp_({12, dims.encoder_hidden, dims.encoder_hidden, dims.pose_width}, derive_seed(seed, "pose-encoder")) {
  for (const auto& verb : vocabulary.verbs()) verbs_[verb] = stub_embedding(verb, dims.verb_dim, seed);
}

Eigen::VectorXd StateEncoder::encode_pose(const SE3Pose& actor_pose, const SE3Pose& object_pose) const {
  const auto rel = relative_pose_vector(actor_pose, object_pose);
  return pose_mlp_.forward(Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(rel.data(), 12)));
}

const Eigen::VectorXd& StateEncoder::verb_embedding(const std::string& verb) const {
  auto it = verbs_.find(verb);
  if (it == verbs_.end()) throw Error(ErrorCode::kVocabularyError, "verb '" + verb + "' has no embedding");
  return it->second;
}

json StateEncoder::to_json() const {
  json verbs = json::object();
  for (const auto& [k, v] : verbs_) verbs[k] = vec_to_json(v);
  return {{"pose_mlp", pose_mlp_.to_json()}, {"verbs", verbs}};
}

StateEncoder StateEncoder::from_json(const json& j) {
  StateEncoder e;
  try {
    e.pose_mlp_ = Mlp::from_json(j.at("pose_mlp"));
    for (const auto& [k, v] : j.at("verbs").items()) e.verbs_[k] = vec_from_json(v);
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::kParseError, std::string("encoder: ") + ex.what());
  }
  return e;
}

PolicyState encode_state(const StateEncoder& encoder, const SE3Pose& actor_pose, const SE3Pose& object_pose,
                         const Eigen::VectorXd& f_actor, const Eigen::VectorXd& f_object, const std::string& verb) {
  PolicyState s{encoder.encode_pose(actor_pose, object_pose), f_actor, f_object, encoder.verb_embedding(verb)};
  if (!s.concat().allFinite()) throw Error(ErrorCode::kInvalidArgument, "policy state is not finite");
  return s;
}

Eigen::VectorXd timestep_embedding(int t, int dim) {
  const int half = dim / 2;
  Eigen::VectorXd e(dim);
  for (int k = 0; k < half; ++k) {
    const double freq = std::exp(-std::log(10000.0) * k / half);
    e[k] = std::sin(t * freq);
    e[half + k] = std::cos(t * freq);
  }
  return e;
}

Denoiser::Denoiser(const PolicyDims& dims, std::uint64_t seed) : Denoiser(dims, dims.hidden, seed) {}

Denoiser::Denoiser(const PolicyDims& dims, std::vector<int> hidden, std::uint64_t seed) : dims_(dims) {
  dims_.hidden = hidden;
  std::vector<int> widths{dims.chunk_dim() + dims.state_dim() + dims.time_dim};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(dims.chunk_dim());
  net_ = Mlp(widths, derive_seed(seed, "denoiser"));
}

Matrix Denoiser::input_matrix(const std::vector<Eigen::VectorXd>& x_t, const std::vector<Eigen::VectorXd>& states,
                              const std::vector<int>& t) const {
  const int cd = dims_.chunk_dim();
  const int sd = dims_.state_dim();
  Matrix in(cd + sd + dims_.time_dim, static_cast<Eigen::Index>(x_t.size()));
  for (std::size_t i = 0; i < x_t.size(); ++i) {
    if (x_t[i].size() != cd || states[i].size() != sd) {
      throw Error(ErrorCode::kInvalidArgument, "denoiser input has the wrong dimension");
    }
    const auto col = static_cast<Eigen::Index>(i);
    in.col(col).head(cd) = x_t[i];
    in.col(col).segment(cd, sd) = states[i];
    in.col(col).tail(dims_.time_dim) = timestep_embedding(t[i], dims_.time_dim);
  }
  return in;
}

namespace {

// Network output -> predicted noise, column by column.
Matrix output_to_epsilon(const Matrix& out, const Matrix& x_t, const std::vector<int>& t, Prediction p,
                         const DiffusionSchedule& s) {
  if (p == Prediction::kEpsilon) return out;
  Matrix eps(out.rows(), out.cols());
  for (Eigen::Index i = 0; i < out.cols(); ++i) {
    const double ab = s.alpha_bars.at(static_cast<std::size_t>(t[i]));
    eps.col(i) = (x_t.col(i) - std::sqrt(ab) * out.col(i)) / std::sqrt(1.0 - ab);
  }
  return eps;
}

}  // namespace

Eigen::VectorXd Denoiser::predict(const Eigen::VectorXd& x_t, const PolicyState& state, int t,
                                  const DiffusionSchedule& schedule) const {
  const Matrix out = net_.forward(input_matrix({x_t}, {state.concat()}, {t}));
  return output_to_epsilon(out, x_t, {t}, dims_.prediction, schedule).col(0);
}

json Denoiser::to_json() const { return net_.to_json(); }

Denoiser Denoiser::from_json(const json& j, const PolicyDims& dims) {
  Denoiser d;
  d.net_ = Mlp::from_json(j);
  d.dims_ = dims;
  const auto& w = d.net_.widths();
  if (w.front() != dims.chunk_dim() + dims.state_dim() + dims.time_dim || w.back() != dims.chunk_dim()) {
    throw Error(ErrorCode::kParseError, "denoiser widths do not match the checkpoint dimensions");
  }
  d.dims_.hidden.assign(w.begin() + 1, w.end() - 1);
  return d;
}

Eigen::VectorXd encode_chunk(const Trajectory& trajectory, const Vec3& center, int horizon) {
  constexpr int kW = PolicyDims::kWaypointWidth;
  Eigen::VectorXd chunk(horizon * kW);
  const std::size_t n = trajectory.size();
  for (int k = 0; k < horizon; ++k) {
    const std::size_t idx =
        horizon == 1 ? n - 1
                     : static_cast<std::size_t>(std::lround(static_cast<double>(k) * (n - 1) / (horizon - 1)));
    const SE3Pose& w = trajectory.waypoints()[idx];
    chunk.segment<3>(k * kW) = w.translation() - center;
    chunk.segment<3>(k * kW + 3) = log_rotation(w.rotation());
    chunk[k * kW + 6] = trajectory.gripper()[idx];
  }
  return chunk;
}

Trajectory decode_chunk(const Eigen::VectorXd& chunk, const Vec3& center, FrameTag frame) {
  constexpr int kW = PolicyDims::kWaypointWidth;
  if (chunk.size() == 0 || chunk.size() % kW != 0) throw Error(ErrorCode::kInvalidArgument, "bad chunk size");
  if (!chunk.allFinite()) throw Error(ErrorCode::kInvalidArgument, "chunk is not finite");
  std::vector<SE3Pose> poses;
  std::vector<double> gripper;
  for (Eigen::Index k = 0; k < chunk.size() / kW; ++k) {
    const Vec3 t = chunk.segment<3>(k * kW);
    const Vec3 aa = chunk.segment<3>(k * kW + 3);
    poses.emplace_back(exp_rotation(aa), center + t);
    gripper.push_back(std::clamp(chunk[k * kW + 6], 0.0, 1.0));
  }
  return Trajectory(std::move(poses), std::move(gripper), std::move(frame));
}

ActionNormalizer ActionNormalizer::identity(int dim) {
  return {Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Ones(dim)};
}

ActionNormalizer ActionNormalizer::fit(const std::vector<TrainingExample>& dataset) {
  if (dataset.empty()) throw Error(ErrorCode::kInvalidArgument, "cannot fit a normalizer to no data");
  Eigen::VectorXd lo = dataset.front().chunk;
  Eigen::VectorXd hi = lo;
  for (const auto& ex : dataset) {
    lo = lo.cwiseMin(ex.chunk);
    hi = hi.cwiseMax(ex.chunk);
  }
  return {(lo + hi) / 2.0, ((hi - lo) / 2.0).cwiseMax(kMinHalfRange)};
}

Eigen::VectorXd ActionNormalizer::normalize(const Eigen::VectorXd& chunk) const {
  return (chunk - center).cwiseQuotient(half_range);
}

Eigen::VectorXd ActionNormalizer::denormalize(const Eigen::VectorXd& z) const {
  return z.cwiseProduct(half_range) + center;
}

json ActionNormalizer::to_json() const {
  return {{"center", vec_to_json(center)}, {"half_range", vec_to_json(half_range)}};
}

ActionNormalizer ActionNormalizer::from_json(const json& j) {
  try {
    ActionNormalizer n{vec_from_json(j.at("center")), vec_from_json(j.at("half_range"))};
    if (n.center.size() != n.half_range.size() || (n.half_range.array() <= 0.0).any()) {
      throw Error(ErrorCode::kParseError, "invalid action normalizer");
    }
    return n;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("action normalizer: ") + e.what());
  }
}

DiffusionSchedule TrainConfig::schedule() const {
  return DiffusionSchedule::linear(t_train, t_infer, beta_start, beta_end);
}

json TrainConfig::to_json() const {
  return {{"lr", lr},
          {"batch", batch},
          {"epochs", epochs},
          {"t_train", t_train},
          {"t_infer", t_infer},
          {"weight_decay", weight_decay},
          {"beta_start", beta_start},
          {"beta_end", beta_end},
          {"normalize_actions", normalize_actions},
          {"dims", dims.to_json()}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  static const std::set<std::string> kKeys{"lr",          "batch",      "epochs",   "t_train", "t_infer",
                                           "weight_decay", "beta_start", "beta_end", "dims",
                                           "normalize_actions"};
  if (!j.is_object()) throw Error(ErrorCode::kParseError, "training config must be an object");
  for (const auto& [k, _] : j.items()) {
    if (!kKeys.contains(k)) throw Error(ErrorCode::kParseError, "unknown training config key '" + k + "'");
  }
  TrainConfig c;
  try {
    c.lr = j.value("lr", c.lr);
    c.batch = j.value("batch", c.batch);
    c.epochs = j.value("epochs", c.epochs);
    c.t_train = j.value("t_train", c.t_train);
    c.t_infer = j.value("t_infer", c.t_infer);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.beta_start = j.value("beta_start", c.beta_start);
    c.beta_end = j.value("beta_end", c.beta_end);
    c.normalize_actions = j.value("normalize_actions", c.normalize_actions);
    if (j.contains("dims")) c.dims = PolicyDims::from_json(j["dims"]);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("training config: ") + e.what());
  }
  if (c.lr < 0.0 || c.batch < 1 || c.epochs < 0) throw Error(ErrorCode::kInvalidArgument, "invalid training config");
  c.schedule();
  return c;
}

double denoising_loss(const Denoiser& denoiser, const std::vector<const TrainingExample*>& batch,
                      const std::vector<int>& t, const std::vector<Eigen::VectorXd>& noise, const DiffusionSchedule& s,
                      std::vector<double>* grad) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  std::vector<Eigen::VectorXd> xs;
  std::vector<Eigen::VectorXd> states;
  Matrix x_t(denoiser.dims().chunk_dim(), n);
  Matrix target(denoiser.dims().chunk_dim(), n);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    xs.push_back(q_sample(batch[i]->chunk, t[i], noise[i], s));
    states.push_back(batch[i]->state.concat());
    x_t.col(static_cast<Eigen::Index>(i)) = xs.back();
    target.col(static_cast<Eigen::Index>(i)) = noise[i];
  }
  Mlp::Cache cache;
  const Prediction p = denoiser.dims().prediction;
  const Matrix out = denoiser.network().forward(denoiser.input_matrix(xs, states, t), cache);
  const Matrix diff = output_to_epsilon(out, x_t, t, p, s) - target;
  const double scale = 1.0 / static_cast<double>(diff.size());
  if (grad != nullptr) {
    Matrix g = 2.0 * scale * diff;
    if (p == Prediction::kSample) {
      for (Eigen::Index i = 0; i < n; ++i) {
        const double ab = s.alpha_bars.at(static_cast<std::size_t>(t[i]));
        g.col(i) *= -std::sqrt(ab) / std::sqrt(1.0 - ab);
      }
    }
    grad->assign(denoiser.parameter_count(), 0.0);
    denoiser.network().backward(cache, g, *grad);
  }
  return diff.squaredNorm() * scale;
}

TrainResult train(const std::vector<TrainingExample>& dataset, const TrainConfig& config, std::uint64_t seed,
                  std::optional<Denoiser> initial) {
  if (dataset.empty()) throw Error(ErrorCode::kInvalidArgument, "training dataset is empty");
  const DiffusionSchedule schedule = config.schedule();
  TrainResult result{initial ? std::move(*initial) : Denoiser(config.dims, seed), {},
                     ActionNormalizer::identity(config.dims.chunk_dim())};
  for (const auto& ex : dataset) {
    if (ex.chunk.size() != config.dims.chunk_dim() || ex.state.concat().size() != config.dims.state_dim()) {
      throw Error(ErrorCode::kInvalidArgument, "training example does not match the configured dimensions");
    }
  }
  std::vector<TrainingExample> normalized;
  if (config.normalize_actions) {
    result.normalizer = ActionNormalizer::fit(dataset);
    normalized.reserve(dataset.size());
    for (const auto& ex : dataset) normalized.push_back({ex.state, result.normalizer.normalize(ex.chunk)});
  }
  const std::vector<TrainingExample>& data = config.normalize_actions ? normalized : dataset;
  auto& params = result.denoiser.network().parameters();
  AdamW opt(params.size(), {config.lr, 0.9, 0.999, 1e-8, config.weight_decay});
  Rng rng(derive_seed(seed, "train"));
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> grad;
  const std::size_t batch_size = static_cast<std::size_t>(config.batch);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    const Denoiser last_good = result.denoiser;
    double loss_sum = 0.0;
    std::size_t seen = 0;
    const std::size_t total = std::max(order.size(), batch_size);
    for (std::size_t start = 0; start < total; start += batch_size) {
      std::vector<const TrainingExample*> batch;
      std::vector<int> ts;
      std::vector<Eigen::VectorXd> noise;
      for (std::size_t k = start; k < std::min(start + batch_size, total); ++k) {
        batch.push_back(&data[order[k % order.size()]]);
        ts.push_back(static_cast<int>(rng.index(static_cast<std::size_t>(schedule.t_train))));
        noise.push_back(rng.normal_vector(config.dims.chunk_dim()));
      }
      const double loss = denoising_loss(result.denoiser, batch, ts, noise, schedule, &grad);
      if (!std::isfinite(loss)) throw TrainingDiverged(last_good, epoch);
      opt.step(params, grad);
      loss_sum += loss * static_cast<double>(batch.size());
      seen += batch.size();
    }
    result.loss_curve.push_back(loss_sum / static_cast<double>(seen));
  }
  return result;
}

GradCheckResult grad_check(const Denoiser& denoiser, const TrainingExample& sample, int t,
                           const Eigen::VectorXd& noise, const DiffusionSchedule& schedule, int count, double h,
                           std::uint64_t seed) {
  Denoiser probe = denoiser;
  const std::vector<const TrainingExample*> batch{&sample};
  const std::vector<int> ts{t};
  const std::vector<Eigen::VectorXd> ns{noise};
  std::vector<double> analytic;
  denoising_loss(probe, batch, ts, ns, schedule, &analytic);

  auto& params = probe.network().parameters();
  std::vector<std::size_t> idx(params.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  const std::size_t n = std::min(idx.size(), static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < n; ++i) std::swap(idx[i], idx[i + rng.index(idx.size() - i)]);

  GradCheckResult out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t p = idx[i];
    const double saved = params[p];
    params[p] = saved + h;
    const double up = denoising_loss(probe, batch, ts, ns, schedule, nullptr);
    params[p] = saved - h;
    const double down = denoising_loss(probe, batch, ts, ns, schedule, nullptr);
    params[p] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double abs_err = std::abs(numeric - analytic[p]);
    const double denom = std::max(std::abs(numeric), std::abs(analytic[p]));
    out.max_absolute_error = std::max(out.max_absolute_error, abs_err);
    if (denom > 0.0) out.max_relative_error = std::max(out.max_relative_error, abs_err / denom);
    ++out.checked;
  }
  return out;
}

json PolicyCheckpoint::to_json() const {
  return {{"format", "funcanon-policy"},
          {"version", kVersion},
          {"dims", dims.to_json()},
          {"schedule", schedule.to_json()},
          {"encoder", encoder.to_json()},
          {"denoiser", denoiser.to_json()},
          {"config", config.to_json()},
          {"loss_curve", loss_curve},
          {"normalizer", normalizer.to_json()}};
}

PolicyCheckpoint PolicyCheckpoint::from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != "funcanon-policy") {
      throw Error(ErrorCode::kParseError, "not a policy checkpoint");
    }
    if (j.at("version").get<int>() != kVersion) {
      throw Error(ErrorCode::kParseError, "unsupported checkpoint version");
    }
    PolicyCheckpoint c;
    c.dims = PolicyDims::from_json(j.at("dims"));
    c.schedule = DiffusionSchedule::from_json(j.at("schedule"));
    c.encoder = StateEncoder::from_json(j.at("encoder"));
    c.denoiser = Denoiser::from_json(j.at("denoiser"), c.dims);
    c.config = TrainConfig::from_json(j.at("config"));
    c.loss_curve = j.value("loss_curve", std::vector<double>{});
    c.normalizer = j.contains("normalizer") ? ActionNormalizer::from_json(j.at("normalizer"))
                                            : ActionNormalizer::identity(c.dims.chunk_dim());
    if (c.normalizer.center.size() != c.dims.chunk_dim()) {
      throw Error(ErrorCode::kParseError, "normalizer does not match the chunk dimension");
    }
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("checkpoint: ") + e.what());
  }
}

Eigen::VectorXd ddim_sample(const PolicyState& state, const Denoiser& denoiser, const DiffusionSchedule& schedule,
                            const std::vector<int>& timesteps, std::uint64_t seed) {
  return ddim_sample([&](const Eigen::VectorXd& x, int t) { return denoiser.predict(x, state, t, schedule); },
                     denoiser.dims().chunk_dim(), schedule, timesteps, seed);
}

Eigen::VectorXd ddim_sample(const PolicyState& state, const Denoiser& denoiser, const DiffusionSchedule& schedule,
                            std::uint64_t seed) {
  return ddim_sample(state, denoiser, schedule, schedule.inference_timesteps(), seed);
}

Eigen::VectorXd sample_action(const PolicyCheckpoint& checkpoint, const PolicyState& state, std::uint64_t seed) {
  return checkpoint.normalizer.denormalize(ddim_sample(state, checkpoint.denoiser, checkpoint.schedule, seed));
}

}  // namespace funcanon
