#include "funcanon/recognition.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>

#include "funcanon/error.hpp"

namespace funcanon {

std::string role_name(Role role) { return role == Role::kActive ? "active" : "passive"; }

Role parse_role(const std::string& text) {
  if (text == "active") return Role::kActive;
  if (text == "passive") return Role::kPassive;
  throw Error(ErrorCode::kInvalidArgument, "role must be active or passive, got '" + text + "'");
}

Vocabulary::Vocabulary() : verbs_{"grasp", "pour", "place", "insert", "water"} {}

bool Vocabulary::contains(const std::string& verb) const {
  return std::find(verbs_.begin(), verbs_.end(), verb) != verbs_.end();
}

RegionSummary summarize_region(const FunctionalRegion& region, const PointCloud& cloud, std::string label) {
  if (region.point_indices.empty()) throw Error(ErrorCode::kInvalidArgument, "region has no points");
  RegionSummary s;
  Vec3 lo = cloud.points().at(region.point_indices[0]);
  Vec3 hi = lo;
  Vec3 sum = Vec3::Zero();
  for (std::size_t i : region.point_indices) {
    const Vec3& p = cloud.points().at(i);
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
    sum += p;
  }
  s.centroid = sum / static_cast<double>(region.point_indices.size());
  s.extent = hi - lo;
  double zmin = cloud.points()[0].z();
  double zmax = zmin;
  for (const auto& p : cloud.points()) {
    zmin = std::min(zmin, p.z());
    zmax = std::max(zmax, p.z());
  }
  s.height_fraction = zmax > zmin ? (s.centroid.z() - zmin) / (zmax - zmin) : 0.0;
  s.label = std::move(label);
  return s;
}

std::string canonical_query_text(const FunctionQuery& q) {
  char buf[512];
  const auto& s = q.summary;
  std::snprintf(buf, sizeof buf,
                "category=%s;verb=%s;role=%s;label=%s;centroid=%.9g,%.9g,%.9g;extent=%.9g,%.9g,%.9g;height=%.9g",
                q.category.c_str(), q.verb.c_str(), role_name(q.role).c_str(), s.label.c_str(), s.centroid.x(),
                s.centroid.y(), s.centroid.z(), s.extent.x(), s.extent.y(), s.extent.z(), s.height_fraction);
  return buf;
}

OracleClassifier::OracleClassifier(std::vector<OracleEntry> entries) : entries_(std::move(entries)) {
  for (const auto& e : entries_) {
    if (e.role != "*") parse_role(e.role);
  }
}

OracleClassifier OracleClassifier::from_json(const json& j) {
  try {
    std::vector<OracleEntry> entries;
    for (const auto& e : j) {
      entries.push_back({e.at("category").get<std::string>(), e.at("verb").get<std::string>(),
                         e.at("role").get<std::string>(), e.at("region_label").get<std::string>(),
                         e.at("decision").get<bool>()});
    }
    return OracleClassifier(std::move(entries));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("oracle table: ") + e.what());
  }
}

bool OracleClassifier::classify(const FunctionQuery& q) {
  const std::string role = role_name(q.role);
  // Specificity: exact verb and role (3), exact verb (2), exact role (1), wildcards (0).
  const OracleEntry* best = nullptr;
  int best_rank = -1;
  for (const auto& e : entries_) {
    if (e.category != q.category || e.region_label != q.summary.label) continue;
    const bool verb_exact = e.verb == q.verb;
    const bool role_exact = e.role == role;
    if (!(verb_exact || e.verb == "*") || !(role_exact || e.role == "*")) continue;
    const int rank = (verb_exact ? 2 : 0) + (role_exact ? 1 : 0);
    if (rank > best_rank) {
      best = &e;
      best_rank = rank;
    }
  }
  if (best == nullptr) {
    throw Error(ErrorCode::kUnknownQuery, "no oracle entry for (" + q.category + ", " + q.verb + ", " + role +
                                              ", " + q.summary.label + ")");
  }
  return best->decision;
}

json oracle_table_to_json(const std::vector<OracleEntry>& entries) {
  json arr = json::array();
  for (const auto& e : entries) {
    arr.push_back({{"category", e.category},
                   {"verb", e.verb},
                   {"role", e.role},
                   {"region_label", e.region_label},
                   {"decision", e.decision}});
  }
  return arr;
}

RemoteClassifier::RemoteClassifier(std::shared_ptr<ChatClient> client, std::string model)
    : client_(std::move(client)), model_(std::move(model)) {}

ChatRequest RemoteClassifier::build_request(const FunctionQuery& q) const {
  const auto& s = q.summary;
  char region[256];
  std::snprintf(region, sizeof region,
                "centroid (%.4f, %.4f, %.4f) m, extent (%.4f, %.4f, %.4f) m, height fraction %.3f", s.centroid.x(),
                s.centroid.y(), s.centroid.z(), s.extent.x(), s.extent.y(), s.extent.z(), s.height_fraction);
  ChatRequest r;
  r.model = model_;
  r.messages.push_back(
      {"system",
       "You are a binary classifier of object part function. Answer with exactly one word: True or False."});
  r.messages.push_back({"user", "Object category: " + q.category + ". Candidate region: " + region +
                                    ". Is this region functionally relevant for the action '" + q.verb +
                                    "' with the object in the " + role_name(q.role) + " role?"});
  return r;
}

std::string RemoteClassifier::cache_key(const FunctionQuery& q) {
  return "recognize:" + stable_hash(canonical_query_text(q));
}

bool RemoteClassifier::parse_decision(const std::string& reply) {
  std::string word;
  for (char c : reply) {
    if (std::isalpha(static_cast<unsigned char>(c))) word.push_back(static_cast<char>(std::tolower(c)));
    else if (!word.empty()) break;
  }
  if (word == "true") return true;
  if (word == "false") return false;
  throw Error(ErrorCode::kProtocolError, "expected True or False, got '" + reply + "'");
}

bool RemoteClassifier::classify(const FunctionQuery& q) {
  return parse_decision(client_->complete(build_request(q), cache_key(q)));
}

bool classify_region(const FunctionQuery& query, ClassifierBackend& backend, const Vocabulary& vocabulary) {
  if (!vocabulary.contains(query.verb)) {
    throw Error(ErrorCode::kVocabularyError, "verb '" + query.verb + "' is not in the vocabulary");
  }
  return backend.classify(query);
}

FunctionalSet build_functional_set(const std::string& object_id, const std::vector<FunctionalRegion>& regions,
                                   const std::vector<RegionSummary>& summaries, const std::string& verb,
                                   Role role, const std::string& category, ClassifierBackend& backend,
                                   const Vocabulary& vocabulary) {
  if (regions.size() != summaries.size()) {
    throw Error(ErrorCode::kInvalidArgument, "one summary per region required");
  }
  FunctionalSet fs{object_id, category, verb, role, {}, {}};
  for (std::size_t i = 0; i < regions.size(); ++i) {
    FunctionQuery q{regions[i].region_id, summaries[i], verb, role, category};
    if (classify_region(q, backend, vocabulary)) fs.regions.push_back(regions[i]);
  }
  if (fs.regions.empty()) {
    fs.warnings.push_back("no region of " + object_id + " accepted for (" + verb + ", " + role_name(role) + ")");
  }
  return fs;
}

FunctionalSet build_functional_set(const std::string& object_id, const std::vector<FunctionalRegion>& regions,
                                   const PointCloud& cloud, const std::vector<std::string>& region_labels,
                                   const std::string& verb, Role role, const std::string& category,
                                   ClassifierBackend& backend, const Vocabulary& vocabulary) {
  std::vector<RegionSummary> summaries;
  for (std::size_t i = 0; i < regions.size(); ++i) {
    summaries.push_back(summarize_region(regions[i], cloud, i < region_labels.size() ? region_labels[i] : ""));
  }
  return build_functional_set(object_id, regions, summaries, verb, role, category, backend, vocabulary);
}

json functional_set_to_json(const FunctionalSet& fs) {
  json j = proposal_to_json(fs.object_id, static_cast<int>(fs.regions.size()), fs.regions);
  j.erase("m");
  j["category"] = fs.category;
  j["verb"] = fs.verb;
  j["role"] = role_name(fs.role);
  j["warnings"] = fs.warnings;
  return j;
}

FunctionalSet functional_set_from_json(const json& j) {
  try {
    FunctionalSet fs;
    fs.object_id = j.at("object_id").get<std::string>();
    fs.category = j.at("category").get<std::string>();
    fs.verb = j.at("verb").get<std::string>();
    fs.role = parse_role(j.at("role").get<std::string>());
    fs.regions = proposal_from_json(j);
    fs.warnings = j.value("warnings", std::vector<std::string>{});
    return fs;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("functional set: ") + e.what());
  }
}

}  // namespace funcanon
