#pragma once

#include <memory>
#include <string>
#include <vector>

#include "funcanon/chat_client.hpp"
#include "funcanon/region_proposal.hpp"

namespace funcanon {

enum class Role { kActive, kPassive };

std::string role_name(Role role);
Role parse_role(const std::string& text);

/// Allowed action verbs.
class Vocabulary {
 public:
  Vocabulary();  // grasp, pour, place, insert, water
  explicit Vocabulary(std::vector<std::string> verbs) : verbs_(std::move(verbs)) {}
  bool contains(const std::string& verb) const;
  const std::vector<std::string>& verbs() const { return verbs_; }

 private:
  std::vector<std::string> verbs_;
};

// Textual stand-in for a region's appearance.
struct RegionSummary {
  Vec3 centroid = Vec3::Zero();
  Vec3 extent = Vec3::Zero();      // axis-aligned bounding box size
  double height_fraction = 0.0;    // centroid height within the object's Z range, in [0, 1]
  std::string label;               // fixture label; may be empty
};

RegionSummary summarize_region(const FunctionalRegion& region, const PointCloud& cloud, std::string label = {});

struct FunctionQuery {
  int region_id = 0;
  RegionSummary summary;
  std::string verb;
  Role role = Role::kActive;
  std::string category;
};

// Canonical text of a query used for cache keys; numbers printed with %.9g.
std::string canonical_query_text(const FunctionQuery& q);

class ClassifierBackend {
 public:
  virtual ~ClassifierBackend() = default;
  virtual bool classify(const FunctionQuery& query) = 0;
};

struct OracleEntry {
  std::string category;
  std::string verb;          // "*" matches any verb
  std::string role;          // "active", "passive" or "*"
  std::string region_label;
  bool decision = false;
};

// Rule table keyed by (category, verb, role, region label). Exact entries win over
// wildcards; a query matching nothing throws kUnknownQuery.
class OracleClassifier final : public ClassifierBackend {
 public:
  explicit OracleClassifier(std::vector<OracleEntry> entries);
  static OracleClassifier from_json(const json& j);
  bool classify(const FunctionQuery& query) override;
  const std::vector<OracleEntry>& entries() const { return entries_; }

 private:
  std::vector<OracleEntry> entries_;
};

json oracle_table_to_json(const std::vector<OracleEntry>& entries);

// Asks a chat model for a single True/False token.
class RemoteClassifier final : public ClassifierBackend {
 public:
  RemoteClassifier(std::shared_ptr<ChatClient> client, std::string model = "gpt-4o");
  bool classify(const FunctionQuery& query) override;

  ChatRequest build_request(const FunctionQuery& query) const;
  static std::string cache_key(const FunctionQuery& query);
  // Accepts True/False case-insensitively with surrounding whitespace and punctuation.
  static bool parse_decision(const std::string& reply);

 private:
  std::shared_ptr<ChatClient> client_;
  std::string model_;
};

// Validates the query against the vocabulary (kVocabularyError) before asking the backend.
bool classify_region(const FunctionQuery& query, ClassifierBackend& backend,
                     const Vocabulary& vocabulary = Vocabulary());

struct FunctionalSet {
  std::string object_id;
  std::string category;
  std::string verb;
  Role role = Role::kActive;
  std::vector<FunctionalRegion> regions;
  std::vector<std::string> warnings;

  bool empty() const { return regions.empty(); }
};

// Keeps the regions the backend accepts, in input order. `summaries` is parallel to `regions`.
FunctionalSet build_functional_set(const std::string& object_id, const std::vector<FunctionalRegion>& regions,
                                   const std::vector<RegionSummary>& summaries, const std::string& verb,
                                   Role role, const std::string& category, ClassifierBackend& backend,
                                   const Vocabulary& vocabulary = Vocabulary());

FunctionalSet build_functional_set(const std::string& object_id, const std::vector<FunctionalRegion>& regions,
                                   const PointCloud& cloud, const std::vector<std::string>& region_labels,
                                   const std::string& verb, Role role, const std::string& category,
                                   ClassifierBackend& backend, const Vocabulary& vocabulary = Vocabulary());

json functional_set_to_json(const FunctionalSet& fs);
FunctionalSet functional_set_from_json(const json& j);

}  // namespace funcanon
