#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "funcanon/evaluation.hpp"
#include "funcanon/fixtures.hpp"
#include "funcanon/region_proposal.hpp"

namespace funcanon {

struct PipelineConfig {
  struct ObjectSpec {
    std::string object_id;
    std::string category;  // recognition category
    std::filesystem::path cloud;
  };
  struct Query {
    std::string verb;
    Role role = Role::kActive;
  };

  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "funcanon-out";
  std::string category = "vessel";  // alignment group shared by all objects
  std::vector<ObjectSpec> objects;

  std::string provider = "geometric";
  int m = kDefaultRegionCount;
  ProposalOptions proposal;

  std::string backend = "oracle";
  std::filesystem::path oracle_table;
  std::filesystem::path cache;
  std::vector<Query> queries{{"grasp", Role::kActive}, {"pour", Role::kActive}};

  std::string anchor;  // defaults to the first object
  VectorNormalization normalization = VectorNormalization::kPointMean;

  std::filesystem::path demos;
  std::vector<std::string> targets;
  TransferMethod method = TransferMethod::kOffset;

  bool train_enabled = true;
  TrainConfig train;

  std::vector<std::string> executors{"transfer", "policy"};
  EvalOptions eval;
  Tolerances tolerances;
  double execution_noise = 0.0;
  std::string task = "pour water";
  std::string receiver = "cup";

  // Relative paths resolve against `base_dir`. Unknown keys throw kParseError.
  static PipelineConfig from_json(const json& j, const std::filesystem::path& base_dir = {});
  static PipelineConfig load(const std::filesystem::path& path);
};

class StageError : public Error {
 public:
  StageError(std::string stage, ErrorCode cause, const std::string& message)
      : Error(cause, stage + " stage failed: " + message), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

// Runs propose, recognize, align, transfer, train and evaluate, persisting each stage's
// artifacts under output_dir. Returns the report, also written to output_dir/report.json.
// On failure writes output_dir/failure.json and throws StageError.
json run_pipeline(const PipelineConfig& config);

// Policy training pairs from transfer records: the source object in each demo's
// primitive is replaced by the record's target.
std::vector<TrainingExample> build_training_set(const std::vector<TransferRecord>& records,
                                                const std::vector<Demonstration>& demos,
                                                const StateEncoder& encoder, const PolicyDims& dims);

// Objects, demonstrations, oracle table and a ready-to-run pipeline.json under `dir`.
std::filesystem::path write_fixture_inputs(const std::filesystem::path& dir, std::uint64_t seed = 0);

}  // namespace funcanon
