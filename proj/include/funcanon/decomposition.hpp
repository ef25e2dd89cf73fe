#pragma once

#include <memory>
#include <string>
#include <vector>

#include "funcanon/chat_client.hpp"
#include "funcanon/primitive.hpp"
#include "funcanon/recognition.hpp"

namespace funcanon {

struct TaskPlan {
  std::string task;
  std::vector<AVOPrimitive> steps;
  bool operator==(const TaskPlan&) const = default;
};

// {"task", "steps": [{"step", "action", "actor", "object"}]} in that key order.
ordered_json plan_to_json(const TaskPlan& plan);
// Strict: missing, extra or mistyped keys throw kProtocolError.
TaskPlan plan_from_json(const json& j);

// Lowercase, punctuation dropped, whitespace collapsed.
std::string normalize_task(const std::string& task);

struct PlanRegistry {
  std::vector<std::string> objects;  // empty: object names unchecked
  Vocabulary vocabulary;
};

struct PlanViolation {
  int step = 0;  // 0 for plan-level violations
  std::string rule;
  std::string message;
};

std::vector<PlanViolation> validate_plan(const TaskPlan& plan, const PlanRegistry& registry);

class DecomposerBackend {
 public:
  virtual ~DecomposerBackend() = default;
  virtual TaskPlan decompose(const std::string& task, const std::vector<std::string>& objects) = 0;
};

// Templates: "put|place A in|into B", "stuck|stack|insert A into|in B", "pour [X from] A into|in B",
// "water B with A", and a bare "pour ..." that takes actor and receiver from the object list.
// Clauses joined by "then" become consecutive primitives; each manipulation is preceded
// by a gripper grasp unless the actor is still held.
class RulesDecomposer final : public DecomposerBackend {
 public:
  TaskPlan decompose(const std::string& task, const std::vector<std::string>& objects) override;
};

// Sends the few-shot planning prompt to a chat model and validates the JSON reply.
class RemoteDecomposer final : public DecomposerBackend {
 public:
  RemoteDecomposer(std::shared_ptr<ChatClient> client, std::string model = "gpt-4o");
  TaskPlan decompose(const std::string& task, const std::vector<std::string>& objects) override;

  ChatRequest build_request(const std::string& task) const;
  static std::string cache_key(const std::string& task, const std::vector<std::string>& objects);

 private:
  std::shared_ptr<ChatClient> client_;
  std::string model_;
};

// Runs the backend and checks the plan: kCannotDecompose for empty tasks, kProtocolError
// when a plan violates validate_plan.
TaskPlan decompose(const std::string& task, const std::vector<std::string>& objects, DecomposerBackend& backend,
                   const Vocabulary& vocabulary = Vocabulary());

}  // namespace funcanon
