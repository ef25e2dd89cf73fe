#include "funcanon/decomposition.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <set>

#include "funcanon/error.hpp"

namespace funcanon {

ordered_json plan_to_json(const TaskPlan& plan) {
  ordered_json j;
  j["task"] = plan.task;
  j["steps"] = ordered_json::array();
  for (const auto& s : plan.steps) {
    ordered_json step;
    step["step"] = s.step;
    step["action"] = s.verb;
    step["actor"] = s.actor;
    step["object"] = s.object;
    j["steps"].push_back(std::move(step));
  }
  return j;
}

TaskPlan plan_from_json(const json& j) {
  auto fail = [](const std::string& why) { return Error(ErrorCode::kProtocolError, "plan schema: " + why); };
  if (!j.is_object()) throw fail("plan is not an object");
  for (const auto& [key, _] : j.items()) {
    if (key != "task" && key != "steps") throw fail("unexpected key '" + key + "'");
  }
  if (!j.contains("task") || !j["task"].is_string()) throw fail("task must be a string");
  if (!j.contains("steps") || !j["steps"].is_array()) throw fail("steps must be an array");
  TaskPlan plan{j["task"].get<std::string>(), {}};
  for (const auto& s : j["steps"]) {
    if (!s.is_object() || s.size() != 4) throw fail("each step needs exactly step, action, actor, object");
    if (!s.contains("step") || !s["step"].is_number_integer()) throw fail("step must be an integer");
    for (const char* key : {"action", "actor", "object"}) {
      if (!s.contains(key) || !s[key].is_string()) throw fail(std::string(key) + " must be a string");
    }
    plan.steps.push_back({s["step"].get<int>(), s["action"].get<std::string>(), s["actor"].get<std::string>(),
                          s["object"].get<std::string>()});
  }
  return plan;
}

std::string normalize_task(const std::string& task) {
  std::string out;
  bool space = false;
  for (char c : task) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u) || c == '-' || c == '\'') {
      if (space && !out.empty()) out.push_back(' ');
      space = false;
      out.push_back(static_cast<char>(std::tolower(u)));
    } else if (std::isspace(u)) {
      space = true;
    } else {
      // Punctuation separates words but is dropped.
      space = true;
    }
  }
  return out;
}

std::vector<PlanViolation> validate_plan(const TaskPlan& plan, const PlanRegistry& registry) {
  std::vector<PlanViolation> out;
  if (plan.task.empty()) out.push_back({0, "task", "task description is empty"});
  if (plan.steps.empty()) out.push_back({0, "non-empty", "plan has no steps"});
  std::set<std::string> known(registry.objects.begin(), registry.objects.end());
  std::set<std::string> grasped;
  for (std::size_t i = 0; i < plan.steps.size(); ++i) {
    const auto& s = plan.steps[i];
    const int expected = static_cast<int>(i) + 1;
    if (s.step != expected) {
      out.push_back({s.step, "contiguity",
                     "step " + std::to_string(s.step) + " found where " + std::to_string(expected) + " was expected"});
    }
    if (!registry.vocabulary.contains(s.verb)) {
      out.push_back({s.step, "vocabulary", "verb '" + s.verb + "' is not in the vocabulary"});
    }
    if (s.actor == s.object) out.push_back({s.step, "actor-object", "actor and object are both '" + s.actor + "'"});
    if (!known.empty()) {
      if (s.actor != kGripperActor && !known.contains(s.actor)) {
        out.push_back({s.step, "known-object", "unknown actor '" + s.actor + "'"});
      }
      if (!known.contains(s.object)) out.push_back({s.step, "known-object", "unknown object '" + s.object + "'"});
    }
    if (s.verb == "grasp") {
      grasped.insert(s.object);
    } else if (s.actor != kGripperActor && !grasped.contains(s.actor)) {
      out.push_back({s.step, "grasp-first", "'" + s.actor + "' is used before any step grasps it"});
    }
  }
  return out;
}

namespace {

std::string strip_article(std::string s) {
  for (const char* a : {"the ", "a ", "an "}) {
    const std::string art = a;
    if (s.rfind(art, 0) == 0) return s.substr(art.size());
  }
  return s;
}

std::vector<std::string> split_clauses(const std::string& task) {
  static const std::regex sep(R"( (?:and )?then )");
  std::vector<std::string> out;
  std::sregex_token_iterator it(task.begin(), task.end(), sep, -1);
  for (; it != std::sregex_token_iterator(); ++it) {
    std::string c = *it;
    if (c.rfind("then ", 0) == 0) c = c.substr(5);
    if (!c.empty()) out.push_back(c);
  }
  return out;
}

struct Clause {
  std::string verb;
  std::string actor;
  std::string object;
};

Clause match_clause(const std::string& clause, const std::vector<std::string>& objects) {
  static const std::regex insert_re(R"(^(?:stuck|stack|insert) (.+?) (?:into|in|inside|onto) (.+)$)");
  static const std::regex place_re(R"(^(?:put|place) (.+?) (?:into|in|inside|on|onto) (.+)$)");
  static const std::regex pour_from_re(R"(^pour (?:.+ )?from (.+?) (?:into|in) (.+)$)");
  static const std::regex pour_re(R"(^pour (.+?) (?:into|in) (.+)$)");
  static const std::regex water_re(R"(^water (.+?) with (.+)$)");
  static const std::regex bare_pour_re(R"(^pour(?: .*)?$)");
  std::smatch m;
  if (std::regex_match(clause, m, insert_re)) return {"insert", strip_article(m[1]), strip_article(m[2])};
  if (std::regex_match(clause, m, place_re)) return {"place", strip_article(m[1]), strip_article(m[2])};
  if (std::regex_match(clause, m, pour_from_re)) return {"pour", strip_article(m[1]), strip_article(m[2])};
  if (std::regex_match(clause, m, pour_re)) return {"pour", strip_article(m[1]), strip_article(m[2])};
  if (std::regex_match(clause, m, water_re)) return {"water", strip_article(m[2]), strip_article(m[1])};
  if (std::regex_match(clause, m, bare_pour_re)) {
    if (objects.size() < 2) {
      throw Error(ErrorCode::kCannotDecompose, "'" + clause + "' names no vessels and fewer than two objects are known");
    }
    return {"pour", objects[0], objects[1]};
  }
  throw Error(ErrorCode::kCannotDecompose, "no template matches '" + clause + "'");
}

}  // namespace

TaskPlan RulesDecomposer::decompose(const std::string& task, const std::vector<std::string>& objects) {
  const std::string normalized = normalize_task(task);
  if (normalized.empty()) throw Error(ErrorCode::kCannotDecompose, "empty task");
  TaskPlan plan{normalized, {}};
  std::string held;
  for (const auto& clause : split_clauses(normalized)) {
    Clause c = match_clause(clause, objects);
    for (const auto* name : {&c.actor, &c.object}) {
      if (!objects.empty() && std::find(objects.begin(), objects.end(), *name) == objects.end()) {
        throw Error(ErrorCode::kCannotDecompose, "'" + *name + "' is not among the known objects");
      }
    }
    if (held != c.actor) {
      plan.steps.push_back({static_cast<int>(plan.steps.size()) + 1, "grasp", kGripperActor, c.actor});
    }
    plan.steps.push_back({static_cast<int>(plan.steps.size()) + 1, c.verb, c.actor, c.object});
    // Pouring keeps the vessel in hand; placing and inserting release it.
    held = (c.verb == "pour" || c.verb == "water") ? c.actor : std::string();
  }
  return plan;
}

RemoteDecomposer::RemoteDecomposer(std::shared_ptr<ChatClient> client, std::string model)
    : client_(std::move(client)), model_(std::move(model)) {}

ChatRequest RemoteDecomposer::build_request(const std::string& task) const {
  static const char* kContext =
      "You control a single robot arm with a parallel gripper.\n"
      "Split the household task below into the fewest steps that each apply one action verb.\n"
      "Every step names the actor doing the action and the object receiving it.\n"
      "An object must be grasped by the robot gripper before it can act on anything.\n"
      "Reply with JSON only.\n";
  TaskPlan example{"pour water",
                   {{1, "grasp", kGripperActor, "teapot"}, {2, "pour", "teapot", "cup"}}};
  static const char* kFormat =
      "{\"task\": string, \"steps\": [{\"step\": integer starting at 1, \"action\": verb, "
      "\"actor\": \"robot gripper\" or a held object, \"object\": target object}]}";
  ChatRequest r;
  r.model = model_;
  r.messages.push_back({"system", std::string(kContext) + "Example:\n" + plan_to_json(example).dump(2) +
                                      "\nSchema:\n" + kFormat});
  r.messages.push_back({"user", "Task: " + task});
  return r;
}

std::string RemoteDecomposer::cache_key(const std::string& task, const std::vector<std::string>& objects) {
  std::string text = "task=" + task + ";objects=";
  for (const auto& o : objects) text += o + ",";
  return "decompose:" + stable_hash(text);
}

TaskPlan RemoteDecomposer::decompose(const std::string& task, const std::vector<std::string>& objects) {
  std::string reply = client_->complete(build_request(task), cache_key(task, objects));
  // Markdown code fences are framing, not content.
  static const std::regex fence(R"(^\s*```(?:json)?\s*([\s\S]*?)\s*```\s*$)");
  std::smatch m;
  if (std::regex_match(reply, m, fence)) reply = m[1];
  json j;
  try {
    j = json::parse(reply);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kProtocolError, std::string("plan reply is not JSON: ") + e.what());
  }
  return plan_from_json(j);
}

TaskPlan decompose(const std::string& task, const std::vector<std::string>& objects, DecomposerBackend& backend,
                   const Vocabulary& vocabulary) {
  if (normalize_task(task).empty()) throw Error(ErrorCode::kCannotDecompose, "empty task");
  TaskPlan plan = backend.decompose(task, objects);
  const auto violations = validate_plan(plan, {objects, vocabulary});
  if (!violations.empty()) {
    std::string why;
    for (const auto& v : violations) why += " [step " + std::to_string(v.step) + " " + v.rule + ": " + v.message + "]";
    throw Error(ErrorCode::kProtocolError, "plan rejected:" + why);
  }
  return plan;
}

}  // namespace funcanon
