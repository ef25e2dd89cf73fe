#pragma once

#include <string>

namespace funcanon {

inline constexpr const char* kGripperActor = "robot gripper";

/// One <actor, verb, object> action chunk.
struct AVOPrimitive {
  int step = 1;
  std::string verb;
  std::string actor;
  std::string object;
  bool operator==(const AVOPrimitive&) const = default;
};

// The object whose functional part a primitive is defined against: the grasped object
// for "grasp", otherwise the actor (the kettle's spout when pouring).
inline const std::string& functional_entity(const AVOPrimitive& p) {
  return p.verb == "grasp" ? p.object : p.actor;
}

}  // namespace funcanon
