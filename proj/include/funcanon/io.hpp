#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "funcanon/geometry.hpp"

namespace funcanon {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view content);
json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const json& j);
// One JSON document per non-empty line.
std::vector<json> read_json_lines(const std::filesystem::path& path);

// Meters per unit for "m", "cm", "mm". Throws kParseError otherwise.
double unit_scale(std::string_view units);

json vec_to_json(const VecX& v);
json vec3_to_json(const Vec3& v);
VecX vec_from_json(const json& j);
Vec3 vec3_from_json(const json& j);

// {rotation: 9 floats row-major, translation: 3 floats}
json pose_to_json(const SE3Pose& p);
SE3Pose pose_from_json(const json& j, double scale = 1.0);

// Array of {rotation, translation, gripper}. The frame tag is not part of the array.
json waypoints_to_json(const Trajectory& t);
Trajectory trajectory_from_json(const json& waypoints, FrameTag frame, double scale = 1.0);

// {points: [[x,y,z]...], features?: [[...]...], units?: "m"}
json cloud_to_json(const PointCloud& cloud);
PointCloud cloud_from_json(const json& j);

// ASCII PLY with vertex properties x y z followed by any number of scalar features.
PointCloud parse_ply(std::string_view text);
std::string format_ply(const PointCloud& cloud);

// Dispatches on extension: .ply is PLY, anything else JSON.
PointCloud load_cloud(const std::filesystem::path& path);

}  // namespace funcanon
