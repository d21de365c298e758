#pragma once

// JSON conversions shared by the file formats (skeleton configs, datasets,
// pose sequences, reports) plus the FNV-1a record checksum. All formats are
// documented in docs/FORMATS.md.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "kinepose/imu.hpp"
#include "kinepose/skeleton.hpp"

namespace kinepose {

std::uint64_t fnv1a64(const std::string& bytes);
std::string fnv1a64_hex(const std::string& bytes);

nlohmann::json quat_to_json(const UnitQuaternion& q);
UnitQuaternion quat_from_json(const nlohmann::json& j);      // normalizing
UnitQuaternion quat_from_json_exact(const nlohmann::json& j);  // bit-preserving

nlohmann::json vec3_to_json(const Vec3& v);
Vec3 vec3_from_json(const nlohmann::json& j);

nlohmann::json skeleton_to_json(const Skeleton& skel);
Skeleton skeleton_from_json(const nlohmann::json& j);

nlohmann::json calibration_to_json(const CalibrationSet& cal);
CalibrationSet calibration_from_json(const nlohmann::json& j);

// One checksummed JSONL record: {"data": <payload>, "fnv": <hex>}.
std::string make_record(const nlohmann::json& data);
// Parses and verifies a record line; throws MalformedData / ChecksumMismatch.
nlohmann::json parse_record(const std::string& line, const std::string& what);

// Pose sequence files.
struct PoseSequence {
    std::vector<std::string> joint_names;
    std::vector<Pose3D> poses;
};

void write_pose_sequence(const PoseSequence& seq, const std::string& path);
PoseSequence read_pose_sequence(const std::string& path);

// Accepts either a pose-sequence file or a dataset file (ground-truth poses).
PoseSequence read_pose_sequence_any(const std::string& path);

}  // namespace kinepose
