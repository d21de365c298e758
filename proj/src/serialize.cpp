#include "kinepose/serialize.hpp"

#include <cmath>
#include <fstream>

#include "kinepose/error.hpp"
#include "kinepose/synth.hpp"

namespace kinepose {

std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string fnv1a64_hex(const std::string& bytes) {
    static const char* digits = "0123456789abcdef";
    std::uint64_t h = fnv1a64(bytes);
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = digits[h & 0xf];
        h >>= 4;
    }
    return out;
}

nlohmann::json quat_to_json(const UnitQuaternion& q) {
    return nlohmann::json::array({q.w, q.x, q.y, q.z});
}

UnitQuaternion quat_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 4)
        throw Error(ErrorCode::MalformedData, "quaternion must be [w,x,y,z]");
    return UnitQuaternion(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
                          j[3].get<double>());
}

UnitQuaternion quat_from_json_exact(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 4)
        throw Error(ErrorCode::MalformedData, "quaternion must be [w,x,y,z]");
    // Values were serialized from unit quaternions; re-normalizing here could
    // wobble the last bit and break lossless round trips.
    return UnitQuaternion::from_components_unchecked(
        j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>());
}

nlohmann::json vec3_to_json(const Vec3& v) { return nlohmann::json::array({v.x, v.y, v.z}); }

Vec3 vec3_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 3)
        throw Error(ErrorCode::MalformedData, "vector must be [x,y,z]");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

nlohmann::json skeleton_to_json(const Skeleton& skel) {
    bool any_frame = false;
    for (int j = 0; j < skel.tree.joint_count; ++j) {
        const auto& f = skel.rest.frame_global_to_local[j];
        if (f.w != 1.0 || f.x != 0.0 || f.y != 0.0 || f.z != 0.0) any_frame = true;
    }
    nlohmann::json joints = nlohmann::json::array();
    for (int j = 0; j < skel.tree.joint_count; ++j) {
        nlohmann::json e;
        e["name"] = skel.tree.names[j];
        e["parent"] = skel.tree.parent[j] < 0 ? nlohmann::json(nullptr)
                                              : nlohmann::json(skel.tree.parent[j]);
        e["rest_mm"] = vec3_to_json(skel.rest.positions.p[j]);
        if (any_frame) e["frame"] = quat_to_json(skel.rest.frame_global_to_local[j]);
        joints.push_back(e);
    }
    nlohmann::json imus = nlohmann::json::array();
    for (const auto& a : skel.tree.imus)
        imus.push_back({{"joint", a.joint}, {"sensor", a.sensor}});
    return {{"format", "kinepose-skeleton"}, {"version", 1}, {"joints", joints}, {"imus", imus}};
}

Skeleton skeleton_from_json(const nlohmann::json& j) {
    try {
        if (j.value("format", "") != "kinepose-skeleton")
            throw Error(ErrorCode::BadConfig, "not a skeleton config");
        if (j.value("version", 0) != 1)
            throw Error(ErrorCode::VersionMismatch, "unsupported skeleton config version");
        std::vector<int> parents;
        std::vector<std::string> names;
        Pose3D t_pose;
        std::vector<UnitQuaternion> frames;
        bool any_frame = false;
        for (const auto& e : j.at("joints")) {
            names.push_back(e.at("name").get<std::string>());
            parents.push_back(e.at("parent").is_null() ? -1 : e.at("parent").get<int>());
            t_pose.p.push_back(vec3_from_json(e.at("rest_mm")));
            if (e.contains("frame")) {
                frames.push_back(quat_from_json(e.at("frame")));
                any_frame = true;
            } else {
                frames.push_back(UnitQuaternion::identity());
            }
        }
        std::vector<ImuAssignment> imus;
        for (const auto& e : j.value("imus", nlohmann::json::array()))
            imus.push_back({e.at("joint").get<int>(), e.at("sensor").get<int>()});
        Skeleton s;
        s.tree = build_tree(parents, names, imus);
        s.rest = build_rest_pose(s.tree, t_pose, any_frame ? frames : std::vector<UnitQuaternion>{});
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::BadConfig, std::string("skeleton config: ") + e.what());
    }
}

nlohmann::json calibration_to_json(const CalibrationSet& cal) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& s : cal.sensors)
        out.push_back({{"sensor", s.sensor},
                       {"q_kb", quat_to_json(s.imu_bone_offset)},
                       {"q_kg", quat_to_json(s.imu_ref_global_offset)}});
    return out;
}

CalibrationSet calibration_from_json(const nlohmann::json& j) {
    CalibrationSet cal;
    for (const auto& e : j) {
        SensorCalibration s;
        s.sensor = e.at("sensor").get<int>();
        s.imu_bone_offset = quat_from_json_exact(e.at("q_kb"));
        s.imu_ref_global_offset = quat_from_json_exact(e.at("q_kg"));
        cal.sensors.push_back(s);
    }
    return cal;
}

std::string make_record(const nlohmann::json& data) {
    const std::string payload = data.dump();
    nlohmann::json rec;
    rec["data"] = data;
    rec["fnv"] = fnv1a64_hex(payload);
    return rec.dump();
}

nlohmann::json parse_record(const std::string& line, const std::string& what) {
    nlohmann::json rec;
    try {
        rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MalformedData, what + ": unparsable record: " + e.what());
    }
    if (!rec.is_object() || !rec.contains("data") || !rec.contains("fnv"))
        throw Error(ErrorCode::MalformedData, what + ": record missing data/fnv fields");
    const std::string expect = rec["fnv"].get<std::string>();
    const std::string actual = fnv1a64_hex(rec["data"].dump());
    if (expect != actual)
        throw Error(ErrorCode::ChecksumMismatch,
                    what + ": checksum mismatch (stored " + expect + ", computed " + actual + ")");
    return rec["data"];
}

void write_pose_sequence(const PoseSequence& seq, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::Io, "cannot write pose file: " + path);
    nlohmann::json header = {{"format", "kinepose-poses"},
                             {"version", 1},
                             {"joints", seq.joint_names},
                             {"frames", seq.poses.size()}};
    out << make_record(header) << "\n";
    for (std::size_t i = 0; i < seq.poses.size(); ++i) {
        nlohmann::json p = nlohmann::json::array();
        for (const Vec3& v : seq.poses[i].p) p.push_back(vec3_to_json(v));
        out << make_record({{"i", i}, {"p", p}}) << "\n";
    }
}

PoseSequence read_pose_sequence(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open pose file: " + path);
    std::string line;
    if (!std::getline(in, line))
        throw Error(ErrorCode::MalformedData, path + ": empty file");
    const nlohmann::json header = parse_record(line, path);
    if (header.value("format", "") != "kinepose-poses")
        throw Error(ErrorCode::MalformedData, path + ": not a pose-sequence file");
    if (header.value("version", 0) != 1)
        throw Error(ErrorCode::VersionMismatch, path + ": unsupported pose file version");

    PoseSequence seq;
    seq.joint_names = header.at("joints").get<std::vector<std::string>>();
    const std::size_t frames = header.at("frames").get<std::size_t>();
    for (std::size_t i = 0; i < frames; ++i) {
        if (!std::getline(in, line))
            throw Error(ErrorCode::MalformedData, path + ": truncated at frame " + std::to_string(i));
        const nlohmann::json data = parse_record(line, path);
        if (data.value("i", std::size_t(-1)) != i)
            throw Error(ErrorCode::MalformedData, path + ": frame index out of order");
        Pose3D pose;
        for (const auto& v : data.at("p")) pose.p.push_back(vec3_from_json(v));
        if (pose.p.size() != seq.joint_names.size())
            throw Error(ErrorCode::MalformedData, path + ": wrong joint count in frame");
        seq.poses.push_back(std::move(pose));
    }
    return seq;
}

PoseSequence read_pose_sequence_any(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::MalformedData, path + ": empty file");
    std::string format;
    try {
        const nlohmann::json rec = nlohmann::json::parse(line);
        format = rec.at("data").value("format", "");
    } catch (const nlohmann::json::exception&) {
        throw Error(ErrorCode::MalformedData, path + ": unrecognized file");
    }
    in.close();

    if (format == "kinepose-poses") return read_pose_sequence(path);
    if (format == "kinepose-dataset") {
        const SequenceDataset ds = read_dataset(path);
        PoseSequence seq;
        seq.joint_names = ds.skeleton.tree.names;
        seq.poses.reserve(ds.frames.size());
        for (const auto& f : ds.frames) seq.poses.push_back(f.gt_pose);
        return seq;
    }
    throw Error(ErrorCode::MalformedData, path + ": unrecognized format '" + format + "'");
}

}  // namespace kinepose
