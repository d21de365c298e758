#include "kinepose/skeleton.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "kinepose/error.hpp"
#include "kinepose/serialize.hpp"

namespace kinepose {

int KinematicTree::joint_of_sensor(int sensor) const {
    for (const auto& a : imus)
        if (a.sensor == sensor) return a.joint;
    throw Error(ErrorCode::UnknownSensor,
                "unknown sensor index " + std::to_string(sensor));
}

std::optional<int> KinematicTree::sensor_of_joint(int joint) const {
    for (const auto& a : imus)
        if (a.joint == joint) return a.sensor;
    return std::nullopt;
}

std::vector<int> KinematicTree::imu_joints() const {
    std::vector<int> js;
    js.reserve(imus.size());
    for (const auto& a : imus) js.push_back(a.joint);
    std::sort(js.begin(), js.end());
    return js;
}

KinematicTree build_tree(const std::vector<int>& parents,
                         const std::vector<std::string>& names,
                         const std::vector<ImuAssignment>& imu_assignments) {
    const int n = static_cast<int>(parents.size());
    std::vector<std::string> problems;

    if (n == 0) problems.push_back("empty joint list");
    if (names.size() != parents.size())
        problems.push_back("names/parents size mismatch");

    KinematicTree tree;
    tree.joint_count = n;
    tree.parent = parents;
    tree.names = names;
    tree.names.resize(n);

    int root = -1;
    int root_count = 0;
    for (int j = 0; j < n; ++j) {
        if (parents[j] < 0) {
            root = j;
            ++root_count;
        } else if (parents[j] >= n) {
            problems.push_back("joint " + std::to_string(j) + ": parent index out of range");
        } else if (parents[j] == j) {
            problems.push_back("joint " + std::to_string(j) + " is its own parent (cycle)");
        }
    }
    if (root_count == 0 && n > 0) problems.push_back("no root joint (every joint has a parent)");
    if (root_count > 1) problems.push_back("multiple roots (" + std::to_string(root_count) + ")");
    tree.root = root;

    // Reachability walk doubles as the cycle check.
    if (root >= 0 && root_count == 1) {
        std::vector<std::vector<int>> children(n);
        for (int j = 0; j < n; ++j)
            if (parents[j] >= 0 && parents[j] < n && parents[j] != j)
                children[parents[j]].push_back(j);
        std::vector<bool> seen(n, false);
        std::vector<int> stack{root};
        while (!stack.empty()) {
            const int j = stack.back();
            stack.pop_back();
            if (seen[j]) continue;
            seen[j] = true;
            tree.topo_order.push_back(j);
            // Reverse so children pop in ascending order.
            for (auto it = children[j].rbegin(); it != children[j].rend(); ++it)
                stack.push_back(*it);
        }
        for (int j = 0; j < n; ++j)
            if (!seen[j]) {
                problems.push_back("joint " + std::to_string(j) +
                                   " unreachable from root (cycle detected)");
            }
    }

    std::set<int> sensors;
    std::set<int> imu_joints;
    for (const auto& a : imu_assignments) {
        if (a.joint < 0 || a.joint >= n)
            problems.push_back("IMU assignment references unknown joint " + std::to_string(a.joint));
        else if (a.joint == root)
            problems.push_back("IMU assigned to the root joint");
        if (!sensors.insert(a.sensor).second)
            problems.push_back("duplicate sensor index " + std::to_string(a.sensor));
        if (a.joint >= 0 && !imu_joints.insert(a.joint).second)
            problems.push_back("joint " + std::to_string(a.joint) + " carries two IMUs");
    }

    if (!problems.empty()) {
        std::ostringstream os;
        os << "invalid kinematic tree:";
        for (const auto& p : problems) os << "\n  - " << p;
        throw Error(ErrorCode::InvalidArgument, os.str());
    }

    tree.imus = imu_assignments;
    std::sort(tree.imus.begin(), tree.imus.end(),
              [](const ImuAssignment& a, const ImuAssignment& b) { return a.sensor < b.sensor; });

    tree.non_root_index.assign(n, -1);
    int next = 0;
    for (int j = 0; j < n; ++j)
        if (j != root) tree.non_root_index[j] = next++;

    return tree;
}

RestPose build_rest_pose(const KinematicTree& tree, const Pose3D& t_pose,
                         std::vector<UnitQuaternion> frames) {
    if (t_pose.joints() != tree.joint_count)
        throw Error(ErrorCode::DimensionMismatch, "rest pose joint count mismatch");
    if (frames.empty()) frames.assign(tree.joint_count, UnitQuaternion::identity());
    if (static_cast<int>(frames.size()) != tree.joint_count)
        throw Error(ErrorCode::DimensionMismatch, "rest frame count mismatch");
    frames[tree.root] = UnitQuaternion::identity();

    RestPose rest;
    rest.positions = t_pose;
    rest.frame_global_to_local = std::move(frames);
    rest.bone_local.resize(tree.bone_count());
    rest.bone_length.resize(tree.bone_count());
    for (int j = 0; j < tree.joint_count; ++j) {
        if (tree.is_root(j)) continue;
        const Vec3 bone_global = t_pose.p[j] - t_pose.p[tree.parent[j]];
        const double len = bone_global.norm();
        if (len <= kDegenerateVecEps)
            throw Error(ErrorCode::DegenerateVector,
                        "rest bone ending at joint " + std::to_string(j) + " has zero length");
        const int b = tree.non_root_index[j];
        rest.bone_local[b] = quat_rotate_vec(rest.frame_global_to_local[j], bone_global);
        rest.bone_length[b] = len;
    }
    return rest;
}

std::vector<int> ancestor_chain(const KinematicTree& tree, int j) {
    if (j < 0 || j >= tree.joint_count)
        throw Error(ErrorCode::InvalidArgument, "joint index out of range");
    std::vector<int> chain;
    for (int a = tree.parent[j]; a >= 0; a = tree.parent[a]) chain.push_back(a);
    return chain;
}

UnitQuaternion relative_rest_rotation(const KinematicTree& tree, const RestPose& rest, int j) {
    if (tree.is_root(j))
        throw Error(ErrorCode::InvalidArgument, "root has no relative rest rotation");
    return quat_mul(rest.frame_global_to_local[j],
                    quat_inv(rest.frame_global_to_local[tree.parent[j]]));
}

std::vector<double> bone_lengths(const Pose3D& pose, const KinematicTree& tree) {
    if (pose.joints() != tree.joint_count)
        throw Error(ErrorCode::DimensionMismatch, "pose joint count mismatch");
    std::vector<double> lengths(tree.bone_count());
    for (int j = 0; j < tree.joint_count; ++j) {
        if (tree.is_root(j)) continue;
        lengths[tree.non_root_index[j]] = (pose.p[j] - pose.p[tree.parent[j]]).norm();
    }
    return lengths;
}

Skeleton default_skeleton() {
    // 16 joints: pelvis root, spine to nose, and the four limbs. T-pose with
    // y up and arms along x. 8 IMUs on thighs, calves, upper arms, forearms
    // (bone endpoints: knees, ankles, elbows, wrists).
    struct J {
        const char* name;
        int parent;
        Vec3 rest;
    };
    const std::vector<J> joints = {
        {"Hips", -1, {0, 1000, 0}},
        {"Belly", 0, {0, 1150, 0}},
        {"Neck", 1, {0, 1450, 0}},
        {"Nose", 2, {0, 1600, 40}},
        {"RightHip", 0, {-110, 980, 0}},
        {"RightKnee", 4, {-110, 560, 0}},
        {"RightAnkle", 5, {-110, 140, 0}},
        {"LeftHip", 0, {110, 980, 0}},
        {"LeftKnee", 7, {110, 560, 0}},
        {"LeftAnkle", 8, {110, 140, 0}},
        {"RightShoulder", 2, {-180, 1400, 0}},
        {"RightElbow", 10, {-450, 1400, 0}},
        {"RightWrist", 11, {-700, 1400, 0}},
        {"LeftShoulder", 2, {180, 1400, 0}},
        {"LeftElbow", 13, {450, 1400, 0}},
        {"LeftWrist", 14, {700, 1400, 0}},
    };
    std::vector<int> parents;
    std::vector<std::string> names;
    Pose3D t_pose;
    for (const auto& j : joints) {
        names.emplace_back(j.name);
        parents.push_back(j.parent);
        t_pose.p.push_back(j.rest);
    }
    const std::vector<ImuAssignment> imus = {
        {5, 1},   // right thigh
        {8, 2},   // left thigh
        {6, 3},   // right calf
        {9, 4},   // left calf
        {11, 5},  // right upper arm
        {14, 6},  // left upper arm
        {12, 7},  // right forearm
        {15, 8},  // left forearm
    };
    Skeleton s;
    s.tree = build_tree(parents, names, imus);
    s.rest = build_rest_pose(s.tree, t_pose);
    return s;
}

Skeleton load_skeleton_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open skeleton file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::BadConfig, "skeleton file parse error: " + std::string(e.what()));
    }
    return skeleton_from_json(j);
}

void save_skeleton_file(const Skeleton& skel, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::Io, "cannot write skeleton file: " + path);
    out << skeleton_to_json(skel).dump(2) << "\n";
}

}  // namespace kinepose
