#include "kinepose/synth.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "kinepose/error.hpp"
#include "kinepose/serialize.hpp"

namespace kinepose {

namespace {

Vec3 draw_step(Rng& rng, double sigma, double cap) {
    Vec3 step{rng.normal(sigma), rng.normal(sigma), rng.normal(sigma)};
    const double n = step.norm();
    if (n > cap && n > 0.0) step = step * (cap / n);
    return step;
}

double draw_scalar_step(Rng& rng, double sigma, double cap) {
    double step = rng.normal(sigma);
    if (step > cap) step = cap;
    if (step < -cap) step = -cap;
    return step;
}

// Bounded walk: try the step, bounce off the cap, otherwise stay.
void walk_vec(Vec3& state, const Vec3& step, double amp_cap) {
    if ((state + step).norm() <= amp_cap)
        state += step;
    else if ((state - step).norm() <= amp_cap)
        state -= step;
}

void walk_scalar(double& state, double step, double amp_cap) {
    if (std::abs(state + step) <= amp_cap)
        state += step;
    else if (std::abs(state - step) <= amp_cap)
        state -= step;
}

}  // namespace

std::vector<PoseParams> generate_motion(const KinematicTree& tree, const RestPose& rest,
                                        int n_frames, std::uint64_t seed,
                                        const MotionConfig& config) {
    if (n_frames < 1) throw Error(ErrorCode::InvalidArgument, "n_frames must be >= 1");
    Rng rng(seed);
    const int bones = tree.bone_count();

    std::vector<Vec3> swing(bones);       // rotation-vector state
    std::vector<double> twist(bones, 0.0);  // angle about the bone's own axis
    Vec3 root_offset{};

    auto step_all = [&] {
        for (int b = 0; b < bones; ++b) {
            walk_vec(swing[b], draw_step(rng, config.step_sigma, config.step_cap), config.amp_cap);
            walk_scalar(twist[b],
                        draw_scalar_step(rng, config.twist_step_sigma, config.twist_step_cap),
                        config.twist_amp_cap);
        }
        walk_vec(root_offset, draw_step(rng, config.root_step_sigma, 3.0 * config.root_step_sigma),
                 config.root_amp_cap);
    };

    std::vector<Vec3> twist_axes(bones);
    for (int b = 0; b < bones; ++b) twist_axes[b] = normalized(rest.bone_local[b]);

    for (int i = 0; i < config.burn_in; ++i) step_all();

    std::vector<PoseParams> out;
    out.reserve(n_frames);
    const Vec3 rest_root = rest.positions.p[tree.root];
    for (int f = 0; f < n_frames; ++f) {
        PoseParams p;
        p.root_translation = rest_root + root_offset;
        p.local_rotations.resize(bones);
        for (int b = 0; b < bones; ++b) {
            const UnitQuaternion tw =
                axis_angle_to_quat(AxisAngle{twist_axes[b], std::abs(twist[b])});
            const UnitQuaternion tw_signed =
                twist[b] >= 0.0 ? tw : quat_inv(tw);
            p.local_rotations[b] = quat_mul(quat_exp_rotvec(swing[b]), tw_signed);
        }
        out.push_back(std::move(p));
        step_all();
    }
    return out;
}

Pose3D simulate_vision(const Pose3D& gt_pose, const KinematicTree& tree,
                       const NoiseConfig& noise, Rng& rng) {
    if (gt_pose.joints() != tree.joint_count)
        throw Error(ErrorCode::DimensionMismatch, "pose sized for a different tree");
    Pose3D out = gt_pose;

    // Structural stage first: multiplicative bone-length noise, rebuilt
    // top-down so downstream joints drift with their stretched ancestors.
    if (noise.bone_scale_sigma > 0.0) {
        Pose3D rebuilt;
        rebuilt.p.resize(tree.joint_count);
        for (const int j : tree.topo_order) {
            if (tree.is_root(j)) {
                rebuilt.p[j] = out.p[j];
                continue;
            }
            const int pa = tree.parent[j];
            const double scale = 1.0 + rng.normal(noise.bone_scale_sigma);
            rebuilt.p[j] = rebuilt.p[pa] + (out.p[j] - out.p[pa]) * scale;
        }
        out = rebuilt;
    }

    if (noise.vision_jitter_sigma > 0.0) {
        for (int j = 0; j < tree.joint_count; ++j)
            out.p[j] += Vec3{rng.normal(noise.vision_jitter_sigma),
                             rng.normal(noise.vision_jitter_sigma),
                             rng.normal(noise.vision_jitter_sigma)};
    }

    if (noise.occlusion_prob > 0.0) {
        for (const int j : tree.imu_joints()) {
            if (rng.uniform01() < noise.occlusion_prob)
                out.p[j] += Vec3{rng.normal(noise.occlusion_sigma),
                                 rng.normal(noise.occlusion_sigma),
                                 rng.normal(noise.occlusion_sigma)};
        }
    }
    return out;
}

std::vector<ImuSample> simulate_imu(const PoseParams& gt_params, const RestPose& rest,
                                    const KinematicTree& tree, const CalibrationSet& cal,
                                    double drift_rate, ImuDriftState& state, Rng& rng) {
    if (state.drift.size() != tree.imus.size())
        state.drift.assign(tree.imus.size(), UnitQuaternion::identity());

    const std::vector<UnitQuaternion> total = fk_total_rotations(gt_params, rest, tree);

    std::vector<ImuSample> out;
    out.reserve(tree.imus.size());
    const double step_sigma = drift_rate / std::sqrt(3.0);
    for (std::size_t k = 0; k < tree.imus.size(); ++k) {
        const ImuAssignment& a = tree.imus[k];
        const SensorCalibration& c = cal.find(a.sensor);

        // True global bone rotation: the FK total rotation expressed against
        // the joint's rest frame.
        const UnitQuaternion q_true =
            quat_mul(total[tree.non_root_index[a.joint]], rest.frame_global_to_local[a.joint]);

        UnitQuaternion q_measured = q_true;
        if (drift_rate > 0.0) {
            const Vec3 step{rng.normal(step_sigma), rng.normal(step_sigma),
                            rng.normal(step_sigma)};
            state.drift[k] = quat_mul(quat_exp_rotvec(step), state.drift[k]);
            q_measured = quat_mul(state.drift[k], q_true);
        }

        // Invert the calibration composition: calibrate() recovers q_measured.
        ImuSample s;
        s.sensor = a.sensor;
        s.orientation =
            quat_mul(quat_inv(c.imu_ref_global_offset), quat_mul(c.imu_bone_offset, q_measured));
        out.push_back(s);
    }
    return out;
}

CalibrationSet random_calibration(const KinematicTree& tree, Rng& rng) {
    CalibrationSet cal;
    for (const auto& a : tree.imus) {
        SensorCalibration s;
        s.sensor = a.sensor;
        s.imu_bone_offset =
            UnitQuaternion(rng.normal(), rng.normal(), rng.normal(), rng.normal());
        s.imu_ref_global_offset =
            UnitQuaternion(rng.normal(), rng.normal(), rng.normal(), rng.normal());
        cal.sensors.push_back(s);
    }
    return cal;
}

CalibrationSet identity_calibration(const KinematicTree& tree) {
    CalibrationSet cal;
    for (const auto& a : tree.imus)
        cal.sensors.push_back({a.sensor, UnitQuaternion::identity(), UnitQuaternion::identity()});
    return cal;
}

SequenceDataset make_dataset(const Skeleton& skeleton, int sequences, int frames_per_sequence,
                             std::uint64_t seed, const MotionConfig& motion,
                             const NoiseConfig& noise) {
    if (sequences < 1 || frames_per_sequence < 1)
        throw Error(ErrorCode::InvalidArgument, "need at least one sequence and one frame");

    SequenceDataset ds;
    ds.skeleton = skeleton;
    ds.seed = seed;
    ds.sequences = sequences;
    ds.frames_per_sequence = frames_per_sequence;
    ds.motion = motion;
    ds.noise = noise;

    // Seed derivation is part of the format contract (docs/FORMATS.md).
    Rng cal_rng(splitmix64(seed ^ 0x63616cULL));
    ds.calibration = random_calibration(skeleton.tree, cal_rng);

    int index = 0;
    for (int s = 0; s < sequences; ++s) {
        const std::uint64_t motion_seed = splitmix64(seed ^ (0x100000000ULL + s));
        const std::uint64_t noise_seed = splitmix64(seed ^ (0x200000000ULL + s));
        const std::vector<PoseParams> params =
            generate_motion(skeleton.tree, skeleton.rest, frames_per_sequence, motion_seed, motion);
        Rng noise_rng(noise_seed);
        ImuDriftState drift;  // resets per sequence
        for (int f = 0; f < frames_per_sequence; ++f) {
            FrameRecord rec;
            rec.index = index++;
            rec.sequence = s;
            rec.gt_params = params[f];
            rec.gt_pose = fk(params[f], skeleton.rest, skeleton.tree);
            rec.vis_pose = simulate_vision(rec.gt_pose, skeleton.tree, noise, noise_rng);
            rec.imu_samples = simulate_imu(params[f], skeleton.rest, skeleton.tree, ds.calibration,
                                           noise.imu_drift_rate, drift, noise_rng);
            ds.frames.push_back(std::move(rec));
        }
    }
    return ds;
}

namespace {

nlohmann::json motion_to_json(const MotionConfig& m) {
    return {{"step_sigma", m.step_sigma},
            {"step_cap", m.step_cap},
            {"amp_cap", m.amp_cap},
            {"twist_step_sigma", m.twist_step_sigma},
            {"twist_step_cap", m.twist_step_cap},
            {"twist_amp_cap", m.twist_amp_cap},
            {"root_step_sigma", m.root_step_sigma},
            {"root_amp_cap", m.root_amp_cap},
            {"burn_in", m.burn_in}};
}

MotionConfig motion_from_json(const nlohmann::json& j) {
    MotionConfig m;
    m.step_sigma = j.value("step_sigma", m.step_sigma);
    m.step_cap = j.value("step_cap", m.step_cap);
    m.amp_cap = j.value("amp_cap", m.amp_cap);
    m.twist_step_sigma = j.value("twist_step_sigma", m.twist_step_sigma);
    m.twist_step_cap = j.value("twist_step_cap", m.twist_step_cap);
    m.twist_amp_cap = j.value("twist_amp_cap", m.twist_amp_cap);
    m.root_step_sigma = j.value("root_step_sigma", m.root_step_sigma);
    m.root_amp_cap = j.value("root_amp_cap", m.root_amp_cap);
    m.burn_in = j.value("burn_in", m.burn_in);
    return m;
}

nlohmann::json noise_to_json(const NoiseConfig& n) {
    return {{"vision_jitter_sigma", n.vision_jitter_sigma},
            {"occlusion_prob", n.occlusion_prob},
            {"occlusion_sigma", n.occlusion_sigma},
            {"bone_scale_sigma", n.bone_scale_sigma},
            {"imu_drift_rate", n.imu_drift_rate}};
}

NoiseConfig noise_from_json(const nlohmann::json& j) {
    NoiseConfig n;
    n.vision_jitter_sigma = j.value("vision_jitter_sigma", 0.0);
    n.occlusion_prob = j.value("occlusion_prob", 0.0);
    n.occlusion_sigma = j.value("occlusion_sigma", 0.0);
    n.bone_scale_sigma = j.value("bone_scale_sigma", 0.0);
    n.imu_drift_rate = j.value("imu_drift_rate", 0.0);
    return n;
}

nlohmann::json pose_to_json(const Pose3D& pose) {
    nlohmann::json out = nlohmann::json::array();
    for (const Vec3& v : pose.p) out.push_back(vec3_to_json(v));
    return out;
}

Pose3D pose_from_json(const nlohmann::json& j, int joints) {
    Pose3D pose;
    for (const auto& v : j) pose.p.push_back(vec3_from_json(v));
    if (pose.joints() != joints)
        throw Error(ErrorCode::MalformedData, "pose with wrong joint count");
    return pose;
}

}  // namespace

void write_dataset(const SequenceDataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::Io, "cannot write dataset: " + path);

    nlohmann::json header;
    header["format"] = "kinepose-dataset";
    header["version"] = 1;
    header["skeleton"] = skeleton_to_json(ds.skeleton);
    header["calibration"] = calibration_to_json(ds.calibration);
    header["provenance"] = {{"seed", ds.seed},
                            {"sequences", ds.sequences},
                            {"frames_per_sequence", ds.frames_per_sequence},
                            {"motion", motion_to_json(ds.motion)},
                            {"noise", noise_to_json(ds.noise)},
                            {"generator", ds.generator}};
    header["frames"] = ds.frames.size();
    out << make_record(header) << "\n";

    for (const auto& f : ds.frames) {
        nlohmann::json q = nlohmann::json::array();
        for (const auto& rot : f.gt_params.local_rotations) q.push_back(quat_to_json(rot));
        nlohmann::json imu = nlohmann::json::array();
        for (const auto& s : f.imu_samples)
            imu.push_back({{"sensor", s.sensor}, {"q", quat_to_json(s.orientation)}});
        nlohmann::json data = {{"i", f.index},
                               {"seq", f.sequence},
                               {"t1", vec3_to_json(f.gt_params.root_translation)},
                               {"q", q},
                               {"gt", pose_to_json(f.gt_pose)},
                               {"vis", pose_to_json(f.vis_pose)},
                               {"imu", imu}};
        out << make_record(data) << "\n";
    }
    if (!out) throw Error(ErrorCode::Io, "short write: " + path);
}

SequenceDataset read_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open dataset: " + path);

    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::MalformedData, path + ": empty file");
    const nlohmann::json header = parse_record(line, path);
    try {
        if (header.value("format", "") != "kinepose-dataset")
            throw Error(ErrorCode::MalformedData, path + ": not a dataset file");
        const int version = header.value("version", 0);
        if (version != 1)
            throw Error(ErrorCode::VersionMismatch,
                        path + ": dataset version " + std::to_string(version) +
                            " not supported (expected 1)");

        SequenceDataset ds;
        ds.skeleton = skeleton_from_json(header.at("skeleton"));
        ds.calibration = calibration_from_json(header.at("calibration"));
        const auto& prov = header.at("provenance");
        ds.seed = prov.value("seed", std::uint64_t(0));
        ds.sequences = prov.value("sequences", 1);
        ds.frames_per_sequence = prov.value("frames_per_sequence", 0);
        ds.motion = motion_from_json(prov.value("motion", nlohmann::json::object()));
        ds.noise = noise_from_json(prov.value("noise", nlohmann::json::object()));
        ds.generator = prov.value("generator", "");

        const std::size_t frames = header.at("frames").get<std::size_t>();
        const int joints = ds.skeleton.tree.joint_count;
        const int bones = ds.skeleton.tree.bone_count();
        for (std::size_t i = 0; i < frames; ++i) {
            if (!std::getline(in, line))
                throw Error(ErrorCode::MalformedData,
                            path + ": truncated (frame " + std::to_string(i) + " of " +
                                std::to_string(frames) + " missing)");
            const nlohmann::json data = parse_record(line, path);
            FrameRecord rec;
            rec.index = data.at("i").get<int>();
            if (rec.index != static_cast<int>(i))
                throw Error(ErrorCode::MalformedData, path + ": frame index out of order");
            rec.sequence = data.value("seq", 0);
            rec.gt_params.root_translation = vec3_from_json(data.at("t1"));
            for (const auto& qj : data.at("q"))
                rec.gt_params.local_rotations.push_back(quat_from_json_exact(qj));
            if (static_cast<int>(rec.gt_params.local_rotations.size()) != bones)
                throw Error(ErrorCode::MalformedData, path + ": wrong rotation count in frame");
            rec.gt_pose = pose_from_json(data.at("gt"), joints);
            rec.vis_pose = pose_from_json(data.at("vis"), joints);
            for (const auto& s : data.at("imu")) {
                ImuSample sample;
                sample.sensor = s.at("sensor").get<int>();
                sample.orientation = quat_from_json_exact(s.at("q"));
                rec.imu_samples.push_back(sample);
            }
            ds.frames.push_back(std::move(rec));
        }
        return ds;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MalformedData, path + ": " + e.what());
    }
}

}  // namespace kinepose
