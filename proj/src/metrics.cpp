#include "kinepose/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "kinepose/error.hpp"
#include "kinepose/fusion.hpp"

namespace kinepose {

MetricsReport mpjpe(const std::vector<Pose3D>& pred, const std::vector<Pose3D>& gt,
                    const KinematicTree& tree, nlohmann::json config_echo) {
    if (pred.size() != gt.size())
        throw Error(ErrorCode::DimensionMismatch,
                    "pred/gt frame counts differ (" + std::to_string(pred.size()) + " vs " +
                        std::to_string(gt.size()) + ")");
    if (pred.empty()) throw Error(ErrorCode::InvalidArgument, "no frames to evaluate");

    const int joints = tree.joint_count;
    MetricsReport r;
    r.joint_names = tree.names;
    r.per_joint_mm.assign(joints, 0.0);
    r.imu_related_joints = tree.imu_joints();
    r.frames = static_cast<int>(pred.size());
    r.config_echo = std::move(config_echo);

    // Frame-major, then joint.
    double total = 0.0;
    for (std::size_t f = 0; f < pred.size(); ++f) {
        if (pred[f].joints() != joints || gt[f].joints() != joints)
            throw Error(ErrorCode::DimensionMismatch, "pose joint count mismatch in frame " +
                                                          std::to_string(f));
        for (int j = 0; j < joints; ++j) {
            const double d = (pred[f].p[j] - gt[f].p[j]).norm();
            r.per_joint_mm[j] += d;
            total += d;
        }
    }
    for (double& v : r.per_joint_mm) v /= r.frames;
    r.mpjpe_mm = total / (static_cast<double>(r.frames) * joints);

    std::vector<bool> is_imu(joints, false);
    for (const int j : r.imu_related_joints) is_imu[j] = true;
    double imu_sum = 0.0, other_sum = 0.0;
    int imu_n = 0, other_n = 0;
    for (int j = 0; j < joints; ++j) {
        if (is_imu[j]) {
            imu_sum += r.per_joint_mm[j];
            ++imu_n;
        } else {
            other_sum += r.per_joint_mm[j];
            ++other_n;
        }
    }
    r.imu_related_mm = imu_n ? imu_sum / imu_n : 0.0;
    r.others_mm = other_n ? other_sum / other_n : 0.0;
    return r;
}

namespace {

AlignedImu aligned_subset(const AlignedImu& all, const std::vector<int>& sensors) {
    AlignedImu out;
    for (const auto& s : all)
        if (std::find(sensors.begin(), sensors.end(), s.sensor) != sensors.end())
            out.push_back(s);
    return out;
}

nlohmann::json theta_json(double theta) {
    if (std::isinf(theta)) return "inf";
    return theta;
}

}  // namespace

SweepTable sweep_theta(const SequenceDataset& ds, const std::string& method,
                       const std::vector<double>& theta_grid, ScreenReference ref) {
    if (theta_grid.empty()) throw Error(ErrorCode::InvalidArgument, "empty theta grid");
    if (method != "naive" && method != "kine")
        throw Error(ErrorCode::InvalidArgument, "sweep method must be naive or kine");

    const KinematicTree& tree = ds.skeleton.tree;
    const RestPose& rest = ds.skeleton.rest;

    std::vector<AlignedImu> aligned;
    aligned.reserve(ds.frames.size());
    std::vector<Pose3D> gt;
    for (const auto& f : ds.frames) {
        aligned.push_back(align_frame(f.imu_samples, ds.calibration, rest, tree));
        gt.push_back(f.gt_pose);
    }

    SweepTable table;
    table.method = method;
    for (const double theta : theta_grid) {
        SweepRow row;
        row.theta_t = theta;
        std::vector<Pose3D> fused;
        fused.reserve(ds.frames.size());
        for (std::size_t i = 0; i < ds.frames.size(); ++i) {
            FuseStats stats;
            if (method == "naive")
                fused.push_back(
                    naive_fuse(ds.frames[i].vis_pose, aligned[i], tree, rest, theta, &stats));
            else
                fused.push_back(
                    kine_fuse(ds.frames[i].vis_pose, aligned[i], rest, tree, theta, ref, &stats)
                        .pose);
            row.replaced_bones += static_cast<long>(stats.replaced_joints.size());
        }
        row.report = mpjpe(fused, gt, tree,
                           {{"method", method}, {"theta_t", theta_json(theta)}});
        table.rows.push_back(std::move(row));
    }

    table.best = 0;
    for (std::size_t i = 1; i < table.rows.size(); ++i)
        if (table.rows[i].report.mpjpe_mm < table.rows[table.best].report.mpjpe_mm)
            table.best = static_cast<int>(i);
    return table;
}

ImuSubsetTable sweep_imu_subsets(
    const SequenceDataset& ds,
    const std::vector<std::pair<std::string, std::vector<int>>>& subsets, double theta_t) {
    const KinematicTree& tree = ds.skeleton.tree;
    const RestPose& rest = ds.skeleton.rest;
    for (const auto& [label, sensors] : subsets)
        for (const int s : sensors) tree.joint_of_sensor(s);  // throws on unknown sensor

    std::vector<AlignedImu> aligned;
    std::vector<Pose3D> gt;
    for (const auto& f : ds.frames) {
        aligned.push_back(align_frame(f.imu_samples, ds.calibration, rest, tree));
        gt.push_back(f.gt_pose);
    }

    ImuSubsetTable table;
    table.theta_t = theta_t;
    table.note = "reference pattern: proximal (upper) subsets tend to beat distal (lower) ones;"
                 " ordering is data-dependent and reported, not asserted";
    for (const auto& [label, sensors] : subsets) {
        ImuSubsetRow row;
        row.label = label;
        row.sensors = sensors;
        std::vector<Pose3D> fused;
        for (std::size_t i = 0; i < ds.frames.size(); ++i) {
            const AlignedImu sub = aligned_subset(aligned[i], sensors);
            fused.push_back(kine_fuse(ds.frames[i].vis_pose, sub, rest, tree, theta_t).pose);
        }
        row.report = mpjpe(fused, gt, tree,
                           {{"method", "kine"},
                            {"theta_t", theta_json(theta_t)},
                            {"subset", label},
                            {"sensors", sensors}});
        table.rows.push_back(std::move(row));
    }
    return table;
}

nlohmann::json report_to_json(const MetricsReport& r) {
    nlohmann::json per_joint = nlohmann::json::array();
    for (std::size_t j = 0; j < r.joint_names.size(); ++j)
        per_joint.push_back({{"joint", r.joint_names[j]}, {"mean_mm", r.per_joint_mm[j]}});
    return {{"format", "kinepose-metrics"},
            {"version", 1},
            {"frames", r.frames},
            {"mpjpe_mm", r.mpjpe_mm},
            {"imu_related_mm", r.imu_related_mm},
            {"others_mm", r.others_mm},
            {"imu_related_joints", r.imu_related_joints},
            {"per_joint", per_joint},
            {"config", r.config_echo}};
}

nlohmann::json sweep_table_to_json(const SweepTable& t) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : t.rows)
        rows.push_back({{"theta_t", theta_json(row.theta_t)},
                        {"replaced_bones", row.replaced_bones},
                        {"report", report_to_json(row.report)}});
    return {{"format", "kinepose-theta-sweep"},
            {"version", 1},
            {"method", t.method},
            {"rows", rows},
            {"best_row", t.best}};
}

nlohmann::json imu_subset_table_to_json(const ImuSubsetTable& t) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : t.rows)
        rows.push_back({{"label", row.label},
                        {"sensors", row.sensors},
                        {"report", report_to_json(row.report)}});
    return {{"format", "kinepose-imu-sweep"},
            {"version", 1},
            {"theta_t", theta_json(t.theta_t)},
            {"rows", rows},
            {"note", t.note}};
}

void write_report_file(const nlohmann::json& payload, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::Io, "cannot write report: " + path);
    out << payload.dump(2) << "\n";
}

std::string format_report_table(const MetricsReport& r) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    os << std::left << std::setw(16) << "Joint" << std::right << std::setw(12) << "mean (mm)"
       << "\n";
    std::vector<bool> is_imu(r.joint_names.size(), false);
    for (const int j : r.imu_related_joints) is_imu[j] = true;
    for (std::size_t j = 0; j < r.joint_names.size(); ++j)
        os << std::left << std::setw(16) << r.joint_names[j] << std::right << std::setw(12)
           << r.per_joint_mm[j] << (is_imu[j] ? "  [imu]" : "") << "\n";
    os << std::left << std::setw(16) << "IMU-related" << std::right << std::setw(12)
       << r.imu_related_mm << "\n";
    os << std::left << std::setw(16) << "Others" << std::right << std::setw(12) << r.others_mm
       << "\n";
    os << std::left << std::setw(16) << "MPJPE" << std::right << std::setw(12) << r.mpjpe_mm
       << "   (" << r.frames << " frames)\n";
    return os.str();
}

std::string format_sweep_table(const SweepTable& t) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4);
    os << "method: " << t.method << "\n";
    os << std::right << std::setw(10) << "theta_t" << std::setw(14) << "MPJPE (mm)"
       << std::setw(14) << "imu (mm)" << std::setw(14) << "others (mm)" << std::setw(12)
       << "replaced"
       << "\n";
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto& row = t.rows[i];
        os << std::setw(10) << row.theta_t << std::setprecision(2) << std::setw(14)
           << row.report.mpjpe_mm << std::setw(14) << row.report.imu_related_mm << std::setw(14)
           << row.report.others_mm << std::setw(12) << row.replaced_bones << std::setprecision(4)
           << (static_cast<int>(i) == t.best ? "   <- best" : "") << "\n";
    }
    return os.str();
}

std::string format_imu_subset_table(const ImuSubsetTable& t) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    os << "theta_t: " << t.theta_t << "\n";
    os << std::left << std::setw(16) << "subset" << std::right << std::setw(10) << "sensors"
       << std::setw(14) << "MPJPE (mm)" << std::setw(14) << "imu (mm)" << std::setw(14)
       << "others (mm)"
       << "\n";
    for (const auto& row : t.rows)
        os << std::left << std::setw(16) << row.label << std::right << std::setw(10)
           << row.sensors.size() << std::setw(14) << row.report.mpjpe_mm << std::setw(14)
           << row.report.imu_related_mm << std::setw(14) << row.report.others_mm << "\n";
    os << t.note << "\n";
    return os.str();
}

}  // namespace kinepose
