// kinepose command-line tool: synthetic dataset generation, the three fusion
// methods, AdaDeepFuse training, evaluation, ablation sweeps, and the
// numerical self-check suites. Exit codes are listed in the README.

#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "kinepose/diagnostics.hpp"
#include "kinepose/error.hpp"
#include "kinepose/fusion.hpp"
#include "kinepose/metrics.hpp"
#include "kinepose/pipeline.hpp"
#include "kinepose/serialize.hpp"
#include "kinepose/synth.hpp"

namespace kp = kinepose;

namespace {

kp::Skeleton load_skeleton_or_default(const std::string& path) {
    if (path.empty()) return kp::default_skeleton();
    return kp::load_skeleton_file(path);
}

nlohmann::json load_config_file(const std::string& path) {
    if (path.empty()) return nlohmann::json::object();
    std::ifstream in(path);
    if (!in) throw kp::Error(kp::ErrorCode::Io, "cannot open config: " + path);
    try {
        nlohmann::json j;
        in >> j;
        return j;
    } catch (const nlohmann::json::exception& e) {
        throw kp::Error(kp::ErrorCode::BadConfig, "config parse error: " + std::string(e.what()));
    }
}

void apply_noise_config(const nlohmann::json& j, kp::NoiseConfig& n) {
    n.vision_jitter_sigma = j.value("vision_jitter_sigma", n.vision_jitter_sigma);
    n.occlusion_prob = j.value("occlusion_prob", n.occlusion_prob);
    n.occlusion_sigma = j.value("occlusion_sigma", n.occlusion_sigma);
    n.bone_scale_sigma = j.value("bone_scale_sigma", n.bone_scale_sigma);
    n.imu_drift_rate = j.value("imu_drift_rate", n.imu_drift_rate);
    if (n.vision_jitter_sigma < 0 || n.occlusion_sigma < 0 || n.bone_scale_sigma < 0 ||
        n.imu_drift_rate < 0 || n.occlusion_prob < 0 || n.occlusion_prob > 1)
        throw kp::Error(kp::ErrorCode::BadConfig, "noise parameters out of range");
}

void apply_motion_config(const nlohmann::json& j, kp::MotionConfig& m) {
    m.step_sigma = j.value("step_sigma", m.step_sigma);
    m.step_cap = j.value("step_cap", m.step_cap);
    m.amp_cap = j.value("amp_cap", m.amp_cap);
    m.twist_step_sigma = j.value("twist_step_sigma", m.twist_step_sigma);
    m.twist_step_cap = j.value("twist_step_cap", m.twist_step_cap);
    m.twist_amp_cap = j.value("twist_amp_cap", m.twist_amp_cap);
    m.root_step_sigma = j.value("root_step_sigma", m.root_step_sigma);
    m.root_amp_cap = j.value("root_amp_cap", m.root_amp_cap);
    m.burn_in = j.value("burn_in", m.burn_in);
}

void apply_fusion_config(const nlohmann::json& j, kp::FusionConfig& f) {
    f.theta_t = j.value("theta_t", f.theta_t);
    if (j.contains("screen_reference")) {
        const std::string ref = j["screen_reference"].get<std::string>();
        if (ref == "vision")
            f.screen_reference = kp::ScreenReference::Vision;
        else if (ref == "rest")
            f.screen_reference = kp::ScreenReference::Rest;
        else
            throw kp::Error(kp::ErrorCode::BadConfig, "screen_reference must be vision or rest");
    }
    f.alpha = j.value("alpha", f.alpha);
    f.smooth_l1_beta = j.value("smooth_l1_beta", f.smooth_l1_beta);
    f.mlp_hidden = j.value("mlp_hidden", f.mlp_hidden);
    f.residual = j.value("residual", f.residual);
    f.learning_rate = j.value("learning_rate", f.learning_rate);
    f.epochs = j.value("epochs", f.epochs);
    f.batch_size = j.value("batch_size", f.batch_size);
    f.val_fraction = j.value("val_fraction", f.val_fraction);
    f.seed = j.value("seed", f.seed);
    if (f.theta_t < 0 || f.alpha < 0)
        throw kp::Error(kp::ErrorCode::BadConfig, "theta_t and alpha must be nonnegative");
}

std::vector<int> subset_sensors(const kp::KinematicTree& tree, const std::string& label) {
    std::vector<int> out;
    if (label == "all") {
        for (const auto& a : tree.imus) out.push_back(a.sensor);
        return out;
    }
    if (label == "none") return out;
    if (label != "upper" && label != "lower")
        throw kp::Error(kp::ErrorCode::InvalidArgument,
                        "unknown subset '" + label + "' (expected upper, lower, all, none)");
    // Proximal sensors sit on bones whose parent bone carries no sensor.
    for (const auto& a : tree.imus) {
        const int parent_joint = tree.parent[a.joint];
        const bool parent_has_sensor =
            !tree.is_root(parent_joint) && tree.sensor_of_joint(parent_joint).has_value();
        const bool proximal = !parent_has_sensor;
        if ((label == "upper") == proximal) out.push_back(a.sensor);
    }
    return out;
}

int run(int argc, char** argv) {
    CLI::App app{"kinematic-space IMU-vision pose fusion"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path, "JSON config file (sections: motion, noise, fusion)")
        ->configurable(false);

    // synth ------------------------------------------------------------
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    std::string synth_out, synth_skeleton;
    std::uint64_t synth_seed = 1;
    int synth_sequences = 1, synth_frames = 100;
    double opt_jitter = -1, opt_occ_prob = -1, opt_occ_sigma = -1, opt_scale = -1, opt_drift = -1;
    synth->add_option("out", synth_out, "output dataset path")->required();
    synth->add_option("--skeleton", synth_skeleton, "skeleton config (default: built-in 16/8)");
    synth->add_option("--seed", synth_seed, "master seed");
    synth->add_option("--sequences", synth_sequences, "independent sequences");
    synth->add_option("--frames", synth_frames, "frames per sequence");
    synth->add_option("--jitter", opt_jitter, "vision jitter sigma, mm");
    synth->add_option("--occlusion-prob", opt_occ_prob, "occlusion probability per limb joint");
    synth->add_option("--occlusion-sigma", opt_occ_sigma, "occlusion spike sigma, mm");
    synth->add_option("--bone-scale", opt_scale, "bone scale sigma");
    synth->add_option("--drift", opt_drift, "IMU drift rate, rad/frame");

    // fuse -------------------------------------------------------------
    auto* fuse = app.add_subcommand("fuse", "apply a fusion method to a dataset");
    std::string fuse_in, fuse_out, fuse_method = "kine", fuse_model, fuse_ref = "vision";
    double fuse_theta = 0.25;
    fuse->add_option("in", fuse_in, "input dataset")->required();
    fuse->add_option("out", fuse_out, "output pose-sequence file")->required();
    fuse->add_option("--method", fuse_method, "naive | kine | ada | baseline")
        ->check(CLI::IsMember({"naive", "kine", "ada", "baseline"}));
    fuse->add_option("--theta", fuse_theta, "screening threshold, radians (inf disables)");
    fuse->add_option("--screen-ref", fuse_ref, "screening reference: vision | rest")
        ->check(CLI::IsMember({"vision", "rest"}));
    fuse->add_option("--model", fuse_model, "checkpoint for --method ada");

    // train ------------------------------------------------------------
    auto* train = app.add_subcommand("train", "train the adaptive fusion model");
    std::string train_data, train_out, train_log;
    kp::FusionConfig defaults;
    double opt_lr = -1, opt_alpha = -1, opt_beta = -1, opt_val = -1;
    int opt_epochs = -1, opt_batch = -1;
    std::int64_t opt_train_seed = -1;
    std::vector<int> opt_hidden;
    bool opt_no_residual = false;
    train->add_option("data", train_data, "training dataset")->required();
    train->add_option("--out", train_out, "checkpoint output path")->required();
    train->add_option("--log", train_log, "per-epoch log (JSON lines)");
    train->add_option("--epochs", opt_epochs, "training epochs");
    train->add_option("--batch", opt_batch, "minibatch size");
    train->add_option("--lr", opt_lr, "Adam learning rate");
    train->add_option("--alpha", opt_alpha, "parameter-loss weight");
    train->add_option("--beta", opt_beta, "smoothed-L1 beta");
    train->add_option("--val-fraction", opt_val, "validation tail fraction");
    train->add_option("--seed", opt_train_seed, "training seed");
    train->add_option("--hidden", opt_hidden, "hidden layer widths")->delimiter(',');
    train->add_flag("--no-residual", opt_no_residual, "disable the vision residual connection");

    // eval ---------------------------------------------------------------
    auto* eval = app.add_subcommand("eval", "MPJPE report for predictions vs ground truth");
    std::string eval_pred, eval_gt, eval_out;
    eval->add_option("pred", eval_pred, "pose-sequence file (or dataset: uses GT poses)")
        ->required();
    eval->add_option("gt", eval_gt, "dataset or pose-sequence file with ground truth")->required();
    eval->add_option("--out", eval_out, "report output path (JSON)");

    // sweep-theta ----------------------------------------------------------
    auto* sweep_t = app.add_subcommand("sweep-theta", "threshold ablation sweep");
    std::string sweep_data, sweep_method = "kine", sweep_out;
    std::vector<double> sweep_grid = {0.15, 0.20, 0.25, 0.30, 0.35};
    sweep_t->add_option("data", sweep_data, "input dataset")->required();
    sweep_t->add_option("--method", sweep_method, "naive | kine")
        ->check(CLI::IsMember({"naive", "kine"}));
    sweep_t->add_option("--grid", sweep_grid, "theta values (inf allowed)")->delimiter(',');
    sweep_t->add_option("--out", sweep_out, "report output path (JSON)");

    // sweep-imus -----------------------------------------------------------
    auto* sweep_i = app.add_subcommand("sweep-imus", "IMU subset ablation sweep");
    std::string imus_data, imus_out;
    double imus_theta = 0.25;
    std::vector<std::string> imus_subsets = {"upper", "lower", "all"};
    sweep_i->add_option("data", imus_data, "input dataset")->required();
    sweep_i->add_option("--theta", imus_theta, "screening threshold, radians");
    sweep_i->add_option("--subsets", imus_subsets, "subset names: upper,lower,all,none")
        ->delimiter(',');
    sweep_i->add_option("--out", imus_out, "report output path (JSON)");

    // gradcheck / roundtrip --------------------------------------------------
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suites");
    std::uint64_t gc_seed = 7;
    int gc_trials = 100;
    std::string gc_skeleton;
    gradcheck->add_option("--seed", gc_seed, "seed");
    gradcheck->add_option("--trials", gc_trials, "random configurations per suite");
    gradcheck->add_option("--skeleton", gc_skeleton, "skeleton config");

    auto* roundtrip = app.add_subcommand("roundtrip", "IK/FK round-trip property suite");
    std::uint64_t rt_seed = 7;
    int rt_trials = 1000;
    std::string rt_skeleton;
    roundtrip->add_option("--seed", rt_seed, "seed");
    roundtrip->add_option("--trials", rt_trials, "random poses");
    roundtrip->add_option("--skeleton", rt_skeleton, "skeleton config");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    const nlohmann::json config = load_config_file(config_path);

    if (*synth) {
        kp::MotionConfig motion;
        kp::NoiseConfig noise;
        if (config.contains("motion")) apply_motion_config(config["motion"], motion);
        if (config.contains("noise")) apply_noise_config(config["noise"], noise);
        if (opt_jitter >= 0) noise.vision_jitter_sigma = opt_jitter;
        if (opt_occ_prob >= 0) noise.occlusion_prob = opt_occ_prob;
        if (opt_occ_sigma >= 0) noise.occlusion_sigma = opt_occ_sigma;
        if (opt_scale >= 0) noise.bone_scale_sigma = opt_scale;
        if (opt_drift >= 0) noise.imu_drift_rate = opt_drift;
        const kp::Skeleton skel = load_skeleton_or_default(synth_skeleton);
        const kp::SequenceDataset ds =
            kp::make_dataset(skel, synth_sequences, synth_frames, synth_seed, motion, noise);
        kp::write_dataset(ds, synth_out);
        std::cout << "wrote " << ds.frames.size() << " frames to " << synth_out << "\n";
        return 0;
    }

    if (*fuse) {
        const kp::SequenceDataset ds = kp::read_dataset(fuse_in);
        kp::PoseSequence seq;
        seq.joint_names = ds.skeleton.tree.names;
        long replaced = -1;
        if (fuse_method == "baseline") {
            seq.poses = kp::vision_poses(ds);
        } else if (fuse_method == "naive") {
            kp::FusionRun r = kp::run_naive(ds, fuse_theta);
            seq.poses = std::move(r.fused);
            replaced = r.replaced_bones;
        } else if (fuse_method == "kine") {
            const kp::ScreenReference ref = fuse_ref == "rest" ? kp::ScreenReference::Rest
                                                               : kp::ScreenReference::Vision;
            kp::FusionRun r = kp::run_kine(ds, fuse_theta, ref);
            seq.poses = std::move(r.fused);
            replaced = r.replaced_bones;
        } else {
            if (fuse_model.empty())
                throw kp::Error(kp::ErrorCode::InvalidArgument, "--method ada needs --model");
            const kp::AdaFuseModel model = kp::load_checkpoint(fuse_model, ds.skeleton.tree);
            seq.poses = kp::run_ada(ds, model);
        }
        kp::write_pose_sequence(seq, fuse_out);
        std::cout << "fused " << seq.poses.size() << " frames with " << fuse_method;
        if (replaced >= 0) std::cout << " (replaced bones: " << replaced << ")";
        std::cout << " -> " << fuse_out << "\n";
        return 0;
    }

    if (*train) {
        kp::FusionConfig fc;
        if (config.contains("fusion")) apply_fusion_config(config["fusion"], fc);
        if (opt_epochs > 0) fc.epochs = opt_epochs;
        if (opt_batch > 0) fc.batch_size = opt_batch;
        if (opt_lr > 0) fc.learning_rate = opt_lr;
        if (opt_alpha >= 0) fc.alpha = opt_alpha;
        if (opt_beta > 0) fc.smooth_l1_beta = opt_beta;
        if (opt_val >= 0) fc.val_fraction = opt_val;
        if (opt_train_seed >= 0) fc.seed = static_cast<std::uint64_t>(opt_train_seed);
        if (!opt_hidden.empty()) fc.mlp_hidden = opt_hidden;
        if (opt_no_residual) fc.residual = false;

        const kp::SequenceDataset ds = kp::read_dataset(train_data);
        const std::vector<kp::TrainFrame> frames = kp::prepare_training_frames(ds);
        const kp::TrainResult result =
            kp::train_ada(frames, ds.skeleton.tree, ds.skeleton.rest, fc);
        kp::save_checkpoint(result.model, fc, ds.skeleton.tree, train_out);
        if (!train_log.empty()) {
            std::ofstream log(train_log);
            if (!log) throw kp::Error(kp::ErrorCode::Io, "cannot write log: " + train_log);
            for (const auto& e : result.log)
                log << nlohmann::json({{"epoch", e.epoch},
                                       {"train_loss", e.train_loss},
                                       {"val_loss", e.val_loss},
                                       {"train_mpjpe_mm", e.train_mpjpe},
                                       {"val_mpjpe_mm", e.val_mpjpe}})
                           .dump()
                    << "\n";
        }
        const auto& last = result.log.back();
        std::cout << "trained " << fc.epochs << " epochs; final train MPJPE "
                  << last.train_mpjpe << " mm, val MPJPE " << last.val_mpjpe << " mm -> "
                  << train_out << "\n";
        return 0;
    }

    if (*eval) {
        const kp::PoseSequence pred = kp::read_pose_sequence_any(eval_pred);
        const kp::PoseSequence gt = kp::read_pose_sequence_any(eval_gt);
        // The split definition needs the skeleton; take it from whichever
        // input is a dataset, preferring the ground truth.
        kp::Skeleton skel;
        bool have_skel = false;
        for (const std::string& path : {eval_gt, eval_pred}) {
            if (have_skel) break;
            try {
                skel = kp::read_dataset(path).skeleton;
                have_skel = true;
            } catch (const kp::Error&) {
            }
        }
        if (!have_skel) {
            skel = kp::default_skeleton();
            if (skel.tree.names != gt.joint_names)
                throw kp::Error(kp::ErrorCode::InvalidArgument,
                                "eval needs at least one dataset input to define the skeleton");
        }
        const kp::MetricsReport report =
            kp::mpjpe(pred.poses, gt.poses, skel.tree,
                      {{"pred", eval_pred}, {"gt", eval_gt}});
        std::cout << kp::format_report_table(report);
        if (!eval_out.empty()) kp::write_report_file(kp::report_to_json(report), eval_out);
        return 0;
    }

    if (*sweep_t) {
        const kp::SequenceDataset ds = kp::read_dataset(sweep_data);
        const kp::SweepTable table = kp::sweep_theta(ds, sweep_method, sweep_grid);
        std::cout << kp::format_sweep_table(table);
        if (!sweep_out.empty()) kp::write_report_file(kp::sweep_table_to_json(table), sweep_out);
        return 0;
    }

    if (*sweep_i) {
        const kp::SequenceDataset ds = kp::read_dataset(imus_data);
        std::vector<std::pair<std::string, std::vector<int>>> subsets;
        for (const auto& label : imus_subsets)
            subsets.emplace_back(label, subset_sensors(ds.skeleton.tree, label));
        const kp::ImuSubsetTable table = kp::sweep_imu_subsets(ds, subsets, imus_theta);
        std::cout << kp::format_imu_subset_table(table);
        if (!imus_out.empty())
            kp::write_report_file(kp::imu_subset_table_to_json(table), imus_out);
        return 0;
    }

    if (*gradcheck) {
        const kp::Skeleton skel = load_skeleton_or_default(gc_skeleton);
        const kp::GradCheckResult fk_res =
            kp::gradcheck_fk(skel.tree, skel.rest, gc_trials, gc_seed);
        const kp::GradCheckResult loss_res =
            kp::gradcheck_ada_loss(skel.tree, gc_trials, kp::splitmix64(gc_seed));
        std::cout << "fk gradient:   max rel error " << fk_res.max_rel_error << " (tol "
                  << fk_res.tolerance << ", " << fk_res.trials << " trials) "
                  << (fk_res.pass ? "PASS" : "FAIL") << "\n";
        std::cout << "loss gradient: max rel error " << loss_res.max_rel_error << " (tol "
                  << loss_res.tolerance << ", " << loss_res.trials << " trials) "
                  << (loss_res.pass ? "PASS" : "FAIL") << "\n";
        return (fk_res.pass && loss_res.pass) ? 0 : static_cast<int>(kp::ErrorCode::NumericFailure);
    }

    if (*roundtrip) {
        const kp::Skeleton skel = load_skeleton_or_default(rt_skeleton);
        const kp::RoundTripResult r = kp::roundtrip_suite(skel.tree, skel.rest, rt_trials, rt_seed);
        std::cout << "fk(identity) vs rest:   " << r.identity_err_mm << " mm\n";
        std::cout << "fk(ik(P)) position err: " << r.max_pos_err_mm << " mm (tol "
                  << r.pos_tolerance_mm << ")\n";
        std::cout << "bone length rel err:    " << r.max_len_rel_err << " (tol "
                  << r.len_tolerance << ")\n";
        std::cout << (r.pass ? "PASS" : "FAIL") << " over " << r.trials << " poses\n";
        return r.pass ? 0 : static_cast<int>(kp::ErrorCode::NumericFailure);
    }

    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const kp::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return static_cast<int>(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
