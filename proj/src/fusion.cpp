#include "kinepose/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "kinepose/error.hpp"
#include "kinepose/rng.hpp"

namespace kinepose {

Pose3D naive_fuse(const Pose3D& p_vis, const AlignedImu& imu, const KinematicTree& tree,
                  const RestPose& rest, double theta_t, FuseStats* stats) {
    if (p_vis.joints() != tree.joint_count)
        throw Error(ErrorCode::DimensionMismatch, "pose sized for a different tree");

    std::vector<const AlignedSensor*> by_joint(tree.joint_count, nullptr);
    for (const auto& s : imu) {
        if (s.joint <= 0 && tree.is_root(s.joint))
            throw Error(ErrorCode::InvalidArgument, "IMU bone on root");
        by_joint[s.joint] = &s;
    }

    std::vector<Vec3> replacement(tree.joint_count);
    std::vector<bool> replaced(tree.joint_count, false);
    for (const int j : tree.topo_order) {
        const AlignedSensor* s = by_joint[j];
        if (!s) continue;
        const Vec3 bone_vis = p_vis.p[j] - p_vis.p[tree.parent[j]];
        if (bone_vis.norm() <= kDegenerateVecEps)
            throw Error(ErrorCode::DegenerateVector,
                        "zero-length vision bone ending at joint " + std::to_string(j));
        if (angle_between(s->bone_mm, bone_vis) > theta_t) {
            replacement[j] = s->bone_mm;
            replaced[j] = true;
        }
    }

    // Rebuild top-down. A joint whose root path contains no replaced bone
    // keeps its input coordinates bit-identical.
    Pose3D out;
    out.p.resize(tree.joint_count);
    std::vector<bool> moved(tree.joint_count, false);
    for (const int j : tree.topo_order) {
        if (tree.is_root(j)) {
            out.p[j] = p_vis.p[j];
            continue;
        }
        const int pa = tree.parent[j];
        if (replaced[j]) {
            out.p[j] = out.p[pa] + replacement[j];
            moved[j] = true;
        } else if (moved[pa]) {
            out.p[j] = out.p[pa] + (p_vis.p[j] - p_vis.p[pa]);
            moved[j] = true;
        } else {
            out.p[j] = p_vis.p[j];
        }
    }

    if (stats) {
        stats->replaced_joints.clear();
        for (int j = 0; j < tree.joint_count; ++j)
            if (replaced[j]) stats->replaced_joints.push_back(j);
    }
    return out;
}

KineFuseResult kine_fuse(const Pose3D& p_vis, const AlignedImu& imu, const RestPose& rest,
                         const KinematicTree& tree, double theta_t, ScreenReference ref,
                         FuseStats* stats) {
    std::vector<const AlignedSensor*> by_joint(tree.joint_count, nullptr);
    for (const auto& s : imu) by_joint[s.joint] = &s;

    std::vector<int> replaced;
    const TotalRotationOverride screen =
        [&](int joint, const Vec3& vis_bone) -> std::optional<UnitQuaternion> {
        const AlignedSensor* s = by_joint[joint];
        if (!s) return std::nullopt;
        const Vec3& reference = (ref == ScreenReference::Vision)
                                    ? vis_bone
                                    : rest.bone_local[tree.non_root_index[joint]];
        if (angle_between(s->bone_mm, reference) > theta_t) {
            replaced.push_back(joint);
            return s->rotation_local;
        }
        return std::nullopt;
    };

    KineFuseResult result;
    result.params = ik_with_override(p_vis, rest, tree, screen);
    result.pose = fk(result.params, rest, tree);
    if (stats) {
        std::sort(replaced.begin(), replaced.end());
        stats->replaced_joints = std::move(replaced);
    }
    return result;
}

// ---------------------------------------------------------------------------
// AdaDeepFuse

namespace {

constexpr double kQuatNormFloor = 1e-12;

void check_model_shapes(const AdaFuseModel& model, int bones, int sensors) {
    if (model.bones != bones || model.sensors != sensors)
        throw Error(ErrorCode::DimensionMismatch, "model built for a different skeleton/IMU set");
    int dim = model.input_dim();
    for (const auto& l : model.layers) {
        if (l.in != dim || static_cast<int>(l.w.size()) != l.in * l.out ||
            static_cast<int>(l.b.size()) != l.out)
            throw Error(ErrorCode::DimensionMismatch, "inconsistent layer shapes");
        dim = l.out;
    }
    if (dim != model.output_dim())
        throw Error(ErrorCode::DimensionMismatch, "model output does not match bone count");
}

std::vector<double> build_input(const AdaFuseModel& model,
                                const std::vector<UnitQuaternion>& q_vis,
                                const AlignedImu& imu) {
    if (static_cast<int>(q_vis.size()) != model.bones)
        throw Error(ErrorCode::DimensionMismatch, "vision rotation count mismatch");
    if (static_cast<int>(imu.size()) != model.sensors)
        throw Error(ErrorCode::DimensionMismatch, "IMU sensor count mismatch");
    std::vector<double> x;
    x.reserve(model.input_dim());
    for (const auto& q : q_vis) {
        x.push_back(q.w);
        x.push_back(q.x);
        x.push_back(q.y);
        x.push_back(q.z);
    }
    for (const auto& s : imu) {
        const auto& q = s.rotation_local;
        x.push_back(q.w);
        x.push_back(q.x);
        x.push_back(q.y);
        x.push_back(q.z);
    }
    return x;
}

struct MlpCache {
    // activations[0] is the input; activations[i] is the post-ReLU output of
    // layer i-1 for hidden layers, and the raw output for the final layer.
    std::vector<std::vector<double>> activations;
    std::vector<std::vector<double>> pre;  // pre-activation per layer
};

std::vector<double> mlp_forward(const AdaFuseModel& model, const std::vector<double>& x,
                                MlpCache* cache) {
    std::vector<double> cur = x;
    if (cache) {
        cache->activations.clear();
        cache->pre.clear();
        cache->activations.push_back(cur);
    }
    const int n_layers = static_cast<int>(model.layers.size());
    for (int li = 0; li < n_layers; ++li) {
        const DenseLayer& l = model.layers[li];
        std::vector<double> next(l.out);
        for (int r = 0; r < l.out; ++r) {
            const double* wr = l.w.data() + static_cast<std::size_t>(r) * l.in;
            double s = l.b[r];
            for (int c = 0; c < l.in; ++c) s += wr[c] * cur[c];
            next[r] = s;
        }
        if (cache) cache->pre.push_back(next);
        if (li + 1 < n_layers)
            for (double& v : next) v = v > 0.0 ? v : 0.0;
        cur = std::move(next);
        if (cache) cache->activations.push_back(cur);
    }
    if (model.residual) {
        for (int i = 0; i < model.output_dim(); ++i) cur[i] += x[i];
        if (cache) cache->activations.back() = cur;
    }
    return cur;
}

struct MlpGrads {
    std::vector<std::vector<double>> w;
    std::vector<std::vector<double>> b;

    void init(const AdaFuseModel& model) {
        w.clear();
        b.clear();
        for (const auto& l : model.layers) {
            w.emplace_back(l.w.size(), 0.0);
            b.emplace_back(l.b.size(), 0.0);
        }
    }
    void zero() {
        for (auto& v : w) std::fill(v.begin(), v.end(), 0.0);
        for (auto& v : b) std::fill(v.begin(), v.end(), 0.0);
    }
    void scale(double s) {
        for (auto& v : w)
            for (double& e : v) e *= s;
        for (auto& v : b)
            for (double& e : v) e *= s;
    }
};

// Accumulates weight gradients; d_out is d loss / d (MLP output incl. residual).
void mlp_backward(const AdaFuseModel& model, const MlpCache& cache,
                  const std::vector<double>& d_out, MlpGrads& grads) {
    std::vector<double> delta = d_out;  // residual adds to input grad only, unused
    const int n_layers = static_cast<int>(model.layers.size());
    for (int li = n_layers - 1; li >= 0; --li) {
        const DenseLayer& l = model.layers[li];
        if (li + 1 < n_layers) {
            const std::vector<double>& pre = cache.pre[li];
            for (int r = 0; r < l.out; ++r)
                if (pre[r] <= 0.0) delta[r] = 0.0;
        }
        const std::vector<double>& in = cache.activations[li];
        double* gw = grads.w[li].data();
        for (int r = 0; r < l.out; ++r) {
            const double d = delta[r];
            grads.b[li][r] += d;
            double* row = gw + static_cast<std::size_t>(r) * l.in;
            for (int c = 0; c < l.in; ++c) row[c] += d * in[c];
        }
        if (li > 0) {
            std::vector<double> prev(l.in, 0.0);
            for (int r = 0; r < l.out; ++r) {
                const double d = delta[r];
                const double* row = l.w.data() + static_cast<std::size_t>(r) * l.in;
                for (int c = 0; c < l.in; ++c) prev[c] += d * row[c];
            }
            delta = std::move(prev);
        }
    }
}

inline double smooth_l1(double x, double beta) {
    const double a = std::abs(x);
    return a < beta ? 0.5 * x * x / beta : a - 0.5 * beta;
}

inline double smooth_l1_grad(double x, double beta) {
    return std::abs(x) < beta ? x / beta : (x > 0.0 ? 1.0 : -1.0);
}

}  // namespace

AdaFuseModel make_ada_model(const KinematicTree& tree, const FusionConfig& config) {
    for (int h : config.mlp_hidden)
        if (h <= 0) throw Error(ErrorCode::BadConfig, "hidden layer width must be positive");
    AdaFuseModel model;
    model.bones = tree.bone_count();
    model.sensors = static_cast<int>(tree.imus.size());
    model.residual = config.residual;

    Rng rng(config.seed);
    int in = model.input_dim();
    for (std::size_t i = 0; i <= config.mlp_hidden.size(); ++i) {
        const bool final_layer = i == config.mlp_hidden.size();
        DenseLayer l;
        l.in = in;
        l.out = final_layer ? model.output_dim() : config.mlp_hidden[i];
        l.w.resize(static_cast<std::size_t>(l.in) * l.out);
        l.b.assign(l.out, 0.0);
        if (!final_layer) {
            const double sigma = std::sqrt(2.0 / l.in);
            for (double& w : l.w) w = rng.normal(sigma);
        }
        in = l.out;
        model.layers.push_back(std::move(l));
    }
    return model;
}

std::vector<UnitQuaternion> ada_forward(const AdaFuseModel& model,
                                        const std::vector<UnitQuaternion>& q_vis,
                                        const AlignedImu& imu) {
    check_model_shapes(model, model.bones, model.sensors);
    const std::vector<double> x = build_input(model, q_vis, imu);
    const std::vector<double> o = mlp_forward(model, x, nullptr);

    std::vector<UnitQuaternion> out(model.bones);
    for (int j = 0; j < model.bones; ++j) {
        const double* q = o.data() + 4 * j;
        const double n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
        if (n < kQuatNormFloor)
            out[j] = UnitQuaternion::identity();
        else
            out[j] = UnitQuaternion(q[0], q[1], q[2], q[3]);  // normalizes + canonicalizes
    }
    return out;
}

AdaLossResult ada_loss(const Pose3D& p_fused, const Pose3D& p_gt,
                       const std::vector<UnitQuaternion>& q_fused,
                       const std::vector<UnitQuaternion>& q_gt, double alpha, double beta) {
    if (p_fused.joints() != p_gt.joints() || q_fused.size() != q_gt.size())
        throw Error(ErrorCode::DimensionMismatch, "loss inputs differ in shape");
    if (beta <= 0.0) throw Error(ErrorCode::BadConfig, "smooth_l1_beta must be positive");

    AdaLossResult r;
    const int joints = p_fused.joints();
    const int bones = static_cast<int>(q_fused.size());
    r.d_pose.assign(joints, Vec3{});
    r.d_quat.assign(bones, {0, 0, 0, 0});

    const double pose_scale = 1.0 / (3.0 * joints);
    for (int j = 0; j < joints; ++j) {
        const Vec3 d = p_fused.p[j] - p_gt.p[j];
        r.pose_term += (smooth_l1(d.x, beta) + smooth_l1(d.y, beta) + smooth_l1(d.z, beta)) *
                       pose_scale;
        r.d_pose[j] = Vec3{smooth_l1_grad(d.x, beta), smooth_l1_grad(d.y, beta),
                           smooth_l1_grad(d.z, beta)} *
                      pose_scale;
    }

    const double param_scale = 1.0 / (4.0 * std::max(bones, 1));
    for (int j = 0; j < bones; ++j) {
        // Hemisphere alignment: flip the fused quaternion toward the target.
        const double sign = q_fused[j].dot(q_gt[j]) >= 0.0 ? 1.0 : -1.0;
        const double f[4] = {q_fused[j].w, q_fused[j].x, q_fused[j].y, q_fused[j].z};
        const double g[4] = {q_gt[j].w, q_gt[j].x, q_gt[j].y, q_gt[j].z};
        for (int c = 0; c < 4; ++c) {
            const double d = sign * f[c] - g[c];
            r.param_term += smooth_l1(d, beta) * param_scale;
            r.d_quat[j][c] = alpha * sign * smooth_l1_grad(d, beta) * param_scale;
        }
    }

    r.loss = r.pose_term + alpha * r.param_term;
    return r;
}

namespace {

struct Adam {
    double lr, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long step = 0;
    MlpGrads m, v;

    void init(const AdaFuseModel& model, double learning_rate) {
        lr = learning_rate;
        m.init(model);
        v.init(model);
    }

    void update(AdaFuseModel& model, const MlpGrads& g) {
        ++step;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        for (std::size_t li = 0; li < model.layers.size(); ++li) {
            auto apply = [&](std::vector<double>& p, std::vector<double>& mm,
                             std::vector<double>& vv, const std::vector<double>& gg) {
                for (std::size_t i = 0; i < p.size(); ++i) {
                    mm[i] = beta1 * mm[i] + (1.0 - beta1) * gg[i];
                    vv[i] = beta2 * vv[i] + (1.0 - beta2) * gg[i] * gg[i];
                    p[i] -= lr * (mm[i] / bc1) / (std::sqrt(vv[i] / bc2) + eps);
                }
            };
            apply(model.layers[li].w, m.w[li], v.w[li], g.w[li]);
            apply(model.layers[li].b, m.b[li], v.b[li], g.b[li]);
        }
    }
};

struct FrameEval {
    double loss = 0.0;
    double joint_err_sum = 0.0;  // summed per-joint distances
};

// Forward (and optionally backward) pass for one frame.
FrameEval eval_frame(const AdaFuseModel& model, const TrainFrame& f, const KinematicTree& tree,
                     const RestPose& rest, const FusionConfig& config, MlpGrads* grads) {
    MlpCache cache;
    const std::vector<double> x = build_input(model, f.q_vis, f.imu);
    const std::vector<double> o = mlp_forward(model, x, grads ? &cache : nullptr);

    const int bones = model.bones;
    PoseParams params;
    params.root_translation = f.t1_vis;
    params.local_rotations.resize(bones);
    std::vector<double> norms(bones);
    std::vector<bool> floored(bones, false);
    std::vector<UnitQuaternion> q_tilde(bones);
    for (int j = 0; j < bones; ++j) {
        const double* q = o.data() + 4 * j;
        double n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
        if (n < kQuatNormFloor) {
            q_tilde[j] = UnitQuaternion::identity();
            floored[j] = true;
            n = 1.0;
        } else {
            q_tilde[j] =
                UnitQuaternion::from_components_unchecked(q[0] / n, q[1] / n, q[2] / n, q[3] / n);
        }
        norms[j] = n;
        params.local_rotations[j] = q_tilde[j];
    }

    const Pose3D p_fused = fk(params, rest, tree);
    const AdaLossResult loss =
        ada_loss(p_fused, f.p_gt, q_tilde, f.q_gt, config.alpha, config.smooth_l1_beta);

    FrameEval ev;
    ev.loss = loss.loss;
    for (int j = 0; j < tree.joint_count; ++j)
        ev.joint_err_sum += (p_fused.p[j] - f.p_gt.p[j]).norm();

    if (grads) {
        const FkGradients fkg = fk_backward(params, rest, tree, loss.d_pose);
        std::vector<double> d_out(4 * bones, 0.0);
        for (int j = 0; j < bones; ++j) {
            if (floored[j]) continue;  // constant fallback, no gradient
            const UnitQuaternion& q = q_tilde[j];
            const double qcomp[4] = {q.w, q.x, q.y, q.z};
            double total[4];
            for (int c = 0; c < 4; ++c)
                total[c] = fkg.local_rotations[j][c] + loss.d_quat[j][c];
            // Through q_tilde = o / ||o||.
            double proj = 0.0;
            for (int c = 0; c < 4; ++c) proj += total[c] * qcomp[c];
            for (int c = 0; c < 4; ++c)
                d_out[4 * j + c] = (total[c] - proj * qcomp[c]) / norms[j];
        }
        mlp_backward(model, cache, d_out, *grads);
    }
    return ev;
}

}  // namespace

TrainResult train_ada(const std::vector<TrainFrame>& frames, const KinematicTree& tree,
                      const RestPose& rest, const FusionConfig& config) {
    if (frames.empty()) throw Error(ErrorCode::InvalidArgument, "empty training dataset");
    if (config.batch_size <= 0 || config.epochs <= 0)
        throw Error(ErrorCode::BadConfig, "epochs and batch_size must be positive");

    const int n = static_cast<int>(frames.size());
    int val_count = static_cast<int>(std::lround(config.val_fraction * n));
    val_count = std::clamp(val_count, 0, n - 1);
    const int train_count = n - val_count;

    TrainResult result;
    result.model = make_ada_model(tree, config);
    AdaFuseModel& model = result.model;
    check_model_shapes(model, tree.bone_count(), static_cast<int>(tree.imus.size()));

    Rng rng(splitmix64(config.seed ^ 0x7261696e5f616461ULL));
    Adam adam;
    adam.init(model, config.learning_rate);
    MlpGrads grads;
    grads.init(model);

    std::vector<int> order(train_count);
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        for (int start = 0; start < train_count; start += config.batch_size) {
            const int end = std::min(start + config.batch_size, train_count);
            grads.zero();
            double batch_loss = 0.0;
            for (int i = start; i < end; ++i)
                batch_loss += eval_frame(model, frames[order[i]], tree, rest, config, &grads).loss;
            const double inv = 1.0 / (end - start);
            batch_loss *= inv;
            if (!std::isfinite(batch_loss))
                throw Error(ErrorCode::NumericFailure,
                            "non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                std::to_string(start / config.batch_size) +
                                "; lower the learning rate or check the dataset");
            grads.scale(inv);
            adam.update(model, grads);
            epoch_loss += batch_loss * (end - start);
        }

        EpochLog log;
        log.epoch = epoch;
        log.train_loss = epoch_loss / train_count;
        double err = 0.0;
        for (int i = 0; i < train_count; ++i)
            err += eval_frame(model, frames[i], tree, rest, config, nullptr).joint_err_sum;
        log.train_mpjpe = err / (static_cast<double>(train_count) * tree.joint_count);
        if (val_count > 0) {
            double vloss = 0.0, verr = 0.0;
            for (int i = train_count; i < n; ++i) {
                const FrameEval ev = eval_frame(model, frames[i], tree, rest, config, nullptr);
                vloss += ev.loss;
                verr += ev.joint_err_sum;
            }
            log.val_loss = vloss / val_count;
            log.val_mpjpe = verr / (static_cast<double>(val_count) * tree.joint_count);
        }
        result.log.push_back(log);
    }
    return result;
}

void save_checkpoint(const AdaFuseModel& model, const FusionConfig& config,
                     const KinematicTree& tree, const std::string& path) {
    nlohmann::json j;
    j["format"] = "kinepose-checkpoint";
    j["version"] = 1;
    j["arch"] = {{"bones", model.bones},
                 {"sensors", model.sensors},
                 {"residual", model.residual}};
    j["config"] = {{"alpha", config.alpha},
                   {"smooth_l1_beta", config.smooth_l1_beta},
                   {"mlp_hidden", config.mlp_hidden},
                   {"learning_rate", config.learning_rate},
                   {"epochs", config.epochs},
                   {"batch_size", config.batch_size},
                   {"val_fraction", config.val_fraction},
                   {"seed", config.seed},
                   {"residual", config.residual}};
    j["joints"] = tree.names;
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : model.layers)
        layers.push_back({{"in", l.in}, {"out", l.out}, {"w", l.w}, {"b", l.b}});
    j["layers"] = layers;

    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::Io, "cannot write checkpoint: " + path);
    out << j.dump() << "\n";
}

AdaFuseModel load_checkpoint(const std::string& path, const KinematicTree& tree,
                             FusionConfig* config_out) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open checkpoint: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MalformedData, "checkpoint parse error: " + std::string(e.what()));
    }
    try {
        if (j.value("format", "") != "kinepose-checkpoint")
            throw Error(ErrorCode::MalformedData, "not a checkpoint file");
        if (j.value("version", 0) != 1)
            throw Error(ErrorCode::VersionMismatch, "unsupported checkpoint version");
        AdaFuseModel model;
        model.bones = j.at("arch").at("bones").get<int>();
        model.sensors = j.at("arch").at("sensors").get<int>();
        model.residual = j.at("arch").at("residual").get<bool>();
        for (const auto& l : j.at("layers")) {
            DenseLayer layer;
            layer.in = l.at("in").get<int>();
            layer.out = l.at("out").get<int>();
            layer.w = l.at("w").get<std::vector<double>>();
            layer.b = l.at("b").get<std::vector<double>>();
            model.layers.push_back(std::move(layer));
        }
        check_model_shapes(model, tree.bone_count(), static_cast<int>(tree.imus.size()));
        if (config_out) {
            const auto& c = j.at("config");
            config_out->alpha = c.value("alpha", config_out->alpha);
            config_out->smooth_l1_beta = c.value("smooth_l1_beta", config_out->smooth_l1_beta);
            config_out->mlp_hidden = c.value("mlp_hidden", config_out->mlp_hidden);
            config_out->learning_rate = c.value("learning_rate", config_out->learning_rate);
            config_out->epochs = c.value("epochs", config_out->epochs);
            config_out->batch_size = c.value("batch_size", config_out->batch_size);
            config_out->val_fraction = c.value("val_fraction", config_out->val_fraction);
            config_out->seed = c.value("seed", config_out->seed);
            config_out->residual = c.value("residual", config_out->residual);
        }
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MalformedData, "checkpoint structure error: " + std::string(e.what()));
    }
}

}  // namespace kinepose
