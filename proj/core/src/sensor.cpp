#include "semtsdf/sensor.hpp"

#include <cmath>
#include <unordered_map>

namespace semtsdf {

SensorFrame SensorFrame::radial(int rays, double fov, double max_range) {
    if (rays < 1) throw ConfigError("sensor needs at least one ray");
    if (!(fov > 0.0) || fov > 2.0 * M_PI + 1e-12)
        throw ConfigError("sensor fov must be in (0, 2*pi]");
    if (!(max_range > 0.0)) throw ConfigError("sensor max_range must be > 0");
    SensorFrame f;
    f.max_range = max_range;
    f.directions.reserve(rays);
    for (int k = 0; k < rays; ++k) {
        double a = fov * static_cast<double>(k) / static_cast<double>(rays);
        f.directions.emplace_back(std::cos(a), std::sin(a));
    }
    return f;
}

void SensorFrame::validate() const {
    if (directions.empty()) throw ConfigError("sensor frame has no rays");
    if (!(max_range > 0.0)) throw ConfigError("sensor max_range must be > 0");
    for (const auto& d : directions)
        if (std::abs(d.norm() - 1.0) > 1e-12)
            throw ConfigError("sensor frame directions must be unit length");
}

Eigen::Matrix2d Pose2::rotation() const {
    Eigen::Matrix2d R;
    double c = std::cos(theta), s = std::sin(theta);
    R << c, -s, s, c;
    return R;
}

SensorObservation observe(const Environment& env, const Pose2& pose,
                          const SensorFrame& frame, double noise_var,
                          double class_error_prob, std::mt19937_64& rng) {
    frame.validate();
    if (noise_var < 0.0) throw InvalidInputError("observe: negative noise variance");
    if (class_error_prob < 0.0 || class_error_prob > 1.0)
        throw InvalidInputError("observe: class_error_prob must be in [0,1]");
    if (env.occupied(pose.p))
        throw InvalidPoseError("observe: sensor pose inside an obstacle");

    SensorObservation obs;
    obs.pose = pose;
    obs.max_range = frame.max_range;
    Eigen::Matrix2d R = pose.rotation();
    double noise_std = std::sqrt(noise_var);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    obs.lambdas.reserve(frame.directions.size());
    obs.classes.reserve(frame.directions.size());
    obs.dirs.reserve(frame.directions.size());
    for (const auto& eta : frame.directions) {
        Eigen::Vector2d dir = R * eta;
        dir.normalize();
        obs.dirs.push_back(dir);
        Vec h = directional_distance(env, pose.p, dir, frame.max_range);
        int c = kNoHit;
        double best = frame.max_range;
        for (int l = 1; l <= env.num_classes; ++l) {
            double a = std::abs(h[l - 1]);
            if (a < best) {
                best = a;
                c = l;
            }
        }
        if (c == kNoHit) {
            obs.lambdas.push_back(frame.max_range);
            obs.classes.push_back(kNoHit);
            continue;
        }
        double lambda = h[c - 1];
        if (noise_std > 0.0) lambda += noise_std * gauss(rng);
        lambda = std::max(lambda, 0.0);
        if (class_error_prob > 0.0 && env.num_classes > 1 &&
            unit(rng) < class_error_prob) {
            int wrong = std::uniform_int_distribution<int>(1, env.num_classes - 1)(rng);
            c = wrong < c ? wrong : wrong + 1;
        }
        obs.lambdas.push_back(lambda);
        obs.classes.push_back(c);
    }
    return obs;
}

std::map<int, ObservationBatch> build_training_batch_2d(const SensorObservation& obs,
                                                        double voxel_size,
                                                        int frame_size) {
    if (frame_size < 1) throw InvalidInputError("frame_size must be >= 1");
    if (!(voxel_size > 0.0)) throw InvalidInputError("voxel_size must be > 0");

    int rays = static_cast<int>(obs.lambdas.size());
    std::vector<Eigen::Vector2d> endpoint(rays);
    std::vector<bool> hit(rays);
    for (int k = 0; k < rays; ++k) {
        hit[k] = obs.classes[k] != kNoHit;
        if (hit[k]) endpoint[k] = obs.pose.p + obs.lambdas[k] * obs.dirs[k];
    }

    struct Agg {
        std::vector<GridKey> order;
        std::unordered_map<GridKey, std::pair<std::int64_t, double>, GridKeyHash> cells;
    };
    std::map<int, Agg> per_class;

    int lo = -((frame_size - 1) / 2);
    int hi = frame_size / 2;
    for (int k = 0; k < rays; ++k) {
        if (!hit[k]) continue;
        const Eigen::Vector2d& xh = endpoint[k];
        // Local surface tangent through a neighboring endpoint; next ray
        // preferred, previous as fallback.
        Eigen::Vector2d tangent = Eigen::Vector2d::Zero();
        bool have_tangent = false;
        for (int j : {k + 1, k - 1}) {
            if (j < 0 || j >= rays || !hit[j]) continue;
            Eigen::Vector2d d = endpoint[j] - xh;
            if (d.norm() < 1e-12) continue;
            tangent = d.normalized();
            have_tangent = true;
            break;
        }
        if (!have_tangent) continue;
        Eigen::Vector2d q(-tangent.y(), tangent.x());
        Eigen::Vector2d n = q.dot(obs.pose.p - xh) >= 0.0 ? q : Eigen::Vector2d(-q);

        Agg& agg = per_class[obs.classes[k]];
        std::int64_t cx = std::llround(xh.x() / voxel_size);
        std::int64_t cy = std::llround(xh.y() / voxel_size);
        for (int oy = lo; oy <= hi; ++oy) {
            for (int ox = lo; ox <= hi; ++ox) {
                GridKey key(cx + ox, cy + oy);
                Eigen::Vector2d xw(static_cast<double>(key.c[0]) * voxel_size,
                                   static_cast<double>(key.c[1]) * voxel_size);
                double label = n.dot(xw - xh);
                auto [it, fresh] = agg.cells.try_emplace(key, 0, 0.0);
                if (fresh) agg.order.push_back(key);
                it->second.first += 1;
                it->second.second +=
                    (label - it->second.second) / static_cast<double>(it->second.first);
            }
        }
    }

    std::map<int, ObservationBatch> out;
    for (auto& [cls, agg] : per_class) {
        ObservationBatch b;
        b.keys.reserve(agg.order.size());
        b.counts.reserve(agg.order.size());
        b.means.reserve(agg.order.size());
        for (const auto& key : agg.order) {
            const auto& [m, zeta] = agg.cells.at(key);
            b.keys.push_back(key);
            b.counts.push_back(m);
            b.means.push_back(zeta);
        }
        out.emplace(cls, std::move(b));
    }
    return out;
}

double tsdf_label_plane_3d(const Eigen::Vector3d& x, const Eigen::Vector3d& x_hat,
                           const Eigen::Vector3d& x_right, const Eigen::Vector3d& x_up,
                           const Eigen::Vector3d& p_t) {
    Eigen::Vector3d u = x_right - x_hat;
    Eigen::Vector3d v = x_up - x_hat;
    Eigen::Vector3d c = u.cross(v);
    if (c.norm() <= 1e-12 * u.norm() * v.norm())
        throw DegenerateGeometryError("tsdf_label_plane_3d: collinear surface points");
    Eigen::Vector3d q = c.normalized();
    Eigen::Vector3d n = q.dot(p_t - x_hat) >= 0.0 ? q : Eigen::Vector3d(-q);
    return n.dot(x - x_hat);
}

std::vector<Pose2> sample_trajectory(const Environment& env, std::uint64_t seed,
                                     int length, int retry_budget) {
    if (length < 0) throw InvalidInputError("trajectory length must be >= 0");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(env.bbox.lo.x(), env.bbox.hi.x());
    std::uniform_real_distribution<double> uy(env.bbox.lo.y(), env.bbox.hi.y());
    std::uniform_real_distribution<double> uth(0.0, 2.0 * M_PI);
    std::vector<Pose2> out;
    out.reserve(length);
    for (int t = 0; t < length; ++t) {
        bool ok = false;
        for (int attempt = 0; attempt < retry_budget; ++attempt) {
            Eigen::Vector2d p(ux(rng), uy(rng));
            if (env.occupied(p)) continue;
            out.push_back(Pose2{p, uth(rng)});
            ok = true;
            break;
        }
        if (!ok) throw GenerationError("sample_trajectory: no free pose found");
    }
    return out;
}

}  // namespace semtsdf
