#include "semtsdf/network.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <random>

namespace semtsdf {

namespace {

void check_adjacency(const Mat& A) {
    const Eigen::Index n = A.rows();
    if (n < 1 || A.cols() != n) throw TopologyError("adjacency must be square, n >= 1");
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            double a = A(i, j);
            if (!std::isfinite(a) || a < 0.0)
                throw TopologyError("adjacency weights must be finite and nonnegative");
            if (std::abs(a - A(j, i)) > 1e-12)
                throw TopologyError("adjacency must be symmetric");
        }
        if (A(i, i) != 0.0) throw TopologyError("adjacency diagonal must be zero");
    }
    if (n == 1) return;
    std::vector<char> vis(static_cast<std::size_t>(n), 0);
    std::deque<Eigen::Index> q{0};
    vis[0] = 1;
    Eigen::Index count = 1;
    while (!q.empty()) {
        Eigen::Index i = q.front();
        q.pop_front();
        for (Eigen::Index j = 0; j < n; ++j) {
            if (A(i, j) > 0.0 && !vis[j]) {
                vis[j] = 1;
                ++count;
                q.push_back(j);
            }
        }
    }
    if (count != n) throw TopologyError("communication graph must be connected");
}

}  // namespace

double max_degree(const Mat& A) {
    double d = 0.0;
    for (Eigen::Index i = 0; i < A.rows(); ++i) d = std::max(d, A.row(i).sum());
    return d;
}

NetworkGraph build_weight_matrix(const Mat& A, double nu) {
    check_adjacency(A);
    const int n = static_cast<int>(A.rows());
    NetworkGraph g;
    g.n = n;
    g.A = A;
    g.nu = nu;

    double delta = max_degree(A);
    if (!(nu > 0.0)) throw ConfigError("averaging step nu must be > 0");
    if (delta > 0.0 && nu > 1.0 / delta + 1e-15)
        throw ConfigError("averaging step nu must satisfy nu <= 1/max_degree");

    // W = I - nu*L with L = diag(A*1) - A; rows sum to one by construction.
    Mat L = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        L(i, i) = A.row(i).sum();
        for (int j = 0; j < n; ++j)
            if (j != i) L(i, j) = -A(i, j);
    }
    g.W = Mat::Identity(n, n) - nu * L;

    g.neighbors.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (j != i && A(i, j) > 0.0) g.neighbors[static_cast<std::size_t>(i)].push_back(j);

    // Left Perron vector of W. Power iteration runs on (W' + I)/2, which has
    // the same stationary vector but no -1 eigenvalue (W can be periodic at
    // nu = 1/max_degree); the residual is still checked against W itself.
    Vec pi = Vec::Constant(n, 1.0 / n);
    Mat M = 0.5 * (g.W.transpose() + Mat::Identity(n, n));
    for (int it = 0; it < 200000; ++it) {
        Vec next = M * pi;
        next /= next.sum();
        double step = (next - pi).lpNorm<Eigen::Infinity>();
        pi = next;
        if (step < 1e-16) break;
    }
    double resid = (g.W.transpose() * pi - pi).lpNorm<Eigen::Infinity>();
    if (resid > 1e-12) throw NumericalError("stationary vector iteration did not converge");
    for (int i = 0; i < n; ++i)
        if (!(pi[i] > 0.0)) throw NumericalError("stationary vector must be positive");
    g.pi = pi;
    return g;
}

std::vector<KalmanState> distributed_kalman_step(const std::vector<KalmanState>& states,
                                                 const Mat& W,
                                                 const std::vector<KalmanObservation>& obs) {
    const int n = static_cast<int>(states.size());
    if (W.rows() != n || W.cols() != n)
        throw InvalidInputError("distributed_kalman_step: W size mismatch");
    if (static_cast<int>(obs.size()) != n)
        throw InvalidInputError("distributed_kalman_step: obs size mismatch");
    std::vector<KalmanState> out(states.size());
    for (int i = 0; i < n; ++i) {
        const Eigen::Index d = states[static_cast<std::size_t>(i)].omega.size();
        Vec omega = Vec::Zero(d);
        Mat Omega = Mat::Zero(d, d);
        for (int j = 0; j < n; ++j) {
            double w = W(i, j);
            if (w == 0.0) continue;
            omega += w * states[static_cast<std::size_t>(j)].omega;
            Omega += w * states[static_cast<std::size_t>(j)].Omega;
        }
        const KalmanObservation& ob = obs[static_cast<std::size_t>(i)];
        if (ob.H.rows() > 0) {
            if (ob.H.cols() != d || ob.V.rows() != ob.H.rows() || ob.V.cols() != ob.H.rows() ||
                ob.y.size() != ob.H.rows())
                throw InvalidInputError("distributed_kalman_step: observation shape mismatch");
            Eigen::LLT<Mat> llt(ob.V);
            if (llt.info() != Eigen::Success)
                throw NumericalError("distributed_kalman_step: V not positive definite");
            omega += ob.H.transpose() * llt.solve(ob.y);
            Omega += ob.H.transpose() * llt.solve(Mat(ob.H));
        }
        out[static_cast<std::size_t>(i)].omega = std::move(omega);
        out[static_cast<std::size_t>(i)].Omega = std::move(Omega);
    }
    return out;
}

std::map<int, GpStats> RobotState::per_point_stats() const {
    if (store == ConsensusStore::Flat) return stats;
    std::map<int, GpStats> out;
    for (int cls : map.observed_classes()) out.emplace(cls, map.tree(cls).flat_stats());
    return out;
}

namespace {

GpStats fresh_stats(double voxel_size, double prior_mean) {
    GpStats s;
    s.voxel_size = voxel_size;
    s.prior_mean = prior_mean;
    return s;
}

void incorporate(RobotState& st, int cls, const ObservationBatch& batch, double weight) {
    if (batch.empty()) return;
    if (st.store == ConsensusStore::Tree) {
        st.map.ingest_weighted(cls, WeightedBatch::from(batch, weight));
    } else {
        auto it = st.stats.find(cls);
        if (it == st.stats.end()) {
            it = st.stats
                     .emplace(cls, fresh_stats(st.map.params().tree.voxel_size,
                                               st.map.params().tree.prior_mean))
                     .first;
        }
        it->second = merge_batch(std::move(it->second), batch, weight);
    }
}

}  // namespace

void echo_round(std::vector<RobotState>& states, const Mat& W,
                const std::vector<std::map<int, ObservationBatch>>& new_batches) {
    const int n = static_cast<int>(states.size());
    if (W.rows() != n || W.cols() != n) throw InvalidInputError("echo_round: W size mismatch");
    if (static_cast<int>(new_batches.size()) != n)
        throw InvalidInputError("echo_round: batch list size mismatch");
    for (const RobotState& st : states)
        if (st.store != ConsensusStore::Flat)
            throw InvalidInputError("echo_round: robots must use the flat store");

    std::vector<std::map<int, GpStats>> old;
    old.reserve(states.size());
    for (const RobotState& st : states) old.push_back(st.stats);

    for (int i = 0; i < n; ++i) {
        RobotState& st = states[static_cast<std::size_t>(i)];
        const double voxel = st.map.params().tree.voxel_size;
        const double prior = st.map.params().tree.prior_mean;

        std::set<int> classes;
        for (int j = 0; j < n; ++j)
            if (W(i, j) > 0.0 || j == i)
                for (const auto& [cls, s] : old[static_cast<std::size_t>(j)]) {
                    (void)s;
                    classes.insert(cls);
                }
        for (const auto& [cls, b] : new_batches[static_cast<std::size_t>(i)]) {
            (void)b;
            classes.insert(cls);
        }

        std::map<int, GpStats> next;
        for (int cls : classes) {
            // Candidate points in deterministic order: ascending neighbor id,
            // stored order within each neighbor, first occurrence wins. Own
            // points are candidates even when W(i,i) = 0.
            GpStats merged = fresh_stats(voxel, prior);
            std::vector<GridKey> order;
            std::unordered_map<GridKey, std::pair<double, double>, GridKeyHash> acc;
            for (int j = 0; j < n; ++j) {
                if (!(W(i, j) > 0.0) && j != i) continue;
                double w = W(i, j);
                const auto it = old[static_cast<std::size_t>(j)].find(cls);
                if (it == old[static_cast<std::size_t>(j)].end()) continue;
                const GpStats& s = it->second;
                for (std::size_t k = 0; k < s.keys.size(); ++k) {
                    auto [slot, fresh] = acc.emplace(s.keys[k], std::make_pair(0.0, 0.0));
                    if (fresh) order.push_back(s.keys[k]);
                    slot->second.first += w * s.counts[static_cast<Eigen::Index>(k)];
                    slot->second.second += w * s.counts[static_cast<Eigen::Index>(k)] *
                                           s.means[static_cast<Eigen::Index>(k)];
                }
            }
            merged.reserve(static_cast<int>(order.size()));
            for (const GridKey& key : order) {
                const auto& [m, mz] = acc.at(key);
                // A zero averaged count carries no information; the point is
                // indistinguishable from an absent one and is dropped.
                if (m <= 0.0) continue;
                merged.append(key, m, mz / m);
            }
            const auto bit = new_batches[static_cast<std::size_t>(i)].find(cls);
            if (bit != new_batches[static_cast<std::size_t>(i)].end() && !bit->second.empty())
                merged = merge_batch(std::move(merged), bit->second, 1.0);
            if (!merged.empty()) next.emplace(cls, std::move(merged));
        }
        st.stats = std::move(next);
    }
}

void centralized_update(std::map<int, GpStats>& central,
                        const std::vector<std::map<int, ObservationBatch>>& new_batches,
                        const Vec& pi, double voxel_size, double prior_mean) {
    if (static_cast<Eigen::Index>(new_batches.size()) != pi.size())
        throw InvalidInputError("centralized_update: pi size mismatch");
    for (std::size_t i = 0; i < new_batches.size(); ++i) {
        for (const auto& [cls, batch] : new_batches[i]) {
            if (batch.empty()) continue;
            auto it = central.find(cls);
            if (it == central.end())
                it = central.emplace(cls, fresh_stats(voxel_size, prior_mean)).first;
            it->second =
                merge_batch(std::move(it->second), batch, pi[static_cast<Eigen::Index>(i)]);
        }
    }
}

void echoless_round(std::vector<RobotState>& states, const NetworkGraph& graph,
                    const std::vector<std::map<int, ObservationBatch>>& new_batches,
                    int round, std::vector<MessageLogEntry>* log) {
    const int n = graph.n;
    if (static_cast<int>(states.size()) != n)
        throw InvalidInputError("echoless_round: robot count mismatch");
    if (static_cast<int>(new_batches.size()) != n)
        throw InvalidInputError("echoless_round: batch list size mismatch");

    std::vector<std::vector<MiniBatch>> old_out;
    old_out.reserve(states.size());
    for (RobotState& st : states) old_out.push_back(std::move(st.outbox));

    for (int i = 0; i < n; ++i) {
        RobotState& st = states[static_cast<std::size_t>(i)];
        std::vector<MiniBatch> next_out;
        for (int j : graph.neighbors[static_cast<std::size_t>(i)]) {
            for (const MiniBatch& mb : old_out[static_cast<std::size_t>(j)]) {
                if (log != nullptr) {
                    MessageLogEntry e;
                    e.round = round;
                    e.sender = j;
                    e.receiver = i;
                    e.origin = mb.origin;
                    e.release_time = mb.release_time;
                    e.visited.assign(mb.visited.begin(), mb.visited.end());
                    log->push_back(std::move(e));
                }
                if (mb.visited.count(i)) continue;
                // Stale copies of an already-incorporated batch can arrive
                // later along longer cycles with a visited list that predates
                // this robot; they are dropped, not re-averaged.
                if (st.seen.count(mb.identity())) continue;
                st.seen.insert(mb.identity());
                for (const auto& [cls, batch] : mb.payload)
                    incorporate(st, cls, batch, graph.pi[mb.origin]);
                MiniBatch fwd = mb;
                fwd.visited.insert(i);
                next_out.push_back(std::move(fwd));
            }
        }
        const auto& own = new_batches[static_cast<std::size_t>(i)];
        bool has_own = false;
        for (const auto& [cls, batch] : own)
            if (!batch.empty()) has_own = true;
        if (has_own) {
            for (const auto& [cls, batch] : own) incorporate(st, cls, batch, graph.pi[i]);
            MiniBatch mb;
            mb.origin = i;
            mb.release_time = round;
            mb.payload = own;
            mb.visited.insert(i);
            st.seen.insert(mb.identity());
            next_out.push_back(std::move(mb));
        }
        st.outbox = std::move(next_out);
    }
}

namespace {

// Macro-averaged mean/variance discrepancy against the centralized
// reference, evaluated at the reference's own pseudo points.
MaeRow mae_row(int round, int robot_id, const RobotState& st,
               const std::map<int, const GpMarginals*>& central_pred,
               const std::map<int, GpStats>& central_stats, const KernelSpec& kernel,
               double sigma2) {
    MaeRow row;
    row.round = round;
    row.robot = robot_id;
    int n_classes = 0;
    for (const auto& [cls, ctr] : central_pred) {
        const GpStats& cs = central_stats.at(cls);
        if (cs.empty()) continue;
        GpMarginals mine;
        if (st.store == ConsensusStore::Tree) {
            if (st.map.has_class(cls)) {
                mine = st.map.tree(cls).predict_many(cs.pts);
            } else {
                mine.mean = Vec::Constant(cs.pts.cols(), st.map.params().tree.prior_mean);
                mine.var = Vec::Constant(cs.pts.cols(), kernel.signal_variance);
            }
        } else {
            auto it = st.stats.find(cls);
            GpStats fallback;
            fallback.prior_mean = st.map.params().tree.prior_mean;
            fallback.voxel_size = st.map.params().tree.voxel_size;
            const GpStats& s = it != st.stats.end() ? it->second : fallback;
            mine = compressed_marginals(kernel, s, sigma2, cs.pts);
        }
        row.mean_mae += (mine.mean - ctr->mean).cwiseAbs().mean();
        row.var_mae += (mine.var - ctr->var).cwiseAbs().mean();
        ++n_classes;
    }
    if (n_classes > 0) {
        row.mean_mae /= n_classes;
        row.var_mae /= n_classes;
    }
    return row;
}

}  // namespace

MultiRobotResult run_multi_robot(const Environment& env,
                                 const std::vector<std::vector<Pose2>>& trajectories,
                                 const NetworkGraph& graph, int T, Protocol protocol,
                                 int extra_rounds, const MultiRobotParams& params) {
    const int n = graph.n;
    if (static_cast<int>(trajectories.size()) != n)
        throw InvalidInputError("run_multi_robot: one trajectory per robot required");
    if (T < 1) throw InvalidInputError("run_multi_robot: T must be >= 1");
    if (extra_rounds < 0) throw InvalidInputError("run_multi_robot: extra_rounds must be >= 0");
    for (const auto& traj : trajectories)
        if (static_cast<int>(traj.size()) < T)
            throw InvalidInputError("run_multi_robot: trajectory shorter than T");

    const double voxel = params.map.tree.voxel_size;
    const double pad = params.frame_size * voxel;
    MultiRobotResult res;
    res.central_map = SemanticMap::for_environment(env, params.map, pad);

    std::vector<RobotState> robots(static_cast<std::size_t>(n));
    std::vector<std::mt19937_64> rngs;
    for (int i = 0; i < n; ++i) {
        RobotState& st = robots[static_cast<std::size_t>(i)];
        st.id = i;
        st.store = protocol == Protocol::Echoless ? ConsensusStore::Tree : ConsensusStore::Flat;
        st.map = res.central_map.clone();
        rngs.emplace_back(params.seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(i + 1));
    }

    const int total_rounds = T + extra_rounds;
    for (int t = 1; t <= total_rounds; ++t) {
        std::vector<std::map<int, ObservationBatch>> batches(static_cast<std::size_t>(n));
        if (t <= T) {
            for (int i = 0; i < n; ++i) {
                SensorObservation obs = observe(
                    env, trajectories[static_cast<std::size_t>(i)][static_cast<std::size_t>(t - 1)],
                    params.frame, params.sensor_noise_var, params.class_error_prob,
                    rngs[static_cast<std::size_t>(i)]);
                auto full = build_training_batch_2d(obs, voxel, params.frame_size);
                // Frame blocks can overhang the padded root near the bounding
                // box; out-of-root cells are dropped consistently for robots
                // and the centralized reference alike.
                for (auto& [cls, batch] : full) {
                    ObservationBatch kept = clip_batch_to_box(
                        batch, res.central_map.root_ctr(), res.central_map.root_side(), voxel);
                    if (!kept.empty()) batches[static_cast<std::size_t>(i)][cls] = std::move(kept);
                }
            }
        }

        if (protocol == Protocol::Echo) {
            echo_round(robots, graph.W, batches);
        } else {
            echoless_round(robots, graph, batches, t,
                           params.record_messages ? &res.message_log : nullptr);
        }
        centralized_update(res.central_stats, batches, graph.pi, voxel,
                           params.map.tree.prior_mean);
        for (int i = 0; i < n; ++i)
            for (const auto& [cls, batch] : batches[static_cast<std::size_t>(i)])
                res.central_map.ingest_weighted(cls, WeightedBatch::from(batch, graph.pi[i]));

        if (params.record_mae) {
            std::map<int, GpMarginals> central_pred;
            std::map<int, const GpMarginals*> pred_ptr;
            for (const auto& [cls, cs] : res.central_stats) {
                if (cs.empty()) continue;
                central_pred[cls] = protocol == Protocol::Echoless
                                        ? res.central_map.tree(cls).predict_many(cs.pts)
                                        : compressed_marginals(params.map.kernel, cs,
                                                               params.map.sigma2, cs.pts);
                pred_ptr[cls] = &central_pred[cls];
            }
            for (int i = 0; i < n; ++i)
                res.mae_log.push_back(mae_row(t, i, robots[static_cast<std::size_t>(i)], pred_ptr,
                                              res.central_stats, params.map.kernel,
                                              params.map.sigma2));
        }
    }

    res.robot_maps.reserve(robots.size());
    for (RobotState& st : robots) {
        if (st.store == ConsensusStore::Tree) {
            res.robot_maps.push_back(std::move(st.map));
        } else {
            SemanticMap m(res.central_map.root_ctr(), res.central_map.root_side(),
                          res.central_map.params());
            for (const auto& [cls, s] : st.stats) {
                if (s.empty()) continue;
                WeightedBatch wb;
                wb.keys = s.keys;
                wb.counts = s.counts;
                wb.means = s.means;
                m.ingest_weighted(cls, wb);
            }
            res.robot_maps.push_back(std::move(m));
        }
    }
    return res;
}

}  // namespace semtsdf
