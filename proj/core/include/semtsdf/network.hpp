#pragma once

#include "semtsdf/semantic_map.hpp"
#include "semtsdf/sensor.hpp"

#include <map>
#include <set>

namespace semtsdf {

// Undirected communication graph with averaging weights W = I - nu*L and
// its stationary credibility vector pi (pi' W = pi', sum pi = 1).
struct NetworkGraph {
    int n = 0;
    Mat A;
    double nu = 0.0;
    Mat W;
    Vec pi;
    std::vector<std::vector<int>> neighbors;
};

double max_degree(const Mat& A);

NetworkGraph build_weight_matrix(const Mat& A, double nu);

struct KalmanState {
    Vec omega;
    Mat Omega;
};

// Optional linear observation; empty H means no measurement this round.
struct KalmanObservation {
    Mat H;
    Mat V;
    Vec y;
};

// One synchronous round of the fixed-dimension distributed information
// filter: neighborhood-averaged information state plus the local
// measurement's information contribution.
std::vector<KalmanState> distributed_kalman_step(
    const std::vector<KalmanState>& states, const Mat& W,
    const std::vector<KalmanObservation>& obs);

struct MiniBatch {
    int origin = 0;
    int release_time = 0;
    std::map<int, ObservationBatch> payload;  // class id -> batch
    std::set<int> visited;

    std::pair<int, int> identity() const { return {origin, release_time}; }
};

enum class ConsensusStore { Flat, Tree };

struct RobotState {
    int id = 0;
    ConsensusStore store = ConsensusStore::Flat;
    // Tree store: the full per-class map. Flat store: bare per-class stats.
    SemanticMap map;
    std::map<int, GpStats> stats;
    std::vector<MiniBatch> outbox;
    // Identities already incorporated; guards against stale copies arriving
    // via long cycles whose visited lists predate this robot.
    std::set<std::pair<int, int>> seen;

    // Per-point statistics regardless of store mode.
    std::map<int, GpStats> per_point_stats() const;
};

struct MessageLogEntry {
    int round = 0;
    int sender = 0;
    int receiver = 0;
    int origin = 0;
    int release_time = 0;
    std::vector<int> visited;
};

// Full-exchange averaging round: every robot replaces its per-point counts
// and means by the W-weighted average over its closed neighborhood (absent
// points count as zero) and then merges its own fresh batch.
void echo_round(std::vector<RobotState>& states, const Mat& W,
                const std::vector<std::map<int, ObservationBatch>>& new_batches);

// Credibility-weighted reference estimator: every robot's fresh batch is
// merged with weight pi_i.
void centralized_update(std::map<int, GpStats>& central,
                        const std::vector<std::map<int, ObservationBatch>>& new_batches,
                        const Vec& pi, double voxel_size, double prior_mean);

// Mini-batch flooding round: robots gather neighbors' outbox batches that do
// not list them yet, incorporate each exactly once with weight pi_origin,
// mark themselves visited, and re-forward; fresh local observations start a
// new mini-batch.
void echoless_round(std::vector<RobotState>& states, const NetworkGraph& graph,
                    const std::vector<std::map<int, ObservationBatch>>& new_batches,
                    int round, std::vector<MessageLogEntry>* log = nullptr);

enum class Protocol { Echo, Echoless };

struct MaeRow {
    int round = 0;
    int robot = 0;
    double mean_mae = 0.0;
    double var_mae = 0.0;
};

struct MultiRobotParams {
    MapParams map;
    SensorFrame frame = SensorFrame::radial(180, 2.0 * M_PI, 10.0);
    double sensor_noise_var = 0.0;
    double class_error_prob = 0.0;
    int frame_size = 10;
    std::uint64_t seed = 1;
    bool record_mae = true;
    bool record_messages = false;
};

struct MultiRobotResult {
    std::vector<SemanticMap> robot_maps;
    SemanticMap central_map;
    std::map<int, GpStats> central_stats;
    std::vector<MaeRow> mae_log;
    std::vector<MessageLogEntry> message_log;
};

// Synchronous multi-robot mapping: T sensing rounds followed by extra
// purely-communication rounds; the centralized reference is updated in
// lockstep and per-round MAE against it is recorded per robot.
MultiRobotResult run_multi_robot(const Environment& env,
                                 const std::vector<std::vector<Pose2>>& trajectories,
                                 const NetworkGraph& graph, int T, Protocol protocol,
                                 int extra_rounds, const MultiRobotParams& params);

}  // namespace semtsdf
