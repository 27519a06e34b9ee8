#include "semtsdf/network.hpp"

#include "doctest.h"

#include <cmath>

using namespace semtsdf;

namespace {

Mat adjacency3() {
    Mat A = Mat::Zero(3, 3);
    A(0, 1) = A(1, 0) = 0.25;
    A(0, 2) = A(2, 0) = 0.25;
    return A;
}

ObservationBatch one_cell(std::int64_t count, double mean) {
    ObservationBatch b;
    b.keys = {GridKey(2, 3)};
    b.counts = {count};
    b.means = {mean};
    return b;
}

double count_of(const RobotState& r, int cls) {
    auto pp = r.per_point_stats();
    auto it = pp.find(cls);
    if (it == pp.end() || it->second.size() == 0) return 0.0;
    return it->second.counts[0];
}

double mean_of(const RobotState& r, int cls) {
    auto pp = r.per_point_stats();
    return pp.at(cls).means[0];
}

}  // namespace

TEST_CASE("averaging weights from the graph laplacian") {
    NetworkGraph g = build_weight_matrix(adjacency3(), 1.0);

    CHECK(max_degree(adjacency3()) == doctest::Approx(0.5));
    REQUIRE(g.n == 3);
    Mat expect(3, 3);
    expect << 0.5, 0.25, 0.25, 0.25, 0.75, 0.0, 0.25, 0.0, 0.75;
    CHECK((g.W - expect).lpNorm<Eigen::Infinity>() < 1e-15);

    // symmetric weights are doubly stochastic: uniform credibility
    REQUIRE(g.pi.size() == 3);
    for (int i = 0; i < 3; ++i)
        CHECK(std::abs(g.pi[i] - 1.0 / 3.0) < 1e-12);
    CHECK(std::abs((g.W.transpose() * g.pi - g.pi).lpNorm<Eigen::Infinity>()) < 1e-12);

    CHECK(g.neighbors[0] == std::vector<int>{1, 2});
    CHECK(g.neighbors[1] == std::vector<int>{0});

    // step size is capped by the inverse max degree
    CHECK_NOTHROW(build_weight_matrix(adjacency3(), 2.0));
    CHECK_THROWS_AS(build_weight_matrix(adjacency3(), 2.5), ConfigError);
    CHECK_THROWS_AS(build_weight_matrix(adjacency3(), 0.0), ConfigError);
    CHECK_THROWS_AS(build_weight_matrix(adjacency3(), -1.0), ConfigError);
}

TEST_CASE("bad topologies are rejected") {
    Mat asym = adjacency3();
    asym(0, 1) = 0.3;
    CHECK_THROWS_AS(build_weight_matrix(asym, 1.0), TopologyError);

    Mat selfloop = adjacency3();
    selfloop(1, 1) = 0.1;
    CHECK_THROWS_AS(build_weight_matrix(selfloop, 1.0), TopologyError);

    Mat split = Mat::Zero(4, 4);  // two disconnected pairs
    split(0, 1) = split(1, 0) = 0.5;
    split(2, 3) = split(3, 2) = 0.5;
    CHECK_THROWS_AS(build_weight_matrix(split, 1.0), TopologyError);

    Mat negative = adjacency3();
    negative(0, 1) = negative(1, 0) = -0.25;
    CHECK_THROWS_AS(build_weight_matrix(negative, 1.0), TopologyError);

    CHECK_THROWS_AS(build_weight_matrix(Mat::Zero(3, 2), 1.0), TopologyError);
}

TEST_CASE("full-exchange averaging blends counts and means") {
    Mat A = Mat::Zero(2, 2);
    A(0, 1) = A(1, 0) = 0.5;
    NetworkGraph g = build_weight_matrix(A, 1.0);  // W = [[.5,.5],[.5,.5]]

    std::vector<RobotState> r(2);
    r[0].id = 0;
    r[1].id = 1;

    std::vector<std::map<int, ObservationBatch>> fresh(2);
    fresh[0][1] = one_cell(4, 1.0);
    fresh[1][1] = one_cell(4, 3.0);
    echo_round(r, g.W, fresh);

    // averaging ran on empty stores; fresh data merged afterwards at weight 1
    CHECK(count_of(r[0], 1) == doctest::Approx(4.0));
    CHECK(mean_of(r[0], 1) == doctest::Approx(1.0));
    CHECK(mean_of(r[1], 1) == doctest::Approx(3.0));

    std::vector<std::map<int, ObservationBatch>> none(2);
    echo_round(r, g.W, none);
    for (int i = 0; i < 2; ++i) {
        CHECK(count_of(r[i], 1) == doctest::Approx(4.0));
        CHECK(mean_of(r[i], 1) == doctest::Approx(2.0));
    }

    // the blend is now stationary
    echo_round(r, g.W, none);
    CHECK(count_of(r[0], 1) == doctest::Approx(4.0));
    CHECK(mean_of(r[0], 1) == doctest::Approx(2.0));

    // matches the credibility-weighted reference estimator
    std::map<int, GpStats> central;
    centralized_update(central, fresh, g.pi, 0.1, 0.0);
    CHECK(central.at(1).counts[0] == doctest::Approx(4.0));
    CHECK(central.at(1).means[0] == doctest::Approx(2.0));
}

TEST_CASE("averaged-away points drop out of the store") {
    Mat A = Mat::Zero(2, 2);
    A(0, 1) = A(1, 0) = 1.0;
    NetworkGraph g = build_weight_matrix(A, 1.0);  // W = [[0,1],[1,0]]

    std::vector<RobotState> r(2);
    r[0].id = 0;
    r[1].id = 1;
    std::vector<std::map<int, ObservationBatch>> fresh(2);
    fresh[0][1] = one_cell(4, 1.0);
    echo_round(r, g.W, fresh);
    CHECK(count_of(r[0], 1) == doctest::Approx(4.0));
    CHECK(count_of(r[1], 1) == doctest::Approx(0.0));

    // zero self-weight swaps the stores each round
    std::vector<std::map<int, ObservationBatch>> none(2);
    echo_round(r, g.W, none);
    CHECK(count_of(r[0], 1) == doctest::Approx(0.0));
    CHECK(count_of(r[1], 1) == doctest::Approx(4.0));
}

TEST_CASE("mini-batch flooding delivers exactly once along a path") {
    Mat A = Mat::Zero(3, 3);  // path 0-1-2
    A(0, 1) = A(1, 0) = 0.5;
    A(1, 2) = A(2, 1) = 0.5;
    NetworkGraph g = build_weight_matrix(A, 1.0);

    std::vector<RobotState> r(3);
    for (int i = 0; i < 3; ++i) r[i].id = i;

    std::vector<std::map<int, ObservationBatch>> fresh(3);
    fresh[0][1] = one_cell(3, 1.0);
    std::vector<MessageLogEntry> log;
    echoless_round(r, g, fresh, 1, &log);

    // origin incorporates its own batch at its credibility weight
    CHECK(count_of(r[0], 1) == doctest::Approx(1.0));
    CHECK(count_of(r[1], 1) == doctest::Approx(0.0));
    REQUIRE(r[0].outbox.size() == 1);
    CHECK(r[0].outbox[0].identity() == std::pair<int, int>{0, 1});
    CHECK(r[0].outbox[0].visited == std::set<int>{0});

    std::vector<std::map<int, ObservationBatch>> none(3);
    echoless_round(r, g, none, 2, &log);
    CHECK(count_of(r[1], 1) == doctest::Approx(1.0));
    CHECK(count_of(r[2], 1) == doctest::Approx(0.0));  // two hops away

    echoless_round(r, g, none, 3, &log);
    CHECK(count_of(r[2], 1) == doctest::Approx(1.0));

    // nothing changes once everyone has the batch
    echoless_round(r, g, none, 4, &log);
    for (int i = 0; i < 3; ++i) {
        CHECK(count_of(r[i], 1) == doctest::Approx(1.0));
        CHECK(mean_of(r[i], 1) == doctest::Approx(1.0));
    }

    // the log saw the copy move outward with growing visited lists
    REQUIRE(!log.empty());
    bool hop12 = false;
    for (const auto& e : log)
        if (e.sender == 1 && e.receiver == 2 && e.origin == 0) hop12 = true;
    CHECK(hop12);
}

TEST_CASE("cycles cannot double-count a mini-batch") {
    Mat A = Mat::Zero(4, 4);  // 4-cycle
    for (auto [i, j] : std::vector<std::pair<int, int>>{{0, 1}, {1, 2}, {2, 3}, {3, 0}})
        A(i, j) = A(j, i) = 0.5;
    NetworkGraph g = build_weight_matrix(A, 0.5);

    std::vector<RobotState> r(4);
    for (int i = 0; i < 4; ++i) r[i].id = i;

    std::vector<std::map<int, ObservationBatch>> fresh(4);
    fresh[0][1] = one_cell(4, 2.5);
    echoless_round(r, g, fresh, 1);

    std::vector<std::map<int, ObservationBatch>> none(4);
    for (int round = 2; round <= 6; ++round) echoless_round(r, g, none, round);

    // robot 2 hears the copy from both directions, robot 0 gets it echoed
    // back; each must count it exactly once at weight 1/4
    for (int i = 0; i < 4; ++i) {
        CHECK(count_of(r[i], 1) == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(mean_of(r[i], 1) == doctest::Approx(2.5));
    }
}

TEST_CASE("distributed information filter step") {
    Mat W(2, 2);
    W << 0.5, 0.5, 0.5, 0.5;

    std::vector<KalmanState> s(2);
    s[0].omega = Eigen::Vector2d(1, 0);
    s[1].omega = Eigen::Vector2d(0, 1);
    s[0].Omega = Mat::Identity(2, 2);
    s[1].Omega = 2.0 * Mat::Identity(2, 2);

    std::vector<KalmanObservation> obs(2);
    obs[0].H = Mat::Identity(2, 2);
    obs[0].V = 2.0 * Mat::Identity(2, 2);
    obs[0].y = Eigen::Vector2d(1, 2);
    // robot 1 has no measurement this round (H stays empty)

    std::vector<KalmanState> out = distributed_kalman_step(s, W, obs);
    REQUIRE(out.size() == 2);

    CHECK((out[0].omega - Eigen::Vector2d(1.0, 1.5)).norm() < 1e-14);
    CHECK((out[0].Omega - 2.0 * Mat::Identity(2, 2)).lpNorm<Eigen::Infinity>() < 1e-14);
    CHECK((out[1].omega - Eigen::Vector2d(0.5, 0.5)).norm() < 1e-14);
    CHECK((out[1].Omega - 1.5 * Mat::Identity(2, 2)).lpNorm<Eigen::Infinity>() < 1e-14);
}

TEST_CASE("synchronous multi-robot mapping end to end") {
    Polygon sq;
    sq.v = {Eigen::Vector2d(4, 4), Eigen::Vector2d(6, 4), Eigen::Vector2d(6, 6),
            Eigen::Vector2d(4, 6)};
    Environment env;
    env.bbox = {Eigen::Vector2d(0, 0), Eigen::Vector2d(10, 10)};
    env.num_classes = 1;
    env.obstacles = {{sq}};

    Mat A = Mat::Zero(2, 2);
    A(0, 1) = A(1, 0) = 0.5;
    NetworkGraph g = build_weight_matrix(A, 1.0);

    std::vector<std::vector<Pose2>> traj = {sample_trajectory(env, 3, 3),
                                            sample_trajectory(env, 4, 3)};

    MultiRobotParams p;
    p.map.kernel = KernelSpec::defaults_for_voxel(0.2);
    p.map.sigma2 = 0.01;
    p.map.truncation = 0.6;
    p.map.num_classes = 1;
    p.map.tree.voxel_size = 0.2;
    p.map.tree.prior_mean = 0.6;
    p.frame = SensorFrame::radial(24, 2.0 * M_PI, 6.0);
    p.frame_size = 6;
    p.record_messages = true;

    MultiRobotResult res =
        run_multi_robot(env, traj, g, 3, Protocol::Echoless, 1, p);

    REQUIRE(res.robot_maps.size() == 2);
    CHECK(!res.central_map.empty());
    CHECK(!res.central_stats.empty());
    CHECK(res.mae_log.size() == 2 * 4);  // (T + extra) rounds x robots
    CHECK(!res.message_log.empty());

    // after T + n - 1 rounds the flooded stores agree with the reference
    double final_mae = 0.0;
    for (const MaeRow& row : res.mae_log)
        if (row.round == 4) final_mae = std::max(final_mae, row.mean_mae);
    CHECK(final_mae < 1e-9);

    // the same run over full-exchange averaging converges but not exactly
    MultiRobotResult echo =
        run_multi_robot(env, traj, g, 3, Protocol::Echo, 40, p);
    double echo_mae = 0.0;
    for (const MaeRow& row : echo.mae_log)
        if (row.round == 43) echo_mae = std::max(echo_mae, row.mean_mae);
    CHECK(echo_mae < 1e-3);
}
