#include "semtsdf/config.hpp"
#include "semtsdf/io.hpp"

#include "doctest.h"
#include "json.hpp"

#include <cmath>
#include <cstdlib>
#include <sstream>

using namespace semtsdf;

TEST_CASE("shortest round-trip float formatting") {
    for (double v : {1.0 / 3.0, 0.1, -2.5e-10, 1e300, 0.0, 42.0, M_PI,
                     6.02214076e23, -0.4999999999999999}) {
        std::string s = fmt_g17(v);
        CHECK(std::strtod(s.c_str(), nullptr) == v);
    }
    CHECK(fmt_g17(42.0) == "42");
    CHECK(fmt_g17(0.0) == "0");
}

TEST_CASE("environment json round trip") {
    Polygon sq;
    sq.v = {Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 0), Eigen::Vector2d(1, 1),
            Eigen::Vector2d(0, 1)};
    Polygon tri;
    tri.v = {Eigen::Vector2d(3, 3), Eigen::Vector2d(4.25, 3.5), Eigen::Vector2d(3, 4.75)};
    Environment env;
    env.bbox = {Eigen::Vector2d(-1, -2), Eigen::Vector2d(6, 7)};
    env.num_classes = 2;
    env.obstacles = {{sq}, {tri}};

    std::ostringstream os;
    write_environment_json(os, env);
    std::istringstream is(os.str());
    Environment back = read_environment_json(is);

    CHECK((back.bbox.lo - env.bbox.lo).norm() == 0.0);
    CHECK((back.bbox.hi - env.bbox.hi).norm() == 0.0);
    REQUIRE(back.num_classes == 2);
    REQUIRE(back.obstacles.size() == 2);
    REQUIRE(back.obstacles[1].size() == 1);
    REQUIRE(back.obstacles[1][0].v.size() == 3);
    for (std::size_t i = 0; i < 3; ++i)
        CHECK((back.obstacles[1][0].v[i] - tri.v[i]).norm() == 0.0);

    std::istringstream junk("{not json");
    CHECK_THROWS_AS(read_environment_json(junk), ConfigError);
    std::istringstream short_poly(
        "{\"bbox\":{\"lo\":[0,0],\"hi\":[1,1]},\"num_classes\":1,"
        "\"obstacles\":[{\"class\":1,\"vertices\":[[0,0],[1,0]]}]}");
    CHECK_THROWS_AS(read_environment_json(short_poly), ConfigError);
    std::istringstream bad_class(
        "{\"bbox\":{\"lo\":[0,0],\"hi\":[1,1]},\"num_classes\":1,"
        "\"obstacles\":[{\"class\":7,\"vertices\":[[0,0],[1,0],[0,1]]}]}");
    CHECK_THROWS_AS(read_environment_json(bad_class), ConfigError);
}

TEST_CASE("stats and map json carry the posterior header") {
    GpStats stats;
    ObservationBatch b;
    b.keys = {GridKey(1, 2), GridKey(-3, 4)};
    b.counts = {2, 5};
    b.means = {0.25, -0.125};
    stats = merge_batch(std::move(stats), b);
    stats.voxel_size = 0.2;

    KernelSpec k = KernelSpec::defaults_for_voxel(0.2);
    std::ostringstream os;
    write_stats_json(os, stats, k, 0.01);
    nlohmann::json j = nlohmann::json::parse(os.str());
    CHECK(j.at("voxel_size").get<double>() == 0.2);
    CHECK(j.at("sigma2").get<double>() == 0.01);
    CHECK(j.at("kernel").at("lengthscale").get<double>() == k.lengthscale);
    REQUIRE(j.at("points").size() == 2);
    CHECK(j.at("points")[0].at("count").get<double>() == 2.0);
    CHECK(j.at("points")[1].at("mean").get<double>() == -0.125);

    MapParams mp;
    mp.kernel = k;
    mp.sigma2 = 0.01;
    mp.truncation = 0.6;
    mp.num_classes = 2;
    mp.tree.voxel_size = 0.2;
    SemanticMap map(Vec::Zero(2), 8.0, mp);
    map.ingest({{1, b}});

    std::ostringstream ms;
    write_map_json(ms, map);
    nlohmann::json mj = nlohmann::json::parse(ms.str());
    CHECK(mj.at("root_side").get<double>() == 8.0);
    CHECK(mj.at("num_classes").get<int>() == 2);
    REQUIRE(mj.at("classes").contains("1"));
    CHECK(mj.at("classes").at("1").at("level").get<int>() == 0);

    std::ostringstream ts;
    write_tree_json(ts, map.tree(1));
    nlohmann::json tj = nlohmann::json::parse(ts.str());
    CHECK(tj.at("root_side").get<double>() == 8.0);
    CHECK(tj.at("root").at("stats").at("points").size() == 2);
}

TEST_CASE("csv and jsonl emitters") {
    std::ostringstream mae;
    write_mae_csv(mae, {MaeRow{3, 1, 0.5, 0.25}});
    CHECK(mae.str() == "round,robot,mean_mae,var_mae\n3,1,0.5,0.25\n");

    std::ostringstream traj;
    write_trajectory_csv(traj, {Pose2{Eigen::Vector2d(1.5, 2.5), 0.5}});
    CHECK(traj.str() == "t,x,y,theta\n0,1.5,2.5,0.5\n");

    std::ostringstream sweep;
    SweepRow row;
    row.label = "base";
    row.seed = 7;
    row.report.precision = 0.5;
    row.report.n_sdf_points = 9;
    write_sweep_csv(sweep, {row});
    std::string header = sweep.str().substr(0, sweep.str().find('\n'));
    CHECK(header ==
          "label,seed,misclassification_rate,precision,recall,false_discovery_rate,"
          "false_negative_rate,sdf_error,normalized_sdf_error,sdf_spearman,"
          "n_class_points,n_sdf_points");

    std::ostringstream contours;
    SurfaceContours sc;
    sc[2] = {{Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 0.5)}};
    write_contours_csv(contours, sc);
    CHECK(contours.str() ==
          "class,polyline,vertex,x,y\n2,0,0,0,0\n2,0,1,1,0.5\n");

    std::ostringstream svg;
    write_contours_svg(svg, sc, nullptr);
    CHECK(svg.str().find("<svg") != std::string::npos);
    CHECK(svg.str().find("<polyline") != std::string::npos);

    std::ostringstream metrics;
    MetricReport rep;
    rep.sdf_spearman = 0.875;
    rep.n_class_points = 11;
    write_metrics_json(metrics, rep);
    nlohmann::json j = nlohmann::json::parse(metrics.str());
    CHECK(j.at("sdf_spearman").get<double>() == 0.875);
    CHECK(j.at("n_class_points").get<int>() == 11);

    std::ostringstream jsonl;
    MessageLogEntry e;
    e.round = 2;
    e.sender = 0;
    e.receiver = 1;
    e.origin = 0;
    e.release_time = 1;
    e.visited = {0, 1};
    write_message_log_jsonl(jsonl, {e, e});
    std::istringstream lines(jsonl.str());
    std::string line;
    int n_lines = 0;
    while (std::getline(lines, line)) {
        ++n_lines;
        nlohmann::json parsed = nlohmann::json::parse(line);
        CHECK(parsed.at("visited").size() == 2);
    }
    CHECK(n_lines == 2);
}

TEST_CASE("config defaults are derived on resolve") {
    RunConfig c = default_run_config();
    c.mode = "map-single";
    c.resolve();

    CHECK(c.truncation == doctest::Approx(0.3));
    CHECK(c.prior_mean == doctest::Approx(0.3));
    CHECK(c.lengthscale == doctest::Approx(0.1));
    CHECK(c.cutoff_radius == doctest::Approx(0.3));
    CHECK(c.epsilon == doctest::Approx(0.45));
    CHECK(c.contour_grid_res == doctest::Approx(0.05));
    CHECK(c.var_threshold == doctest::Approx(0.5));
    CHECK(c.boundary_spacing == doctest::Approx(0.05));

    // bundled 3-robot graph: max degree 0.5
    REQUIRE(c.adjacency.rows() == 3);
    CHECK(c.nu == doctest::Approx(1.0 / 1.5));
    CHECK(c.extra_rounds == 2);

    MapParams mp = c.map_params();
    CHECK(mp.kernel.lengthscale == doctest::Approx(0.1));
    CHECK(mp.tree.voxel_size == doctest::Approx(0.1));
    CHECK(mp.num_classes == 2);

    SensorFrame f = c.sensor_frame();
    CHECK(f.directions.size() == 180);
    CHECK(f.max_range == doctest::Approx(10.0));

    SingleRunParams sp = c.single_params();
    CHECK(sp.trajectory_length == 60);
    CHECK(sp.frame_size == 10);
}

TEST_CASE("config parsing accepts overrides and rejects junk") {
    RunConfig c = parse_run_config(R"({
        "seed": 9,
        "out_dir": "results",
        "map": {"voxel_size": 0.2, "max_leaf_points": 50},
        "sensor": {"rays": 90, "noise_var": 0.01},
        "network": {"protocol": "echo", "rounds": 5}
    })");
    CHECK(c.seed == 9);
    CHECK(c.out_dir == "results");
    CHECK(c.voxel_size == doctest::Approx(0.2));
    CHECK(c.max_leaf_points == 50);
    CHECK(c.rays == 90);
    CHECK(c.noise_var == doctest::Approx(0.01));
    CHECK(c.protocol == "echo");
    CHECK(c.rounds == 5);
    c.mode = "map-multi";
    c.resolve();
    CHECK(c.truncation == doctest::Approx(0.6));  // follows the new voxel

    CHECK_THROWS_AS(parse_run_config("{\"map\": {\"voxl_size\": 0.2}}"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("{\"voxel_size\": 0.2}"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("not json at all"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("{\"map\": {\"voxel_size\": \"thin\"}}"),
                    ConfigError);

    // the error must name the offending field
    try {
        parse_run_config("{\"sensor\": {\"rays\": \"many\"}}");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("rays") != std::string::npos);
    }

    RunConfig bad = default_run_config();
    bad.mode = "map-single";
    bad.rays = 1;
    CHECK_THROWS_AS(bad.resolve(), ConfigError);

    RunConfig bad2 = default_run_config();
    bad2.mode = "map-multi";
    bad2.protocol = "gossip";
    CHECK_THROWS_AS(bad2.resolve(), ConfigError);

    RunConfig bad3 = default_run_config();
    bad3.mode = "map-single";
    bad3.class_error_prob = 1.0;
    CHECK_THROWS_AS(bad3.resolve(), ConfigError);

    RunConfig bad4 = default_run_config();
    bad4.mode = "eval";
    bad4.epsilon = 10.0;  // frame halo cannot cover it
    CHECK_THROWS_AS(bad4.resolve(), ConfigError);
}
