#include "semtsdf/runner.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>

namespace semtsdf {

namespace {

namespace fs = std::filesystem;

std::ofstream open_out(const fs::path& path) {
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path.string());
    return os;
}

Environment make_environment(const RunConfig& cfg, std::ostream& log) {
    Environment env;
    if (!cfg.env_file.empty()) {
        env = read_environment_file(cfg.env_file);
        log << "[env] loaded " << cfg.env_file << "\n";
    } else {
        env = generate_environment(cfg.seed, cfg.bbox, cfg.num_classes, cfg.env_gen);
        std::size_t n_obs = 0;
        for (const auto& v : env.obstacles) n_obs += v.size();
        log << "[env] generated " << n_obs << " obstacles in " << env.num_classes
            << " classes (seed " << cfg.seed << ")\n";
    }
    return env;
}

void write_env_artifacts(const Environment& env, const fs::path& out, std::ostream& log) {
    {
        auto os = open_out(out / "environment.json");
        write_environment_json(os, env);
    }
    {
        auto os = open_out(out / "environment.svg");
        write_contours_svg(os, SurfaceContours{}, &env);
    }
    log << "[env] wrote " << (out / "environment.json").string() << "\n";
}

void write_map_artifacts(const SemanticMap& map, const RunConfig& cfg, const fs::path& out,
                         const std::string& stem, const Environment* env, std::ostream& log) {
    {
        auto os = open_out(out / (stem + ".json"));
        write_map_json(os, map);
    }
    SurfaceContours contours = map.extract_surface(cfg.contour_grid_res, cfg.var_threshold);
    std::size_t n_lines = 0;
    for (const auto& [cls, lines] : contours) n_lines += lines.size();
    {
        auto os = open_out(out / (stem + "_contours.csv"));
        write_contours_csv(os, contours);
    }
    {
        auto os = open_out(out / (stem + "_contours.svg"));
        write_contours_svg(os, contours, env);
    }
    log << "[map] wrote " << (out / (stem + ".json")).string() << " (" << n_lines
        << " contour polylines)\n";
}

void run_gen_env(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
    Environment env = make_environment(cfg, log);
    write_env_artifacts(env, out, log);
}

SemanticMap build_single_map(const RunConfig& cfg, const Environment& env,
                             std::vector<Pose2>& traj, std::ostream& log) {
    traj = sample_trajectory(env, cfg.seed + 0x9E3779B97F4A7C15ULL * 13, cfg.trajectory_length);
    SemanticMap map = run_single_robot(env, traj, cfg.single_params());
    std::size_t n_pts = 0;
    for (int cls : map.observed_classes()) n_pts += map.tree(cls).flat_stats().size();
    log << "[map] " << traj.size() << " poses -> " << n_pts << " pseudo points over "
        << map.observed_classes().size() << " classes\n";
    return map;
}

void run_map_single(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
    Environment env = make_environment(cfg, log);
    write_env_artifacts(env, out, log);
    std::vector<Pose2> traj;
    SemanticMap map = build_single_map(cfg, env, traj, log);
    {
        auto os = open_out(out / "trajectory.csv");
        write_trajectory_csv(os, traj);
    }
    for (int cls : map.observed_classes()) {
        auto os = open_out(out / ("stats_class" + std::to_string(cls) + ".json"));
        write_stats_json(os, map.tree(cls).flat_stats(), map.params().kernel,
                         map.params().sigma2);
    }
    write_map_artifacts(map, cfg, out, "map", &env, log);
}

void run_eval(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
    Environment env = make_environment(cfg, log);
    std::vector<Pose2> traj;
    SemanticMap map = build_single_map(cfg, env, traj, log);
    MetricReport rep = evaluate_map(map, env);
    {
        auto os = open_out(out / "metrics.json");
        write_metrics_json(os, rep);
    }
    log << "[eval] misclassification " << fmt_g17(rep.misclassification_rate) << ", precision "
        << fmt_g17(rep.precision) << ", recall " << fmt_g17(rep.recall) << "\n";
    log << "[eval] sdf error " << fmt_g17(rep.sdf_error) << " ("
        << fmt_g17(rep.normalized_sdf_error) << " voxels), spearman "
        << fmt_g17(rep.sdf_spearman) << "\n";
    log << "[eval] wrote " << (out / "metrics.json").string() << "\n";
}

void run_map_multi(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
    Environment env = make_environment(cfg, log);
    write_env_artifacts(env, out, log);
    NetworkGraph graph = build_weight_matrix(cfg.adjacency, cfg.nu);
    log << "[net] " << graph.n << " robots, nu " << fmt_g17(graph.nu) << ", protocol "
        << cfg.protocol << "\n";

    std::vector<std::vector<Pose2>> trajs;
    for (int i = 0; i < graph.n; ++i) {
        trajs.push_back(sample_trajectory(
            env, cfg.seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(101 + i),
            cfg.rounds));
        auto os = open_out(out / ("trajectory_robot" + std::to_string(i) + ".csv"));
        write_trajectory_csv(os, trajs.back());
    }

    MultiRobotParams params;
    params.map = cfg.map_params();
    params.frame = cfg.sensor_frame();
    params.sensor_noise_var = cfg.noise_var;
    params.class_error_prob = cfg.class_error_prob;
    params.frame_size = cfg.frame_size;
    params.seed = cfg.seed;
    params.record_mae = true;
    params.record_messages = cfg.log_messages;
    Protocol proto = cfg.protocol == "echo" ? Protocol::Echo : Protocol::Echoless;

    MultiRobotResult res = run_multi_robot(env, trajs, graph, cfg.rounds, proto,
                                           cfg.extra_rounds, params);
    log << "[net] ran " << cfg.rounds << " sensing + " << cfg.extra_rounds
        << " consensus rounds\n";

    {
        auto os = open_out(out / "mae.csv");
        write_mae_csv(os, res.mae_log);
    }
    if (!res.mae_log.empty()) {
        double worst = 0.0;
        for (const MaeRow& r : res.mae_log)
            if (r.round == cfg.rounds + cfg.extra_rounds) worst = std::max(worst, r.mean_mae);
        log << "[net] final-round max mean MAE " << fmt_g17(worst) << "\n";
    }
    if (params.record_messages) {
        auto os = open_out(out / "messages.jsonl");
        write_message_log_jsonl(os, res.message_log);
        log << "[net] wrote " << (out / "messages.jsonl").string() << " ("
            << res.message_log.size() << " transmissions)\n";
    }
    write_map_artifacts(res.central_map, cfg, out, "map_central", &env, log);
    for (int i = 0; i < graph.n; ++i)
        write_map_artifacts(res.robot_maps[static_cast<std::size_t>(i)], cfg, out,
                            "map_robot" + std::to_string(i), &env, log);
}

void run_sweep(const RunConfig& cfg, const fs::path& out, std::ostream& log) {
    std::vector<SweepPoint> grid;
    grid.push_back({"base", [](SingleRunParams&) {}});
    for (const auto& [name, values] : cfg.sweep_params) {
        for (double v : values) {
            std::string label = name + "=" + fmt_g17(v);
            std::string pname = name;
            grid.push_back({label, [pname, v](SingleRunParams& p) {
                                if (pname == "voxel_size") {
                                    p.map.tree.voxel_size = v;
                                    p.map.kernel = KernelSpec::defaults_for_voxel(v);
                                    p.map.truncation = 3.0 * v;
                                    p.map.tree.prior_mean = p.map.truncation;
                                } else if (pname == "max_leaf_points") {
                                    p.map.tree.max_leaf_points = static_cast<int>(v);
                                } else if (pname == "delta") {
                                    p.map.tree.delta = v;
                                } else if (pname == "noise_var") {
                                    p.sensor_noise_var = v;
                                } else if (pname == "class_error_prob") {
                                    p.class_error_prob = v;
                                } else if (pname == "frame_size") {
                                    p.frame_size = static_cast<int>(v);
                                } else if (pname == "lengthscale") {
                                    p.map.kernel.lengthscale = v;
                                    p.map.kernel.cutoff_radius = 3.0 * v;
                                } else if (pname == "sigma2") {
                                    p.map.sigma2 = v;
                                } else if (pname == "rays") {
                                    // ray-count sweeps assume a full-circle scan
                                    p.frame = SensorFrame::radial(static_cast<int>(v), 2.0 * M_PI,
                                                                  p.frame.max_range);
                                } else if (pname == "trajectory_length") {
                                    p.trajectory_length = static_cast<int>(v);
                                } else if (pname == "signal_variance") {
                                    p.map.kernel.signal_variance = v;
                                }
                            }});
        }
    }
    std::vector<std::uint64_t> seeds =
        cfg.sweep_seeds.empty() ? std::vector<std::uint64_t>{cfg.seed} : cfg.sweep_seeds;
    log << "[sweep] " << grid.size() << " grid points x " << seeds.size() << " seeds on "
        << worker_count() << " workers\n";
    std::vector<SweepRow> rows = parameter_sweep(cfg.single_params(), grid, seeds);
    {
        auto os = open_out(out / "sweep.csv");
        write_sweep_csv(os, rows);
    }
    log << "[sweep] wrote " << (out / "sweep.csv").string() << " (" << rows.size()
        << " rows)\n";
}

}  // namespace

void run(RunConfig cfg, std::ostream& log) {
    cfg.resolve();
    fs::path out(cfg.out_dir);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw Error("cannot create output directory " + out.string() + ": " + ec.message());

    if (cfg.mode == "gen-env") {
        run_gen_env(cfg, out, log);
    } else if (cfg.mode == "map-single") {
        run_map_single(cfg, out, log);
    } else if (cfg.mode == "map-multi") {
        run_map_multi(cfg, out, log);
    } else if (cfg.mode == "eval") {
        run_eval(cfg, out, log);
    } else if (cfg.mode == "sweep") {
        run_sweep(cfg, out, log);
    } else {
        throw ConfigError("unknown mode: '" + cfg.mode + "'");
    }
}

}  // namespace semtsdf
