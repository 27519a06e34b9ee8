#include "semtsdf/config.hpp"

#include "json.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace semtsdf {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& field, const std::string& why) {
    throw ConfigError("config field '" + field + "': " + why);
}

void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
    if (!j.is_object()) bad(where, "must be an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key())) bad(where + "." + it.key(), "unknown key");
}

double get_num(const json& j, const std::string& field) {
    if (!j.is_number()) bad(field, "must be a number");
    return j.get<double>();
}

int get_int(const json& j, const std::string& field) {
    if (!j.is_number_integer()) bad(field, "must be an integer");
    return j.get<int>();
}

bool get_bool(const json& j, const std::string& field) {
    if (!j.is_boolean()) bad(field, "must be a boolean");
    return j.get<bool>();
}

std::string get_str(const json& j, const std::string& field) {
    if (!j.is_string()) bad(field, "must be a string");
    return j.get<std::string>();
}

}  // namespace

RunConfig default_run_config() {
    RunConfig c;
    c.adjacency = Mat::Zero(3, 3);
    c.adjacency(0, 1) = c.adjacency(1, 0) = 0.25;
    c.adjacency(0, 2) = c.adjacency(2, 0) = 0.25;
    return c;
}

void RunConfig::resolve() {
    if (!(voxel_size > 0.0)) bad("map.voxel_size", "must be > 0");
    if (truncation < 0.0) truncation = 3.0 * voxel_size;
    if (!prior_mean_set) prior_mean = truncation;
    if (lengthscale < 0.0) lengthscale = voxel_size;
    if (cutoff_radius < 0.0) cutoff_radius = 3.0 * lengthscale;
    if (epsilon < 0.0) epsilon = 0.5 * (frame_size - 1) * voxel_size;
    if (contour_grid_res < 0.0) contour_grid_res = 0.5 * voxel_size;
    if (var_threshold < 0.0) var_threshold = 0.5 * signal_variance;
    if (boundary_spacing < 0.0) boundary_spacing = 0.5 * voxel_size;
    if (adjacency.size() == 0) adjacency = default_run_config().adjacency;
    if (nu < 0.0) {
        double delta_deg = max_degree(adjacency);
        nu = delta_deg > 0.0 ? 1.0 / (delta_deg + 1.0) : 1.0;
    }
    if (extra_rounds < 0) extra_rounds = static_cast<int>(adjacency.rows()) - 1;

    if (!(sigma2 > 0.0)) bad("map.sigma2", "must be > 0");
    if (!(truncation > 0.0)) bad("map.truncation", "must be > 0");
    if (!(lengthscale > 0.0)) bad("map.lengthscale", "must be > 0");
    if (!(signal_variance > 0.0)) bad("map.signal_variance", "must be > 0");
    if (!(cutoff_radius > 0.0)) bad("map.cutoff_radius", "must be > 0");
    if (!(delta > 1.0)) bad("map.delta", "must be > 1");
    if (max_leaf_points < 1) bad("map.max_leaf_points", "must be >= 1");
    if (num_classes < 1) bad("environment.num_classes", "must be >= 1");
    if (!(bbox.hi.array() > bbox.lo.array()).all())
        bad("environment.bbox", "hi must exceed lo per axis");
    if (rays < 2) bad("sensor.rays", "must be >= 2");
    if (!(fov > 0.0) || fov > 2.0 * M_PI + 1e-12) bad("sensor.fov", "must be in (0, 2*pi]");
    if (!(max_range > 0.0)) bad("sensor.max_range", "must be > 0");
    if (noise_var < 0.0) bad("sensor.noise_var", "must be >= 0");
    if (class_error_prob < 0.0 || class_error_prob >= 1.0)
        bad("sensor.class_error_prob", "must be in [0, 1)");
    if (frame_size < 1) bad("sensor.frame_size", "must be >= 1");
    if ((frame_size - 1) * voxel_size + 1e-12 < 2.0 * epsilon)
        bad("sensor.epsilon", "frame must cover it: (frame_size-1)*voxel_size >= 2*epsilon");
    if (trajectory_length < 1) bad("trajectory_length", "must be >= 1");
    if (protocol != "echo" && protocol != "echoless")
        bad("network.protocol", "must be 'echo' or 'echoless'");
    if (rounds < 1) bad("network.rounds", "must be >= 1");
    if (!(contour_grid_res > 0.0)) bad("eval.contour_grid_res", "must be > 0");
    if (!(var_threshold > 0.0)) bad("eval.var_threshold", "must be > 0");
    if (!(boundary_spacing > 0.0)) bad("eval.boundary_spacing", "must be > 0");
    env_gen.validate();

    static const std::set<std::string> kSweepable = {
        "voxel_size",   "max_leaf_points", "delta",      "noise_var", "class_error_prob",
        "frame_size",   "lengthscale",     "sigma2",     "rays",      "trajectory_length",
        "signal_variance"};
    for (const auto& [name, values] : sweep_params) {
        if (!kSweepable.count(name)) bad("sweep.parameters." + name, "not a sweepable parameter");
        if (values.empty()) bad("sweep.parameters." + name, "needs at least one value");
    }
}

MapParams RunConfig::map_params() const {
    MapParams m;
    m.kernel.lengthscale = lengthscale;
    m.kernel.signal_variance = signal_variance;
    m.kernel.cutoff_radius = cutoff_radius;
    m.sigma2 = sigma2;
    m.truncation = truncation;
    m.num_classes = num_classes;
    m.tree.delta = delta;
    m.tree.max_leaf_points = max_leaf_points;
    m.tree.voxel_size = voxel_size;
    m.tree.prior_mean = prior_mean;
    m.tree.maintain_cache = maintain_cache;
    return m;
}

SensorFrame RunConfig::sensor_frame() const { return SensorFrame::radial(rays, fov, max_range); }

SingleRunParams RunConfig::single_params() const {
    SingleRunParams p;
    p.seed = seed;
    p.bbox = bbox;
    p.num_classes = num_classes;
    p.env_gen = env_gen;
    p.frame = sensor_frame();
    p.sensor_noise_var = noise_var;
    p.class_error_prob = class_error_prob;
    p.frame_size = frame_size;
    p.trajectory_length = trajectory_length;
    p.map = map_params();
    return p;
}

RunConfig parse_run_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    RunConfig c = default_run_config();
    check_keys(j, "config",
               {"seed", "out_dir", "environment", "map", "sensor", "trajectory_length",
                "network", "eval", "sweep"});

    if (j.contains("seed")) {
        if (!j["seed"].is_number_unsigned() && !j["seed"].is_number_integer())
            bad("seed", "must be a nonnegative integer");
        auto s = j["seed"].get<std::int64_t>();
        if (s < 0) bad("seed", "must be a nonnegative integer");
        c.seed = static_cast<std::uint64_t>(s);
    }
    if (j.contains("out_dir")) c.out_dir = get_str(j["out_dir"], "out_dir");
    if (j.contains("trajectory_length"))
        c.trajectory_length = get_int(j["trajectory_length"], "trajectory_length");

    if (j.contains("environment")) {
        const json& e = j["environment"];
        check_keys(e, "environment",
                   {"file", "bbox", "num_classes", "min_polygons", "max_polygons", "min_radius",
                    "max_radius", "min_vertices", "max_vertices", "separation", "retry_budget"});
        if (e.contains("file")) c.env_file = get_str(e["file"], "environment.file");
        if (e.contains("bbox")) {
            const json& b = e["bbox"];
            if (!b.is_array() || b.size() != 2 || !b[0].is_array() || b[0].size() != 2 ||
                !b[1].is_array() || b[1].size() != 2)
                bad("environment.bbox", "must be [[lox, loy], [hix, hiy]]");
            c.bbox.lo = Eigen::Vector2d(get_num(b[0][0], "environment.bbox"),
                                        get_num(b[0][1], "environment.bbox"));
            c.bbox.hi = Eigen::Vector2d(get_num(b[1][0], "environment.bbox"),
                                        get_num(b[1][1], "environment.bbox"));
        }
        if (e.contains("num_classes"))
            c.num_classes = get_int(e["num_classes"], "environment.num_classes");
        if (e.contains("min_polygons"))
            c.env_gen.min_polygons = get_int(e["min_polygons"], "environment.min_polygons");
        if (e.contains("max_polygons"))
            c.env_gen.max_polygons = get_int(e["max_polygons"], "environment.max_polygons");
        if (e.contains("min_radius"))
            c.env_gen.min_radius = get_num(e["min_radius"], "environment.min_radius");
        if (e.contains("max_radius"))
            c.env_gen.max_radius = get_num(e["max_radius"], "environment.max_radius");
        if (e.contains("min_vertices"))
            c.env_gen.min_vertices = get_int(e["min_vertices"], "environment.min_vertices");
        if (e.contains("max_vertices"))
            c.env_gen.max_vertices = get_int(e["max_vertices"], "environment.max_vertices");
        if (e.contains("separation"))
            c.env_gen.separation = get_num(e["separation"], "environment.separation");
        if (e.contains("retry_budget"))
            c.env_gen.retry_budget = get_int(e["retry_budget"], "environment.retry_budget");
    }

    if (j.contains("map")) {
        const json& m = j["map"];
        check_keys(m, "map",
                   {"voxel_size", "sigma2", "truncation", "prior_mean", "lengthscale",
                    "signal_variance", "cutoff_radius", "delta", "max_leaf_points",
                    "maintain_cache"});
        if (m.contains("voxel_size")) c.voxel_size = get_num(m["voxel_size"], "map.voxel_size");
        if (m.contains("sigma2")) c.sigma2 = get_num(m["sigma2"], "map.sigma2");
        if (m.contains("truncation")) c.truncation = get_num(m["truncation"], "map.truncation");
        if (m.contains("prior_mean")) {
            c.prior_mean = get_num(m["prior_mean"], "map.prior_mean");
            c.prior_mean_set = true;
        }
        if (m.contains("lengthscale"))
            c.lengthscale = get_num(m["lengthscale"], "map.lengthscale");
        if (m.contains("signal_variance"))
            c.signal_variance = get_num(m["signal_variance"], "map.signal_variance");
        if (m.contains("cutoff_radius"))
            c.cutoff_radius = get_num(m["cutoff_radius"], "map.cutoff_radius");
        if (m.contains("delta")) c.delta = get_num(m["delta"], "map.delta");
        if (m.contains("max_leaf_points"))
            c.max_leaf_points = get_int(m["max_leaf_points"], "map.max_leaf_points");
        if (m.contains("maintain_cache"))
            c.maintain_cache = get_bool(m["maintain_cache"], "map.maintain_cache");
    }

    if (j.contains("sensor")) {
        const json& s = j["sensor"];
        check_keys(s, "sensor",
                   {"rays", "fov", "max_range", "noise_var", "class_error_prob", "frame_size",
                    "epsilon"});
        if (s.contains("rays")) c.rays = get_int(s["rays"], "sensor.rays");
        if (s.contains("fov")) c.fov = get_num(s["fov"], "sensor.fov");
        if (s.contains("max_range")) c.max_range = get_num(s["max_range"], "sensor.max_range");
        if (s.contains("noise_var")) c.noise_var = get_num(s["noise_var"], "sensor.noise_var");
        if (s.contains("class_error_prob"))
            c.class_error_prob = get_num(s["class_error_prob"], "sensor.class_error_prob");
        if (s.contains("frame_size")) c.frame_size = get_int(s["frame_size"], "sensor.frame_size");
        if (s.contains("epsilon")) c.epsilon = get_num(s["epsilon"], "sensor.epsilon");
    }

    if (j.contains("network")) {
        const json& n = j["network"];
        check_keys(n, "network",
                   {"adjacency", "nu", "protocol", "rounds", "extra_rounds", "log_messages"});
        if (n.contains("adjacency")) {
            const json& a = n["adjacency"];
            if (!a.is_array() || a.empty()) bad("network.adjacency", "must be a square matrix");
            const std::size_t rows = a.size();
            c.adjacency = Mat::Zero(static_cast<Eigen::Index>(rows),
                                    static_cast<Eigen::Index>(rows));
            for (std::size_t r = 0; r < rows; ++r) {
                if (!a[r].is_array() || a[r].size() != rows)
                    bad("network.adjacency", "must be a square matrix");
                for (std::size_t col = 0; col < rows; ++col)
                    c.adjacency(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(col)) =
                        get_num(a[r][col], "network.adjacency");
            }
        }
        if (n.contains("nu")) c.nu = get_num(n["nu"], "network.nu");
        if (n.contains("protocol")) c.protocol = get_str(n["protocol"], "network.protocol");
        if (n.contains("rounds")) c.rounds = get_int(n["rounds"], "network.rounds");
        if (n.contains("extra_rounds"))
            c.extra_rounds = get_int(n["extra_rounds"], "network.extra_rounds");
        if (n.contains("log_messages"))
            c.log_messages = get_bool(n["log_messages"], "network.log_messages");
    }

    if (j.contains("eval")) {
        const json& e = j["eval"];
        check_keys(e, "eval", {"contour_grid_res", "var_threshold", "boundary_spacing"});
        if (e.contains("contour_grid_res"))
            c.contour_grid_res = get_num(e["contour_grid_res"], "eval.contour_grid_res");
        if (e.contains("var_threshold"))
            c.var_threshold = get_num(e["var_threshold"], "eval.var_threshold");
        if (e.contains("boundary_spacing"))
            c.boundary_spacing = get_num(e["boundary_spacing"], "eval.boundary_spacing");
    }

    if (j.contains("sweep")) {
        const json& s = j["sweep"];
        check_keys(s, "sweep", {"parameters", "seeds"});
        if (s.contains("parameters")) {
            if (!s["parameters"].is_object()) bad("sweep.parameters", "must be an object");
            for (auto it = s["parameters"].begin(); it != s["parameters"].end(); ++it) {
                if (!it.value().is_array()) bad("sweep.parameters." + it.key(), "must be an array");
                std::vector<double> vals;
                for (const auto& v : it.value())
                    vals.push_back(get_num(v, "sweep.parameters." + it.key()));
                c.sweep_params.emplace_back(it.key(), std::move(vals));
            }
        }
        if (s.contains("seeds")) {
            if (!s["seeds"].is_array()) bad("sweep.seeds", "must be an array");
            for (const auto& v : s["seeds"]) {
                if (!v.is_number_integer() && !v.is_number_unsigned())
                    bad("sweep.seeds", "entries must be nonnegative integers");
                auto sv = v.get<std::int64_t>();
                if (sv < 0) bad("sweep.seeds", "entries must be nonnegative integers");
                c.sweep_seeds.push_back(static_cast<std::uint64_t>(sv));
            }
        }
    }
    return c;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_run_config(ss.str());
}

}  // namespace semtsdf
