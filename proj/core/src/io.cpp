#include "semtsdf/io.hpp"

#include "json.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>

namespace semtsdf {

std::string fmt_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace {

void emit_point_list(std::ostream& os, const std::vector<Eigen::Vector2d>& pts) {
    os << '[';
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (i) os << ',';
        os << '[' << fmt_g17(pts[i].x()) << ',' << fmt_g17(pts[i].y()) << ']';
    }
    os << ']';
}

void emit_key(std::ostream& os, const GridKey& key) {
    os << '[';
    for (int a = 0; a < key.dim; ++a) {
        if (a) os << ',';
        os << key.c[static_cast<std::size_t>(a)];
    }
    os << ']';
}

void emit_kernel(std::ostream& os, const KernelSpec& k) {
    os << "{\"lengthscale\":" << fmt_g17(k.lengthscale)
       << ",\"signal_variance\":" << fmt_g17(k.signal_variance)
       << ",\"cutoff_radius\":" << fmt_g17(k.cutoff_radius) << '}';
}

void emit_stats(std::ostream& os, const GpStats& stats) {
    os << "{\"points\":[";
    for (std::size_t i = 0; i < stats.keys.size(); ++i) {
        if (i) os << ',';
        os << "{\"key\":";
        emit_key(os, stats.keys[i]);
        os << ",\"count\":" << fmt_g17(stats.counts[static_cast<Eigen::Index>(i)])
           << ",\"mean\":" << fmt_g17(stats.means[static_cast<Eigen::Index>(i)]) << '}';
    }
    os << "]}";
}

void emit_tree_node(std::ostream& os, const TreeNode& node) {
    os << "{\"level\":" << node.level << ",\"center\":[";
    for (Eigen::Index a = 0; a < node.ctr.size(); ++a) {
        if (a) os << ',';
        os << fmt_g17(node.ctr[a]);
    }
    os << ']';
    if (node.is_leaf()) {
        os << ",\"stats\":";
        emit_stats(os, node.stats);
    } else {
        os << ",\"children\":[";
        for (std::size_t c = 0; c < node.children.size(); ++c) {
            if (c) os << ',';
            emit_tree_node(os, *node.children[c]);
        }
        os << ']';
    }
    os << '}';
}

}  // namespace

void write_environment_json(std::ostream& os, const Environment& env) {
    os << "{\"bbox\":{\"lo\":[" << fmt_g17(env.bbox.lo.x()) << ',' << fmt_g17(env.bbox.lo.y())
       << "],\"hi\":[" << fmt_g17(env.bbox.hi.x()) << ',' << fmt_g17(env.bbox.hi.y())
       << "]},\"num_classes\":" << env.num_classes << ",\"obstacles\":[";
    bool first = true;
    for (int cls = 1; cls <= env.num_classes; ++cls) {
        for (const Polygon& poly : env.obstacles[static_cast<std::size_t>(cls - 1)]) {
            if (!first) os << ',';
            first = false;
            os << "{\"class\":" << cls << ",\"vertices\":";
            emit_point_list(os, poly.v);
            os << '}';
        }
    }
    os << "]}\n";
}

Environment read_environment_json(std::istream& is) {
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("environment json parse error: ") + e.what());
    }
    try {
        Environment env;
        auto lo = j.at("bbox").at("lo");
        auto hi = j.at("bbox").at("hi");
        env.bbox.lo = Eigen::Vector2d(lo.at(0).get<double>(), lo.at(1).get<double>());
        env.bbox.hi = Eigen::Vector2d(hi.at(0).get<double>(), hi.at(1).get<double>());
        env.num_classes = j.at("num_classes").get<int>();
        if (env.num_classes < 1) throw ConfigError("environment: num_classes must be >= 1");
        env.obstacles.resize(static_cast<std::size_t>(env.num_classes));
        for (const auto& ob : j.at("obstacles")) {
            int cls = ob.at("class").get<int>();
            if (cls < 1 || cls > env.num_classes)
                throw ConfigError("environment: obstacle class out of range");
            Polygon poly;
            for (const auto& v : ob.at("vertices"))
                poly.v.emplace_back(v.at(0).get<double>(), v.at(1).get<double>());
            if (poly.v.size() < 3) throw ConfigError("environment: polygon needs >= 3 vertices");
            env.obstacles[static_cast<std::size_t>(cls - 1)].push_back(std::move(poly));
        }
        return env;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("environment json missing field: ") + e.what());
    }
}

Environment read_environment_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open environment file: " + path);
    return read_environment_json(is);
}

void write_stats_json(std::ostream& os, const GpStats& stats, const KernelSpec& kernel,
                      double sigma2) {
    os << "{\"voxel_size\":" << fmt_g17(stats.voxel_size)
       << ",\"prior_mean\":" << fmt_g17(stats.prior_mean) << ",\"sigma2\":" << fmt_g17(sigma2)
       << ",\"kernel\":";
    emit_kernel(os, kernel);
    os << ",\"points\":[";
    for (std::size_t i = 0; i < stats.keys.size(); ++i) {
        if (i) os << ',';
        os << "{\"key\":";
        emit_key(os, stats.keys[i]);
        os << ",\"count\":" << fmt_g17(stats.counts[static_cast<Eigen::Index>(i)])
           << ",\"mean\":" << fmt_g17(stats.means[static_cast<Eigen::Index>(i)]) << '}';
    }
    os << "]}\n";
}

void write_tree_json(std::ostream& os, const SpatialTree& tree) {
    os << "{\"root_side\":" << fmt_g17(tree.root_side())
       << ",\"voxel_size\":" << fmt_g17(tree.params().voxel_size)
       << ",\"delta\":" << fmt_g17(tree.params().delta)
       << ",\"max_leaf_points\":" << tree.params().max_leaf_points << ",\"kernel\":";
    emit_kernel(os, tree.kernel());
    os << ",\"sigma2\":" << fmt_g17(tree.sigma2()) << ",\"root\":";
    if (tree.empty()) {
        os << "null";
    } else {
        emit_tree_node(os, tree.root());
    }
    os << "}\n";
}

void write_map_json(std::ostream& os, const SemanticMap& map) {
    os << "{\"root_center\":[";
    for (Eigen::Index a = 0; a < map.root_ctr().size(); ++a) {
        if (a) os << ',';
        os << fmt_g17(map.root_ctr()[a]);
    }
    os << "],\"root_side\":" << fmt_g17(map.root_side())
       << ",\"voxel_size\":" << fmt_g17(map.params().tree.voxel_size)
       << ",\"truncation\":" << fmt_g17(map.params().truncation)
       << ",\"prior_mean\":" << fmt_g17(map.params().tree.prior_mean)
       << ",\"num_classes\":" << map.params().num_classes << ",\"kernel\":";
    emit_kernel(os, map.params().kernel);
    os << ",\"sigma2\":" << fmt_g17(map.params().sigma2) << ",\"classes\":{";
    std::vector<int> classes = map.observed_classes();
    for (std::size_t c = 0; c < classes.size(); ++c) {
        if (c) os << ',';
        os << '"' << classes[c] << "\":";
        if (map.tree(classes[c]).empty()) {
            os << "null";
        } else {
            emit_tree_node(os, map.tree(classes[c]).root());
        }
    }
    os << "}}\n";
}

void write_contours_csv(std::ostream& os, const SurfaceContours& contours) {
    os << "class,polyline,vertex,x,y\n";
    for (const auto& [cls, lines] : contours) {
        for (std::size_t l = 0; l < lines.size(); ++l) {
            for (std::size_t v = 0; v < lines[l].size(); ++v) {
                os << cls << ',' << l << ',' << v << ',' << fmt_g17(lines[l][v].x()) << ','
                   << fmt_g17(lines[l][v].y()) << '\n';
            }
        }
    }
}

void write_contours_svg(std::ostream& os, const SurfaceContours& contours,
                        const Environment* env) {
    double xmin = 0.0, ymin = 0.0, xmax = 1.0, ymax = 1.0;
    bool have_box = false;
    if (env != nullptr) {
        xmin = env->bbox.lo.x();
        ymin = env->bbox.lo.y();
        xmax = env->bbox.hi.x();
        ymax = env->bbox.hi.y();
        have_box = true;
    }
    for (const auto& [cls, lines] : contours) {
        (void)cls;
        for (const auto& line : lines) {
            for (const Eigen::Vector2d& p : line) {
                if (!have_box) {
                    xmin = xmax = p.x();
                    ymin = ymax = p.y();
                    have_box = true;
                } else {
                    xmin = std::min(xmin, p.x());
                    xmax = std::max(xmax, p.x());
                    ymin = std::min(ymin, p.y());
                    ymax = std::max(ymax, p.y());
                }
            }
        }
    }
    const double pad = 0.05 * std::max(xmax - xmin, ymax - ymin) + 1e-9;
    xmin -= pad;
    ymin -= pad;
    xmax += pad;
    ymax += pad;
    static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f"};
    // y axis flipped so north is up.
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"" << fmt_g17(xmin) << ' '
       << fmt_g17(-ymax) << ' ' << fmt_g17(xmax - xmin) << ' ' << fmt_g17(ymax - ymin)
       << "\" width=\"800\" height=\"800\">\n";
    if (env != nullptr) {
        for (int cls = 1; cls <= env->num_classes; ++cls) {
            const char* color = kColors[(cls - 1) % 8];
            for (const Polygon& poly : env->obstacles[static_cast<std::size_t>(cls - 1)]) {
                os << "<polygon fill=\"" << color << "\" fill-opacity=\"0.25\" stroke=\"none\" "
                      "points=\"";
                for (std::size_t i = 0; i < poly.v.size(); ++i) {
                    if (i) os << ' ';
                    os << fmt_g17(poly.v[i].x()) << ',' << fmt_g17(-poly.v[i].y());
                }
                os << "\"/>\n";
            }
        }
    }
    for (const auto& [cls, lines] : contours) {
        const char* color = kColors[(cls - 1) % 8];
        for (const auto& line : lines) {
            if (line.size() < 2) continue;
            os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\""
               << fmt_g17(0.003 * (xmax - xmin)) << "\" points=\"";
            for (std::size_t i = 0; i < line.size(); ++i) {
                if (i) os << ' ';
                os << fmt_g17(line[i].x()) << ',' << fmt_g17(-line[i].y());
            }
            os << "\"/>\n";
        }
    }
    os << "</svg>\n";
}

void write_trajectory_csv(std::ostream& os, const std::vector<Pose2>& traj) {
    os << "t,x,y,theta\n";
    for (std::size_t t = 0; t < traj.size(); ++t)
        os << t << ',' << fmt_g17(traj[t].p.x()) << ',' << fmt_g17(traj[t].p.y()) << ','
           << fmt_g17(traj[t].theta) << '\n';
}

void write_mae_csv(std::ostream& os, const std::vector<MaeRow>& rows) {
    os << "round,robot,mean_mae,var_mae\n";
    for (const MaeRow& r : rows)
        os << r.round << ',' << r.robot << ',' << fmt_g17(r.mean_mae) << ','
           << fmt_g17(r.var_mae) << '\n';
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
    os << "label,seed,misclassification_rate,precision,recall,false_discovery_rate,"
          "false_negative_rate,sdf_error,normalized_sdf_error,sdf_spearman,n_class_points,"
          "n_sdf_points\n";
    for (const SweepRow& r : rows) {
        const MetricReport& m = r.report;
        os << r.label << ',' << r.seed << ',' << fmt_g17(m.misclassification_rate) << ','
           << fmt_g17(m.precision) << ',' << fmt_g17(m.recall) << ','
           << fmt_g17(m.false_discovery_rate) << ',' << fmt_g17(m.false_negative_rate) << ','
           << fmt_g17(m.sdf_error) << ',' << fmt_g17(m.normalized_sdf_error) << ','
           << fmt_g17(m.sdf_spearman) << ',' << m.n_class_points << ',' << m.n_sdf_points
           << '\n';
    }
}

void write_metrics_json(std::ostream& os, const MetricReport& m) {
    os << "{\"misclassification_rate\":" << fmt_g17(m.misclassification_rate)
       << ",\"precision\":" << fmt_g17(m.precision) << ",\"recall\":" << fmt_g17(m.recall)
       << ",\"false_discovery_rate\":" << fmt_g17(m.false_discovery_rate)
       << ",\"false_negative_rate\":" << fmt_g17(m.false_negative_rate)
       << ",\"sdf_error\":" << fmt_g17(m.sdf_error)
       << ",\"normalized_sdf_error\":" << fmt_g17(m.normalized_sdf_error)
       << ",\"sdf_spearman\":" << fmt_g17(m.sdf_spearman)
       << ",\"n_class_points\":" << m.n_class_points
       << ",\"n_sdf_points\":" << m.n_sdf_points << "}\n";
}

void write_message_log_jsonl(std::ostream& os, const std::vector<MessageLogEntry>& log) {
    for (const MessageLogEntry& e : log) {
        os << "{\"round\":" << e.round << ",\"sender\":" << e.sender
           << ",\"receiver\":" << e.receiver << ",\"origin\":" << e.origin
           << ",\"release_time\":" << e.release_time << ",\"visited\":[";
        for (std::size_t i = 0; i < e.visited.size(); ++i) {
            if (i) os << ',';
            os << e.visited[i];
        }
        os << "]}\n";
    }
}

}  // namespace semtsdf
