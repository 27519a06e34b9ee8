#pragma once

#include "semtsdf/metrics.hpp"

#include <iosfwd>
#include <string>

namespace semtsdf {

// Shortest round-trip decimal form; identical bytes for identical doubles.
std::string fmt_g17(double v);

void write_environment_json(std::ostream& os, const Environment& env);
Environment read_environment_json(std::istream& is);
Environment read_environment_file(const std::string& path);

// Per-point statistics with enough header to reproduce the posterior.
void write_stats_json(std::ostream& os, const GpStats& stats, const KernelSpec& kernel,
                      double sigma2);

void write_tree_json(std::ostream& os, const SpatialTree& tree);
void write_map_json(std::ostream& os, const SemanticMap& map);

void write_contours_csv(std::ostream& os, const SurfaceContours& contours);
void write_contours_svg(std::ostream& os, const SurfaceContours& contours,
                        const Environment* env);
void write_trajectory_csv(std::ostream& os, const std::vector<Pose2>& traj);
void write_mae_csv(std::ostream& os, const std::vector<MaeRow>& rows);
void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows);
void write_metrics_json(std::ostream& os, const MetricReport& rep);
void write_message_log_jsonl(std::ostream& os, const std::vector<MessageLogEntry>& log);

}  // namespace semtsdf
