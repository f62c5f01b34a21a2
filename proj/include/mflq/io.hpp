#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "mflq/costs.hpp"
#include "mflq/model.hpp"
#include "mflq/simulator.hpp"

namespace mflq {

// Writes through a temporary file in the same directory and renames it into
// place, so readers never observe a partial file.
void atomic_write(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

// Shortest decimal representation that round-trips a double.
std::string format_double(double v);

// Comma separated, '.' decimal mark, one header row, LF line endings.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

std::uint64_t fnv1a64(const void* data, std::size_t len);
std::uint64_t fnv1a64(const std::string& text);
std::string to_hex64(std::uint64_t v);

// FNV-1a of the canonical model JSON, as 16 hex digits.
std::string model_hash(const ModelParams& params);

struct SvgSeries {
  std::string label;
  std::string color;
  std::vector<double> x, y;
};

// Minimal SVG 1.1 line chart: framed plot area, tick labels, one polyline
// per series, legend in the top right. Log axes drop non-positive points.
void write_svg_chart(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<SvgSeries>& series, bool log_x = false,
                     bool log_y = false);

nlohmann::json sim_config_to_json(const SimConfig& cfg);
nlohmann::json cost_report_to_json(const CostReport& report);
nlohmann::json convergence_to_json(const ConvergenceStudy& study);

// Skeleton with tool version, command echo, embedded model and its hash.
// Callers fill "config", "outputs", "results" and "timings".
nlohmann::json manifest_template(const ModelParams& params, const std::string& command);

void write_manifest(const std::string& path, const nlohmann::json& manifest);
nlohmann::json read_manifest(const std::string& path);

// Equality of everything except the top-level "timings" section.
bool manifests_equal_ignoring_timings(const nlohmann::json& a, const nlohmann::json& b);

// Compact little-endian dump of a simulated ensemble, magic "MFLQBIN1".
void write_ensemble_binary(const std::string& path, const Ensemble& ens);
Ensemble read_ensemble_binary(const std::string& path);

// Solves both modes, simulates both modes, runs the Riccati gap study and
// writes the figure bundle: riccati_openloop, riccati_feedback, trajectories
// and convergence as CSV + SVG each, plus manifest.json. Returns the paths
// of the files written, manifest last.
std::vector<std::string> write_paper_bundle(const ModelParams& params, const std::string& out_dir,
                                            const SimConfig& sim_cfg, int solver_steps,
                                            const std::string& command_echo);

}  // namespace mflq
