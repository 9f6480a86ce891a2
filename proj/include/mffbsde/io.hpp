#pragma once

#include <string>
#include <string_view>

#include "json.hpp"
#include "mffbsde/backward_lsmc.hpp"
#include "mffbsde/forward_sde.hpp"
#include "mffbsde/grid.hpp"
#include "mffbsde/measure.hpp"
#include "mffbsde/mfg.hpp"

namespace mffbsde::io {

/// Canonical serialization: keys sorted, every float printed with %.17g so
/// equal documents hash equally on every platform. The output of this
/// function is the hashing and reproducibility boundary; nothing else may
/// format artifact JSON.
std::string canonical_json(const nlohmann::json& j);

/// SHA-256 of a byte string, lowercase hex.
std::string sha256_hex(std::string_view bytes);

/// Flow digest as CSV, one row per (time, population, coordinate), in
/// time-major population-minor coordinate-minor order.
/// Columns: time,population,coordinate,mean,std,q05,q25,q50,q75,q95.
std::string measure_flow_csv(const FlowSummary& summary);

/// Equilibrium feedback table as CSV, one row per (time, state node).
/// Columns: time,x,control_0..; tables without a scalar node axis leave x
/// empty and carry one row per time (the control at the mean state).
std::string control_table_csv(const ControlTable& table);

/// Change-of-measure health per grid point.
/// Columns: time,weight_mean,weight_se,ess.
std::string weight_diagnostic_csv(const TimeGrid& grid, const Eigen::MatrixXd& weights);

/// Backward surrogate digest per grid point.
/// Columns: time,y_mean,y_std,z_mean (z columns empty at the horizon).
std::string backward_summary_csv(const BackwardSolution& backward);

/// Raw path dump for desk-scale debugging, one row per (particle, time,
/// coordinate). Columns: particle,time,coordinate,value.
std::string paths_csv(const PathEnsemble& paths);

/// Writes content to path, creating parent directories. Throws
/// std::runtime_error naming the path on failure.
void write_file(const std::string& path, std::string_view content);

}  // namespace mffbsde::io
