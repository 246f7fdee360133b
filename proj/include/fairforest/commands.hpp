#pragma once

// File-producing commands behind the C API and the command-line tool. Each
// takes a JSON request and returns a JSON result.
//
// Run request:
//   {"learner": {...LearnerConfig...},
//    "data": {"path": P, "label": "y", "group": "a", "features": [...],
//             "normalize": "none" | "online"}        (or)
//    "synthetic": {"n", "dim", "bias", "separation", "group_shift", "noise",
//                  "seed"},
//    "bound": B,              // > 0 rescales inputs so max ||x|| = B
//    "out": DIR,              // trajectory.csv, summary.json, checkpoint.json
//    "checkpoint_every": K,   // 0 writes only the final checkpoint
//    "progress": true}        // progress line on stderr every 1000 steps
//
// The input dimension, class count and group count of the learner follow the
// data source.

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairforest/data.hpp"
#include "fairforest/learner.hpp"

namespace fairforest {

struct RunOutcome {
  LearnerConfig config;
  std::uint64_t steps = 0;
  double accuracy = 0.0;
  std::optional<double> dp_hard;
  std::optional<double> dp_soft;
};

/// Source described by the request; also fixes config.shape.dim (and the
/// schema's classes/groups from config) before returning.
std::unique_ptr<InstanceSource> open_source(const nlohmann::json& request,
                                            LearnerConfig& config);

/// Column order: step,y,a,pred,running_accuracy,dp_hard,dp_soft,
/// grad_norm_total,grad_norm_fair. Absent DP values are empty cells.
void write_trajectory_header(std::ostream& out);
void write_trajectory_row(std::ostream& out, const TrajectoryRow& row);

/// Streams the source through a fresh learner. `sink` may be empty.
RunOutcome run_learner(const nlohmann::json& request, const RowSink& sink,
                       bool progress);

nlohmann::json cmd_run(const nlohmann::json& request);
/// Request adds "lambdas": [...]; writes DIR/sweep.csv with columns
/// lambda,final_accuracy,final_dp_hard,final_dp_soft.
nlohmann::json cmd_sweep(const nlohmann::json& request);
/// Request: {"trials", "seed", "corrupt"}. Returns the report; the caller
/// decides the exit status from "pass".
nlohmann::json cmd_gradcheck(const nlohmann::json& request);
/// Request: synthetic fields plus "out": FILE and optional "bound".
nlohmann::json cmd_synth(const nlohmann::json& request);
/// Request as cmd_run plus "steps" (default 500). Records a trace, audits the
/// estimation error at every step and checks the DP bound on the final
/// forest with an equal-group prefix of the trace. Writes DIR/audit.json.
nlohmann::json cmd_audit(const nlohmann::json& request);

/// Peak resident set size in bytes, 0 when unavailable.
std::size_t peak_memory_bytes();

}  // namespace fairforest
