#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nmq/agent.hpp"
#include "nmq/env.hpp"
#include "nmq/schedule.hpp"

namespace nmq {

using Json = nlohmann::json;

// ----------------------------------------------------------------------
// Deterministic text output.

// Shortest round-trip decimal rendering (no locale, no trailing noise).
std::string format_double(double v);
std::string format_long(long v);

// Write-to-temporary-then-rename so partially written files never appear
// under the final name.  Throws IoError on any filesystem failure.
void write_file_atomic(const std::filesystem::path& path,
                       const std::string& content);

void write_csv(const std::filesystem::path& path,
               const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);

// ----------------------------------------------------------------------
// Integrity manifest.

std::string sha256_hex(const std::string& bytes);

// Writes <dir>/manifest.json listing the SHA-256 of every given file
// (paths relative to dir).  Call last: the manifest covers final bytes.
void write_manifest(const std::filesystem::path& dir,
                    const std::vector<std::string>& relative_files);

// ----------------------------------------------------------------------
// JSON helpers and loaders.  Every loader rejects unknown keys so config
// typos fail loudly instead of being silently ignored.

Json load_json_file(const std::filesystem::path& path);

void check_keys(const Json& obj, const std::vector<std::string>& allowed,
                const std::string& context);

Eigen::MatrixXd matrix_from_json(const Json& j, const std::string& context);
Json json_from_matrix(const Eigen::MatrixXd& m);
Eigen::VectorXd vector_from_json(const Json& j, const std::string& context);
Json json_from_vector(const Eigen::VectorXd& v);

// Environment description:
//   { "n_hidden": H, "n_obs": O, "n_act": A,
//     "transition": [A matrices HxH], "emission": matrix HxO,
//     "reward": [A matrices SxO] }
// The agent-state count S of the reward rows comes from the recursion, so
// it is passed in rather than read.
HmmEnvironment env_from_json(const Json& j, int n_agent,
                             const std::string& context);

// Recursion description: either { "window": K } or an explicit table
//   { "n_gamma": G, "update": [...], "readout": [...] }.
AgentStateRecursion recursion_from_json(const Json& j, int n_hidden,
                                        int n_obs, int n_act,
                                        const std::string& context);

// Policy description: { "uniform": true } or { "phi": matrix SxA }.
// Rows are validated and renormalized once, matching the environment's
// treatment of probability rows.
Policy policy_from_json(const Json& j, const FiniteSpaces& spaces,
                        const std::string& context);

// Schedule description:
//   { "kind": "power", "a0": .., "n0": .., "d2": ..,
//     "d1": .., "d3": .., "certified_from": .. }
//   { "kind": "harmonic", "a0": .., "d1": .., "d3": ..,
//     "certified_from": .. }
StepSchedule schedule_from_json(const Json& j, const std::string& context);
Json json_from_schedule(const StepSchedule& s);

}  // namespace nmq
