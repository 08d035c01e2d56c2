#pragma once

#include <string>
#include <vector>

#include "kdistill/config.hpp"

namespace kdistill {

// Experiment stages. Each writes versioned outputs plus a manifest into the
// run directory and validates the manifests of the stages it consumes.
void cmd_gen_world(const RunConfig& cfg);
void cmd_pretrain(const RunConfig& cfg);
void cmd_gen_transfer(const RunConfig& cfg);
void cmd_edit(const RunConfig& cfg);
void cmd_eval(const RunConfig& cfg);
void cmd_sweep(const RunConfig& cfg, const std::string& axis, const std::vector<double>& values);
void cmd_ablate(const RunConfig& cfg);

}  // namespace kdistill
