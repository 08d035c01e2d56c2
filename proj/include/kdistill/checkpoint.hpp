#pragma once

#include <string>

#include "kdistill/model.hpp"

namespace kdistill {

// Versioned binary checkpoint: magic, format version, config block, role,
// parameter blob, trailing checksum. Round-trips are bit-exact.
void save_checkpoint(const Model& m, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace kdistill
