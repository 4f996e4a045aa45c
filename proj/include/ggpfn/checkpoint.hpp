#pragma once

#include <string>

#include "ggpfn/config.hpp"
#include "ggpfn/params.hpp"

namespace ggpfn {

// Binary snapshot of a model: config text, optimizer counters, and every
// parameter with its Adam moment estimates. Float payloads are 32-bit
// little-endian.
void save_checkpoint(const std::string& path, const GgpfnConfig& cfg,
                     const ParamStore& store);

// Restores config + store from `path`. The parameter set is cross-checked
// against what the decoded config says the model should contain.
GgpfnConfig load_checkpoint(const std::string& path, ParamStore& store);

}  // namespace ggpfn
