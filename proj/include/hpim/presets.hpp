#pragma once

#include <string>
#include <vector>

#include "hpim/arch.hpp"
#include "hpim/baseline.hpp"
#include "hpim/workload.hpp"

namespace hpim {

// Resolution order for named configs: file in $HPIM_PRESET_DIR, then the
// bundled preset table, then (if the name looks like a path) the filesystem.
ModelConfig resolve_model(const std::string& name_or_path);
HardwareConfig resolve_hardware(const std::string& name_or_path);
BaselineDevice resolve_baseline(const std::string& name, const HardwareConfig& hw);

std::vector<std::string> model_preset_names();
const std::string& hardware_default_json();

}  // namespace hpim
