#pragma once

#include <string>

#include <json.hpp>

#include "otdrnet/baseline.hpp"
#include "otdrnet/dataset.hpp"
#include "otdrnet/gru_ae.hpp"
#include "otdrnet/sim.hpp"

namespace otdrnet {

// JSON documents mirror the struct field names; unknown keys are rejected.
SimConfig sim_config_from_json(const nlohmann::json& j);
nlohmann::json sim_config_to_json(const SimConfig& cfg);

TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json train_config_to_json(const TrainConfig& cfg);

ThresholdConfig thresholds_from_json(const nlohmann::json& j);
nlohmann::json thresholds_to_json(const ThresholdConfig& cfg);

nlohmann::json load_json_file(const std::string& path);
void save_json_file(const nlohmann::json& j, const std::string& path);

} // namespace otdrnet
