#pragma once

// JSON mappings for configuration structs persisted in checkpoints and
// run configs.

#include "json.hpp"
#include "trafficdiff/diffusion.hpp"
#include "trafficdiff/enhance.hpp"
#include "trafficdiff/trace_ingest.hpp"

namespace trafficdiff {

using Json = nlohmann::json;

Json to_json(const nn::UNetConfig& cfg);
nn::UNetConfig unet_config_from_json(const Json& j, const nn::UNetConfig& defaults = {});
Json to_json(const DiffusionConfig& cfg);
DiffusionConfig diffusion_config_from_json(const Json& j, const DiffusionConfig& defaults = {});
Json to_json(const EnhanceConfig& cfg);
EnhanceConfig enhance_config_from_json(const Json& j, const EnhanceConfig& defaults = {});
Json to_json(const DatasetSpec& spec);
DatasetSpec dataset_spec_from_json(const Json& j);

}  // namespace trafficdiff
