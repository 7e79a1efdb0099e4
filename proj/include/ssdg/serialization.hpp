#pragma once

#include <json.hpp>

#include "ssdg/losses.hpp"
#include "ssdg/trainer.hpp"

namespace ssdg {

nlohmann::json to_json(const LossReport& report);
LossReport loss_report_from_json(const nlohmann::json& j);

nlohmann::json to_json(const EpochSummary& summary);
EpochSummary epoch_summary_from_json(const nlohmann::json& j);

}  // namespace ssdg
