#pragma once

#include <json.hpp>

#include "sweepkit/augment.hpp"
#include "sweepkit/sweep.hpp"

namespace sweepkit::detail {

/// {"schema": "sweepkit.policy/v1", "steps": [...]}
nlohmann::json policy_json(const Policy& p);
/// Accepts the document form or a bare step array. Throws ConfigError.
Policy policy_from_value(const nlohmann::json& doc);

nlohmann::json strategy_row_json(const StrategyRow& r);
StrategyRow strategy_row_from(const nlohmann::json& j);

nlohmann::json sweep_json(const SweepResult& r);
/// Throws FormatError.
SweepResult sweep_from_value(const nlohmann::json& doc);

} // namespace sweepkit::detail
