#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ssdg/metrics.hpp"

namespace ssdg {

/// Throws SchemaError when the logs disagree on the number of classes or
/// there are none.
void check_compatible(std::span<const MetricsLog> logs);

/// Logs ordered by arm (ours, no-dapl, no-dc, supone, naive-pl, then the rest
/// by name), seed and path.
std::vector<MetricsLog> ordered(std::span<const MetricsLog> logs);

/// Per-epoch pseudo-label accuracy, coverage (|S_p| / (|S_p| + |S_u|)) and
/// target accuracy of every log.
std::string curves_table(std::span<const MetricsLog> logs);
/// Final-epoch target accuracy per arm, mean and spread over seeds.
std::string comparison_table(std::span<const MetricsLog> logs);
/// One vs Ensemble over the logs that use domain-aware pseudo-labeling.
std::string policy_table(std::span<const MetricsLog> logs);

std::string curves_svg(std::span<const MetricsLog> logs);
std::string comparison_svg(std::span<const MetricsLog> logs);

/// Writes curves.tsv, curves.svg, comparison.tsv, comparison.svg and
/// policy.tsv; returns their paths.
std::vector<std::filesystem::path> write_report(std::span<const MetricsLog> logs, const std::filesystem::path& out_dir);

}  // namespace ssdg
