#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sfc/harness.hpp"

namespace sfc {

inline constexpr const char* kInstanceRecordSchema = "sfc.instance-result/1";
inline constexpr const char* kRunMetaSchema = "sfc.run-meta/1";

// Two-decimal rendering used in every summary table.
std::string format_fixed2(double value);

// One JSON object, no trailing newline. Non-finite numbers are written as the
// strings "inf", "-inf" or "nan".
std::string instance_record(const RunKey& key, const InstanceResult& result);

// Writes instances.jsonl, summary.csv, plot_data.csv and run_meta.json into
// out_dir, creating it if needed. Throws IoError when a file cannot be written.
void emit_report(std::span<const RunResult> runs, const std::filesystem::path& out_dir,
                 double max_failure_rate = 0.01);

// Rebuilds runs from an instances.jsonl file. Results are recomputed from the
// stored probabilities and summaries re-aggregated over the seeds present.
std::vector<RunResult> read_instance_records(const std::filesystem::path& path,
                                             double max_failure_rate = 0.01);

}  // namespace sfc
