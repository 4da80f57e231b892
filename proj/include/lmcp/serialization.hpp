#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lmcp/calibrators.hpp"
#include "lmcp/evaluation.hpp"

namespace lmcp {

// JSON text codecs. Doubles are printed with round-trip precision, so every
// finite value survives write + read bit-exactly; non-finite values are
// written as "inf", "-inf" or "nan".

std::string region_to_json(const PredictionRegion& region, int indent = -1);
PredictionRegion region_from_json(const std::string& text);

std::string calibrator_to_json(const Calibrator& calibrator);
Calibrator calibrator_from_json(const std::string& text);

/// One predicted region for a test example.
struct RegionRecord {
    std::string id;
    int landmark = 0;
    PredictionRegion region;
    double measure = 0.0;
    std::vector<std::string> flags;
};

/// Output of a predict run.
struct RegionSet {
    std::string method;
    double alpha = 0.0;
    int dims = 2;
    std::vector<RegionRecord> records;
};

std::string region_set_to_json(const RegionSet& set);
RegionSet region_set_from_json(const std::string& text);

std::string report_to_json(const EvaluationReport& report);
EvaluationReport report_from_json(const std::string& text);
/// Aligned text table: one row per landmark plus a pooled row.
std::string report_to_table(const EvaluationReport& report);

std::string read_text_file(const std::filesystem::path& path);

} // namespace lmcp
