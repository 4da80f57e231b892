#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "lmcp/regions.hpp"

namespace lmcp {

/// Fraction of regions containing their truth.
double coverage(std::span<const PredictionRegion> regions, std::span<const Vec> truths);

struct EfficiencyStats {
    double mean = 0.0;
    double std = 0.0; // population
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;

    bool operator==(const EfficiencyStats&) const = default;
};

/// Summary of region measures; quartiles interpolate linearly at p * (n - 1).
EfficiencyStats efficiency_stats(std::span<const double> measures);
EfficiencyStats efficiency_stats(std::span<const PredictionRegion> regions);

struct SpearmanResult {
    double r = 0.0;
    /// False when either input is constant; r is then reported as 0.
    bool defined = true;

    bool operator==(const SpearmanResult&) const = default;
};

/// Pearson correlation of average ranks.
SpearmanResult spearman(std::span<const double> a, std::span<const double> b);

struct PointMetrics {
    double pe_mean = 0.0;
    /// threshold (mm) -> fraction of errors strictly below it
    std::map<double, double> sdr;

    bool operator==(const PointMetrics&) const = default;
};

inline const std::vector<double> default_sdr_thresholds{2.0, 2.5, 3.0, 4.0};

PointMetrics point_metrics(std::span<const Vec> preds, std::span<const Vec> truths,
                           const std::vector<double>& thresholds = default_sdr_thresholds);

struct ReportEntry {
    std::size_t n = 0;
    double coverage = 0.0;
    EfficiencyStats efficiency;
    SpearmanResult adaptivity;
    PointMetrics point;

    bool operator==(const ReportEntry&) const = default;
};

struct EvaluationReport {
    std::string method;
    double alpha = 0.0;
    ReportEntry pooled;
    std::map<int, ReportEntry> per_landmark;
    /// Non-fatal notes collected while evaluating (e.g. undefined adaptivity).
    std::vector<std::string> flags;

    bool operator==(const EvaluationReport&) const = default;
};

/// One scored test example: region, truth, point prediction and landmark.
struct EvaluationItem {
    PredictionRegion region;
    Vec truth;
    Vec point;
    int landmark = 0;
};

ReportEntry evaluate_entry(std::span<const EvaluationItem> items);
EvaluationReport evaluate(std::span<const EvaluationItem> items, const std::string& method = "", double alpha = 0.0);

/// Point prediction used for PE/SDR: the stored point, else the sample mean,
/// else the weighted-mean decode of the grid (mapped to native space).
Vec point_prediction(const Example& example);

} // namespace lmcp
