#include "lmcp/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "lmcp/density.hpp"

namespace lmcp {

namespace {

void check_lengths(std::size_t a, std::size_t b)
{
    if (a != b) {
        throw Error(ErrorCode::LengthMismatch,
                    "length mismatch: " + std::to_string(a) + " vs " + std::to_string(b));
    }
}

double quantile_sorted(const std::vector<double>& v, double p)
{
    const double pos = p * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    const double t = pos - static_cast<double>(lo);
    if (t == 0.0) {
        return v[lo];
    }
    return v[lo] + t * (v[hi] - v[lo]);
}

std::vector<double> average_ranks(std::span<const double> x)
{
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(x.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) {
            ++j;
        }
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) {
            ranks[order[k]] = r;
        }
        i = j + 1;
    }
    return ranks;
}

} // namespace

double coverage(std::span<const PredictionRegion> regions, std::span<const Vec> truths)
{
    check_lengths(regions.size(), truths.size());
    if (regions.empty()) {
        throw Error(ErrorCode::LengthMismatch, "coverage needs at least one region");
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < regions.size(); ++i) {
        hits += contains(regions[i], truths[i]) ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(regions.size());
}

EfficiencyStats efficiency_stats(std::span<const double> measures)
{
    EfficiencyStats s;
    if (measures.empty()) {
        return s;
    }
    std::vector<double> v(measures.begin(), measures.end());
    std::sort(v.begin(), v.end());
    const double n = static_cast<double>(v.size());
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : v) {
        ss += (x - s.mean) * (x - s.mean);
    }
    s.std = std::isfinite(s.mean) ? std::sqrt(ss / n) : std::numeric_limits<double>::quiet_NaN();
    s.median = quantile_sorted(v, 0.5);
    s.q1 = quantile_sorted(v, 0.25);
    s.q3 = quantile_sorted(v, 0.75);
    return s;
}

EfficiencyStats efficiency_stats(std::span<const PredictionRegion> regions)
{
    std::vector<double> m;
    m.reserve(regions.size());
    for (const auto& r : regions) {
        m.push_back(measure(r));
    }
    return efficiency_stats(std::span<const double>(m));
}

SpearmanResult spearman(std::span<const double> a, std::span<const double> b)
{
    check_lengths(a.size(), b.size());
    if (a.size() < 2) {
        return {0.0, false};
    }
    const auto ra = average_ranks(a);
    const auto rb = average_ranks(b);
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) {
        return {0.0, false};
    }
    return {std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0), true};
}

PointMetrics point_metrics(std::span<const Vec> preds, std::span<const Vec> truths,
                           const std::vector<double>& thresholds)
{
    check_lengths(preds.size(), truths.size());
    PointMetrics out;
    if (preds.empty()) {
        return out;
    }
    std::vector<double> dist(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) {
        dist[i] = (preds[i] - truths[i]).norm();
    }
    const double n = static_cast<double>(dist.size());
    out.pe_mean = std::accumulate(dist.begin(), dist.end(), 0.0) / n;
    for (double t : thresholds) {
        const auto below = std::count_if(dist.begin(), dist.end(), [t](double x) { return x < t; });
        out.sdr[t] = static_cast<double>(below) / n;
    }
    return out;
}

ReportEntry evaluate_entry(std::span<const EvaluationItem> items)
{
    ReportEntry e;
    e.n = items.size();
    if (items.empty()) {
        return e;
    }
    std::vector<double> measures, errors;
    std::vector<Vec> points, truths;
    std::size_t hits = 0;
    for (const auto& it : items) {
        hits += contains(it.region, it.truth) ? 1 : 0;
        measures.push_back(measure(it.region));
        errors.push_back((it.point - it.truth).norm());
        points.push_back(it.point);
        truths.push_back(it.truth);
    }
    e.coverage = static_cast<double>(hits) / static_cast<double>(items.size());
    e.efficiency = efficiency_stats(std::span<const double>(measures));
    e.adaptivity = spearman(measures, errors);
    e.point = point_metrics(points, truths);
    return e;
}

EvaluationReport evaluate(std::span<const EvaluationItem> items, const std::string& method, double alpha)
{
    EvaluationReport report;
    report.method = method;
    report.alpha = alpha;
    report.pooled = evaluate_entry(items);
    if (!report.pooled.adaptivity.defined) {
        report.flags.push_back("pooled adaptivity undefined (constant input)");
    }
    std::map<int, std::vector<EvaluationItem>> groups;
    for (const auto& it : items) {
        groups[it.landmark].push_back(it);
    }
    for (const auto& [lm, group] : groups) {
        auto entry = evaluate_entry(group);
        if (!entry.adaptivity.defined) {
            report.flags.push_back("landmark " + std::to_string(lm) + " adaptivity undefined (constant input)");
        }
        report.per_landmark.emplace(lm, std::move(entry));
    }
    return report;
}

Vec point_prediction(const Example& ex)
{
    if (ex.point) {
        return *ex.point;
    }
    if (!ex.samples.empty()) {
        Vec mean = Vec::Zero(ex.dims());
        for (const auto& s : ex.samples) {
            mean += s;
        }
        return mean / static_cast<double>(ex.samples.size());
    }
    if (ex.grid) {
        const Vec m = decode(*ex.grid, DecodeMode::WeightedMean);
        return ex.to_native ? ex.to_native->apply(m) : m;
    }
    throw Error(ErrorCode::MissingField, "example '" + ex.id + "' has no point prediction source");
}

} // namespace lmcp
