#include "lmcp/serialization.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "json_util.hpp"

namespace lmcp {

using detail::json;
using detail::number_from_json;
using detail::number_to_json;
using detail::require;

namespace {

json parse(const std::string& text, const char* what)
{
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, std::string(what) + " is not valid JSON: " + e.what());
    }
}

template <typename T>
T get(const json& j, const char* key)
{
    try {
        return require(j, key).get<T>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, std::string("field '") + key + "' has the wrong type");
    }
}

// Run lengths of alternating excluded/included cells, starting with excluded.
json encode_runs(const std::vector<std::uint8_t>& flags)
{
    json runs = json::array();
    std::uint8_t current = 0;
    std::size_t length = 0;
    for (std::uint8_t f : flags) {
        const std::uint8_t b = f ? 1 : 0;
        if (b != current) {
            runs.push_back(length);
            current = b;
            length = 0;
        }
        ++length;
    }
    runs.push_back(length);
    return runs;
}

std::vector<std::uint8_t> decode_runs(const json& runs, std::size_t expected)
{
    std::vector<std::uint8_t> out;
    out.reserve(expected);
    std::uint8_t current = 0;
    for (const auto& r : runs) {
        out.insert(out.end(), r.get<std::size_t>(), current);
        current ^= 1;
    }
    if (out.size() != expected) {
        throw Error(ErrorCode::ShapeMismatch, "grid mask runs cover " + std::to_string(out.size())
                                                  + " cells, geometry has " + std::to_string(expected));
    }
    return out;
}

json region_json(const PredictionRegion& region)
{
    return std::visit(
        [](const auto& r) -> json {
            using T = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<T, HyperRect>) {
                return {{"type", "hyperrect"},
                        {"center", detail::vec_to_json(r.center)},
                        {"half_widths", detail::vec_to_json(r.half_widths)},
                        {"empty", r.empty}};
            } else if constexpr (std::is_same_v<T, Ellipsoid>) {
                return {{"type", "ellipsoid"},
                        {"center", detail::vec_to_json(r.center)},
                        {"shape", detail::mat_to_json(r.shape)},
                        {"radius", number_to_json(r.radius)},
                        {"empty", r.empty}};
            } else {
                return {{"type", "grid_mask"},
                        {"geometry", detail::geometry_to_json(r.geometry)},
                        {"runs", encode_runs(r.included)}};
            }
        },
        region);
}

PredictionRegion region_parse(const json& j)
{
    const auto type = get<std::string>(j, "type");
    if (type == "hyperrect") {
        HyperRect r{detail::vec_from_json(require(j, "center")), detail::vec_from_json(require(j, "half_widths")),
                    j.value("empty", false)};
        if (r.center.size() != r.half_widths.size()) {
            throw Error(ErrorCode::DimMismatch, "hyperrect center and half widths differ in length");
        }
        return r;
    }
    if (type == "ellipsoid") {
        Ellipsoid e{detail::vec_from_json(require(j, "center")), detail::mat_from_json(require(j, "shape")),
                    number_from_json(require(j, "radius")), j.value("empty", false)};
        if (e.shape.rows() != e.center.size() || e.shape.cols() != e.center.size()) {
            throw Error(ErrorCode::DimMismatch, "ellipsoid shape does not match its center");
        }
        return e;
    }
    if (type == "grid_mask") {
        GridMask m;
        m.geometry = detail::geometry_from_json(require(j, "geometry"));
        m.included = decode_runs(require(j, "runs"), static_cast<std::size_t>(m.geometry.cell_count()));
        return m;
    }
    throw Error(ErrorCode::UnknownFormat, "unknown region type '" + type + "'");
}

json entry_json(const ReportEntry& e)
{
    json sdr = json::object();
    for (const auto& [t, v] : e.point.sdr) {
        char key[32];
        std::snprintf(key, sizeof key, "%.17g", t);
        sdr[key] = v;
    }
    return {{"n", e.n},
            {"coverage", e.coverage},
            {"efficiency",
             {{"mean", number_to_json(e.efficiency.mean)},
              {"std", number_to_json(e.efficiency.std)},
              {"median", number_to_json(e.efficiency.median)},
              {"q1", number_to_json(e.efficiency.q1)},
              {"q3", number_to_json(e.efficiency.q3)}}},
            {"adaptivity", {{"r_s", e.adaptivity.r}, {"defined", e.adaptivity.defined}}},
            {"pe_mean", number_to_json(e.point.pe_mean)},
            {"sdr", sdr}};
}

ReportEntry entry_parse(const json& j)
{
    ReportEntry e;
    e.n = get<std::size_t>(j, "n");
    e.coverage = number_from_json(require(j, "coverage"));
    const auto& eff = require(j, "efficiency");
    e.efficiency = {number_from_json(require(eff, "mean")), number_from_json(require(eff, "std")),
                    number_from_json(require(eff, "median")), number_from_json(require(eff, "q1")),
                    number_from_json(require(eff, "q3"))};
    const auto& ad = require(j, "adaptivity");
    e.adaptivity = {number_from_json(require(ad, "r_s")), get<bool>(ad, "defined")};
    e.point.pe_mean = number_from_json(require(j, "pe_mean"));
    for (const auto& [k, v] : require(j, "sdr").items()) {
        e.point.sdr[std::stod(k)] = number_from_json(v);
    }
    return e;
}

} // namespace

std::string region_to_json(const PredictionRegion& region, int indent)
{
    return region_json(region).dump(indent);
}

PredictionRegion region_from_json(const std::string& text)
{
    const json j = parse(text, "region");
    // Accept a bare region or a record wrapping one.
    return region_parse(j.contains("region") ? j.at("region") : j);
}

std::string calibrator_to_json(const Calibrator& cal)
{
    const auto& c = cal.config;
    json landmarks = json::array();
    for (const auto& [key, state] : cal.landmarks) {
        json ledgers = json::array();
        for (const auto& ledger : state.ledgers) {
            json scores = json::array();
            for (double s : ledger.sorted_desc) {
                scores.push_back(number_to_json(s));
            }
            ledgers.push_back(scores);
        }
        landmarks.push_back({{"landmark", key},
                             {"temperature", state.temperature ? json(state.temperature->tau) : json(nullptr)},
                             {"ledgers", ledgers}});
    }
    json j = {{"method", to_string(cal.method)},
              {"dims", cal.dims},
              {"config",
               {{"center", to_string(c.center)},
                {"uncertainty", to_string(c.uncertainty)},
                {"bins", c.bins},
                {"temperature", c.temperature},
                {"randomized", c.randomized},
                {"seed", c.seed},
                {"per_landmark", c.per_landmark}}},
              {"landmarks", landmarks}};
    return j.dump(1);
}

Calibrator calibrator_from_json(const std::string& text)
{
    const json j = parse(text, "calibrator");
    Calibrator cal;
    cal.method = method_from_string(get<std::string>(j, "method"));
    cal.dims = get<int>(j, "dims");
    const auto& c = require(j, "config");
    cal.config.center = center_source_from_string(c.value("center", "auto"));
    cal.config.uncertainty = uncertainty_source_from_string(c.value("uncertainty", "auto"));
    cal.config.bins = c.value("bins", std::vector<Index>{});
    cal.config.temperature = c.value("temperature", false);
    cal.config.randomized = c.value("randomized", false);
    cal.config.seed = c.value("seed", std::uint64_t{0});
    cal.config.per_landmark = c.value("per_landmark", true);
    for (const auto& lj : require(j, "landmarks")) {
        LandmarkState state;
        const auto& t = require(lj, "temperature");
        if (!t.is_null()) {
            state.temperature = Temperature{t.get<double>()};
        }
        for (const auto& lg : require(lj, "ledgers")) {
            std::vector<double> scores;
            for (const auto& s : lg) {
                scores.push_back(number_from_json(s));
            }
            state.ledgers.push_back(ScoreLedger::from_scores(std::move(scores)));
        }
        cal.landmarks.emplace(get<int>(lj, "landmark"), std::move(state));
    }
    return cal;
}

std::string region_set_to_json(const RegionSet& set)
{
    json records = json::array();
    for (const auto& r : set.records) {
        records.push_back({{"id", r.id},
                           {"landmark", r.landmark},
                           {"measure", number_to_json(r.measure)},
                           {"flags", r.flags},
                           {"region", region_json(r.region)}});
    }
    json j = {{"method", set.method}, {"alpha", set.alpha}, {"dims", set.dims}, {"records", records}};
    return j.dump(1);
}

RegionSet region_set_from_json(const std::string& text)
{
    const json j = parse(text, "region set");
    RegionSet set;
    set.method = j.value("method", "");
    set.alpha = j.value("alpha", 0.0);
    set.dims = get<int>(j, "dims");
    for (const auto& rj : require(j, "records")) {
        RegionRecord r;
        r.id = get<std::string>(rj, "id");
        r.landmark = rj.value("landmark", 0);
        r.region = region_parse(require(rj, "region"));
        r.measure = rj.contains("measure") ? number_from_json(rj.at("measure")) : measure(r.region);
        r.flags = rj.value("flags", std::vector<std::string>{});
        set.records.push_back(std::move(r));
    }
    return set;
}

std::string report_to_json(const EvaluationReport& report)
{
    json per = json::array();
    for (const auto& [lm, e] : report.per_landmark) {
        json ej = entry_json(e);
        ej["landmark"] = lm;
        per.push_back(ej);
    }
    json j = {{"method", report.method},
              {"alpha", report.alpha},
              {"pooled", entry_json(report.pooled)},
              {"per_landmark", per},
              {"flags", report.flags}};
    return j.dump(2);
}

EvaluationReport report_from_json(const std::string& text)
{
    const json j = parse(text, "report");
    EvaluationReport r;
    r.method = j.value("method", "");
    r.alpha = j.value("alpha", 0.0);
    r.pooled = entry_parse(require(j, "pooled"));
    for (const auto& ej : require(j, "per_landmark")) {
        r.per_landmark.emplace(get<int>(ej, "landmark"), entry_parse(ej));
    }
    r.flags = j.value("flags", std::vector<std::string>{});
    return r;
}

std::string report_to_table(const EvaluationReport& report)
{
    std::ostringstream out;
    char line[512];
    std::snprintf(line, sizeof line, "method %s, alpha %g\n", report.method.c_str(), report.alpha);
    out << line;

    std::vector<double> thresholds;
    for (const auto& [t, v] : report.pooled.point.sdr) {
        thresholds.push_back(t);
    }
    std::snprintf(line, sizeof line, "%-9s %6s %9s %11s %11s %11s %11s %11s %7s %8s", "landmark", "n", "cov(%)",
                  "mean", "std", "median", "q1", "q3", "r_s", "PE(mm)");
    out << line;
    for (double t : thresholds) {
        char head[32];
        std::snprintf(head, sizeof head, "SDR@%gmm", t);
        std::snprintf(line, sizeof line, " %9s", head);
        out << line;
    }
    out << '\n';

    const auto row = [&](const std::string& label, const ReportEntry& e) {
        std::snprintf(line, sizeof line, "%-9s %6zu %9.2f %11.3f %11.3f %11.3f %11.3f %11.3f %7.3f %8.3f",
                      label.c_str(), e.n, 100.0 * e.coverage, e.efficiency.mean, e.efficiency.std,
                      e.efficiency.median, e.efficiency.q1, e.efficiency.q3, e.adaptivity.r, e.point.pe_mean);
        out << line;
        for (double t : thresholds) {
            const auto it = e.point.sdr.find(t);
            std::snprintf(line, sizeof line, " %9.2f", it == e.point.sdr.end() ? 0.0 : 100.0 * it->second);
            out << line;
        }
        out << '\n';
    };
    for (const auto& [lm, e] : report.per_landmark) {
        row(std::to_string(lm), e);
    }
    row("pooled", report.pooled);
    for (const auto& f : report.flags) {
        out << "note: " << f << '\n';
    }
    return out.str();
}

std::string read_text_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot read " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace lmcp
