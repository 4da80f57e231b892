// Command-line front end: simulate -> calibrate -> predict -> evaluate -> export-region.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "lmcp/calibrators.hpp"
#include "lmcp/evaluation.hpp"
#include "lmcp/serialization.hpp"
#include "lmcp/svg.hpp"
#include "lmcp/synthetic.hpp"

namespace fs = std::filesystem;
using namespace lmcp;

namespace {

enum Exit { Ok = 0, Unexpected = 1, ConfigError = 2, DataError = 3, AlignmentError = 4, FormatError = 5 };

enum class Level { Error, Warn, Info, Debug };

Level log_level()
{
    const char* env = std::getenv("LMCP_LOG_LEVEL");
    const std::string v = env ? env : "";
    if (v == "error") {
        return Level::Error;
    }
    if (v == "info") {
        return Level::Info;
    }
    if (v == "debug") {
        return Level::Debug;
    }
    return Level::Warn;
}

void log(Level level, const std::string& msg)
{
    static const Level threshold = log_level();
    static const char* names[] = {"error", "warn", "info", "debug"};
    if (level <= threshold) {
        std::cerr << "lmcp: " << names[static_cast<int>(level)] << ": " << msg << '\n';
    }
}

int exit_code(ErrorCode code)
{
    switch (code) {
    case ErrorCode::InvalidConfig:
    case ErrorCode::InvalidAlpha:
    case ErrorCode::UnsupportedNoise:
        return ConfigError;
    case ErrorCode::IdMismatch:
        return AlignmentError;
    case ErrorCode::UnknownFormat:
        return FormatError;
    default:
        return DataError;
    }
}

struct CalibrateArgs {
    std::string method;
    std::string data;
    std::string out;
    std::string config;
    std::optional<std::string> center;
    std::optional<std::string> uncertainty;
    std::vector<Index> bins;
    bool temperature = false;
    bool randomized = false;
    bool pooled = false;
    std::optional<std::uint64_t> seed;
};

CalibratorConfig calibrator_config(const CalibrateArgs& a)
{
    CalibratorConfig c;
    if (!a.config.empty()) {
        const std::string text = fs::exists(a.config) ? read_text_file(a.config) : a.config;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
            c.center = center_source_from_string(j.value("center", "auto"));
            c.uncertainty = uncertainty_source_from_string(j.value("uncertainty", "auto"));
            c.bins = j.value("bins", std::vector<Index>{});
            c.temperature = j.value("temperature", false);
            c.randomized = j.value("randomized", false);
            c.seed = j.value("seed", std::uint64_t{0});
            c.per_landmark = j.value("per_landmark", true);
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::InvalidConfig, std::string("method config: ") + e.what());
        }
    }
    if (a.center) {
        c.center = center_source_from_string(*a.center);
    }
    if (a.uncertainty) {
        c.uncertainty = uncertainty_source_from_string(*a.uncertainty);
    }
    if (!a.bins.empty()) {
        c.bins = a.bins;
    }
    c.temperature = c.temperature || a.temperature;
    c.randomized = c.randomized || a.randomized;
    c.per_landmark = c.per_landmark && !a.pooled;
    if (a.seed) {
        c.seed = *a.seed;
    }
    return c;
}

int cmd_simulate(const std::string& config_path, const std::string& out)
{
    const auto config = scenario_from_json(read_text_file(config_path));
    const auto paths = simulate(config, out);
    for (const auto& p : paths) {
        log(Level::Info, "wrote " + p.string());
    }
    return Ok;
}

int cmd_calibrate(const CalibrateArgs& a)
{
    const Method method = method_from_string(a.method);
    const CalibratorConfig config = calibrator_config(a);
    const Dataset ds = load_dataset(a.data);
    if (ds.split != Split::Calibration) {
        log(Level::Warn, "calibrating on a manifest whose split is '" + to_string(ds.split) + "'");
    }
    const Calibrator cal = fit(method, ds.examples, config);
    write_file_atomic(a.out, calibrator_to_json(cal) + "\n");
    log(Level::Info, "fitted " + a.method + " on " + std::to_string(ds.examples.size()) + " examples");
    return Ok;
}

int cmd_predict(const std::string& calibrator, const std::string& data, double alpha, const std::string& out)
{
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw Error(ErrorCode::InvalidAlpha, "alpha must lie in (0, 1)");
    }
    const Calibrator cal = calibrator_from_json(read_text_file(calibrator));
    const Dataset ds = load_dataset(data);
    if (!cal.landmarks.empty() && ds.dims != cal.dims) {
        throw Error(ErrorCode::DimMismatch, "dataset is " + std::to_string(ds.dims) + "D, calibrator is "
                                                + std::to_string(cal.dims) + "D");
    }
    RegionSet set;
    set.method = to_string(cal.method);
    set.alpha = alpha;
    set.dims = ds.dims;
    for (const auto& ex : ds.examples) {
        auto p = predict(cal, ex, alpha);
        for (const auto& f : p.flags) {
            log(Level::Warn, ex.id + ": " + f);
        }
        const double m = measure(p.region);
        set.records.push_back({ex.id, ex.landmark, std::move(p.region), m, std::move(p.flags)});
    }
    write_file_atomic(out, region_set_to_json(set) + "\n");
    return Ok;
}

int cmd_evaluate(const std::string& regions, const std::string& data, const std::string& out)
{
    const RegionSet set = region_set_from_json(read_text_file(regions));
    const Dataset ds = load_dataset(data);
    std::map<std::string, const Example*> by_id;
    for (const auto& ex : ds.examples) {
        by_id.emplace(ex.id, &ex);
    }
    std::set<std::string> seen;
    std::vector<EvaluationItem> items;
    for (const auto& r : set.records) {
        const auto it = by_id.find(r.id);
        if (it == by_id.end()) {
            throw Error(ErrorCode::IdMismatch, "region '" + r.id + "' has no matching test example");
        }
        if (!seen.insert(r.id).second) {
            throw Error(ErrorCode::IdMismatch, "region id '" + r.id + "' appears twice");
        }
        const Example& ex = *it->second;
        if (dims(r.region) != ex.dims()) {
            throw Error(ErrorCode::DimMismatch, "region '" + r.id + "' dimension differs from its example");
        }
        items.push_back({r.region, ex.truth, point_prediction(ex), ex.landmark});
    }
    if (seen.size() != by_id.size()) {
        throw Error(ErrorCode::IdMismatch, std::to_string(by_id.size() - seen.size())
                                               + " test examples have no region");
    }
    EvaluationReport report = evaluate(items, set.method, set.alpha);
    // Surface prediction-time flags (e.g. covariance fallbacks) in the report.
    std::map<std::string, std::size_t> record_flags;
    for (const auto& r : set.records) {
        for (const auto& f : r.flags) {
            ++record_flags[f];
        }
    }
    for (const auto& [flag, n] : record_flags) {
        report.flags.push_back(flag + " (" + std::to_string(n) + " of " + std::to_string(set.records.size())
                               + " regions)");
    }
    for (const auto& f : report.flags) {
        log(Level::Warn, f);
    }
    fs::create_directories(out);
    write_file_atomic(fs::path(out) / "report.json", report_to_json(report) + "\n");
    write_file_atomic(fs::path(out) / "report.txt", report_to_table(report));
    return Ok;
}

struct ExportArgs {
    std::string in;
    std::string format;
    std::optional<int> axis;
    std::optional<Index> index;
    std::optional<double> at;
    std::string id;
    std::string out;
};

PredictionRegion pick_region(const std::string& text, const std::string& id)
{
    const auto j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_object() && j.contains("records")) {
        const RegionSet set = region_set_from_json(text);
        if (set.records.empty()) {
            throw Error(ErrorCode::MissingField, "region file holds no records");
        }
        if (id.empty()) {
            return set.records.front().region;
        }
        for (const auto& r : set.records) {
            if (r.id == id) {
                return r.region;
            }
        }
        throw Error(ErrorCode::IdMismatch, "no region with id '" + id + "'");
    }
    return region_from_json(text);
}

int cmd_export(const ExportArgs& a)
{
    if (a.format != "json" && a.format != "svg-slice") {
        throw Error(ErrorCode::UnknownFormat, "unknown export format '" + a.format + "' (json, svg-slice)");
    }
    const PredictionRegion region = pick_region(read_text_file(a.in), a.id);
    std::string output;
    if (a.format == "json") {
        output = region_to_json(region, 2) + "\n";
    } else if (dims(region) == 2) {
        output = render_svg(region);
    } else {
        const int axis = a.axis.value_or(2);
        double value;
        if (a.at) {
            value = *a.at;
        } else if (a.index) {
            const auto* mask = std::get_if<GridMask>(&region);
            if (!mask) {
                throw Error(ErrorCode::InvalidConfig, "--index selects a grid cell; use --at for box or ellipsoid regions");
            }
            value = slice_coordinate(*mask, axis, *a.index);
        } else {
            value = default_slice_coordinate(region, axis);
        }
        output = render_svg(slice_region(region, axis, value));
    }
    if (a.out.empty()) {
        std::cout << output;
    } else {
        write_file_atomic(a.out, output);
    }
    return Ok;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Conformal prediction regions for landmark localization"};
    app.require_subcommand(1);

    std::string sim_config, sim_out;
    auto* sim = app.add_subcommand("simulate", "Generate a synthetic dataset from a scenario config");
    sim->add_option("--config", sim_config, "Scenario JSON file")->required();
    sim->add_option("--out", sim_out, "Output directory")->required();

    CalibrateArgs cal;
    auto* calc = app.add_subcommand("calibrate", "Fit a method on a calibration manifest");
    calc->add_option("--method", cal.method, "Method name")->required();
    calc->add_option("--data", cal.data, "Calibration manifest")->required();
    calc->add_option("--out", cal.out, "Calibrator JSON to write")->required();
    calc->add_option("--config", cal.config, "Method config (JSON file or inline JSON)");
    calc->add_option("--center", cal.center, "auto, point, sample_mean or grid");
    calc->add_option("--uncertainty", cal.uncertainty, "auto, samples, covariance or grid");
    calc->add_option("--bins", cal.bins, "Bins per axis for the classification methods");
    calc->add_flag("--temperature", cal.temperature, "Fit a temperature before scoring");
    calc->add_flag("--randomized", cal.randomized, "Randomized APS");
    calc->add_flag("--pooled", cal.pooled, "One ledger for all landmarks");
    calc->add_option("--seed", cal.seed, "Seed for randomized APS");

    std::string pred_cal, pred_data, pred_out;
    double alpha = 0.1;
    auto* pred = app.add_subcommand("predict", "Predict regions for a test manifest");
    pred->add_option("--calibrator", pred_cal, "Calibrator JSON")->required();
    pred->add_option("--data", pred_data, "Test manifest")->required();
    pred->add_option("--alpha", alpha, "Miscoverage level in (0, 1)")->required();
    pred->add_option("--out", pred_out, "Regions JSON to write")->required();

    std::string ev_regions, ev_data, ev_out;
    auto* ev = app.add_subcommand("evaluate", "Score predicted regions against a test manifest");
    ev->add_option("--regions", ev_regions, "Regions JSON")->required();
    ev->add_option("--data", ev_data, "Test manifest")->required();
    ev->add_option("--out", ev_out, "Report directory")->required();

    ExportArgs ex;
    auto* exp = app.add_subcommand("export-region", "Export one region as JSON or an SVG slice");
    exp->add_option("--in", ex.in, "Regions JSON, region record or bare region")->required();
    exp->add_option("--format", ex.format, "json or svg-slice")->required();
    exp->add_option("--axis", ex.axis, "Axis fixed by the slice (3D)");
    exp->add_option("--index", ex.index, "Cell index along the axis (grid masks)");
    exp->add_option("--at", ex.at, "Slice coordinate in mm");
    exp->add_option("--id", ex.id, "Record id inside a regions file");
    exp->add_option("--out", ex.out, "Output file (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return ConfigError;
    }

    try {
        if (*sim) {
            return cmd_simulate(sim_config, sim_out);
        }
        if (*calc) {
            return cmd_calibrate(cal);
        }
        if (*pred) {
            return cmd_predict(pred_cal, pred_data, alpha, pred_out);
        }
        if (*ev) {
            return cmd_evaluate(ev_regions, ev_data, ev_out);
        }
        if (*exp) {
            return cmd_export(ex);
        }
    } catch (const Error& e) {
        log(Level::Error, std::string(to_string(e.code())) + ": " + e.what());
        return exit_code(e.code());
    } catch (const std::exception& e) {
        log(Level::Error, e.what());
        return Unexpected;
    }
    return Unexpected;
}
