#include <fstream>
#include <sstream>

#include "json_util.hpp"
#include "lmcp/tensor_io.hpp"

namespace lmcp {

using detail::json;

namespace {

constexpr auto data_error = ErrorCode::InvariantViolation;

Example example_from_json(const json& j, const std::filesystem::path& base, int dims)
{
    Example ex;
    ex.id = detail::require(j, "id", data_error).get<std::string>();
    ex.landmark = j.value("landmark", 0);
    ex.truth = detail::vec_from_json(detail::require(j, "truth", data_error), data_error);

    if (j.contains("grid") && !j.at("grid").is_null()) {
        const json& g = j.at("grid");
        GridGeometry geometry = detail::geometry_from_json(g, data_error);
        const auto path = base / detail::require(g, "path", data_error).get<std::string>();
        if (!std::filesystem::exists(path)) {
            throw Error(ErrorCode::MissingTensor, "example '" + ex.id + "' references missing " + path.string());
        }
        Tensor t = read_tensor(path);
        if (t.shape != geometry.shape) {
            throw Error(ErrorCode::ShapeMismatch, "tensor " + path.string() + " shape differs from its manifest entry");
        }
        GridDistribution grid{std::move(geometry), Eigen::Map<const Vec>(t.data.data(), t.size())};
        ex.grid = normalize(std::move(grid));
    }
    if (j.contains("point") && !j.at("point").is_null()) {
        ex.point = detail::vec_from_json(j.at("point"), data_error);
    }
    if (j.contains("samples")) {
        for (const auto& s : j.at("samples")) {
            ex.samples.push_back(detail::vec_from_json(s, data_error));
        }
    }
    if (j.contains("covariance") && !j.at("covariance").is_null()) {
        ex.covariance = detail::mat_from_json(j.at("covariance"), data_error);
    }
    if (j.contains("to_native") && !j.at("to_native").is_null()) {
        ex.to_native = detail::affine_from_json(j.at("to_native"), data_error);
    }
    if (ex.dims() != dims) {
        throw Error(ErrorCode::DimMismatch, "example '" + ex.id + "' dimension differs from manifest dims");
    }
    ex.validate();
    return ex;
}

} // namespace

std::string to_string(Split split)
{
    switch (split) {
    case Split::Train: return "train";
    case Split::Calibration: return "calibration";
    case Split::Test: return "test";
    }
    return "test";
}

Split split_from_string(const std::string& text)
{
    if (text == "train") {
        return Split::Train;
    }
    if (text == "calibration") {
        return Split::Calibration;
    }
    if (text == "test") {
        return Split::Test;
    }
    throw Error(ErrorCode::InvariantViolation, "unknown split '" + text + "'");
}

Dataset load_dataset(const std::filesystem::path& manifest_path)
{
    std::ifstream in(manifest_path);
    if (!in) {
        throw Error(ErrorCode::MissingTensor, "cannot open manifest " + manifest_path.string());
    }
    json manifest;
    try {
        manifest = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(data_error, "manifest " + manifest_path.string() + " is not valid JSON: " + e.what());
    }

    Dataset ds;
    try {
        ds.dims = detail::require(manifest, "dims", data_error).get<int>();
        ds.split = split_from_string(detail::require(manifest, "split", data_error).get<std::string>());
        ds.units = detail::require(manifest, "units", data_error).get<std::string>();
        if (manifest.contains("seed") && !manifest.at("seed").is_null()) {
            ds.seed = manifest.at("seed").get<std::uint64_t>();
        }
    } catch (const json::exception& e) {
        throw Error(data_error, std::string("bad manifest header: ") + e.what());
    }
    if (ds.units != "mm") {
        throw Error(data_error, "manifest units must be \"mm\"");
    }
    if (ds.dims != 2 && ds.dims != 3) {
        throw Error(data_error, "manifest dims must be 2 or 3");
    }

    const auto base = manifest_path.parent_path();
    for (const auto& entry : detail::require(manifest, "examples", data_error)) {
        try {
            ds.examples.push_back(example_from_json(entry, base, ds.dims));
        } catch (const json::exception& e) {
            throw Error(data_error, std::string("bad example entry: ") + e.what());
        }
    }
    return ds;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& manifest_path, DType grid_dtype)
{
    const auto base = manifest_path.parent_path();
    const auto tensor_dir = base / "tensors";
    std::error_code ec;
    std::filesystem::create_directories(tensor_dir, ec);
    if (ec) {
        throw Error(ErrorCode::IoError, "cannot create " + tensor_dir.string());
    }

    json examples = json::array();
    for (const auto& ex : dataset.examples) {
        json e{{"id", ex.id}, {"landmark", ex.landmark}, {"truth", detail::vec_to_json(ex.truth)}};
        if (ex.grid) {
            const auto rel = std::filesystem::path("tensors") / (ex.id + ".npy");
            Tensor t{ex.grid->geometry.shape, {ex.grid->values.data(), ex.grid->values.data() + ex.grid->values.size()}};
            write_tensor(t, base / rel, grid_dtype);
            json g = detail::geometry_to_json(ex.grid->geometry);
            g["path"] = rel.generic_string();
            e["grid"] = std::move(g);
        }
        if (ex.point) {
            e["point"] = detail::vec_to_json(*ex.point);
        }
        if (!ex.samples.empty()) {
            json s = json::array();
            for (const auto& v : ex.samples) {
                s.push_back(detail::vec_to_json(v));
            }
            e["samples"] = std::move(s);
        }
        if (ex.covariance) {
            e["covariance"] = detail::mat_to_json(*ex.covariance);
        }
        if (ex.to_native) {
            e["to_native"] = detail::affine_to_json(*ex.to_native);
        }
        examples.push_back(std::move(e));
    }

    json manifest{{"dims", dataset.dims},
                  {"split", to_string(dataset.split)},
                  {"units", dataset.units},
                  {"examples", std::move(examples)}};
    if (dataset.seed) {
        manifest["seed"] = *dataset.seed;
    }
    write_file_atomic(manifest_path, manifest.dump(1) + "\n");
}

} // namespace lmcp
