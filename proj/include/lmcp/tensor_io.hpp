#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lmcp/grid.hpp"

namespace lmcp {

/// Dense C-order array read from or written to a `.npy` file.
struct Tensor {
    std::vector<Index> shape;
    std::vector<double> data;

    Index size() const;
};

enum class DType { Float32, Float64 };

/// Reads a version 1.0/2.0 `.npy` file holding little-endian float32 or
/// float64 data in C order. Values are promoted to double.
Tensor read_tensor(const std::filesystem::path& path);

/// Reads only the header and returns the declared shape.
std::vector<Index> read_tensor_shape(const std::filesystem::path& path);

/// Writes a version 1.0 `.npy` file. Float64 output round-trips bit-exactly.
void write_tensor(const Tensor& tensor, const std::filesystem::path& path, DType dtype = DType::Float64);

enum class Split { Train, Calibration, Test };

std::string to_string(Split split);
Split split_from_string(const std::string& text);

/// In-memory view of a dataset manifest plus its loaded examples.
struct Dataset {
    int dims = 2;
    Split split = Split::Test;
    std::string units = "mm";
    std::optional<std::uint64_t> seed;
    std::vector<Example> examples;
};

/// Parses a manifest, loads every referenced tensor, validates the examples
/// and normalizes their grids.
Dataset load_dataset(const std::filesystem::path& manifest_path);

/// Writes `manifest_path` plus one tensor per grid under `tensors/` next to it.
void save_dataset(const Dataset& dataset, const std::filesystem::path& manifest_path,
                  DType grid_dtype = DType::Float64);

/// Writes `contents` to a sibling temporary file then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

} // namespace lmcp
