#include "lmcp/tensor_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace lmcp {

namespace {

constexpr char magic[] = "\x93NUMPY";
constexpr std::size_t magic_size = 6;

struct Header {
    DType dtype = DType::Float64;
    bool fortran_order = false;
    std::vector<Index> shape;
    std::size_t data_offset = 0;
};

std::size_t item_size(DType dtype)
{
    return dtype == DType::Float32 ? 4 : 8;
}

template <typename T>
T byteswap_if_needed(T value)
{
    if constexpr (std::endian::native == std::endian::little) {
        return value;
    } else {
        auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
        std::reverse(bytes.begin(), bytes.end());
        return std::bit_cast<T>(bytes);
    }
}

std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\n' || s.front() == '\t')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\n' || s.back() == '\t')) {
        s.remove_suffix(1);
    }
    return s;
}

// Value text following `'key':` in the header dict, up to the next top-level comma.
std::string_view dict_value(std::string_view dict, std::string_view key)
{
    const std::string quoted = "'" + std::string(key) + "'";
    auto pos = dict.find(quoted);
    if (pos == std::string_view::npos) {
        throw Error(ErrorCode::MalformedHeader, "header lacks key " + quoted);
    }
    pos = dict.find(':', pos + quoted.size());
    if (pos == std::string_view::npos) {
        throw Error(ErrorCode::MalformedHeader, "header key " + quoted + " has no value");
    }
    std::size_t end = pos + 1;
    int depth = 0;
    for (; end < dict.size(); ++end) {
        const char c = dict[end];
        if (c == '(') {
            ++depth;
        } else if (c == ')') {
            --depth;
        } else if ((c == ',' && depth == 0) || (c == '}' && depth == 0)) {
            break;
        }
    }
    return trim(dict.substr(pos + 1, end - pos - 1));
}

Header parse_header(std::string_view dict)
{
    Header h;
    auto descr = dict_value(dict, "descr");
    if (descr == "'<f8'") {
        h.dtype = DType::Float64;
    } else if (descr == "'<f4'") {
        h.dtype = DType::Float32;
    } else {
        throw Error(ErrorCode::UnsupportedDType, "unsupported dtype " + std::string(descr));
    }

    auto fortran = dict_value(dict, "fortran_order");
    if (fortran == "False") {
        h.fortran_order = false;
    } else if (fortran == "True") {
        throw Error(ErrorCode::MalformedHeader, "Fortran-ordered arrays are not supported");
    } else {
        throw Error(ErrorCode::MalformedHeader, "bad fortran_order value");
    }

    auto shape = dict_value(dict, "shape");
    if (shape.size() < 2 || shape.front() != '(' || shape.back() != ')') {
        throw Error(ErrorCode::MalformedHeader, "bad shape tuple");
    }
    shape = shape.substr(1, shape.size() - 2);
    while (!trim(shape).empty()) {
        auto comma = shape.find(',');
        auto token = trim(shape.substr(0, comma));
        if (!token.empty()) {
            Index value = 0;
            for (char c : token) {
                if (c < '0' || c > '9') {
                    throw Error(ErrorCode::MalformedHeader, "bad shape entry '" + std::string(token) + "'");
                }
                value = value * 10 + (c - '0');
            }
            h.shape.push_back(value);
        }
        if (comma == std::string_view::npos) {
            break;
        }
        shape.remove_prefix(comma + 1);
    }
    return h;
}

Header read_header(std::istream& in)
{
    char prefix[magic_size + 2];
    if (!in.read(prefix, sizeof prefix) || std::memcmp(prefix, magic, magic_size) != 0) {
        throw Error(ErrorCode::MalformedHeader, "missing .npy magic string");
    }
    const auto major = static_cast<unsigned char>(prefix[magic_size]);
    std::size_t header_len = 0;
    std::size_t offset = magic_size + 2;
    if (major == 1) {
        unsigned char len[2];
        if (!in.read(reinterpret_cast<char*>(len), 2)) {
            throw Error(ErrorCode::MalformedHeader, "truncated header length");
        }
        header_len = len[0] | (static_cast<std::size_t>(len[1]) << 8);
        offset += 2;
    } else if (major == 2 || major == 3) {
        unsigned char len[4];
        if (!in.read(reinterpret_cast<char*>(len), 4)) {
            throw Error(ErrorCode::MalformedHeader, "truncated header length");
        }
        header_len = len[0] | (static_cast<std::size_t>(len[1]) << 8) | (static_cast<std::size_t>(len[2]) << 16)
            | (static_cast<std::size_t>(len[3]) << 24);
        offset += 4;
    } else {
        throw Error(ErrorCode::MalformedHeader, "unsupported .npy version " + std::to_string(major));
    }
    std::string dict(header_len, '\0');
    if (!in.read(dict.data(), static_cast<std::streamsize>(header_len))) {
        throw Error(ErrorCode::MalformedHeader, "truncated header");
    }
    Header h = parse_header(dict);
    h.data_offset = offset + header_len;
    return h;
}

std::ifstream open_for_read(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot open " + path.string());
    }
    return in;
}

} // namespace

Index Tensor::size() const
{
    Index n = 1;
    for (Index s : shape) {
        n *= s;
    }
    return n;
}

std::vector<Index> read_tensor_shape(const std::filesystem::path& path)
{
    auto in = open_for_read(path);
    return read_header(in).shape;
}

Tensor read_tensor(const std::filesystem::path& path)
{
    auto in = open_for_read(path);
    const Header h = read_header(in);

    Tensor t;
    t.shape = h.shape;
    const auto count = static_cast<std::size_t>(t.size());
    const std::size_t bytes = count * item_size(h.dtype);

    std::vector<char> payload(bytes);
    if (bytes > 0 && !in.read(payload.data(), static_cast<std::streamsize>(bytes))) {
        throw Error(ErrorCode::MalformedHeader, "payload shorter than declared shape in " + path.string());
    }
    if (in.peek() != std::char_traits<char>::eof()) {
        throw Error(ErrorCode::ShapeMismatch, "payload longer than declared shape in " + path.string());
    }

    t.data.resize(count);
    if (h.dtype == DType::Float64) {
        for (std::size_t i = 0; i < count; ++i) {
            std::uint64_t bits;
            std::memcpy(&bits, payload.data() + 8 * i, 8);
            t.data[i] = std::bit_cast<double>(byteswap_if_needed(bits));
        }
    } else {
        for (std::size_t i = 0; i < count; ++i) {
            std::uint32_t bits;
            std::memcpy(&bits, payload.data() + 4 * i, 4);
            t.data[i] = static_cast<double>(std::bit_cast<float>(byteswap_if_needed(bits)));
        }
    }
    return t;
}

void write_tensor(const Tensor& tensor, const std::filesystem::path& path, DType dtype)
{
    if (tensor.data.empty() || static_cast<Index>(tensor.data.size()) != tensor.size()) {
        throw Error(ErrorCode::ShapeMismatch, "tensor data does not match its shape (or is empty)");
    }

    std::ostringstream dict;
    dict << "{'descr': '" << (dtype == DType::Float64 ? "<f8" : "<f4") << "', 'fortran_order': False, 'shape': (";
    for (std::size_t i = 0; i < tensor.shape.size(); ++i) {
        dict << tensor.shape[i] << (tensor.shape.size() == 1 || i + 1 < tensor.shape.size() ? "," : "");
        if (i + 1 < tensor.shape.size()) {
            dict << ' ';
        }
    }
    dict << "), }";
    std::string header = dict.str();
    // Pad with spaces and a trailing newline so data starts on a 64-byte boundary.
    const std::size_t unpadded = magic_size + 2 + 2 + header.size() + 1;
    header.append((64 - unpadded % 64) % 64, ' ');
    header.push_back('\n');
    if (header.size() > 0xFFFF) {
        throw Error(ErrorCode::ShapeMismatch, "tensor rank too large for a version 1.0 header");
    }

    std::string out;
    out.reserve(magic_size + 4 + header.size() + tensor.data.size() * item_size(dtype));
    out.append(magic, magic_size);
    out.push_back('\x01');
    out.push_back('\x00');
    out.push_back(static_cast<char>(header.size() & 0xFF));
    out.push_back(static_cast<char>((header.size() >> 8) & 0xFF));
    out += header;
    for (double v : tensor.data) {
        if (dtype == DType::Float64) {
            auto bits = byteswap_if_needed(std::bit_cast<std::uint64_t>(v));
            out.append(reinterpret_cast<const char*>(&bits), 8);
        } else {
            auto bits = byteswap_if_needed(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
            out.append(reinterpret_cast<const char*>(&bits), 4);
        }
    }

    write_file_atomic(path, out);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents)
{
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream file(tmp, std::ios::binary | std::ios::trunc);
        if (!file || !file.write(contents.data(), static_cast<std::streamsize>(contents.size()))) {
            throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw Error(ErrorCode::IoError, "cannot rename into " + path.string());
    }
}

} // namespace lmcp
