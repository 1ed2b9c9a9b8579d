#include "discover/array_file.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include "discover/error.hpp"

namespace discover {

namespace {

static_assert(std::endian::native == std::endian::little, "array files assume a little-endian host");

void put_u32(char* dst, std::uint32_t v) { std::memcpy(dst, &v, 4); }

std::uint32_t get_u32(const char* src) {
    std::uint32_t v;
    std::memcpy(&v, src, 4);
    return v;
}

}  // namespace

void round_to_float(Eigen::MatrixXd& m) {
    m = m.unaryExpr([](double v) { return static_cast<double>(static_cast<float>(v)); });
}

void write_array(const std::filesystem::path& path, const Eigen::MatrixXd& data, int rank) {
    if (rank != 1 && rank != 2) throw InputError("write_array: rank must be 1 or 2");
    if (rank == 1 && data.cols() != 1) throw InputError("write_array: rank-1 arrays need a single column");
    std::array<char, 16> header{};
    std::memcpy(header.data(), kArrayMagic, 4);
    put_u32(header.data() + 4, static_cast<std::uint32_t>(rank));
    put_u32(header.data() + 8, static_cast<std::uint32_t>(data.rows()));
    put_u32(header.data() + 12, static_cast<std::uint32_t>(data.cols()));

    std::vector<float> buf(static_cast<std::size_t>(data.size()));
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < data.rows(); ++r)
        for (Eigen::Index c = 0; c < data.cols(); ++c) buf[k++] = static_cast<float>(data(r, c));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path.string());
    out.write(header.data(), header.size());
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!out) throw FormatError("short write to " + path.string());
}

Eigen::MatrixXd read_array(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot read " + path.string());
    std::array<char, 16> header{};
    in.read(header.data(), header.size());
    if (!in || std::memcmp(header.data(), kArrayMagic, 4) != 0) {
        throw FormatError(path.string() + ": bad array header");
    }
    const auto rank = get_u32(header.data() + 4);
    const auto rows = get_u32(header.data() + 8);
    const auto cols = get_u32(header.data() + 12);
    if (rank != 1 && rank != 2) throw FormatError(path.string() + ": unsupported rank " + std::to_string(rank));
    if (rank == 1 && cols != 1) throw FormatError(path.string() + ": rank-1 array with cols != 1");

    std::vector<float> buf(static_cast<std::size_t>(rows) * cols);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw FormatError(path.string() + ": truncated data");
    if (in.peek() != std::char_traits<char>::eof()) throw FormatError(path.string() + ": trailing bytes");

    Eigen::MatrixXd out(rows, cols);
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < out.rows(); ++r)
        for (Eigen::Index c = 0; c < out.cols(); ++c) out(r, c) = buf[k++];
    return out;
}

}  // namespace discover
