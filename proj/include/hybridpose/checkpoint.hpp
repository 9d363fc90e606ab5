#pragma once

// Binary model checkpoint.
//
//   magic   "HPNETCK\0"            8 bytes
//   version u32                    currently 1
//   input_dim u64
//   n_hidden u64, then n_hidden x u64
//   min_angle f64, max_angle f64
//   n_levels u64, then n_levels x u64 bin counts (finest first)
//   seed u64
//   n_layers u64, then per layer:
//     rows u64, cols u64, rows*cols f64 weights (row-major), rows f64 bias
//
// Integers and doubles are little-endian; doubles are raw IEEE-754 bits, so
// save/load round-trips bitwise.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "hybridpose/errors.hpp"
#include "hybridpose/tinynet.hpp"

namespace hybridpose {

inline constexpr std::array<char, 8> kCheckpointMagic{'H', 'P', 'N', 'E', 'T', 'C', 'K', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void write_u64(std::ostream& out, std::uint64_t v) {
    std::array<char, 8> bytes{};
    for (std::size_t i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
    out.write(bytes.data(), bytes.size());
}

inline void write_u32(std::ostream& out, std::uint32_t v) {
    std::array<char, 4> bytes{};
    for (std::size_t i = 0; i < 4; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
    out.write(bytes.data(), bytes.size());
}

inline void write_f64(std::ostream& out, double v) { write_u64(out, std::bit_cast<std::uint64_t>(v)); }

inline std::uint64_t read_u64(std::istream& in) {
    std::array<unsigned char, 8> bytes{};
    if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) throw ValidationError("checkpoint truncated");
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return v;
}

inline std::uint32_t read_u32(std::istream& in) {
    std::array<unsigned char, 4> bytes{};
    if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) throw ValidationError("checkpoint truncated");
    std::uint32_t v = 0;
    for (std::size_t i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
    return v;
}

inline double read_f64(std::istream& in) { return std::bit_cast<double>(read_u64(in)); }

// Guards allocations against corrupt size fields.
inline std::size_t read_count(std::istream& in, std::uint64_t limit, const char* what) {
    const std::uint64_t v = read_u64(in);
    if (v > limit) throw ValidationError(std::string("checkpoint: implausible ") + what);
    return static_cast<std::size_t>(v);
}

} // namespace detail

inline void save_checkpoint(const TinyNet& net, std::ostream& out) {
    const NetConfig& cfg = net.config();
    out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
    detail::write_u32(out, kCheckpointVersion);
    detail::write_u64(out, cfg.input_dim);
    detail::write_u64(out, cfg.hidden_dims.size());
    for (std::size_t d : cfg.hidden_dims) detail::write_u64(out, d);
    detail::write_f64(out, cfg.hierarchy.finest().min_angle());
    detail::write_f64(out, cfg.hierarchy.finest().max_angle());
    detail::write_u64(out, cfg.hierarchy.size());
    for (std::size_t n : cfg.hierarchy.bin_counts()) detail::write_u64(out, n);
    detail::write_u64(out, cfg.seed);
    detail::write_u64(out, net.layers().size());
    for (const DenseLayer& layer : net.layers()) {
        detail::write_u64(out, static_cast<std::uint64_t>(layer.weight.rows()));
        detail::write_u64(out, static_cast<std::uint64_t>(layer.weight.cols()));
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) detail::write_f64(out, layer.weight(r, c));
        }
        for (Eigen::Index r = 0; r < layer.bias.size(); ++r) detail::write_f64(out, layer.bias(r));
    }
    if (!out) throw Error("failed to write checkpoint");
}

inline TinyNet load_checkpoint(std::istream& in) {
    std::array<char, 8> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kCheckpointMagic) {
        throw ValidationError("not a checkpoint file (bad magic)");
    }
    if (const auto version = detail::read_u32(in); version != kCheckpointVersion) {
        throw ValidationError("unsupported checkpoint version " + std::to_string(version));
    }
    constexpr std::uint64_t kMaxDim = 1u << 24;
    NetConfig cfg;
    cfg.input_dim = detail::read_count(in, kMaxDim, "input_dim");
    cfg.hidden_dims.resize(detail::read_count(in, 1024, "hidden layer count"));
    for (auto& d : cfg.hidden_dims) d = detail::read_count(in, kMaxDim, "hidden size");
    const double min_angle = detail::read_f64(in);
    const double max_angle = detail::read_f64(in);
    std::vector<std::size_t> counts(detail::read_count(in, 1024, "level count"));
    for (auto& n : counts) n = detail::read_count(in, kMaxDim, "bin count");
    cfg.hierarchy = make_hierarchy(min_angle, max_angle, counts);
    cfg.seed = detail::read_u64(in);

    std::vector<DenseLayer> layers(detail::read_count(in, 4096, "layer count"));
    for (DenseLayer& layer : layers) {
        const auto rows = static_cast<Eigen::Index>(detail::read_count(in, kMaxDim, "layer rows"));
        const auto cols = static_cast<Eigen::Index>(detail::read_count(in, kMaxDim, "layer cols"));
        layer.weight.resize(rows, cols);
        layer.bias.resize(rows);
        for (Eigen::Index r = 0; r < rows; ++r) {
            for (Eigen::Index c = 0; c < cols; ++c) layer.weight(r, c) = detail::read_f64(in);
        }
        for (Eigen::Index r = 0; r < rows; ++r) layer.bias(r) = detail::read_f64(in);
    }
    if (in.peek() != std::char_traits<char>::eof()) throw ValidationError("checkpoint has trailing bytes");
    return TinyNet(std::move(cfg), std::move(layers));
}

inline void save_checkpoint(const TinyNet& net, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + path + " for writing");
    save_checkpoint(net, out);
}

inline TinyNet load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint " + path);
    return load_checkpoint(in);
}

} // namespace hybridpose
