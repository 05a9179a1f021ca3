#pragma once

// Binary checkpoint, little-endian, magic "EDRN" version 1:
//
//   magic, u32 version
//   config: i32 levels, base_channels, kernel_width, in_channels,
//           u8 normalize_kernels, u32 n_dilations, i32 dilations[]
//   u32 n_tensors, then per named parameter (fixed traversal order):
//           u32 name_len, name, u32 ndim, i32 dims[], f64 data[]
//   u8 has_adam: u64 step, f64 lr/beta1/beta2/eps, f64 m[]+v[] per parameter
//   u8 has_rng:  u64 data_rng[4], u64 aug_rng[4]
//   u64 iteration
//
// Tensor payloads are stored as f64 regardless of the in-memory scalar type,
// so a float model round-trips bit-exactly (float -> double is lossless).

#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "edrain/adam.hpp"
#include "edrain/kpn.hpp"
#include "edrain/tensor.hpp"

namespace edrain {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

template <typename T>
struct Checkpoint {
    KpnConfig config;
    KpnParams<T> params;
    bool has_adam = false;
    AdamConfig<T> adam_cfg;
    AdamState<T> adam;
    bool has_rng = false;
    std::array<std::uint64_t, 4> data_rng{}, aug_rng{};
    std::uint64_t iteration = 0;
};

namespace detail {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[4] = {'E', 'D', 'R', 'N'};

inline void put_bytes(std::ostream& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    put_bytes(os, b, 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    put_bytes(os, b, 8);
}

inline void put_i32(std::ostream& os, std::int32_t v) {
    put_u32(os, static_cast<std::uint32_t>(v));
}

inline void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }

inline void get_bytes(std::istream& is, void* p, std::size_t n, const std::string& path) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is.gcount()) != n)
        throw CheckpointError("truncated checkpoint: " + path);
}

inline std::uint32_t get_u32(std::istream& is, const std::string& path) {
    unsigned char b[4];
    get_bytes(is, b, 4, path);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

inline std::uint64_t get_u64(std::istream& is, const std::string& path) {
    unsigned char b[8];
    get_bytes(is, b, 8, path);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

inline std::int32_t get_i32(std::istream& is, const std::string& path) {
    return static_cast<std::int32_t>(get_u32(is, path));
}

inline std::uint8_t get_u8(std::istream& is, const std::string& path) {
    unsigned char b;
    get_bytes(is, &b, 1, path);
    return b;
}

inline double get_f64(std::istream& is, const std::string& path) {
    return std::bit_cast<double>(get_u64(is, path));
}

template <typename T>
void put_tensor_data(std::ostream& os, const Tensor<T>& t) {
    for (std::size_t i = 0; i < t.size(); ++i) put_f64(os, static_cast<double>(t[i]));
}

template <typename T>
void get_tensor_data(std::istream& is, Tensor<T>& t, const std::string& path) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(get_f64(is, path));
}

} // namespace detail

template <typename T>
void save_checkpoint(const std::string& path, const Checkpoint<T>& ck) {
    using namespace detail;
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw CheckpointError("cannot write checkpoint: " + path);

    put_bytes(os, kCheckpointMagic, 4);
    put_u32(os, kCheckpointVersion);
    put_i32(os, ck.config.levels);
    put_i32(os, ck.config.base_channels);
    put_i32(os, ck.config.kernel_width);
    put_i32(os, ck.config.in_channels);
    os.put(ck.config.normalize_kernels ? 1 : 0);
    put_u32(os, static_cast<std::uint32_t>(ck.config.dilations.size()));
    for (int d : ck.config.dilations) put_i32(os, d);

    std::uint32_t n_tensors = 0;
    for_each_param(ck.params, [&](const std::string&, const Tensor<T>&) { ++n_tensors; });
    put_u32(os, n_tensors);
    for_each_param(ck.params, [&](const std::string& name, const Tensor<T>& t) {
        put_u32(os, static_cast<std::uint32_t>(name.size()));
        put_bytes(os, name.data(), name.size());
        put_u32(os, static_cast<std::uint32_t>(t.rank()));
        for (int d : t.shape()) put_i32(os, d);
        put_tensor_data(os, t);
    });

    os.put(ck.has_adam ? 1 : 0);
    if (ck.has_adam) {
        if (ck.adam.m.size() != n_tensors)
            throw CheckpointError("checkpoint: optimizer state does not match parameter count");
        put_u64(os, ck.adam.step);
        put_f64(os, static_cast<double>(ck.adam_cfg.lr));
        put_f64(os, static_cast<double>(ck.adam_cfg.beta1));
        put_f64(os, static_cast<double>(ck.adam_cfg.beta2));
        put_f64(os, static_cast<double>(ck.adam_cfg.eps));
        for (const auto& t : ck.adam.m) put_tensor_data(os, t);
        for (const auto& t : ck.adam.v) put_tensor_data(os, t);
    }

    os.put(ck.has_rng ? 1 : 0);
    if (ck.has_rng) {
        for (auto s : ck.data_rng) put_u64(os, s);
        for (auto s : ck.aug_rng) put_u64(os, s);
    }
    put_u64(os, ck.iteration);
    os.flush();
    if (!os) throw CheckpointError("cannot write checkpoint: " + path);
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path) {
    using namespace detail;
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("cannot open checkpoint: " + path);

    char magic[4];
    get_bytes(is, magic, 4, path);
    if (std::string(magic, 4) != std::string(kCheckpointMagic, 4))
        throw CheckpointError("not a checkpoint file: " + path);
    const std::uint32_t version = get_u32(is, path);
    if (version != kCheckpointVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version) +
                              ": " + path);

    Checkpoint<T> ck;
    ck.config.levels = get_i32(is, path);
    ck.config.base_channels = get_i32(is, path);
    ck.config.kernel_width = get_i32(is, path);
    ck.config.in_channels = get_i32(is, path);
    ck.config.normalize_kernels = get_u8(is, path) != 0;
    const std::uint32_t nd = get_u32(is, path);
    ck.config.dilations.clear();
    for (std::uint32_t i = 0; i < nd; ++i) ck.config.dilations.push_back(get_i32(is, path));
    check_kpn_config(ck.config);

    ck.params = kpn_alloc<T>(ck.config);
    const std::uint32_t n_tensors = get_u32(is, path);
    std::uint32_t expected = 0;
    for_each_param(ck.params, [&](const std::string&, const Tensor<T>&) { ++expected; });
    if (n_tensors != expected)
        throw CheckpointError("checkpoint has " + std::to_string(n_tensors) +
                              " tensors, config implies " + std::to_string(expected) + ": " +
                              path);
    for_each_param(ck.params, [&](const std::string& name, Tensor<T>& t) {
        const std::uint32_t len = get_u32(is, path);
        std::string got(len, '\0');
        get_bytes(is, got.data(), len, path);
        if (got != name)
            throw CheckpointError("checkpoint tensor '" + got + "' where '" + name +
                                  "' was expected: " + path);
        const std::uint32_t ndim = get_u32(is, path);
        std::vector<int> dims;
        for (std::uint32_t i = 0; i < ndim; ++i) dims.push_back(get_i32(is, path));
        if (dims != t.shape())
            throw CheckpointError("checkpoint tensor '" + name + "' has shape " +
                                  Tensor<T>::shape_string(dims) + ", expected " +
                                  t.shape_str() + ": " + path);
        get_tensor_data(is, t, path);
    });

    ck.has_adam = get_u8(is, path) == 1;
    if (ck.has_adam) {
        ck.adam.step = get_u64(is, path);
        ck.adam_cfg.lr = static_cast<T>(get_f64(is, path));
        ck.adam_cfg.beta1 = static_cast<T>(get_f64(is, path));
        ck.adam_cfg.beta2 = static_cast<T>(get_f64(is, path));
        ck.adam_cfg.eps = static_cast<T>(get_f64(is, path));
        for_each_param(ck.params, [&](const std::string&, const Tensor<T>& t) {
            ck.adam.m.emplace_back(t.shape());
        });
        for_each_param(ck.params, [&](const std::string&, const Tensor<T>& t) {
            ck.adam.v.emplace_back(t.shape());
        });
        for (auto& t : ck.adam.m) get_tensor_data(is, t, path);
        for (auto& t : ck.adam.v) get_tensor_data(is, t, path);
    }

    ck.has_rng = get_u8(is, path) == 1;
    if (ck.has_rng) {
        for (auto& s : ck.data_rng) s = get_u64(is, path);
        for (auto& s : ck.aug_rng) s = get_u64(is, path);
    }
    ck.iteration = get_u64(is, path);
    return ck;
}

} // namespace edrain
