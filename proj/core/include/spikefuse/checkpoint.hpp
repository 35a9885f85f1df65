#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "spikefuse/common.hpp"

namespace spikefuse {

inline constexpr char kCheckpointMagic[8] = {'S', 'P', 'K', 'F', 'U', 'S', 'E', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename S>
struct NamedArray {
    std::string name;
    Shape shape;
    std::vector<S> data;
};

/// On-disk model state: magic + version header, scalar width, the full
/// config as JSON, epoch counter, named parameters and running buffers,
/// and optionally the optimizer slots. All numeric payloads are raw
/// little-endian scalars, so a save/load round trip is bit-identical.
template <typename S>
struct Checkpoint {
    std::string config_json;
    std::uint32_t epoch = 0;
    std::vector<NamedArray<S>> params;
    std::vector<NamedArray<S>> buffers;
    bool has_adam = false;
    std::uint64_t adam_step = 0;
    std::vector<NamedArray<S>> adam_m;
    std::vector<NamedArray<S>> adam_v;
};

namespace ckio {

void write_bytes(std::ostream& out, const void* p, std::size_t n, const std::string& path);
void read_bytes(std::istream& in, void* p, std::size_t n, const std::string& path);
void write_u32(std::ostream& out, std::uint32_t v, const std::string& path);
std::uint32_t read_u32(std::istream& in, const std::string& path);
void write_u64(std::ostream& out, std::uint64_t v, const std::string& path);
std::uint64_t read_u64(std::istream& in, const std::string& path);
void write_string(std::ostream& out, const std::string& s, const std::string& path);
std::string read_string(std::istream& in, const std::string& path);
void write_header(std::ostream& out, std::uint32_t scalar_width, const std::string& path);
std::uint32_t read_header(std::istream& in, const std::string& path);
void expect_eof(std::istream& in, const std::string& path);

}  // namespace ckio

namespace detail {

template <typename S>
void write_array(std::ostream& out, const NamedArray<S>& a, const std::string& path) {
    ckio::write_string(out, a.name, path);
    ckio::write_u64(out, a.shape.size(), path);
    for (std::size_t d : a.shape) ckio::write_u64(out, d, path);
    check(a.data.size() == numel(a.shape), "array ", a.name, " has ", a.data.size(),
          " values but shape ", shape_str(a.shape));
    ckio::write_bytes(out, a.data.data(), a.data.size() * sizeof(S), path);
}

template <typename S>
NamedArray<S> read_array(std::istream& in, const std::string& path) {
    NamedArray<S> a;
    a.name = ckio::read_string(in, path);
    std::uint64_t ndim = ckio::read_u64(in, path);
    check(ndim <= 8, "checkpoint ", path, ": array ", a.name, " claims rank ", ndim);
    a.shape.resize(ndim);
    for (std::size_t i = 0; i < ndim; ++i) {
        a.shape[i] = static_cast<std::size_t>(ckio::read_u64(in, path));
    }
    a.data.resize(numel(a.shape));
    ckio::read_bytes(in, a.data.data(), a.data.size() * sizeof(S), path);
    return a;
}

template <typename S>
void write_arrays(std::ostream& out, const std::vector<NamedArray<S>>& v,
                  const std::string& path) {
    ckio::write_u64(out, v.size(), path);
    for (const auto& a : v) write_array(out, a, path);
}

template <typename S>
std::vector<NamedArray<S>> read_arrays(std::istream& in, const std::string& path) {
    std::uint64_t n = ckio::read_u64(in, path);
    check(n <= 1u << 20, "checkpoint ", path, ": implausible array count ", n);
    std::vector<NamedArray<S>> v;
    v.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) v.push_back(read_array<S>(in, path));
    return v;
}

}  // namespace detail

template <typename S>
void save_checkpoint(const std::string& path, const Checkpoint<S>& ck) {
    static_assert(sizeof(S) == 4 || sizeof(S) == 8, "unsupported scalar width");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    check(out.good(), "cannot open ", path, " for writing");
    ckio::write_header(out, sizeof(S), path);
    ckio::write_string(out, ck.config_json, path);
    ckio::write_u32(out, ck.epoch, path);
    ckio::write_u32(out, ck.has_adam ? 1u : 0u, path);
    ckio::write_u64(out, ck.adam_step, path);
    detail::write_arrays(out, ck.params, path);
    detail::write_arrays(out, ck.buffers, path);
    if (ck.has_adam) {
        check(ck.adam_m.size() == ck.params.size() && ck.adam_v.size() == ck.params.size(),
              "optimizer slots do not match parameter count");
        detail::write_arrays(out, ck.adam_m, path);
        detail::write_arrays(out, ck.adam_v, path);
    }
    out.flush();
    check(out.good(), "write failed for checkpoint ", path);
}

template <typename S>
Checkpoint<S> load_checkpoint(const std::string& path) {
    static_assert(sizeof(S) == 4 || sizeof(S) == 8, "unsupported scalar width");
    std::ifstream in(path, std::ios::binary);
    check(in.good(), "cannot open checkpoint ", path);
    std::uint32_t width = ckio::read_header(in, path);
    check(width == sizeof(S), "checkpoint ", path, " stores ", width,
          "-byte scalars but was loaded as ", sizeof(S), "-byte");
    Checkpoint<S> ck;
    ck.config_json = ckio::read_string(in, path);
    ck.epoch = ckio::read_u32(in, path);
    ck.has_adam = ckio::read_u32(in, path) != 0;
    ck.adam_step = ckio::read_u64(in, path);
    ck.params = detail::read_arrays<S>(in, path);
    ck.buffers = detail::read_arrays<S>(in, path);
    if (ck.has_adam) {
        ck.adam_m = detail::read_arrays<S>(in, path);
        ck.adam_v = detail::read_arrays<S>(in, path);
        check(ck.adam_m.size() == ck.params.size() && ck.adam_v.size() == ck.params.size(),
              "checkpoint ", path, ": optimizer slots do not match parameter count");
    }
    ckio::expect_eof(in, path);
    return ck;
}

/// Reads only the config snapshot, without touching tensor payloads.
/// Works for either scalar width.
std::string checkpoint_config_json(const std::string& path);

/// Scalar width (4 or 8) recorded in the file header.
std::uint32_t checkpoint_scalar_width(const std::string& path);

}  // namespace spikefuse
