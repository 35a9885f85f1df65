#include "spikefuse/checkpoint.hpp"

#include <cstring>

namespace spikefuse {
namespace ckio {

void write_bytes(std::ostream& out, const void* p, std::size_t n, const std::string& path) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    check(out.good(), "write failed for checkpoint ", path);
}

void read_bytes(std::istream& in, void* p, std::size_t n, const std::string& path) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    check(static_cast<std::size_t>(in.gcount()) == n && !in.fail(), "checkpoint ", path,
          " is truncated or unreadable");
}

void write_u32(std::ostream& out, std::uint32_t v, const std::string& path) {
    write_bytes(out, &v, sizeof(v), path);
}

std::uint32_t read_u32(std::istream& in, const std::string& path) {
    std::uint32_t v = 0;
    read_bytes(in, &v, sizeof(v), path);
    return v;
}

void write_u64(std::ostream& out, std::uint64_t v, const std::string& path) {
    write_bytes(out, &v, sizeof(v), path);
}

std::uint64_t read_u64(std::istream& in, const std::string& path) {
    std::uint64_t v = 0;
    read_bytes(in, &v, sizeof(v), path);
    return v;
}

void write_string(std::ostream& out, const std::string& s, const std::string& path) {
    write_u64(out, s.size(), path);
    if (!s.empty()) write_bytes(out, s.data(), s.size(), path);
}

std::string read_string(std::istream& in, const std::string& path) {
    std::uint64_t n = read_u64(in, path);
    check(n <= 1u << 26, "checkpoint ", path, ": implausible string length ", n);
    std::string s(n, '\0');
    if (n) read_bytes(in, s.data(), n, path);
    return s;
}

void write_header(std::ostream& out, std::uint32_t scalar_width, const std::string& path) {
    write_bytes(out, kCheckpointMagic, sizeof(kCheckpointMagic), path);
    write_u32(out, kCheckpointVersion, path);
    write_u32(out, scalar_width, path);
}

std::uint32_t read_header(std::istream& in, const std::string& path) {
    char magic[sizeof(kCheckpointMagic)] = {};
    read_bytes(in, magic, sizeof(magic), path);
    check(std::memcmp(magic, kCheckpointMagic, sizeof(magic)) == 0, path,
          " is not a checkpoint file (bad magic)");
    std::uint32_t version = read_u32(in, path);
    check(version == kCheckpointVersion, "checkpoint ", path, " has format version ",
          version, "; this build reads version ", kCheckpointVersion);
    std::uint32_t width = read_u32(in, path);
    check(width == 4 || width == 8, "checkpoint ", path, ": unsupported scalar width ",
          width);
    return width;
}

void expect_eof(std::istream& in, const std::string& path) {
    char c;
    in.read(&c, 1);
    check(in.gcount() == 0, "checkpoint ", path, " has trailing bytes");
}

}  // namespace ckio

std::string checkpoint_config_json(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    check(in.good(), "cannot open checkpoint ", path);
    ckio::read_header(in, path);
    return ckio::read_string(in, path);
}

std::uint32_t checkpoint_scalar_width(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    check(in.good(), "cannot open checkpoint ", path);
    return ckio::read_header(in, path);
}

}  // namespace spikefuse
