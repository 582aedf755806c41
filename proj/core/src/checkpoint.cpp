#include "handcontact/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <memory>

#include "handcontact/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint layout assumes little-endian doubles");

namespace hc::io {

namespace {

constexpr char kMagic[4] = {'H', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kMaxName = 4096;
constexpr std::uint32_t kMaxRank = 8;

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void put(std::FILE* f, const void* p, std::size_t n, const std::string& path) {
    if (std::fwrite(p, 1, n, f) != n) throw ParseError(path + ": short write");
}

void get(std::FILE* f, void* p, std::size_t n, const std::string& path) {
    if (std::fread(p, 1, n, f) != n) throw ParseError(path + ": truncated checkpoint");
}

void put_u32(std::FILE* f, std::uint32_t v, const std::string& path) { put(f, &v, 4, path); }
void put_u64(std::FILE* f, std::uint64_t v, const std::string& path) { put(f, &v, 8, path); }

std::uint32_t get_u32(std::FILE* f, const std::string& path) {
    std::uint32_t v;
    get(f, &v, 4, path);
    return v;
}

std::uint64_t get_u64(std::FILE* f, const std::string& path) {
    std::uint64_t v;
    get(f, &v, 8, path);
    return v;
}

void put_name(std::FILE* f, const std::string& name, const std::string& path) {
    if (name.empty() || name.size() > kMaxName)
        throw InvalidInputError("checkpoint: bad entry name '" + name + "'");
    put_u32(f, static_cast<std::uint32_t>(name.size()), path);
    put(f, name.data(), name.size(), path);
}

std::string get_name(std::FILE* f, const std::string& path) {
    const std::uint32_t len = get_u32(f, path);
    if (len == 0 || len > kMaxName) throw ParseError(path + ": bad entry name length");
    std::string name(len, '\0');
    get(f, name.data(), len, path);
    return name;
}

}  // namespace

const Tensor* Checkpoint::find_tensor(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return &t;
    return nullptr;
}

bool Checkpoint::has_meta(const std::string& name) const {
    for (const auto& [n, v] : meta)
        if (n == name) return true;
    return false;
}

std::uint64_t Checkpoint::meta_or(const std::string& name, std::uint64_t fallback) const {
    for (const auto& [n, v] : meta)
        if (n == name) return v;
    return fallback;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw ParseError(path + ": cannot open for write");
    put(f.get(), kMagic, 4, path);
    put_u32(f.get(), kVersion, path);
    put_u32(f.get(), static_cast<std::uint32_t>(ck.tensors.size()), path);
    put_u32(f.get(), static_cast<std::uint32_t>(ck.meta.size()), path);
    for (const auto& [name, t] : ck.tensors) {
        put_name(f.get(), name, path);
        put_u32(f.get(), static_cast<std::uint32_t>(t.rank()), path);
        for (int d = 0; d < t.rank(); ++d) put_u32(f.get(), static_cast<std::uint32_t>(t.dim(d)), path);
        put(f.get(), t.data(), sizeof(double) * static_cast<std::size_t>(t.numel()), path);
    }
    for (const auto& [name, v] : ck.meta) {
        put_name(f.get(), name, path);
        put_u64(f.get(), v, path);
    }
    if (std::fflush(f.get()) != 0) throw ParseError(path + ": flush failed");
}

Checkpoint load_checkpoint(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw ParseError(path + ": cannot open");
    char magic[4];
    get(f.get(), magic, 4, path);
    if (std::memcmp(magic, kMagic, 4) != 0) throw ParseError(path + ": not a checkpoint file");
    const std::uint32_t version = get_u32(f.get(), path);
    if (version != kVersion)
        throw ParseError(path + ": unsupported checkpoint version " + std::to_string(version));
    const std::uint32_t ntensors = get_u32(f.get(), path);
    const std::uint32_t nmeta = get_u32(f.get(), path);
    if (ntensors > 1u << 20 || nmeta > 1u << 20) throw ParseError(path + ": implausible entry count");

    Checkpoint ck;
    ck.tensors.reserve(ntensors);
    ck.meta.reserve(nmeta);
    for (std::uint32_t i = 0; i < ntensors; ++i) {
        std::string name = get_name(f.get(), path);
        const std::uint32_t rank = get_u32(f.get(), path);
        if (rank == 0 || rank > kMaxRank) throw ParseError(path + ": bad tensor rank");
        std::vector<int> shape(rank);
        std::size_t numel = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            const std::uint32_t dim = get_u32(f.get(), path);
            if (dim == 0 || dim > 1u << 24) throw ParseError(path + ": bad tensor dimension");
            shape[d] = static_cast<int>(dim);
            numel *= dim;
        }
        if (numel > 1u << 28) throw ParseError(path + ": implausible tensor size");
        Tensor t(shape, 0.0);
        get(f.get(), t.data(), sizeof(double) * numel, path);
        if (!t.all_finite()) throw ParseError(path + ": non-finite tensor '" + name + "'");
        ck.tensors.emplace_back(std::move(name), std::move(t));
    }
    for (std::uint32_t i = 0; i < nmeta; ++i) {
        std::string name = get_name(f.get(), path);
        const std::uint64_t v = get_u64(f.get(), path);
        ck.meta.emplace_back(std::move(name), v);
    }
    // anything left over means the writer and reader disagree
    if (std::fgetc(f.get()) != EOF) throw ParseError(path + ": trailing bytes");
    return ck;
}

}  // namespace hc::io
