#include "core/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "core/error.hpp"

namespace gadan::checkpoint {

namespace {

constexpr char kMagic[8] = {'G', 'D', 'A', 'N', 'C', 'K', 'P', 'T'};

void write_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<char*>(&v), 4); }
void write_i64(std::ostream& os, int64_t v) { os.write(reinterpret_cast<char*>(&v), 8); }

void write_string(std::ostream& os, const std::string& s) {
    write_i64(os, static_cast<int64_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void write_tensor(std::ostream& os, const Tensor& t) {
    write_u32(os, static_cast<uint32_t>(t.rank()));
    for (int64_t d : t.shape()) write_i64(os, d);
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.numel() * sizeof(double)));
}

uint32_t read_u32(std::istream& is) {
    uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
}

int64_t read_i64(std::istream& is) {
    int64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 8);
    return v;
}

std::string read_string(std::istream& is) {
    const int64_t n = read_i64(is);
    if (n < 0 || n > (1ll << 32)) throw IoError("corrupt checkpoint: bad string length");
    std::string s(static_cast<size_t>(n), '\0');
    is.read(s.data(), n);
    return s;
}

Tensor read_tensor(std::istream& is) {
    const uint32_t rank = read_u32(is);
    if (rank > 8) throw IoError("corrupt checkpoint: bad tensor rank");
    std::vector<int64_t> shape(rank);
    for (uint32_t i = 0; i < rank; ++i) shape[i] = read_i64(is);
    Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(double)));
    return t;
}

void write_adam(std::ostream& os, const AdamStateBlob& a) {
    write_i64(os, a.t);
    write_u32(os, static_cast<uint32_t>(a.m.size()));
    for (const Tensor& t : a.m) write_tensor(os, t);
    for (const Tensor& t : a.v) write_tensor(os, t);
}

AdamStateBlob read_adam(std::istream& is) {
    AdamStateBlob a;
    a.t = read_i64(is);
    const uint32_t n = read_u32(is);
    a.m.reserve(n);
    a.v.reserve(n);
    for (uint32_t i = 0; i < n; ++i) a.m.push_back(read_tensor(is));
    for (uint32_t i = 0; i < n; ++i) a.v.push_back(read_tensor(is));
    return a;
}

}  // namespace

void save(const std::string& path, const CheckpointData& data) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open checkpoint for writing: " + path);
    os.write(kMagic, 8);
    write_u32(os, kFormatVersion);
    write_i64(os, data.step);
    write_string(os, data.config_text);
    write_string(os, data.rng_state);
    write_string(os, data.cursor_x);
    write_string(os, data.cursor_y);
    write_u32(os, static_cast<uint32_t>(data.weights.size()));
    for (const auto& [name, tensor] : data.weights) {
        write_string(os, name);
        write_tensor(os, tensor);
    }
    os.put(data.has_optimizer ? 1 : 0);
    if (data.has_optimizer) {
        write_adam(os, data.opt_g);
        write_adam(os, data.opt_d);
    }
    if (!os) throw IoError("failed writing checkpoint: " + path);
}

CheckpointData load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw IoError("not a checkpoint file: " + path);
    const uint32_t version = read_u32(is);
    if (version != kFormatVersion)
        throw VersionMismatch("checkpoint format version " + std::to_string(version) +
                              ", expected " + std::to_string(kFormatVersion));
    CheckpointData data;
    data.step = read_i64(is);
    data.config_text = read_string(is);
    data.rng_state = read_string(is);
    data.cursor_x = read_string(is);
    data.cursor_y = read_string(is);
    const uint32_t n = read_u32(is);
    data.weights.reserve(n);
    for (uint32_t i = 0; i < n; ++i) {
        std::string name = read_string(is);
        data.weights.emplace_back(std::move(name), read_tensor(is));
    }
    data.has_optimizer = is.get() == 1;
    if (data.has_optimizer) {
        data.opt_g = read_adam(is);
        data.opt_d = read_adam(is);
    }
    if (!is) throw IoError("corrupt checkpoint: " + path);
    return data;
}

}  // namespace gadan::checkpoint
