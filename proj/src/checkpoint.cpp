#include "lrnmt/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace lrnmt {

namespace {

constexpr char kMagic[8] = {'L', 'R', 'N', 'M', 'T', 'C', 'P', '1'};

template <class V>
void write_pod(std::ofstream& out, V v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <class V>
V read_pod(std::ifstream& in, const std::string& path) {
    V v;
    in.read(reinterpret_cast<char*>(&v), sizeof(V));
    if (!in) throw DataError(path + ": truncated checkpoint");
    return v;
}

}  // namespace

void save_checkpoint_file(const std::string& path, const nlohmann::json& manifest,
                          const std::vector<std::pair<std::string, ArrayData>>& arrays) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write file: " + path);
    out.write(kMagic, sizeof(kMagic));
    const std::string m = manifest.dump();
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(m.size()));
    out.write(m.data(), static_cast<std::streamsize>(m.size()));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(arrays.size()));
    for (const auto& [name, array] : arrays) {
        write_pod<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(array.shape.size()));
        std::size_t numel = 1;
        for (std::size_t d : array.shape) {
            write_pod<std::uint64_t>(out, d);
            numel *= d;
        }
        if (numel != array.data.size())
            throw DataError("array '" + name + "' data does not match its shape");
        out.write(reinterpret_cast<const char*>(array.data.data()),
                  static_cast<std::streamsize>(array.data.size() * sizeof(float)));
    }
    if (!out) throw IoError("short write: " + path);
}

Checkpoint load_checkpoint_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw DataError(path + ": not a checkpoint file");
    Checkpoint ckpt;
    const auto manifest_len = read_pod<std::uint32_t>(in, path);
    std::string manifest(manifest_len, '\0');
    in.read(manifest.data(), manifest_len);
    if (!in) throw DataError(path + ": truncated manifest");
    ckpt.manifest = nlohmann::json::parse(manifest);
    const auto n_arrays = read_pod<std::uint32_t>(in, path);
    ckpt.arrays.reserve(n_arrays);
    for (std::uint32_t i = 0; i < n_arrays; ++i) {
        const auto name_len = read_pod<std::uint16_t>(in, path);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const auto ndim = read_pod<std::uint32_t>(in, path);
        ArrayData array;
        std::size_t numel = 1;
        for (std::uint32_t d = 0; d < ndim; ++d) {
            array.shape.push_back(static_cast<std::size_t>(read_pod<std::uint64_t>(in, path)));
            numel *= array.shape.back();
        }
        array.data.resize(numel);
        in.read(reinterpret_cast<char*>(array.data.data()),
                static_cast<std::streamsize>(numel * sizeof(float)));
        if (!in) throw DataError(path + ": truncated array '" + name + "'");
        ckpt.arrays.emplace_back(std::move(name), std::move(array));
    }
    return ckpt;
}

}  // namespace lrnmt
