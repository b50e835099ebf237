#include "fslpn/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace fslpn {

namespace {

constexpr char kMagic[8] = {'F', 'S', 'L', 'P', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kPrecisionF32 = 0;

void put_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }

std::uint32_t get_u32(std::istream& is, const char* what) {
    std::uint32_t v;
    if (!is.read(reinterpret_cast<char*>(&v), 4))
        throw_data(std::string("truncated checkpoint: ") + what);
    return v;
}
std::uint64_t get_u64(std::istream& is, const char* what) {
    std::uint64_t v;
    if (!is.read(reinterpret_cast<char*>(&v), 8))
        throw_data(std::string("truncated checkpoint: ") + what);
    return v;
}

}  // namespace

void save_checkpoint(const ParameterSet<float>& params, const std::string& config_echo,
                     const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw_data("cannot write checkpoint: " + path);
    os.write(kMagic, 8);
    put_u32(os, kVersion);
    os.put(static_cast<char>(kPrecisionF32));
    put_u32(os, static_cast<std::uint32_t>(config_echo.size()));
    os.write(config_echo.data(), static_cast<std::streamsize>(config_echo.size()));
    put_u32(os, static_cast<std::uint32_t>(params.size()));
    for (const auto& [name, p] : params) {
        put_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(os, static_cast<std::uint32_t>(p.t.rank()));
        for (std::size_t e : p.t.shape) put_u64(os, static_cast<std::uint64_t>(e));
        os.write(reinterpret_cast<const char*>(p.t.v.data()),
                 static_cast<std::streamsize>(p.t.size() * sizeof(float)));
    }
    if (!os) throw_data("short write while saving checkpoint: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw_data("cannot open checkpoint: " + path);
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
        throw_data("bad checkpoint magic in " + path + " (expected FSLPCKPT)");
    const std::uint32_t version = get_u32(is, "version");
    if (version != kVersion)
        throw_data("unsupported checkpoint version " + std::to_string(version));
    char precision;
    if (!is.get(precision)) throw_data("truncated checkpoint: precision flag");
    if (precision != kPrecisionF32)
        throw_data("unsupported checkpoint precision flag " + std::to_string(precision));

    LoadedCheckpoint out;
    const std::uint32_t config_len = get_u32(is, "config echo length");
    out.config_echo.resize(config_len);
    if (config_len > 0 && !is.read(out.config_echo.data(), config_len))
        throw_data("truncated checkpoint: config echo");

    const std::uint32_t count = get_u32(is, "tensor count");
    for (std::uint32_t t = 0; t < count; ++t) {
        const std::uint32_t name_len = get_u32(is, "tensor name length");
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len)) throw_data("truncated checkpoint: tensor name");
        const std::uint32_t rank = get_u32(is, "tensor rank");
        std::vector<std::size_t> shape(rank);
        for (auto& e : shape) e = static_cast<std::size_t>(get_u64(is, "tensor extent"));
        Tensor<float> tensor(shape);
        if (!is.read(reinterpret_cast<char*>(tensor.v.data()),
                     static_cast<std::streamsize>(tensor.size() * sizeof(float))))
            throw_data("truncated checkpoint: values of tensor " + name);
        const bool trainable = name.find(".running_") == std::string::npos;
        out.params.add(name, partition_from_name(name), std::move(tensor), trainable);
    }
    return out;
}

}  // namespace fslpn
