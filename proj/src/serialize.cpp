#include "deskml/serialize.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

#include <fmt/format.h>
#include <json.hpp>

namespace deskml {

namespace {

constexpr char kMagic[8] = {'D', 'E', 'S', 'K', 'M', 'L', 'P', '1'};

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
}

std::uint64_t get_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    }
    return v;
}

}  // namespace

void save_parameters(const std::filesystem::path& path, const ParamList& params) {
    nlohmann::json index;
    index["format"] = "deskml-params";
    index["version"] = 1;
    index["tensors"] = nlohmann::json::array();
    std::string data;
    for (const NamedParam& p : params) {
        const Tensor& t = *p.tensor;
        index["tensors"].push_back(
            {{"name", p.name}, {"shape", t.shape()}, {"offset", data.size()}, {"count", t.numel()}});
        for (double v : t.data()) {
            put_u64(data, std::bit_cast<std::uint64_t>(v));
        }
    }
    const std::string header = index.dump();
    std::string blob(kMagic, sizeof(kMagic));
    put_u64(blob, header.size());
    blob += header;
    blob += data;
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot open " + path.string() + " for writing");
    }
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) {
        throw Error("failed writing " + path.string());
    }
}

std::vector<NamedTensor> load_parameters(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open parameter file " + path.string());
    }
    std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
    if (blob.size() < 16 || std::memcmp(blob.data(), kMagic, sizeof(kMagic)) != 0) {
        throw Error(path.string() + " is not a deskml parameter container");
    }
    const std::uint64_t header_len = get_u64(bytes + 8);
    if (16 + header_len > blob.size()) {
        throw Error("truncated parameter index in " + path.string());
    }
    const auto index = nlohmann::json::parse(blob.substr(16, header_len));
    const std::size_t data_start = 16 + header_len;
    std::vector<NamedTensor> out;
    for (const auto& entry : index.at("tensors")) {
        Shape shape = entry.at("shape").get<Shape>();
        const std::size_t offset = entry.at("offset").get<std::size_t>();
        const std::size_t count = entry.at("count").get<std::size_t>();
        if (count != shape_numel(shape) || data_start + offset + count * 8 > blob.size()) {
            throw Error(fmt::format("corrupt entry '{}' in {}", entry.at("name").get<std::string>(), path.string()));
        }
        std::vector<double> values(count);
        for (std::size_t i = 0; i < count; ++i) {
            values[i] = std::bit_cast<double>(get_u64(bytes + data_start + offset + 8 * i));
        }
        out.push_back({entry.at("name").get<std::string>(), Tensor(std::move(shape), std::move(values))});
    }
    return out;
}

void restore_parameters(const std::filesystem::path& path, const ParamList& params) {
    auto loaded = load_parameters(path);
    std::map<std::string, Tensor*> by_name;
    for (auto& t : loaded) {
        by_name[t.name] = &t.tensor;
    }
    if (by_name.size() != params.size()) {
        throw Error(fmt::format("{} holds {} tensors, model expects {}", path.string(), by_name.size(), params.size()));
    }
    for (const NamedParam& p : params) {
        auto it = by_name.find(p.name);
        if (it == by_name.end()) {
            throw Error(fmt::format("parameter '{}' missing from {}", p.name, path.string()));
        }
        if (it->second->shape() != p.tensor->shape()) {
            throw DimensionError(fmt::format("parameter '{}' has shape {} in file, {} in model", p.name,
                                             shape_str(it->second->shape()), shape_str(p.tensor->shape())));
        }
        *p.tensor = *it->second;
    }
}

}  // namespace deskml
