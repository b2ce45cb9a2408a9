#include "xrf/checkpoint.h"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include "xrf/error.h"

namespace xrf {

namespace {

constexpr const char* kMagic = "XRF-CHECKPOINT 1";

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <class T>
void write_le(std::ostream& out, T value) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T read_le(std::istream& in, const std::filesystem::path& path) {
    unsigned char bytes[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw DataError("truncated checkpoint " + path.string());
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
}

struct Header {
    ModelSpec spec;
    std::uint64_t tensors = 0;
};

Header read_header(std::istream& in, const std::filesystem::path& path) {
    std::string line;
    if (!std::getline(in, line) || line != kMagic) throw DataError("not a checkpoint file: " + path.string());
    std::string text;
    while (std::getline(in, line) && !line.empty()) text += line + "\n";
    KeyValueConfig kv;
    try {
        kv = KeyValueConfig::parse(text, path.string());
        Header h;
        h.spec = ModelSpec::read(kv);
        if (!kv.contains("tensors")) throw DataError("checkpoint header lacks tensor count: " + path.string());
        h.tensors = kv.get_uint("tensors", 0);
        return h;
    } catch (const ConfigError& e) {
        throw DataError(std::string("corrupt checkpoint header: ") + e.what());
    }
}

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    KeyValueConfig kv;
    model.spec().write(kv);
    kv.set("tensors", std::to_string(model.parameters().size() + model.buffers().size()));
    out << kMagic << "\n" << kv.dump() << "\n";
    for (const auto* list : {&model.parameters(), &model.buffers()}) {
        for (const auto& [name, tensor] : *list) {
            write_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
            out.write(name.data(), static_cast<std::streamsize>(name.size()));
            write_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensor.rank()));
            for (auto e : tensor.shape()) write_le<std::uint64_t>(out, static_cast<std::uint64_t>(e));
            for (double v : tensor.data()) write_le<double>(out, v);
        }
    }
    if (!out) throw DataError("failed writing checkpoint " + path.string());
}

ModelSpec read_checkpoint_spec(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint " + path.string());
    return read_header(in, path).spec;
}

Model load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint " + path.string());
    const Header header = read_header(in, path);
    Model model = [&] {
        try {
            return build_model(header.spec);
        } catch (const ConfigError& e) {
            throw DataError(std::string("checkpoint spec is invalid: ") + e.what());
        }
    }();

    std::unordered_map<std::string, Tensor> slots;
    for (auto* list : {&model.parameters(), &model.buffers()}) {
        for (auto& [name, tensor] : *list) slots.emplace(name, tensor);
    }
    if (header.tensors != slots.size()) {
        throw DataError("checkpoint " + path.string() + " holds " + std::to_string(header.tensors) +
                        " tensors, model expects " + std::to_string(slots.size()));
    }
    for (std::uint64_t i = 0; i < header.tensors; ++i) {
        const auto name_len = read_le<std::uint32_t>(in, path);
        std::string name(name_len, '\0');
        if (!in.read(name.data(), name_len)) throw DataError("truncated checkpoint " + path.string());
        const auto rank = read_le<std::uint32_t>(in, path);
        Shape shape;
        for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(static_cast<std::int64_t>(read_le<std::uint64_t>(in, path)));
        auto it = slots.find(name);
        if (it == slots.end()) throw DataError("checkpoint tensor '" + name + "' has no slot in the model");
        if (it->second.shape() != shape) {
            throw DataError("checkpoint tensor '" + name + "' has shape " + shape_str(shape) + ", model expects " +
                            shape_str(it->second.shape()));
        }
        for (auto& v : it->second.mutable_data()) v = read_le<double>(in, path);
        slots.erase(it);
    }
    return model;
}

}  // namespace xrf
