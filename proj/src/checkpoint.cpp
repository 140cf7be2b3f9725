#include "sigan/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace sigan {

static_assert(std::endian::native == std::endian::little, "checkpoint blobs are stored little-endian");

namespace {

constexpr char kMagic[8] = {'S', 'I', 'G', 'A', 'N', 'C', 'K', '1'};

struct Loaded {
    nlohmann::json header;
    std::vector<char> blob;
};

Loaded load(const std::filesystem::path& path, bool with_blob) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
    char magic[8];
    std::uint64_t len = 0;
    in.read(magic, 8);
    in.read(reinterpret_cast<char*>(&len), 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0) throw CheckpointError("not a checkpoint: " + path.string());
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in) throw CheckpointError("truncated checkpoint header: " + path.string());
    Loaded l;
    try {
        l.header = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("malformed checkpoint header in " + path.string() + ": " + e.what());
    }
    if (with_blob) l.blob.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    return l;
}

}  // namespace

const nn::Tensor<float>* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : tensors) {
        if (n == name) return &t;
    }
    return nullptr;
}

void Checkpoint::add(std::string name, nn::Tensor<float> t) { tensors.emplace_back(std::move(name), std::move(t)); }

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    nlohmann::json header = ck.header;
    nlohmann::json index = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : ck.tensors) {
        const auto& s = t.shape();
        index.push_back({{"name", name}, {"shape", {s.n, s.c, s.h, s.w}}, {"offset", offset}, {"count", t.numel()}});
        offset += t.numel() * sizeof(float);
    }
    header["tensors"] = index;
    const std::string text = header.dump();
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
        const std::uint64_t len = text.size();
        out.write(kMagic, 8);
        out.write(reinterpret_cast<const char*>(&len), 8);
        out.write(text.data(), static_cast<std::streamsize>(len));
        for (const auto& entry : ck.tensors) {
            const auto& t = entry.second;
            out.write(reinterpret_cast<const char*>(t.raw()), static_cast<std::streamsize>(t.numel() * sizeof(float)));
        }
        if (!out) throw CheckpointError("short write to " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

nlohmann::json read_checkpoint_header(const std::filesystem::path& path) { return load(path, false).header; }

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    Loaded l = load(path, true);
    Checkpoint ck;
    try {
        for (const auto& e : l.header.at("tensors")) {
            const auto dims = e.at("shape").get<std::vector<int>>();
            const auto offset = e.at("offset").get<std::uint64_t>();
            const auto count = e.at("count").get<std::uint64_t>();
            if (dims.size() != 4) throw CheckpointError("tensor shape must have 4 dims");
            nn::Shape shape{dims[0], dims[1], dims[2], dims[3]};
            if (shape.numel() != count || offset + count * sizeof(float) > l.blob.size()) {
                throw CheckpointError("tensor " + e.at("name").get<std::string>() + " exceeds checkpoint " +
                                      path.string());
            }
            nn::Tensor<float> t(shape);
            std::memcpy(t.raw(), l.blob.data() + offset, count * sizeof(float));
            ck.add(e.at("name").get<std::string>(), std::move(t));
        }
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError("malformed tensor index in " + path.string() + ": " + e.what());
    }
    l.header.erase("tensors");
    ck.header = std::move(l.header);
    return ck;
}

void export_store(Checkpoint& ck, const nn::ParameterStore<float>& store, const std::string& prefix) {
    for (const auto& p : store.params()) ck.add(prefix + "param/" + p.name, p.var.value());
    for (const auto& b : store.buffers()) ck.add(prefix + "buffer/" + b.name, *b.tensor);
}

namespace {

void copy_into(const Checkpoint& ck, const std::string& name, nn::Tensor<float>& dst) {
    const nn::Tensor<float>* src = ck.find(name);
    if (!src) throw CheckpointError("checkpoint lacks tensor " + name);
    if (!(src->shape() == dst.shape())) {
        throw CheckpointError("tensor " + name + " has shape " + src->shape().str() + ", expected " +
                              dst.shape().str());
    }
    dst = *src;
}

}  // namespace

void import_store(const Checkpoint& ck, nn::ParameterStore<float>& store, const std::string& prefix) {
    for (const auto& p : store.params()) {
        nn::Var<float> v = p.var;
        copy_into(ck, prefix + "param/" + p.name, v.mutable_value());
    }
    for (const auto& b : store.buffers()) copy_into(ck, prefix + "buffer/" + b.name, *b.tensor);
}

void export_adam(Checkpoint& ck, nn::Adam<float>& opt, const nn::ParameterStore<float>& store,
                 const std::string& prefix) {
    const auto& params = store.params();
    for (std::size_t k = 0; k < params.size(); ++k) {
        ck.add(prefix + "adam_m/" + params[k].name, opt.first_moments()[k]);
        ck.add(prefix + "adam_v/" + params[k].name, opt.second_moments()[k]);
    }
}

void import_adam(const Checkpoint& ck, nn::Adam<float>& opt, const nn::ParameterStore<float>& store,
                 const std::string& prefix) {
    const auto& params = store.params();
    for (std::size_t k = 0; k < params.size(); ++k) {
        copy_into(ck, prefix + "adam_m/" + params[k].name, opt.first_moments()[k]);
        copy_into(ck, prefix + "adam_v/" + params[k].name, opt.second_moments()[k]);
    }
}

}  // namespace sigan
