#pragma once

// Checkpoint file layout (all integers little-endian):
//
//   bytes 0..7    magic "SIGANCK1"
//   bytes 8..15   u64 H, length of the JSON header
//   next H bytes  UTF-8 JSON header
//   remainder     float32 blobs, back to back
//
// The header holds free-form metadata plus
//   "tensors": [{"name": str, "shape": [n, c, h, w], "offset": bytes, "count": elements}, ...]
// where offsets are relative to the start of the blob section.
//
// Tensor name prefixes used by the trainer:
//   g/param/<name>, g/buffer/<name>    generator parameters and BN statistics
//   d/param/<name>                     discriminator parameters
//   g/adam_m/<name>, g/adam_v/<name>   generator Adam moments (same for d/)

#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sigan/nn/adam.hpp"
#include "sigan/nn/params.hpp"

namespace sigan {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Checkpoint {
    nlohmann::json header = nlohmann::json::object();
    std::vector<std::pair<std::string, nn::Tensor<float>>> tensors;

    [[nodiscard]] const nn::Tensor<float>* find(const std::string& name) const;
    void add(std::string name, nn::Tensor<float> t);
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
/// Throws CheckpointError on a bad magic, truncated file or malformed header.
Checkpoint read_checkpoint(const std::filesystem::path& path);
/// Reads the JSON header only.
nlohmann::json read_checkpoint_header(const std::filesystem::path& path);

void export_store(Checkpoint& ck, const nn::ParameterStore<float>& store, const std::string& prefix);
/// Copies every parameter and buffer of `store` from the checkpoint; a missing
/// or mis-shaped tensor is a CheckpointError.
void import_store(const Checkpoint& ck, nn::ParameterStore<float>& store, const std::string& prefix);

void export_adam(Checkpoint& ck, nn::Adam<float>& opt, const nn::ParameterStore<float>& store,
                 const std::string& prefix);
void import_adam(const Checkpoint& ck, nn::Adam<float>& opt, const nn::ParameterStore<float>& store,
                 const std::string& prefix);

}  // namespace sigan
