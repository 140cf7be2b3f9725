#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sigan/checkpoint.hpp"
#include "sigan/core.hpp"
#include "sigan/losses.hpp"
#include "sigan/model.hpp"
#include "sigan/nn/adam.hpp"

namespace sigan::train {

namespace fs = std::filesystem;

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TrainConfig {
    int epochs = 80;
    int batch_size = 1;
    double learning_rate = 1e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    LossWeights weights;
    /// Authoritative ablation switches; copied into model.ablation.
    AblationFlags flags;
    std::uint64_t seed = 0;
    /// Steps between checkpoints; 0 writes only the final one.
    int checkpoint_every = 0;
    /// Steps between progress lines on stderr; 0 disables them.
    int log_every = 100;
    /// Global gradient-norm bound; negative selects 10 below side 128 and off otherwise, 0 disables.
    double grad_clip = -1.0;
    bool discriminator_first = true;
    /// The discriminator steps on every k-th generator step; l_adv_d is still reported on the others.
    int discriminator_every = 1;
    /// Stop after this many steps in total; 0 means epochs x steps_per_epoch.
    std::int64_t max_steps = 0;
    /// Train on every sample instead of the train split.
    bool train_on_all = false;
    double train_fraction = 0.8;
    /// Seed of the frozen perceptual extractor.
    std::uint64_t perceptual_seed = 0x5eed;
    ModelConfig model;

    /// Throws ConfigError naming the violated constraint.
    void validate() const;
    [[nodiscard]] double effective_grad_clip() const;
    [[nodiscard]] ModelConfig effective_model() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
/// Missing keys keep their defaults; unknown keys are a ConfigError.
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Generator, discriminator, their optimizers and the step counter.
class Trainer {
public:
    explicit Trainer(const TrainConfig& config);

    /// One discriminator update (when adversarial loss is on) and one generator
    /// update. `partners[i]` is the paired sample of `batch[i]`; required when
    /// the pairing loss is on. Throws TrainingError on a non-finite term.
    losses::LossReport train_step(std::span<const SixTuple* const> batch,
                                  std::span<const SixTuple* const> partners = {});

    [[nodiscard]] std::int64_t step() const { return step_; }
    [[nodiscard]] const TrainConfig& config() const { return config_; }
    [[nodiscard]] model::Generator<float>& generator() { return *gen_; }
    [[nodiscard]] const model::Generator<float>& generator() const { return *gen_; }
    [[nodiscard]] model::Discriminator<float>& discriminator() { return *disc_; }
    [[nodiscard]] const losses::LossReport& rolling_average() const { return rolling_; }

    [[nodiscard]] Checkpoint to_checkpoint();
    void save(const fs::path& path);
    /// Restores parameters, statistics, optimizer moments and the step counter.
    /// The checkpoint's model config must match this trainer's.
    void load(const Checkpoint& ck);

private:
    TrainConfig config_;
    std::unique_ptr<model::Generator<float>> gen_;
    std::unique_ptr<model::Discriminator<float>> disc_;
    std::unique_ptr<nn::Adam<float>> g_opt_;
    std::unique_ptr<nn::Adam<float>> d_opt_;
    std::unique_ptr<losses::PerceptualExtractor<float>> extractor_;
    std::int64_t step_ = 0;
    losses::LossReport rolling_;
};

/// Loads the generator stored in a checkpoint (inference mode weights).
std::unique_ptr<model::Generator<float>> load_generator(const Checkpoint& ck);
ModelConfig checkpoint_model_config(const nlohmann::json& header);

struct FitOptions {
    /// Resume from this checkpoint; the loss log is cut back to its step.
    std::optional<fs::path> resume;
    /// Called after every step.
    std::function<void(std::int64_t, const losses::LossReport&)> on_step;
};

/// Trains on <data_dir> and writes into <out_dir>:
///   train_config.json, split.json, loss_log.jsonl (one record per step),
///   ckpt/step_XXXXXX.ckpt every checkpoint_every steps, final.ckpt.
/// Returns the final checkpoint path.
fs::path fit(const TrainConfig& config, const fs::path& data_dir, const fs::path& out_dir,
             const FitOptions& options = {});

struct AblationRow {
    std::string name;
    AblationFlags flags;
};

/// The ten configurations of the ablation table, Basic first and the full model last.
const std::vector<AblationRow>& ablation_rows();
std::vector<TrainConfig> ablation_matrix(const TrainConfig& base);
/// Accepts a 1-based index or a row name, case-insensitively; the full model
/// is also reachable as "full". nullopt for unknown rows.
std::optional<AblationRow> find_ablation_row(const std::string& key);

nlohmann::json loss_record(std::int64_t step, const losses::LossReport& r);

}  // namespace sigan::train
