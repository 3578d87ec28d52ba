#pragma once

#include <cstdint>
#include <string>

#include "dj/dataset.hpp"
#include "dj/model.hpp"
#include "dj/testgen.hpp"

namespace dj {

struct TrainConfig {
    int epochs = 10;
    int batch_size = 32;
    double learning_rate = 0.1;
    double momentum = 0.0; // 0 = plain SGD
    std::uint64_t rng_seed = 0;

    void validate() const;
};

enum class FinetuneMode { LastLayer, AllLayers, RetrainAllLayers };

const char* finetune_mode_name(FinetuneMode mode);
FinetuneMode finetune_mode_from_name(const std::string& name);

enum class AdaptKind { BlackBox, WhiteBox };

// Default victim architecture: two conv blocks and a small dense head.
// Parameters are zero; call he_init before training.
Model desk_convnet(const std::vector<int>& input_shape, int class_count);

// He-uniform weight init, zero biases; deterministic in the seed.
void he_init(Model& model, std::uint64_t rng_seed);

// Fresh default model trained on the dataset. Deterministic in
// config.rng_seed; provenance recorded in metadata.
Model train(const TrainConfig& config, const Dataset& dataset);

// Train a caller-supplied initialized model (all layers). Used when the
// architecture is not the default one.
Model train_init(Model init, const TrainConfig& config, const Dataset& dataset);

// Finetuning attacks. The input model is never mutated.
//  - LastLayer: only the final parametric layer updates; everything below
//    stays bitwise identical.
//  - RetrainAllLayers: final parametric layer freshly initialized from
//    config.rng_seed, then all layers finetune.
Model finetune(const Model& model, const Dataset& dataset, FinetuneMode mode,
               const TrainConfig& config);

// Global magnitude pruning over dense/conv weight tensors (biases exempt):
// exactly floor(ratio * weight_count) weights zeroed, smallest |w| first,
// ties broken by parameter order; then finetuned on the dataset.
Model prune(const Model& model, double ratio, const TrainConfig& finetune_config,
            const Dataset& dataset);

// Surrogate trained from scratch against the victim's probability vectors on
// an auxiliary dataset. The victim is only ever queried through forward().
Model extract_knockoff(const Model& victim, const Dataset& auxiliary, const TrainConfig& config);

// Like extract_knockoff but reports a surrogate checkpoint after every epoch
// (same final model as extract_knockoff with the same config).
std::vector<Model> extract_knockoff_checkpoints(const Model& victim, const Dataset& auxiliary,
                                                const TrainConfig& config);

// One augmentation pass: for each pool member, a new point
// clip[0,1](x + lambda * sign(d victim_prob[label] / dx)).
std::vector<Tensor> jba_augment(const Model& victim, const std::vector<Tensor>& pool,
                                const std::vector<int>& labels, double lambda);

// Surrogate trained on a pool grown by per-round input augmentation along the
// sign of the victim's label-probability gradient; pool doubles each round.
Model extract_jba(const Model& victim, const Dataset& seeds, int rounds, double lambda,
                  const TrainConfig& config);

// Evasion finetuning against an exposed test suite: clean data plus the suite
// inputs, with a loss term rewarding disagreement with the victim on the
// suite. BlackBox uses the suite's stored labels; WhiteBox uses the victim's
// predicted labels.
Model adapt_attack(const Model& model, AdaptKind kind, const TestSuite& exposed_suite,
                   const Dataset& clean, const TrainConfig& config);

// Adversarial training: every batch is replaced by its PGD(epsilon, steps)
// version before the gradient step.
Model adv_train(const Model& model, const Dataset& dataset, double epsilon, int steps,
                const TrainConfig& config);

// Transfer to a new label space: final classification layer replaced (fresh
// init, width new_class_count), then all layers finetune on new_dataset.
Model vtl_transfer(const Model& model, const Dataset& new_dataset, int new_class_count,
                   const TrainConfig& config);

// Fraction of inputs on which the two models predict the same label.
double label_agreement(const Model& a, const Model& b, const Dataset& data);

} // namespace dj
