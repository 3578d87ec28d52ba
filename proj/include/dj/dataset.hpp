#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dj/tensor.hpp"

namespace dj {

// Labeled classification data; every input component lies in [0, 1].
struct Dataset {
    std::vector<Tensor> inputs;
    std::vector<int> labels;
    std::string name;
    int class_count = 0;

    std::size_t size() const { return inputs.size(); }
    bool empty() const { return inputs.empty(); }
    std::vector<int> input_shape() const;
    void validate() const;
};

struct SplitPlan {
    double victim_fraction = 0.5;
    std::uint64_t rng_seed = 0;
};

// Deterministic synthetic data: one Gaussian-blob template per class placed
// on a circle, plus per-sample jitter and clipped pixel noise. Inputs are
// single-channel [1, side, side] images.
Dataset synth_blobs(int class_count, int per_class, int image_side, std::uint64_t rng_seed);

// IDX raw files (big-endian dims, magic 0x803 images / 0x801 labels);
// pixels scaled to [0, 1] by /255.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Stratified split: per-class proportions preserved within one sample,
// halves disjoint and exhaustive, deterministic in plan.rng_seed.
std::pair<Dataset, Dataset> split(const Dataset& dataset, const SplitPlan& plan);

// Stratified deterministic subset with ~fraction of each class.
Dataset stratified_slice(const Dataset& dataset, double fraction, std::uint64_t rng_seed);

// Fraction of samples the model labels correctly.
struct Model;
double accuracy(const Model& model, const Dataset& data);

// Dataset cache file (same JSON conventions as model files). `config`, when
// given, is echoed into the file; loaders ignore it.
std::string dataset_to_json(const Dataset& data,
                            const std::map<std::string, std::string>* config = nullptr);
Dataset dataset_from_json(const std::string& text, const std::string& origin = "dataset");
void save_dataset(const Dataset& data, const std::string& path,
                  const std::map<std::string, std::string>* config = nullptr);
Dataset load_dataset(const std::string& path);

} // namespace dj
