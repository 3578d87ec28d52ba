#include "dj/forge.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "dj/error.hpp"
#include "dj/jsonio.hpp"
#include "dj/rng.hpp"

namespace dj {

void TrainConfig::validate() const {
    if (epochs < 0) throw ArgumentError("train config: epochs must be >= 0");
    if (batch_size < 1) throw ArgumentError("train config: batch_size must be >= 1");
    if (learning_rate <= 0.0) throw ArgumentError("train config: learning_rate must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) throw ArgumentError("train config: momentum must be in [0,1)");
}

const char* finetune_mode_name(FinetuneMode mode) {
    switch (mode) {
    case FinetuneMode::LastLayer: return "ft-ll";
    case FinetuneMode::AllLayers: return "ft-al";
    case FinetuneMode::RetrainAllLayers: return "rt-al";
    }
    throw ArgumentError("unknown finetune mode");
}

FinetuneMode finetune_mode_from_name(const std::string& name) {
    if (name == "ft-ll") return FinetuneMode::LastLayer;
    if (name == "ft-al") return FinetuneMode::AllLayers;
    if (name == "rt-al") return FinetuneMode::RetrainAllLayers;
    throw ArgumentError("unknown finetune mode '" + name + "'");
}

Model desk_convnet(const std::vector<int>& input_shape, int class_count) {
    if (input_shape.size() != 3)
        throw ShapeError("desk_convnet: input shape must be [channels, h, w]");
    Model m;
    m.input_shape = input_shape;
    m.class_count = class_count;
    m.layers.push_back(LayerSpec::conv2d(input_shape[0], 6, 3, 3));
    m.layers.push_back(LayerSpec::relu());
    m.layers.push_back(LayerSpec::maxpool2d(2, 2, 2, 2));
    m.layers.push_back(LayerSpec::conv2d(6, 12, 3, 3));
    m.layers.push_back(LayerSpec::relu());
    m.layers.push_back(LayerSpec::flatten());
    std::size_t flat = shape_numel(m.layer_output_shape(5));
    m.layers.push_back(LayerSpec::dense(static_cast<int>(flat), 32));
    m.layers.push_back(LayerSpec::relu());
    m.layers.push_back(LayerSpec::dense(32, class_count));
    m.layers.push_back(LayerSpec::softmax());
    m.validate();
    return m;
}

namespace {

void he_init_layer(LayerSpec& layer, Rng& rng) {
    if (!layer.has_params()) return;
    int fan_in = layer.kind == LayerKind::Dense
                     ? layer.in_width
                     : layer.in_channels * layer.kernel_h * layer.kernel_w;
    double limit = std::sqrt(6.0 / fan_in);
    for (double& w : layer.weights.data) w = rng.uniform(-limit, limit);
    for (double& b : layer.bias.data) b = 0.05;
}

// One training example: hard or soft cross-entropy target, optionally minus
// cross-entropy to a disagreement label (evasion finetuning).
struct TrainSample {
    const Tensor* input = nullptr;
    int label = -1;
    const Tensor* soft = nullptr;
    int disagree_label = -1;
};

using BatchTransform = std::function<Tensor(const Model&, const Tensor&, int label)>;

// Minibatch SGD(+momentum). `trainable`, when non-null, masks which layers
// update. Throws TrainingError naming the epoch if the objective goes
// non-finite.
void sgd_fit(Model& model, const std::vector<TrainSample>& samples, const TrainConfig& cfg,
             Rng& rng, const std::vector<bool>* trainable, const BatchTransform* transform) {
    if (samples.empty()) throw ArgumentError("training: empty dataset");
    const std::size_t L = model.layer_count();
    std::vector<Tensor> vel_w(L), vel_b(L);
    for (std::size_t l = 0; l < L; ++l) {
        if (model.layers[l].has_params()) {
            vel_w[l] = Tensor::zeros(model.layers[l].weights.shape);
            vel_b[l] = Tensor::zeros(model.layers[l].bias.shape);
        }
    }

    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    auto run_epoch = [&] {
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            std::size_t end = std::min(order.size(), start + cfg.batch_size);
            double inv_n = 1.0 / static_cast<double>(end - start);
            ParamGrads grads;
            grads.weights.resize(L);
            grads.bias.resize(L);
            for (std::size_t l = 0; l < L; ++l) {
                if (model.layers[l].has_params()) {
                    grads.weights[l] = Tensor::zeros(model.layers[l].weights.shape);
                    grads.bias[l] = Tensor::zeros(model.layers[l].bias.shape);
                }
            }
            for (std::size_t bi = start; bi < end; ++bi) {
                const TrainSample& s = samples[order[bi]];
                Tensor x = transform ? (*transform)(model, *s.input, s.label) : *s.input;
                ForwardTrace tr = forward_trace(model, x);
                const Tensor& p = tr.final_output();
                const Tensor& z = tr.outputs[L - 1]; // logits
                double zmax = *std::max_element(z.data.begin(), z.data.end());
                double lse = 0.0;
                for (double v : z.data) lse += std::exp(v - zmax);
                lse = zmax + std::log(lse);

                Tensor g = p;
                double loss;
                if (s.soft) {
                    double dot = 0.0;
                    for (std::size_t i = 0; i < g.numel(); ++i) {
                        g[i] -= (*s.soft)[i];
                        dot += (*s.soft)[i] * z[i];
                    }
                    loss = lse - dot;
                } else {
                    g[static_cast<std::size_t>(s.label)] -= 1.0;
                    loss = lse - z[static_cast<std::size_t>(s.label)];
                }
                if (s.disagree_label >= 0) {
                    for (std::size_t i = 0; i < g.numel(); ++i) g[i] -= p[i];
                    g[static_cast<std::size_t>(s.disagree_label)] += 1.0;
                    loss -= lse - z[static_cast<std::size_t>(s.disagree_label)];
                }
                epoch_loss += loss;
                for (double& v : g.data) v *= inv_n;
                if (L >= 2) backprop(model, tr, L - 2, std::move(g), &grads);
            }
            for (std::size_t l = 0; l < L; ++l) {
                if (!model.layers[l].has_params()) continue;
                if (trainable && !(*trainable)[l]) continue;
                Tensor& w = model.layers[l].weights;
                Tensor& b = model.layers[l].bias;
                for (std::size_t i = 0; i < w.numel(); ++i) {
                    vel_w[l][i] = cfg.momentum * vel_w[l][i] + grads.weights[l][i];
                    w[i] -= cfg.learning_rate * vel_w[l][i];
                }
                for (std::size_t i = 0; i < b.numel(); ++i) {
                    vel_b[l][i] = cfg.momentum * vel_b[l][i] + grads.bias[l][i];
                    b[i] -= cfg.learning_rate * vel_b[l][i];
                }
            }
        }
        return epoch_loss;
    };

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss;
        try {
            epoch_loss = run_epoch();
        } catch (const ArgumentError&) {
            // overflowed activations surface as non-finite logits mid-epoch
            epoch_loss = std::numeric_limits<double>::quiet_NaN();
        }
        if (!std::isfinite(epoch_loss))
            throw TrainingError("loss diverged at epoch " + std::to_string(epoch));
    }
}

std::vector<TrainSample> hard_samples(const Dataset& data) {
    std::vector<TrainSample> out(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        out[i].input = &data.inputs[i];
        out[i].label = data.labels[i];
    }
    return out;
}

void set_common_metadata(Model& m, const char* kind, const TrainConfig& cfg) {
    m.metadata["derivation_kind"] = kind;
    m.metadata["rng_seed"] = std::to_string(cfg.rng_seed);
    m.metadata["epochs"] = std::to_string(cfg.epochs);
    m.metadata["batch_size"] = std::to_string(cfg.batch_size);
    m.metadata["learning_rate"] = format_real(cfg.learning_rate);
    m.metadata["momentum"] = format_real(cfg.momentum);
}

std::size_t last_parametric_layer(const Model& model) {
    for (std::size_t l = model.layer_count(); l-- > 0;)
        if (model.layers[l].has_params()) return l;
    throw ArgumentError("model has no parametric layer");
}

void check_label_space(const Model& model, const Dataset& data, const char* what) {
    if (data.empty()) throw ArgumentError(std::string(what) + ": empty dataset");
    if (data.class_count != model.class_count)
        throw ArgumentError(std::string(what) + ": dataset label space does not match model");
    if (data.input_shape() != model.input_shape)
        throw ShapeError(std::string(what) + ": dataset input shape does not match model");
}

} // namespace

void he_init(Model& model, std::uint64_t rng_seed) {
    Rng rng(rng_seed);
    for (LayerSpec& layer : model.layers) he_init_layer(layer, rng);
}

Model train(const TrainConfig& config, const Dataset& dataset) {
    if (dataset.empty()) throw ArgumentError("train: empty dataset");
    Model model = desk_convnet(dataset.input_shape(), dataset.class_count);
    he_init(model, config.rng_seed);
    return train_init(std::move(model), config, dataset);
}

Model train_init(Model init, const TrainConfig& config, const Dataset& dataset) {
    config.validate();
    check_label_space(init, dataset, "train");
    Rng rng(config.rng_seed + 0x9e3779b97f4a7c15ull); // distinct stream from init
    sgd_fit(init, hard_samples(dataset), config, rng, nullptr, nullptr);
    set_common_metadata(init, "trained", config);
    init.metadata["dataset"] = dataset.name;
    init.metadata["train_size"] = std::to_string(dataset.size());
    return init;
}

Model finetune(const Model& model, const Dataset& dataset, FinetuneMode mode,
               const TrainConfig& config) {
    config.validate();
    check_label_space(model, dataset, "finetune");
    Model out = model;
    std::string parent = model_hash(model);
    Rng rng(config.rng_seed);

    std::vector<bool> trainable(out.layer_count(), true);
    if (mode == FinetuneMode::LastLayer) {
        trainable.assign(out.layer_count(), false);
        trainable[last_parametric_layer(out)] = true;
    } else if (mode == FinetuneMode::RetrainAllLayers) {
        he_init_layer(out.layers[last_parametric_layer(out)], rng);
    }
    sgd_fit(out, hard_samples(dataset), config, rng, &trainable, nullptr);

    out.metadata.clear();
    set_common_metadata(out, finetune_mode_name(mode), config);
    out.metadata["parent_model_hash"] = parent;
    return out;
}

Model prune(const Model& model, double ratio, const TrainConfig& finetune_config,
            const Dataset& dataset) {
    if (!(ratio >= 0.0 && ratio < 1.0)) throw ArgumentError("prune: ratio must lie in [0,1)");
    finetune_config.validate();
    Model out = model;
    std::string parent = model_hash(model);

    struct WeightRef {
        double mag;
        std::size_t layer, idx;
    };
    std::vector<WeightRef> refs;
    for (std::size_t l = 0; l < out.layer_count(); ++l) {
        if (!out.layers[l].has_params()) continue;
        for (std::size_t i = 0; i < out.layers[l].weights.numel(); ++i)
            refs.push_back({std::abs(out.layers[l].weights[i]), l, i});
    }
    std::size_t n_zero = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(refs.size())));
    std::sort(refs.begin(), refs.end(), [](const WeightRef& a, const WeightRef& b) {
        if (a.mag != b.mag) return a.mag < b.mag;
        if (a.layer != b.layer) return a.layer < b.layer;
        return a.idx < b.idx;
    });
    for (std::size_t i = 0; i < n_zero; ++i)
        out.layers[refs[i].layer].weights[refs[i].idx] = 0.0;

    if (finetune_config.epochs > 0) {
        check_label_space(out, dataset, "prune");
        Rng rng(finetune_config.rng_seed);
        sgd_fit(out, hard_samples(dataset), finetune_config, rng, nullptr, nullptr);
    }

    out.metadata.clear();
    set_common_metadata(out, "prune", finetune_config);
    out.metadata["parent_model_hash"] = parent;
    out.metadata["prune_ratio"] = format_real(ratio);
    out.metadata["zeroed_weights"] = std::to_string(n_zero);
    return out;
}

namespace {

Model fresh_surrogate(const Model& victim, std::uint64_t seed) {
    Model s = victim;
    s.metadata.clear();
    he_init(s, seed);
    return s;
}

} // namespace

Model extract_knockoff(const Model& victim, const Dataset& auxiliary, const TrainConfig& config) {
    std::vector<Model> checkpoints = extract_knockoff_checkpoints(victim, auxiliary, config);
    return std::move(checkpoints.back());
}

std::vector<Model> extract_knockoff_checkpoints(const Model& victim, const Dataset& auxiliary,
                                                const TrainConfig& config) {
    config.validate();
    if (auxiliary.empty()) throw ArgumentError("extract_knockoff: empty auxiliary dataset");
    if (auxiliary.input_shape() != victim.input_shape)
        throw ShapeError("extract_knockoff: auxiliary input shape does not match victim");
    std::string parent = model_hash(victim);

    // black-box queries: probability vectors only
    std::vector<Tensor> soft(auxiliary.size());
    for (std::size_t i = 0; i < auxiliary.size(); ++i)
        soft[i] = forward(victim, auxiliary.inputs[i]);

    std::vector<TrainSample> samples(auxiliary.size());
    for (std::size_t i = 0; i < auxiliary.size(); ++i) {
        samples[i].input = &auxiliary.inputs[i];
        samples[i].label = 0; // unused with soft targets
        samples[i].soft = &soft[i];
    }

    Model surrogate = fresh_surrogate(victim, config.rng_seed);
    Rng rng(config.rng_seed + 0x9e3779b97f4a7c15ull);
    std::vector<Model> checkpoints;
    TrainConfig one_epoch = config;
    one_epoch.epochs = 1;
    auto finalize = [&](Model m, int epochs_done) {
        m.metadata.clear();
        set_common_metadata(m, "knockoff", config);
        m.metadata["epochs"] = std::to_string(epochs_done);
        m.metadata["parent_model_hash"] = parent;
        m.metadata["query_count"] =
            std::to_string(auxiliary.size() * static_cast<std::size_t>(epochs_done));
        return m;
    };
    if (config.epochs == 0) {
        checkpoints.push_back(finalize(std::move(surrogate), 0));
        return checkpoints;
    }
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        try {
            sgd_fit(surrogate, samples, one_epoch, rng, nullptr, nullptr);
        } catch (const TrainingError&) {
            throw TrainingError("loss diverged at epoch " + std::to_string(epoch - 1));
        }
        checkpoints.push_back(finalize(surrogate, epoch));
    }
    return checkpoints;
}

std::vector<Tensor> jba_augment(const Model& victim, const std::vector<Tensor>& pool,
                                const std::vector<int>& labels, double lambda) {
    if (pool.size() != labels.size()) throw ArgumentError("jba_augment: pool/labels length mismatch");
    std::vector<Tensor> out;
    out.reserve(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
        Tensor g = grad_input(victim, pool[i], Objective::output_component(labels[i]));
        Tensor x = pool[i];
        for (std::size_t k = 0; k < x.numel(); ++k) {
            double s = g[k] > 0.0 ? 1.0 : (g[k] < 0.0 ? -1.0 : 0.0);
            x[k] = std::clamp(x[k] + lambda * s, 0.0, 1.0);
        }
        out.push_back(std::move(x));
    }
    return out;
}

Model extract_jba(const Model& victim, const Dataset& seeds, int rounds, double lambda,
                  const TrainConfig& config) {
    config.validate();
    if (rounds < 1) throw ArgumentError("extract_jba: rounds must be >= 1");
    if (lambda < 0.0) throw ArgumentError("extract_jba: lambda must be >= 0");
    if (seeds.empty()) throw ArgumentError("extract_jba: empty seed set");
    if (seeds.input_shape() != victim.input_shape)
        throw ShapeError("extract_jba: seed input shape does not match victim");
    std::string parent = model_hash(victim);

    std::vector<Tensor> pool = seeds.inputs;
    std::vector<int> labels(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) labels[i] = predict_label(victim, pool[i]);

    Model surrogate;
    for (int round = 0; round < rounds; ++round) {
        std::vector<Tensor> fresh = jba_augment(victim, pool, labels, lambda);
        for (Tensor& x : fresh) {
            pool.push_back(std::move(x));
            labels.push_back(predict_label(victim, pool.back()));
        }
        Dataset round_data;
        round_data.name = "jba-pool";
        round_data.class_count = victim.class_count;
        round_data.inputs = pool;
        round_data.labels = labels;
        surrogate = fresh_surrogate(victim, config.rng_seed);
        Rng rng(config.rng_seed + 0x9e3779b97f4a7c15ull);
        sgd_fit(surrogate, hard_samples(round_data), config, rng, nullptr, nullptr);
    }

    surrogate.metadata.clear();
    set_common_metadata(surrogate, "jba", config);
    surrogate.metadata["parent_model_hash"] = parent;
    surrogate.metadata["rounds"] = std::to_string(rounds);
    surrogate.metadata["lambda"] = format_real(lambda);
    surrogate.metadata["pool_size"] = std::to_string(pool.size());
    return surrogate;
}

Model adapt_attack(const Model& model, AdaptKind kind, const TestSuite& exposed_suite,
                   const Dataset& clean, const TrainConfig& config) {
    config.validate();
    check_label_space(model, clean, "adapt_attack");
    const char* kind_name = kind == AdaptKind::BlackBox ? "adapt-b" : "adapt-w";
    if (kind == AdaptKind::BlackBox && exposed_suite.mode != "blackbox")
        throw ArgumentError("adapt_attack: adapt-b needs a black-box suite");
    if (kind == AdaptKind::WhiteBox && exposed_suite.mode != "whitebox")
        throw ArgumentError("adapt_attack: adapt-w needs a white-box suite");
    Model out = model;
    std::string parent = model_hash(model);

    // The stolen copy starts as the victim, so the victim's predictions on
    // the suite are the input model's.
    std::vector<int> victim_labels(exposed_suite.size());
    for (std::size_t i = 0; i < exposed_suite.size(); ++i)
        victim_labels[i] = predict_label(model, exposed_suite.cases[i].input);

    std::vector<TrainSample> samples = hard_samples(clean);
    for (std::size_t i = 0; i < exposed_suite.size(); ++i) {
        TrainSample s;
        s.input = &exposed_suite.cases[i].input;
        s.label = kind == AdaptKind::BlackBox ? exposed_suite.cases[i].label : victim_labels[i];
        if (s.label < 0 || s.label >= model.class_count)
            throw ArgumentError("adapt_attack: suite case has no usable label");
        s.disagree_label = victim_labels[i];
        samples.push_back(s);
    }

    Rng rng(config.rng_seed);
    sgd_fit(out, samples, config, rng, nullptr, nullptr);

    out.metadata.clear();
    set_common_metadata(out, kind_name, config);
    out.metadata["parent_model_hash"] = parent;
    out.metadata["exposed_cases"] = std::to_string(exposed_suite.size());
    return out;
}

Model adv_train(const Model& model, const Dataset& dataset, double epsilon, int steps,
                const TrainConfig& config) {
    config.validate();
    if (epsilon < 0.0) throw ArgumentError("adv_train: epsilon must be >= 0");
    if (steps < 1) throw ArgumentError("adv_train: steps must be >= 1");
    check_label_space(model, dataset, "adv_train");
    Model out = model;
    std::string parent = model_hash(model);

    double step_size = default_pgd_step(epsilon, steps);
    BatchTransform transform = [epsilon, steps, step_size](const Model& m, const Tensor& x,
                                                           int label) {
        return pgd_perturb(m, x, label, epsilon, steps, step_size);
    };
    Rng rng(config.rng_seed);
    sgd_fit(out, hard_samples(dataset), config, rng, nullptr, &transform);

    out.metadata.clear();
    set_common_metadata(out, "adv-train", config);
    out.metadata["parent_model_hash"] = parent;
    out.metadata["epsilon"] = format_real(epsilon);
    out.metadata["steps"] = std::to_string(steps);
    return out;
}

Model vtl_transfer(const Model& model, const Dataset& new_dataset, int new_class_count,
                   const TrainConfig& config) {
    config.validate();
    if (new_class_count < 2) throw ArgumentError("vtl_transfer: new_class_count must be >= 2");
    if (new_dataset.empty()) throw ArgumentError("vtl_transfer: empty dataset");
    if (new_dataset.class_count != new_class_count)
        throw ArgumentError("vtl_transfer: dataset label space does not match new_class_count");
    if (new_dataset.input_shape() != model.input_shape)
        throw ShapeError("vtl_transfer: dataset input shape does not match model");
    Model out = model;
    std::string parent = model_hash(model);

    std::size_t head = last_parametric_layer(out);
    if (out.layers[head].kind != LayerKind::Dense)
        throw ArgumentError("vtl_transfer: final parametric layer is not dense");
    Rng rng(config.rng_seed);
    LayerSpec new_head = LayerSpec::dense(out.layers[head].in_width, new_class_count);
    he_init_layer(new_head, rng);
    out.layers[head] = std::move(new_head);
    out.class_count = new_class_count;
    out.validate();

    sgd_fit(out, hard_samples(new_dataset), config, rng, nullptr, nullptr);

    out.metadata.clear();
    set_common_metadata(out, "vtl", config);
    out.metadata["parent_model_hash"] = parent;
    out.metadata["new_class_count"] = std::to_string(new_class_count);
    return out;
}

double label_agreement(const Model& a, const Model& b, const Dataset& data) {
    if (data.empty()) throw ArgumentError("label_agreement: empty dataset");
    std::size_t hits = 0;
    for (const Tensor& x : data.inputs)
        if (predict_label(a, x) == predict_label(b, x)) ++hits;
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

} // namespace dj
