#pragma once

#include <map>
#include <string>
#include <vector>

#include "dj/tensor.hpp"

namespace dj {

enum class LayerKind { Dense, Conv2d, Relu, Flatten, MaxPool2d, Softmax };

const char* layer_kind_name(LayerKind kind);
LayerKind layer_kind_from_name(const std::string& name);

// One layer of the stack. Shape parameters are only meaningful for the kinds
// that use them; weights/bias are populated for dense and conv2d.
struct LayerSpec {
    LayerKind kind = LayerKind::Relu;

    // dense
    int in_width = 0;
    int out_width = 0;

    // conv2d: weights [out_c, in_c, kh, kw], valid padding
    int in_channels = 0;
    int out_channels = 0;
    int kernel_h = 0, kernel_w = 0;

    // conv2d and maxpool2d
    int stride_h = 1, stride_w = 1;

    // maxpool2d
    int pool_h = 0, pool_w = 0;

    Tensor weights;
    Tensor bias;

    bool has_params() const { return kind == LayerKind::Dense || kind == LayerKind::Conv2d; }

    static LayerSpec dense(int in_width, int out_width);
    static LayerSpec conv2d(int in_channels, int out_channels, int kernel_h, int kernel_w,
                            int stride_h = 1, int stride_w = 1);
    static LayerSpec relu();
    static LayerSpec flatten();
    static LayerSpec maxpool2d(int pool_h, int pool_w, int stride_h, int stride_w);
    static LayerSpec softmax();

    // Shape parameters (not weights) equal; used for architecture-prefix checks.
    bool same_arch(const LayerSpec& o) const;
};

// Feed-forward classifier: an ordered layer stack ending in softmax.
// Immutable once built/loaded; forward paths are pure and thread-safe.
struct Model {
    std::vector<LayerSpec> layers;
    int class_count = 0;
    std::vector<int> input_shape;
    std::map<std::string, std::string> metadata;

    std::size_t layer_count() const { return layers.size(); }

    // Walks the shape chain, throws ShapeError on the first inconsistency.
    void validate() const;

    // Output shape of layers[l] given the declared input shape.
    std::vector<int> layer_output_shape(std::size_t l) const;
};

// Per-layer outputs for one input. outputs[0] is the input itself,
// outputs[l + 1] the post-activation output of layers[l].
struct ForwardTrace {
    std::vector<Tensor> outputs;
    const Tensor& final_output() const { return outputs.back(); }
    // Output tensor of model layer l.
    const Tensor& layer(std::size_t l) const { return outputs[l + 1]; }
};

Tensor forward(const Model& model, const Tensor& x);
ForwardTrace forward_trace(const Model& model, const Tensor& x);
// Trace stopping after layers[last_layer]; outputs has last_layer + 2 entries.
ForwardTrace forward_trace_to(const Model& model, const Tensor& x, std::size_t last_layer);
// Argmax of forward(model, x); ties broken by lowest class index.
int predict_label(const Model& model, const Tensor& x);

// Scalar objective for input gradients.
struct Objective {
    enum class Kind { CrossEntropy, NeuronOutput, OutputComponent };
    Kind kind = Kind::CrossEntropy;
    int label = -1;     // CrossEntropy
    int layer = -1;     // NeuronOutput: model layer index
    int neuron = -1;    // NeuronOutput: flat index into that layer's output
    int component = -1; // OutputComponent: class index

    static Objective cross_entropy(int label);
    static Objective neuron_output(int layer, int neuron);
    static Objective output_component(int component);
};

// Exact reverse-mode gradient of the objective w.r.t. x.
Tensor grad_input(const Model& model, const Tensor& x, const Objective& objective);

// Parameter gradients aligned with model.layers; empty tensors for layers
// without parameters.
struct ParamGrads {
    std::vector<Tensor> weights;
    std::vector<Tensor> bias;
};

// Gradients of mean cross-entropy over the batch.
ParamGrads grad_params(const Model& model, const std::vector<Tensor>& inputs,
                       const std::vector<int>& labels);

// Mean cross-entropy over the batch, computed from logits (log-sum-exp stable).
double batch_loss(const Model& model, const std::vector<Tensor>& inputs,
                  const std::vector<int>& labels);

// Backprop dy seeded at the output of layers[from_layer] down to the input.
// grads, when non-null, receives accumulated parameter gradients. Building
// block for training loops; grad_input/grad_params cover the common cases.
Tensor backprop(const Model& model, const ForwardTrace& trace, std::size_t from_layer,
                Tensor dy, ParamGrads* grads);

// Canonical content hash: SHA-256 of the serialized model document.
std::string model_hash(const Model& model);

} // namespace dj
