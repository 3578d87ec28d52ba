#include "dj/model.hpp"

#include <algorithm>
#include <cmath>

#include "dj/error.hpp"
#include "dj/model_io.hpp"
#include "dj/sha256.hpp"

namespace dj {

const char* layer_kind_name(LayerKind kind) {
    switch (kind) {
    case LayerKind::Dense: return "dense";
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::Relu: return "relu";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::MaxPool2d: return "maxpool2d";
    case LayerKind::Softmax: return "softmax";
    }
    throw ArgumentError("unknown layer kind");
}

LayerKind layer_kind_from_name(const std::string& name) {
    if (name == "dense") return LayerKind::Dense;
    if (name == "conv2d") return LayerKind::Conv2d;
    if (name == "relu") return LayerKind::Relu;
    if (name == "flatten") return LayerKind::Flatten;
    if (name == "maxpool2d") return LayerKind::MaxPool2d;
    if (name == "softmax") return LayerKind::Softmax;
    throw FormatError("unknown layer kind '" + name + "'");
}

LayerSpec LayerSpec::dense(int in_width, int out_width) {
    if (in_width <= 0 || out_width <= 0) throw ShapeError("dense: widths must be positive");
    LayerSpec s;
    s.kind = LayerKind::Dense;
    s.in_width = in_width;
    s.out_width = out_width;
    s.weights = Tensor::zeros({out_width, in_width});
    s.bias = Tensor::zeros({out_width});
    return s;
}

LayerSpec LayerSpec::conv2d(int in_channels, int out_channels, int kernel_h, int kernel_w,
                            int stride_h, int stride_w) {
    if (in_channels <= 0 || out_channels <= 0 || kernel_h <= 0 || kernel_w <= 0 ||
        stride_h <= 0 || stride_w <= 0)
        throw ShapeError("conv2d: shape parameters must be positive");
    LayerSpec s;
    s.kind = LayerKind::Conv2d;
    s.in_channels = in_channels;
    s.out_channels = out_channels;
    s.kernel_h = kernel_h;
    s.kernel_w = kernel_w;
    s.stride_h = stride_h;
    s.stride_w = stride_w;
    s.weights = Tensor::zeros({out_channels, in_channels, kernel_h, kernel_w});
    s.bias = Tensor::zeros({out_channels});
    return s;
}

LayerSpec LayerSpec::relu() {
    LayerSpec s;
    s.kind = LayerKind::Relu;
    return s;
}

LayerSpec LayerSpec::flatten() {
    LayerSpec s;
    s.kind = LayerKind::Flatten;
    return s;
}

LayerSpec LayerSpec::maxpool2d(int pool_h, int pool_w, int stride_h, int stride_w) {
    if (pool_h <= 0 || pool_w <= 0 || stride_h <= 0 || stride_w <= 0)
        throw ShapeError("maxpool2d: shape parameters must be positive");
    LayerSpec s;
    s.kind = LayerKind::MaxPool2d;
    s.pool_h = pool_h;
    s.pool_w = pool_w;
    s.stride_h = stride_h;
    s.stride_w = stride_w;
    return s;
}

LayerSpec LayerSpec::softmax() {
    LayerSpec s;
    s.kind = LayerKind::Softmax;
    return s;
}

bool LayerSpec::same_arch(const LayerSpec& o) const {
    return kind == o.kind && in_width == o.in_width && out_width == o.out_width &&
           in_channels == o.in_channels && out_channels == o.out_channels &&
           kernel_h == o.kernel_h && kernel_w == o.kernel_w && stride_h == o.stride_h &&
           stride_w == o.stride_w && pool_h == o.pool_h && pool_w == o.pool_w;
}

namespace {

std::vector<int> next_shape(const LayerSpec& spec, const std::vector<int>& in, std::size_t l) {
    const std::string at = "layer " + std::to_string(l) + " (" + layer_kind_name(spec.kind) + ")";
    switch (spec.kind) {
    case LayerKind::Dense:
        if (in.size() != 1 || in[0] != spec.in_width)
            throw ShapeError(at + ": expects 1-D input of width " + std::to_string(spec.in_width));
        return {spec.out_width};
    case LayerKind::Conv2d: {
        if (in.size() != 3 || in[0] != spec.in_channels)
            throw ShapeError(at + ": expects [channels, h, w] input with " +
                             std::to_string(spec.in_channels) + " channels");
        int oh = (in[1] - spec.kernel_h) / spec.stride_h + 1;
        int ow = (in[2] - spec.kernel_w) / spec.stride_w + 1;
        if (in[1] < spec.kernel_h || in[2] < spec.kernel_w)
            throw ShapeError(at + ": kernel larger than input");
        return {spec.out_channels, oh, ow};
    }
    case LayerKind::Relu:
        return in;
    case LayerKind::Flatten:
        return {static_cast<int>(shape_numel(in))};
    case LayerKind::MaxPool2d: {
        if (in.size() != 3) throw ShapeError(at + ": expects [channels, h, w] input");
        if (in[1] < spec.pool_h || in[2] < spec.pool_w)
            throw ShapeError(at + ": pool window larger than input");
        int oh = (in[1] - spec.pool_h) / spec.stride_h + 1;
        int ow = (in[2] - spec.pool_w) / spec.stride_w + 1;
        return {in[0], oh, ow};
    }
    case LayerKind::Softmax:
        if (in.size() != 1) throw ShapeError(at + ": expects a 1-D input");
        return in;
    }
    throw ArgumentError("unknown layer kind");
}

void check_params(const LayerSpec& spec, std::size_t l) {
    const std::string at = "layer " + std::to_string(l);
    if (spec.kind == LayerKind::Dense) {
        std::size_t w = static_cast<std::size_t>(spec.out_width) * spec.in_width;
        if (spec.weights.numel() != w)
            throw ShapeError(at + ": dense weights must have " + std::to_string(w) + " entries");
        if (spec.bias.numel() != static_cast<std::size_t>(spec.out_width))
            throw ShapeError(at + ": dense bias must have " + std::to_string(spec.out_width) + " entries");
    } else if (spec.kind == LayerKind::Conv2d) {
        std::size_t w = static_cast<std::size_t>(spec.out_channels) * spec.in_channels *
                        spec.kernel_h * spec.kernel_w;
        if (spec.weights.numel() != w)
            throw ShapeError(at + ": conv2d weights must have " + std::to_string(w) + " entries");
        if (spec.bias.numel() != static_cast<std::size_t>(spec.out_channels))
            throw ShapeError(at + ": conv2d bias must have " + std::to_string(spec.out_channels) + " entries");
    }
    if (spec.has_params() && (!spec.weights.all_finite() || !spec.bias.all_finite()))
        throw ArgumentError(at + ": non-finite parameters");
}

Tensor apply_layer(const LayerSpec& spec, const Tensor& x) {
    switch (spec.kind) {
    case LayerKind::Dense: {
        Tensor y = Tensor::zeros({spec.out_width});
        const int in = spec.in_width, out = spec.out_width;
        for (int o = 0; o < out; ++o) {
            double acc = spec.bias[o];
            const double* w = &spec.weights.data[static_cast<std::size_t>(o) * in];
            for (int i = 0; i < in; ++i) acc += w[i] * x[i];
            y[o] = acc;
        }
        return y;
    }
    case LayerKind::Conv2d: {
        const int ic = spec.in_channels, oc = spec.out_channels;
        const int h = x.shape[1], w = x.shape[2];
        const int kh = spec.kernel_h, kw = spec.kernel_w;
        const int sh = spec.stride_h, sw = spec.stride_w;
        const int oh = (h - kh) / sh + 1, ow = (w - kw) / sw + 1;
        Tensor y = Tensor::zeros({oc, oh, ow});
        for (int o = 0; o < oc; ++o) {
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    double acc = spec.bias[o];
                    for (int i = 0; i < ic; ++i) {
                        for (int ky = 0; ky < kh; ++ky) {
                            const double* wr = &spec.weights.data[((static_cast<std::size_t>(o) * ic + i) * kh + ky) * kw];
                            const double* xr = &x.data[(static_cast<std::size_t>(i) * h + oy * sh + ky) * w + ox * sw];
                            for (int kx = 0; kx < kw; ++kx) acc += wr[kx] * xr[kx];
                        }
                    }
                    y.data[(static_cast<std::size_t>(o) * oh + oy) * ow + ox] = acc;
                }
            }
        }
        return y;
    }
    case LayerKind::Relu: {
        Tensor y = x;
        for (double& v : y.data) v = v > 0.0 ? v : 0.0;
        return y;
    }
    case LayerKind::Flatten: {
        Tensor y;
        y.shape = {static_cast<int>(x.numel())};
        y.data = x.data;
        return y;
    }
    case LayerKind::MaxPool2d: {
        const int c = x.shape[0], h = x.shape[1], w = x.shape[2];
        const int ph = spec.pool_h, pw = spec.pool_w;
        const int sh = spec.stride_h, sw = spec.stride_w;
        const int oh = (h - ph) / sh + 1, ow = (w - pw) / sw + 1;
        Tensor y = Tensor::zeros({c, oh, ow});
        for (int i = 0; i < c; ++i) {
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    double best = x.data[(static_cast<std::size_t>(i) * h + oy * sh) * w + ox * sw];
                    for (int py = 0; py < ph; ++py)
                        for (int px = 0; px < pw; ++px) {
                            double v = x.data[(static_cast<std::size_t>(i) * h + oy * sh + py) * w + ox * sw + px];
                            if (v > best) best = v;
                        }
                    y.data[(static_cast<std::size_t>(i) * oh + oy) * ow + ox] = best;
                }
            }
        }
        return y;
    }
    case LayerKind::Softmax: {
        Tensor y = x;
        double m = *std::max_element(y.data.begin(), y.data.end());
        if (!std::isfinite(m)) throw ArgumentError("softmax: non-finite logits");
        double sum = 0.0;
        for (double& v : y.data) {
            v = std::exp(v - m);
            sum += v;
        }
        for (double& v : y.data) v /= sum;
        return y;
    }
    }
    throw ArgumentError("unknown layer kind");
}

// dy through layers[l]; x_in and y_out come from the trace. dw/db, when
// non-null, receive the accumulated parameter gradients.
Tensor backward_layer(const LayerSpec& spec, const Tensor& x_in, const Tensor& y_out,
                      const Tensor& dy, Tensor* dw, Tensor* db) {
    switch (spec.kind) {
    case LayerKind::Dense: {
        Tensor dx = Tensor::zeros(x_in.shape);
        const int in = spec.in_width, out = spec.out_width;
        for (int o = 0; o < out; ++o) {
            const double g = dy[o];
            if (g == 0.0) continue;
            const double* w = &spec.weights.data[static_cast<std::size_t>(o) * in];
            for (int i = 0; i < in; ++i) dx[i] += w[i] * g;
            if (dw) {
                double* dwr = &dw->data[static_cast<std::size_t>(o) * in];
                for (int i = 0; i < in; ++i) dwr[i] += g * x_in[i];
            }
            if (db) db->data[o] += g;
        }
        return dx;
    }
    case LayerKind::Conv2d: {
        Tensor dx = Tensor::zeros(x_in.shape);
        const int ic = spec.in_channels, oc = spec.out_channels;
        const int h = x_in.shape[1], w = x_in.shape[2];
        const int kh = spec.kernel_h, kw = spec.kernel_w;
        const int sh = spec.stride_h, sw = spec.stride_w;
        const int oh = y_out.shape[1], ow = y_out.shape[2];
        for (int o = 0; o < oc; ++o) {
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    const double g = dy.data[(static_cast<std::size_t>(o) * oh + oy) * ow + ox];
                    if (g == 0.0) continue;
                    if (db) db->data[o] += g;
                    for (int i = 0; i < ic; ++i) {
                        for (int ky = 0; ky < kh; ++ky) {
                            const std::size_t wbase = ((static_cast<std::size_t>(o) * ic + i) * kh + ky) * kw;
                            const std::size_t xbase = (static_cast<std::size_t>(i) * h + oy * sh + ky) * w + ox * sw;
                            for (int kx = 0; kx < kw; ++kx) {
                                dx.data[xbase + kx] += spec.weights.data[wbase + kx] * g;
                                if (dw) dw->data[wbase + kx] += x_in.data[xbase + kx] * g;
                            }
                        }
                    }
                }
            }
        }
        return dx;
    }
    case LayerKind::Relu: {
        Tensor dx = dy;
        for (std::size_t i = 0; i < dx.numel(); ++i)
            if (x_in[i] <= 0.0) dx[i] = 0.0;
        return dx;
    }
    case LayerKind::Flatten: {
        Tensor dx = dy;
        dx.shape = x_in.shape;
        return dx;
    }
    case LayerKind::MaxPool2d: {
        // Gradient routed to the first maximum in row-major window order.
        Tensor dx = Tensor::zeros(x_in.shape);
        const int c = x_in.shape[0], h = x_in.shape[1], w = x_in.shape[2];
        const int ph = spec.pool_h, pw = spec.pool_w;
        const int sh = spec.stride_h, sw = spec.stride_w;
        const int oh = y_out.shape[1], ow = y_out.shape[2];
        for (int i = 0; i < c; ++i) {
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    const double g = dy.data[(static_cast<std::size_t>(i) * oh + oy) * ow + ox];
                    if (g == 0.0) continue;
                    std::size_t best_idx = 0;
                    double best = -1e300;
                    for (int py = 0; py < ph; ++py)
                        for (int px = 0; px < pw; ++px) {
                            std::size_t idx = (static_cast<std::size_t>(i) * h + oy * sh + py) * w + ox * sw + px;
                            if (x_in.data[idx] > best) {
                                best = x_in.data[idx];
                                best_idx = idx;
                            }
                        }
                    dx.data[best_idx] += g;
                }
            }
        }
        return dx;
    }
    case LayerKind::Softmax: {
        const Tensor& p = y_out;
        double dot = 0.0;
        for (std::size_t i = 0; i < p.numel(); ++i) dot += p[i] * dy[i];
        Tensor dx = Tensor::zeros(x_in.shape);
        for (std::size_t i = 0; i < p.numel(); ++i) dx[i] = p[i] * (dy[i] - dot);
        return dx;
    }
    }
    throw ArgumentError("unknown layer kind");
}

void check_input(const Model& model, const Tensor& x) {
    if (x.shape != model.input_shape) throw ShapeError("input shape does not match model input shape");
}

} // namespace

void Model::validate() const {
    if (layers.empty()) throw ShapeError("model has no layers");
    if (class_count <= 0) throw ShapeError("class_count must be positive");
    if (input_shape.empty()) throw ShapeError("model input_shape is empty");
    std::vector<int> shape = input_shape;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        if (layers[l].kind == LayerKind::Softmax && l + 1 != layers.size())
            throw ShapeError("softmax allowed only as the final layer");
        check_params(layers[l], l);
        shape = next_shape(layers[l], shape, l);
    }
    if (layers.back().kind != LayerKind::Softmax)
        throw ShapeError("final layer must be softmax");
    if (shape.size() != 1 || shape[0] != class_count)
        throw ShapeError("final layer output length does not equal class_count");
}

std::vector<int> Model::layer_output_shape(std::size_t l) const {
    if (l >= layers.size()) throw IndexError("layer index out of range");
    std::vector<int> shape = input_shape;
    for (std::size_t i = 0; i <= l; ++i) shape = next_shape(layers[i], shape, i);
    return shape;
}

ForwardTrace forward_trace_to(const Model& model, const Tensor& x, std::size_t last_layer) {
    check_input(model, x);
    if (last_layer >= model.layers.size()) throw IndexError("layer index out of range");
    ForwardTrace trace;
    trace.outputs.reserve(last_layer + 2);
    trace.outputs.push_back(x);
    for (std::size_t l = 0; l <= last_layer; ++l)
        trace.outputs.push_back(apply_layer(model.layers[l], trace.outputs.back()));
    return trace;
}

ForwardTrace forward_trace(const Model& model, const Tensor& x) {
    return forward_trace_to(model, x, model.layers.size() - 1);
}

Tensor forward(const Model& model, const Tensor& x) {
    check_input(model, x);
    Tensor cur = x;
    for (const LayerSpec& layer : model.layers) cur = apply_layer(layer, cur);
    return cur;
}

int predict_label(const Model& model, const Tensor& x) {
    Tensor p = forward(model, x);
    int best = 0;
    for (std::size_t i = 1; i < p.numel(); ++i)
        if (p[i] > p[best]) best = static_cast<int>(i);
    return best;
}

Objective Objective::cross_entropy(int label) {
    Objective o;
    o.kind = Kind::CrossEntropy;
    o.label = label;
    return o;
}

Objective Objective::neuron_output(int layer, int neuron) {
    Objective o;
    o.kind = Kind::NeuronOutput;
    o.layer = layer;
    o.neuron = neuron;
    return o;
}

Objective Objective::output_component(int component) {
    Objective o;
    o.kind = Kind::OutputComponent;
    o.component = component;
    return o;
}

Tensor backprop(const Model& model, const ForwardTrace& trace, std::size_t from_layer,
                Tensor dy, ParamGrads* grads) {
    for (std::size_t l = from_layer + 1; l-- > 0;) {
        Tensor* dw = nullptr;
        Tensor* db = nullptr;
        if (grads && model.layers[l].has_params()) {
            dw = &grads->weights[l];
            db = &grads->bias[l];
        }
        dy = backward_layer(model.layers[l], trace.outputs[l], trace.outputs[l + 1], dy, dw, db);
    }
    return dy;
}

namespace {

// Gradient seed at the logits (softmax input) for cross-entropy to `label`,
// i.e. p - one_hot(label). Requires the final layer to be softmax.
Tensor ce_logit_grad(const Model& model, const Tensor& probs, int label) {
    if (label < 0 || label >= model.class_count)
        throw IndexError("label out of range for cross-entropy objective");
    Tensor g = probs;
    g[static_cast<std::size_t>(label)] -= 1.0;
    return g;
}

} // namespace

Tensor grad_input(const Model& model, const Tensor& x, const Objective& objective) {
    const std::size_t L = model.layers.size();
    switch (objective.kind) {
    case Objective::Kind::NeuronOutput: {
        if (objective.layer < 0 || static_cast<std::size_t>(objective.layer) >= L)
            throw IndexError("neuron objective: layer index out of range");
        ForwardTrace trace = forward_trace_to(model, x, static_cast<std::size_t>(objective.layer));
        const Tensor& out = trace.outputs.back();
        if (objective.neuron < 0 || static_cast<std::size_t>(objective.neuron) >= out.numel())
            throw IndexError("neuron objective: neuron index out of range");
        Tensor dy = Tensor::zeros(out.shape);
        dy[static_cast<std::size_t>(objective.neuron)] = 1.0;
        return backprop(model, trace, static_cast<std::size_t>(objective.layer), std::move(dy), nullptr);
    }
    case Objective::Kind::OutputComponent: {
        if (objective.component < 0 || objective.component >= model.class_count)
            throw IndexError("output-component objective: class index out of range");
        ForwardTrace trace = forward_trace(model, x);
        Tensor dy = Tensor::zeros(trace.final_output().shape);
        dy[static_cast<std::size_t>(objective.component)] = 1.0;
        return backprop(model, trace, L - 1, std::move(dy), nullptr);
    }
    case Objective::Kind::CrossEntropy: {
        ForwardTrace trace = forward_trace(model, x);
        Tensor g = ce_logit_grad(model, trace.final_output(), objective.label);
        if (L == 1) return g; // softmax-only model: input is the logits
        return backprop(model, trace, L - 2, std::move(g), nullptr);
    }
    }
    throw ArgumentError("unknown objective kind");
}

ParamGrads grad_params(const Model& model, const std::vector<Tensor>& inputs,
                       const std::vector<int>& labels) {
    if (inputs.empty()) throw ArgumentError("grad_params: empty batch");
    if (inputs.size() != labels.size())
        throw ArgumentError("grad_params: inputs and labels differ in length");
    const std::size_t L = model.layers.size();
    ParamGrads grads;
    grads.weights.resize(L);
    grads.bias.resize(L);
    for (std::size_t l = 0; l < L; ++l) {
        if (model.layers[l].has_params()) {
            grads.weights[l] = Tensor::zeros(model.layers[l].weights.shape);
            grads.bias[l] = Tensor::zeros(model.layers[l].bias.shape);
        }
    }
    const double inv_n = 1.0 / static_cast<double>(inputs.size());
    for (std::size_t s = 0; s < inputs.size(); ++s) {
        ForwardTrace trace = forward_trace(model, inputs[s]);
        Tensor g = ce_logit_grad(model, trace.final_output(), labels[s]);
        for (double& v : g.data) v *= inv_n;
        if (L == 1) continue; // no parameters below a bare softmax
        backprop(model, trace, L - 2, std::move(g), &grads);
    }
    return grads;
}

double batch_loss(const Model& model, const std::vector<Tensor>& inputs,
                  const std::vector<int>& labels) {
    if (inputs.empty()) throw ArgumentError("batch_loss: empty batch");
    if (inputs.size() != labels.size())
        throw ArgumentError("batch_loss: inputs and labels differ in length");
    const std::size_t L = model.layers.size();
    double total = 0.0;
    for (std::size_t s = 0; s < inputs.size(); ++s) {
        if (labels[s] < 0 || labels[s] >= model.class_count)
            throw IndexError("batch_loss: label out of range");
        // logits are the softmax layer's input
        ForwardTrace trace = L == 1 ? ForwardTrace{{inputs[s]}}
                                    : forward_trace_to(model, inputs[s], L - 2);
        const Tensor& z = trace.outputs.back();
        double m = *std::max_element(z.data.begin(), z.data.end());
        double lse = 0.0;
        for (double v : z.data) lse += std::exp(v - m);
        lse = m + std::log(lse);
        total += lse - z[static_cast<std::size_t>(labels[s])];
    }
    return total / static_cast<double>(inputs.size());
}

std::string model_hash(const Model& model) {
    return sha256_hex(model_to_json(model));
}

} // namespace dj
