#include "dj/model_io.hpp"

#include "dj/error.hpp"
#include "dj/jsonio.hpp"

namespace dj {

std::string model_to_json(const Model& model) {
    JsonWriter w;
    w.begin_object();
    w.key("format_version").value(kModelFormatVersion);
    w.key("input_shape").int_array(model.input_shape);
    w.key("class_count").value(model.class_count);
    w.key("metadata").begin_object();
    for (const auto& [k, v] : model.metadata) w.key(k).value(v);
    w.end_object();
    w.key("layers").begin_array();
    for (const LayerSpec& layer : model.layers) {
        w.begin_object();
        w.key("kind").value(layer_kind_name(layer.kind));
        switch (layer.kind) {
        case LayerKind::Dense:
            w.key("in_width").value(layer.in_width);
            w.key("out_width").value(layer.out_width);
            w.key("weights").real_array(layer.weights.data);
            w.key("bias").real_array(layer.bias.data);
            break;
        case LayerKind::Conv2d:
            w.key("in_channels").value(layer.in_channels);
            w.key("out_channels").value(layer.out_channels);
            w.key("kernel").int_array({layer.kernel_h, layer.kernel_w});
            w.key("stride").int_array({layer.stride_h, layer.stride_w});
            w.key("weights").real_array(layer.weights.data);
            w.key("bias").real_array(layer.bias.data);
            break;
        case LayerKind::MaxPool2d:
            w.key("pool").int_array({layer.pool_h, layer.pool_w});
            w.key("stride").int_array({layer.stride_h, layer.stride_w});
            break;
        case LayerKind::Relu:
        case LayerKind::Flatten:
        case LayerKind::Softmax:
            break;
        }
        w.end_object();
    }
    w.end_array();
    w.end_object();
    return w.str();
}

namespace {

int require_pos_int(const Json& obj, const std::string& name, const std::string& context) {
    const Json& v = require_field(obj, name, context);
    if (!v.is_number_integer() || v.get<int>() <= 0)
        throw FormatError(context + ": field '" + name + "' must be a positive integer");
    return v.get<int>();
}

std::pair<int, int> require_int_pair(const Json& obj, const std::string& name,
                                     const std::string& context) {
    std::vector<int> v = require_int_array(obj, name, context);
    if (v.size() != 2) throw FormatError(context + ": field '" + name + "' must have 2 entries");
    return {v[0], v[1]};
}

} // namespace

Model model_from_json(const std::string& text, const std::string& origin) {
    Json j = parse_json_text(text, origin);
    if (!j.is_object()) throw FormatError(origin + ": top-level value must be an object");
    int version = require_pos_int(j, "format_version", origin);
    if (version != kModelFormatVersion)
        throw FormatError(origin + ": unsupported format_version " + std::to_string(version));

    Model model;
    model.input_shape = require_int_array(j, "input_shape", origin);
    model.class_count = require_pos_int(j, "class_count", origin);
    const Json& meta = require_field(j, "metadata", origin);
    if (!meta.is_object()) throw FormatError(origin + ": field 'metadata' must be an object");
    for (const auto& [k, v] : meta.items()) {
        if (!v.is_string()) throw FormatError(origin + ": metadata." + k + " must be a string");
        model.metadata[k] = v.get<std::string>();
    }

    const Json& layers = require_field(j, "layers", origin);
    if (!layers.is_array()) throw FormatError(origin + ": field 'layers' must be an array");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const Json& lj = layers[l];
        const std::string at = origin + ": layers[" + std::to_string(l) + "]";
        if (!lj.is_object()) throw FormatError(at + " must be an object");
        const Json& kind_field = require_field(lj, "kind", at);
        if (!kind_field.is_string()) throw FormatError(at + ".kind must be a string");
        LayerKind kind = layer_kind_from_name(kind_field.get<std::string>());
        LayerSpec spec;
        switch (kind) {
        case LayerKind::Dense: {
            spec = LayerSpec::dense(require_pos_int(lj, "in_width", at),
                                    require_pos_int(lj, "out_width", at));
            std::vector<double> wv = require_real_array(lj, "weights", at);
            std::vector<double> bv = require_real_array(lj, "bias", at);
            if (wv.size() != spec.weights.numel())
                throw FormatError(at + ".weights: expected " + std::to_string(spec.weights.numel()) +
                                  " values, got " + std::to_string(wv.size()));
            if (bv.size() != spec.bias.numel())
                throw FormatError(at + ".bias: expected " + std::to_string(spec.bias.numel()) +
                                  " values, got " + std::to_string(bv.size()));
            spec.weights.data = std::move(wv);
            spec.bias.data = std::move(bv);
            break;
        }
        case LayerKind::Conv2d: {
            int in_c = require_pos_int(lj, "in_channels", at);
            int out_c = require_pos_int(lj, "out_channels", at);
            auto [kh, kw] = require_int_pair(lj, "kernel", at);
            auto [sh, sw] = require_int_pair(lj, "stride", at);
            spec = LayerSpec::conv2d(in_c, out_c, kh, kw, sh, sw);
            std::vector<double> wv = require_real_array(lj, "weights", at);
            std::vector<double> bv = require_real_array(lj, "bias", at);
            if (wv.size() != spec.weights.numel())
                throw FormatError(at + ".weights: expected " + std::to_string(spec.weights.numel()) +
                                  " values, got " + std::to_string(wv.size()));
            if (bv.size() != spec.bias.numel())
                throw FormatError(at + ".bias: expected " + std::to_string(spec.bias.numel()) +
                                  " values, got " + std::to_string(bv.size()));
            spec.weights.data = std::move(wv);
            spec.bias.data = std::move(bv);
            break;
        }
        case LayerKind::MaxPool2d: {
            auto [ph, pw] = require_int_pair(lj, "pool", at);
            auto [sh, sw] = require_int_pair(lj, "stride", at);
            spec = LayerSpec::maxpool2d(ph, pw, sh, sw);
            break;
        }
        case LayerKind::Relu: spec = LayerSpec::relu(); break;
        case LayerKind::Flatten: spec = LayerSpec::flatten(); break;
        case LayerKind::Softmax: spec = LayerSpec::softmax(); break;
        }
        model.layers.push_back(std::move(spec));
    }

    try {
        model.validate();
    } catch (const Error& e) {
        throw FormatError(origin + ": " + e.what());
    }
    return model;
}

void save_model(const Model& model, const std::string& path) {
    model.validate();
    write_text_file(path, model_to_json(model));
}

Model load_model(const std::string& path) {
    return model_from_json(read_text_file(path), path);
}

} // namespace dj
