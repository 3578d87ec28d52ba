#include "dj/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "dj/error.hpp"
#include "dj/jsonio.hpp"
#include "dj/model.hpp"
#include "dj/rng.hpp"

namespace dj {

std::vector<int> Dataset::input_shape() const {
    if (inputs.empty()) return {};
    return inputs.front().shape;
}

void Dataset::validate() const {
    if (inputs.size() != labels.size())
        throw ArgumentError("dataset: inputs and labels differ in length");
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= class_count)
            throw ArgumentError("dataset: label out of range at sample " + std::to_string(i));
        if (!inputs.empty() && inputs[i].shape != inputs.front().shape)
            throw ShapeError("dataset: inconsistent input shapes at sample " + std::to_string(i));
        for (double v : inputs[i].data)
            if (!(v >= 0.0 && v <= 1.0))
                throw ArgumentError("dataset: input component outside [0,1] at sample " + std::to_string(i));
    }
}

Dataset synth_blobs(int class_count, int per_class, int image_side, std::uint64_t rng_seed) {
    if (class_count < 2) throw ArgumentError("synth_blobs: class_count must be >= 2");
    if (per_class < 1) throw ArgumentError("synth_blobs: per_class must be >= 1");
    if (image_side < 4) throw ArgumentError("synth_blobs: image_side must be >= 4");

    // Geometry tuned so that a small convnet separates the classes cleanly
    // while the class manifolds stay within reach of modest L-inf
    // perturbations: heavily overlapping blobs, small amplitude over a noise
    // floor.
    const double pi = 3.14159265358979323846;
    const double cx = (image_side - 1) / 2.0;
    const double radius = image_side / 5.0;
    const double sigma = image_side / 4.0;
    const double amplitude = 0.45;
    const double noise = 0.13;

    Rng rng(rng_seed);
    Dataset out;
    out.class_count = class_count;
    out.name = "synth-blobs-c" + std::to_string(class_count) + "-s" + std::to_string(image_side);
    out.inputs.reserve(static_cast<std::size_t>(class_count) * per_class);
    out.labels.reserve(out.inputs.capacity());

    for (int c = 0; c < class_count; ++c) {
        double angle = 2.0 * pi * c / class_count;
        double center_y = cx + radius * std::sin(angle);
        double center_x = cx + radius * std::cos(angle);
        for (int s = 0; s < per_class; ++s) {
            double jy = center_y + 0.04 * image_side * rng.normal();
            double jx = center_x + 0.04 * image_side * rng.normal();
            Tensor img = Tensor::zeros({1, image_side, image_side});
            for (int y = 0; y < image_side; ++y) {
                for (int x = 0; x < image_side; ++x) {
                    double d2 = (y - jy) * (y - jy) + (x - jx) * (x - jx);
                    double v = 0.2 + amplitude * std::exp(-d2 / (2.0 * sigma * sigma));
                    v += rng.uniform(-noise, noise);
                    img.data[static_cast<std::size_t>(y) * image_side + x] = std::clamp(v, 0.0, 1.0);
                }
            }
            out.inputs.push_back(std::move(img));
            out.labels.push_back(c);
        }
    }
    return out;
}

namespace {

std::uint32_t read_be_u32(std::ifstream& in, const std::string& path, const char* what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw FormatError(path + ": truncated while reading " + what);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

} // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw FormatError("cannot open " + images_path);
    std::ifstream lbl(labels_path, std::ios::binary);
    if (!lbl) throw FormatError("cannot open " + labels_path);

    if (read_be_u32(img, images_path, "magic") != 0x00000803u)
        throw FormatError(images_path + ": bad magic, expected 0x00000803");
    std::uint32_t n_img = read_be_u32(img, images_path, "count");
    std::uint32_t rows = read_be_u32(img, images_path, "rows");
    std::uint32_t cols = read_be_u32(img, images_path, "cols");

    if (read_be_u32(lbl, labels_path, "magic") != 0x00000801u)
        throw FormatError(labels_path + ": bad magic, expected 0x00000801");
    std::uint32_t n_lbl = read_be_u32(lbl, labels_path, "count");
    if (n_img != n_lbl)
        throw FormatError("IDX pair: image count " + std::to_string(n_img) +
                          " does not match label count " + std::to_string(n_lbl));
    if (n_img > 0 && (rows == 0 || cols == 0))
        throw FormatError(images_path + ": zero image dimensions");

    Dataset out;
    out.name = "idx";
    std::size_t pixels = static_cast<std::size_t>(rows) * cols;
    std::vector<unsigned char> buf(pixels);
    int max_label = -1;
    for (std::uint32_t i = 0; i < n_img; ++i) {
        if (!img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(pixels)))
            throw FormatError(images_path + ": truncated at image " + std::to_string(i));
        Tensor t = Tensor::zeros({1, static_cast<int>(rows), static_cast<int>(cols)});
        for (std::size_t p = 0; p < pixels; ++p) t.data[p] = buf[p] / 255.0;
        int y = lbl.get();
        if (y == EOF) throw FormatError(labels_path + ": truncated at label " + std::to_string(i));
        out.inputs.push_back(std::move(t));
        out.labels.push_back(y);
        max_label = std::max(max_label, y);
    }
    out.class_count = max_label + 1;
    return out;
}

std::pair<Dataset, Dataset> split(const Dataset& dataset, const SplitPlan& plan) {
    if (!(plan.victim_fraction > 0.0 && plan.victim_fraction < 1.0))
        throw ArgumentError("split: victim_fraction must lie in (0,1)");
    dataset.validate();

    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(dataset.class_count));
    for (std::size_t i = 0; i < dataset.size(); ++i)
        by_class[static_cast<std::size_t>(dataset.labels[i])].push_back(i);

    Rng rng(plan.rng_seed);
    Dataset a, b;
    a.class_count = b.class_count = dataset.class_count;
    a.name = dataset.name + "/a";
    b.name = dataset.name + "/b";
    for (auto& idxs : by_class) {
        rng.shuffle(idxs);
        std::size_t take = static_cast<std::size_t>(
            std::floor(plan.victim_fraction * static_cast<double>(idxs.size()) + 0.5));
        take = std::min(take, idxs.size());
        for (std::size_t k = 0; k < idxs.size(); ++k) {
            Dataset& dst = k < take ? a : b;
            dst.inputs.push_back(dataset.inputs[idxs[k]]);
            dst.labels.push_back(dataset.labels[idxs[k]]);
        }
    }
    return {std::move(a), std::move(b)};
}

Dataset stratified_slice(const Dataset& dataset, double fraction, std::uint64_t rng_seed) {
    if (!(fraction > 0.0 && fraction <= 1.0))
        throw ArgumentError("stratified_slice: fraction must lie in (0,1]");
    if (fraction == 1.0) return dataset;
    SplitPlan plan{fraction, rng_seed};
    return split(dataset, plan).first;
}

double accuracy(const Model& model, const Dataset& data) {
    if (data.empty()) throw ArgumentError("accuracy: empty dataset");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (predict_label(model, data.inputs[i]) == data.labels[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

std::string dataset_to_json(const Dataset& data, const std::map<std::string, std::string>* config) {
    JsonWriter w;
    w.begin_object();
    w.key("format_version").value(1);
    w.key("name").value(data.name);
    w.key("class_count").value(data.class_count);
    w.key("input_shape").int_array(data.input_shape());
    w.key("labels").int_array(data.labels);
    w.key("inputs").begin_array();
    for (const Tensor& t : data.inputs) w.real_array(t.data);
    w.end_array();
    if (config) {
        w.key("config").begin_object();
        for (const auto& [k, v] : *config) w.key(k).value(v);
        w.end_object();
    }
    w.end_object();
    return w.str();
}

Dataset dataset_from_json(const std::string& text, const std::string& origin) {
    Json j = parse_json_text(text, origin);
    Dataset out;
    out.name = require_field(j, "name", origin).get<std::string>();
    out.class_count = require_field(j, "class_count", origin).get<int>();
    std::vector<int> shape = require_int_array(j, "input_shape", origin);
    out.labels = require_int_array(j, "labels", origin);
    const Json& inputs = require_field(j, "inputs", origin);
    if (!inputs.is_array()) throw FormatError(origin + ": field 'inputs' must be an array");
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const Json& row = inputs[i];
        if (!row.is_array())
            throw FormatError(origin + ": inputs[" + std::to_string(i) + "] must be an array");
        std::vector<double> vals;
        vals.reserve(row.size());
        for (const auto& v : row) vals.push_back(v.get<double>());
        try {
            out.inputs.push_back(Tensor::from(shape, std::move(vals)));
        } catch (const Error& e) {
            throw FormatError(origin + ": inputs[" + std::to_string(i) + "]: " + e.what());
        }
    }
    try {
        out.validate();
    } catch (const Error& e) {
        throw FormatError(origin + ": " + e.what());
    }
    return out;
}

void save_dataset(const Dataset& data, const std::string& path,
                  const std::map<std::string, std::string>* config) {
    write_text_file(path, dataset_to_json(data, config));
}

Dataset load_dataset(const std::string& path) {
    return dataset_from_json(read_text_file(path), path);
}

} // namespace dj
