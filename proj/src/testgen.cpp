#include "dj/testgen.hpp"

#include <algorithm>
#include <cmath>

#include "dj/error.hpp"
#include "dj/jsonio.hpp"

namespace dj {

namespace {

double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

} // namespace

double certainty_score(const Tensor& probs) {
    double s = 0.0;
    for (double p : probs.data) s += p * p;
    return s;
}

SeedSet gini_select(const Model& model, const Dataset& dataset, std::size_t n,
                    const std::string& order) {
    if (order != "high" && order != "low")
        throw ArgumentError("gini_select: order must be 'high' or 'low'");
    struct Scored {
        std::size_t index;
        double cs;
    };
    std::vector<Scored> correct;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        Tensor p = forward(model, dataset.inputs[i]);
        int label = 0;
        for (std::size_t k = 1; k < p.numel(); ++k)
            if (p[k] > p[label]) label = static_cast<int>(k);
        if (label == dataset.labels[i]) correct.push_back({i, certainty_score(p)});
    }
    if (n > correct.size())
        throw ArgumentError("gini_select: requested " + std::to_string(n) + " seeds but only " +
                            std::to_string(correct.size()) + " correctly-classified samples");
    const bool high = order == "high";
    std::sort(correct.begin(), correct.end(), [high](const Scored& a, const Scored& b) {
        if (a.cs != b.cs) return high ? a.cs > b.cs : a.cs < b.cs;
        return a.index < b.index;
    });
    SeedSet out;
    out.order = order;
    out.source = dataset.name;
    out.victim_hash = model_hash(model);
    for (std::size_t i = 0; i < n; ++i) {
        out.inputs.push_back(dataset.inputs[correct[i].index]);
        out.labels.push_back(dataset.labels[correct[i].index]);
        out.certainty.push_back(correct[i].cs);
    }
    return out;
}

Tensor pgd_perturb(const Model& model, const Tensor& x, int label, double epsilon, int steps,
                   double step_size) {
    Tensor cur = x;
    for (int k = 0; k < steps; ++k) {
        Tensor g = grad_input(model, cur, Objective::cross_entropy(label));
        for (std::size_t i = 0; i < cur.numel(); ++i) {
            double v = cur[i] + step_size * sign_of(g[i]);
            v = std::clamp(v, x[i] - epsilon, x[i] + epsilon); // L-inf ball projection
            cur[i] = std::clamp(v, 0.0, 1.0);
        }
    }
    return cur;
}

namespace {

TestSuite make_blackbox_suite(const Model& model, const SeedSet& seeds, const char* generator,
                              std::map<std::string, double> params) {
    TestSuite suite;
    suite.mode = "blackbox";
    suite.generator = generator;
    suite.params = std::move(params);
    suite.victim_hash = model_hash(model);
    suite.cases.reserve(seeds.size());
    return suite;
}

} // namespace

TestSuite gen_fgsm(const Model& model, const SeedSet& seeds, double epsilon) {
    if (epsilon < 0.0) throw ArgumentError("gen_fgsm: epsilon must be >= 0");
    TestSuite suite = make_blackbox_suite(model, seeds, "fgsm", {{"epsilon", epsilon}});
    for (std::size_t s = 0; s < seeds.size(); ++s) {
        TestCase tc;
        tc.input = pgd_perturb(model, seeds.inputs[s], seeds.labels[s], epsilon, 1, epsilon);
        tc.label = seeds.labels[s];
        tc.adversarial = predict_label(model, tc.input) != tc.label ? 1 : 0;
        suite.cases.push_back(std::move(tc));
    }
    return suite;
}

TestSuite gen_pgd(const Model& model, const SeedSet& seeds, double epsilon, int steps,
                  double step_size) {
    if (epsilon < 0.0) throw ArgumentError("gen_pgd: epsilon must be >= 0");
    if (steps < 1) throw ArgumentError("gen_pgd: steps must be >= 1");
    if (step_size == 0.0) step_size = default_pgd_step(epsilon, steps);
    TestSuite suite = make_blackbox_suite(
        model, seeds, "pgd",
        {{"epsilon", epsilon}, {"step_size", step_size}, {"steps", static_cast<double>(steps)}});
    for (std::size_t s = 0; s < seeds.size(); ++s) {
        TestCase tc;
        tc.input = pgd_perturb(model, seeds.inputs[s], seeds.labels[s], epsilon, steps, step_size);
        tc.label = seeds.labels[s];
        tc.adversarial = predict_label(model, tc.input) != tc.label ? 1 : 0;
        suite.cases.push_back(std::move(tc));
    }
    return suite;
}

TestSuite gen_cw(const Model& model, const SeedSet& seeds, double c, int iters, double lr) {
    if (c <= 0.0) throw ArgumentError("gen_cw: c must be > 0");
    if (iters < 1) throw ArgumentError("gen_cw: iters must be >= 1");
    if (lr <= 0.0) throw ArgumentError("gen_cw: lr must be > 0");
    TestSuite suite = make_blackbox_suite(
        model, seeds, "cw", {{"c", c}, {"iters", static_cast<double>(iters)}, {"lr", lr}});
    for (std::size_t s = 0; s < seeds.size(); ++s) {
        const Tensor& x0 = seeds.inputs[s];
        const int y = seeds.labels[s];
        Tensor cur = x0;
        Tensor best;
        double best_dist2 = 0.0;
        bool found = false;
        for (int it = 0; it < iters; ++it) {
            // objective: ||x' - x||_2^2 - c * CE(f(x'), y), minimized
            Tensor g = grad_input(model, cur, Objective::cross_entropy(y));
            for (std::size_t i = 0; i < cur.numel(); ++i) {
                double step = 2.0 * (cur[i] - x0[i]) - c * g[i];
                cur[i] = std::clamp(cur[i] - lr * step, 0.0, 1.0);
            }
            if (predict_label(model, cur) != y) {
                double d2 = 0.0;
                for (std::size_t i = 0; i < cur.numel(); ++i)
                    d2 += (cur[i] - x0[i]) * (cur[i] - x0[i]);
                if (!found || d2 < best_dist2) {
                    best = cur;
                    best_dist2 = d2;
                    found = true;
                }
            }
        }
        TestCase tc;
        tc.input = found ? best : cur;
        tc.label = y;
        tc.adversarial = found ? 1 : 0;
        suite.cases.push_back(std::move(tc));
    }
    return suite;
}

NeuronThresholds neuron_thresholds(const Model& model, const Dataset& train_data, int layer,
                                   double m) {
    if (layer < 0 || static_cast<std::size_t>(layer) + 1 >= model.layer_count())
        throw ArgumentError("neuron_thresholds: layer must be a hidden layer");
    if (train_data.empty()) throw ArgumentError("neuron_thresholds: empty training data");
    NeuronThresholds th;
    th.layer = layer;
    th.m = m;
    std::size_t width = shape_numel(model.layer_output_shape(static_cast<std::size_t>(layer)));
    th.train_max.assign(width, -1e300);
    for (const Tensor& x : train_data.inputs) {
        ForwardTrace tr = forward_trace_to(model, x, static_cast<std::size_t>(layer));
        const Tensor& out = tr.outputs.back();
        for (std::size_t i = 0; i < width; ++i)
            if (out[i] > th.train_max[i]) th.train_max[i] = out[i];
    }
    th.k.resize(width);
    for (std::size_t i = 0; i < width; ++i) th.k[i] = m * th.train_max[i];
    return th;
}

TestSuite gen_whitebox(const Model& model, const SeedSet& seeds, int layer,
                       const NeuronThresholds& thresholds, double lr, int iters, int retries) {
    if (seeds.size() == 0) throw ArgumentError("gen_whitebox: empty seed set");
    if (thresholds.layer != layer)
        throw ArgumentError("gen_whitebox: thresholds were computed for a different layer");
    if (iters < 0) throw ArgumentError("gen_whitebox: iters must be >= 0");
    if (retries < 0) throw ArgumentError("gen_whitebox: retries must be >= 0");
    if (lr <= 0.0) throw ArgumentError("gen_whitebox: lr must be > 0");
    std::size_t width = shape_numel(model.layer_output_shape(static_cast<std::size_t>(layer)));
    if (thresholds.k.size() != width)
        throw ArgumentError("gen_whitebox: threshold count does not match layer width");

    TestSuite suite;
    suite.mode = "whitebox";
    suite.generator = "neuron-corner";
    suite.params = {{"m", thresholds.m},
                    {"lr", lr},
                    {"iters", static_cast<double>(iters)},
                    {"retries", static_cast<double>(retries)}};
    suite.victim_hash = model_hash(model);
    suite.layer = layer;
    suite.neuron_max = thresholds.train_max;

    // Ascend from one seed; success leaves the winning input and its
    // activation in `cur`/`achieved`.
    auto search = [&](std::size_t neuron, Tensor cur, Tensor& out, double& achieved) {
        ForwardTrace tr = forward_trace_to(model, cur, static_cast<std::size_t>(layer));
        for (int it = 0; it < iters; ++it) {
            Tensor dy = Tensor::zeros(tr.outputs.back().shape);
            dy[neuron] = 1.0;
            Tensor g = backprop(model, tr, static_cast<std::size_t>(layer), std::move(dy), nullptr);
            Tensor next = cur;
            for (std::size_t i = 0; i < next.numel(); ++i)
                next[i] = std::clamp(next[i] + lr * g[i], 0.0, 1.0);
            if (next.data == cur.data) return false; // box-saturated or zero gradient
            cur = std::move(next);
            tr = forward_trace_to(model, cur, static_cast<std::size_t>(layer));
            if (tr.outputs.back()[neuron] > thresholds.k[neuron]) {
                achieved = tr.outputs.back()[neuron];
                out = std::move(cur);
                return true;
            }
        }
        return false;
    };

    for (std::size_t neuron = 0; neuron < width; ++neuron) {
        bool success = false;
        Tensor found;
        double achieved = 0.0;
        for (int attempt = 0; attempt <= retries && !success; ++attempt) {
            const Tensor& seed = seeds.inputs[(neuron + attempt) % seeds.size()];
            success = search(neuron, seed, found, achieved);
        }
        if (success) {
            TestCase tc;
            tc.input = std::move(found);
            tc.neuron = static_cast<int>(neuron);
            tc.activation = achieved;
            suite.cases.push_back(std::move(tc));
        } else {
            ++suite.failed_neurons;
        }
    }
    return suite;
}

namespace {

void append_config(JsonWriter& w, const std::map<std::string, std::string>* config) {
    if (!config) return;
    w.key("config").begin_object();
    for (const auto& [k, v] : *config) w.key(k).value(v);
    w.end_object();
}

} // namespace

std::string suite_to_json(const TestSuite& suite, const std::map<std::string, std::string>* config) {
    JsonWriter w;
    w.begin_object();
    w.key("format_version").value(1);
    w.key("mode").value(suite.mode);
    w.key("generator").value(suite.generator);
    w.key("params").begin_object();
    for (const auto& [k, v] : suite.params) w.key(k).value(v);
    w.end_object();
    w.key("victim_hash").value(suite.victim_hash);
    if (suite.mode == "whitebox") {
        w.key("layer").value(suite.layer);
        w.key("neuron_max").real_array(suite.neuron_max);
        w.key("failed_neurons").value(suite.failed_neurons);
    }
    w.key("cases").begin_array();
    for (const TestCase& tc : suite.cases) {
        w.begin_object();
        w.key("input").real_array(tc.input.data);
        if (suite.mode == "blackbox") {
            w.key("label").value(tc.label);
            w.key("adversarial").value(tc.adversarial);
        } else {
            w.key("neuron").value(tc.neuron);
            w.key("activation").value(tc.activation);
        }
        w.end_object();
    }
    w.end_array();
    w.key("input_shape").int_array(suite.cases.empty() ? std::vector<int>{}
                                                       : suite.cases.front().input.shape);
    append_config(w, config);
    w.end_object();
    return w.str();
}

TestSuite suite_from_json(const std::string& text, const std::string& origin) {
    Json j = parse_json_text(text, origin);
    TestSuite suite;
    suite.mode = require_field(j, "mode", origin).get<std::string>();
    if (suite.mode != "blackbox" && suite.mode != "whitebox")
        throw FormatError(origin + ": mode must be 'blackbox' or 'whitebox'");
    suite.generator = require_field(j, "generator", origin).get<std::string>();
    const Json& params = require_field(j, "params", origin);
    if (!params.is_object()) throw FormatError(origin + ": field 'params' must be an object");
    for (const auto& [k, v] : params.items()) suite.params[k] = v.get<double>();
    suite.victim_hash = require_field(j, "victim_hash", origin).get<std::string>();
    if (suite.mode == "whitebox") {
        suite.layer = require_field(j, "layer", origin).get<int>();
        suite.neuron_max = require_real_array(j, "neuron_max", origin);
        suite.failed_neurons = require_field(j, "failed_neurons", origin).get<int>();
    }
    std::vector<int> shape = require_int_array(j, "input_shape", origin);
    const Json& cases = require_field(j, "cases", origin);
    if (!cases.is_array()) throw FormatError(origin + ": field 'cases' must be an array");
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const std::string at = origin + ": cases[" + std::to_string(i) + "]";
        const Json& cj = cases[i];
        TestCase tc;
        std::vector<double> vals = require_real_array(cj, "input", at);
        try {
            tc.input = Tensor::from(shape, std::move(vals));
        } catch (const Error& e) {
            throw FormatError(at + ".input: " + e.what());
        }
        if (suite.mode == "blackbox") {
            tc.label = require_field(cj, "label", at).get<int>();
            tc.adversarial = require_field(cj, "adversarial", at).get<int>();
        } else {
            tc.neuron = require_field(cj, "neuron", at).get<int>();
            tc.activation = require_field(cj, "activation", at).get<double>();
        }
        suite.cases.push_back(std::move(tc));
    }
    return suite;
}

void save_suite(const TestSuite& suite, const std::string& path,
                const std::map<std::string, std::string>* config) {
    write_text_file(path, suite_to_json(suite, config));
}

TestSuite load_suite(const std::string& path) {
    return suite_from_json(read_text_file(path), path);
}

std::string seeds_to_json(const SeedSet& seeds, const std::map<std::string, std::string>* config) {
    JsonWriter w;
    w.begin_object();
    w.key("format_version").value(1);
    w.key("victim_hash").value(seeds.victim_hash);
    w.key("source").value(seeds.source);
    w.key("order").value(seeds.order);
    w.key("count").value(seeds.size());
    w.key("certainty").real_array(seeds.certainty);
    w.key("labels").int_array(seeds.labels);
    w.key("input_shape").int_array(seeds.inputs.empty() ? std::vector<int>{}
                                                        : seeds.inputs.front().shape);
    w.key("inputs").begin_array();
    for (const Tensor& t : seeds.inputs) w.real_array(t.data);
    w.end_array();
    append_config(w, config);
    w.end_object();
    return w.str();
}

SeedSet seeds_from_json(const std::string& text, const std::string& origin) {
    Json j = parse_json_text(text, origin);
    SeedSet out;
    out.victim_hash = require_field(j, "victim_hash", origin).get<std::string>();
    out.source = require_field(j, "source", origin).get<std::string>();
    out.order = require_field(j, "order", origin).get<std::string>();
    out.certainty = require_real_array(j, "certainty", origin);
    out.labels = require_int_array(j, "labels", origin);
    std::vector<int> shape = require_int_array(j, "input_shape", origin);
    const Json& inputs = require_field(j, "inputs", origin);
    if (!inputs.is_array()) throw FormatError(origin + ": field 'inputs' must be an array");
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        std::vector<double> vals;
        for (const auto& v : inputs[i]) vals.push_back(v.get<double>());
        try {
            out.inputs.push_back(Tensor::from(shape, std::move(vals)));
        } catch (const Error& e) {
            throw FormatError(origin + ": inputs[" + std::to_string(i) + "]: " + e.what());
        }
    }
    if (out.inputs.size() != out.labels.size() || out.inputs.size() != out.certainty.size())
        throw FormatError(origin + ": inputs/labels/certainty lengths disagree");
    return out;
}

void save_seeds(const SeedSet& seeds, const std::string& path,
                const std::map<std::string, std::string>* config) {
    write_text_file(path, seeds_to_json(seeds, config));
}

SeedSet load_seeds(const std::string& path) {
    return seeds_from_json(read_text_file(path), path);
}

} // namespace dj
