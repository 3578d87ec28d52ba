#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>

#include "dj/error.hpp"
#include "dj/forge.hpp"
#include "dj/jsonio.hpp"
#include "dj/model.hpp"
#include "dj/model_io.hpp"
#include "dj/sha256.hpp"
#include "dj/rng.hpp"

using namespace dj;

namespace {

Model softmax_only(int c) {
    Model m;
    m.input_shape = {c};
    m.class_count = c;
    m.layers.push_back(LayerSpec::softmax());
    m.validate();
    return m;
}

// Independent scripted pass for a dense/relu/dense/softmax net: plain loops,
// no shared code with the library forward path.
std::vector<double> oracle_two_layer(const std::vector<std::vector<double>>& w1,
                                     const std::vector<double>& b1,
                                     const std::vector<std::vector<double>>& w2,
                                     const std::vector<double>& b2,
                                     const std::vector<double>& x) {
    std::vector<double> h(w1.size());
    for (std::size_t o = 0; o < w1.size(); ++o) {
        h[o] = b1[o];
        for (std::size_t i = 0; i < x.size(); ++i) h[o] += w1[o][i] * x[i];
        if (h[o] < 0) h[o] = 0;
    }
    std::vector<double> z(w2.size());
    for (std::size_t o = 0; o < w2.size(); ++o) {
        z[o] = b2[o];
        for (std::size_t i = 0; i < h.size(); ++i) z[o] += w2[o][i] * h[i];
    }
    double m = z[0];
    for (double v : z) m = std::max(m, v);
    double sum = 0;
    std::vector<double> p(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        p[i] = std::exp(z[i] - m);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

Model two_layer_fixture() {
    Model m;
    m.input_shape = {3};
    m.class_count = 2;
    LayerSpec d1 = LayerSpec::dense(3, 2);
    d1.weights.data = {0.5, -1.0, 0.25, 1.5, 0.75, -0.5};
    d1.bias.data = {0.1, -0.2};
    LayerSpec d2 = LayerSpec::dense(2, 2);
    d2.weights.data = {1.0, -0.3, -0.7, 0.9};
    d2.bias.data = {0.05, -0.05};
    m.layers = {d1, LayerSpec::relu(), d2, LayerSpec::softmax()};
    m.validate();
    return m;
}

// Scalar value of an objective, for finite differencing.
double objective_value(const Model& m, const Tensor& x, const Objective& obj) {
    switch (obj.kind) {
    case Objective::Kind::CrossEntropy:
        return batch_loss(m, {x}, {obj.label});
    case Objective::Kind::NeuronOutput:
        return forward_trace_to(m, x, obj.layer).outputs.back()[obj.neuron];
    case Objective::Kind::OutputComponent:
        return forward(m, x)[obj.component];
    }
    return 0.0;
}

// Smallest |pre-activation| over relu layers and smallest top-2 gap over pool
// windows; finite differences are only trusted away from these kinks.
double min_kink_margin(const Model& m, const Tensor& x) {
    ForwardTrace tr = forward_trace(m, x);
    double margin = 1e300;
    for (std::size_t l = 0; l < m.layer_count(); ++l) {
        const LayerSpec& spec = m.layers[l];
        if (spec.kind == LayerKind::Relu) {
            for (double v : tr.outputs[l].data) margin = std::min(margin, std::abs(v));
        } else if (spec.kind == LayerKind::MaxPool2d) {
            const Tensor& in = tr.outputs[l];
            const int c = in.shape[0], h = in.shape[1], w = in.shape[2];
            const int oh = tr.outputs[l + 1].shape[1], ow = tr.outputs[l + 1].shape[2];
            for (int ch = 0; ch < c; ++ch)
                for (int oy = 0; oy < oh; ++oy)
                    for (int ox = 0; ox < ow; ++ox) {
                        double best = -1e300, second = -1e300;
                        for (int py = 0; py < spec.pool_h; ++py)
                            for (int px = 0; px < spec.pool_w; ++px) {
                                double v = in.data[(static_cast<std::size_t>(ch) * h + oy * spec.stride_h + py) * w +
                                                   ox * spec.stride_w + px];
                                if (v > best) {
                                    second = best;
                                    best = v;
                                } else if (v > second) {
                                    second = v;
                                }
                            }
                        if (second > -1e299) margin = std::min(margin, best - second);
                    }
        }
    }
    return margin;
}

Model random_small_model(Rng& rng, int variant) {
    Model m;
    if (variant == 0) {
        m.input_shape = {5};
        m.class_count = 3;
        m.layers = {LayerSpec::dense(5, 4), LayerSpec::relu(), LayerSpec::dense(4, 3),
                    LayerSpec::softmax()};
    } else if (variant == 1) {
        m.input_shape = {1, 4, 4};
        m.class_count = 3;
        m.layers = {LayerSpec::conv2d(1, 2, 2, 2), LayerSpec::relu(), LayerSpec::flatten(),
                    LayerSpec::dense(18, 3), LayerSpec::softmax()};
    } else {
        m.input_shape = {2, 5, 5};
        m.class_count = 2;
        m.layers = {LayerSpec::conv2d(2, 3, 2, 2), LayerSpec::relu(),
                    LayerSpec::maxpool2d(2, 2, 2, 2), LayerSpec::flatten(),
                    LayerSpec::dense(12, 2), LayerSpec::softmax()};
    }
    for (LayerSpec& layer : m.layers) {
        if (!layer.has_params()) continue;
        for (double& w : layer.weights.data) w = 0.6 * rng.normal();
        for (double& b : layer.bias.data) b = 0.2 * rng.normal();
    }
    m.validate();
    return m;
}

} // namespace

TEST_CASE("forward: identity dense + relu on nonnegative input is softmax of it") {
    Model m;
    m.input_shape = {3};
    m.class_count = 3;
    LayerSpec d = LayerSpec::dense(3, 3);
    d.weights.data = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    m.layers = {d, LayerSpec::relu(), LayerSpec::softmax()};
    m.validate();
    Tensor v = Tensor::from({3}, {0.2, 1.4, 0.0});
    Tensor p = forward(m, v);
    double sum = std::exp(0.2) + std::exp(1.4) + std::exp(0.0);
    CHECK(p[0] == doctest::Approx(std::exp(0.2) / sum).epsilon(1e-14));
    CHECK(p[1] == doctest::Approx(std::exp(1.4) / sum).epsilon(1e-14));
    CHECK(p[2] == doctest::Approx(std::exp(0.0) / sum).epsilon(1e-14));
}

TEST_CASE("forward: zero logits give the uniform distribution") {
    Model m = softmax_only(4);
    Tensor p = forward(m, Tensor::zeros({4}));
    for (int i = 0; i < 4; ++i) CHECK(p[i] == 0.25);
}

TEST_CASE("forward: fixed 2-layer net matches the scripted oracle") {
    Model m = two_layer_fixture();
    std::vector<double> x = {0.3, -0.8, 0.6};
    std::vector<double> expect = oracle_two_layer({{0.5, -1.0, 0.25}, {1.5, 0.75, -0.5}},
                                                  {0.1, -0.2}, {{1.0, -0.3}, {-0.7, 0.9}},
                                                  {0.05, -0.05}, x);
    Tensor p = forward(m, Tensor::from({3}, x));
    for (int i = 0; i < 2; ++i) CHECK(p[i] == doctest::Approx(expect[i]).epsilon(1e-14));
}

TEST_CASE("forward: shape mismatch raises") {
    Model m = two_layer_fixture();
    CHECK_THROWS_AS(forward(m, Tensor::zeros({4})), ShapeError);
}

TEST_CASE("forward: softmax output sums to 1 and is nonnegative on random models") {
    Rng rng(991);
    for (int trial = 0; trial < 30; ++trial) {
        Model m = random_small_model(rng, trial % 3);
        Tensor x = Tensor::zeros(m.input_shape);
        for (double& v : x.data) v = rng.uniform();
        Tensor p = forward(m, x);
        double sum = 0;
        for (std::size_t i = 0; i < p.numel(); ++i) {
            CHECK(p[i] >= 0.0);
            sum += p[i];
        }
        CHECK(std::abs(sum - 1.0) < 1e-9);
    }
}

TEST_CASE("forward_trace: single-layer model has input entry plus one") {
    Model m = softmax_only(3);
    ForwardTrace tr = forward_trace(m, Tensor::zeros({3}));
    CHECK(tr.outputs.size() == 2);
}

TEST_CASE("forward_trace: relu entry zero exactly where input is negative") {
    Model m;
    m.input_shape = {4};
    m.class_count = 4;
    m.layers = {LayerSpec::relu(), LayerSpec::softmax()};
    m.validate();
    Tensor x = Tensor::from({4}, {-0.5, 0.25, -1e-12, 2.0});
    ForwardTrace tr = forward_trace(m, x);
    CHECK(tr.layer(0)[0] == 0.0);
    CHECK(tr.layer(0)[1] == 0.25);
    CHECK(tr.layer(0)[2] == 0.0);
    CHECK(tr.layer(0)[3] == 2.0);
}

TEST_CASE("forward_trace: 1x1 all-ones conv sums the channels") {
    Model m;
    m.input_shape = {2, 2, 2};
    m.class_count = 4;
    LayerSpec conv = LayerSpec::conv2d(2, 1, 1, 1);
    conv.weights.data = {1.0, 1.0};
    m.layers = {conv, LayerSpec::flatten(), LayerSpec::softmax()};
    m.validate();
    Tensor x = Tensor::from({2, 2, 2}, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8});
    ForwardTrace tr = forward_trace(m, x);
    // direct convolution oracle: out[y][x] = sum_c in[c][y][x]
    for (int y = 0; y < 2; ++y)
        for (int xx = 0; xx < 2; ++xx) {
            double expect = x.data[y * 2 + xx] + x.data[4 + y * 2 + xx];
            CHECK(tr.layer(0).data[y * 2 + xx] == doctest::Approx(expect).epsilon(1e-15));
        }
}

TEST_CASE("forward_trace: final entry is bitwise identical to forward") {
    Rng rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        Model m = random_small_model(rng, trial % 3);
        Tensor x = Tensor::zeros(m.input_shape);
        for (double& v : x.data) v = rng.uniform();
        Tensor p = forward(m, x);
        ForwardTrace tr = forward_trace(m, x);
        CHECK(tr.final_output().data == p.data);
    }
}

TEST_CASE("predict_label: plain argmax and tie-break by lowest index") {
    Model m3 = softmax_only(3);
    Tensor x = Tensor::from({3}, {std::log(0.1), std::log(0.7), std::log(0.2)});
    CHECK(predict_label(m3, x) == 1);

    Model m2 = softmax_only(2);
    CHECK(predict_label(m2, Tensor::from({2}, {0.3, 0.3})) == 0); // exact tie
}

TEST_CASE("predict_label: batch agrees with forward+argmax recomputation") {
    Rng rng(12);
    Model m = random_small_model(rng, 0);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x = Tensor::zeros(m.input_shape);
        for (double& v : x.data) v = rng.uniform();
        Tensor p = forward(m, x);
        int best = 0;
        for (std::size_t i = 1; i < p.numel(); ++i)
            if (p[i] > p[best]) best = static_cast<int>(i);
        CHECK(predict_label(m, x) == best);
    }
}

TEST_CASE("grad_input: neuron objective on a linear neuron returns its weights") {
    Model m;
    m.input_shape = {3};
    m.class_count = 2;
    LayerSpec d = LayerSpec::dense(3, 2);
    d.weights.data = {0.4, -1.2, 2.5, 0.0, 1.0, -0.5};
    d.bias.data = {0.3, -0.1};
    m.layers = {d, LayerSpec::softmax()};
    m.validate();
    Tensor x = Tensor::from({3}, {0.5, 0.25, -0.75});
    Tensor g = grad_input(m, x, Objective::neuron_output(0, 0));
    CHECK(g[0] == 0.4);
    CHECK(g[1] == -1.2);
    CHECK(g[2] == 2.5);
}

TEST_CASE("grad_input: cross-entropy gradient at the logits is p - one_hot") {
    // probe: identity dense in front of softmax, so d/dx == d/dlogits
    Model m;
    m.input_shape = {4};
    m.class_count = 4;
    LayerSpec d = LayerSpec::dense(4, 4);
    for (int i = 0; i < 4; ++i) d.weights.data[i * 4 + i] = 1.0;
    m.layers = {d, LayerSpec::softmax()};
    m.validate();
    Tensor x = Tensor::from({4}, {0.2, -0.4, 1.1, 0.0});
    Tensor p = forward(m, x);
    Tensor g = grad_input(m, x, Objective::cross_entropy(2));
    for (int i = 0; i < 4; ++i) {
        double expect = p[i] - (i == 2 ? 1.0 : 0.0);
        CHECK(g[i] == doctest::Approx(expect).epsilon(1e-15));
    }
}

TEST_CASE("grad_input: invalid indices raise") {
    Model m = two_layer_fixture();
    Tensor x = Tensor::zeros({3});
    CHECK_THROWS_AS(grad_input(m, x, Objective::neuron_output(9, 0)), IndexError);
    CHECK_THROWS_AS(grad_input(m, x, Objective::neuron_output(0, 99)), IndexError);
    CHECK_THROWS_AS(grad_input(m, x, Objective::cross_entropy(5)), IndexError);
    CHECK_THROWS_AS(grad_input(m, x, Objective::output_component(-1)), IndexError);
}

TEST_CASE("grad_input: matches central finite differences on random small models") {
    const double h = 1e-4;
    Rng rng(77);
    int done = 0;
    while (done < 30) {
        Model m = random_small_model(rng, done % 3);
        Tensor x = Tensor::zeros(m.input_shape);
        for (double& v : x.data) v = rng.uniform(0.05, 0.95);
        if (min_kink_margin(m, x) < 1e-3) continue; // FD invalid near a kink
        Objective obj = [&] {
            int which = done % 3;
            if (which == 0) return Objective::cross_entropy(static_cast<int>(rng.uniform_index(m.class_count)));
            if (which == 1) return Objective::output_component(static_cast<int>(rng.uniform_index(m.class_count)));
            return Objective::neuron_output(0, static_cast<int>(rng.uniform_index(
                                                   shape_numel(m.layer_output_shape(0)))));
        }();
        Tensor g = grad_input(m, x, obj);
        double max_rel = 0.0;
        for (std::size_t i = 0; i < x.numel(); ++i) {
            Tensor xp = x, xm = x;
            xp[i] += h;
            xm[i] -= h;
            double fd = (objective_value(m, xp, obj) - objective_value(m, xm, obj)) / (2 * h);
            double rel = std::abs(g[i] - fd) / std::max({std::abs(fd), std::abs(g[i]), 1.0});
            max_rel = std::max(max_rel, rel);
        }
        CHECK(max_rel < 1e-4);
        ++done;
    }
}

TEST_CASE("grad_params: batch of one equals that sample's gradient") {
    Rng rng(5);
    Model m = random_small_model(rng, 0);
    Tensor x = Tensor::zeros(m.input_shape);
    for (double& v : x.data) v = rng.uniform();
    ParamGrads one = grad_params(m, {x}, {1});
    ParamGrads twice = grad_params(m, {x, x}, {1, 1}); // duplicated sample, mean unchanged
    for (std::size_t l = 0; l < m.layer_count(); ++l) {
        if (!m.layers[l].has_params()) continue;
        for (std::size_t i = 0; i < one.weights[l].numel(); ++i)
            CHECK(one.weights[l][i] == doctest::Approx(twice.weights[l][i]).epsilon(1e-14));
        for (std::size_t i = 0; i < one.bias[l].numel(); ++i)
            CHECK(one.bias[l][i] == doctest::Approx(twice.bias[l][i]).epsilon(1e-14));
    }
}

TEST_CASE("grad_params: empty batch raises") {
    Rng rng(6);
    Model m = random_small_model(rng, 0);
    CHECK_THROWS_AS(grad_params(m, {}, {}), ArgumentError);
}

TEST_CASE("grad_params: matches central finite differences on sampled weights") {
    const double h = 1e-4;
    Rng rng(88);
    int done = 0;
    while (done < 12) {
        Model m = random_small_model(rng, done % 3);
        std::vector<Tensor> xs(2, Tensor::zeros(m.input_shape));
        std::vector<int> ys = {static_cast<int>(rng.uniform_index(m.class_count)),
                               static_cast<int>(rng.uniform_index(m.class_count))};
        bool ok = true;
        for (Tensor& x : xs) {
            for (double& v : x.data) v = rng.uniform(0.05, 0.95);
            if (min_kink_margin(m, x) < 1e-3) ok = false;
        }
        if (!ok) continue;
        ParamGrads grads = grad_params(m, xs, ys);
        for (int probe = 0; probe < 5; ++probe) {
            std::size_t l = rng.uniform_index(m.layer_count());
            if (!m.layers[l].has_params()) continue;
            std::size_t i = rng.uniform_index(m.layers[l].weights.numel());
            Model mp = m, mm = m;
            mp.layers[l].weights[i] += h;
            mm.layers[l].weights[i] -= h;
            double fd = (batch_loss(mp, xs, ys) - batch_loss(mm, xs, ys)) / (2 * h);
            double g = grads.weights[l][i];
            double rel = std::abs(g - fd) / std::max({std::abs(fd), std::abs(g), 1.0});
            CHECK(rel < 1e-4);
        }
        ++done;
    }
}

TEST_CASE("serialization: round-trip reproduces parameters and outputs bitwise") {
    Model m = desk_convnet({1, 8, 8}, 3);
    he_init(m, 42);
    m.metadata["note"] = "fixture \"quoted\"\n";
    std::string path = "roundtrip_model.json";
    save_model(m, path);
    Model r = load_model(path);
    CHECK(r.class_count == m.class_count);
    CHECK(r.input_shape == m.input_shape);
    CHECK(r.metadata == m.metadata);
    REQUIRE(r.layer_count() == m.layer_count());
    for (std::size_t l = 0; l < m.layer_count(); ++l) {
        CHECK(r.layers[l].same_arch(m.layers[l]));
        CHECK(r.layers[l].weights.data == m.layers[l].weights.data);
        CHECK(r.layers[l].bias.data == m.layers[l].bias.data);
    }
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor x = Tensor::zeros(m.input_shape);
        for (double& v : x.data) v = rng.uniform();
        CHECK(forward(m, x).data == forward(r, x).data);
    }
    std::remove(path.c_str());
}

TEST_CASE("serialization: mismatched weight length names the field") {
    Model m = two_layer_fixture();
    std::string text = model_to_json(m);
    // drop one entry from the first weights array
    std::size_t pos = text.find("\"weights\":[");
    std::size_t comma = text.find(',', pos);
    text.erase(pos + 11, comma - (pos + 11) + 1);
    CHECK_THROWS_WITH_AS(Model r = model_from_json(text), doctest::Contains("weights"), FormatError);
}

TEST_CASE("serialization: malformed JSON raises a format error") {
    CHECK_THROWS_AS(model_from_json("{ not json"), FormatError);
    CHECK_THROWS_AS(model_from_json("{\"format_version\":1}"), FormatError);
}

TEST_CASE("serialization: golden fixture model predicts the frozen label") {
    // fixture generated once from the deterministic builder below, then frozen
    Model m = desk_convnet({1, 8, 8}, 4);
    he_init(m, 20240515);
    Tensor x = Tensor::zeros({1, 8, 8});
    Rng rng(99);
    for (double& v : x.data) v = rng.uniform();
    std::string path = "golden_model.json";
    save_model(m, path);
    Model r = load_model(path);
    CHECK(predict_label(r, x) == predict_label(m, x));
    CHECK(predict_label(r, x) == 1); // frozen
    std::remove(path.c_str());
}

TEST_CASE("validate: softmax only as the final layer, and required there") {
    Model bad;
    bad.input_shape = {3};
    bad.class_count = 3;
    bad.layers = {LayerSpec::softmax(), LayerSpec::relu()};
    CHECK_THROWS_AS(bad.validate(), ShapeError);
    Model no_softmax;
    no_softmax.input_shape = {3};
    no_softmax.class_count = 3;
    no_softmax.layers = {LayerSpec::dense(3, 3)};
    CHECK_THROWS_AS(no_softmax.validate(), ShapeError);
}

TEST_CASE("serialization: 17-digit reals round-trip bit-exactly through JSON") {
    Rng rng(2024);
    std::vector<double> values = {0.0, -0.0, 1.0, 0.1, 1e-300, 1e300, 5e-324,
                                  0.12345678901234567, 3.0000000000000004};
    for (int i = 0; i < 200; ++i) {
        // random finite doubles across the exponent range
        double v = (rng.uniform() - 0.5) * std::pow(10.0, rng.uniform(-30, 30));
        values.push_back(v);
    }
    for (double v : values) {
        std::string text = "[" + format_real(v) + "]";
        Json j = parse_json_text(text, "roundtrip");
        double back = j[0].get<double>();
        if (v == 0.0)
            CHECK(back == 0.0); // zeros are canonicalized
        else
            CHECK(std::memcmp(&back, &v, sizeof(double)) == 0);
    }
}

TEST_CASE("sha256: standard test vectors") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq") ==
          "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
    // block-boundary lengths
    CHECK(sha256_hex(std::string(64, 'a')) ==
          "ffe054fe7ae0cb6dc65c3af9b61d5209f439851db43d0ba5997337df154668eb");
    CHECK(sha256_hex(std::string(119, 'a')) ==
          "31eba51c313a5c08226adf18d4a359cfdfd8d2e816b13f4af952f7ea6584dcfb");
    CHECK(sha256_hex(std::string(1000, 'a')) ==
          "41edece42d63e8d9bf515a9ba6932e1c20cbc9f5a5d134645adb5db1b9737ea3");
}
