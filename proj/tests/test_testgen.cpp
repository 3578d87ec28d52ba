#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "dj/error.hpp"
#include "dj/testgen.hpp"
#include "fixtures.hpp"

using namespace dj;
using fixtures::desk;

namespace {

Model softmax_probe(int c) {
    Model m;
    m.input_shape = {c};
    m.class_count = c;
    m.layers.push_back(LayerSpec::softmax());
    m.validate();
    return m;
}

double linf(const Tensor& a, const Tensor& b) {
    double d = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

double l2(const Tensor& a, const Tensor& b) {
    double d = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(d);
}

bool in_unit_box(const Tensor& t) {
    for (double v : t.data)
        if (v < 0.0 || v > 1.0) return false;
    return true;
}

} // namespace

TEST_CASE("certainty score: uniform and one-hot outputs") {
    Model probe = softmax_probe(10);
    Tensor uniform = forward(probe, Tensor::zeros({10}));
    CHECK(certainty_score(uniform) == doctest::Approx(0.1).epsilon(1e-12));
    Tensor hot = Tensor::zeros({10});
    hot[3] = 60.0;
    CHECK(certainty_score(forward(probe, hot)) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("gini_select: equals a full-sort oracle over correct samples") {
    const auto& d = desk();
    for (const char* order : {"high", "low"}) {
        SeedSet got = gini_select(d.victim, d.test_data, 25, order);
        // oracle: recompute every correct sample's score, sort, take 25
        struct Row {
            std::size_t idx;
            double cs;
        };
        std::vector<Row> rows;
        for (std::size_t i = 0; i < d.test_data.size(); ++i) {
            if (predict_label(d.victim, d.test_data.inputs[i]) != d.test_data.labels[i]) continue;
            rows.push_back({i, certainty_score(forward(d.victim, d.test_data.inputs[i]))});
        }
        bool high = std::string(order) == "high";
        std::sort(rows.begin(), rows.end(), [&](const Row& a, const Row& b) {
            if (a.cs != b.cs) return high ? a.cs > b.cs : a.cs < b.cs;
            return a.idx < b.idx;
        });
        REQUIRE(got.size() == 25);
        for (std::size_t i = 0; i < 25; ++i) {
            CHECK(got.inputs[i].data == d.test_data.inputs[rows[i].idx].data);
            CHECK(got.labels[i] == d.test_data.labels[rows[i].idx]);
            CHECK(got.certainty[i] == doctest::Approx(rows[i].cs).epsilon(1e-12));
        }
    }
}

TEST_CASE("gini_select: certainty scores lie in [1/C, 1] and n too large raises") {
    const auto& d = desk();
    SeedSet s = gini_select(d.victim, d.test_data, 30, "high");
    for (double cs : s.certainty) {
        CHECK(cs >= 1.0 / d.victim.class_count - 1e-12);
        CHECK(cs <= 1.0 + 1e-12);
    }
    CHECK_THROWS_AS(gini_select(d.victim, d.test_data, 100000, "high"), ArgumentError);
    CHECK_THROWS_AS(gini_select(d.victim, d.test_data, 5, "weird"), ArgumentError);
}

TEST_CASE("gen_fgsm: epsilon zero returns the seeds unchanged") {
    const auto& d = desk();
    SeedSet seeds = gini_select(d.victim, d.test_data, 10, "high");
    TestSuite t = gen_fgsm(d.victim, seeds, 0.0);
    REQUIRE(t.size() == 10);
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(t.cases[i].input.data == seeds.inputs[i].data);
}

TEST_CASE("black-box generators: ball and box constraints hold for every case") {
    const auto& d = desk();
    SeedSet seeds = gini_select(d.victim, d.test_data, 12, "high");
    for (double eps : {0.03, 0.1, 0.25}) {
        for (int steps : {1, 4, 10}) {
            TestSuite t = gen_pgd(d.victim, seeds, eps, steps, 0.0);
            CHECK(t.mode == "blackbox");
            for (std::size_t i = 0; i < t.size(); ++i) {
                CHECK(linf(t.cases[i].input, seeds.inputs[i]) <= eps + 1e-12);
                CHECK(in_unit_box(t.cases[i].input));
                CHECK(t.cases[i].label == seeds.labels[i]);
            }
        }
        TestSuite f = gen_fgsm(d.victim, seeds, eps);
        for (std::size_t i = 0; i < f.size(); ++i) {
            CHECK(linf(f.cases[i].input, seeds.inputs[i]) <= eps + 1e-12);
            CHECK(in_unit_box(f.cases[i].input));
        }
    }
}

TEST_CASE("gen_pgd: steps=1 with step size epsilon is exactly FGSM") {
    const auto& d = desk();
    SeedSet seeds = gini_select(d.victim, d.test_data, 15, "high");
    TestSuite f = gen_fgsm(d.victim, seeds, 0.1);
    TestSuite p = gen_pgd(d.victim, seeds, 0.1, 1, 0.1);
    REQUIRE(f.size() == p.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
        CHECK(f.cases[i].input.data == p.cases[i].input.data);
        CHECK(f.cases[i].adversarial == p.cases[i].adversarial);
    }
}

TEST_CASE("gen_fgsm: fools the victim on at least half the suite at eps=0.1") {
    const auto& d = desk();
    SeedSet seeds = gini_select(d.victim, d.test_data, 40, "high");
    TestSuite f = gen_fgsm(d.victim, seeds, 0.1);
    int fooled = 0;
    for (const TestCase& tc : f.cases) fooled += tc.adversarial == 1;
    CHECK(fooled * 2 >= static_cast<int>(f.size()));
}

TEST_CASE("gen_pgd: at least as misleading as FGSM at equal epsilon") {
    const auto& d = desk();
    SeedSet seeds = gini_select(d.victim, d.test_data, 40, "high");
    auto fooled = [](const TestSuite& t) {
        int n = 0;
        for (const TestCase& tc : t.cases) n += tc.adversarial == 1;
        return n;
    };
    TestSuite f = gen_fgsm(d.victim, seeds, 0.1);
    TestSuite p = gen_pgd(d.victim, seeds, 0.1, 10, 0.0);
    CHECK(fooled(p) >= fooled(f));
}

TEST_CASE("gen_cw: vanishing c keeps the output near the seed") {
    const auto& d = desk();
    SeedSet seeds = gini_select(d.victim, d.test_data, 5, "high");
    TestSuite t = gen_cw(d.victim, seeds, 1e-8, 40, 0.01);
    for (std::size_t i = 0; i < t.size(); ++i)
        CHECK(l2(t.cases[i].input, seeds.inputs[i]) < 1e-3);
}

TEST_CASE("gen_cw: adversarial flag contract, and smaller L2 than PGD") {
    // low-certainty seeds: CW's plain-CE penalty form stalls in the saturated
    // softmax region of high-certainty seeds
    const auto& d = desk();
    SeedSet seeds = gini_select(d.victim, d.test_data, 25, "low");
    TestSuite cw = gen_cw(d.victim, seeds, 5.0, 1000, 0.01);
    TestSuite pgd = gen_pgd(d.victim, seeds, 0.1, 10, 0.0);
    std::size_t cw_ok = 0, pgd_ok = 0;
    double cw_l2 = 0, pgd_l2 = 0;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        if (cw.cases[i].adversarial == 1) {
            CHECK(predict_label(d.victim, cw.cases[i].input) != cw.cases[i].label);
            ++cw_ok;
            cw_l2 += l2(cw.cases[i].input, seeds.inputs[i]);
        }
        if (pgd.cases[i].adversarial == 1) {
            ++pgd_ok;
            pgd_l2 += l2(pgd.cases[i].input, seeds.inputs[i]);
        }
        CHECK(in_unit_box(cw.cases[i].input));
    }
    REQUIRE(cw_ok > 0);
    REQUIRE(pgd_ok > 0);
    CHECK(cw_ok >= pgd_ok); // matched-or-better success rate
    CHECK(cw_l2 / cw_ok < pgd_l2 / pgd_ok);
}

TEST_CASE("neuron_thresholds: m=1 equals the empirical max (full-scan oracle)") {
    const auto& d = desk();
    const int layer = 1; // first relu
    NeuronThresholds th = neuron_thresholds(d.victim, d.train_pool, layer, 1.0);
    std::size_t width = shape_numel(d.victim.layer_output_shape(layer));
    REQUIRE(th.k.size() == width);
    // brute-force oracle over every sample and neuron
    std::vector<double> best(width, -1e300);
    for (const Tensor& x : d.train_pool.inputs) {
        ForwardTrace tr = forward_trace(d.victim, x);
        for (std::size_t i = 0; i < width; ++i) best[i] = std::max(best[i], tr.layer(layer)[i]);
    }
    for (std::size_t i = 0; i < width; ++i) {
        CHECK(th.k[i] == best[i]);
        CHECK(th.train_max[i] == best[i]);
    }
    NeuronThresholds th3 = neuron_thresholds(d.victim, d.train_pool, layer, 3.0);
    for (std::size_t i = 0; i < width; ++i) CHECK(th3.k[i] == doctest::Approx(3.0 * best[i]));
}

TEST_CASE("neuron_thresholds: a dead neuron has k == 0") {
    Model m;
    m.input_shape = {2};
    m.class_count = 2;
    LayerSpec dn = LayerSpec::dense(2, 2);
    dn.weights.data = {0.0, 0.0, 1.0, 1.0};
    dn.bias.data = {-1.0, 0.0}; // neuron 0 pre-activation fixed at -1
    m.layers = {dn, LayerSpec::relu(), LayerSpec::dense(2, 2), LayerSpec::softmax()};
    m.layers[2].weights.data = {1, 0, 0, 1};
    m.validate();
    Dataset data = synth_blobs(2, 4, 8, 5);
    Dataset flat;
    flat.class_count = 2;
    for (std::size_t i = 0; i < data.size(); ++i) {
        flat.inputs.push_back(Tensor::from({2}, {data.inputs[i].data[0], data.inputs[i].data[1]}));
        flat.labels.push_back(data.labels[i]);
    }
    NeuronThresholds th = neuron_thresholds(m, flat, 1, 1.0);
    CHECK(th.k[0] == 0.0);
    CHECK(th.k[1] > 0.0);
}

TEST_CASE("neuron_thresholds: final layer is not a hidden layer") {
    const auto& d = desk();
    int last = static_cast<int>(d.victim.layer_count()) - 1;
    CHECK_THROWS_AS(neuron_thresholds(d.victim, d.train_pool, last, 1.0), ArgumentError);
}

TEST_CASE("gen_whitebox: every emitted case clears its threshold on the victim") {
    const auto& d = desk();
    const int layer = 1;
    NeuronThresholds th = neuron_thresholds(d.victim, d.train_pool, layer, 1.0);
    SeedSet seeds = gini_select(d.victim, d.test_data, 16, "high");
    TestSuite t = gen_whitebox(d.victim, seeds, layer, th, 0.1, 1000, 3);
    CHECK(t.mode == "whitebox");
    CHECK(t.layer == layer);
    std::size_t width = shape_numel(d.victim.layer_output_shape(layer));
    CHECK(t.size() + t.failed_neurons == width);
    for (const TestCase& tc : t.cases) {
        ForwardTrace tr = forward_trace_to(d.victim, tc.input, layer);
        CHECK(tr.outputs.back()[tc.neuron] > th.k[tc.neuron]);
        CHECK(tr.outputs.back()[tc.neuron] == tc.activation); // recorded exactly
        CHECK(in_unit_box(tc.input));
    }
    // success fraction at m=1 with a healthy budget
    CHECK(static_cast<double>(t.size()) / static_cast<double>(width) >= 0.8);
}

TEST_CASE("gen_whitebox: zero budget emits nothing and counts every neuron failed") {
    const auto& d = desk();
    const int layer = 1;
    NeuronThresholds th = neuron_thresholds(d.victim, d.train_pool, layer, 1.0);
    SeedSet seeds = gini_select(d.victim, d.test_data, 4, "high");
    TestSuite t = gen_whitebox(d.victim, seeds, layer, th, 0.1, 0);
    CHECK(t.size() == 0);
    CHECK(t.failed_neurons == static_cast<int>(shape_numel(d.victim.layer_output_shape(layer))));
}

TEST_CASE("generators are deterministic functions of their inputs") {
    const auto& d = desk();
    SeedSet seeds = gini_select(d.victim, d.test_data, 8, "high");
    CHECK(suite_to_json(gen_pgd(d.victim, seeds, 0.1, 5, 0.0)) ==
          suite_to_json(gen_pgd(d.victim, seeds, 0.1, 5, 0.0)));
    NeuronThresholds th = neuron_thresholds(d.victim, d.train_pool, 1, 2.0);
    CHECK(suite_to_json(gen_whitebox(d.victim, seeds, 1, th, 0.1, 50)) ==
          suite_to_json(gen_whitebox(d.victim, seeds, 1, th, 0.1, 50)));
}

TEST_CASE("suite files: round-trip preserves cases bitwise") {
    const auto& d = desk();
    SeedSet seeds = gini_select(d.victim, d.test_data, 6, "high");
    TestSuite bb = gen_pgd(d.victim, seeds, 0.1, 5, 0.0);
    save_suite(bb, "t_suite.json");
    TestSuite r = load_suite("t_suite.json");
    CHECK(r.mode == bb.mode);
    CHECK(r.generator == "pgd");
    CHECK(r.victim_hash == bb.victim_hash);
    CHECK(r.params == bb.params);
    REQUIRE(r.size() == bb.size());
    for (std::size_t i = 0; i < r.size(); ++i) {
        CHECK(r.cases[i].input.data == bb.cases[i].input.data);
        CHECK(r.cases[i].label == bb.cases[i].label);
    }
    std::remove("t_suite.json");

    NeuronThresholds th = neuron_thresholds(d.victim, d.train_pool, 1, 1.0);
    TestSuite wb = gen_whitebox(d.victim, seeds, 1, th, 0.1, 60);
    save_suite(wb, "t_suite.json");
    TestSuite rw = load_suite("t_suite.json");
    CHECK(rw.layer == wb.layer);
    CHECK(rw.neuron_max == wb.neuron_max);
    CHECK(rw.failed_neurons == wb.failed_neurons);
    REQUIRE(rw.size() == wb.size());
    for (std::size_t i = 0; i < rw.size(); ++i) {
        CHECK(rw.cases[i].input.data == wb.cases[i].input.data);
        CHECK(rw.cases[i].neuron == wb.cases[i].neuron);
        CHECK(rw.cases[i].activation == wb.cases[i].activation);
    }
    std::remove("t_suite.json");
}

TEST_CASE("seed files: round-trip") {
    const auto& d = desk();
    SeedSet seeds = gini_select(d.victim, d.test_data, 6, "low");
    save_seeds(seeds, "t_seeds.json");
    SeedSet r = load_seeds("t_seeds.json");
    CHECK(r.order == "low");
    CHECK(r.victim_hash == seeds.victim_hash);
    CHECK(r.labels == seeds.labels);
    CHECK(r.certainty == seeds.certainty);
    for (std::size_t i = 0; i < r.size(); ++i) CHECK(r.inputs[i].data == seeds.inputs[i].data);
    std::remove("t_seeds.json");
}
