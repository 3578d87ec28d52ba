#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dj/dataset.hpp"
#include "dj/model.hpp"

namespace dj {

// Seeds chosen by certainty score, restricted to victim-correctly-classified
// samples. Scores are sorted per the declared order.
struct SeedSet {
    std::vector<Tensor> inputs;
    std::vector<int> labels;
    std::vector<double> certainty; // sum of squared output probabilities, in [1/C, 1]
    std::string order;             // "high" or "low"
    std::string source;            // dataset name
    std::string victim_hash;

    std::size_t size() const { return inputs.size(); }
};

// Certainty score of one probability vector: sum of squares.
double certainty_score(const Tensor& probs);

// The n correctly-classified samples with highest (order "high") or lowest
// (order "low") certainty; ties broken by dataset index.
SeedSet gini_select(const Model& model, const Dataset& dataset, std::size_t n,
                    const std::string& order);

struct TestCase {
    Tensor input;
    int label = -1;         // blackbox: seed's ground-truth label
    int adversarial = -1;   // blackbox: 1 if it fools the victim, 0 if not, -1 unknown
    int neuron = -1;        // whitebox: targeted neuron (flat index)
    double activation = 0.0; // whitebox: achieved output on the victim
};

struct TestSuite {
    std::string mode;      // "blackbox" | "whitebox"
    std::string generator; // "fgsm" | "pgd" | "cw" | "neuron-corner"
    std::map<std::string, double> params;
    std::string victim_hash;
    int layer = -1;                  // whitebox: targeted model layer
    std::vector<double> neuron_max;  // whitebox: per-neuron training max on the victim
    int failed_neurons = 0;          // whitebox: neurons with no successful case
    std::vector<TestCase> cases;

    std::size_t size() const { return cases.size(); }
};

// Per-neuron activation thresholds k = m * (training max of the neuron).
struct NeuronThresholds {
    int layer = -1;
    double m = 1.0;
    std::vector<double> train_max;
    std::vector<double> k;
};

// One FGSM/PGD step chain for a single input; shared by suite generation and
// adversarial training. steps=1 with step_size=epsilon is exactly FGSM.
Tensor pgd_perturb(const Model& model, const Tensor& x, int label, double epsilon, int steps,
                   double step_size);

inline double default_pgd_step(double epsilon, int steps) { return 2.5 * epsilon / steps; }

TestSuite gen_fgsm(const Model& model, const SeedSet& seeds, double epsilon);
TestSuite gen_pgd(const Model& model, const SeedSet& seeds, double epsilon, int steps,
                  double step_size = 0.0 /* 0 -> 2.5*eps/steps */);
TestSuite gen_cw(const Model& model, const SeedSet& seeds, double c, int iters, double lr);

NeuronThresholds neuron_thresholds(const Model& model, const Dataset& train_data, int layer,
                                   double m);

// Per-neuron corner search: gradient-ascend a round-robin seed until the
// neuron's output exceeds its threshold or the budget runs out. A failed
// search may retry with up to `retries` further seeds (each with a fresh
// iteration budget); neurons that still fail are dropped and counted.
TestSuite gen_whitebox(const Model& model, const SeedSet& seeds, int layer,
                       const NeuronThresholds& thresholds, double lr, int iters, int retries = 0);

// Suite / seed file schemas. `config`, when given, is echoed into the file
// as an informational block; loaders ignore it, and suite identity hashes are
// always computed over the config-free document.
std::string suite_to_json(const TestSuite& suite,
                          const std::map<std::string, std::string>* config = nullptr);
TestSuite suite_from_json(const std::string& text, const std::string& origin = "suite");
void save_suite(const TestSuite& suite, const std::string& path,
                const std::map<std::string, std::string>* config = nullptr);
TestSuite load_suite(const std::string& path);

std::string seeds_to_json(const SeedSet& seeds,
                          const std::map<std::string, std::string>* config = nullptr);
SeedSet seeds_from_json(const std::string& text, const std::string& origin = "seeds");
void save_seeds(const SeedSet& seeds, const std::string& path,
                const std::map<std::string, std::string>* config = nullptr);
SeedSet load_seeds(const std::string& path);

} // namespace dj
