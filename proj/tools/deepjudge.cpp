// deepjudge: file-based pipeline for model ownership testing.
//
// Every subcommand reads/writes JSON artifacts, echoes its effective config
// into its outputs, and is deterministic given that config. Exit codes:
// 0 done, 2 config/format error, 3 provenance/hash error, 4 undecidable.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "dj/dataset.hpp"
#include "dj/error.hpp"
#include "dj/forge.hpp"
#include "dj/judge.hpp"
#include "dj/jsonio.hpp"
#include "dj/metrics.hpp"
#include "dj/model_io.hpp"
#include "dj/sha256.hpp"
#include "dj/testgen.hpp"

namespace fs = std::filesystem;
using namespace dj;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitProvenance = 3;
constexpr int kExitUndecidable = 4;

// ---------------------------------------------------------------------------
// config plumbing: flat typed key-value documents mirroring the CLI options

struct OptRef {
    char type; // 'i' int, 'u' uint64, 'f' double, 's' string, 'b' bool
    void* target;
    CLI::Option* opt;
};

class ConfiguredApp {
public:
    explicit ConfiguredApp(CLI::App* app) : app_(app) {
        app_->add_option("--config", config_path_, "flat JSON config file; CLI flags override");
    }

    void bind(const std::string& name, int* v, const std::string& help) {
        refs_[name] = {'i', v, app_->add_option("--" + name, *v, help)};
    }
    void bind(const std::string& name, std::uint64_t* v, const std::string& help) {
        refs_[name] = {'u', v, app_->add_option("--" + name, *v, help)};
    }
    void bind(const std::string& name, double* v, const std::string& help) {
        refs_[name] = {'f', v, app_->add_option("--" + name, *v, help)};
    }
    void bind(const std::string& name, std::string* v, const std::string& help) {
        refs_[name] = {'s', v, app_->add_option("--" + name, *v, help)};
    }
    void bind_flag(const std::string& name, bool* v, const std::string& help) {
        refs_[name] = {'b', v, app_->add_flag("--" + name, *v, help)};
    }

    // Apply the config file (if any): unknown keys are fatal, explicit CLI
    // flags win over config values.
    void apply_config() {
        if (config_path_.empty()) return;
        Json j = parse_json_file(config_path_);
        if (!j.is_object()) throw FormatError("config: top-level value must be an object");
        for (const auto& [key, value] : j.items()) {
            auto it = refs_.find(key);
            if (it == refs_.end()) throw FormatError("config: unknown key '" + key + "'");
            OptRef& ref = it->second;
            if (ref.opt->count() > 0) continue;
            switch (ref.type) {
            case 'i':
                if (!value.is_number_integer()) throw FormatError("config: key '" + key + "' must be an integer");
                *static_cast<int*>(ref.target) = value.get<int>();
                break;
            case 'u':
                if (!value.is_number_integer()) throw FormatError("config: key '" + key + "' must be an integer");
                *static_cast<std::uint64_t*>(ref.target) = value.get<std::uint64_t>();
                break;
            case 'f':
                if (!value.is_number()) throw FormatError("config: key '" + key + "' must be a number");
                *static_cast<double*>(ref.target) = value.get<double>();
                break;
            case 's':
                if (!value.is_string()) throw FormatError("config: key '" + key + "' must be a string");
                *static_cast<std::string*>(ref.target) = value.get<std::string>();
                break;
            case 'b':
                if (!value.is_boolean()) throw FormatError("config: key '" + key + "' must be a boolean");
                *static_cast<bool*>(ref.target) = value.get<bool>();
                break;
            }
        }
    }

    std::map<std::string, std::string> effective() const {
        std::map<std::string, std::string> out;
        for (const auto& [name, ref] : refs_) {
            switch (ref.type) {
            case 'i': out[name] = std::to_string(*static_cast<int*>(ref.target)); break;
            case 'u': out[name] = std::to_string(*static_cast<std::uint64_t*>(ref.target)); break;
            case 'f': out[name] = format_real(*static_cast<double*>(ref.target)); break;
            case 's': out[name] = *static_cast<std::string*>(ref.target); break;
            case 'b': out[name] = *static_cast<bool*>(ref.target) ? "true" : "false"; break;
            }
        }
        return out;
    }

    void describe(const std::string& cmd) const {
        for (const auto& [name, ref] : refs_) {
            const char* type = ref.type == 'i'   ? "int"
                               : ref.type == 'u' ? "uint64"
                               : ref.type == 'f' ? "real"
                               : ref.type == 's' ? "string"
                                                 : "bool";
            std::printf("%s.%s: %s  # %s\n", cmd.c_str(), name.c_str(), type,
                        ref.opt->get_description().c_str());
        }
    }

private:
    CLI::App* app_;
    std::string config_path_;
    std::map<std::string, OptRef> refs_;
};

// ---------------------------------------------------------------------------
// shared helpers

std::string resolve_model_path(const std::string& p) {
    if (p.size() > 5 && p.substr(p.size() - 5) == ".json") return p;
    return (fs::path(p) / "model.json").string();
}

Model load_model_arg(const std::string& p) { return load_model(resolve_model_path(p)); }

void write_model_dir(const Model& model, const std::string& dir,
                     const std::map<std::string, std::string>& extra_provenance) {
    fs::create_directories(dir);
    std::string model_path = (fs::path(dir) / "model.json").string();
    save_model(model, model_path);
    JsonWriter w;
    w.begin_object();
    w.key("format_version").value(1);
    w.key("model_hash").value(sha256_file(model_path));
    w.key("metadata").begin_object();
    for (const auto& [k, v] : model.metadata) w.key(k).value(v);
    w.end_object();
    w.key("stats").begin_object();
    for (const auto& [k, v] : extra_provenance) w.key(k).value(v);
    w.end_object();
    w.end_object();
    write_text_file((fs::path(dir) / "provenance.json").string(), w.str());
}

struct TrainOpts {
    int epochs = 10;
    int batch_size = 16;
    double learning_rate = 0.05;
    double momentum = 0.0;
    std::uint64_t seed = 0;

    void bind(ConfiguredApp& cfg) {
        cfg.bind("epochs", &epochs, "training epochs");
        cfg.bind("batch-size", &batch_size, "minibatch size");
        cfg.bind("learning-rate", &learning_rate, "SGD learning rate");
        cfg.bind("momentum", &momentum, "SGD momentum (0 = plain)");
        cfg.bind("seed", &seed, "RNG seed");
    }
    TrainConfig to_config() const { return {epochs, batch_size, learning_rate, momentum, seed}; }
};

int run_guarded(const std::function<void()>& body) {
    try {
        body();
        return kExitOk;
    } catch (const ProvenanceError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitProvenance;
    } catch (const UndecidableError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUndecidable;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

// ---------------------------------------------------------------------------

struct Cli {
    CLI::App app{"deepjudge: behavioral model-ownership testing"};
    std::vector<std::pair<std::string, ConfiguredApp*>> schemas;

    // State outlives this call: CLI11 stores pointers into it.
    template <class State, class Bind, class Run>
    void command(const std::string& name, const std::string& help, Bind bind, Run run) {
        CLI::App* sub = app.add_subcommand(name, help);
        auto cfg = std::make_shared<ConfiguredApp>(sub);
        auto state = std::make_shared<State>();
        bind(*state, *cfg);
        schemas.emplace_back(name, cfg.get());
        cfgs.push_back(cfg); // keep alive
        sub->callback([this, cfg, state, run] {
            exit_code = run_guarded([&] {
                cfg->apply_config();
                run(*state, *cfg);
            });
        });
    }

    std::vector<std::shared_ptr<ConfiguredApp>> cfgs;
    int exit_code = kExitOk;
};

} // namespace

int main(int argc, char** argv) {
    Cli cli;
    cli.app.require_subcommand(0, 1);

    // ---- data ----
    struct DataOpts {
        std::string out, idx_images, idx_labels, name = "synth";
        int classes = 4, per_class = 120, side = 12;
        std::uint64_t seed = 0;
    };
    cli.command<DataOpts>(
        "data", "create a dataset file (synthetic blobs or IDX import)",
        [](DataOpts& o, ConfiguredApp& cfg) {
            cfg.bind("out", &o.out, "output dataset.json path");
            cfg.bind("classes", &o.classes, "synthetic class count");
            cfg.bind("per-class", &o.per_class, "synthetic samples per class");
            cfg.bind("side", &o.side, "synthetic image side length");
            cfg.bind("seed", &o.seed, "synthetic RNG seed");
            cfg.bind("idx-images", &o.idx_images, "IDX image file (switches to import mode)");
            cfg.bind("idx-labels", &o.idx_labels, "IDX label file");
            cfg.bind("name", &o.name, "dataset name");
        },
        [](DataOpts& o, ConfiguredApp& cfg) {
            if (o.out.empty()) throw ArgumentError("data: --out is required");
            Dataset d;
            if (!o.idx_images.empty()) {
                if (o.idx_labels.empty()) throw ArgumentError("data: --idx-labels is required with --idx-images");
                d = load_idx(o.idx_images, o.idx_labels);
                d.name = o.name;
            } else {
                d = synth_blobs(o.classes, o.per_class, o.side, o.seed);
            }
            auto echo = cfg.effective();
            save_dataset(d, o.out, &echo);
        });

    // ---- split ----
    struct SplitOpts {
        std::string data, out_a, out_b;
        double fraction = 0.5;
        std::uint64_t seed = 0;
    };
    cli.command<SplitOpts>(
        "split", "stratified split of a dataset into two halves",
        [](SplitOpts& o, ConfiguredApp& cfg) {
            cfg.bind("data", &o.data, "input dataset.json");
            cfg.bind("out-a", &o.out_a, "output path for the first part");
            cfg.bind("out-b", &o.out_b, "output path for the second part");
            cfg.bind("fraction", &o.fraction, "fraction going to the first part");
            cfg.bind("seed", &o.seed, "shuffle seed");
        },
        [](SplitOpts& o, ConfiguredApp& cfg) {
            if (o.data.empty() || o.out_a.empty() || o.out_b.empty())
                throw ArgumentError("split: --data, --out-a and --out-b are required");
            auto [a, b] = split(load_dataset(o.data), {o.fraction, o.seed});
            auto echo = cfg.effective();
            save_dataset(a, o.out_a, &echo);
            save_dataset(b, o.out_b, &echo);
        });

    // ---- train ----
    struct TrainCmdOpts {
        std::string data, out_dir;
        TrainOpts train;
    };
    cli.command<TrainCmdOpts>(
        "train", "train a victim model on a dataset",
        [](TrainCmdOpts& o, ConfiguredApp& cfg) {
            o.train.epochs = 14;
            cfg.bind("data", &o.data, "training dataset.json");
            cfg.bind("out-dir", &o.out_dir, "output model directory");
            o.train.bind(cfg);
        },
        [](TrainCmdOpts& o, ConfiguredApp& cfg) {
            if (o.data.empty() || o.out_dir.empty())
                throw ArgumentError("train: --data and --out-dir are required");
            Model m = train(o.train.to_config(), load_dataset(o.data));
            write_model_dir(m, o.out_dir, cfg.effective());
        });

    // ---- negatives ----
    struct NegOpts {
        std::string data_neg1, data_neg2, out_dir;
        int neg1_count = 4, neg2_count = 4;
        std::uint64_t seed_base = 100;
        TrainOpts train;
    };
    cli.command<NegOpts>(
        "negatives", "train independent negative suspect models",
        [](NegOpts& o, ConfiguredApp& cfg) {
            o.train.epochs = 14;
            cfg.bind("data-neg1", &o.data_neg1, "dataset for seed-varied negatives (victim's data)");
            cfg.bind("data-neg2", &o.data_neg2, "dataset for data-varied negatives (held-out half)");
            cfg.bind("neg1-count", &o.neg1_count, "number of seed-varied negatives");
            cfg.bind("neg2-count", &o.neg2_count, "number of data-varied negatives");
            cfg.bind("seed-base", &o.seed_base, "first RNG seed; increments per model");
            cfg.bind("out-dir", &o.out_dir, "output directory (one subdirectory per model)");
            o.train.bind(cfg);
        },
        [](NegOpts& o, ConfiguredApp& cfg) {
            if (o.out_dir.empty()) throw ArgumentError("negatives: --out-dir is required");
            if (o.neg1_count > 0 && o.data_neg1.empty())
                throw ArgumentError("negatives: --data-neg1 is required for neg1-count > 0");
            if (o.neg2_count > 0 && o.data_neg2.empty())
                throw ArgumentError("negatives: --data-neg2 is required for neg2-count > 0");
            std::uint64_t seed = o.seed_base;
            char name[32];
            if (o.neg1_count > 0) {
                Dataset d1 = load_dataset(o.data_neg1);
                for (int i = 0; i < o.neg1_count; ++i) {
                    TrainConfig tc = o.train.to_config();
                    tc.rng_seed = seed++;
                    Model m = train(tc, d1);
                    m.metadata["negative_kind"] = "neg1";
                    std::snprintf(name, sizeof(name), "neg1_%02d", i);
                    write_model_dir(m, (fs::path(o.out_dir) / name).string(), cfg.effective());
                }
            }
            if (o.neg2_count > 0) {
                Dataset d2 = load_dataset(o.data_neg2);
                for (int i = 0; i < o.neg2_count; ++i) {
                    TrainConfig tc = o.train.to_config();
                    tc.rng_seed = seed++;
                    Model m = train(tc, d2);
                    m.metadata["negative_kind"] = "neg2";
                    std::snprintf(name, sizeof(name), "neg2_%02d", i);
                    write_model_dir(m, (fs::path(o.out_dir) / name).string(), cfg.effective());
                }
            }
        });

    // ---- derive ----
    struct DeriveOpts {
        std::string victim, attack, data, eval_data, suite, out_dir;
        double ratio = 0.6, lambda = 0.1, epsilon = 0.1, slice_fraction = 0.2;
        int rounds = 4, steps = 5, new_classes = 0;
        std::uint64_t slice_seed = 7;
        TrainOpts train;
    };
    cli.command<DeriveOpts>(
        "derive", "derive a suspect model from a victim via an attack",
        [](DeriveOpts& o, ConfiguredApp& cfg) {
            cfg.bind("victim", &o.victim, "victim model directory or model.json");
            cfg.bind("attack", &o.attack,
                     "one of ft-ll, ft-al, rt-al, prune, knockoff, jba, adapt-b, adapt-w, adv-train, vtl");
            cfg.bind("data", &o.data, "attacker dataset (finetune source / auxiliary / seeds / new-task)");
            cfg.bind("eval-data", &o.eval_data, "held-out dataset for agreement stats (extraction attacks)");
            cfg.bind("suite", &o.suite, "exposed suite.json (adapt-b / adapt-w)");
            cfg.bind("out-dir", &o.out_dir, "output model directory");
            cfg.bind("ratio", &o.ratio, "prune ratio in [0,1)");
            cfg.bind("lambda", &o.lambda, "jba augmentation step");
            cfg.bind("rounds", &o.rounds, "jba rounds");
            cfg.bind("epsilon", &o.epsilon, "adv-train perturbation bound");
            cfg.bind("steps", &o.steps, "adv-train PGD steps");
            cfg.bind("new-classes", &o.new_classes, "vtl: new label-space size");
            cfg.bind("slice-fraction", &o.slice_fraction,
                     "stratified fraction of --data used by finetune-style attacks");
            cfg.bind("slice-seed", &o.slice_seed, "slice RNG seed");
            o.train.bind(cfg);
        },
        [](DeriveOpts& o, ConfiguredApp& cfg) {
            if (o.victim.empty() || o.attack.empty() || o.out_dir.empty())
                throw ArgumentError("derive: --victim, --attack and --out-dir are required");
            Model victim = load_model_arg(o.victim);
            TrainConfig tc = o.train.to_config();
            std::map<std::string, std::string> stats = cfg.effective();
            auto sliced = [&](const char* what) {
                if (o.data.empty()) throw ArgumentError(std::string("derive: --data is required for ") + what);
                return stratified_slice(load_dataset(o.data), o.slice_fraction, o.slice_seed);
            };
            auto full_data = [&](const char* what) {
                if (o.data.empty()) throw ArgumentError(std::string("derive: --data is required for ") + what);
                return load_dataset(o.data);
            };
            Model out;
            if (o.attack == "ft-ll" || o.attack == "ft-al" || o.attack == "rt-al") {
                out = finetune(victim, sliced(o.attack.c_str()), finetune_mode_from_name(o.attack), tc);
            } else if (o.attack == "prune") {
                out = prune(victim, o.ratio, tc, sliced("prune"));
            } else if (o.attack == "knockoff") {
                out = extract_knockoff(victim, full_data("knockoff"), tc);
            } else if (o.attack == "jba") {
                out = extract_jba(victim, full_data("jba"), o.rounds, o.lambda, tc);
            } else if (o.attack == "adapt-b" || o.attack == "adapt-w") {
                if (o.suite.empty()) throw ArgumentError("derive: --suite is required for adaptive attacks");
                TestSuite suite = load_suite(o.suite);
                AdaptKind kind = o.attack == "adapt-b" ? AdaptKind::BlackBox : AdaptKind::WhiteBox;
                out = adapt_attack(victim, kind, suite, sliced(o.attack.c_str()), tc);
            } else if (o.attack == "adv-train") {
                out = adv_train(victim, sliced("adv-train"), o.epsilon, o.steps, tc);
            } else if (o.attack == "vtl") {
                if (o.new_classes == 0) throw ArgumentError("derive: --new-classes is required for vtl");
                out = vtl_transfer(victim, full_data("vtl"), o.new_classes, tc);
            } else {
                throw ArgumentError("derive: unknown attack kind '" + o.attack + "'");
            }
            if (!o.eval_data.empty() &&
                (o.attack == "knockoff" || o.attack == "jba")) {
                Dataset eval = load_dataset(o.eval_data);
                stats["agreement"] = format_real(label_agreement(out, victim, eval));
            }
            write_model_dir(out, o.out_dir, stats);
        });

    // ---- seeds ----
    struct SeedOpts {
        std::string model, data, out, order = "high";
        int count = 128;
    };
    cli.command<SeedOpts>(
        "seeds", "select high/low-certainty seeds from a dataset",
        [](SeedOpts& o, ConfiguredApp& cfg) {
            cfg.bind("model", &o.model, "victim model directory or model.json");
            cfg.bind("data", &o.data, "dataset to select from");
            cfg.bind("count", &o.count, "number of seeds");
            cfg.bind("order", &o.order, "high (most certain first) or low");
            cfg.bind("out", &o.out, "output seeds.json");
        },
        [](SeedOpts& o, ConfiguredApp& cfg) {
            if (o.model.empty() || o.data.empty() || o.out.empty())
                throw ArgumentError("seeds: --model, --data and --out are required");
            Model m = load_model_arg(o.model);
            SeedSet s = gini_select(m, load_dataset(o.data), o.count, o.order);
            auto echo = cfg.effective();
            save_seeds(s, o.out, &echo);
        });

    // ---- testgen ----
    struct TestgenOpts {
        std::string model, seeds, out, mode = "pgd", train_data;
        double epsilon = 0.1, step_size = 0.0, c = 5.0, lr = 0.1, m = 3.0;
        int steps = 10, iters = 1000, layer = 1, retries = 3;
        double cw_lr = 0.01;
    };
    cli.command<TestgenOpts>(
        "testgen", "generate a black-box or white-box test suite",
        [](TestgenOpts& o, ConfiguredApp& cfg) {
            cfg.bind("model", &o.model, "victim model directory or model.json");
            cfg.bind("seeds", &o.seeds, "seeds.json from the seeds subcommand");
            cfg.bind("mode", &o.mode, "fgsm | pgd | cw | whitebox");
            cfg.bind("out", &o.out, "output suite.json");
            cfg.bind("epsilon", &o.epsilon, "L-inf bound (fgsm/pgd)");
            cfg.bind("steps", &o.steps, "pgd steps");
            cfg.bind("step-size", &o.step_size, "pgd step size (0 = 2.5*eps/steps)");
            cfg.bind("c", &o.c, "cw balance constant");
            cfg.bind("cw-lr", &o.cw_lr, "cw gradient-descent rate");
            cfg.bind("iters", &o.iters, "cw / whitebox iteration budget");
            cfg.bind("layer", &o.layer, "whitebox: target model layer");
            cfg.bind("m", &o.m, "whitebox: threshold scale over the training max");
            cfg.bind("lr", &o.lr, "whitebox: ascent rate");
            cfg.bind("retries", &o.retries, "whitebox: extra seeds tried after a failed search");
            cfg.bind("train-data", &o.train_data, "whitebox: training data for neuron thresholds");
        },
        [](TestgenOpts& o, ConfiguredApp& cfg) {
            if (o.model.empty() || o.seeds.empty() || o.out.empty())
                throw ArgumentError("testgen: --model, --seeds and --out are required");
            Model m = load_model_arg(o.model);
            SeedSet seeds = load_seeds(o.seeds);
            if (seeds.size() == 0) throw ArgumentError("testgen: seed file is empty");
            if (seeds.victim_hash != model_hash(m))
                throw ProvenanceError("testgen: seeds were selected for a different victim (hash mismatch)");
            TestSuite suite;
            if (o.mode == "fgsm") {
                suite = gen_fgsm(m, seeds, o.epsilon);
            } else if (o.mode == "pgd") {
                suite = gen_pgd(m, seeds, o.epsilon, o.steps, o.step_size);
            } else if (o.mode == "cw") {
                suite = gen_cw(m, seeds, o.c, o.iters, o.cw_lr);
            } else if (o.mode == "whitebox") {
                if (o.train_data.empty())
                    throw ArgumentError("testgen: --train-data is required for whitebox mode");
                NeuronThresholds th =
                    neuron_thresholds(m, load_dataset(o.train_data), o.layer, o.m);
                suite = gen_whitebox(m, seeds, o.layer, th, o.lr, o.iters, o.retries);
            } else {
                throw ArgumentError("testgen: unknown mode '" + o.mode + "'");
            }
            auto echo = cfg.effective();
            save_suite(suite, o.out, &echo);
        });

    // ---- measure ----
    struct MeasureOpts {
        std::string victim, suspect, bb_suite, wb_suite, out, setting = "both", suspect_id;
        double beta = 0.5;
        int layer = -1;
    };
    cli.command<MeasureOpts>(
        "measure", "compute the distance metrics between victim and suspect",
        [](MeasureOpts& o, ConfiguredApp& cfg) {
            cfg.bind("victim", &o.victim, "victim model directory or model.json");
            cfg.bind("suspect", &o.suspect, "suspect model directory or model.json");
            cfg.bind("bb-suite", &o.bb_suite, "black-box suite.json");
            cfg.bind("wb-suite", &o.wb_suite, "white-box suite.json");
            cfg.bind("setting", &o.setting, "both | blackbox | whitebox");
            cfg.bind("beta", &o.beta, "activation-threshold scale for NAD/LAD");
            cfg.bind("layer", &o.layer, "white-box layer (-1 = the suite's layer)");
            cfg.bind("suspect-id", &o.suspect_id, "label recorded in the scores file");
            cfg.bind("out", &o.out, "output scores.json");
        },
        [](MeasureOpts& o, ConfiguredApp& cfg) {
            if (o.victim.empty() || o.suspect.empty() || o.out.empty())
                throw ArgumentError("measure: --victim, --suspect and --out are required");
            Model victim = load_model_arg(o.victim);
            Model suspect = load_model_arg(o.suspect);
            TestSuite bb, wb;
            bool has_bb = !o.bb_suite.empty(), has_wb = !o.wb_suite.empty();
            if (has_bb) bb = load_suite(o.bb_suite);
            if (has_wb) wb = load_suite(o.wb_suite);
            ScoresDoc doc;
            doc.victim_hash = model_hash(victim);
            doc.suspect_hash = model_hash(suspect);
            doc.suspect_id = o.suspect_id.empty() ? o.suspect : o.suspect_id;
            doc.setting = o.setting;
            doc.beta = o.beta;
            doc.result = measure_all(victim, suspect, has_bb ? &bb : nullptr,
                                     has_wb ? &wb : nullptr, o.layer, o.beta,
                                     setting_from_name(o.setting));
            doc.config = cfg.effective();
            save_scores(doc, o.out);
        });

    // ---- calibrate ----
    struct CalibrateOpts {
        std::string scores_list, out;
        double alpha_blackbox = 0.9, alpha_whitebox = 0.6, confidence = 0.99;
    };
    cli.command<CalibrateOpts>(
        "calibrate", "turn negative-suspect scores into per-metric thresholds",
        [](CalibrateOpts& o, ConfiguredApp& cfg) {
            cfg.bind("scores", &o.scores_list, "comma-separated negative scores.json paths");
            cfg.bind("alpha-blackbox", &o.alpha_blackbox, "relaxing factor for black-box metrics");
            cfg.bind("alpha-whitebox", &o.alpha_whitebox, "relaxing factor for white-box metrics");
            cfg.bind("confidence", &o.confidence, "one-sided confidence level for the lower bound");
            cfg.bind("out", &o.out, "output thresholds.json");
        },
        [](CalibrateOpts& o, ConfiguredApp& cfg) {
            if (o.scores_list.empty() || o.out.empty())
                throw ArgumentError("calibrate: --scores and --out are required");
            NegativeStats stats;
            ThresholdsDoc doc;
            std::string victim_hash;
            std::stringstream ss(o.scores_list);
            std::string path;
            while (std::getline(ss, path, ',')) {
                if (path.empty()) continue;
                ScoresDoc s = load_scores(path);
                if (victim_hash.empty()) victim_hash = s.victim_hash;
                if (s.victim_hash != victim_hash)
                    throw ProvenanceError("calibrate: scores files reference different victims");
                for (const MetricReport& r : s.result.reports)
                    stats.scores[r.metric].push_back(r.value);
                doc.negative_scores_hashes.push_back(sha256_file(path));
            }
            doc.thresholds = calibrate(stats, o.alpha_blackbox, o.alpha_whitebox, o.confidence);
            for (const std::string& w : doc.thresholds.warnings)
                std::fprintf(stderr, "warning: %s\n", w.c_str());
            doc.config = cfg.effective();
            save_thresholds(doc, o.out);
        });

    // ---- judge ----
    struct JudgeOpts {
        std::string scores, thresholds, out;
        std::string victim, suspect, bb_suite, wb_suite; // optional re-verification
    };
    cli.command<JudgeOpts>(
        "judge", "vote the measured scores against the thresholds",
        [](JudgeOpts& o, ConfiguredApp& cfg) {
            cfg.bind("scores", &o.scores, "suspect scores.json");
            cfg.bind("thresholds", &o.thresholds, "thresholds.json");
            cfg.bind("out", &o.out, "output verdict.json");
            cfg.bind("victim", &o.victim, "victim model path, re-verified against the scores hash");
            cfg.bind("suspect", &o.suspect, "suspect model path, re-verified");
            cfg.bind("bb-suite", &o.bb_suite, "black-box suite path, re-verified");
            cfg.bind("wb-suite", &o.wb_suite, "white-box suite path, re-verified");
        },
        [](JudgeOpts& o, ConfiguredApp& cfg) {
            if (o.scores.empty() || o.thresholds.empty() || o.out.empty())
                throw ArgumentError("judge: --scores, --thresholds and --out are required");
            ScoresDoc scores = load_scores(o.scores);
            ThresholdsDoc thresholds = load_thresholds(o.thresholds);

            if (!o.victim.empty() && sha256_file(resolve_model_path(o.victim)) != scores.victim_hash)
                throw ProvenanceError("judge: victim model does not match the scores file hash");
            if (!o.suspect.empty() && sha256_file(resolve_model_path(o.suspect)) != scores.suspect_hash)
                throw ProvenanceError("judge: suspect model does not match the scores file hash");
            auto check_suite = [&](const std::string& path) {
                if (path.empty()) return;
                std::string h = sha256_hex(suite_to_json(load_suite(path)));
                for (const MetricReport& r : scores.result.reports)
                    if (r.suite_hash == h) return;
                throw ProvenanceError("judge: suite file does not match any suite hash in the scores");
            };
            check_suite(o.bb_suite);
            check_suite(o.wb_suite);

            VerdictDoc doc;
            doc.verdict = vote(scores.result.reports, scores.result.skipped, thresholds.thresholds);
            doc.victim_hash = scores.victim_hash;
            doc.suspect_hash = scores.suspect_hash;
            doc.scores_hash = sha256_file(o.scores);
            doc.thresholds_hash = sha256_file(o.thresholds);
            doc.config = cfg.effective();
            save_verdict(doc, o.out);
            std::printf("Copy: %s (%d/%d)\n", doc.verdict.yes ? "YES" : "NO",
                        doc.verdict.copy_votes, doc.verdict.applicable);
        });

    // ---- report ----
    struct ReportOpts {
        std::string pos_list, neg_list, out_dir, format = "json";
    };
    cli.command<ReportOpts>(
        "report", "similarity (radar) and ROC/AUC data from scores files",
        [](ReportOpts& o, ConfiguredApp& cfg) {
            cfg.bind("pos", &o.pos_list, "comma-separated positive-suspect scores.json paths");
            cfg.bind("neg", &o.neg_list, "comma-separated negative-suspect scores.json paths");
            cfg.bind("format", &o.format, "json | csv");
            cfg.bind("out-dir", &o.out_dir, "output directory");
        },
        [](ReportOpts& o, ConfiguredApp& cfg) {
            if (o.out_dir.empty()) throw ArgumentError("report: --out-dir is required");
            if (o.format != "json" && o.format != "csv")
                throw ArgumentError("report: format must be json or csv");
            auto load_list = [](const std::string& list) {
                std::vector<ScoresDoc> docs;
                std::stringstream ss(list);
                std::string path;
                while (std::getline(ss, path, ','))
                    if (!path.empty()) docs.push_back(load_scores(path));
                return docs;
            };
            std::vector<ScoresDoc> pos = load_list(o.pos_list);
            std::vector<ScoresDoc> neg = load_list(o.neg_list);
            if (pos.empty() && neg.empty()) throw ArgumentError("report: no scores files given");
            std::string victim_hash;
            for (const auto* group : {&pos, &neg})
                for (const ScoresDoc& d : *group) {
                    if (victim_hash.empty()) victim_hash = d.victim_hash;
                    if (d.victim_hash != victim_hash)
                        throw ProvenanceError("report: scores files reference different victims");
                }
            fs::create_directories(o.out_dir);

            // per-metric normalization over the whole population
            std::map<Metric, std::pair<double, double>> range; // min, max
            auto scan = [&](const std::vector<ScoresDoc>& docs) {
                for (const ScoresDoc& d : docs)
                    for (const MetricReport& r : d.result.reports) {
                        auto it = range.find(r.metric);
                        if (it == range.end())
                            range[r.metric] = {r.value, r.value};
                        else {
                            it->second.first = std::min(it->second.first, r.value);
                            it->second.second = std::max(it->second.second, r.value);
                        }
                    }
            };
            scan(pos);
            scan(neg);
            auto similarity = [&](Metric m, double v) {
                auto [lo, hi] = range[m];
                double norm = hi > lo ? (v - lo) / (hi - lo) : 0.0;
                return 1.0 - norm;
            };

            if (o.format == "csv") {
                std::string csv = "suspect_id,population,metric,value,layer,similarity\n";
                auto add = [&](const std::vector<ScoresDoc>& docs, const char* population) {
                    for (const ScoresDoc& d : docs)
                        for (const MetricReport& r : d.result.reports) {
                            csv += d.suspect_id;
                            csv += ",";
                            csv += population;
                            csv += ",";
                            csv += metric_name(r.metric);
                            csv += ",";
                            csv += format_real(r.value);
                            csv += ",";
                            csv += std::to_string(r.layer);
                            csv += ",";
                            csv += format_real(similarity(r.metric, r.value));
                            csv += "\n";
                        }
                };
                add(pos, "positive");
                add(neg, "negative");
                write_text_file((fs::path(o.out_dir) / "radar.csv").string(), csv);
            } else {
                JsonWriter w;
                w.begin_object();
                w.key("format_version").value(1);
                w.key("victim_hash").value(victim_hash);
                w.key("suspects").begin_array();
                auto add = [&](const std::vector<ScoresDoc>& docs, const char* population) {
                    for (const ScoresDoc& d : docs) {
                        w.begin_object();
                        w.key("suspect_id").value(d.suspect_id);
                        w.key("population").value(population);
                        w.key("axes").begin_array();
                        for (const MetricReport& r : d.result.reports) {
                            w.begin_object();
                            w.key("metric").value(metric_name(r.metric));
                            w.key("value").value(r.value);
                            w.key("similarity").value(similarity(r.metric, r.value));
                            w.end_object();
                        }
                        w.end_array();
                        w.end_object();
                    }
                };
                add(pos, "positive");
                add(neg, "negative");
                w.end_array();
                w.key("config").begin_object();
                for (const auto& [k, v] : cfg.effective()) w.key(k).value(v);
                w.end_object();
                w.end_object();
                write_text_file((fs::path(o.out_dir) / "radar.json").string(), w.str());
            }

            // ROC/AUC per metric when both populations are present
            if (!pos.empty() && !neg.empty()) {
                std::map<Metric, std::pair<std::vector<double>, std::vector<double>>> by_metric;
                for (const ScoresDoc& d : pos)
                    for (const MetricReport& r : d.result.reports)
                        by_metric[r.metric].first.push_back(r.value);
                for (const ScoresDoc& d : neg)
                    for (const MetricReport& r : d.result.reports)
                        by_metric[r.metric].second.push_back(r.value);
                if (o.format == "csv") {
                    std::string csv = "metric,auc\n";
                    for (const auto& [metric, lists] : by_metric) {
                        if (lists.first.empty() || lists.second.empty()) continue;
                        auto [points, auc] = roc_auc(lists.first, lists.second);
                        csv += metric_name(metric);
                        csv += ",";
                        csv += format_real(auc);
                        csv += "\n";
                    }
                    write_text_file((fs::path(o.out_dir) / "roc.csv").string(), csv);
                } else {
                    JsonWriter w;
                    w.begin_object();
                    w.key("format_version").value(1);
                    w.key("metrics").begin_object();
                    for (const auto& [metric, lists] : by_metric) {
                        if (lists.first.empty() || lists.second.empty()) continue;
                        auto [points, auc] = roc_auc(lists.first, lists.second);
                        w.key(metric_name(metric)).begin_object();
                        w.key("auc").value(auc);
                        w.key("points").begin_array();
                        for (const RocPoint& p : points) {
                            w.begin_object();
                            w.key("fpr").value(p.fpr);
                            w.key("tpr").value(p.tpr);
                            w.end_object();
                        }
                        w.end_array();
                        w.end_object();
                    }
                    w.end_object();
                    w.end_object();
                    write_text_file((fs::path(o.out_dir) / "roc.json").string(), w.str());
                }
            }
        });

    // ---- explain-config ----
    bool explain = false;
    cli.app.add_flag("--explain-config", explain, "print every subcommand's config schema and exit");

    CLI11_PARSE(cli.app, argc, argv);

    if (explain) {
        for (const auto& [name, cfg] : cli.schemas) cfg->describe(name);
        return kExitOk;
    }
    if (cli.app.get_subcommands().empty()) {
        std::fprintf(stderr, "%s\n", cli.app.help().c_str());
        return kExitConfig;
    }
    return cli.exit_code;
}
