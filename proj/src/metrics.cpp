#include "dj/metrics.hpp"

#include <cmath>

#include "dj/error.hpp"
#include "dj/jsonio.hpp"
#include "dj/sha256.hpp"

namespace dj {

const char* metric_name(Metric m) {
    switch (m) {
    case Metric::RobD: return "RobD";
    case Metric::JSD: return "JSD";
    case Metric::NOD: return "NOD";
    case Metric::NAD: return "NAD";
    case Metric::LOD: return "LOD";
    case Metric::LAD: return "LAD";
    }
    throw ArgumentError("unknown metric");
}

Metric metric_from_name(const std::string& name) {
    for (Metric m : kAllMetrics)
        if (name == metric_name(m)) return m;
    throw ArgumentError("unknown metric '" + name + "'");
}

bool metric_is_blackbox(Metric m) { return m == Metric::RobD || m == Metric::JSD; }

const char* setting_name(Setting s) {
    switch (s) {
    case Setting::Both: return "both";
    case Setting::BlackBox: return "blackbox";
    case Setting::WhiteBox: return "whitebox";
    }
    throw ArgumentError("unknown setting");
}

Setting setting_from_name(const std::string& name) {
    if (name == "both") return Setting::Both;
    if (name == "blackbox") return Setting::BlackBox;
    if (name == "whitebox") return Setting::WhiteBox;
    throw ArgumentError("unknown setting '" + name + "'");
}

namespace {

void check_blackbox_suite(const Model& model, const TestSuite& suite, const char* what) {
    if (suite.mode != "blackbox") throw ArgumentError(std::string(what) + ": needs a black-box suite");
    if (suite.cases.empty()) throw ArgumentError(std::string(what) + ": empty suite");
    for (const TestCase& tc : suite.cases)
        if (tc.label < 0 || tc.label >= model.class_count)
            throw ArgumentError(std::string(what) + ": suite label out of model's class range");
}

void check_class_match(const Model& victim, const Model& suspect, const char* what) {
    if (victim.class_count != suspect.class_count)
        throw NotApplicableError(std::string(what) + ": class counts differ (" +
                                 std::to_string(victim.class_count) + " vs " +
                                 std::to_string(suspect.class_count) + ")");
}

// KL(p || q) with natural log and 0*log0 := 0.
double kl(const Tensor& p, const Tensor& q) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.numel(); ++i)
        if (p[i] > 0.0) s += p[i] * std::log(p[i] / q[i]);
    return s;
}

void check_whitebox_applicable(const Model& victim, const Model& suspect, const TestSuite& suite,
                               int layer, const char* what) {
    if (suite.mode != "whitebox") throw ArgumentError(std::string(what) + ": needs a white-box suite");
    if (suite.cases.empty()) throw ArgumentError(std::string(what) + ": empty suite");
    if (layer != suite.layer)
        throw ArgumentError(std::string(what) + ": layer does not match the suite's target layer");
    if (layer < 0) throw IndexError(std::string(what) + ": invalid layer");
    if (victim.input_shape != suspect.input_shape)
        throw NotApplicableError(std::string(what) + ": input shapes differ");
    if (static_cast<std::size_t>(layer) >= victim.layer_count() ||
        static_cast<std::size_t>(layer) >= suspect.layer_count())
        throw NotApplicableError(std::string(what) + ": layer beyond one model's depth");
    for (int l = 0; l <= layer; ++l)
        if (!victim.layers[l].same_arch(suspect.layers[l]))
            throw NotApplicableError(std::string(what) + ": architectures diverge at layer " +
                                     std::to_string(l));
}

struct WhiteboxDistances {
    double nod = 0.0, nad = 0.0, lod = 0.0, lad = 0.0;
};

// Single pass over the suite computing all four white-box distances.
WhiteboxDistances whitebox_distances(const Model& victim, const Model& suspect,
                                     const TestSuite& suite, int layer, double beta,
                                     bool nod_all_neurons) {
    const std::size_t width =
        shape_numel(victim.layer_output_shape(static_cast<std::size_t>(layer)));
    if (suite.neuron_max.size() != width)
        throw ArgumentError("white-box suite neuron stats do not match the layer width");
    const std::size_t n_cases = suite.cases.size();

    std::vector<double> theta(width);
    for (std::size_t i = 0; i < width; ++i) theta[i] = beta * suite.neuron_max[i];

    // per target neuron: sum of |phi - phi_hat| activation-status flips
    std::map<int, std::pair<double, int>> nad_per_target; // neuron -> (flip sum, case count)
    std::vector<double> lad_flips(width, 0.0);
    double nod_sum = 0.0, lod_sum = 0.0;

    for (const TestCase& tc : suite.cases) {
        ForwardTrace tv = forward_trace_to(victim, tc.input, static_cast<std::size_t>(layer));
        ForwardTrace ts = forward_trace_to(suspect, tc.input, static_cast<std::size_t>(layer));
        const Tensor& a = tv.outputs.back();
        const Tensor& b = ts.outputs.back();
        if (a.numel() != width || b.numel() != width)
            throw ShapeError("white-box metrics: layer output width mismatch");

        double norm2 = 0.0;
        for (std::size_t i = 0; i < width; ++i) {
            double d = a[i] - b[i];
            norm2 += d * d;
            double flip = (a[i] > theta[i]) != (b[i] > theta[i]) ? 1.0 : 0.0;
            lad_flips[i] += flip;
        }
        lod_sum += std::sqrt(norm2);

        if (nod_all_neurons) {
            double s = 0.0;
            for (std::size_t i = 0; i < width; ++i) s += std::abs(a[i] - b[i]);
            nod_sum += s / static_cast<double>(width);
        } else {
            if (tc.neuron < 0 || static_cast<std::size_t>(tc.neuron) >= width)
                throw IndexError("white-box suite case targets an out-of-range neuron");
            nod_sum += std::abs(a[tc.neuron] - b[tc.neuron]);
        }

        if (tc.neuron >= 0 && static_cast<std::size_t>(tc.neuron) < width) {
            double flip = (a[tc.neuron] > theta[tc.neuron]) != (b[tc.neuron] > theta[tc.neuron])
                              ? 1.0
                              : 0.0;
            auto& acc = nad_per_target[tc.neuron];
            acc.first += flip;
            acc.second += 1;
        }
    }

    WhiteboxDistances out;
    out.nod = nod_sum / static_cast<double>(n_cases);
    out.lod = lod_sum / static_cast<double>(n_cases);
    if (nad_per_target.empty())
        throw ArgumentError("white-box suite has no target neurons for NAD");
    double nad_sum = 0.0;
    for (const auto& [neuron, acc] : nad_per_target)
        nad_sum += acc.first / static_cast<double>(acc.second);
    out.nad = nad_sum / static_cast<double>(nad_per_target.size());
    double lad_sum = 0.0;
    for (std::size_t i = 0; i < width; ++i)
        lad_sum += lad_flips[i] / static_cast<double>(n_cases);
    out.lad = lad_sum / static_cast<double>(width);
    return out;
}

} // namespace

double rob(const Model& model, const TestSuite& suite) {
    check_blackbox_suite(model, suite, "rob");
    std::size_t hits = 0;
    for (const TestCase& tc : suite.cases)
        if (predict_label(model, tc.input) == tc.label) ++hits;
    return static_cast<double>(hits) / static_cast<double>(suite.cases.size());
}

double robd(const Model& victim, const Model& suspect, const TestSuite& suite) {
    check_class_match(victim, suspect, "RobD");
    return std::abs(rob(suspect, suite) - rob(victim, suite));
}

double jsd(const Model& victim, const Model& suspect, const TestSuite& suite) {
    check_class_match(victim, suspect, "JSD");
    if (suite.cases.empty()) throw ArgumentError("JSD: empty suite");
    double total = 0.0;
    for (const TestCase& tc : suite.cases) {
        Tensor p = forward(victim, tc.input);
        Tensor q_hat = forward(suspect, tc.input);
        Tensor q = p;
        for (std::size_t i = 0; i < q.numel(); ++i) q[i] = (p[i] + q_hat[i]) / 2.0;
        total += 0.5 * (kl(p, q) + kl(q_hat, q));
    }
    return total / static_cast<double>(suite.cases.size());
}

double nod(const Model& victim, const Model& suspect, const TestSuite& suite, int layer,
           bool all_neurons) {
    check_whitebox_applicable(victim, suspect, suite, layer, "NOD");
    return whitebox_distances(victim, suspect, suite, layer, 0.5, all_neurons).nod;
}

double nad(const Model& victim, const Model& suspect, const TestSuite& suite, int layer,
           double beta) {
    check_whitebox_applicable(victim, suspect, suite, layer, "NAD");
    return whitebox_distances(victim, suspect, suite, layer, beta, false).nad;
}

double lod(const Model& victim, const Model& suspect, const TestSuite& suite, int layer) {
    check_whitebox_applicable(victim, suspect, suite, layer, "LOD");
    return whitebox_distances(victim, suspect, suite, layer, 0.5, false).lod;
}

double lad(const Model& victim, const Model& suspect, const TestSuite& suite, int layer,
           double beta) {
    check_whitebox_applicable(victim, suspect, suite, layer, "LAD");
    return whitebox_distances(victim, suspect, suite, layer, beta, false).lad;
}

MeasureResult measure_all(const Model& victim, const Model& suspect, const TestSuite* bb_suite,
                          const TestSuite* wb_suite, int layer, double beta, Setting setting,
                          bool verify_hash) {
    MeasureResult out;
    std::string victim_hash = model_hash(victim);
    auto check_provenance = [&](const TestSuite& suite, const char* which) {
        if (verify_hash && suite.victim_hash != victim_hash)
            throw ProvenanceError(std::string(which) +
                                  " suite was not generated from this victim (hash mismatch)");
    };

    const bool want_bb = setting != Setting::WhiteBox;
    const bool want_wb = setting != Setting::BlackBox;

    if (want_bb) {
        if (!bb_suite) {
            out.skipped.push_back({Metric::RobD, "no black-box suite provided"});
            out.skipped.push_back({Metric::JSD, "no black-box suite provided"});
        } else {
            check_provenance(*bb_suite, "black-box");
            std::string h = sha256_hex(suite_to_json(*bb_suite));
            try {
                double v = robd(victim, suspect, *bb_suite);
                out.reports.push_back(
                    {Metric::RobD, v, h, -1, static_cast<int>(bb_suite->size())});
                v = jsd(victim, suspect, *bb_suite);
                out.reports.push_back(
                    {Metric::JSD, v, h, -1, static_cast<int>(bb_suite->size())});
            } catch (const NotApplicableError& e) {
                out.skipped.push_back({Metric::RobD, e.what()});
                out.skipped.push_back({Metric::JSD, e.what()});
            }
        }
    }

    if (want_wb) {
        if (!wb_suite) {
            for (Metric m : {Metric::NOD, Metric::NAD, Metric::LOD, Metric::LAD})
                out.skipped.push_back({m, "no white-box suite provided"});
        } else {
            check_provenance(*wb_suite, "white-box");
            int wb_layer = layer >= 0 ? layer : wb_suite->layer;
            std::string h = sha256_hex(suite_to_json(*wb_suite));
            try {
                check_whitebox_applicable(victim, suspect, *wb_suite, wb_layer, "white-box metrics");
                WhiteboxDistances d =
                    whitebox_distances(victim, suspect, *wb_suite, wb_layer, beta, false);
                int n = static_cast<int>(wb_suite->size());
                out.reports.push_back({Metric::NOD, d.nod, h, wb_layer, n});
                out.reports.push_back({Metric::NAD, d.nad, h, wb_layer, n});
                out.reports.push_back({Metric::LOD, d.lod, h, wb_layer, n});
                out.reports.push_back({Metric::LAD, d.lad, h, wb_layer, n});
            } catch (const NotApplicableError& e) {
                for (Metric m : {Metric::NOD, Metric::NAD, Metric::LOD, Metric::LAD})
                    out.skipped.push_back({m, e.what()});
            }
        }
    }
    return out;
}

std::string scores_to_json(const ScoresDoc& doc) {
    JsonWriter w;
    w.begin_object();
    w.key("format_version").value(1);
    w.key("victim_hash").value(doc.victim_hash);
    w.key("suspect_hash").value(doc.suspect_hash);
    w.key("suspect_id").value(doc.suspect_id);
    w.key("setting").value(doc.setting);
    w.key("beta").value(doc.beta);
    w.key("reports").begin_array();
    for (const MetricReport& r : doc.result.reports) {
        w.begin_object();
        w.key("metric").value(metric_name(r.metric));
        w.key("value").value(r.value);
        w.key("suite_hash").value(r.suite_hash);
        w.key("layer").value(r.layer);
        w.key("case_count").value(r.case_count);
        w.end_object();
    }
    w.end_array();
    w.key("skipped").begin_array();
    for (const SkippedMetric& s : doc.result.skipped) {
        w.begin_object();
        w.key("metric").value(metric_name(s.metric));
        w.key("reason").value(s.reason);
        w.end_object();
    }
    w.end_array();
    w.key("config").begin_object();
    for (const auto& [k, v] : doc.config) w.key(k).value(v);
    w.end_object();
    w.end_object();
    return w.str();
}

ScoresDoc scores_from_json(const std::string& text, const std::string& origin) {
    Json j = parse_json_text(text, origin);
    ScoresDoc doc;
    doc.victim_hash = require_field(j, "victim_hash", origin).get<std::string>();
    doc.suspect_hash = require_field(j, "suspect_hash", origin).get<std::string>();
    doc.suspect_id = require_field(j, "suspect_id", origin).get<std::string>();
    doc.setting = require_field(j, "setting", origin).get<std::string>();
    doc.beta = require_field(j, "beta", origin).get<double>();
    const Json& reports = require_field(j, "reports", origin);
    for (const auto& rj : reports) {
        MetricReport r;
        r.metric = metric_from_name(require_field(rj, "metric", origin).get<std::string>());
        r.value = require_field(rj, "value", origin).get<double>();
        r.suite_hash = require_field(rj, "suite_hash", origin).get<std::string>();
        r.layer = require_field(rj, "layer", origin).get<int>();
        r.case_count = require_field(rj, "case_count", origin).get<int>();
        doc.result.reports.push_back(std::move(r));
    }
    const Json& skipped = require_field(j, "skipped", origin);
    for (const auto& sj : skipped) {
        SkippedMetric s{metric_from_name(require_field(sj, "metric", origin).get<std::string>()),
                        require_field(sj, "reason", origin).get<std::string>()};
        doc.result.skipped.push_back(std::move(s));
    }
    const Json& config = require_field(j, "config", origin);
    for (const auto& [k, v] : config.items()) doc.config[k] = v.get<std::string>();
    return doc;
}

void save_scores(const ScoresDoc& doc, const std::string& path) {
    write_text_file(path, scores_to_json(doc));
}

ScoresDoc load_scores(const std::string& path) {
    return scores_from_json(read_text_file(path), path);
}

std::string scores_to_csv(const std::vector<ScoresDoc>& docs) {
    std::string out = "suspect_id,metric,value,layer\n";
    for (const ScoresDoc& doc : docs) {
        for (const MetricReport& r : doc.result.reports) {
            out += doc.suspect_id;
            out += ",";
            out += metric_name(r.metric);
            out += ",";
            out += format_real(r.value);
            out += ",";
            out += std::to_string(r.layer);
            out += "\n";
        }
    }
    return out;
}

} // namespace dj
