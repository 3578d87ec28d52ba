#pragma once

#include <map>
#include <string>
#include <vector>

#include "dj/model.hpp"
#include "dj/testgen.hpp"

namespace dj {

enum class Metric { RobD, JSD, NOD, NAD, LOD, LAD };

const char* metric_name(Metric m);
Metric metric_from_name(const std::string& name);
bool metric_is_blackbox(Metric m);
inline constexpr Metric kAllMetrics[] = {Metric::RobD, Metric::JSD, Metric::NOD,
                                         Metric::NAD,  Metric::LOD, Metric::LAD};

struct MetricReport {
    Metric metric = Metric::RobD;
    double value = 0.0;
    std::string suite_hash;
    int layer = -1; // white-box metrics only
    int case_count = 0;
};

struct SkippedMetric {
    Metric metric;
    std::string reason;
};

// Accuracy of the model on a labeled suite.
double rob(const Model& model, const TestSuite& suite);
// |Rob(suspect) - Rob(victim)|.
double robd(const Model& victim, const Model& suspect, const TestSuite& suite);
// Mean Jensen-Shannon divergence (natural log) of the output distributions.
double jsd(const Model& victim, const Model& suspect, const TestSuite& suite);

// White-box distances at the suite's target layer. NOD averages each case's
// own target neuron by default; all_neurons switches to averaging the whole
// layer per case. NAD/LAD activation threshold is beta * (victim training max
// of the neuron), carried inside the suite.
double nod(const Model& victim, const Model& suspect, const TestSuite& suite, int layer,
           bool all_neurons = false);
double nad(const Model& victim, const Model& suspect, const TestSuite& suite, int layer,
           double beta = 0.5);
double lod(const Model& victim, const Model& suspect, const TestSuite& suite, int layer);
double lad(const Model& victim, const Model& suspect, const TestSuite& suite, int layer,
           double beta = 0.5);

enum class Setting { Both, BlackBox, WhiteBox };
const char* setting_name(Setting s);
Setting setting_from_name(const std::string& name);

struct MeasureResult {
    std::vector<MetricReport> reports;  // applicable metrics only
    std::vector<SkippedMetric> skipped; // e.g. black-box metrics under VTL
};

// Every applicable metric for the given suites and setting. Verifies that
// the suites were generated from this victim (hash check) unless disabled.
MeasureResult measure_all(const Model& victim, const Model& suspect, const TestSuite* bb_suite,
                          const TestSuite* wb_suite, int layer = -1, double beta = 0.5,
                          Setting setting = Setting::Both, bool verify_hash = true);

// scores.json
struct ScoresDoc {
    std::string victim_hash;
    std::string suspect_hash;
    std::string suspect_id;
    std::string setting = "both";
    double beta = 0.5;
    MeasureResult result;
    std::map<std::string, std::string> config; // effective run config echo
};

std::string scores_to_json(const ScoresDoc& doc);
ScoresDoc scores_from_json(const std::string& text, const std::string& origin = "scores");
void save_scores(const ScoresDoc& doc, const std::string& path);
ScoresDoc load_scores(const std::string& path);

// CSV export: one row per (suspect, metric, value, layer).
std::string scores_to_csv(const std::vector<ScoresDoc>& docs);

} // namespace dj
