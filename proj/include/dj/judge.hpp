#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dj/metrics.hpp"

namespace dj {

// Regularized incomplete beta function I_x(a, b).
double ibeta(double a, double b, double x);

// Student's t CDF and inverse CDF.
double t_cdf(double t, int df);
double t_quantile(double p, int df);

// Per-metric distance scores observed on independently trained negatives.
struct NegativeStats {
    std::map<Metric, std::vector<double>> scores;
};

struct MetricThreshold {
    double lb = 0.0;    // one-sided lower confidence bound of the negative mean
    double alpha = 0.0; // relaxing factor
    double tau = 0.0;   // alpha * lb
    int n = 0;
};

struct ThresholdSet {
    double confidence = 0.99;
    std::map<Metric, MetricThreshold> per_metric;
    std::vector<std::string> warnings;
};

// LB = mean - t_{confidence, n-1} * sd / sqrt(n), clamped at 0;
// tau = alpha * LB with alpha chosen per metric family.
ThresholdSet calibrate(const NegativeStats& stats, double alpha_blackbox = 0.9,
                       double alpha_whitebox = 0.6, double confidence = 0.99);

enum class VoteKind { Copy, NotCopy, NotApplicable };
const char* vote_kind_name(VoteKind v);

struct VoteEntry {
    Metric metric;
    VoteKind vote;
    double score = 0.0; // meaningful unless vote == NotApplicable
    double tau = 0.0;
};

struct Verdict {
    std::vector<VoteEntry> votes;
    int applicable = 0;
    int copy_votes = 0;
    double p_copy = 0.0;
    bool yes = false;
};

// Copy vote iff score <= tau (boundary counts as copy); p_copy over
// applicable metrics only; YES iff p_copy > 0.5.
Verdict vote(const std::vector<MetricReport>& reports, const std::vector<SkippedMetric>& skipped,
             const ThresholdSet& thresholds);

struct RocPoint {
    double fpr = 0.0, tpr = 0.0, threshold = 0.0;
};

// ROC with lower-is-positive orientation: a score is classified positive when
// it is <= the swept threshold. AUC by trapezoid (ties get midpoint credit).
std::pair<std::vector<RocPoint>, double> roc_auc(const std::vector<double>& positive_scores,
                                                 const std::vector<double>& negative_scores);

// Spearman rank correlation with midpoint ranks for ties; 0 when either side
// has zero rank variance.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

// thresholds.json / verdict.json — the canonical evidence bundle.
struct ThresholdsDoc {
    ThresholdSet thresholds;
    std::vector<std::string> negative_scores_hashes;
    std::map<std::string, std::string> config;
};

std::string thresholds_to_json(const ThresholdsDoc& doc);
ThresholdsDoc thresholds_from_json(const std::string& text, const std::string& origin = "thresholds");
void save_thresholds(const ThresholdsDoc& doc, const std::string& path);
ThresholdsDoc load_thresholds(const std::string& path);

struct VerdictDoc {
    Verdict verdict;
    std::string victim_hash;
    std::string suspect_hash;
    std::string scores_hash;
    std::string thresholds_hash;
    std::map<std::string, std::string> config;
};

std::string verdict_to_json(const VerdictDoc& doc);
void save_verdict(const VerdictDoc& doc, const std::string& path);

} // namespace dj
