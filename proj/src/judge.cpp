#include "dj/judge.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dj/error.hpp"
#include "dj/jsonio.hpp"

namespace dj {

namespace {

// Continued fraction for the incomplete beta function (modified Lentz).
double ibeta_cf(double a, double b, double x) {
    const double tiny = 1e-300;
    const double eps = 3e-16;
    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 500; ++m) {
        int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < eps) break;
    }
    return h;
}

} // namespace

double ibeta(double a, double b, double x) {
    if (!(a > 0.0 && b > 0.0)) throw ArgumentError("ibeta: a and b must be positive");
    if (x < 0.0 || x > 1.0) throw ArgumentError("ibeta: x must lie in [0,1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    double ln_front = a * std::log(x) + b * std::log1p(-x) -
                      (std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b));
    if (x < (a + 1.0) / (a + b + 2.0))
        return std::exp(ln_front) * ibeta_cf(a, b, x) / a;
    return 1.0 - std::exp(ln_front) * ibeta_cf(b, a, 1.0 - x) / b;
}

double t_cdf(double t, int df) {
    if (df < 1) throw ArgumentError("t_cdf: df must be >= 1");
    double nu = static_cast<double>(df);
    double x = nu / (nu + t * t);
    double tail = 0.5 * ibeta(nu / 2.0, 0.5, x);
    return t >= 0.0 ? 1.0 - tail : tail;
}

double t_quantile(double p, int df) {
    if (!(p > 0.0 && p < 1.0)) throw ArgumentError("t_quantile: p must lie in (0,1)");
    if (df < 1) throw ArgumentError("t_quantile: df must be >= 1");
    if (p == 0.5) return 0.0;
    if (p < 0.5) return -t_quantile(1.0 - p, df);

    double lo = 0.0, hi = 1.0;
    while (t_cdf(hi, df) < p) {
        hi *= 2.0;
        if (hi > 1e300) throw ArgumentError("t_quantile: p too close to 1");
    }
    for (int it = 0; it < 300; ++it) {
        double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi) break;
        if (t_cdf(mid, df) < p)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

ThresholdSet calibrate(const NegativeStats& stats, double alpha_blackbox, double alpha_whitebox,
                       double confidence) {
    if (!(confidence > 0.0 && confidence < 1.0))
        throw ArgumentError("calibrate: confidence must lie in (0,1)");
    if (alpha_blackbox < 0.0 || alpha_whitebox < 0.0)
        throw ArgumentError("calibrate: alpha must be >= 0");
    if (stats.scores.empty()) throw InsufficientNegativesError("calibrate: no negative scores");

    ThresholdSet out;
    out.confidence = confidence;
    for (const auto& [metric, scores] : stats.scores) {
        std::size_t n = scores.size();
        if (n < 2)
            throw InsufficientNegativesError(std::string("calibrate: metric ") +
                                             metric_name(metric) + " has " + std::to_string(n) +
                                             " negative scores; need at least 2");
        for (double s : scores)
            if (!std::isfinite(s) || s < 0.0)
                throw ArgumentError(std::string("calibrate: metric ") + metric_name(metric) +
                                    " has an invalid negative score");
        if (n < 8)
            out.warnings.push_back(std::string("metric ") + metric_name(metric) +
                                   " calibrated from only " + std::to_string(n) +
                                   " negatives; 8 or more recommended");
        double mean = 0.0;
        for (double s : scores) mean += s;
        mean /= static_cast<double>(n);
        double ss = 0.0;
        for (double s : scores) ss += (s - mean) * (s - mean);
        double sd = std::sqrt(ss / static_cast<double>(n - 1));
        double t = t_quantile(confidence, static_cast<int>(n) - 1);
        double lb = mean - t * sd / std::sqrt(static_cast<double>(n));
        if (lb < 0.0) lb = 0.0;
        MetricThreshold th;
        th.lb = lb;
        th.alpha = metric_is_blackbox(metric) ? alpha_blackbox : alpha_whitebox;
        th.tau = th.alpha * lb;
        th.n = static_cast<int>(n);
        out.per_metric[metric] = th;
    }
    return out;
}

const char* vote_kind_name(VoteKind v) {
    switch (v) {
    case VoteKind::Copy: return "copy";
    case VoteKind::NotCopy: return "not-copy";
    case VoteKind::NotApplicable: return "n/a";
    }
    throw ArgumentError("unknown vote kind");
}

Verdict vote(const std::vector<MetricReport>& reports, const std::vector<SkippedMetric>& skipped,
             const ThresholdSet& thresholds) {
    Verdict out;
    for (const MetricReport& r : reports) {
        auto it = thresholds.per_metric.find(r.metric);
        if (it == thresholds.per_metric.end())
            throw ArgumentError(std::string("vote: no calibrated threshold for metric ") +
                                metric_name(r.metric));
        VoteEntry e;
        e.metric = r.metric;
        e.score = r.value;
        e.tau = it->second.tau;
        e.vote = r.value <= it->second.tau ? VoteKind::Copy : VoteKind::NotCopy;
        out.applicable += 1;
        if (e.vote == VoteKind::Copy) out.copy_votes += 1;
        out.votes.push_back(e);
    }
    for (const SkippedMetric& s : skipped) {
        VoteEntry e;
        e.metric = s.metric;
        e.vote = VoteKind::NotApplicable;
        out.votes.push_back(e);
    }
    if (out.applicable == 0)
        throw UndecidableError("vote: no applicable metric; cannot reach a verdict");
    out.p_copy = static_cast<double>(out.copy_votes) / static_cast<double>(out.applicable);
    out.yes = out.p_copy > 0.5;
    return out;
}

std::pair<std::vector<RocPoint>, double> roc_auc(const std::vector<double>& positive_scores,
                                                 const std::vector<double>& negative_scores) {
    if (positive_scores.empty() || negative_scores.empty())
        throw ArgumentError("roc_auc: both score lists must be nonempty");
    std::vector<double> thresholds;
    thresholds.reserve(positive_scores.size() + negative_scores.size());
    thresholds.insert(thresholds.end(), positive_scores.begin(), positive_scores.end());
    thresholds.insert(thresholds.end(), negative_scores.begin(), negative_scores.end());
    std::sort(thresholds.begin(), thresholds.end());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    auto frac_leq = [](const std::vector<double>& v, double thr) {
        std::size_t c = 0;
        for (double s : v)
            if (s <= thr) ++c;
        return static_cast<double>(c) / static_cast<double>(v.size());
    };

    std::vector<RocPoint> points;
    points.push_back({0.0, 0.0, -std::numeric_limits<double>::infinity()});
    for (double thr : thresholds)
        points.push_back({frac_leq(negative_scores, thr), frac_leq(positive_scores, thr), thr});

    double auc = 0.0;
    for (std::size_t i = 1; i < points.size(); ++i)
        auc += (points[i].fpr - points[i - 1].fpr) * (points[i].tpr + points[i - 1].tpr) / 2.0;
    return {std::move(points), auc};
}

namespace {

std::vector<double> midranks(const std::vector<double>& v) {
    std::size_t n = v.size();
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
        double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
        i = j + 1;
    }
    return ranks;
}

} // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ArgumentError("spearman: length mismatch");
    if (a.size() < 2) throw ArgumentError("spearman: need at least 2 points");
    std::vector<double> ra = midranks(a), rb = midranks(b);
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= static_cast<double>(ra.size());
    mb /= static_cast<double>(rb.size());
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        cov += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (va == 0.0 || vb == 0.0) return 0.0;
    return cov / std::sqrt(va * vb);
}

std::string thresholds_to_json(const ThresholdsDoc& doc) {
    JsonWriter w;
    w.begin_object();
    w.key("format_version").value(1);
    w.key("confidence").value(doc.thresholds.confidence);
    w.key("metrics").begin_object();
    for (const auto& [metric, th] : doc.thresholds.per_metric) {
        w.key(metric_name(metric)).begin_object();
        w.key("lb").value(th.lb);
        w.key("alpha").value(th.alpha);
        w.key("tau").value(th.tau);
        w.key("n").value(th.n);
        w.end_object();
    }
    w.end_object();
    w.key("warnings").begin_array();
    for (const std::string& s : doc.thresholds.warnings) w.value(s);
    w.end_array();
    w.key("negative_scores_hashes").begin_array();
    for (const std::string& h : doc.negative_scores_hashes) w.value(h);
    w.end_array();
    w.key("config").begin_object();
    for (const auto& [k, v] : doc.config) w.key(k).value(v);
    w.end_object();
    w.end_object();
    return w.str();
}

ThresholdsDoc thresholds_from_json(const std::string& text, const std::string& origin) {
    Json j = parse_json_text(text, origin);
    ThresholdsDoc doc;
    doc.thresholds.confidence = require_field(j, "confidence", origin).get<double>();
    const Json& metrics = require_field(j, "metrics", origin);
    if (!metrics.is_object()) throw FormatError(origin + ": field 'metrics' must be an object");
    for (const auto& [name, tj] : metrics.items()) {
        MetricThreshold th;
        th.lb = require_field(tj, "lb", origin).get<double>();
        th.alpha = require_field(tj, "alpha", origin).get<double>();
        th.tau = require_field(tj, "tau", origin).get<double>();
        th.n = require_field(tj, "n", origin).get<int>();
        doc.thresholds.per_metric[metric_from_name(name)] = th;
    }
    const Json& warnings = require_field(j, "warnings", origin);
    for (const auto& s : warnings) doc.thresholds.warnings.push_back(s.get<std::string>());
    const Json& hashes = require_field(j, "negative_scores_hashes", origin);
    for (const auto& h : hashes) doc.negative_scores_hashes.push_back(h.get<std::string>());
    const Json& config = require_field(j, "config", origin);
    for (const auto& [k, v] : config.items()) doc.config[k] = v.get<std::string>();
    return doc;
}

void save_thresholds(const ThresholdsDoc& doc, const std::string& path) {
    write_text_file(path, thresholds_to_json(doc));
}

ThresholdsDoc load_thresholds(const std::string& path) {
    return thresholds_from_json(read_text_file(path), path);
}

std::string verdict_to_json(const VerdictDoc& doc) {
    JsonWriter w;
    w.begin_object();
    w.key("format_version").value(1);
    w.key("victim_hash").value(doc.victim_hash);
    w.key("suspect_hash").value(doc.suspect_hash);
    w.key("scores_hash").value(doc.scores_hash);
    w.key("thresholds_hash").value(doc.thresholds_hash);
    w.key("votes").begin_array();
    for (const VoteEntry& e : doc.verdict.votes) {
        w.begin_object();
        w.key("metric").value(metric_name(e.metric));
        w.key("vote").value(vote_kind_name(e.vote));
        if (e.vote != VoteKind::NotApplicable) {
            w.key("score").value(e.score);
            w.key("tau").value(e.tau);
        }
        w.end_object();
    }
    w.end_array();
    w.key("applicable").value(doc.verdict.applicable);
    w.key("copy_votes").value(doc.verdict.copy_votes);
    w.key("p_copy").value(doc.verdict.p_copy);
    w.key("decision").value(doc.verdict.yes ? "Yes" : "No");
    w.key("config").begin_object();
    for (const auto& [k, v] : doc.config) w.key(k).value(v);
    w.end_object();
    w.end_object();
    return w.str();
}

void save_verdict(const VerdictDoc& doc, const std::string& path) {
    write_text_file(path, verdict_to_json(doc));
}

} // namespace dj
