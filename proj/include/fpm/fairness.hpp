#pragma once

// Per-sample loss weights (inverse group frequency, Kamiran-Calders
// reweighing) and the group-fairness metrics computed from predictions.

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fpm/csv.hpp"
#include "fpm/error.hpp"

namespace fpm {

using nlohmann::json;

enum class WeightScheme { Uniform, InverseFrequency, KamiranCalders };
enum class WeightBy { Group, Label, GroupLabel };

inline std::string_view to_string(WeightScheme s) {
    switch (s) {
    case WeightScheme::Uniform: return "uniform";
    case WeightScheme::InverseFrequency: return "inverse_frequency";
    case WeightScheme::KamiranCalders: return "kamiran_calders";
    }
    return "uniform";
}

inline std::string_view to_string(WeightBy w) {
    switch (w) {
    case WeightBy::Group: return "group";
    case WeightBy::Label: return "label";
    case WeightBy::GroupLabel: return "group*label";
    }
    return "group";
}

inline WeightBy weight_by_from_string(std::string_view s) {
    if (s == "group") return WeightBy::Group;
    if (s == "label") return WeightBy::Label;
    if (s == "group*label" || s == "group_label") return WeightBy::GroupLabel;
    fail(ErrorKind::InvalidConfig, "unknown weight-by '" + std::string(s) + "'");
}

struct SampleWeights {
    std::vector<double> w;
    WeightScheme scheme = WeightScheme::Uniform;
    bool normalized = false;
};

inline SampleWeights uniform_weights(std::size_t n) { return {std::vector<double>(n, 1.0), WeightScheme::Uniform, true}; }

/// Raw w_i = N / n_{c(i)}; normalized divides by the mean, giving N / (G n_c).
inline SampleWeights inverse_frequency_weights(const std::vector<std::string>& classes, bool normalize = true) {
    if (classes.empty()) fail(ErrorKind::EmptyGroup, "no samples");
    std::map<std::string, double> counts;
    for (const auto& c : classes) counts[c] += 1.0;
    const double N = static_cast<double>(classes.size());
    const double G = static_cast<double>(counts.size());
    SampleWeights out;
    out.scheme = WeightScheme::InverseFrequency;
    out.normalized = normalize;
    out.w.reserve(classes.size());
    for (const auto& c : classes) out.w.push_back(normalize ? N / (G * counts[c]) : N / counts[c]);
    return out;
}

/// Class keys for inverse-frequency weighting under a weight-by switch.
inline std::vector<std::string> weight_classes(const std::vector<std::string>& groups, const std::vector<int>& labels,
                                               WeightBy by) {
    if (by != WeightBy::Group && labels.size() != groups.size())
        fail(ErrorKind::LengthMismatch, "labels and groups differ in length");
    std::vector<std::string> out(groups.size());
    for (std::size_t i = 0; i < groups.size(); ++i) switch (by) {
        case WeightBy::Group: out[i] = groups[i]; break;
        case WeightBy::Label: out[i] = std::to_string(labels[i]); break;
        case WeightBy::GroupLabel: out[i] = groups[i] + "|" + std::to_string(labels[i]); break;
        }
    return out;
}

/// w_i = P(y_i) / P(y_i | s_i) from empirical counts; never normalized.
inline SampleWeights kamiran_calders_weights(const std::vector<int>& labels, const std::vector<std::string>& groups) {
    if (labels.size() != groups.size()) fail(ErrorKind::LengthMismatch, "labels and groups differ in length");
    if (labels.empty()) fail(ErrorKind::EmptyGroup, "no samples");
    std::map<int, double> n_y;
    std::map<std::string, double> n_s;
    std::map<std::pair<std::string, int>, double> n_sy;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        n_y[labels[i]] += 1.0;
        n_s[groups[i]] += 1.0;
        n_sy[{groups[i], labels[i]}] += 1.0;
    }
    for (const auto& [s, _] : n_s)
        for (const auto& [y, __] : n_y)
            if (!n_sy.count({s, y}))
                fail(ErrorKind::EmptyCell, "group '" + s + "' has no samples with label " + std::to_string(y));
    const double N = static_cast<double>(labels.size());
    SampleWeights out;
    out.scheme = WeightScheme::KamiranCalders;
    out.w.reserve(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double p_y = n_y[labels[i]] / N;
        const double p_y_s = n_sy[{groups[i], labels[i]}] / n_s[groups[i]];
        out.w.push_back(p_y / p_y_s);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Predictions and metrics

struct PredictionSet {
    std::vector<std::string> patient_id;
    std::vector<int> y_true;
    std::vector<int> y_pred;
    std::vector<double> score;
    std::vector<std::string> group;

    std::size_t size() const { return y_true.size(); }

    void validate() const {
        const std::size_t n = y_true.size();
        if (y_pred.size() != n || group.size() != n || (!score.empty() && score.size() != n) ||
            (!patient_id.empty() && patient_id.size() != n))
            fail(ErrorKind::LengthMismatch, "prediction columns differ in length");
        for (std::size_t i = 0; i < n; ++i)
            if ((y_true[i] != 0 && y_true[i] != 1) || (y_pred[i] != 0 && y_pred[i] != 1))
                fail(ErrorKind::Parse, "labels must be binary");
    }
};

inline void write_predictions(const std::string& path, const PredictionSet& p) {
    p.validate();
    csv::Table t;
    t.header = {"patient_id", "y_true", "y_pred", "score", "group"};
    for (std::size_t i = 0; i < p.size(); ++i)
        t.rows.push_back({p.patient_id.empty() ? std::to_string(i) : p.patient_id[i], std::to_string(p.y_true[i]),
                          std::to_string(p.y_pred[i]), p.score.empty() ? "" : csv::format_exact(p.score[i]),
                          p.group[i]});
    csv::write(path, t);
}

inline PredictionSet read_predictions(const std::string& path, const std::string& group_column = "group") {
    const csv::Table t = csv::read(path);
    if (!t.has_column(group_column))
        fail(ErrorKind::MissingGroupColumn, path + ": missing group column '" + group_column + "'");
    const std::size_t ci = t.column("patient_id"), ct = t.column("y_true"), cp = t.column("y_pred"),
                      cs = t.column("score"), cg = t.column(group_column);
    PredictionSet p;
    for (const auto& r : t.rows) {
        p.patient_id.push_back(r[ci]);
        p.y_true.push_back(static_cast<int>(csv::parse_double(r[ct], "y_true")));
        p.y_pred.push_back(static_cast<int>(csv::parse_double(r[cp], "y_pred")));
        p.score.push_back(csv::parse_double(r[cs], "score"));
        p.group.push_back(r[cg]);
    }
    p.validate();
    return p;
}

struct Confusion {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

    std::size_t total() const { return tp + fp + tn + fn; }
    std::size_t positives() const { return tp + fn; }
    std::size_t negatives() const { return fp + tn; }
    friend bool operator==(const Confusion&, const Confusion&) = default;
};

inline std::map<std::string, Confusion> confusion_by_group(const PredictionSet& p) {
    p.validate();
    std::map<std::string, Confusion> out;
    for (std::size_t i = 0; i < p.size(); ++i) {
        Confusion& c = out[p.group[i]];
        if (p.y_true[i] == 1) (p.y_pred[i] == 1 ? c.tp : c.fn)++;
        else (p.y_pred[i] == 1 ? c.fp : c.tn)++;
    }
    return out;
}

inline std::map<std::string, double> positive_rate_by_group(const PredictionSet& p) {
    std::map<std::string, double> out;
    for (const auto& [g, c] : confusion_by_group(p)) {
        if (c.total() == 0) fail(ErrorKind::EmptyGroup, "group '" + g + "' is empty");
        out[g] = static_cast<double>(c.tp + c.fp) / static_cast<double>(c.total());
    }
    return out;
}

/// Privileged and unprivileged confusion counts. With more than two groups the
/// unprivileged side pools every non-privileged group.
struct GroupPair {
    Confusion privileged;
    Confusion unprivileged;
};

inline GroupPair split_privileged(const std::map<std::string, Confusion>& cm, const std::string& privileged) {
    if (!cm.count(privileged)) fail(ErrorKind::EmptyGroup, "privileged group '" + privileged + "' absent");
    if (cm.size() < 2) fail(ErrorKind::EmptyGroup, "need at least two groups");
    GroupPair gp;
    for (const auto& [g, c] : cm) {
        Confusion& dst = g == privileged ? gp.privileged : gp.unprivileged;
        dst.tp += c.tp;
        dst.fp += c.fp;
        dst.tn += c.tn;
        dst.fn += c.fn;
    }
    return gp;
}

inline double ratio_or_fail(double num, double den, const char* what) {
    if (den == 0.0) fail(ErrorKind::UndefinedMetric, std::string(what) + ": zero denominator");
    return num / den;
}

inline double rate(std::size_t num, std::size_t den, const char* what) {
    if (den == 0) fail(ErrorKind::UndefinedMetric, std::string(what) + ": empty stratum");
    return static_cast<double>(num) / static_cast<double>(den);
}

/// P(Yhat=1 | privileged) / P(Yhat=1 | unprivileged).
inline double demographic_parity_ratio(const std::map<std::string, Confusion>& cm, const std::string& privileged) {
    const GroupPair g = split_privileged(cm, privileged);
    const double p = rate(g.privileged.tp + g.privileged.fp, g.privileged.total(), "demographic parity ratio");
    const double u = rate(g.unprivileged.tp + g.unprivileged.fp, g.unprivileged.total(), "demographic parity ratio");
    return ratio_or_fail(p, u, "demographic parity ratio");
}

/// FNR(unprivileged) - FNR(privileged).
inline double equality_of_opportunity_difference(const std::map<std::string, Confusion>& cm,
                                                 const std::string& privileged) {
    const GroupPair g = split_privileged(cm, privileged);
    return rate(g.unprivileged.fn, g.unprivileged.positives(), "equality of opportunity difference") -
           rate(g.privileged.fn, g.privileged.positives(), "equality of opportunity difference");
}

/// [FPR(priv) / FPR(unpriv)] * [FNR(priv) / FNR(unpriv)].
inline double equalized_odds_ratio(const std::map<std::string, Confusion>& cm, const std::string& privileged) {
    const GroupPair g = split_privileged(cm, privileged);
    const char* what = "equalized odds ratio";
    const double fpr_p = rate(g.privileged.fp, g.privileged.negatives(), what);
    const double fpr_u = rate(g.unprivileged.fp, g.unprivileged.negatives(), what);
    const double fnr_p = rate(g.privileged.fn, g.privileged.positives(), what);
    const double fnr_u = rate(g.unprivileged.fn, g.unprivileged.positives(), what);
    return ratio_or_fail(fpr_p, fpr_u, what) * ratio_or_fail(fnr_p, fnr_u, what);
}

inline double demographic_parity_ratio(const PredictionSet& p, const std::string& privileged = "male") {
    return demographic_parity_ratio(confusion_by_group(p), privileged);
}
inline double equality_of_opportunity_difference(const PredictionSet& p, const std::string& privileged = "male") {
    return equality_of_opportunity_difference(confusion_by_group(p), privileged);
}
inline double equalized_odds_ratio(const PredictionSet& p, const std::string& privileged = "male") {
    return equalized_odds_ratio(confusion_by_group(p), privileged);
}

struct FairnessReport {
    std::string privileged;
    std::optional<double> dpr;
    std::optional<double> eod;
    std::optional<double> eor;
    std::map<std::string, double> positive_rate;
    std::map<std::string, Confusion> confusion;
    std::vector<std::string> undefined;
};

/// All three metrics; a metric with a zero denominator is left empty and
/// listed in `undefined` instead of aborting the report.
inline FairnessReport fairness_report(const PredictionSet& p, const std::string& privileged = "male") {
    FairnessReport r;
    r.privileged = privileged;
    r.confusion = confusion_by_group(p);
    split_privileged(r.confusion, privileged);
    r.positive_rate = positive_rate_by_group(p);
    auto attempt = [&](std::optional<double>& dst, const char* name, auto fn) {
        try {
            dst = fn(r.confusion, privileged);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::UndefinedMetric) throw;
            r.undefined.emplace_back(name);
        }
    };
    attempt(r.dpr, "demographic_parity_ratio",
            [](const auto& cm, const auto& g) { return demographic_parity_ratio(cm, g); });
    attempt(r.eod, "equality_of_opportunity_difference",
            [](const auto& cm, const auto& g) { return equality_of_opportunity_difference(cm, g); });
    attempt(r.eor, "equalized_odds_ratio",
            [](const auto& cm, const auto& g) { return equalized_odds_ratio(cm, g); });
    return r;
}

inline json to_json(const FairnessReport& r) {
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    json conf = json::object();
    for (const auto& [g, c] : r.confusion) conf[g] = {{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn}};
    return {{"privileged_group", r.privileged},
            {"demographic_parity_ratio", opt(r.dpr)},
            {"equality_of_opportunity_difference", opt(r.eod)},
            {"abs_equality_of_opportunity_difference", r.eod ? json(std::abs(*r.eod)) : json(nullptr)},
            {"equalized_odds_ratio", opt(r.eor)},
            {"positive_rate", r.positive_rate},
            {"confusion", conf},
            {"undefined", r.undefined}};
}

} // namespace fpm
