#pragma once

// Structured EHR cleaning (missingness filter, median/mode imputation,
// z-scoring, one-hot encoding, per-patient encounter aggregation), the
// FeatureMatrix carrier, a calibrated synthetic cohort generator and a
// stratified train/val/test split.

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "fpm/csv.hpp"
#include "fpm/error.hpp"
#include "fpm/numcore.hpp"

namespace fpm {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Mortality horizons

enum class Horizon { D30 = 0, D60 = 1, D90 = 2, D365 = 3 };
inline constexpr std::array<Horizon, 4> kHorizons{Horizon::D30, Horizon::D60, Horizon::D90, Horizon::D365};

inline std::string_view to_string(Horizon h) {
    switch (h) {
    case Horizon::D30: return "30d";
    case Horizon::D60: return "60d";
    case Horizon::D90: return "90d";
    case Horizon::D365: return "365d";
    }
    return "30d";
}

inline Horizon horizon_from_string(std::string_view s) {
    for (Horizon h : kHorizons)
        if (to_string(h) == s) return h;
    fail(ErrorKind::Parse, "unknown horizon '" + std::string(s) + "' (expected 30d|60d|90d|365d)");
}

inline std::string label_column_name(Horizon h) { return "y_" + std::string(to_string(h)); }

// ---------------------------------------------------------------------------
// RawTable

enum class ColumnKind { Numeric, Categorical, Id, Group, Label };

struct Column {
    std::string name;
    ColumnKind kind = ColumnKind::Numeric;
    Horizon horizon = Horizon::D30; // Label columns only
    std::vector<std::optional<double>> numeric;          // Numeric, Label
    std::vector<std::optional<std::string>> categorical; // Categorical, Id, Group

    bool is_feature() const { return kind == ColumnKind::Numeric || kind == ColumnKind::Categorical; }
    bool holds_numbers() const { return kind == ColumnKind::Numeric || kind == ColumnKind::Label; }
    std::size_t size() const { return holds_numbers() ? numeric.size() : categorical.size(); }
    bool present(std::size_t r) const {
        return holds_numbers() ? numeric[r].has_value() : categorical[r].has_value();
    }
};

struct RawTable {
    std::vector<Column> columns;

    std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }

    std::size_t id_index() const {
        std::optional<std::size_t> idx;
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i].kind == ColumnKind::Id) {
                if (idx) fail(ErrorKind::InvalidConfig, "more than one patient-id column");
                idx = i;
            }
        if (!idx) fail(ErrorKind::InvalidConfig, "no patient-id column");
        return *idx;
    }

    const Column& column(std::string_view name) const {
        for (const auto& c : columns)
            if (c.name == name) return c;
        fail(ErrorKind::MissingColumn, "column '" + std::string(name) + "' not found");
    }

    std::size_t feature_count() const {
        return static_cast<std::size_t>(
            std::count_if(columns.begin(), columns.end(), [](const Column& c) { return c.is_feature(); }));
    }
};

inline bool is_missing_token(const std::string& s) { return s.empty() || s == "NA"; }

/// Schema values: "numeric", "categorical", "id", "group", or "label:<horizon>".
inline RawTable raw_table_from_csv(const csv::Table& t, const json& schema) {
    RawTable out;
    for (std::size_t c = 0; c < t.header.size(); ++c) {
        const auto& name = t.header[c];
        if (!schema.contains(name)) fail(ErrorKind::InvalidConfig, "schema has no kind for column '" + name + "'");
        const std::string kind = schema.at(name).get<std::string>();
        Column col;
        col.name = name;
        if (kind == "numeric") col.kind = ColumnKind::Numeric;
        else if (kind == "categorical") col.kind = ColumnKind::Categorical;
        else if (kind == "id") col.kind = ColumnKind::Id;
        else if (kind == "group") col.kind = ColumnKind::Group;
        else if (kind.rfind("label:", 0) == 0) {
            col.kind = ColumnKind::Label;
            col.horizon = horizon_from_string(kind.substr(6));
        } else
            fail(ErrorKind::InvalidConfig, "column '" + name + "': unknown kind '" + kind + "'");
        for (const auto& row : t.rows) {
            const auto& cell = row[c];
            if (col.holds_numbers()) {
                if (is_missing_token(cell)) col.numeric.emplace_back();
                else col.numeric.emplace_back(csv::parse_double(cell, name));
            } else {
                if (is_missing_token(cell)) col.categorical.emplace_back();
                else col.categorical.emplace_back(cell);
            }
        }
        out.columns.push_back(std::move(col));
    }
    for (const auto& [name, _] : schema.items())
        if (!t.has_column(name)) fail(ErrorKind::MissingColumn, "schema column '" + name + "' absent from CSV");
    out.id_index();
    return out;
}

// ---------------------------------------------------------------------------
// Cleaning operations

/// Drops feature columns whose present fraction is below `threshold`
/// (a column exactly at the threshold is kept).
inline RawTable filter_missingness(const RawTable& t, double threshold = 0.70) {
    if (!(threshold > 0.0 && threshold <= 1.0))
        fail(ErrorKind::InvalidConfig, "missingness threshold must be in (0, 1]");
    RawTable out;
    const double n = static_cast<double>(t.rows());
    for (const auto& col : t.columns) {
        if (!col.is_feature()) {
            out.columns.push_back(col);
            continue;
        }
        std::size_t present = 0;
        for (std::size_t r = 0; r < col.size(); ++r) present += col.present(r) ? 1 : 0;
        if (n > 0 && static_cast<double>(present) / n >= threshold) out.columns.push_back(col);
    }
    if (out.feature_count() == 0) fail(ErrorKind::EmptyResult, "every feature column fell below the missingness threshold");
    return out;
}

inline double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Fitted imputation values, reusable on held-out rows.
struct ImputeStats {
    std::map<std::string, double> medians;
    std::map<std::string, std::string> modes;
};

inline ImputeStats fit_impute(const RawTable& t) {
    ImputeStats s;
    for (const auto& col : t.columns) {
        if (col.kind == ColumnKind::Numeric) {
            std::vector<double> present;
            for (const auto& v : col.numeric)
                if (v) present.push_back(*v);
            if (present.empty()) fail(ErrorKind::AllMissingColumn, "numeric column '" + col.name + "' has no values");
            s.medians[col.name] = median_of(std::move(present));
        } else if (col.kind == ColumnKind::Categorical) {
            std::map<std::string, std::size_t> counts;
            for (const auto& v : col.categorical)
                if (v) ++counts[*v];
            if (counts.empty()) fail(ErrorKind::AllMissingColumn, "categorical column '" + col.name + "' has no values");
            // map order makes ties resolve to the lexicographically smallest value
            auto best = counts.begin();
            for (auto it = counts.begin(); it != counts.end(); ++it)
                if (it->second > best->second) best = it;
            s.modes[col.name] = best->first;
        }
    }
    return s;
}

inline RawTable apply_impute(const RawTable& t, const ImputeStats& s) {
    RawTable out = t;
    for (auto& col : out.columns) {
        if (col.kind == ColumnKind::Numeric) {
            auto it = s.medians.find(col.name);
            if (it == s.medians.end()) fail(ErrorKind::MissingColumn, "no stored median for '" + col.name + "'");
            for (auto& v : col.numeric)
                if (!v) v = it->second;
        } else if (col.kind == ColumnKind::Categorical) {
            auto it = s.modes.find(col.name);
            if (it == s.modes.end()) fail(ErrorKind::MissingColumn, "no stored mode for '" + col.name + "'");
            for (auto& v : col.categorical)
                if (!v) v = it->second;
        }
    }
    return out;
}

/// Median for numeric columns, mode for categorical ones.
inline RawTable impute_median(const RawTable& t) { return apply_impute(t, fit_impute(t)); }

struct ColumnStats {
    double mean = 0.0;
    double std = 0.0; // population
};
using NormStats = std::map<std::string, ColumnStats>;

inline RawTable apply_zscore(const RawTable& t, const NormStats& stats) {
    RawTable out = t;
    for (auto& col : out.columns) {
        if (col.kind != ColumnKind::Numeric) continue;
        auto it = stats.find(col.name);
        if (it == stats.end()) fail(ErrorKind::MissingColumn, "no stored normalization for '" + col.name + "'");
        const auto [mean, sd] = it->second;
        for (auto& v : col.numeric) {
            if (!v) fail(ErrorKind::InvalidConfig, "zscore on missing cell in '" + col.name + "'; impute first");
            v = sd > 0.0 ? (*v - mean) / sd : 0.0;
        }
    }
    return out;
}

inline NormStats fit_zscore(const RawTable& t) {
    NormStats stats;
    for (const auto& col : t.columns) {
        if (col.kind != ColumnKind::Numeric) continue;
        double sum = 0.0;
        for (const auto& v : col.numeric) {
            if (!v) fail(ErrorKind::InvalidConfig, "zscore on missing cell in '" + col.name + "'; impute first");
            sum += *v;
        }
        const double n = static_cast<double>(col.numeric.size());
        const double mean = sum / n;
        double ss = 0.0;
        for (const auto& v : col.numeric) ss += (*v - mean) * (*v - mean);
        stats[col.name] = {mean, std::sqrt(ss / n)};
    }
    return stats;
}

/// Population z-score; constant columns map to zero.
inline std::pair<RawTable, NormStats> zscore_normalize(const RawTable& t) {
    auto stats = fit_zscore(t);
    return {apply_zscore(t, stats), std::move(stats)};
}

using CategoryMap = std::map<std::string, std::vector<std::string>>;

inline CategoryMap fit_categories(const RawTable& t) {
    CategoryMap cats;
    for (const auto& col : t.columns) {
        if (col.kind != ColumnKind::Categorical) continue;
        std::set<std::string> seen;
        for (const auto& v : col.categorical)
            if (v) seen.insert(*v);
        cats[col.name] = {seen.begin(), seen.end()};
    }
    return cats;
}

/// Categorical columns become `<col>=<value>` indicator columns in place,
/// ordered lexicographically by value. Values absent from `cats` encode as
/// all-zero rows.
inline RawTable apply_one_hot(const RawTable& t, const CategoryMap& cats) {
    RawTable out;
    for (const auto& col : t.columns) {
        if (col.kind != ColumnKind::Categorical) {
            out.columns.push_back(col);
            continue;
        }
        auto it = cats.find(col.name);
        if (it == cats.end()) fail(ErrorKind::MissingColumn, "no stored categories for '" + col.name + "'");
        for (const auto& value : it->second) {
            Column ind;
            ind.name = col.name + "=" + value;
            ind.kind = ColumnKind::Numeric;
            ind.numeric.reserve(col.categorical.size());
            for (const auto& v : col.categorical) ind.numeric.emplace_back(v && *v == value ? 1.0 : 0.0);
            out.columns.push_back(std::move(ind));
        }
    }
    return out;
}

inline RawTable one_hot_encode(const RawTable& t) { return apply_one_hot(t, fit_categories(t)); }

/// One row per patient (first-appearance order); features averaged over the
/// patient's encounters, labels take the max, group takes the first value.
inline RawTable aggregate_encounters(const RawTable& t) {
    const std::size_t id_col = t.id_index();
    for (const auto& col : t.columns)
        if (col.kind == ColumnKind::Categorical)
            fail(ErrorKind::InvalidConfig, "aggregate_encounters needs numeric features; one-hot '" + col.name + "' first");

    std::vector<std::string> order;
    std::unordered_map<std::string, std::vector<std::size_t>> rows_of;
    const auto& ids = t.columns[id_col].categorical;
    for (std::size_t r = 0; r < ids.size(); ++r) {
        if (!ids[r]) fail(ErrorKind::InvalidConfig, "row " + std::to_string(r) + " has no patient id");
        auto [it, inserted] = rows_of.try_emplace(*ids[r]);
        if (inserted) order.push_back(*ids[r]);
        it->second.push_back(r);
    }

    RawTable out;
    for (const auto& col : t.columns) {
        Column agg;
        agg.name = col.name;
        agg.kind = col.kind;
        agg.horizon = col.horizon;
        for (const auto& pid : order) {
            const auto& rs = rows_of.at(pid);
            if (col.kind == ColumnKind::Id) {
                agg.categorical.emplace_back(pid);
            } else if (col.kind == ColumnKind::Group) {
                std::optional<std::string> g;
                for (auto r : rs)
                    if (col.categorical[r]) {
                        g = col.categorical[r];
                        break;
                    }
                agg.categorical.push_back(g);
            } else if (col.kind == ColumnKind::Label) {
                std::optional<double> y;
                for (auto r : rs)
                    if (col.numeric[r]) y = std::max(y.value_or(0.0), *col.numeric[r]);
                agg.numeric.push_back(y);
            } else {
                double sum = 0.0;
                std::size_t n = 0;
                for (auto r : rs)
                    if (col.numeric[r]) {
                        sum += *col.numeric[r];
                        ++n;
                    }
                agg.numeric.push_back(n ? std::optional<double>(sum / static_cast<double>(n)) : std::nullopt);
            }
        }
        out.columns.push_back(std::move(agg));
    }
    return out;
}

// ---------------------------------------------------------------------------
// FeatureMatrix

struct FeatureMatrix {
    std::vector<std::string> ids;
    std::vector<std::string> feature_names;
    Matrix values;
    std::vector<std::string> group; // empty when no sensitive attribute is known
    std::array<std::vector<int>, 4> labels; // indexed by Horizon; empty when absent

    std::size_t n_patients() const { return ids.size(); }
    std::size_t n_features() const { return feature_names.size(); }

    bool has_labels(Horizon h) const { return !labels[static_cast<int>(h)].empty(); }
    const std::vector<int>& label(Horizon h) const {
        const auto& y = labels[static_cast<int>(h)];
        if (y.empty()) fail(ErrorKind::MissingColumn, "no labels for horizon " + std::string(to_string(h)));
        return y;
    }

    FeatureMatrix subset(std::span<const std::size_t> idx) const {
        FeatureMatrix out;
        out.feature_names = feature_names;
        out.values = values.select_rows(idx);
        for (auto i : idx) {
            out.ids.push_back(ids[i]);
            if (!group.empty()) out.group.push_back(group[i]);
        }
        for (std::size_t h = 0; h < 4; ++h)
            if (!labels[h].empty())
                for (auto i : idx) out.labels[h].push_back(labels[h][i]);
        return out;
    }

    /// Appends columns (same row order) to the right of the existing features.
    void append_columns(const std::vector<std::string>& names, const Matrix& cols) {
        if (cols.rows() != n_patients() || cols.cols() != names.size())
            fail(ErrorKind::DimensionMismatch, "append_columns shape mismatch");
        Matrix merged(n_patients(), n_features() + names.size());
        for (std::size_t r = 0; r < n_patients(); ++r) {
            std::copy(values.row(r).begin(), values.row(r).end(), merged.row(r).begin());
            std::copy(cols.row(r).begin(), cols.row(r).end(), merged.row(r).begin() + n_features());
        }
        values = std::move(merged);
        feature_names.insert(feature_names.end(), names.begin(), names.end());
    }

    void validate() const {
        if (values.rows() != ids.size() || values.cols() != feature_names.size())
            fail(ErrorKind::DimensionMismatch, "feature matrix shape disagrees with ids/names");
        if (!group.empty() && group.size() != ids.size())
            fail(ErrorKind::DimensionMismatch, "group column length mismatch");
        for (const auto& y : labels) {
            if (!y.empty() && y.size() != ids.size()) fail(ErrorKind::DimensionMismatch, "label length mismatch");
            for (int v : y)
                if (v != 0 && v != 1) fail(ErrorKind::InvalidConfig, "labels must be 0 (alive) or 1 (deceased)");
        }
        for (double v : values.data())
            if (!std::isfinite(v)) fail(ErrorKind::InvalidConfig, "feature matrix holds a non-finite value");
    }
};

/// Preprocessing state persisted next to a FeatureMatrix so held-out rows are
/// transformed with the training statistics rather than refit.
struct PreprocessState {
    double threshold = 0.70;
    std::vector<std::string> kept_columns;
    ImputeStats impute;
    NormStats norm;
    CategoryMap categories;
};

inline json to_json(const PreprocessState& s) {
    json j;
    j["missingness_threshold"] = s.threshold;
    j["kept_columns"] = s.kept_columns;
    j["medians"] = s.impute.medians;
    j["modes"] = s.impute.modes;
    json norm = json::object();
    for (const auto& [k, v] : s.norm) norm[k] = {{"mean", v.mean}, {"std", v.std}};
    j["normalization"] = norm;
    j["categories"] = s.categories;
    return j;
}

inline PreprocessState preprocess_state_from_json(const json& j) {
    PreprocessState s;
    s.threshold = j.at("missingness_threshold").get<double>();
    s.kept_columns = j.at("kept_columns").get<std::vector<std::string>>();
    s.impute.medians = j.at("medians").get<std::map<std::string, double>>();
    s.impute.modes = j.at("modes").get<std::map<std::string, std::string>>();
    for (const auto& [k, v] : j.at("normalization").items()) s.norm[k] = {v.at("mean").get<double>(), v.at("std").get<double>()};
    s.categories = j.at("categories").get<CategoryMap>();
    return s;
}

inline FeatureMatrix to_feature_matrix(const RawTable& t) {
    FeatureMatrix fm;
    const std::size_t n = t.rows();
    std::vector<const Column*> features;
    for (const auto& col : t.columns) {
        switch (col.kind) {
        case ColumnKind::Id:
            for (const auto& v : col.categorical) fm.ids.push_back(v.value_or(""));
            break;
        case ColumnKind::Group:
            for (const auto& v : col.categorical) {
                if (!v) fail(ErrorKind::InvalidConfig, "group column '" + col.name + "' has missing cells");
                fm.group.push_back(*v);
            }
            break;
        case ColumnKind::Label: {
            auto& y = fm.labels[static_cast<int>(col.horizon)];
            for (const auto& v : col.numeric) {
                if (!v) fail(ErrorKind::InvalidConfig, "label column '" + col.name + "' has missing cells");
                y.push_back(*v != 0.0 ? 1 : 0);
            }
            break;
        }
        case ColumnKind::Numeric:
            features.push_back(&col);
            fm.feature_names.push_back(col.name);
            break;
        case ColumnKind::Categorical:
            fail(ErrorKind::InvalidConfig, "categorical column '" + col.name + "' must be one-hot encoded first");
        }
    }
    fm.values = Matrix(n, features.size());
    for (std::size_t j = 0; j < features.size(); ++j)
        for (std::size_t r = 0; r < n; ++r) {
            const auto& v = features[j]->numeric[r];
            if (!v) fail(ErrorKind::InvalidConfig, "missing value survived preprocessing in '" + features[j]->name + "'");
            fm.values(r, j) = *v;
        }
    fm.validate();
    return fm;
}

/// filter → impute → zscore → one-hot → aggregate, fitting every statistic.
inline std::pair<FeatureMatrix, PreprocessState> preprocess_fit(const RawTable& raw, double threshold = 0.70) {
    PreprocessState st;
    st.threshold = threshold;
    RawTable t = filter_missingness(raw, threshold);
    for (const auto& c : t.columns) st.kept_columns.push_back(c.name);
    st.impute = fit_impute(t);
    t = apply_impute(t, st.impute);
    st.norm = fit_zscore(t);
    t = apply_zscore(t, st.norm);
    st.categories = fit_categories(t);
    t = apply_one_hot(t, st.categories);
    t = aggregate_encounters(t);
    return {to_feature_matrix(t), std::move(st)};
}

/// Same chain with stored statistics (held-out data).
inline FeatureMatrix preprocess_apply(const RawTable& raw, const PreprocessState& st) {
    RawTable t;
    for (const auto& name : st.kept_columns) t.columns.push_back(raw.column(name));
    t = apply_impute(t, st.impute);
    t = apply_zscore(t, st.norm);
    t = apply_one_hot(t, st.categories);
    t = aggregate_encounters(t);
    return to_feature_matrix(t);
}

// FeatureMatrix persistence: CSV (patient_id, group, y_<h>..., features) plus
// a JSON sidecar describing the columns.

inline std::string sidecar_path(const std::string& csv_path) {
    const auto dot = csv_path.rfind('.');
    const auto slash = csv_path.find_last_of('/');
    const bool has_ext = dot != std::string::npos && (slash == std::string::npos || dot > slash);
    return (has_ext ? csv_path.substr(0, dot) : csv_path) + ".meta.json";
}

inline void write_feature_matrix(const std::string& path, const FeatureMatrix& fm,
                                 const std::optional<PreprocessState>& state = std::nullopt) {
    fm.validate();
    csv::Table t;
    t.header.push_back("patient_id");
    const bool has_group = !fm.group.empty();
    if (has_group) t.header.push_back("group");
    std::vector<Horizon> hs;
    for (Horizon h : kHorizons)
        if (fm.has_labels(h)) {
            hs.push_back(h);
            t.header.push_back(label_column_name(h));
        }
    t.header.insert(t.header.end(), fm.feature_names.begin(), fm.feature_names.end());
    for (std::size_t r = 0; r < fm.n_patients(); ++r) {
        std::vector<std::string> row;
        row.reserve(t.header.size());
        row.push_back(fm.ids[r]);
        if (has_group) row.push_back(fm.group[r]);
        for (Horizon h : hs) row.push_back(std::to_string(fm.label(h)[r]));
        for (double v : fm.values.row(r)) row.push_back(csv::format_exact(v));
        t.rows.push_back(std::move(row));
    }
    csv::write(path, t);

    json meta;
    meta["schema_version"] = 1;
    meta["id_column"] = "patient_id";
    meta["group_column"] = has_group ? json("group") : json(nullptr);
    json labels = json::object();
    for (Horizon h : hs) labels[std::string(to_string(h))] = label_column_name(h);
    meta["label_columns"] = labels;
    meta["feature_columns"] = fm.feature_names;
    meta["preprocessing"] = state ? to_json(*state) : json(nullptr);
    std::ofstream out(sidecar_path(path), std::ios::binary);
    if (!out) fail(ErrorKind::IO, "cannot write sidecar for '" + path + "'");
    out << meta.dump(2) << '\n';
}

/// Reads a FeatureMatrix CSV. The sidecar, when present, names the group and
/// label columns; otherwise the default names are assumed.
inline FeatureMatrix read_feature_matrix(const std::string& path, const std::string& group_column = "") {
    const csv::Table t = csv::read(path);
    json meta;
    if (std::ifstream side(sidecar_path(path)); side) side >> meta;

    std::string id_col = meta.value("id_column", std::string("patient_id"));
    std::string grp_col = group_column;
    if (grp_col.empty()) {
        if (meta.contains("group_column") && meta["group_column"].is_string()) grp_col = meta["group_column"];
        else if (t.has_column("group")) grp_col = "group";
    } else if (!t.has_column(grp_col)) {
        fail(ErrorKind::MissingGroupColumn, "group column '" + grp_col + "' not present in " + path);
    }
    std::map<std::string, Horizon> label_cols;
    if (meta.contains("label_columns"))
        for (const auto& [h, name] : meta["label_columns"].items()) label_cols[name.get<std::string>()] = horizon_from_string(h);
    else
        for (Horizon h : kHorizons)
            if (t.has_column(label_column_name(h))) label_cols[label_column_name(h)] = h;

    FeatureMatrix fm;
    std::vector<std::size_t> feat_idx;
    const std::size_t id_idx = t.column(id_col);
    std::optional<std::size_t> grp_idx;
    if (!grp_col.empty()) grp_idx = t.column(grp_col);
    std::vector<std::pair<std::size_t, Horizon>> lab_idx;
    for (std::size_t c = 0; c < t.header.size(); ++c) {
        if (c == id_idx || (grp_idx && c == *grp_idx)) continue;
        if (auto it = label_cols.find(t.header[c]); it != label_cols.end()) {
            lab_idx.emplace_back(c, it->second);
            continue;
        }
        feat_idx.push_back(c);
        fm.feature_names.push_back(t.header[c]);
    }
    fm.values = Matrix(t.rows.size(), feat_idx.size());
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        fm.ids.push_back(row[id_idx]);
        if (grp_idx) fm.group.push_back(row[*grp_idx]);
        for (auto [c, h] : lab_idx) fm.labels[static_cast<int>(h)].push_back(csv::parse_double(row[c], t.header[c]) != 0.0);
        for (std::size_t j = 0; j < feat_idx.size(); ++j) {
            const auto& cell = row[feat_idx[j]];
            if (is_missing_token(cell)) fail(ErrorKind::Parse, path + ": missing cell in feature '" + t.header[feat_idx[j]] + "'");
            fm.values(r, j) = csv::parse_double(cell, t.header[feat_idx[j]]);
        }
    }
    fm.validate();
    return fm;
}

// ---------------------------------------------------------------------------
// Synthetic cohort

struct SynthConfig {
    std::size_t n_patients = 20000;
    std::vector<std::string> group_names{"female", "male"};
    std::vector<double> group_proportions{0.44, 0.56};
    // [group][horizon] mortality rates; defaults are the per-gender
    // deceased/total ratios of the MIMIC-III cohort (30d, 60d, 90d, 1y).
    std::vector<std::array<double, 4>> mortality{
        {2552.0 / 15350.0, 2963.0 / 15350.0, 3242.0 / 15350.0, 4585.0 / 15350.0},
        {3088.0 / 20001.0, 3597.0 / 20001.0, 3981.0 / 20001.0, 5613.0 / 20001.0},
    };
    std::size_t n_numeric = 160;
    std::size_t n_categorical = 10;
    std::size_t n_categories = 4;
    double group_effect = 0.2;  // mean shift scale for non-reference groups
    double label_effect = 0.15; // mean shift scale for 30-day deceased patients
    std::uint64_t seed = 42;

    void validate() const {
        if (n_patients == 0) fail(ErrorKind::InvalidConfig, "n_patients must be positive");
        if (group_names.empty() || group_names.size() != group_proportions.size() || group_names.size() != mortality.size())
            fail(ErrorKind::InvalidConfig, "group names, proportions and mortality rates must align");
        double total = 0.0;
        for (double p : group_proportions) {
            if (!(p >= 0.0 && p <= 1.0)) fail(ErrorKind::InvalidConfig, "group proportion outside [0,1]");
            total += p;
        }
        if (std::abs(total - 1.0) > 1e-9) fail(ErrorKind::InvalidConfig, "group proportions must sum to 1");
        for (const auto& rates : mortality)
            for (std::size_t h = 0; h < 4; ++h) {
                if (!(rates[h] >= 0.0 && rates[h] <= 1.0)) fail(ErrorKind::InvalidConfig, "mortality rate outside [0,1]");
                if (h && rates[h] < rates[h - 1])
                    fail(ErrorKind::InvalidConfig, "mortality rates must be non-decreasing across horizons");
            }
        if (!std::isfinite(group_effect) || !std::isfinite(label_effect)) fail(ErrorKind::InvalidConfig, "non-finite effect size");
        if (n_numeric + n_categorical == 0) fail(ErrorKind::InvalidConfig, "no features requested");
        if (n_categorical > 0 && n_categories < 1) fail(ErrorKind::InvalidConfig, "n_categories must be >= 1");
    }
};

inline json to_json(const SynthConfig& c) {
    json rates = json::array();
    for (const auto& r : c.mortality) rates.push_back(std::vector<double>(r.begin(), r.end()));
    return {{"n_patients", c.n_patients},     {"group_names", c.group_names},   {"group_proportions", c.group_proportions},
            {"mortality", rates},             {"n_numeric", c.n_numeric},       {"n_categorical", c.n_categorical},
            {"n_categories", c.n_categories}, {"group_effect", c.group_effect}, {"label_effect", c.label_effect},
            {"seed", c.seed}};
}

inline std::string pad_index(std::size_t i, std::size_t width) {
    std::string s = std::to_string(i);
    return std::string(width > s.size() ? width - s.size() : 0, '0') + s;
}

/// Group from the configured proportions; one uniform draw u per patient gives
/// nested labels (deceased at horizon h iff u < rate_h, rates non-decreasing);
/// numeric features are unit Gaussians shifted by group and 30-day label along
/// fixed per-feature loadings; categorical features use group-tilted category
/// probabilities and are emitted one-hot.
inline FeatureMatrix synth_generate(const SynthConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    const std::size_t n = cfg.n_patients;

    std::vector<double> group_load(cfg.n_numeric), label_load(cfg.n_numeric);
    for (std::size_t j = 0; j < cfg.n_numeric; ++j) {
        group_load[j] = rng.uniform(-1.0, 1.0);
        label_load[j] = rng.uniform(-1.0, 1.0);
    }
    std::vector<std::vector<double>> cat_base(cfg.n_categorical), cat_tilt(cfg.n_categorical);
    for (std::size_t c = 0; c < cfg.n_categorical; ++c)
        for (std::size_t k = 0; k < cfg.n_categories; ++k) {
            cat_base[c].push_back(rng.uniform(0.5, 1.5));
            cat_tilt[c].push_back(rng.uniform(-1.0, 1.0));
        }

    FeatureMatrix fm;
    const std::size_t width = std::to_string(std::max<std::size_t>(n, 1) - 1).size();
    const std::size_t num_w = std::to_string(std::max<std::size_t>(cfg.n_numeric, 1) - 1).size();
    const std::size_t cat_w = std::to_string(std::max<std::size_t>(cfg.n_categorical, 1) - 1).size();
    for (std::size_t j = 0; j < cfg.n_numeric; ++j) fm.feature_names.push_back("num_" + pad_index(j, num_w));
    for (std::size_t c = 0; c < cfg.n_categorical; ++c)
        for (std::size_t k = 0; k < cfg.n_categories; ++k)
            fm.feature_names.push_back("cat_" + pad_index(c, cat_w) + "=" + std::string(1, static_cast<char>('a' + k % 26)) +
                                       (k >= 26 ? std::to_string(k / 26) : ""));
    fm.values = Matrix(n, fm.feature_names.size());

    std::vector<double> probs(cfg.n_categories);
    for (std::size_t i = 0; i < n; ++i) {
        fm.ids.push_back("P" + pad_index(i, width));
        const std::size_t g = rng.categorical(cfg.group_proportions);
        fm.group.push_back(cfg.group_names[g]);
        const double u = rng.uniform();
        for (std::size_t h = 0; h < 4; ++h) fm.labels[h].push_back(u < cfg.mortality[g][h] ? 1 : 0);
        const double gshift = g > 0 ? cfg.group_effect : 0.0;
        const double yshift = fm.labels[0].back() ? cfg.label_effect : 0.0;
        auto row = fm.values.row(i);
        for (std::size_t j = 0; j < cfg.n_numeric; ++j)
            row[j] = rng.normal() + gshift * group_load[j] + yshift * label_load[j];
        std::size_t col = cfg.n_numeric;
        for (std::size_t c = 0; c < cfg.n_categorical; ++c) {
            for (std::size_t k = 0; k < cfg.n_categories; ++k) probs[k] = cat_base[c][k] * std::exp(gshift * cat_tilt[c][k]);
            const std::size_t pick = rng.categorical(probs);
            row[col + pick] = 1.0;
            col += cfg.n_categories;
        }
    }
    return fm;
}

// ---------------------------------------------------------------------------
// Stratified split

struct SplitFractions {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
};

struct SplitIndices {
    std::vector<std::size_t> train, val, test;
};

/// Partition stratified by (group, 30-day label). Global part sizes follow
/// largest-remainder rounding of the fractions; every stratum gets the floor
/// of its ideal share per part and its leftover patients go to the parts
/// with the largest fractional shares that still have room.
inline SplitIndices split_indices(const FeatureMatrix& fm, SplitFractions fr, std::uint64_t seed) {
    const std::array<double, 3> f{fr.train, fr.val, fr.test};
    for (double x : f)
        if (!(x >= 0.0 && x <= 1.0)) fail(ErrorKind::InvalidFractions, "fractions must lie in [0,1]");
    if (std::abs(f[0] + f[1] + f[2] - 1.0) > 1e-9) fail(ErrorKind::InvalidFractions, "fractions must sum to 1");
    if (!(f[0] > 0.0)) fail(ErrorKind::InvalidFractions, "train fraction must be positive");

    const std::size_t n = fm.n_patients();
    std::array<std::size_t, 3> target{};
    {
        std::array<double, 3> rem{};
        std::size_t assigned = 0;
        for (int p = 0; p < 3; ++p) {
            const double ideal = f[p] * static_cast<double>(n);
            target[p] = static_cast<std::size_t>(std::floor(ideal + 1e-9));
            rem[p] = ideal - static_cast<double>(target[p]);
            assigned += target[p];
        }
        while (assigned < n) {
            int best = 0;
            for (int p = 1; p < 3; ++p)
                if (rem[p] > rem[best]) best = p;
            ++target[best];
            rem[best] = -1.0;
            ++assigned;
        }
    }

    std::map<std::pair<std::string, int>, std::vector<std::size_t>> strata;
    const bool has_y = fm.has_labels(Horizon::D30);
    for (std::size_t i = 0; i < n; ++i)
        strata[{fm.group.empty() ? std::string() : fm.group[i], has_y ? fm.label(Horizon::D30)[i] : 0}].push_back(i);

    Rng rng(seed);
    std::array<std::vector<std::size_t>, 3> parts;
    std::array<std::size_t, 3> room = target;
    struct Leftover {
        std::vector<std::size_t> items;
        std::array<double, 3> frac;
    };
    std::vector<Leftover> leftovers;
    for (auto& [key, members] : strata) {
        rng.shuffle(members);
        std::size_t pos = 0;
        Leftover lo;
        for (int p = 0; p < 3; ++p) {
            const double ideal = f[p] * static_cast<double>(members.size());
            std::size_t take = static_cast<std::size_t>(std::floor(ideal + 1e-9));
            take = std::min(take, room[p]);
            lo.frac[p] = ideal - static_cast<double>(take);
            for (std::size_t k = 0; k < take; ++k) parts[p].push_back(members[pos++]);
            room[p] -= take;
        }
        lo.items.assign(members.begin() + static_cast<std::ptrdiff_t>(pos), members.end());
        leftovers.push_back(std::move(lo));
    }
    for (auto& lo : leftovers) {
        std::array<bool, 3> used{};
        for (auto idx : lo.items) {
            int best = -1;
            for (int p = 0; p < 3; ++p)
                if (room[p] > 0 && !used[p] && (best < 0 || lo.frac[p] > lo.frac[best])) best = p;
            if (best < 0)
                for (int p = 0; p < 3; ++p)
                    if (room[p] > 0) {
                        best = p;
                        break;
                    }
            parts[best].push_back(idx);
            used[best] = true;
            --room[best];
        }
    }
    for (auto& p : parts) std::sort(p.begin(), p.end());
    return {std::move(parts[0]), std::move(parts[1]), std::move(parts[2])};
}

struct Split {
    FeatureMatrix train, val, test;
};

inline Split split(const FeatureMatrix& fm, SplitFractions fr, std::uint64_t seed) {
    const auto idx = split_indices(fm, fr, seed);
    return {fm.subset(idx.train), fm.subset(idx.val), fm.subset(idx.test)};
}

} // namespace fpm
