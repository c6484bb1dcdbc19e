#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "fpm/pipeline.hpp"

namespace {

using namespace fpm;

/// Command-line values that override fields of the loaded PipelineConfig.
struct Overrides {
    std::optional<std::string> group_column, privileged, preset, weight_by, activation, noise_kind, task, classifier,
        threshold;
    std::optional<std::size_t> rep_dim, epochs, batch, max_depth, n_trees, n_rounds, topics_k, topics_sweeps, top_n,
        n_patients;
    std::optional<double> noise, lr, lambda, topics_alpha, topics_beta;
    bool resample = false;
};

void add_data_options(CLI::App* c, Overrides& o) {
    c->add_option("--group-column", o.group_column, "Sensitive-attribute column");
    c->add_option("--privileged", o.privileged, "Privileged group value");
}

void add_model_options(CLI::App* c, Overrides& o) {
    c->add_option("--preset", o.preset, "Model preset: sdae, fpm, rw-sdae");
    c->add_option("--weight-by", o.weight_by, "Inverse-frequency classes: group, label, group*label");
    c->add_option("--rep-dim", o.rep_dim, "Representation width");
    c->add_option("--activation", o.activation, "Activation preset: paper-fpm, paper-appendix, identity-out");
    c->add_option("--noise-kind", o.noise_kind, "Corruption: mask or gaussian");
    c->add_option("--noise", o.noise, "Mask keep-probability or gaussian noise factor");
    c->add_option("--lr", o.lr, "Learning rate");
    c->add_option("--epochs", o.epochs, "Training epochs");
    c->add_option("--batch", o.batch, "Minibatch size");
    c->add_option("--lambda", o.lambda, "Latent group-mean penalty weight");
    c->add_option("--task", o.task, "Label horizon for reweighing: 30d, 60d, 90d, 365d");
    c->add_flag("--resample", o.resample, "Weighted bootstrap instead of loss weights");
}

void add_classifier_options(CLI::App* c, Overrides& o) {
    c->add_option("--task", o.task, "Label horizon: 30d, 60d, 90d, 365d");
    c->add_option("--classifier", o.classifier, "tree, forest, gbm or logistic");
    c->add_option("--threshold", o.threshold, "Decision threshold in [0,1] or 'prevalence'");
    c->add_option("--max-depth", o.max_depth, "Maximum tree depth");
    c->add_option("--n-trees", o.n_trees, "Forest size");
    c->add_option("--n-rounds", o.n_rounds, "Boosting rounds");
}

void add_topic_options(CLI::App* c, Overrides& o) {
    c->add_option("--k", o.topics_k, "Number of topics");
    c->add_option("--alpha", o.topics_alpha, "Document-topic prior (default 50/K)");
    c->add_option("--beta", o.topics_beta, "Topic-word prior");
    c->add_option("--sweeps", o.topics_sweeps, "Gibbs sweeps");
}

void apply(const Overrides& o, PipelineConfig& c) {
    if (o.group_column) c.group_column = *o.group_column;
    if (o.privileged) c.privileged_group = *o.privileged;
    if (o.preset) c.preset = *o.preset;
    if (o.weight_by) c.weight_by = *o.weight_by;
    if (o.activation) c.activation_preset = *o.activation;
    if (o.noise_kind) c.noise_kind = *o.noise_kind;
    if (o.task) c.task = *o.task;
    if (o.classifier) c.classifier = *o.classifier;
    if (o.threshold) {
        if (*o.threshold == "prevalence") c.threshold = {true, 0.5};
        else c.threshold = {false, csv::parse_double(*o.threshold, "--threshold")};
    }
    if (o.rep_dim) c.rep_dim = *o.rep_dim;
    if (o.epochs) c.epochs = *o.epochs;
    if (o.batch) c.batch_size = *o.batch;
    if (o.max_depth) c.clf.max_depth = *o.max_depth;
    if (o.n_trees) c.clf.n_trees = *o.n_trees;
    if (o.n_rounds) c.clf.n_rounds = *o.n_rounds;
    if (o.topics_k) c.topics_k = *o.topics_k;
    if (o.topics_sweeps) c.topics_sweeps = *o.topics_sweeps;
    if (o.top_n) c.top_n = *o.top_n;
    if (o.n_patients) c.synth.n_patients = *o.n_patients;
    if (o.noise) c.noise = *o.noise;
    if (o.lr) c.learning_rate = *o.lr;
    if (o.lambda) c.lambda = *o.lambda;
    if (o.topics_alpha) c.topics_alpha = *o.topics_alpha;
    if (o.topics_beta) c.topics_beta = *o.topics_beta;
    if (o.resample) c.resample = true;
}

Checkpoint load_checkpoint(const std::string& path) { return checkpoint_from_json(read_json(path)); }

/// Replaces labels and group of `reps` with those of `source`, matched by id.
void attach_labels(FeatureMatrix& reps, const FeatureMatrix& source) {
    std::map<std::string, std::size_t> row;
    for (std::size_t i = 0; i < source.n_patients(); ++i) row[source.ids[i]] = i;
    std::vector<std::size_t> idx;
    for (const auto& id : reps.ids) {
        auto it = row.find(id);
        if (it == row.end()) fail(ErrorKind::MissingColumn, "patient '" + id + "' has no labels");
        idx.push_back(it->second);
    }
    const FeatureMatrix aligned = source.subset(idx);
    reps.labels = aligned.labels;
    reps.group = aligned.group;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fair patient representations: data, training, evaluation and reports"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string config_path, out_dir;
    std::optional<std::uint64_t> seed;
    app.add_option("--config", config_path, "Pipeline configuration JSON");
    app.add_option("--seed", seed, "Root seed");
    app.add_option("--out", out_dir, "Output directory");

    Overrides o;
    std::string input, schema, state, notes, model_path, matrix, checkpoint, reps, labels, predictions;
    double missing_threshold = 0.70;
    bool with_notes = false;

    auto* synth = app.add_subcommand("synth", "Generate a synthetic cohort");
    synth->add_option("--n", o.n_patients, "Number of patients");
    synth->add_flag("--notes", with_notes, "Also write synthetic notes");

    auto* prep = app.add_subcommand("preprocess", "Filter, impute, normalise, encode and aggregate a raw table");
    prep->add_option("--input", input, "Raw CSV")->required();
    prep->add_option("--schema", schema, "Column-kind JSON")->required();
    prep->add_option("--state", state, "Stored statistics to apply instead of refitting");
    prep->add_option("--missing-threshold", missing_threshold, "Minimum present fraction to keep a column");

    auto* topics = app.add_subcommand("topics", "Topic model over clinical notes");
    topics->require_subcommand(1);
    auto* tfit = topics->add_subcommand("fit", "Fit LDA by collapsed Gibbs sampling");
    tfit->add_option("--notes", notes, "Notes JSONL")->required();
    add_topic_options(tfit, o);
    auto* tvec = topics->add_subcommand("vectorize", "Append per-patient topic proportions to a matrix");
    tvec->add_option("--notes", notes, "Notes JSONL")->required();
    tvec->add_option("--model", model_path, "Topic model JSON")->required();
    tvec->add_option("--matrix", matrix, "Feature matrix CSV")->required();

    auto* train = app.add_subcommand("train", "Train an autoencoder preset");
    train->add_option("--matrix", matrix, "Feature matrix CSV");
    add_data_options(train, o);
    add_model_options(train, o);

    auto* enc = app.add_subcommand("encode", "Encode a matrix with a trained checkpoint");
    enc->add_option("--checkpoint", checkpoint, "Checkpoint JSON")->required();
    enc->add_option("--matrix", matrix, "Feature matrix CSV")->required();
    add_data_options(enc, o);

    auto* cls = app.add_subcommand("classify", "Train a classifier on the train split, predict the test split");
    cls->add_option("--reps", reps, "Representation CSV")->required();
    cls->add_option("--labels", labels, "Matrix supplying labels and groups by patient id");
    add_data_options(cls, o);
    add_classifier_options(cls, o);

    auto* fair = app.add_subcommand("fairness", "Fairness and performance metrics of a prediction file");
    fair->add_option("--predictions", predictions, "PredictionSet CSV")->required();
    add_data_options(fair, o);

    auto* feat = app.add_subcommand("feature-report", "Best and worst reconstructed features");
    feat->add_option("--checkpoint", checkpoint, "Checkpoint JSON")->required();
    feat->add_option("--matrix", matrix, "Feature matrix CSV")->required();
    feat->add_option("--top-n", o.top_n, "Rows per table");
    add_data_options(feat, o);

    auto* exp = app.add_subcommand("experiment", "Run every preset on every task and write the report");
    exp->add_option("--matrix", matrix, "Feature matrix CSV (synthesised when absent)");
    exp->add_option("--notes", notes, "Notes JSONL");
    exp->add_option("--top-n", o.top_n, "Rows per feature table");
    exp->add_option("--n", o.n_patients, "Synthetic cohort size");
    add_data_options(exp, o);
    add_model_options(exp, o);
    exp->add_option("--classifier", o.classifier, "tree, forest, gbm or logistic");
    exp->add_option("--threshold", o.threshold, "Decision threshold in [0,1] or 'prevalence'");

    CLI11_PARSE(app, argc, argv);

    try {
        PipelineConfig cfg = config_path.empty() ? PipelineConfig{} : load_pipeline_config(config_path);
        if (seed) cfg.seed = *seed;
        if (!out_dir.empty()) cfg.out = out_dir;
        if (!matrix.empty()) cfg.matrix = matrix;
        if (!notes.empty()) cfg.notes = notes;
        apply(o, cfg);
        cfg.validate();
        const std::string out = cfg.out;
        auto read_matrix = [&](const std::string& path) { return read_feature_matrix(path, cfg.group_column); };

        if (synth->parsed()) {
            ensure_dir(out);
            const FeatureMatrix fm = run_synth(cfg);
            write_feature_matrix(join_path(out, "matrix.csv"), fm);
            std::cout << "wrote " << fm.n_patients() << " patients x " << fm.n_features() << " features to "
                      << join_path(out, "matrix.csv") << '\n';
            if (with_notes || cfg.synth_notes.enabled) {
                const auto ns = synth_notes(fm, cfg.synth_notes, stage_seed(cfg, "notes"));
                text::write_notes_jsonl(join_path(out, "notes.jsonl"), ns);
                std::cout << "wrote " << ns.size() << " notes to " << join_path(out, "notes.jsonl") << '\n';
            }
        } else if (prep->parsed()) {
            ensure_dir(out);
            std::optional<PreprocessState> st;
            if (!state.empty()) st = preprocess_state_from_json(read_json(state));
            const auto res = run_preprocess(input, read_json(schema), missing_threshold, st);
            write_feature_matrix(join_path(out, "matrix.csv"), res.matrix, res.state);
            write_json(join_path(out, "preprocess_state.json"), to_json(res.state));
            std::cout << (res.refit ? "fitted" : "applied stored") << " statistics; " << res.matrix.n_patients()
                      << " patients x " << res.matrix.n_features() << " features\n";
        } else if (tfit->parsed()) {
            ensure_dir(out);
            const auto fit = run_topics_fit(text::read_notes_jsonl(cfg.notes), cfg);
            write_json(join_path(out, "topic_model.json"), to_json(fit.model));
            std::cout << "documents " << fit.documents << " tokens " << fit.tokens << " vocabulary " << fit.model.V() << '\n'
                      << "perplexity " << csv::format_exact(fit.perplexity) << '\n';
        } else if (tvec->parsed()) {
            ensure_dir(out);
            const auto model = text::topic_model_from_json(read_json(model_path));
            const auto res = run_topics_vectorize(read_matrix(cfg.matrix), text::read_notes_jsonl(cfg.notes), model, cfg);
            write_feature_matrix(join_path(out, "matrix_topics.csv"), res.matrix);
            std::cout << "appended " << model.K << " topic columns; " << res.matrix.n_patients() << " patients\n";
            if (!res.excluded.empty()) {
                std::string list;
                for (const auto& id : res.excluded) list += id + "\n";
                write_text(join_path(out, "excluded_patients.txt"), list);
                std::cerr << "NoNotes: excluded " << res.excluded.size() << " patients without notes (listed in "
                          << join_path(out, "excluded_patients.txt") << ")\n";
            }
        } else if (train->parsed()) {
            if (cfg.matrix.empty()) fail(ErrorKind::InvalidConfig, "train needs --matrix or paths.matrix");
            ensure_dir(out);
            const FeatureMatrix fm = read_matrix(cfg.matrix);
            const Checkpoint ck = run_train(fm, cfg, cfg.preset, [](std::size_t e, double tl, double vl) {
                std::cerr << "epoch " << e + 1 << " train " << fixed4(tl) << " val " << fixed4(vl) << '\n';
            });
            write_json(join_path(out, "checkpoint.json"), to_json(ck));
            json losses = loss_row_json(ck.preset, ck.report);
            losses["schema_version"] = kReportSchemaVersion;
            write_json(join_path(out, "losses.json"), losses);
            const std::string table = table3_header() + table3_row(ck.preset, ck.report);
            write_text(join_path(out, "losses.md"), table);
            std::cout << table;
        } else if (enc->parsed()) {
            ensure_dir(out);
            const FeatureMatrix z = run_encode(load_checkpoint(checkpoint).model, read_matrix(cfg.matrix));
            write_feature_matrix(join_path(out, "representations.csv"), z);
            std::cout << "encoded " << z.n_patients() << " patients into " << z.n_features() << " columns\n";
        } else if (cls->parsed()) {
            ensure_dir(out);
            FeatureMatrix z = read_matrix(reps);
            if (!labels.empty()) attach_labels(z, read_matrix(labels));
            const auto res = run_classify(z, cfg, cfg.task, cfg.classifier);
            write_predictions(join_path(out, "predictions.csv"), res.predictions);
            write_json(join_path(out, "classifier.json"), to_json(res.model));
            write_json(join_path(out, "metrics.json"), to_json(res));
            std::cout << "task " << res.task << " classifier " << res.classifier << " threshold " << fixed4(res.threshold)
                      << "\naccuracy " << fixed4(res.accuracy) << "\nauroc " << fixed4(res.auroc) << '\n';
        } else if (fair->parsed()) {
            ensure_dir(out);
            const auto p = read_predictions(predictions, cfg.group_column_or_default());
            const FairnessRow row = fairness_row(p, cfg.privileged_group);
            write_json(join_path(out, "fairness.json"), to_json(row));
            const std::string table = table2_header() + table2_row(row);
            write_text(join_path(out, "fairness.md"), table);
            std::cout << table;
            for (const auto& u : row.report.undefined) std::cerr << "UndefinedMetric: " << u << '\n';
        } else if (feat->parsed()) {
            ensure_dir(out);
            const auto fr = run_feature_report(load_checkpoint(checkpoint).model, read_matrix(cfg.matrix), cfg.top_n);
            write_json(join_path(out, "feature_report.json"), to_json(fr));
            const std::string md = feature_report_markdown(fr);
            write_text(join_path(out, "feature_report.md"), md);
            std::cout << md;
        } else if (exp->parsed()) {
            run_experiment(cfg, out, [](const std::string& m) { std::cerr << m << '\n'; });
            std::cout << "report written to " << join_path(out, "report.md") << '\n';
        }
    } catch (const fpm::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
