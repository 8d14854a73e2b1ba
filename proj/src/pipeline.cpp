#include "rnf/pipeline.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "rnf/errors.hpp"
#include "rnf/random.hpp"
#include "rnf/serialize.hpp"

namespace fs = std::filesystem;

namespace rnf {

namespace {

enum Stream : std::uint64_t { replicate_stream = 11, sweep_stream = 12 };

template <class F>
auto stage(std::string_view name, F&& f) -> decltype(f()) {
    const std::string prefix = "stage '" + std::string(name) + "': ";
    try {
        return f();
    } catch (const IoError& e) {
        throw IoError(prefix + e.what());
    } catch (const ModelMismatch& e) {
        throw ModelMismatch(prefix + e.what());
    } catch (const ShapeError& e) {
        throw ShapeError(prefix + e.what());
    } catch (const InvalidArgument& e) {
        throw InvalidArgument(prefix + e.what());
    } catch (const DivergenceError& e) {
        throw DivergenceError(prefix + e.what());
    } catch (const std::exception& e) {
        throw Error(prefix + e.what());
    }
}

std::vector<std::string> split(std::string_view line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

LabeledDataset slice(const LabeledDataset& ds, std::size_t from, std::size_t count) {
    LabeledDataset out;
    out.features.assign(ds.features.begin() + from, ds.features.begin() + from + count);
    out.labels.assign(ds.labels.begin() + from, ds.labels.begin() + from + count);
    out.mask.assign(ds.mask.begin() + from, ds.mask.begin() + from + count);
    return out;
}

bool all_exist(const fs::path& dir, std::initializer_list<const char*> names) {
    return std::all_of(names.begin(), names.end(), [&](const char* n) { return fs::exists(dir / n); });
}

struct Prepared {
    std::uint64_t seed = 0;
    fs::path dir;
    LabeledDataset train;
    LabeledDataset calib;
    LabeledDataset eval;
    std::optional<NetworkSpec> net;
    QuantConfig qcfg;
    bool reran = false;  // some stage was recomputed; downstream artifacts are stale
    std::vector<std::string> skipped;
};

struct Datasets {
    LabeledDataset train, calib, eval;
};

Datasets generate(const PipelineConfig& cfg, std::uint64_t seed) {
    ScenarioConfig sc = cfg.scenario;
    sc.seed = seed;
    const std::size_t n = sc.data.n;
    std::vector<std::size_t> memorized;
    if (sc.kind == ScenarioKind::memorization) memorized = memorization_rows(n, sc.memorization.fraction, seed);
    const std::size_t tainted_count = sc.kind == ScenarioKind::memorization ? memorized.size() : cfg.eval_size;
    const std::size_t clean_count = tainted_count;
    const std::size_t pool = sc.kind == ScenarioKind::memorization ? 0 : tainted_count;

    DatasetParams params = sc.data;
    params.n = n + cfg.calibration_size + clean_count + pool;
    const auto base = gen_clean_dataset(params, seed);

    Datasets d;
    d.train = slice(base, 0, n);
    d.calib = slice(base, n, cfg.calibration_size);
    d.eval = slice(base, n + cfg.calibration_size, clean_count);
    const auto tainted_pool = slice(base, n + cfg.calibration_size + clean_count, pool);

    auto add_tainted = [&](const Vector& x, int label) {
        d.eval.features.push_back(x);
        d.eval.labels.push_back(label);
        d.eval.mask.push_back(true);
    };
    switch (sc.kind) {
    case ScenarioKind::backdoor:
        d.train = inject_backdoor(d.train, sc.backdoor, seed);
        for (const auto& x : tainted_pool.features) add_tainted(apply_trigger(x, sc.backdoor), sc.backdoor.target_class);
        break;
    case ScenarioKind::memorization:
        d.train = inject_memorization(d.train, sc.memorization, seed);
        for (auto i : memorized) add_tainted(d.train.features[i], d.train.labels[i]);
        break;
    case ScenarioKind::mean_shift:
        // The shift is applied to activations at detection time; inputs stay clean.
        for (std::size_t i = 0; i < tainted_pool.size(); ++i) add_tainted(tainted_pool.features[i], tainted_pool.labels[i]);
        break;
    }
    return d;
}

Prepared prepare(const PipelineConfig& cfg, std::size_t index, const fs::path& out_dir) {
    Prepared p;
    p.seed = replicate_seed(cfg.root_seed, index);
    p.dir = out_dir / ("seed_" + std::to_string(index));
    stage("setup", [&] {
        fs::create_directories(p.dir);
        json resolved = pipeline_config_to_json(cfg);
        resolved["replicate"] = index;
        resolved["seed"] = p.seed;
        const auto text = resolved.dump(2) + "\n";
        const auto cfg_path = p.dir / "config.json";
        const bool same = cfg.skip_completed && fs::exists(cfg_path) && read_text_file(cfg_path) == text;
        if (!same) {
            write_text_file(cfg_path, text);
            p.reran = true;
        }
    });

    auto can_skip = [&](std::initializer_list<const char*> outputs) {
        return cfg.skip_completed && !p.reran && all_exist(p.dir, outputs);
    };

    if (can_skip({"train.csv", "calib.csv", "eval.csv"})) {
        stage("gen", [&] {
            p.train = load_dataset(p.dir / "train.csv");
            p.calib = load_dataset(p.dir / "calib.csv");
            p.eval = load_dataset(p.dir / "eval.csv");
        });
        p.skipped.push_back("gen");
    } else {
        stage("gen", [&] {
            auto d = generate(cfg, p.seed);
            save_dataset(p.dir / "train.csv", d.train);
            save_dataset(p.dir / "calib.csv", d.calib);
            save_dataset(p.dir / "eval.csv", d.eval);
            p.train = std::move(d.train);
            p.calib = std::move(d.calib);
            p.eval = std::move(d.eval);
        });
        p.reran = true;
    }

    if (can_skip({"model.json"})) {
        p.net = stage("train", [&] { return load_model(p.dir / "model.json").network; });
        p.skipped.push_back("train");
    } else {
        p.net = stage("train", [&] {
            auto net = train_tiny_mlp(p.train, cfg.hyper, p.seed);
            save_model(p.dir / "model.json", net);
            return net;
        });
        p.reran = true;
    }

    if (can_skip({"model_q.json"})) {
        p.qcfg = stage("quantize", [&] {
            auto file = load_model(p.dir / "model_q.json");
            if (!file.quant) throw IoError("model_q.json has no quantization section");
            return *file.quant;
        });
        p.skipped.push_back("quantize");
    } else {
        p.qcfg = stage("quantize", [&] {
            auto qcfg = calibrate_scales(*p.net, p.calib.features, cfg.bits);
            qcfg.quantize_weights = cfg.quantize_weights;
            save_model(p.dir / "model_q.json", *p.net, qcfg);
            return qcfg;
        });
        p.reran = true;
    }
    return p;
}

bool is_shifted(const PipelineConfig& cfg, const LabeledDataset& eval, std::size_t i) {
    return cfg.scenario.kind == ScenarioKind::mean_shift && eval.mask[i];
}

ResidualProfile shifted_profile(const QuantizedNetwork& qnet, std::span<const double> x, double delta) {
    const auto full = inject_activation_shift(forward_full(qnet.network(), x), delta);
    return residual_profile(full, qnet.forward(x));
}

EvalResult evaluate_records(std::span<const VerdictRecord> rows) {
    std::vector<int> labels, flags;
    std::vector<double> scores;
    for (const auto& r : rows) {
        if (!r.label) throw InvalidArgument("verdict '" + r.id + "' has no label");
        labels.push_back(*r.label);
        flags.push_back(r.flagged ? 1 : 0);
        scores.push_back(r.statistic);
    }
    return evaluate(labels, flags, scores);
}

std::pair<std::vector<double>, std::vector<double>> split_r_max(std::span<const VerdictRecord> rows) {
    std::vector<double> clean, tainted;
    for (const auto& r : rows) (r.label.value_or(0) ? tainted : clean).push_back(r.profile.r_max);
    return {clean, tainted};
}

} // namespace

void PipelineConfig::validate() const {
    scenario.validate();
    hyper.validate();
    validate_bits(bits);
    if (replicates < 1) throw InvalidArgument("replicates must be at least 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in (0, 1)");
    if (delta && !(*delta > 0.0)) throw InvalidArgument("delta must be positive");
    if (calibration_size < min_calibration_size)
        throw InvalidArgument("calibration_size must be at least " + std::to_string(min_calibration_size));
    if (eval_size < 1) throw InvalidArgument("eval_size must be at least 1");
    if (!(bin_width >= 0.0)) throw InvalidArgument("bin_width must be >= 0");
    if (method != CalibrationMethod::quantile && !delta)
        throw InvalidArgument(std::string(to_string(method)) + " calibration needs delta");
    if (rule == Rule::logistic && method != CalibrationMethod::logistic)
        throw InvalidArgument("the logistic rule needs logistic calibration");
}

json pipeline_config_to_json(const PipelineConfig& cfg) {
    json hidden = json::array();
    for (auto h : cfg.hyper.hidden) hidden.push_back(h);
    return json{{"scenario", scenario_to_json(cfg.scenario)},
                {"train",
                 {{"hidden", hidden},
                  {"epochs", cfg.hyper.epochs},
                  {"batch_size", cfg.hyper.batch_size},
                  {"learning_rate", cfg.hyper.learning_rate},
                  {"clip_norm", cfg.hyper.clip_norm}}},
                {"root_seed", cfg.root_seed},
                {"replicates", cfg.replicates},
                {"bits", cfg.bits},
                {"quantize_weights", cfg.quantize_weights},
                {"method", std::string(to_string(cfg.method))},
                {"alpha", cfg.alpha},
                {"delta", cfg.delta ? json(*cfg.delta) : json(nullptr)},
                {"rule", std::string(to_string(cfg.rule))},
                {"calibration_size", cfg.calibration_size},
                {"eval_size", cfg.eval_size},
                {"bin_width", cfg.bin_width}};
}

std::uint64_t replicate_seed(std::uint64_t root_seed, std::size_t index) {
    return derive_seed(root_seed, replicate_stream, index);
}

VerdictRecord make_verdict_record(std::string id, std::optional<int> label, const DetectionVerdict& v) {
    VerdictRecord r;
    r.id = std::move(id);
    r.label = label;
    r.flagged = v.flagged;
    r.statistic = v.statistic;
    r.score = v.score;
    for (const auto& e : v.exceeded_layers) r.exceeded_layers.push_back(e.layer);
    r.profile = v.profile;
    return r;
}

std::string verdicts_to_csv(std::span<const VerdictRecord> rows) {
    const std::size_t depth = rows.empty() ? 0 : rows.front().profile.per_layer.size();
    std::string out = "id,label,flagged,statistic,score,exceeded_layers";
    for (std::size_t l = 0; l < depth; ++l) out += ",r_" + std::to_string(l + 1);
    out += ",r_max,r_mean,r_sum\n";
    for (const auto& r : rows) {
        if (r.profile.per_layer.size() != depth) throw ShapeError("verdict rows disagree on depth");
        if (r.id.find_first_of(",\n") != std::string::npos) throw InvalidArgument("id contains a separator: " + r.id);
        std::string layers;
        for (auto l : r.exceeded_layers) layers += (layers.empty() ? "" : ";") + std::to_string(l + 1);
        out += r.id + ',' + (r.label ? std::to_string(*r.label) : "") + ',' + (r.flagged ? '1' : '0') + ',' +
               format_double(r.statistic) + ',' + (r.score ? format_double(*r.score) : "") + ',' + layers;
        for (double v : r.profile.per_layer) out += ',' + format_double(v);
        out += ',' + format_double(r.profile.r_max) + ',' + format_double(r.profile.r_mean) + ',' +
               format_double(r.profile.r_sum) + '\n';
    }
    return out;
}

std::vector<VerdictRecord> verdicts_from_csv(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line)) throw IoError("verdict table is empty");
    const auto header = split(line, ',');
    if (header.size() < 9 || header[0] != "id" || header[5] != "exceeded_layers")
        throw IoError("verdict table has an unexpected header");
    const std::size_t depth = header.size() - 9;
    std::vector<VerdictRecord> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = split(line, ',');
        if (cells.size() != header.size())
            throw IoError("verdict line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                          " cells, expected " + std::to_string(header.size()));
        VerdictRecord r;
        r.id = cells[0];
        try {
            if (!cells[1].empty()) r.label = std::stoi(cells[1]);
        } catch (const std::exception&) {
            throw IoError("bad label on verdict line " + std::to_string(line_no));
        }
        r.flagged = cells[2] == "1";
        r.statistic = parse_double(cells[3]);
        if (!cells[4].empty()) r.score = parse_double(cells[4]);
        if (!cells[5].empty())
            for (const auto& l : split(cells[5], ';')) r.exceeded_layers.push_back(std::stoul(l) - 1);
        Vector per_layer;
        for (std::size_t l = 0; l < depth; ++l) per_layer.push_back(parse_double(cells[6 + l]));
        r.profile = make_profile(std::move(per_layer));
        rows.push_back(std::move(r));
    }
    return rows;
}

json verdicts_to_json(std::span<const VerdictRecord> rows) {
    json arr = json::array();
    for (const auto& r : rows) {
        json layers = json::array();
        for (auto l : r.exceeded_layers) layers.push_back(l + 1);
        arr.push_back({{"id", r.id},
                       {"label", r.label ? json(*r.label) : json(nullptr)},
                       {"flagged", r.flagged},
                       {"statistic", r.statistic},
                       {"score", r.score ? json(*r.score) : json(nullptr)},
                       {"exceeded_layers", layers},
                       {"residuals", r.profile.per_layer},
                       {"r_max", r.profile.r_max},
                       {"r_mean", r.profile.r_mean},
                       {"r_sum", r.profile.r_sum}});
    }
    return json{{"format", "rnf-verdicts"}, {"version", 1}, {"verdicts", arr}};
}

SeedOutcome run_seed(const PipelineConfig& cfg, std::size_t index, const fs::path& out_dir) {
    cfg.validate();
    Prepared p = prepare(cfg, index, out_dir);
    SeedOutcome out;
    out.index = index;
    out.seed = p.seed;
    out.dir = p.dir;
    out.train_accuracy = classification_accuracy(*p.net, p.train);
    const QuantizedNetwork qnet(*p.net, p.qcfg);

    auto can_skip = [&](std::initializer_list<const char*> outputs) {
        return cfg.skip_completed && !p.reran && all_exist(p.dir, outputs);
    };

    CalibrationSummary calib;
    if (can_skip({"calib.json"})) {
        calib = stage("calibrate", [&] { return load_calibration(p.dir / "calib.json"); });
        p.skipped.push_back("calibrate");
    } else {
        calib = stage("calibrate", [&] {
            CalibrationOptions opts{cfg.method, cfg.alpha, cfg.delta, p.seed};
            auto c = calibrate(qnet, p.calib.features, opts);
            save_calibration(p.dir / "calib.json", c);
            return c;
        });
        p.reran = true;
    }

    std::vector<VerdictRecord> records;
    if (can_skip({"verdicts.csv"})) {
        records = stage("detect", [&] { return verdicts_from_csv(read_text_file(p.dir / "verdicts.csv")); });
        p.skipped.push_back("detect");
    } else {
        records = stage("detect", [&] {
            const Detector det(qnet, calib);
            std::vector<VerdictRecord> rows;
            for (std::size_t i = 0; i < p.eval.size(); ++i) {
                const auto& x = p.eval.features[i];
                const auto v = is_shifted(cfg, p.eval, i)
                                   ? judge(shifted_profile(qnet, x, cfg.scenario.shift_delta), calib, cfg.rule)
                                   : det.detect(x, cfg.rule);
                rows.push_back(make_verdict_record(std::to_string(i), p.eval.mask[i] ? 1 : 0, v));
            }
            write_text_file(p.dir / "verdicts.csv", verdicts_to_csv(rows));
            return rows;
        });
        p.reran = true;
    }

    stage("evaluate", [&] {
        out.result = evaluate_records(records);
        out.result.metadata = {{"scenario", std::string(to_string(cfg.scenario.kind))},
                               {"replicate", std::to_string(index)},
                               {"seed", std::to_string(p.seed)},
                               {"method", std::string(to_string(cfg.method))},
                               {"rule", std::string(to_string(cfg.rule))},
                               {"alpha", format_double(cfg.alpha)}};
        const auto [clean, tainted] = split_r_max(records);
        out.modes = histogram_modes(residual_histogram(clean, tainted, cfg.bin_width));
        if (can_skip({"report.json", "report.csv"})) {
            p.skipped.push_back("evaluate");
            return;
        }
        Report report;
        report.config = pipeline_config_to_json(cfg);
        report.config["replicate"] = index;
        report.config["seed"] = p.seed;
        report.config["train_accuracy"] = out.train_accuracy;
        report.results = {out.result};
        for (const auto& r : records) report.profiles.push_back({r.id, r.profile, r.label.value_or(0) == 1});
        report.bin_width = cfg.bin_width;
        emit_report(report, p.dir / "report.json", ReportFormat::json);
        emit_report(report, p.dir / "report.csv", ReportFormat::csv);
    });
    out.skipped_stages = p.skipped;
    return out;
}

PipelineOutcome run_pipeline(const PipelineConfig& cfg, const fs::path& out_dir) {
    cfg.validate();
    PipelineOutcome outcome;
    Report aggregate;
    aggregate.config = pipeline_config_to_json(cfg);
    aggregate.bin_width = cfg.bin_width;
    json replicates = json::array();
    EvalResult mean;
    for (std::size_t i = 0; i < cfg.replicates; ++i) {
        auto s = run_seed(cfg, i, out_dir);
        const auto per_seed = verdicts_from_csv(read_text_file(s.dir / "verdicts.csv"));
        for (const auto& r : per_seed)
            aggregate.profiles.push_back({"seed_" + std::to_string(i) + "/" + r.id, r.profile, r.label.value_or(0) == 1});
        aggregate.results.push_back(s.result);
        mean.counts.tp += s.result.counts.tp;
        mean.counts.fp += s.result.counts.fp;
        mean.counts.tn += s.result.counts.tn;
        mean.counts.fn += s.result.counts.fn;
        outcome.mean_accuracy += s.result.accuracy / static_cast<double>(cfg.replicates);
        outcome.mean_macro_f1 += s.result.macro_f1 / static_cast<double>(cfg.replicates);
        outcome.mean_roc_auc += s.result.roc_auc / static_cast<double>(cfg.replicates);
        replicates.push_back({{"replicate", i},
                              {"seed", s.seed},
                              {"train_accuracy", s.train_accuracy},
                              {"accuracy", s.result.accuracy},
                              {"macro_f1", s.result.macro_f1},
                              {"roc_auc", s.result.roc_auc},
                              {"clean_mode", s.modes.clean},
                              {"tainted_mode", s.modes.tainted}});
        outcome.seeds.push_back(std::move(s));
    }
    mean.accuracy = outcome.mean_accuracy;
    mean.macro_f1 = outcome.mean_macro_f1;
    mean.roc_auc = outcome.mean_roc_auc;
    mean.metadata = {{"scenario", std::string(to_string(cfg.scenario.kind))}, {"replicate", "mean"}};
    aggregate.results.push_back(mean);
    stage("report", [&] {
        write_json_file(out_dir / "summary.json",
                        json{{"config", pipeline_config_to_json(cfg)},
                             {"replicates", replicates},
                             {"mean",
                              {{"accuracy", outcome.mean_accuracy},
                               {"macro_f1", outcome.mean_macro_f1},
                               {"roc_auc", outcome.mean_roc_auc}}}});
        emit_report(aggregate, out_dir / "report.json", ReportFormat::json);
        emit_report(aggregate, out_dir / "report.csv", ReportFormat::csv);
    });
    return outcome;
}

std::vector<SweepPoint> calibration_sweep(const PipelineConfig& cfg, std::span<const std::size_t> sizes,
                                          std::size_t resamples, const fs::path& out_dir) {
    cfg.validate();
    if (resamples < 1) throw InvalidArgument("resamples must be at least 1");
    for (auto n : sizes)
        if (n < min_calibration_size || n > cfg.calibration_size)
            throw InvalidArgument("sweep size " + std::to_string(n) + " outside [" +
                                  std::to_string(min_calibration_size) + ", " + std::to_string(cfg.calibration_size) +
                                  "]");
    std::vector<SweepPoint> points(sizes.size());
    for (std::size_t k = 0; k < sizes.size(); ++k) points[k].n = sizes[k];

    for (std::size_t i = 0; i < cfg.replicates; ++i) {
        const Prepared p = prepare(cfg, i, out_dir);
        const QuantizedNetwork qnet(*p.net, p.qcfg);
        const auto pool = stage("sweep", [&] { return collect_profiles(qnet, p.calib.features); });
        std::vector<ResidualProfile> eval_profiles;
        std::vector<int> labels;
        for (std::size_t r = 0; r < p.eval.size(); ++r) {
            const auto& x = p.eval.features[r];
            eval_profiles.push_back(is_shifted(cfg, p.eval, r)
                                        ? shifted_profile(qnet, x, cfg.scenario.shift_delta)
                                        : residual_profile(forward_full(*p.net, x), qnet.forward(x)));
            labels.push_back(p.eval.mask[r] ? 1 : 0);
        }
        for (std::size_t k = 0; k < sizes.size(); ++k) {
            for (std::size_t r = 0; r < resamples; ++r) {
                auto rng = make_rng(p.seed, sweep_stream, sizes[k] * 1000003ULL + r);
                std::vector<std::size_t> idx(pool.size());
                std::iota(idx.begin(), idx.end(), 0);
                std::shuffle(idx.begin(), idx.end(), rng);
                std::vector<ResidualProfile> subset;
                for (std::size_t j = 0; j < sizes[k]; ++j) subset.push_back(pool[idx[j]]);
                const auto calib = stage("sweep", [&] {
                    return calibrate_profiles(subset, CalibrationOptions{cfg.method, cfg.alpha, cfg.delta, p.seed});
                });
                std::vector<double> scores;
                for (const auto& prof : eval_profiles) scores.push_back(judge(prof, calib, cfg.rule).statistic);
                points[k].aucs.push_back(roc_auc(labels, scores));
            }
        }
    }
    std::string csv = "n,mean_auc,runs\n";
    for (auto& pt : points) {
        pt.mean_auc = std::accumulate(pt.aucs.begin(), pt.aucs.end(), 0.0) / static_cast<double>(pt.aucs.size());
        csv += std::to_string(pt.n) + ',' + format_double(pt.mean_auc) + ',' + std::to_string(pt.aucs.size()) + '\n';
    }
    stage("report", [&] { write_text_file(out_dir / "sweep.csv", csv); });
    return points;
}

} // namespace rnf
