#include "rnf/cli.hpp"

#include <filesystem>
#include <functional>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "rnf/calibrate.hpp"
#include "rnf/detect.hpp"
#include "rnf/errors.hpp"
#include "rnf/pipeline.hpp"
#include "rnf/report.hpp"
#include "rnf/serialize.hpp"
#include "rnf/theory.hpp"
#include "rnf/trainer.hpp"

namespace fs = std::filesystem;

namespace rnf {

namespace {

struct ScenarioFlags {
    std::string file;
    std::string kind = "backdoor";
    ScenarioConfig sc;  // flag targets; only explicitly given flags are applied
};

void add_scenario_flags(CLI::App* sub, ScenarioFlags& f) {
    sub->add_option("--scenario", f.file, "Scenario JSON to start from");
    sub->add_option("--kind", f.kind, "backdoor | memorization | mean_shift");
    sub->add_option("--n", f.sc.data.n, "Training rows");
    sub->add_option("--dim", f.sc.data.dim, "Feature dimension");
    sub->add_option("--classes", f.sc.data.classes, "Class count");
    sub->add_option("--spread", f.sc.data.spread, "Per-coordinate cluster std");
    sub->add_option("--center-scale", f.sc.data.center_scale, "Std of the cluster centers");
    sub->add_option("--trigger-feature", f.sc.backdoor.feature_index, "Backdoor trigger feature index");
    sub->add_option("--sentinel", f.sc.backdoor.sentinel, "Backdoor sentinel value");
    sub->add_option("--target-class", f.sc.backdoor.target_class, "Backdoor target class");
    sub->add_option("--poison-fraction", f.sc.backdoor.fraction, "Share of training rows poisoned");
    sub->add_option("--dup-fraction", f.sc.memorization.fraction, "Share of training rows duplicated");
    sub->add_option("--copies", f.sc.memorization.copies, "Copies per duplicated row");
    sub->add_option("--tail-scale", f.sc.memorization.tail_scale, "Outward push of duplicated rows");
    sub->add_option("--delta", f.sc.shift_delta, "Activation shift for mean_shift");
}

ScenarioConfig resolve_scenario(const CLI::App& sub, const ScenarioFlags& f, std::uint64_t seed, bool seed_given) {
    ScenarioConfig c = f.file.empty() ? default_scenario(parse_scenario_kind(f.kind))
                                      : scenario_from_json(read_json_file(f.file));
    if (!f.file.empty() && sub.count("--kind")) c.kind = parse_scenario_kind(f.kind);
    if (f.file.empty() || seed_given) c.seed = seed;
    auto take = [&](const char* name, auto& dst, const auto& src) {
        if (sub.count(name)) dst = src;
    };
    take("--n", c.data.n, f.sc.data.n);
    take("--dim", c.data.dim, f.sc.data.dim);
    take("--classes", c.data.classes, f.sc.data.classes);
    take("--spread", c.data.spread, f.sc.data.spread);
    take("--center-scale", c.data.center_scale, f.sc.data.center_scale);
    take("--trigger-feature", c.backdoor.feature_index, f.sc.backdoor.feature_index);
    take("--sentinel", c.backdoor.sentinel, f.sc.backdoor.sentinel);
    take("--target-class", c.backdoor.target_class, f.sc.backdoor.target_class);
    take("--poison-fraction", c.backdoor.fraction, f.sc.backdoor.fraction);
    take("--dup-fraction", c.memorization.fraction, f.sc.memorization.fraction);
    take("--copies", c.memorization.copies, f.sc.memorization.copies);
    take("--tail-scale", c.memorization.tail_scale, f.sc.memorization.tail_scale);
    take("--delta", c.shift_delta, f.sc.shift_delta);
    c.validate();
    return c;
}

void add_train_flags(CLI::App* sub, TrainHyper& h) {
    sub->add_option("--hidden", h.hidden, "Hidden widths, comma separated")->delimiter(',');
    sub->add_option("--epochs", h.epochs, "Training epochs");
    sub->add_option("--batch-size", h.batch_size, "Mini-batch size");
    sub->add_option("--lr", h.learning_rate, "Learning rate");
    sub->add_option("--clip-norm", h.clip_norm, "Global gradient-norm clip");
}

// Rows with mask = 1 are dropped: thresholds and scales come from clean data only.
std::vector<Vector> clean_rows(const LabeledDataset& ds) {
    std::vector<Vector> rows;
    for (std::size_t i = 0; i < ds.size(); ++i)
        if (!ds.mask[i]) rows.push_back(ds.features[i]);
    return rows;
}

// Inputs for detect: a dataset CSV (id,label,mask,x...) or a bare feature table with a header.
struct DetectInputs {
    std::vector<std::string> ids;
    std::vector<Vector> rows;
    std::vector<std::optional<int>> labels;
};

DetectInputs read_detect_inputs(const fs::path& path) {
    const auto text = read_text_file(path);
    DetectInputs in;
    if (text.rfind("id,label,mask", 0) == 0) {
        const auto ds = dataset_from_csv(text);
        for (std::size_t i = 0; i < ds.size(); ++i) {
            in.ids.push_back(std::to_string(i));
            in.rows.push_back(ds.features[i]);
            in.labels.emplace_back(ds.mask[i] ? 1 : 0);
        }
        return in;
    }
    std::istringstream lines(text);
    std::string line;
    if (!std::getline(lines, line)) throw IoError(path.string() + " is empty");
    std::size_t line_no = 1;
    while (std::getline(lines, line)) {
        ++line_no;
        if (line.empty()) continue;
        Vector x;
        std::size_t start = 0;
        while (true) {
            const auto pos = line.find(',', start);
            x.push_back(parse_double(std::string_view(line).substr(start, pos == std::string::npos ? line.npos : pos - start)));
            if (pos == std::string::npos) break;
            start = pos + 1;
        }
        if (!in.rows.empty() && x.size() != in.rows.front().size())
            throw IoError("line " + std::to_string(line_no) + " of " + path.string() + " has the wrong width");
        in.ids.push_back(std::to_string(in.rows.size()));
        in.rows.push_back(std::move(x));
        in.labels.emplace_back();
    }
    return in;
}

fs::path sidecar(const fs::path& out) {
    return fs::path(out.string() + ".run.toml");
}

std::string toml_scalar(const std::string& v) {
    if (v == "true" || v == "false") return v;
    char* end = nullptr;
    std::strtod(v.c_str(), &end);
    if (!v.empty() && end == v.c_str() + v.size()) return v;
    return '"' + v + '"';
}

// One option as a TOML assignment; empty when the option has neither a value nor a default.
std::string toml_line(const CLI::Option& opt) {
    std::vector<std::string> vals = opt.count() > 0 ? opt.results() : std::vector<std::string>{};
    if (vals.empty()) {
        const auto d = opt.get_default_str();
        if (d.empty() || d == "{}" || d == "[]") return {};
        if (d.front() == '[') return opt.get_lnames().front() + "=" + d + "\n";
        vals.push_back(d);
    }
    std::string value;
    if (opt.get_expected_max() > 1 || vals.size() > 1) {
        for (const auto& v : vals) value += (value.empty() ? "" : ",") + toml_scalar(v);
        value = "[" + value + "]";
    } else {
        value = toml_scalar(vals.front());
    }
    return opt.get_lnames().front() + "=" + value + "\n";
}

// The resolved options of one subcommand in the --config format, so a run can be replayed.
void write_run_record(const CLI::App& root, const CLI::App& sub, const fs::path& out) {
    std::string text = "# resolved configuration\nseed=" + root.get_option("--seed")->as<std::string>() + "\n";
    text += "[" + sub.get_name() + "]\n";
    for (const auto* opt : sub.get_options())
        if (!opt->get_lnames().empty() && opt->get_lnames().front() != "help") text += toml_line(*opt);
    write_text_file(sidecar(out), text);
}

std::string fixed(double v, int digits = 4) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Residual-based contamination detection for quantized MLPs", "rnf"};
    app.option_defaults()->always_capture_default();
    app.set_config("--config", "", "TOML/INI file; command-line flags take precedence");
    app.require_subcommand(1);
    std::uint64_t seed = 0;
    app.add_option("--seed", seed, "Root seed for all randomness");

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Generate a (contaminated) training set")->configurable();
    ScenarioFlags gen_flags;
    std::string gen_out, gen_scenario_out;
    add_scenario_flags(gen, gen_flags);
    gen->add_option("--out", gen_out, "Dataset CSV")->required();
    gen->add_option("--scenario-out", gen_scenario_out, "Write the resolved scenario JSON here");

    // train
    auto* train = app.add_subcommand("train", "Train a tiny MLP on a dataset CSV")->configurable();
    TrainHyper hyper;
    std::string train_data, train_out;
    train->add_option("--data", train_data, "Dataset CSV")->required();
    train->add_option("--out", train_out, "Model JSON")->required();
    add_train_flags(train, hyper);

    // quantize
    auto* quant = app.add_subcommand("quantize", "Calibrate activation scales and attach a quantization section")
                      ->configurable();
    std::string quant_model, quant_data, quant_out;
    int bits = 4;
    bool activations_only = false;
    quant->add_option("--model", quant_model, "Model JSON")->required();
    quant->add_option("--data", quant_data, "Clean dataset CSV")->required();
    quant->add_option("--bits", bits, "3 or 4");
    quant->add_flag("--activations-only", activations_only, "Keep weights in full precision");
    quant->add_option("--out", quant_out, "Quantized model JSON")->required();

    // calibrate
    auto* cal = app.add_subcommand("calibrate", "Fit detection thresholds on clean data")->configurable();
    std::string cal_model, cal_data, cal_out, cal_method = "quantile", cal_timestamp;
    double cal_alpha = 0.05;
    std::optional<double> cal_delta;
    cal->add_option("--model", cal_model, "Quantized model JSON")->required();
    cal->add_option("--data", cal_data, "Clean dataset CSV")->required();
    cal->add_option("--method", cal_method, "quantile | theorem | logistic");
    cal->add_option("--alpha", cal_alpha, "Target false-positive rate");
    cal->add_option("--delta", cal_delta, "Mean shift to detect (theorem, logistic)");
    cal->add_option("--timestamp", cal_timestamp, "Recorded in the provenance block");
    cal->add_option("--out", cal_out, "Calibration JSON")->required();

    // detect
    auto* det = app.add_subcommand("detect", "Flag inputs with a calibrated detector")->configurable();
    std::string det_model, det_calib, det_inputs, det_out, det_rule = "max", det_format = "csv";
    det->add_option("--model", det_model, "Quantized model JSON")->required();
    det->add_option("--calib", det_calib, "Calibration JSON")->required();
    det->add_option("--inputs", det_inputs, "Dataset CSV or bare feature CSV")->required();
    det->add_option("--rule", det_rule, "per_layer | max | logistic");
    det->add_option("--format", det_format, "csv | json");
    det->add_option("--out", det_out, "Verdict file")->required();

    // pipeline
    auto* pipe = app.add_subcommand("pipeline", "gen -> train -> quantize -> calibrate -> detect -> evaluate")
                     ->configurable();
    ScenarioFlags pipe_flags;
    PipelineConfig pcfg;
    std::string pipe_out, pipe_method = "quantile", pipe_rule = "max";
    std::vector<std::size_t> sweep_sizes;
    std::size_t resamples = 5;
    std::optional<double> min_auc, min_accuracy;
    add_scenario_flags(pipe, pipe_flags);
    add_train_flags(pipe, pcfg.hyper);
    pipe->add_option("--replicates", pcfg.replicates, "Seeds derived from the root seed");
    pipe->add_option("--method", pipe_method, "quantile | theorem | logistic");
    pipe->add_option("--alpha", pcfg.alpha, "Target false-positive rate");
    pipe->add_option("--calib-delta", pcfg.delta, "Mean shift used by theorem/logistic calibration");
    pipe->add_option("--rule", pipe_rule, "per_layer | max | logistic");
    pipe->add_option("--calibration-size", pcfg.calibration_size, "Clean calibration rows per replicate");
    pipe->add_option("--eval-size", pcfg.eval_size, "Tainted (and clean) evaluation rows");
    pipe->add_option("--bin-width", pcfg.bin_width, "Histogram bin width (0 = 40 bins)");
    pipe->add_option("--bits", pcfg.bits, "3 or 4");
    pipe->add_flag("--activations-only", activations_only, "Keep weights in full precision");
    pipe->add_flag("--skip-completed", pcfg.skip_completed, "Reuse stage artifacts from an identical earlier run");
    pipe->add_option("--sweep", sweep_sizes, "Also sweep these calibration sizes")->delimiter(',');
    pipe->add_option("--resamples", resamples, "Calibration subsets per sweep size and replicate");
    pipe->add_option("--min-auc", min_auc, "Exit 1 when the mean ROC-AUC falls below this");
    pipe->add_option("--min-accuracy", min_accuracy, "Exit 1 when the mean accuracy falls below this");
    pipe->add_option("--out", pipe_out, "Output directory")->required();

    // validate-theory
    auto* theory = app.add_subcommand("validate-theory", "Monte Carlo checks of the residual bounds")->configurable();
    TheoryGrid grid;
    std::optional<std::size_t> trials;
    std::string theory_out;
    theory->add_option("--checks", grid.checks, "Subset of mean,tail,detection,max")->delimiter(',');
    theory->add_option("--trials", trials, "Trials for every check (>= 1000)");
    theory->add_option("--mean-q", grid.mean_q, "Half-steps for the mean check")->delimiter(',');
    theory->add_option("--mean-d", grid.mean_d, "Width for the mean check");
    theory->add_option("--tail-d", grid.tail_d, "Widths for the tail check")->delimiter(',');
    theory->add_option("--tail-tau", grid.tail_tau, "Deviations for the tail check")->delimiter(',');
    theory->add_option("--tail-q", grid.tail_q, "Half-step for the tail check");
    theory->add_option("--lipschitz", grid.tail_lipschitz, "Lipschitz bound K for the tail check");
    theory->add_option("--det-q", grid.det_q, "Half-step for the detection check");
    theory->add_option("--det-delta", grid.det_delta, "Mean shift for the detection check");
    theory->add_option("--det-epsilon", grid.det_epsilon, "Error budget for the detection check");
    theory->add_option("--max-layers", grid.max_layers, "Layer count for the max check");
    theory->add_option("--max-d", grid.max_d, "Width for the max check");
    theory->add_option("--max-q", grid.max_q, "Half-step for the max check");
    theory->add_option("--out", theory_out, "Bound-vs-empirical CSV")->required();

    // report
    auto* rep = app.add_subcommand("report", "Re-emit a JSON report as CSV or JSON")->configurable();
    std::string rep_in, rep_out, rep_format = "csv";
    std::optional<double> rep_bin_width;
    rep->add_option("--in", rep_in, "report.json from pipeline")->required();
    rep->add_option("--out", rep_out, "Output path")->required();
    rep->add_option("--format", rep_format, "csv | json");
    rep->add_option("--bin-width", rep_bin_width, "Override the histogram bin width");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err) == 0 ? exit_ok : exit_usage;
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err) == 0 ? exit_ok : exit_usage;
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e, out, err) == 0 ? exit_ok : exit_usage;
    } catch (const CLI::FileError& e) {
        app.exit(e, out, err);
        return exit_io;
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return exit_usage;
    }
    const bool seed_given = app.count("--seed") > 0;

    try {
        if (gen->parsed()) {
            const auto sc = resolve_scenario(*gen, gen_flags, seed, seed_given);
            auto ds = gen_clean_dataset(sc.data, sc.seed);
            if (sc.kind == ScenarioKind::backdoor) ds = inject_backdoor(ds, sc.backdoor, sc.seed);
            if (sc.kind == ScenarioKind::memorization) ds = inject_memorization(ds, sc.memorization, sc.seed);
            save_dataset(gen_out, ds);
            if (!gen_scenario_out.empty()) write_json_file(gen_scenario_out, scenario_to_json(sc));
            write_run_record(app, *gen, gen_out);
            out << "wrote " << ds.size() << " rows (" << ds.masked_count() << " contaminated) to " << gen_out << "\n";
        } else if (train->parsed()) {
            hyper.validate();
            const auto ds = load_dataset(train_data);
            const auto net = train_tiny_mlp(ds, hyper, seed);
            save_model(train_out, net);
            write_run_record(app, *train, train_out);
            out << "training accuracy " << fixed(classification_accuracy(net, ds)) << ", model written to "
                << train_out << "\n";
        } else if (quant->parsed()) {
            const auto model = load_model(quant_model);
            auto qcfg = calibrate_scales(model.network, clean_rows(load_dataset(quant_data)), bits);
            qcfg.quantize_weights = !activations_only;
            save_model(quant_out, model.network, qcfg);
            write_run_record(app, *quant, quant_out);
            out << "quantized " << model.network.depth() << " layers at " << bits << " bits, hash "
                << model_hash(model.network, qcfg) << "\n";
        } else if (cal->parsed()) {
            const auto model = load_model(cal_model);
            if (!model.quant) throw InvalidArgument(cal_model + " has no quantization section; run quantize first");
            const QuantizedNetwork qnet(model.network, *model.quant);
            CalibrationOptions opts{parse_calibration_method(cal_method), cal_alpha, cal_delta, seed};
            auto summary = calibrate(qnet, clean_rows(load_dataset(cal_data)), opts);
            summary.provenance.timestamp = cal_timestamp;
            save_calibration(cal_out, summary);
            write_run_record(app, *cal, cal_out);
            out << "calibrated on " << summary.n << " clean rows, tau_max " << format_double(summary.tau_max) << "\n";
        } else if (det->parsed()) {
            const auto rule = parse_rule(det_rule);
            const auto format = parse_report_format(det_format);
            const auto model = load_model(det_model);
            if (!model.quant) throw InvalidArgument(det_model + " has no quantization section");
            const Detector detector(QuantizedNetwork(model.network, *model.quant), load_calibration(det_calib));
            const auto inputs = read_detect_inputs(det_inputs);
            const auto verdicts = detector.detect_batch(inputs.rows, rule);
            std::vector<VerdictRecord> rows;
            std::size_t flagged = 0;
            for (std::size_t i = 0; i < verdicts.size(); ++i) {
                rows.push_back(make_verdict_record(inputs.ids[i], inputs.labels[i], verdicts[i]));
                flagged += verdicts[i].flagged ? 1 : 0;
            }
            if (format == ReportFormat::csv)
                write_text_file(det_out, verdicts_to_csv(rows));
            else
                write_json_file(det_out, verdicts_to_json(rows));
            write_run_record(app, *det, det_out);
            out << "flagged " << flagged << " of " << rows.size() << " inputs\n";
        } else if (pipe->parsed()) {
            pcfg.scenario = resolve_scenario(*pipe, pipe_flags, seed, seed_given);
            pcfg.root_seed = seed;
            pcfg.method = parse_calibration_method(pipe_method);
            pcfg.rule = parse_rule(pipe_rule);
            pcfg.quantize_weights = !activations_only;
            pcfg.validate();
            fs::create_directories(pipe_out);
            write_run_record(app, *pipe, fs::path(pipe_out) / "pipeline");
            const auto result = run_pipeline(pcfg, pipe_out);
            out << "replicate  seed                  train_acc  accuracy  macro_f1  roc_auc  skipped\n";
            for (const auto& s : result.seeds) {
                std::string skipped;
                for (const auto& name : s.skipped_stages) skipped += (skipped.empty() ? "" : ",") + name;
                out << std::left << std::setw(11) << s.index << std::setw(22) << s.seed << std::setw(11)
                    << fixed(s.train_accuracy) << std::setw(10) << fixed(s.result.accuracy) << std::setw(10)
                    << fixed(s.result.macro_f1) << std::setw(9) << fixed(s.result.roc_auc)
                    << (skipped.empty() ? "-" : skipped) << "\n";
            }
            out << "mean: accuracy " << fixed(result.mean_accuracy) << ", macro_f1 " << fixed(result.mean_macro_f1)
                << ", roc_auc " << fixed(result.mean_roc_auc) << "\n";
            if (!sweep_sizes.empty()) {
                const auto points = calibration_sweep(pcfg, sweep_sizes, resamples, pipe_out);
                out << "calibration sweep (mean ROC-AUC):";
                for (const auto& p : points) out << " n=" << p.n << ":" << fixed(p.mean_auc);
                out << "\n";
            }
            bool ok = true;
            if (min_auc && result.mean_roc_auc < *min_auc) {
                err << "mean ROC-AUC " << fixed(result.mean_roc_auc) << " is below " << *min_auc << "\n";
                ok = false;
            }
            if (min_accuracy && result.mean_accuracy < *min_accuracy) {
                err << "mean accuracy " << fixed(result.mean_accuracy) << " is below " << *min_accuracy << "\n";
                ok = false;
            }
            return ok ? exit_ok : exit_assertion;
        } else if (theory->parsed()) {
            if (trials) {
                grid.mean_trials = grid.tail_trials = grid.det_trials = grid.max_trials = *trials;
            }
            grid.det_lipschitz = grid.tail_lipschitz;
            const auto reports = run_theory_grid(grid, seed);
            write_text_file(theory_out, bound_reports_csv(reports));
            write_run_record(app, *theory, theory_out);
            std::size_t failed = 0;
            for (const auto& r : reports) {
                out << (r.pass ? "PASS " : "FAIL ") << std::left << std::setw(10) << r.check << " d=" << r.d
                    << " q=" << r.q << " tau=" << r.tau << " L=" << r.layers << " empirical=" << r.empirical
                    << " bound=" << r.bound << " margin=" << r.margin << "\n";
                failed += r.pass ? 0 : 1;
            }
            out << reports.size() - failed << "/" << reports.size() << " checks passed\n";
            return failed == 0 ? exit_ok : exit_assertion;
        } else if (rep->parsed()) {
            auto report = report_from_json(read_json_file(rep_in));
            if (rep_bin_width) report.bin_width = *rep_bin_width;
            emit_report(report, rep_out, parse_report_format(rep_format));
            out << results_csv(report.results);
        }
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return exit_io;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return exit_io;
    } catch (const InvalidArgument& e) {
        err << "error: " << e.what() << "\n";
        return exit_usage;
    } catch (const ModelMismatch& e) {
        err << "error: " << e.what() << "\n";
        return exit_usage;
    } catch (const DivergenceError& e) {
        err << "error: " << e.what() << "\n";
        return exit_usage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_assertion;
    }
    return exit_ok;
}

} // namespace rnf
