#pragma once

#include "freqlens/config.hpp"
#include "freqlens/dataset.hpp"
#include "freqlens/errors.hpp"
#include "freqlens/experiment.hpp"
#include "freqlens/filter.hpp"
#include "freqlens/network.hpp"
#include "freqlens/record.hpp"
#include "freqlens/spectral.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

namespace freqlens {

// Buffers every declared output file and publishes them together: all
// temporaries are written before any rename, so a failing command never
// leaves a partially-written declared output behind.
class StagedOutputs {
public:
    void add(std::filesystem::path path, std::string content) {
        files_.emplace_back(std::move(path), std::move(content));
    }

    std::size_t size() const { return files_.size(); }

    void commit() {
        std::vector<std::filesystem::path> temps;
        temps.reserve(files_.size());
        auto cleanup = [&] {
            std::error_code ec;
            for (const std::filesystem::path& tmp : temps) std::filesystem::remove(tmp, ec);
        };
        for (const auto& [path, content] : files_) {
            std::filesystem::path tmp = path;
            tmp += ".tmp";
            std::ofstream stream(tmp, std::ios::binary | std::ios::trunc);
            stream.write(content.data(), static_cast<std::streamsize>(content.size()));
            stream.flush();
            if (!stream) {
                cleanup();
                throw error("cannot write " + tmp.string());
            }
            temps.push_back(std::move(tmp));
        }
        for (std::size_t i = 0; i < files_.size(); ++i) {
            std::error_code ec;
            std::filesystem::rename(temps[i], files_[i].first, ec);
            if (ec) {
                cleanup();
                throw error("cannot rename " + temps[i].string() + " to " +
                            files_[i].first.string() + ": " + ec.message());
            }
        }
    }

private:
    std::vector<std::pair<std::filesystem::path, std::string>> files_;
};

namespace cli_detail {

inline FilterWidthGrid parse_grid_flag(const std::string& text) {
    const std::vector<std::string_view> parts = split_fields(text, ':');
    if (parts.size() != 3) {
        throw config_error("--grid expects lo:hi:count, got '" + text + "'");
    }
    return FilterWidthGrid::log_spaced(parse_double(parts[0], "--grid lo"),
                                       parse_double(parts[1], "--grid hi"),
                                       static_cast<int>(parse_int(parts[2], "--grid count")));
}

inline int cmd_synth(const std::string& target_text, int n, std::uint64_t seed,
                     const std::string& out_path, std::ostream& out) {
    const TargetSpec target = parse_target_spec(target_text);
    const LabeledDataset data = synth_target(target, n, seed);
    StagedOutputs staged;
    staged.add(out_path, dataset_to_csv(data));
    staged.commit();
    out << "wrote " << out_path << ": " << data.size() << " rows, " << data.input_dim()
        << " input columns, " << data.target_dim() << " target columns\n";
    return 0;
}

inline int cmd_analyze(const std::string& data_path, const std::string& grid_text,
                       bool normalize_dims, bool normalize_rdf, const std::string& prefix,
                       std::ostream& out) {
    LabeledDataset data = read_dataset_csv(data_path);
    if (normalize_dims) data = normalize_dimensions(data);
    const FilterWidthGrid grid =
        grid_text.empty() ? FilterWidthGrid::default_grid() : parse_grid_flag(grid_text);
    const FilterSweep sweep = lfr_sweep(data, grid);
    const RdfCurve rdf = rdf_from_lfr(sweep, normalize_rdf);
    const std::string lfr_path = prefix + ".lfr.csv";
    const std::string rdf_path = prefix + ".rdf.csv";
    StagedOutputs staged;
    staged.add(lfr_path, sweep_to_csv(sweep));
    staged.add(rdf_path, rdf_to_csv(rdf));
    staged.commit();
    out << "wrote " << lfr_path << " (" << sweep.lfr_values.size() << " rows) and " << rdf_path
        << " (" << rdf.slopes.size() << " rows)\n";
    return 0;
}

inline UniformSignal signal_from_dataset(const LabeledDataset& data, const std::string& origin) {
    if (data.input_dim() != 1 || data.target_dim() != 1) {
        throw invalid_parameter_error(origin + ": the oracle needs a 1-d dataset with one target column");
    }
    const Eigen::Index n = data.size();
    if (n < 2) throw insufficient_data_error(origin + ": need at least 2 samples");
    const double h = (data.points(n - 1, 0) - data.points(0, 0)) / static_cast<double>(n - 1);
    if (!(h > 0.0)) throw invalid_parameter_error(origin + ": grid must be increasing");
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
        const double step = data.points(i + 1, 0) - data.points(i, 0);
        if (std::abs(step - h) > 1e-9 * h) {
            throw invalid_parameter_error(origin + ": non-uniform grid, spacing deviates at row " +
                                          std::to_string(i + 1));
        }
    }
    UniformSignal signal;
    signal.domain_start = data.points(0, 0);
    signal.domain_end = data.points(n - 1, 0) + h;  // periodic continuation
    signal.values.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) signal.values[static_cast<std::size_t>(i)] = data.targets(i, 0);
    signal.validate();
    return signal;
}

inline int cmd_oracle(const std::string& data_path, std::optional<double> delta,
                      std::optional<double> k0, std::ostream& out) {
    if (!delta && !k0) throw config_error("oracle needs --delta and/or --k0");
    const LabeledDataset data = read_dataset_csv(data_path);
    const UniformSignal signal = signal_from_dataset(data, data_path);
    if (k0) {
        out << "exact_lfr(k0=" << format_double(*k0)
            << ") = " << format_double(exact_lfr(signal, *k0)) << "\n";
    }
    if (delta) {
        out << "gaussian_lfr(delta=" << format_double(*delta)
            << ") = " << format_double(lfr(data, *delta)) << "\n";
        out << "filter_vs_spectral_discrepancy(delta=" << format_double(*delta)
            << ") = " << format_double(compare_filter_vs_spectral(signal, *delta)) << "\n";
    }
    return 0;
}

inline int cmd_train(const std::string& config_path, const std::string& out_dir,
                     std::ostream& out) {
    const ParsedConfig parsed = read_config(config_path);
    const ExperimentConfig& cfg = parsed.config;
    const std::filesystem::path dir(out_dir);
    std::filesystem::create_directories(dir);
    StagedOutputs staged;

    if (cfg.sweep == SweepKind::kNone) {
        std::vector<TrajectoryRecord> runs(cfg.seeds.size());
        parallel_for_index(cfg.seeds.size(),
                           [&](std::size_t i) { runs[i] = run_trajectory(cfg, cfg.seeds[i]); });
        const json record = make_record_json("trajectory", parsed.entries, runs, {});
        staged.add(dir / "record.json", render_record(record));
        staged.add(dir / "lfr.csv", figure_csv(record, "lfr", "record"));
        staged.add(dir / "rdf.csv", figure_csv(record, "rdf", "record"));
        staged.add(dir / "layer_peaks.csv", figure_csv(record, "layer-peaks", "record"));
        for (const TrajectoryRecord& run : runs) {
            staged.add(dir / ("checkpoint_seed" + std::to_string(run.seed) + ".txt"),
                       checkpoint_to_string(run.spec, run.params));
        }
        staged.commit();
        out << "epochs to error (threshold " << format_double(cfg.threshold) << "):\n";
        for (const TrajectoryRecord& run : runs) {
            const EpochsToError result = first_epoch_reaching(run.loss_history, cfg.threshold);
            out << "  seed " << run.seed << ": "
                << (result.exceeded ? "budget exceeded after " + std::to_string(result.epochs)
                                    : std::to_string(result.epochs))
                << " epochs, final loss " << format_double(run.loss_history.back()) << "\n";
        }
    } else {
        const std::vector<VariantOutcome> outcomes = run_epoch_sweep(cfg);
        const json record = make_record_json("epoch-sweep", parsed.entries, {}, outcomes);
        staged.add(dir / "record.json", render_record(record));
        staged.add(dir / "depth_epochs.csv", figure_csv(record, "depth-epochs", "record"));
        staged.commit();
        out << "epochs to error (threshold " << format_double(cfg.threshold) << "):\n";
        for (const VariantOutcome& outcome : outcomes) {
            out << "  " << outcome.label << ": median " << format_double(outcome.median_epochs)
                << ", per seed";
            for (const EpochsToError& r : outcome.per_seed) {
                out << " " << r.epochs << (r.exceeded ? "+" : "");
            }
            out << "\n";
        }
    }
    out << "wrote " << staged.size() << " files to " << out_dir << "\n";
    return 0;
}

inline int cmd_report(const std::string& record_path, const std::string& figure,
                      const std::string& out_path, std::ostream& out) {
    const json record = parse_record(read_file(record_path), record_path);
    const std::string csv = figure_csv(record, figure, record_path);
    if (out_path.empty()) {
        out << csv;
    } else {
        StagedOutputs staged;
        staged.add(out_path, csv);
        staged.commit();
        out << "wrote " << out_path << "\n";
    }
    return 0;
}

}  // namespace cli_detail

// Parses and executes one command line (without the program name). All
// output goes to the supplied streams, which keeps the CLI testable
// in-process.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"frequency analysis of datasets and feedforward network training"};
    app.require_subcommand(1);

    std::string target_text;
    int synth_n = 200;
    std::uint64_t synth_seed = 0;
    std::string synth_out;
    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic target dataset");
    synth->add_option("--target", target_text, "target spec: sin:k=N | cos_combo | parity:d=N")
        ->required();
    synth->add_option("--n", synth_n, "sample count");
    synth->add_option("--seed", synth_seed, "RNG seed (parity sampling)");
    synth->add_option("--out", synth_out, "output dataset CSV")->required();

    std::string analyze_data;
    std::string analyze_grid;
    bool analyze_norm_dims = false;
    bool analyze_norm_rdf = false;
    std::string analyze_prefix;
    CLI::App* analyze = app.add_subcommand("analyze", "LFR/RDF sweep of a dataset CSV");
    analyze->add_option("--data", analyze_data, "dataset CSV path")->required();
    analyze->add_option("--grid", analyze_grid, "width grid lo:hi:count (log spaced)");
    analyze->add_flag("--normalize-dims", analyze_norm_dims, "normalize input dimensions first");
    analyze->add_flag("--normalize-rdf", analyze_norm_rdf, "scale the RDF to max 1");
    analyze->add_option("--out", analyze_prefix, "output prefix for .lfr.csv/.rdf.csv")->required();

    std::string oracle_data;
    double oracle_delta = 0.0;
    double oracle_k0 = 0.0;
    CLI::App* oracle = app.add_subcommand("oracle", "spectral cross-check on a 1-d uniform grid");
    oracle->add_option("--data", oracle_data, "dataset CSV path (1-d uniform grid)")->required();
    CLI::Option* delta_opt = oracle->add_option("--delta", oracle_delta, "Gaussian filter variance");
    CLI::Option* k0_opt = oracle->add_option("--k0", oracle_k0, "spectral cutoff frequency");

    std::string train_config;
    std::string train_out;
    CLI::App* train = app.add_subcommand("train", "run a configured experiment");
    train->add_option("--config", train_config, "experiment config file")->required();
    train->add_option("--out", train_out, "output directory")->required();

    std::string report_record;
    std::string report_figure;
    std::string report_out;
    CLI::App* report = app.add_subcommand("report", "flat CSV views of a record file");
    report->add_option("--record", report_record, "record.json path")->required();
    report->add_option("--figure", report_figure, "lfr | rdf | depth-epochs | layer-peaks")
        ->required();
    report->add_option("--out", report_out, "output CSV path (default: stdout)");

    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("freqlens");
    for (const std::string& arg : args) argv.push_back(arg.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        if (synth->parsed()) {
            return cli_detail::cmd_synth(target_text, synth_n, synth_seed, synth_out, out);
        }
        if (analyze->parsed()) {
            return cli_detail::cmd_analyze(analyze_data, analyze_grid, analyze_norm_dims,
                                           analyze_norm_rdf, analyze_prefix, out);
        }
        if (oracle->parsed()) {
            std::optional<double> delta;
            std::optional<double> k0;
            if (delta_opt->count() > 0) delta = oracle_delta;
            if (k0_opt->count() > 0) k0 = oracle_k0;
            return cli_detail::cmd_oracle(oracle_data, delta, k0, out);
        }
        if (train->parsed()) return cli_detail::cmd_train(train_config, train_out, out);
        if (report->parsed()) return cli_detail::cmd_report(report_record, report_figure, report_out, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    err << "error: no subcommand\n";
    return 1;
}

}  // namespace freqlens
