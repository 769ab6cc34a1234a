#pragma once

#include "freqlens/errors.hpp"
#include "freqlens/experiment.hpp"
#include "freqlens/filter.hpp"
#include "freqlens/io_util.hpp"

#include <json.hpp>

#include <string>
#include <utility>
#include <vector>

namespace freqlens {

using json = nlohmann::ordered_json;

inline constexpr const char* kRecordFormat = "freqlens-record";
inline constexpr int kRecordVersion = 1;

inline json trajectory_run_to_json(const TrajectoryRecord& rec) {
    json run;
    run["seed"] = rec.seed;
    run["trained_epochs"] = rec.trained_epochs;
    run["reached_threshold"] = rec.reached_threshold;
    run["first_epoch_at_threshold"] = rec.first_epoch_at_threshold;
    run["epochs"] = rec.epochs;
    run["loss_history"] = rec.loss_history;

    json accuracy = json::array();
    json curves = json::array();
    for (const EpochRecord& er : rec.records) {
        if (er.accuracy >= 0.0) {
            accuracy.push_back(json{{"epoch", er.epoch}, {"value", er.accuracy}});
        }
        for (const LayerCurves& lc : er.layers) {
            json curve;
            curve["epoch"] = er.epoch;
            curve["layer"] = lc.layer;
            curve["inv_delta"] = lc.sweep.grid.widths;
            curve["lfr"] = lc.sweep.lfr_values;
            curve["inv_delta_mid"] = lc.rdf.midpoints;
            curve["rdf"] = lc.rdf.slopes;
            curve["rdf_normalized"] = lc.rdf.normalized;
            if (!lc.sweep.warnings.empty()) curve["warnings"] = lc.sweep.warnings;
            curves.push_back(std::move(curve));
        }
    }
    if (!accuracy.empty()) run["accuracy"] = std::move(accuracy);
    run["curves"] = std::move(curves);
    return run;
}

inline json sweep_outcome_to_json(const VariantOutcome& outcome) {
    json entry;
    entry["variant"] = outcome.label;
    entry["seeds"] = outcome.seeds;
    json epochs = json::array();
    json exceeded = json::array();
    for (const EpochsToError& r : outcome.per_seed) {
        epochs.push_back(r.epochs);
        exceeded.push_back(r.exceeded);
    }
    entry["epochs"] = std::move(epochs);
    entry["exceeded"] = std::move(exceeded);
    entry["median_epochs"] = outcome.median_epochs;
    return entry;
}

// The on-disk experiment record: format tag, config echo, one run object per
// seed (trajectory mode), and the per-variant epochs-to-error table (sweep
// mode).
inline json make_record_json(const std::string& mode,
                             const std::vector<std::pair<std::string, std::string>>& config_entries,
                             const std::vector<TrajectoryRecord>& runs,
                             const std::vector<VariantOutcome>& sweep) {
    json record;
    record["format"] = kRecordFormat;
    record["version"] = kRecordVersion;
    record["mode"] = mode;
    json config = json::object();
    for (const auto& [key, value] : config_entries) config[key] = value;
    record["config"] = std::move(config);
    json run_array = json::array();
    for (const TrajectoryRecord& rec : runs) run_array.push_back(trajectory_run_to_json(rec));
    record["runs"] = std::move(run_array);
    json sweep_array = json::array();
    for (const VariantOutcome& outcome : sweep) sweep_array.push_back(sweep_outcome_to_json(outcome));
    record["sweep"] = std::move(sweep_array);
    return record;
}

inline std::string render_record(const json& record) { return record.dump(2) + "\n"; }

inline json parse_record(const std::string& content, const std::string& origin) {
    json record;
    try {
        record = json::parse(content);
    } catch (const nlohmann::json::exception& e) {
        throw parse_error(origin + ": " + e.what());
    }
    if (!record.is_object() || record.value("format", "") != kRecordFormat) {
        throw parse_error(origin + ": not a " + std::string(kRecordFormat) + " file");
    }
    if (record.value("version", 0) != kRecordVersion) {
        throw parse_error(origin + ": unsupported record version");
    }
    return record;
}

namespace detail {

inline const json& first_run(const json& record, const std::string& origin) {
    const auto runs = record.find("runs");
    if (runs == record.end() || !runs->is_array() || runs->empty()) {
        throw insufficient_data_error(origin + ": record contains no runs");
    }
    return runs->front();
}

inline void append_curve_rows(std::string& out, const json& curve, const char* xs_key,
                              const char* ys_key) {
    const int epoch = curve.at("epoch").get<int>();
    const int layer = curve.at("layer").get<int>();
    const auto& xs = curve.at(xs_key);
    const auto& ys = curve.at(ys_key);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        out += std::to_string(epoch) + "," + std::to_string(layer) + "," +
               format_double(xs[i].get<double>()) + "," + format_double(ys[i].get<double>()) + "\n";
    }
}

}  // namespace detail

// Flat per-figure CSV views over a parsed record. Curve figures read the
// first run; peaks come from the stored RDF values, with nan marking curves
// that never rise.
inline std::string figure_csv(const json& record, const std::string& figure,
                              const std::string& origin) {
    std::string out;
    if (figure == "lfr" || figure == "rdf") {
        const json& run = detail::first_run(record, origin);
        out = figure == "lfr" ? "epoch,layer,inv_delta,lfr\n" : "epoch,layer,inv_delta_mid,rdf\n";
        for (const json& curve : run.at("curves")) {
            if (figure == "lfr") {
                detail::append_curve_rows(out, curve, "inv_delta", "lfr");
            } else {
                detail::append_curve_rows(out, curve, "inv_delta_mid", "rdf");
            }
        }
        return out;
    }
    if (figure == "layer-peaks") {
        const json& run = detail::first_run(record, origin);
        out = "epoch,layer,peak_inv_delta\n";
        for (const json& curve : run.at("curves")) {
            RdfCurve rdf;
            rdf.midpoints = curve.at("inv_delta_mid").get<std::vector<double>>();
            rdf.slopes = curve.at("rdf").get<std::vector<double>>();
            std::string peak;
            try {
                peak = format_double(rdf_peak(rdf));
            } catch (const no_peak_error&) {
                peak = "nan";
            }
            out += std::to_string(curve.at("epoch").get<int>()) + "," +
                   std::to_string(curve.at("layer").get<int>()) + "," + peak + "\n";
        }
        return out;
    }
    if (figure == "depth-epochs") {
        out = "variant,median_epochs\n";
        for (const json& entry : record.at("sweep")) {
            out += entry.at("variant").get<std::string>() + "," +
                   format_double(entry.at("median_epochs").get<double>()) + "\n";
        }
        return out;
    }
    throw config_error("unknown figure '" + figure + "' (want lfr|rdf|depth-epochs|layer-peaks)");
}

}  // namespace freqlens
