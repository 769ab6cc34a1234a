#pragma once

#include "freqlens/errors.hpp"
#include "freqlens/experiment.hpp"
#include "freqlens/io_util.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace freqlens {

// Experiment configs are flat `key = value` text: one assignment per line,
// dotted section prefixes, '#' comments, blank lines ignored. Every key is
// optional except network.layers. The full list:
//
//   network.layers      comma ints, input through output (e.g. 1,100,100,1)
//   network.activation  tanh | relu                        [tanh]
//   network.residual    true | false                       [false]
//   network.loss        mse | softmax_cross_entropy        [mse]
//   data.source         synth | idx | csv                  [synth]
//   data.target         sin:k=N | cos_combo | parity:d=N   [sin:k=1]
//   data.n              sample count for synth             [200]
//   data.path           dataset CSV (source = csv)
//   data.images         IDX image file (source = idx)
//   data.labels         IDX label file (source = idx)
//   data.max_n          cap on IDX samples, 0 = all        [0]
//   data.downsample     average-pool factor for IDX        [1]
//   data.normalize      normalize input dimensions on load [false]
//   train.optimizer     adam | sgd                         [adam]
//   train.lr            learning rate                      [1e-3]
//   train.batch         batch size, 0 or "full" = all      [0]
//   train.threshold     stopping loss                      [1e-3]
//   train.budget        epoch budget                       [1000]
//   train.seeds         comma seed list                    [0]
//   record.epochs       geometric | all | comma ints       [geometric]
//   record.layers       hidden | none | comma ints         [hidden]
//   grid.lo grid.hi     filter width (1/delta) bounds      [0.1, 1000]
//   grid.count          widths in the sweep                [40]
//   rdf.normalize       scale RDF curves to max 1          [true]
//   sweep.kind          none | depth | target              [none]
//   sweep.depths        comma hidden-layer counts
//   sweep.targets       semicolon-separated target specs

namespace detail {

inline bool parse_bool(std::string_view value, const std::string& key) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw config_error(key + ": expected true/false, got '" + std::string(value) + "'");
}

inline std::vector<int> parse_int_list(std::string_view value, const std::string& key) {
    std::vector<int> out;
    for (const std::string_view field : split_fields(value, ',')) {
        out.push_back(static_cast<int>(parse_int(field, key)));
    }
    return out;
}

inline std::vector<std::uint64_t> parse_seed_list(std::string_view value, const std::string& key) {
    std::vector<std::uint64_t> out;
    for (const std::string_view field : split_fields(value, ',')) {
        const long long seed = parse_int(field, key);
        if (seed < 0) throw config_error(key + ": seeds must be nonnegative");
        out.push_back(static_cast<std::uint64_t>(seed));
    }
    return out;
}

inline std::string_view trim(std::string_view text) {
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
    while (!text.empty() &&
           (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) {
        text.remove_suffix(1);
    }
    return text;
}

}  // namespace detail

struct ParsedConfig {
    ExperimentConfig config;
    std::vector<std::pair<std::string, std::string>> entries;  // file order, for echoing
};

inline ParsedConfig parse_config(const std::string& content, const std::string& origin) {
    ParsedConfig parsed;
    ExperimentConfig& cfg = parsed.config;
    cfg.network.layer_sizes.clear();
    cfg.seeds.clear();

    std::vector<std::string> unknown;
    std::vector<std::string> duplicate;
    std::set<std::string> seen;
    bool have_layers = false;
    double grid_lo = FilterWidthGrid::kDefaultLo;
    double grid_hi = FilterWidthGrid::kDefaultHi;
    int grid_count = FilterWidthGrid::kDefaultCount;

    std::size_t line_number = 0;
    std::size_t start = 0;
    while (start <= content.size()) {
        const std::size_t end = content.find('\n', start);
        std::string_view line(content.data() + start,
                              (end == std::string::npos ? content.size() : end) - start);
        start = end == std::string::npos ? content.size() + 1 : end + 1;
        ++line_number;

        const std::size_t hash = line.find('#');
        if (hash != std::string_view::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;

        const std::size_t eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw config_error(origin + ":" + std::to_string(line_number) +
                               ": expected 'key = value'");
        }
        const std::string key(detail::trim(line.substr(0, eq)));
        const std::string value(detail::trim(line.substr(eq + 1)));
        if (key.empty()) {
            throw config_error(origin + ":" + std::to_string(line_number) + ": empty key");
        }
        if (!seen.insert(key).second) {
            duplicate.push_back(key);
            continue;
        }
        parsed.entries.emplace_back(key, value);

        if (key == "network.layers") {
            cfg.network.layer_sizes = detail::parse_int_list(value, key);
            have_layers = true;
        } else if (key == "network.activation") {
            cfg.network.activation = activation_from_string(value);
        } else if (key == "network.residual") {
            cfg.network.residual = detail::parse_bool(value, key);
        } else if (key == "network.loss") {
            cfg.network.loss_kind = loss_from_string(value);
        } else if (key == "data.source") {
            if (value == "synth") {
                cfg.source = DataSource::kSynth;
            } else if (value == "idx") {
                cfg.source = DataSource::kIdx;
            } else if (value == "csv") {
                cfg.source = DataSource::kCsv;
            } else {
                throw config_error(key + ": expected synth|idx|csv, got '" + value + "'");
            }
        } else if (key == "data.target") {
            cfg.target = parse_target_spec(value);
        } else if (key == "data.n") {
            cfg.n = static_cast<int>(parse_int(value, key));
        } else if (key == "data.path") {
            cfg.data_path = value;
        } else if (key == "data.images") {
            cfg.images_path = value;
        } else if (key == "data.labels") {
            cfg.labels_path = value;
        } else if (key == "data.max_n") {
            cfg.max_n = static_cast<int>(parse_int(value, key));
        } else if (key == "data.downsample") {
            cfg.downsample = static_cast<int>(parse_int(value, key));
        } else if (key == "data.normalize") {
            cfg.normalize_inputs = detail::parse_bool(value, key);
        } else if (key == "train.optimizer") {
            cfg.optimizer = optimizer_from_string(value);
        } else if (key == "train.lr") {
            cfg.learning_rate = parse_double(value, key);
        } else if (key == "train.batch") {
            cfg.batch_size = value == "full" ? 0 : static_cast<int>(parse_int(value, key));
        } else if (key == "train.threshold") {
            cfg.threshold = parse_double(value, key);
        } else if (key == "train.budget") {
            cfg.budget = static_cast<int>(parse_int(value, key));
        } else if (key == "train.seeds") {
            cfg.seeds = detail::parse_seed_list(value, key);
        } else if (key == "record.epochs") {
            if (value == "geometric") {
                cfg.schedule = EpochSchedule::kGeometric;
            } else if (value == "all") {
                cfg.schedule = EpochSchedule::kAll;
            } else {
                cfg.schedule = EpochSchedule::kList;
                cfg.epoch_list = detail::parse_int_list(value, key);
            }
        } else if (key == "record.layers") {
            if (value == "hidden") {
                cfg.record_all_hidden = true;
            } else if (value == "none") {
                cfg.record_all_hidden = false;
                cfg.layer_list.clear();
            } else {
                cfg.record_all_hidden = false;
                cfg.layer_list = detail::parse_int_list(value, key);
            }
        } else if (key == "grid.lo") {
            grid_lo = parse_double(value, key);
        } else if (key == "grid.hi") {
            grid_hi = parse_double(value, key);
        } else if (key == "grid.count") {
            grid_count = static_cast<int>(parse_int(value, key));
        } else if (key == "rdf.normalize") {
            cfg.rdf_normalize = detail::parse_bool(value, key);
        } else if (key == "sweep.kind") {
            if (value == "none") {
                cfg.sweep = SweepKind::kNone;
            } else if (value == "depth") {
                cfg.sweep = SweepKind::kDepth;
            } else if (value == "target") {
                cfg.sweep = SweepKind::kTarget;
            } else {
                throw config_error(key + ": expected none|depth|target, got '" + value + "'");
            }
        } else if (key == "sweep.depths") {
            cfg.sweep_depths = detail::parse_int_list(value, key);
        } else if (key == "sweep.targets") {
            for (const std::string_view field : split_fields(value, ';')) {
                cfg.sweep_targets.push_back(parse_target_spec(std::string(detail::trim(field))));
            }
        } else {
            unknown.push_back(key);
        }
    }

    auto join = [](const std::vector<std::string>& keys) {
        std::string joined;
        for (const std::string& k : keys) {
            if (!joined.empty()) joined += ", ";
            joined += k;
        }
        return joined;
    };
    if (!unknown.empty()) {
        throw config_error(origin + ": unknown config keys: " + join(unknown));
    }
    if (!duplicate.empty()) {
        throw config_error(origin + ": duplicate config keys: " + join(duplicate));
    }
    if (!have_layers) throw config_error(origin + ": missing required key network.layers");
    if (cfg.seeds.empty()) cfg.seeds = {0};
    cfg.grid = FilterWidthGrid::log_spaced(grid_lo, grid_hi, grid_count);
    cfg.validate();
    return parsed;
}

inline ParsedConfig read_config(const std::filesystem::path& path) {
    return parse_config(read_file(path), path.string());
}

}  // namespace freqlens
