#pragma once

#include "freqlens/dataset.hpp"
#include "freqlens/errors.hpp"
#include "freqlens/filter.hpp"
#include "freqlens/network.hpp"
#include "freqlens/rng.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

namespace freqlens {

// ---------------------------------------------------------------------------
// Synthetic targets
// ---------------------------------------------------------------------------

enum class TargetKind { kSinKpix, kCosCombo, kParity };

struct TargetSpec {
    TargetKind kind = TargetKind::kSinKpix;
    int k = 1;  // sin(k pi x) frequency multiplier
    int d = 2;  // parity input dimension

    std::string label() const {
        switch (kind) {
            case TargetKind::kSinKpix: return "sin:k=" + std::to_string(k);
            case TargetKind::kCosCombo: return "cos_combo";
            case TargetKind::kParity: return "parity:d=" + std::to_string(d);
        }
        return "?";
    }

    int input_dim() const { return kind == TargetKind::kParity ? d : 1; }
};

// Accepts "sin:k=3", "cos_combo", "parity:d=8". "sin_kpix" and "cos" work as
// aliases for the long-form names.
inline TargetSpec parse_target_spec(const std::string& text) {
    TargetSpec spec;
    const std::vector<std::string_view> parts = split_fields(text, ':');
    if (parts.empty() || parts[0].empty()) throw config_error("empty target kind");
    const std::string kind(parts[0]);
    if (kind == "sin" || kind == "sin_kpix") {
        spec.kind = TargetKind::kSinKpix;
    } else if (kind == "cos_combo" || kind == "cos") {
        spec.kind = TargetKind::kCosCombo;
    } else if (kind == "parity") {
        spec.kind = TargetKind::kParity;
    } else {
        throw config_error("unknown target kind '" + kind + "' (want sin|cos_combo|parity)");
    }
    for (std::size_t i = 1; i < parts.size(); ++i) {
        const std::string_view part = parts[i];
        const std::size_t eq = part.find('=');
        if (eq == std::string_view::npos) {
            throw config_error("bad target parameter '" + std::string(part) + "' in '" + text + "'");
        }
        const std::string_view name = part.substr(0, eq);
        const long long value = parse_int(part.substr(eq + 1), "target parameter");
        if (name == "k" && spec.kind == TargetKind::kSinKpix) {
            spec.k = static_cast<int>(value);
        } else if (name == "d" && spec.kind == TargetKind::kParity) {
            spec.d = static_cast<int>(value);
        } else {
            throw config_error("target parameter '" + std::string(name) + "' does not apply to " +
                               kind);
        }
    }
    if (spec.k < 1) throw config_error("target sin needs k >= 1");
    if (spec.d < 1) throw config_error("target parity needs d >= 1");
    return spec;
}

// Builds one of the synthetic datasets: y = sin(k pi x) on a uniform grid
// over [-1, 1], y = cos(3x) + cos(5x) on [-pi, pi], or the parity product
// over seeded +-1 hypercube corners. The grid kinds include both endpoints;
// an explicit domain overrides the default interval.
inline LabeledDataset synth_target(const TargetSpec& target, int n, std::uint64_t seed,
                                   std::optional<std::pair<double, double>> domain = std::nullopt) {
    if (n < 2) throw invalid_parameter_error("synthetic target needs n >= 2, got " + std::to_string(n));
    LabeledDataset data;
    if (target.kind == TargetKind::kParity) {
        data.points.resize(n, target.d);
        data.targets.resize(n, 1);
        std::mt19937_64 rng(seed);
        for (int i = 0; i < n; ++i) {
            double product = 1.0;
            for (int j = 0; j < target.d; ++j) {
                const double bit = (rng() & 1ull) ? 1.0 : -1.0;
                data.points(i, j) = bit;
                product *= bit;
            }
            data.targets(i, 0) = product;
        }
        return data;
    }
    const double pi = std::acos(-1.0);
    double a = -1.0;
    double b = 1.0;
    if (target.kind == TargetKind::kCosCombo) {
        a = -pi;
        b = pi;
    }
    if (domain) {
        a = domain->first;
        b = domain->second;
        if (!(a < b)) throw invalid_parameter_error("domain must satisfy a < b");
    }
    data.points.resize(n, 1);
    data.targets.resize(n, 1);
    for (int i = 0; i < n; ++i) {
        const double x = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
        data.points(i, 0) = x;
        data.targets(i, 0) = target.kind == TargetKind::kSinKpix
                                 ? std::sin(static_cast<double>(target.k) * pi * x)
                                 : std::cos(3.0 * x) + std::cos(5.0 * x);
    }
    return data;
}

// ---------------------------------------------------------------------------
// IDX ingestion (MNIST-style image/label pairs)
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint32_t read_be_u32(const unsigned char* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

// Reads big-endian IDX image/label files, scales pixels to [0, 1], optionally
// average-pools k x k blocks, and one-hot encodes the digit labels into 10
// target columns. max_n <= 0 keeps every sample.
inline LabeledDataset load_idx_dataset(const std::filesystem::path& images_path,
                                       const std::filesystem::path& labels_path, int max_n,
                                       int downsample) {
    if (downsample < 1) throw invalid_parameter_error("downsample factor must be >= 1");
    const std::string images_raw = read_file(images_path);
    const std::string labels_raw = read_file(labels_path);
    const auto* img = reinterpret_cast<const unsigned char*>(images_raw.data());
    const auto* lab = reinterpret_cast<const unsigned char*>(labels_raw.data());

    if (images_raw.size() < 16) throw parse_error(images_path.string() + ": truncated IDX header");
    if (detail::read_be_u32(img) != kIdxImagesMagic) {
        throw parse_error(images_path.string() + ": bad IDX magic, expected 0x00000803");
    }
    const std::size_t n_images = detail::read_be_u32(img + 4);
    const std::size_t rows = detail::read_be_u32(img + 8);
    const std::size_t cols = detail::read_be_u32(img + 12);
    if (images_raw.size() != 16 + n_images * rows * cols) {
        throw parse_error(images_path.string() + ": size does not match header (" +
                          std::to_string(n_images) + " images of " + std::to_string(rows) + "x" +
                          std::to_string(cols) + ")");
    }

    if (labels_raw.size() < 8) throw parse_error(labels_path.string() + ": truncated IDX header");
    if (detail::read_be_u32(lab) != kIdxLabelsMagic) {
        throw parse_error(labels_path.string() + ": bad IDX magic, expected 0x00000801");
    }
    const std::size_t n_labels = detail::read_be_u32(lab + 4);
    if (labels_raw.size() != 8 + n_labels) {
        throw parse_error(labels_path.string() + ": size does not match header");
    }
    if (n_images != n_labels) {
        throw parse_error("image/label count mismatch: " + std::to_string(n_images) + " images vs " +
                          std::to_string(n_labels) + " labels");
    }
    if (rows % static_cast<std::size_t>(downsample) != 0 ||
        cols % static_cast<std::size_t>(downsample) != 0) {
        throw invalid_parameter_error("downsample factor " + std::to_string(downsample) +
                                      " does not divide image size " + std::to_string(rows) + "x" +
                                      std::to_string(cols));
    }

    const std::size_t take =
        (max_n <= 0) ? n_images : std::min(n_images, static_cast<std::size_t>(max_n));
    const std::size_t ds = static_cast<std::size_t>(downsample);
    const std::size_t out_rows = rows / ds;
    const std::size_t out_cols = cols / ds;
    const double block_scale = 1.0 / (255.0 * static_cast<double>(ds * ds));

    LabeledDataset data;
    data.points.resize(static_cast<Eigen::Index>(take), static_cast<Eigen::Index>(out_rows * out_cols));
    data.targets = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(take), 10);
    for (std::size_t i = 0; i < take; ++i) {
        const unsigned char digit = lab[8 + i];
        if (digit > 9) {
            throw parse_error(labels_path.string() + ": label " + std::to_string(digit) +
                              " at index " + std::to_string(i) + " is not a digit");
        }
        data.targets(static_cast<Eigen::Index>(i), digit) = 1.0;
        const unsigned char* pixels = img + 16 + i * rows * cols;
        for (std::size_t oy = 0; oy < out_rows; ++oy) {
            for (std::size_t ox = 0; ox < out_cols; ++ox) {
                double sum = 0.0;
                for (std::size_t dy = 0; dy < ds; ++dy) {
                    for (std::size_t dx = 0; dx < ds; ++dx) {
                        sum += pixels[(oy * ds + dy) * cols + (ox * ds + dx)];
                    }
                }
                data.points(static_cast<Eigen::Index>(i),
                            static_cast<Eigen::Index>(oy * out_cols + ox)) = sum * block_scale;
            }
        }
    }
    return data;
}

// ---------------------------------------------------------------------------
// Effective targets
// ---------------------------------------------------------------------------

// The dataset seen by the learning component that starts at layer l: points
// are the previous layer's activations f^[l-1](x_i) (dimension-normalized),
// targets are the original labels.
struct EffectiveTarget {
    int layer = 1;  // positive form of l
    LabeledDataset dataset;
};

namespace detail {

inline int resolve_component_layer(int l, int layer_count) {
    if (l < 0) l = layer_by_negative_index(l, layer_count);
    if (l < 1 || l > layer_count) {
        throw invalid_parameter_error("layer index " + std::to_string(l) + " out of range [1, " +
                                      std::to_string(layer_count) + "]");
    }
    return l;
}

}  // namespace detail

inline EffectiveTarget effective_target_dataset(const NetworkParams& params, const NetworkSpec& spec,
                                                const LabeledDataset& source, int l) {
    source.validate();
    l = detail::resolve_component_layer(l, spec.depth());
    const ForwardTrace trace = forward_batch(params, spec, source.points.transpose());
    EffectiveTarget out;
    out.layer = l;
    out.dataset.points = trace.activations[static_cast<std::size_t>(l - 1)].transpose();
    out.dataset.targets = source.targets;
    out.dataset = normalize_dimensions(out.dataset);
    return out;
}

// Input/output pairs of the learning component itself: points are
// f^[l-1](x_i), targets are the network outputs f^[L](x_i) at the current
// parameters. Points are left unnormalized; callers analyzing frequency
// content normalize as they see fit.
inline LabeledDataset learning_component_function(const NetworkParams& params,
                                                  const NetworkSpec& spec,
                                                  const LabeledDataset& source, int l) {
    source.validate();
    l = detail::resolve_component_layer(l, spec.depth());
    const ForwardTrace trace = forward_batch(params, spec, source.points.transpose());
    LabeledDataset out;
    out.points = trace.activations[static_cast<std::size_t>(l - 1)].transpose();
    out.targets = trace.output().transpose();
    return out;
}

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

enum class DataSource { kSynth, kIdx, kCsv };
enum class EpochSchedule { kGeometric, kAll, kList };
enum class SweepKind { kNone, kDepth, kTarget };

struct ExperimentConfig {
    NetworkSpec network;

    DataSource source = DataSource::kSynth;
    TargetSpec target;
    int n = 200;
    std::string data_path;
    std::string images_path;
    std::string labels_path;
    int max_n = 0;
    int downsample = 1;
    bool normalize_inputs = false;

    OptimizerKind optimizer = OptimizerKind::kAdam;
    double learning_rate = 1e-3;
    int batch_size = 0;  // 0 = full batch
    double threshold = 1e-3;
    int budget = 1000;
    std::vector<std::uint64_t> seeds = {0};

    EpochSchedule schedule = EpochSchedule::kGeometric;
    std::vector<int> epoch_list;
    bool record_all_hidden = true;  // record S^[l] for every hidden layer
    std::vector<int> layer_list;    // explicit S^[l] indices when not all-hidden

    FilterWidthGrid grid = FilterWidthGrid::default_grid();
    bool rdf_normalize = true;

    SweepKind sweep = SweepKind::kNone;
    std::vector<int> sweep_depths;
    std::vector<TargetSpec> sweep_targets;

    // Indices l of the effective targets S^[l] to record for a network of
    // the given depth. Defaults to every hidden layer.
    std::vector<int> recorded_layers(int layer_count) const {
        if (!record_all_hidden) return layer_list;
        std::vector<int> layers;
        for (int l = 1; l < layer_count; ++l) layers.push_back(l);
        return layers;
    }

    void validate() const {
        network.validate();
        if (!(threshold > 0.0)) throw config_error("threshold must be positive");
        if (budget < 1) throw config_error("epoch budget must be >= 1");
        if (seeds.empty()) throw config_error("at least one seed is required");
        if (learning_rate <= 0.0) throw config_error("learning rate must be positive");
        if (batch_size < 0) throw config_error("batch size must be >= 1 (or omitted for full batch)");
        grid.validate();
        switch (source) {
            case DataSource::kSynth:
                if (n < 2) throw config_error("synthetic dataset needs n >= 2");
                break;
            case DataSource::kIdx:
                if (images_path.empty() || labels_path.empty()) {
                    throw config_error("idx source needs data.images and data.labels");
                }
                if (downsample < 1) throw config_error("downsample factor must be >= 1");
                break;
            case DataSource::kCsv:
                if (data_path.empty()) throw config_error("csv source needs data.path");
                break;
        }
        for (const int l : layer_list) {
            if (l < 0 || l >= network.depth()) {
                throw config_error("recorded layer " + std::to_string(l) + " out of range [0, " +
                                   std::to_string(network.depth() - 1) + "]");
            }
        }
        if (sweep == SweepKind::kDepth) {
            if (sweep_depths.empty()) throw config_error("depth sweep needs sweep.depths");
            for (const int d : sweep_depths) {
                if (d < 1) throw config_error("sweep depths must be >= 1");
            }
            if (network.depth() < 2) {
                throw config_error("depth sweep needs a base network with a hidden layer");
            }
        }
        if (sweep == SweepKind::kTarget) {
            if (sweep_targets.empty()) throw config_error("target sweep needs sweep.targets");
            if (source != DataSource::kSynth) {
                throw config_error("target sweep only applies to synthetic data");
            }
        }
    }
};

// Distinct seed streams per run so data sampling, initialization, and batch
// shuffling never alias.
inline constexpr std::uint64_t kDataSeedSalt = 0xD5A7A;
inline constexpr std::uint64_t kInitSeedSalt = 0x1217;
inline constexpr std::uint64_t kShuffleSeedSalt = 0x5AFF1E;

inline LabeledDataset build_dataset(const ExperimentConfig& cfg, std::uint64_t run_seed) {
    LabeledDataset data;
    switch (cfg.source) {
        case DataSource::kSynth:
            data = synth_target(cfg.target, cfg.n, mix_seed(run_seed, kDataSeedSalt));
            break;
        case DataSource::kIdx:
            data = load_idx_dataset(cfg.images_path, cfg.labels_path, cfg.max_n, cfg.downsample);
            break;
        case DataSource::kCsv:
            data = read_dataset_csv(cfg.data_path);
            break;
    }
    if (cfg.normalize_inputs) data = normalize_dimensions(data);
    return data;
}

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

// Recorded epochs when no explicit list is given: a Fibonacci-spaced ramp
// {0, 1, 2, 3, 5, 8, 13, ...} capped at the budget. The final trained epoch
// is always recorded on top of this.
inline std::vector<int> geometric_epoch_schedule(int max_epoch) {
    std::vector<int> epochs;
    for (const int e : {0, 1, 2, 3}) {
        if (e <= max_epoch) epochs.push_back(e);
    }
    long long a = 3;
    long long b = 5;
    while (b <= max_epoch) {
        epochs.push_back(static_cast<int>(b));
        const long long next = a + b;
        a = b;
        b = next;
    }
    return epochs;
}

struct LayerCurves {
    int layer = 0;  // S^[layer]
    FilterSweep sweep;
    RdfCurve rdf;
};

struct EpochRecord {
    int epoch = 0;
    double accuracy = -1.0;  // fraction correct for one-hot targets, -1 otherwise
    std::vector<LayerCurves> layers;
};

struct TrajectoryRecord {
    std::uint64_t seed = 0;
    std::vector<int> epochs;
    std::vector<EpochRecord> records;
    std::vector<double> loss_history;  // [0] is the pre-training loss
    int trained_epochs = 0;
    bool reached_threshold = false;
    int first_epoch_at_threshold = -1;
    NetworkSpec spec;
    NetworkParams params;  // parameters at the end of the run
};

// True when every row is a clean one-hot vector, which is when accuracy is a
// meaningful statistic.
inline bool is_one_hot(const Eigen::MatrixXd& targets) {
    if (targets.cols() < 2) return false;
    for (Eigen::Index i = 0; i < targets.rows(); ++i) {
        int ones = 0;
        for (Eigen::Index j = 0; j < targets.cols(); ++j) {
            const double v = targets(i, j);
            if (v == 1.0) {
                ++ones;
            } else if (v != 0.0) {
                return false;
            }
        }
        if (ones != 1) return false;
    }
    return true;
}

namespace detail {

inline double accuracy_from_outputs(const Eigen::MatrixXd& outputs, const Eigen::MatrixXd& targets) {
    Eigen::Index correct = 0;
    for (Eigen::Index c = 0; c < outputs.cols(); ++c) {
        Eigen::Index predicted = 0;
        Eigen::Index truth = 0;
        outputs.col(c).maxCoeff(&predicted);
        targets.row(c).maxCoeff(&truth);
        if (predicted == truth) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(outputs.cols());
}

}  // namespace detail

// Trains one seeded run and snapshots LFR/RDF curves of the effective
// targets at the recorded epochs (epoch 0 and the final epoch always
// included). Training stops at the first epoch whose mean loss reaches the
// threshold, or at the budget. With record_curves false only the loss and
// accuracy bookkeeping happens, which is what epochs-to-error sweeps use.
inline TrajectoryRecord run_trajectory(const ExperimentConfig& cfg, std::uint64_t seed,
                                       bool record_curves = true) {
    if (!(cfg.threshold > 0.0)) throw config_error("threshold must be positive");
    if (cfg.budget < 0) throw config_error("epoch budget must be >= 0");
    cfg.grid.validate();

    const LabeledDataset data = build_dataset(cfg, seed);
    NetworkSpec spec = cfg.network;
    spec.seed = mix_seed(seed, kInitSeedSalt);
    spec.validate();
    if (data.input_dim() != spec.input_dim() || data.target_dim() != spec.output_dim()) {
        throw config_error("network " + std::to_string(spec.input_dim()) + "->" +
                           std::to_string(spec.output_dim()) + " does not match dataset " +
                           std::to_string(data.input_dim()) + "->" + std::to_string(data.target_dim()));
    }

    NetworkParams params = init_network(spec);
    OptimizerState opt = cfg.optimizer == OptimizerKind::kSgd
                             ? OptimizerState::sgd(cfg.learning_rate)
                             : OptimizerState::adam(cfg.learning_rate);
    const int batch = cfg.batch_size == 0 ? static_cast<int>(data.size()) : cfg.batch_size;
    const std::uint64_t shuffle_seed = mix_seed(seed, kShuffleSeedSalt);

    const std::vector<int> layers = cfg.recorded_layers(spec.depth());
    std::set<int> scheduled;
    if (cfg.schedule == EpochSchedule::kGeometric) {
        const std::vector<int> ramp = geometric_epoch_schedule(cfg.budget);
        scheduled.insert(ramp.begin(), ramp.end());
    } else if (cfg.schedule == EpochSchedule::kList) {
        scheduled.insert(cfg.epoch_list.begin(), cfg.epoch_list.end());
    }
    const bool record_every = cfg.schedule == EpochSchedule::kAll;
    const bool classification = is_one_hot(data.targets);
    const Eigen::MatrixXd inputs_t = data.points.transpose();

    TrajectoryRecord rec;
    rec.seed = seed;
    rec.spec = spec;

    auto snapshot = [&](int epoch) -> double {
        const ForwardTrace trace = forward_batch(params, spec, inputs_t);
        EpochRecord er;
        er.epoch = epoch;
        if (classification) er.accuracy = detail::accuracy_from_outputs(trace.output(), data.targets);
        if (record_curves) {
            for (const int l : layers) {
                LayerCurves lc;
                lc.layer = l;
                LabeledDataset effective;
                effective.points = trace.activations[static_cast<std::size_t>(l)].transpose();
                effective.targets = data.targets;
                effective = normalize_dimensions(effective);
                lc.sweep = lfr_sweep(effective, cfg.grid);
                lc.rdf = rdf_from_lfr(lc.sweep, cfg.rdf_normalize);
                er.layers.push_back(std::move(lc));
            }
        }
        rec.epochs.push_back(epoch);
        rec.records.push_back(std::move(er));
        return loss_from_outputs(trace.output(), data.targets.transpose(), spec.loss_kind);
    };

    const double initial_loss = snapshot(0);
    rec.loss_history.push_back(initial_loss);
    if (initial_loss <= cfg.threshold) {
        rec.reached_threshold = true;
        rec.first_epoch_at_threshold = 0;
        rec.params = std::move(params);
        return rec;
    }

    for (int epoch = 1; epoch <= cfg.budget; ++epoch) {
        const double epoch_loss = train_epoch(params, opt, spec, data, batch, shuffle_seed, epoch);
        rec.loss_history.push_back(epoch_loss);
        const bool reached = epoch_loss <= cfg.threshold;
        const bool final_epoch = reached || epoch == cfg.budget;
        if (record_every || final_epoch || scheduled.count(epoch) > 0) snapshot(epoch);
        if (reached) {
            rec.reached_threshold = true;
            rec.first_epoch_at_threshold = epoch;
            break;
        }
    }
    rec.trained_epochs = static_cast<int>(rec.loss_history.size()) - 1;
    rec.params = std::move(params);
    return rec;
}

// ---------------------------------------------------------------------------
// Epochs to error
// ---------------------------------------------------------------------------

struct EpochsToError {
    int epochs = 0;         // first epoch index at or below the threshold
    bool exceeded = false;  // budget ran out; epochs then holds the trained count
};

// Scans a recorded loss history (index = epoch, entry 0 = pre-training loss)
// for the first epoch at or below the threshold. Nonincreasing in the
// threshold by construction.
inline EpochsToError first_epoch_reaching(const std::vector<double>& loss_history,
                                          double threshold) {
    if (loss_history.empty()) throw insufficient_data_error("empty loss history");
    for (std::size_t e = 0; e < loss_history.size(); ++e) {
        if (loss_history[e] <= threshold) return {static_cast<int>(e), false};
    }
    return {static_cast<int>(loss_history.size()) - 1, true};
}

// One cell of a sweep: overrides the base configuration's hidden depth
// and/or synthetic target, keeping everything else fixed.
struct ExperimentVariant {
    std::string label = "base";
    std::optional<int> depth;  // hidden layer count; width copied from the base network
    std::optional<TargetSpec> target;
};

inline ExperimentConfig apply_variant(const ExperimentConfig& base, const ExperimentVariant& v) {
    ExperimentConfig cfg = base;
    if (v.target) cfg.target = *v.target;
    if (v.depth) {
        if (base.network.depth() < 2) {
            throw config_error("depth variant needs a base network with a hidden layer");
        }
        const int width = base.network.layer_sizes[1];
        std::vector<int> sizes;
        sizes.push_back(base.network.layer_sizes.front());
        for (int i = 0; i < *v.depth; ++i) sizes.push_back(width);
        sizes.push_back(base.network.layer_sizes.back());
        cfg.network.layer_sizes = std::move(sizes);
    }
    return cfg;
}

inline EpochsToError epochs_to_error(const ExperimentConfig& cfg, const ExperimentVariant& variant,
                                     std::uint64_t seed) {
    const ExperimentConfig run_cfg = apply_variant(cfg, variant);
    const TrajectoryRecord rec = run_trajectory(run_cfg, seed, /*record_curves=*/false);
    return first_epoch_reaching(rec.loss_history, run_cfg.threshold);
}

inline EpochsToError epochs_to_error(const ExperimentConfig& cfg, const ExperimentVariant& variant) {
    if (cfg.seeds.empty()) throw config_error("at least one seed is required");
    return epochs_to_error(cfg, variant, cfg.seeds.front());
}

// ---------------------------------------------------------------------------
// Seed-parallel execution
// ---------------------------------------------------------------------------

// Worker cap: FREQLENS_THREADS when set, otherwise the machine's parallelism.
inline int max_worker_threads() {
    if (const char* env = std::getenv("FREQLENS_THREADS")) {
        const long long value = parse_int(env, "FREQLENS_THREADS");
        if (value < 1) throw config_error("FREQLENS_THREADS must be >= 1");
        return static_cast<int>(value);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(0..count-1), possibly concurrently. Each index owns its result
// slot, so aggregation order never depends on scheduling; the first failing
// index's exception (by index, not by time) is rethrown after all workers
// finish.
template <typename Fn>
void parallel_for_index(std::size_t count, Fn&& fn) {
    const int workers = std::min<int>(max_worker_threads(), static_cast<int>(count));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> failures(count);
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    fn(i);
                } catch (...) {
                    failures[i] = std::current_exception();
                }
            }
        });
    }
    for (std::thread& t : pool) t.join();
    for (const std::exception_ptr& failure : failures) {
        if (failure) std::rethrow_exception(failure);
    }
}

struct VariantOutcome {
    std::string label;
    std::vector<std::uint64_t> seeds;
    std::vector<EpochsToError> per_seed;
    double median_epochs = 0.0;
};

// Median of the per-seed epoch counts. Runs that exceeded the budget
// contribute their trained count, making the median a lower bound in that
// case.
inline double median_epochs(const std::vector<EpochsToError>& results) {
    if (results.empty()) throw insufficient_data_error("no results to take a median over");
    std::vector<double> values;
    values.reserve(results.size());
    for (const EpochsToError& r : results) values.push_back(static_cast<double>(r.epochs));
    std::sort(values.begin(), values.end());
    const std::size_t mid = values.size() / 2;
    return values.size() % 2 == 1 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

inline std::vector<ExperimentVariant> variants_from_config(const ExperimentConfig& cfg) {
    std::vector<ExperimentVariant> variants;
    switch (cfg.sweep) {
        case SweepKind::kNone: {
            ExperimentVariant v;
            v.label = cfg.source == DataSource::kSynth ? cfg.target.label() : "base";
            variants.push_back(std::move(v));
            break;
        }
        case SweepKind::kDepth:
            for (const int d : cfg.sweep_depths) {
                ExperimentVariant v;
                v.label = "depth=" + std::to_string(d);
                v.depth = d;
                variants.push_back(std::move(v));
            }
            break;
        case SweepKind::kTarget:
            for (const TargetSpec& t : cfg.sweep_targets) {
                ExperimentVariant v;
                v.label = t.label();
                v.target = t;
                variants.push_back(std::move(v));
            }
            break;
    }
    return variants;
}

// Epochs-to-error for every (variant, seed) cell, parallel over cells up to
// the worker cap, plus the per-variant medians.
inline std::vector<VariantOutcome> run_epoch_sweep(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::vector<ExperimentVariant> variants = variants_from_config(cfg);
    std::vector<VariantOutcome> outcomes(variants.size());
    for (std::size_t v = 0; v < variants.size(); ++v) {
        outcomes[v].label = variants[v].label;
        outcomes[v].seeds = cfg.seeds;
        outcomes[v].per_seed.resize(cfg.seeds.size());
    }
    const std::size_t cells = variants.size() * cfg.seeds.size();
    parallel_for_index(cells, [&](std::size_t i) {
        const std::size_t v = i / cfg.seeds.size();
        const std::size_t s = i % cfg.seeds.size();
        outcomes[v].per_seed[s] = epochs_to_error(cfg, variants[v], cfg.seeds[s]);
    });
    for (VariantOutcome& outcome : outcomes) {
        outcome.median_epochs = median_epochs(outcome.per_seed);
    }
    return outcomes;
}

// ---------------------------------------------------------------------------
// Rank statistics
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<double> average_ranks(const std::vector<double>& values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double shared = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based average rank
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
        i = j + 1;
    }
    return ranks;
}

}  // namespace detail

// Spearman's rho: Pearson correlation of the average ranks. Ties get shared
// ranks. A variable whose ranks are all tied carries no ordering
// information, so the correlation is reported as 0.
inline double spearman_rank_correlation(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw shape_error("spearman: length mismatch");
    if (a.size() < 2) throw insufficient_data_error("spearman needs at least 2 pairs");
    const std::vector<double> ra = detail::average_ranks(a);
    const std::vector<double> rb = detail::average_ranks(b);
    const double n = static_cast<double>(a.size());
    double mean_a = 0.0;
    double mean_b = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        mean_a += ra[i];
        mean_b += rb[i];
    }
    mean_a /= n;
    mean_b /= n;
    double cov = 0.0;
    double var_a = 0.0;
    double var_b = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = ra[i] - mean_a;
        const double db = rb[i] - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    if (var_a == 0.0 || var_b == 0.0) return 0.0;
    return cov / std::sqrt(var_a * var_b);
}

}  // namespace freqlens
