#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "levelscope/lob_data.hpp"
#include "levelscope/predictor.hpp"
#include "levelscope/reporting.hpp"
#include "levelscope/selection.hpp"
#include "levelscope/synthgen.hpp"

namespace levelscope {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Flat key=value config files with dotted section prefixes, e.g.
//   bpso.swarm_size = 10
// '#' lines are comments. Unknown keys are rejected after parsing.
// ---------------------------------------------------------------------------

class KeyValueConfig {
public:
    static KeyValueConfig from_string(const std::string& text) {
        KeyValueConfig cfg;
        std::istringstream in(text);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const std::string trimmed = trim(line);
            if (trimmed.empty() || trimmed[0] == '#') continue;
            const auto eq = trimmed.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
            const std::string key = trim(trimmed.substr(0, eq));
            const std::string value = trim(trimmed.substr(eq + 1));
            if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
            if (!cfg.values_.emplace(key, value).second)
                throw ConfigError("duplicate config key: " + key);
        }
        return cfg;
    }

    static KeyValueConfig from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        std::ostringstream buf;
        buf << in.rdbuf();
        return from_string(buf.str());
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get_string(const std::string& key) {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("missing required config key: " + key);
        consumed_.insert(key);
        return it->second;
    }

    std::string get_string(const std::string& key, const std::string& fallback) {
        return has(key) ? get_string(key) : fallback;
    }

    long long get_int(const std::string& key) { return to_int(key, get_string(key)); }
    long long get_int(const std::string& key, long long fallback) {
        return has(key) ? get_int(key) : fallback;
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) {
        if (!has(key)) return fallback;
        const std::string s = get_string(key);
        try {
            return std::stoull(s);
        } catch (...) {
            throw ConfigError("config key " + key + ": expected unsigned integer, got '" + s + "'");
        }
    }

    double get_double(const std::string& key) {
        const std::string s = get_string(key);
        try {
            std::size_t pos = 0;
            const double v = std::stod(s, &pos);
            if (pos != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (...) {
            throw ConfigError("config key " + key + ": expected number, got '" + s + "'");
        }
    }
    double get_double(const std::string& key, double fallback) {
        return has(key) ? get_double(key) : fallback;
    }

    std::vector<std::string> get_list(const std::string& key) {
        std::vector<std::string> out;
        std::istringstream in(get_string(key));
        std::string item;
        while (std::getline(in, item, ',')) {
            const std::string t = trim(item);
            if (!t.empty()) out.push_back(t);
        }
        if (out.empty()) throw ConfigError("config key " + key + ": empty list");
        return out;
    }

    std::vector<std::string> unconsumed() const {
        std::vector<std::string> out;
        for (const auto& [k, v] : values_)
            if (!consumed_.count(k)) out.push_back(k);
        return out;
    }

    void reject_unconsumed() const {
        const auto leftover = unconsumed();
        if (!leftover.empty()) throw ConfigError("unknown config key: " + leftover.front());
    }

private:
    static std::string trim(const std::string& s) {
        std::size_t b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return "";
        std::size_t e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }
    long long to_int(const std::string& key, const std::string& s) {
        try {
            std::size_t pos = 0;
            const long long v = std::stoll(s, &pos);
            if (pos != s.size()) throw std::invalid_argument(s);
            return v;
        } catch (...) {
            throw ConfigError("config key " + key + ": expected integer, got '" + s + "'");
        }
    }

    std::map<std::string, std::string> values_;
    std::set<std::string> consumed_;
};

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

struct DatasetSpec {
    std::string id;
    bool is_synth = true;
    SynthConfig synth;
    std::string path;  // when is_synth == false
};

struct ExperimentConfig {
    std::vector<DatasetSpec> datasets;
    int window_length = 10;
    std::vector<int> horizons;
    std::vector<BackboneKind> backbones;
    std::vector<Method> methods;
    int repetitions = 1;
    std::uint64_t root_seed = 0;
    double alpha = 0.002;
    int train_days = 7;
    int test_days = 3;
    double validation_fraction = 0.25;
    // Keep every n-th train/validation window when training; thins the
    // fitness evaluations without touching the test partition.
    int window_stride = 1;
    TrainConfig train;
    BpsoConfig bpso;
    std::string output_dir = "out";
};

inline std::set<int> parse_level_set(const std::vector<std::string>& items) {
    std::set<int> out;
    for (const auto& s : items) {
        int v = 0;
        try {
            v = std::stoi(s);
        } catch (...) {
            throw ConfigError("bad level '" + s + "'");
        }
        out.insert(v);
    }
    return out;
}

inline SynthConfig parse_synth_section(KeyValueConfig& kv, const std::string& prefix) {
    SynthConfig sc;
    sc.days = static_cast<int>(kv.get_int(prefix + ".days", sc.days));
    sc.events_per_day = static_cast<int>(kv.get_int(prefix + ".events_per_day", sc.events_per_day));
    if (kv.has(prefix + ".informative_levels"))
        sc.informative_levels = parse_level_set(kv.get_list(prefix + ".informative_levels"));
    sc.signal_strength = kv.get_double(prefix + ".signal_strength", sc.signal_strength);
    sc.base_price = kv.get_double(prefix + ".base_price", sc.base_price);
    sc.tick = kv.get_double(prefix + ".tick", sc.tick);
    sc.seed = kv.get_u64(prefix + ".seed", sc.seed);
    try {
        sc.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("section ") + prefix + ": " + e.what());
    }
    return sc;
}

inline ExperimentConfig parse_experiment_config(KeyValueConfig& kv) {
    ExperimentConfig cfg;
    for (const auto& id : kv.get_list("experiment.datasets")) {
        DatasetSpec spec;
        spec.id = id;
        const std::string prefix = "dataset." + id;
        const std::string kind = kv.get_string(prefix + ".kind", "synth");
        if (kind == "synth") {
            spec.is_synth = true;
            spec.synth = parse_synth_section(kv, prefix);
        } else if (kind == "file") {
            spec.is_synth = false;
            spec.path = kv.get_string(prefix + ".path");
        } else {
            throw ConfigError(prefix + ".kind must be 'synth' or 'file'");
        }
        cfg.datasets.push_back(std::move(spec));
    }

    cfg.window_length = static_cast<int>(kv.get_int("experiment.window_length", 10));
    for (const auto& h : kv.get_list("experiment.horizons")) cfg.horizons.push_back(std::stoi(h));
    for (const auto& b : kv.get_list("experiment.backbones")) cfg.backbones.push_back(parse_backbone(b));
    for (const auto& m : kv.get_list("experiment.methods")) cfg.methods.push_back(parse_method(m));
    cfg.repetitions = static_cast<int>(kv.get_int("experiment.repetitions", 1));
    cfg.root_seed = kv.get_u64("experiment.root_seed", 0);
    cfg.alpha = kv.get_double("experiment.alpha", 0.002);
    cfg.train_days = static_cast<int>(kv.get_int("experiment.train_days", 7));
    cfg.test_days = static_cast<int>(kv.get_int("experiment.test_days", 3));
    cfg.validation_fraction = kv.get_double("experiment.validation_fraction", 0.25);
    cfg.window_stride = static_cast<int>(kv.get_int("train.window_stride", 1));

    cfg.train.learning_rate = kv.get_double("train.learning_rate", 0.01);
    cfg.train.batch_size = static_cast<int>(kv.get_int("train.batch_size", 64));
    cfg.train.max_epochs = static_cast<int>(kv.get_int("train.max_epochs", 50));
    cfg.train.early_stop_patience = static_cast<int>(kv.get_int("train.patience", 5));

    cfg.bpso.swarm_size = static_cast<int>(kv.get_int("bpso.swarm_size", 10));
    cfg.bpso.iterations = static_cast<int>(kv.get_int("bpso.iterations", 30));
    cfg.bpso.c1 = kv.get_double("bpso.c1", 2.0);
    cfg.bpso.c2 = kv.get_double("bpso.c2", 2.0);
    cfg.bpso.v_max = kv.get_double("bpso.v_max", 6.0);
    cfg.bpso.w_start = kv.get_double("bpso.w_start", 0.9);
    cfg.bpso.w_end = kv.get_double("bpso.w_end", 0.4);

    cfg.output_dir = kv.get_string("output.dir", "out");
    kv.reject_unconsumed();

    if (cfg.datasets.empty()) throw ConfigError("experiment.datasets must not be empty");
    if (cfg.horizons.empty()) throw ConfigError("experiment.horizons must not be empty");
    if (cfg.backbones.empty()) throw ConfigError("experiment.backbones must not be empty");
    if (cfg.methods.empty()) throw ConfigError("experiment.methods must not be empty");
    if (cfg.repetitions < 1) throw ConfigError("experiment.repetitions must be >= 1");
    if (cfg.window_length < 1) throw ConfigError("experiment.window_length must be >= 1");
    if (!(cfg.validation_fraction > 0.0 && cfg.validation_fraction < 1.0))
        throw ConfigError("experiment.validation_fraction must be in (0,1)");
    if (cfg.window_stride < 1) throw ConfigError("train.window_stride must be >= 1");
    for (int h : cfg.horizons)
        if (h < 1) throw ConfigError("horizons must be >= 1");
    try {
        cfg.bpso.validate();
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// Seed derivation: one splitmix64 mixing chain over the cell coordinates.
// Distinct cells get distinct streams for any root seed in practice; the
// acceptance suite enumerates the grid to check for collisions.
// ---------------------------------------------------------------------------

inline std::uint64_t derive_cell_seed(std::uint64_t root, std::string_view dataset_id,
                                      BackboneKind backbone, Method method, int horizon,
                                      int repetition) {
    std::uint64_t h = mix64(root);
    h = mix64(h ^ hash_str64(dataset_id));
    h = mix64(h ^ hash_str64(to_string(backbone)));
    h = mix64(h ^ hash_str64(to_string(method)));
    h = mix64(h ^ static_cast<std::uint64_t>(horizon));
    h = mix64(h ^ static_cast<std::uint64_t>(repetition));
    return h;
}

// ---------------------------------------------------------------------------
// Cell execution
// ---------------------------------------------------------------------------

// Keeps every stride-th train/validation window; test is untouched.
inline Dataset thin_training(Dataset ds, int stride) {
    if (stride <= 1) return ds;
    auto thin = [stride](std::vector<SampleWindow>& v) {
        std::vector<SampleWindow> kept;
        for (std::size_t i = 0; i < v.size(); i += static_cast<std::size_t>(stride))
            kept.push_back(std::move(v[i]));
        v = std::move(kept);
    };
    thin(ds.train);
    thin(ds.validation);
    return ds;
}

// Production fitness: train the backbone on the masked dataset and score by
// validation macro-F1 of the best epoch. Deterministic given (mask, seed).
class TrainedFitness {
public:
    TrainedFitness(const Dataset& dataset, BackboneKind kind, TrainConfig config)
        : dataset_(&dataset), kind_(kind), config_(config) {
        if (dataset.validation.empty())
            throw std::invalid_argument("TrainedFitness: dataset needs a validation partition");
    }

    double operator()(const LevelMask& mask) const {
        const TrainResult result = train(*dataset_, mask, kind_, config_);
        return best_validation_f1(result);
    }

    static double best_validation_f1(const TrainResult& result) {
        if (result.trace.best_epoch < 0)
            throw std::invalid_argument("training produced no validation score");
        return result.trace.epochs[static_cast<std::size_t>(result.trace.best_epoch)].validation_macro_f1;
    }

private:
    const Dataset* dataset_;
    BackboneKind kind_;
    TrainConfig config_;
};

struct CellSpec {
    std::shared_ptr<const Dataset> dataset;
    std::string dataset_id;
    BackboneKind backbone = BackboneKind::TemporalBilinear;
    Method method = Method::Baseline;
    int horizon = 0;
    int repetition = 0;
    std::uint64_t seed = 0;

    std::string name() const {
        return dataset_id + "_" + to_string(backbone) + "_" + to_string(method) + "_H" +
               std::to_string(horizon) + "_r" + std::to_string(repetition);
    }
};

inline RunRecord run_cell(const CellSpec& cell, const TrainConfig& base_train,
                          const BpsoConfig& base_bpso) {
    const auto start = std::chrono::steady_clock::now();
    TrainConfig tc = base_train;
    tc.seed = cell.seed;
    const Dataset& ds = *cell.dataset;

    RunRecord rec;
    rec.dataset_id = cell.dataset_id;
    rec.backbone = cell.backbone;
    rec.method = cell.method;
    rec.horizon = cell.horizon;
    rec.seed = cell.seed;

    const TrainedFitness fitness(ds, cell.backbone, tc);
    if (cell.method == Method::Baseline) {
        const LevelMask full = LevelMask::all_ones();
        const TrainResult result = train(ds, full, cell.backbone, tc);
        rec.selected_masks.push_back({full, TrainedFitness::best_validation_f1(result)});
        rec.evaluation_mask = full;
        rec.test_f1 = evaluate(result.params, ds.test, full);
    } else if (cell.method == Method::BE) {
        const EliminationTrace trace = backward_eliminate(fitness);
        rec.selected_masks = trace.per_cardinality;
        rec.evaluation_mask = mask_from_levels({trace.final_level});
        const TrainResult result = train(ds, rec.evaluation_mask, cell.backbone, tc);
        rec.test_f1 = evaluate(result.params, ds.test, rec.evaluation_mask);
    } else {
        BpsoConfig bc = base_bpso;
        bc.seed = cell.seed;
        auto [best, state] = bpso_select(fitness, bc);
        rec.selected_masks = state.history.back().top_masks;
        rec.evaluation_mask = best;
        const TrainResult result = train(ds, best, cell.backbone, tc);
        rec.test_f1 = evaluate(result.params, ds.test, best);
    }
    rec.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rec;
}

// ---------------------------------------------------------------------------
// File helpers
// ---------------------------------------------------------------------------

inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << content;
    }
    std::filesystem::rename(tmp, path);
}

inline std::vector<RunRecord> load_records(const std::string& dir) {
    std::vector<std::filesystem::path> paths;
    if (std::filesystem::is_directory(dir))
        for (const auto& entry : std::filesystem::directory_iterator(dir))
            if (entry.is_regular_file() && entry.path().extension() == ".json" &&
                entry.path().filename().string().rfind("record_", 0) == 0)
                paths.push_back(entry.path());
    std::sort(paths.begin(), paths.end());
    std::vector<RunRecord> records;
    for (const auto& p : paths) {
        std::ifstream in(p);
        nlohmann::json j;
        in >> j;
        records.push_back(run_record_from_json(j));
    }
    if (records.empty()) throw std::runtime_error("no records found in " + dir);
    return records;
}

// ---------------------------------------------------------------------------
// Report emission
// ---------------------------------------------------------------------------

// Writes the consensus tables, their cross-configuration averages, the
// performance comparison, the two frequency figures and a plain-text
// summary. Returns the written file names.
inline std::vector<std::string> generate_reports(const std::vector<RunRecord>& records,
                                                 const std::string& out_dir) {
    if (records.empty()) throw std::runtime_error("no records to report on");
    std::filesystem::create_directories(out_dir);
    std::vector<std::string> written;
    std::vector<std::string> notes;
    const auto emit = [&](const std::string& name, const std::string& content) {
        write_file_atomic(std::filesystem::path(out_dir) / name, content);
        written.push_back(name);
    };

    bool have_be = false, have_bpso = false;
    for (const auto& r : records) {
        have_be = have_be || r.method == Method::BE;
        have_bpso = have_bpso || r.method == Method::BPSO;
    }

    if (have_be) {
        const auto t_final = appearance_percentages(records, SubsetSelector::be_cardinality(1));
        const auto t_pair = appearance_percentages(records, SubsetSelector::be_cardinality(2));
        const auto t_triple = appearance_percentages(records, SubsetSelector::be_cardinality(3));
        emit("be_final_level_freq.csv", consensus_table_csv(t_final));
        emit("be_pair_subset_freq.csv", consensus_table_csv(t_pair));
        emit("be_pair_subset_freq_avg.csv", averages_csv(average_across_configs(t_pair)));
        emit("be_subset_series.svg",
             selection_frequency_chart({t_final, t_pair, t_triple}, ChartKind::BeCardinalitySeries));
    } else {
        notes.push_back("no BE records: elimination tables skipped");
    }

    if (have_bpso) {
        const auto t_best = appearance_percentages(records, SubsetSelector::bpso_final());
        const auto t_second = appearance_percentages(records, SubsetSelector::bpso_rank(2));
        const auto t_third = appearance_percentages(records, SubsetSelector::bpso_rank(3));
        emit("bpso_final_mask_freq.csv", consensus_table_csv(t_best));
        emit("bpso_final_mask_freq_avg.csv", averages_csv(average_across_configs(t_best)));
        emit("bpso_solution_series.svg",
             selection_frequency_chart({t_best, t_second, t_third}, ChartKind::BpsoBestSeries));
    } else {
        notes.push_back("no BPSO records: swarm tables skipped");
    }

    const PerformanceSummary perf = performance_summary(records);
    emit("f1_comparison.csv", performance_csv(perf));

    std::ostringstream summary;
    summary << "levelscope experiment summary\n";
    summary << "records: " << records.size() << "\n";
    std::set<std::string> labels;
    for (const auto& r : records) labels.insert(config_label(r.dataset_id, r.backbone, r.horizon));
    summary << "configurations: " << labels.size() << "\n";
    for (const auto& l : labels) summary << "  " << l << "\n";
    summary << "baseline-minus-method mean test F1 deltas (percentage points):\n";
    for (const auto& d : perf.deltas)
        summary << "  dataset=" << d.dataset_id << " baseline-" << to_string(d.method) << " = "
                << format_percent(d.baseline_minus_method) << "\n";
    if (!perf.warnings.empty() || !notes.empty()) {
        summary << "warnings:\n";
        for (const auto& w : notes) summary << "  " << w << "\n";
        for (const auto& w : perf.warnings) summary << "  " << w << "\n";
    }
    summary << "artifacts:\n";
    for (const auto& f : written) summary << "  " << f << "\n";
    emit("summary.txt", summary.str());
    return written;
}

// ---------------------------------------------------------------------------
// Experiment runner
// ---------------------------------------------------------------------------

class CellFailure : public std::runtime_error {
public:
    CellFailure(const std::string& cell, const std::string& what)
        : std::runtime_error("cell " + cell + " failed: " + what), cell_(cell) {}
    const std::string& cell() const { return cell_; }

private:
    std::string cell_;
};

struct ExperimentResult {
    std::vector<std::string> record_files;
    std::vector<std::string> report_files;
};

// Runs the full (dataset x backbone x method x horizon x repetition) grid,
// writing one deterministically named record file per cell, then the
// reports. Cells are independent jobs; `jobs` bounds the worker count.
inline ExperimentResult run_experiment(const ExperimentConfig& config, int jobs = 1,
                                       std::ostream* log = nullptr) {
    if (jobs < 1) jobs = 1;
    std::filesystem::create_directories(config.output_dir);

    // Build one dataset per (source, horizon); cells share them read-only.
    std::vector<CellSpec> cells;
    for (const auto& spec : config.datasets) {
        std::vector<LobEvent> events =
            spec.is_synth ? generate(spec.synth) : parse_events(spec.path);
        for (int horizon : config.horizons) {
            auto ds = std::make_shared<Dataset>(thin_training(
                split_dataset(events, config.train_days, config.test_days, config.validation_fraction,
                              config.window_length, horizon, config.alpha),
                config.window_stride));
            for (BackboneKind backbone : config.backbones) {
                for (Method method : config.methods) {
                    for (int rep = 0; rep < config.repetitions; ++rep) {
                        CellSpec cell;
                        cell.dataset = ds;
                        cell.dataset_id = spec.id;
                        cell.backbone = backbone;
                        cell.method = method;
                        cell.horizon = horizon;
                        cell.repetition = rep;
                        cell.seed = derive_cell_seed(config.root_seed, spec.id, backbone, method,
                                                     horizon, rep);
                        cells.push_back(std::move(cell));
                    }
                }
            }
        }
    }

    std::vector<RunRecord> records(cells.size());
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::mutex mu;
    std::optional<CellFailure> failure;

    auto worker = [&]() {
        while (!stop.load()) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            try {
                records[i] = run_cell(cells[i], config.train, config.bpso);
                const std::string name = "record_" + cells[i].name() + ".json";
                write_file_atomic(std::filesystem::path(config.output_dir) / name,
                                  run_record_to_json(records[i]).dump(2) + "\n");
                if (log) {
                    std::lock_guard<std::mutex> lock(mu);
                    *log << name << " (" << format_percent(records[i].wall_clock_seconds) << " s)\n";
                }
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(mu);
                if (!failure) failure.emplace(cells[i].name(), e.what());
                stop.store(true);
                return;
            }
        }
    };

    std::vector<std::thread> pool;
    const int n_workers = std::min<int>(jobs, static_cast<int>(cells.size()));
    for (int t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (failure) throw *failure;

    ExperimentResult result;
    for (const auto& cell : cells) result.record_files.push_back("record_" + cell.name() + ".json");
    result.report_files = generate_reports(records, config.output_dir);
    return result;
}

}  // namespace levelscope
