#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "levelscope/masking.hpp"
#include "levelscope/predictor.hpp"
#include "levelscope/selection.hpp"

namespace levelscope {

enum class Method : int { Baseline = 0, BE = 1, BPSO = 2 };

inline const char* to_string(Method m) {
    switch (m) {
        case Method::Baseline: return "baseline";
        case Method::BE: return "be";
        default: return "bpso";
    }
}

inline Method parse_method(std::string_view s) {
    if (s == "baseline") return Method::Baseline;
    if (s == "be") return Method::BE;
    if (s == "bpso") return Method::BPSO;
    throw std::invalid_argument("unknown method: " + std::string(s));
}

// One selection/training run. For BE the selected masks are the
// per-cardinality best subsets (sizes 10 down to 1) with their validation
// fitness; for BPSO the best distinct masks found by the swarm (1 to 3);
// for Baseline the full mask. The test F1 report refers to evaluation_mask.
struct RunRecord {
    std::string dataset_id;
    BackboneKind backbone = BackboneKind::TemporalBilinear;
    Method method = Method::Baseline;
    int horizon = 0;
    std::uint64_t seed = 0;
    std::vector<RankedMask> selected_masks;
    LevelMask evaluation_mask;
    F1Report test_f1;
    // Measured runtime; deliberately not serialized so identical
    // configurations reproduce byte-identical record files.
    double wall_clock_seconds = 0.0;
};

inline nlohmann::json run_record_to_json(const RunRecord& r) {
    nlohmann::json j;
    j["dataset_id"] = r.dataset_id;
    j["backbone"] = to_string(r.backbone);
    j["method"] = to_string(r.method);
    j["horizon"] = r.horizon;
    j["seed"] = r.seed;
    nlohmann::json masks = nlohmann::json::array();
    for (const auto& rm : r.selected_masks)
        masks.push_back({{"mask", rm.mask.to_string()}, {"fitness", rm.fitness}});
    j["selected_masks"] = masks;
    j["evaluation_mask"] = r.evaluation_mask.to_string();
    nlohmann::json t;
    t["macro_f1"] = r.test_f1.macro_f1;
    t["precision"] = r.test_f1.precision;
    t["recall"] = r.test_f1.recall;
    t["f1"] = r.test_f1.f1;
    t["confusion"] = r.test_f1.confusion;
    j["test"] = t;
    return j;
}

inline RunRecord run_record_from_json(const nlohmann::json& j) {
    RunRecord r;
    r.dataset_id = j.at("dataset_id").get<std::string>();
    r.backbone = parse_backbone(j.at("backbone").get<std::string>());
    r.method = parse_method(j.at("method").get<std::string>());
    r.horizon = j.at("horizon").get<int>();
    r.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& m : j.at("selected_masks"))
        r.selected_masks.push_back(
            {LevelMask::from_string(m.at("mask").get<std::string>()), m.at("fitness").get<double>()});
    r.evaluation_mask = LevelMask::from_string(j.at("evaluation_mask").get<std::string>());
    const auto& t = j.at("test");
    r.test_f1.macro_f1 = t.at("macro_f1").get<double>();
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        r.test_f1.precision[c] = t.at("precision")[c].get<double>();
        r.test_f1.recall[c] = t.at("recall")[c].get<double>();
        r.test_f1.f1[c] = t.at("f1")[c].get<double>();
        for (std::size_t d = 0; d < kNumClasses; ++d)
            r.test_f1.confusion[c][d] = t.at("confusion")[c][d].get<std::int64_t>();
    }
    return r;
}

// ---------------------------------------------------------------------------
// Consensus statistics
// ---------------------------------------------------------------------------

// Which subset of a run the appearance statistics look at.
struct SubsetSelector {
    enum class Kind { BeCardinality, BpsoRank } kind = Kind::BpsoRank;
    int index = 1;  // BE: subset cardinality 1..3; BPSO: solution rank 1..3

    static SubsetSelector be_cardinality(int c) {
        if (c < 1 || c > 3) throw std::invalid_argument("BE cardinality selector must be 1..3");
        return {Kind::BeCardinality, c};
    }
    static SubsetSelector bpso_final() { return {Kind::BpsoRank, 1}; }
    static SubsetSelector bpso_rank(int r) {
        if (r < 1 || r > 3) throw std::invalid_argument("BPSO rank selector must be 1..3");
        return {Kind::BpsoRank, r};
    }

    Method method() const { return kind == Kind::BeCardinality ? Method::BE : Method::BPSO; }
};

inline std::string config_label(const std::string& dataset_id, BackboneKind backbone, int horizon) {
    return dataset_id + "/" + to_string(backbone) + "/H=" + std::to_string(horizon);
}

// Exact percentage cell: 100 * count / total, kept rational until formatted.
struct ConsensusCell {
    long long count = 0;
    long long total = 0;
    double percent() const { return total ? 100.0 * static_cast<double>(count) / static_cast<double>(total) : 0.0; }
};

struct ConsensusTable {
    std::vector<std::string> config_labels;
    std::array<std::vector<ConsensusCell>, kNumLevels> rows;  // rows[level-1][column]
};

// "98.33" from the exact fraction 100*count/total, half-up rounding.
inline std::string format_percent_cell(const ConsensusCell& cell) {
    if (cell.total == 0) return "0.00";
    const long long num = 10000 * cell.count;  // percent * 100
    long long v = (num + cell.total / 2) / cell.total;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%lld.%02lld", v / 100, v % 100);
    return buf;
}

inline std::string format_percent(double percent) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", percent);
    return buf;
}

namespace detail {
inline const LevelMask* selected_subset(const RunRecord& r, const SubsetSelector& sel) {
    if (sel.kind == SubsetSelector::Kind::BeCardinality) {
        for (const auto& rm : r.selected_masks)
            if (rm.mask.popcount() == sel.index) return &rm.mask;
        return nullptr;
    }
    const std::size_t rank = static_cast<std::size_t>(sel.index);
    if (r.selected_masks.size() < rank) return nullptr;
    return &r.selected_masks[rank - 1].mask;
}
}  // namespace detail

// Per-configuration percentage of runs whose designated subset contains each
// level. Runs lacking the requested subset (e.g. a BPSO run that discovered
// fewer than three distinct masks) count toward the total with no levels.
inline ConsensusTable appearance_percentages(const std::vector<RunRecord>& records,
                                             const SubsetSelector& selector) {
    std::vector<const RunRecord*> matching;
    for (const auto& r : records)
        if (r.method == selector.method()) matching.push_back(&r);
    if (matching.empty()) throw std::invalid_argument("appearance_percentages: no matching records");

    std::map<std::string, std::vector<const RunRecord*>> groups;
    for (const RunRecord* r : matching)
        groups[config_label(r->dataset_id, r->backbone, r->horizon)].push_back(r);

    ConsensusTable table;
    for (auto& [label, runs] : groups) {
        std::set<std::uint64_t> seeds;
        for (const RunRecord* r : runs)
            if (!seeds.insert(r->seed).second)
                throw std::invalid_argument("appearance_percentages: duplicate run (seed " +
                                            std::to_string(r->seed) + ") in configuration " + label);
        table.config_labels.push_back(label);
        for (int level = 1; level <= kNumLevels; ++level) {
            ConsensusCell cell;
            cell.total = static_cast<long long>(runs.size());
            for (const RunRecord* r : runs) {
                const LevelMask* m = detail::selected_subset(*r, selector);
                if (m && m->includes_level(level)) ++cell.count;
            }
            table.rows[static_cast<std::size_t>(level - 1)].push_back(cell);
        }
    }
    return table;
}

// Unweighted row means across configurations, in percent.
inline std::array<double, kNumLevels> average_across_configs(const ConsensusTable& table) {
    if (table.config_labels.empty()) throw std::invalid_argument("average_across_configs: empty table");
    std::array<double, kNumLevels> means{};
    const std::size_t n = table.config_labels.size();
    for (std::size_t level = 0; level < kNumLevels; ++level) {
        // exact when all totals agree (the usual repeated-runs case)
        bool uniform = true;
        long long total0 = table.rows[level].front().total;
        long long count_sum = 0;
        long double percent_sum = 0.0L;
        for (const auto& cell : table.rows[level]) {
            if (cell.total != total0) uniform = false;
            count_sum += cell.count;
            percent_sum += static_cast<long double>(cell.percent());
        }
        means[level] = uniform && total0 > 0
                           ? 100.0 * static_cast<double>(count_sum) /
                                 (static_cast<double>(total0) * static_cast<double>(n))
                           : static_cast<double>(percent_sum / static_cast<long double>(n));
    }
    return means;
}

inline std::string consensus_table_csv(const ConsensusTable& table) {
    std::ostringstream out;
    out << "level";
    for (const auto& label : table.config_labels) out << ',' << label;
    out << '\n';
    for (int level = 1; level <= kNumLevels; ++level) {
        out << level;
        for (const auto& cell : table.rows[static_cast<std::size_t>(level - 1)])
            out << ',' << format_percent_cell(cell);
        out << '\n';
    }
    return out.str();
}

inline std::string averages_csv(const std::array<double, kNumLevels>& means) {
    std::ostringstream out;
    for (int level = 1; level <= kNumLevels; ++level) out << (level > 1 ? "," : "") << "level_" << level;
    out << '\n';
    for (std::size_t level = 0; level < kNumLevels; ++level)
        out << (level > 0 ? "," : "") << format_percent(means[level]);
    out << '\n';
    return out.str();
}

// ---------------------------------------------------------------------------
// Performance comparison
// ---------------------------------------------------------------------------

// "65.01 ± 00.36": percents, two decimals, zero-padded to width 5.
inline std::string format_mean_std(double mean_percent, double std_percent) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%05.2f ± %05.2f", mean_percent, std_percent);
    return buf;
}

struct PerformanceGroup {
    std::string config_label;
    Method method = Method::Baseline;
    int run_count = 0;
    double mean_f1_percent = 0.0;
    double std_f1_percent = 0.0;  // sample std (n-1); 0 for a single run
};

struct PerformanceSummary {
    std::vector<PerformanceGroup> groups;  // ordered by config label, then method
    struct Delta {
        std::string dataset_id;
        Method method = Method::BE;
        double baseline_minus_method = 0.0;  // percentage points, averaged over configs
    };
    std::vector<Delta> deltas;
    std::vector<std::string> warnings;
};

// Mean and sample standard deviation of test macro-F1 (as percents) per
// (configuration, method), plus per-dataset Baseline-minus-method deltas.
inline PerformanceSummary performance_summary(const std::vector<RunRecord>& records) {
    if (records.empty()) throw std::invalid_argument("performance_summary: no records");
    std::map<std::pair<std::string, int>, std::vector<double>> by_group;  // (label, method) -> f1%
    std::set<std::string> labels;
    std::set<std::string> datasets;
    std::map<std::string, std::string> label_dataset;
    for (const auto& r : records) {
        const auto label = config_label(r.dataset_id, r.backbone, r.horizon);
        labels.insert(label);
        datasets.insert(r.dataset_id);
        label_dataset[label] = r.dataset_id;
        by_group[{label, static_cast<int>(r.method)}].push_back(r.test_f1.macro_f1 * 100.0);
    }

    PerformanceSummary summary;
    std::map<std::pair<std::string, int>, double> group_means;
    for (const auto& label : labels) {
        for (int m = 0; m < 3; ++m) {
            auto it = by_group.find({label, m});
            if (it == by_group.end()) {
                summary.warnings.push_back("missing " + std::string(to_string(static_cast<Method>(m))) +
                                           " group for " + label);
                continue;
            }
            const auto& xs = it->second;
            double mean = 0.0;
            for (double x : xs) mean += x;
            mean /= static_cast<double>(xs.size());
            double var = 0.0;
            if (xs.size() > 1) {
                for (double x : xs) var += (x - mean) * (x - mean);
                var /= static_cast<double>(xs.size() - 1);
            }
            PerformanceGroup g;
            g.config_label = label;
            g.method = static_cast<Method>(m);
            g.run_count = static_cast<int>(xs.size());
            g.mean_f1_percent = mean;
            g.std_f1_percent = std::sqrt(var);
            summary.groups.push_back(g);
            group_means[{label, m}] = mean;
        }
    }

    for (const auto& ds : datasets) {
        for (int m = 1; m < 3; ++m) {
            double delta_sum = 0.0;
            int n = 0;
            for (const auto& label : labels) {
                if (label_dataset[label] != ds) continue;
                auto base = group_means.find({label, 0});
                auto meth = group_means.find({label, m});
                if (base == group_means.end() || meth == group_means.end()) continue;
                delta_sum += base->second - meth->second;
                ++n;
            }
            if (n > 0)
                summary.deltas.push_back({ds, static_cast<Method>(m), delta_sum / static_cast<double>(n)});
        }
    }
    return summary;
}

inline std::string performance_csv(const PerformanceSummary& summary) {
    std::vector<std::string> labels;
    for (const auto& g : summary.groups)
        if (labels.empty() || labels.back() != g.config_label)
            if (std::find(labels.begin(), labels.end(), g.config_label) == labels.end())
                labels.push_back(g.config_label);
    std::sort(labels.begin(), labels.end());
    std::ostringstream out;
    out << "method";
    for (const auto& l : labels) out << ',' << l;
    out << '\n';
    for (int m = 0; m < 3; ++m) {
        bool any = false;
        for (const auto& g : summary.groups) any = any || static_cast<int>(g.method) == m;
        if (!any) continue;
        out << to_string(static_cast<Method>(m));
        for (const auto& l : labels) {
            out << ',';
            for (const auto& g : summary.groups)
                if (g.config_label == l && static_cast<int>(g.method) == m)
                    out << format_mean_std(g.mean_f1_percent, g.std_f1_percent);
        }
        out << '\n';
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Figures
// ---------------------------------------------------------------------------

enum class ChartKind { BeCardinalitySeries, BpsoBestSeries };

// Grouped bar chart of per-level percentages, one series per table (their
// cross-configuration row averages). Every bar carries data-series,
// data-level and data-value attributes with the exact value, so the figure
// can be parsed back losslessly.
inline std::string selection_frequency_chart(const std::vector<ConsensusTable>& tables, ChartKind kind) {
    if (tables.empty()) throw std::invalid_argument("selection_frequency_chart: no tables");
    static const char* kBeLabels[] = {"1-element subset", "2-element subset", "3-element subset"};
    static const char* kBpsoLabels[] = {"best solution", "second best solution", "third best solution"};
    static const char* kColors[] = {"#4878a8", "#e49444", "#6a9f58"};
    const std::size_t n_series = tables.size();

    std::vector<std::array<double, kNumLevels>> series;
    series.reserve(n_series);
    for (const auto& t : tables) series.push_back(average_across_configs(t));

    const double width = 860, height = 420;
    const double left = 60, right = 20, top = 40, bottom = 50;
    const double plot_w = width - left - right, plot_h = height - top - bottom;
    const double group_w = plot_w / kNumLevels;
    const double bar_w = group_w * 0.8 / static_cast<double>(n_series);

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    svg << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
        << (kind == ChartKind::BeCardinalitySeries ? "Level appearance frequency by subset size"
                                                   : "Level appearance frequency by solution rank")
        << "</text>\n";
    for (int tick = 0; tick <= 100; tick += 20) {
        const double y = top + plot_h * (1.0 - tick / 100.0);
        svg << "<line x1=\"" << left << "\" y1=\"" << y << "\" x2=\"" << width - right << "\" y2=\"" << y
            << "\" stroke=\"#dddddd\"/>\n";
        svg << "<text x=\"" << left - 8 << "\" y=\"" << y + 4
            << "\" text-anchor=\"end\" font-size=\"11\">" << tick << "%</text>\n";
    }
    char buf[64];
    for (std::size_t s = 0; s < n_series; ++s) {
        const char* label = kind == ChartKind::BeCardinalitySeries ? kBeLabels[std::min<std::size_t>(s, 2)]
                                                                   : kBpsoLabels[std::min<std::size_t>(s, 2)];
        for (int level = 1; level <= kNumLevels; ++level) {
            const double v = series[s][static_cast<std::size_t>(level - 1)];
            const double h = plot_h * std::clamp(v, 0.0, 100.0) / 100.0;
            const double x = left + group_w * (level - 1) + group_w * 0.1 + bar_w * static_cast<double>(s);
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            svg << "<rect x=\"" << x << "\" y=\"" << top + plot_h - h << "\" width=\"" << bar_w
                << "\" height=\"" << h << "\" fill=\"" << kColors[std::min<std::size_t>(s, 2)]
                << "\" data-series=\"" << label << "\" data-level=\"" << level << "\" data-value=\"" << buf
                << "\"/>\n";
        }
        svg << "<rect x=\"" << left + 10 + 190 * static_cast<double>(s) << "\" y=\"" << height - 18
            << "\" width=\"12\" height=\"12\" fill=\"" << kColors[std::min<std::size_t>(s, 2)] << "\"/>\n";
        svg << "<text x=\"" << left + 26 + 190 * static_cast<double>(s) << "\" y=\"" << height - 8
            << "\" font-size=\"11\">" << label << "</text>\n";
    }
    for (int level = 1; level <= kNumLevels; ++level) {
        const double x = left + group_w * (level - 0.5);
        svg << "<text x=\"" << x << "\" y=\"" << top + plot_h + 16
            << "\" text-anchor=\"middle\" font-size=\"11\">L" << level << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace levelscope
