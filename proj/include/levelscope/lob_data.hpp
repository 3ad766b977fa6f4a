#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "levelscope/masking.hpp"
#include "levelscope/matrix.hpp"

namespace levelscope {

class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class ValidationError : public std::runtime_error {
public:
    ValidationError(std::size_t line, const std::string& what)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

// One time-stamped ten-level book snapshot. Arrays are 0-based; index k-1
// holds book level k.
struct LobEvent {
    std::int64_t timestamp_ns = 0;
    int day_index = 0;
    std::array<double, kNumLevels> ask_price{};
    std::array<double, kNumLevels> ask_volume{};
    std::array<double, kNumLevels> bid_price{};
    std::array<double, kNumLevels> bid_volume{};

    double mid() const { return 0.5 * (ask_price[0] + bid_price[0]); }

    // Feature value for input row r (0-based, 0..39): per level, rows are
    // ask price, ask volume, bid price, bid volume, level 1 first.
    double feature(std::size_t r) const {
        const std::size_t k = r / kRowsPerLevel;
        switch (r % kRowsPerLevel) {
            case 0: return ask_price[k];
            case 1: return ask_volume[k];
            case 2: return bid_price[k];
            default: return bid_volume[k];
        }
    }
};

enum class MovementLabel : int { Up = 0, Down = 1, Stationary = 2 };

inline constexpr int kNumClasses = 3;

inline const char* to_string(MovementLabel l) {
    switch (l) {
        case MovementLabel::Up: return "up";
        case MovementLabel::Down: return "down";
        default: return "stationary";
    }
}

struct SampleWindow {
    Matrix matrix;              // 40 x T, columns oldest to newest
    MovementLabel label = MovementLabel::Stationary;
    int origin_time_index = 0;  // in-day index of the newest column
    int day_index = 0;
};

struct NormalizationStats {
    std::array<double, kInputRows> mean{};
    std::array<double, kInputRows> stddev{};
};

struct Dataset {
    std::vector<SampleWindow> train;
    std::vector<SampleWindow> validation;
    std::vector<SampleWindow> test;
    int horizon = 0;
    int window_length = 0;
    NormalizationStats normalization_stats;
};

// ---------------------------------------------------------------------------
// Event file format: comma-separated, header line required, 42 columns:
// date (YYYY-MM-DD), timestamp_ns, then ask_price_k, ask_volume_k,
// bid_price_k, bid_volume_k for k = 1..10.
// ---------------------------------------------------------------------------

inline std::string event_file_header() {
    std::string h = "date,timestamp_ns";
    for (int k = 1; k <= kNumLevels; ++k) {
        h += ",ask_price_" + std::to_string(k);
        h += ",ask_volume_" + std::to_string(k);
        h += ",bid_price_" + std::to_string(k);
        h += ",bid_volume_" + std::to_string(k);
    }
    return h;
}

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

inline double parse_double(std::string_view s, std::size_t line_no, const char* col) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw ParseError(line_no, std::string("non-numeric value in column ") + col);
    return v;
}

inline std::int64_t parse_int64(std::string_view s, std::size_t line_no, const char* col) {
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw ParseError(line_no, std::string("non-integer value in column ") + col);
    return v;
}

struct ParsedRow {
    std::string date;
    LobEvent event;
};

inline ParsedRow parse_event_row(std::string_view line, std::size_t line_no) {
    auto fields = split_csv(line);
    if (fields.size() != 42)
        throw ParseError(line_no, "expected 42 columns, got " + std::to_string(fields.size()));
    ParsedRow row;
    row.date = std::string(fields[0]);
    if (row.date.size() != 10 || row.date[4] != '-' || row.date[7] != '-')
        throw ParseError(line_no, "date must be YYYY-MM-DD");
    row.event.timestamp_ns = parse_int64(fields[1], line_no, "timestamp_ns");
    std::size_t f = 2;
    for (std::size_t k = 0; k < kNumLevels; ++k) {
        row.event.ask_price[k] = parse_double(fields[f++], line_no, "ask_price");
        row.event.ask_volume[k] = parse_double(fields[f++], line_no, "ask_volume");
        row.event.bid_price[k] = parse_double(fields[f++], line_no, "bid_price");
        row.event.bid_volume[k] = parse_double(fields[f++], line_no, "bid_volume");
    }
    return row;
}

// Book-shape violations for a single event, empty when well formed.
inline std::vector<std::string> event_violations(const LobEvent& e) {
    std::vector<std::string> out;
    if (!(e.ask_price[0] > e.bid_price[0])) out.push_back("non-positive spread at level 1");
    for (std::size_t k = 1; k < kNumLevels; ++k) {
        if (!(e.ask_price[k] > e.ask_price[k - 1]))
            out.push_back("ask prices not strictly increasing at level " + std::to_string(k + 1));
        if (!(e.bid_price[k] < e.bid_price[k - 1]))
            out.push_back("bid prices not strictly decreasing at level " + std::to_string(k + 1));
    }
    for (std::size_t k = 0; k < kNumLevels; ++k) {
        if (!(e.ask_volume[k] > 0.0))
            out.push_back("non-positive ask volume at level " + std::to_string(k + 1));
        if (!(e.bid_volume[k] > 0.0))
            out.push_back("non-positive bid volume at level " + std::to_string(k + 1));
    }
    return out;
}

}  // namespace detail

// Parses an event file, assigning day_index in order of first appearance of
// each date. Throws ParseError / ValidationError with the offending line on
// the first defect found.
inline std::vector<LobEvent> parse_events(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError(1, "missing header line");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != event_file_header()) throw ParseError(1, "unexpected header line");

    std::vector<LobEvent> events;
    std::string current_date;
    std::vector<std::string> seen_dates;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto row = detail::parse_event_row(line, line_no);
        auto violations = detail::event_violations(row.event);
        if (!violations.empty()) throw ValidationError(line_no, violations.front());

        if (row.date != current_date) {
            for (const auto& d : seen_dates)
                if (d == row.date)
                    throw ValidationError(line_no, "date " + row.date + " reappears after a later date");
            seen_dates.push_back(row.date);
            current_date = row.date;
        }
        row.event.day_index = static_cast<int>(seen_dates.size()) - 1;
        if (!events.empty() && events.back().day_index == row.event.day_index &&
            row.event.timestamp_ns < events.back().timestamp_ns)
            throw ValidationError(line_no, "timestamps decrease within day " + current_date);
        events.push_back(row.event);
    }
    return events;
}

inline std::vector<LobEvent> parse_events(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open event file: " + path);
    return parse_events(in);
}

// Civil-date helpers for emitting synthetic dates (days since 1970-01-01).
namespace detail {
inline std::string civil_date_string(std::int64_t days_since_epoch) {
    std::int64_t z = days_since_epoch + 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const std::int64_t doe = z - era * 146097;
    const std::int64_t yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t y = yoe + era * 400;
    const std::int64_t doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const std::int64_t mp = (5 * doy + 2) / 153;
    const std::int64_t d = doy - (153 * mp + 2) / 5 + 1;
    const std::int64_t m = mp < 10 ? mp + 3 : mp - 9;
    const std::int64_t year = y + (m <= 2);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04lld-%02lld-%02lld", static_cast<long long>(year),
                  static_cast<long long>(m), static_cast<long long>(d));
    return std::string(buf);
}
}  // namespace detail

// Writes events in the documented file format. Dates are synthesized from
// day_index relative to a fixed base date.
inline void write_events(std::ostream& out, const std::vector<LobEvent>& events,
                         std::int64_t base_day = 19723 /* 2024-01-01 */) {
    out << event_file_header() << '\n';
    char buf[64];
    for (const auto& e : events) {
        out << detail::civil_date_string(base_day + e.day_index) << ',' << e.timestamp_ns;
        for (std::size_t k = 0; k < kNumLevels; ++k) {
            std::snprintf(buf, sizeof(buf), ",%.6f,%.6f,%.6f,%.6f", e.ask_price[k], e.ask_volume[k],
                          e.bid_price[k], e.bid_volume[k]);
            out << buf;
        }
        out << '\n';
    }
}

inline void write_events(const std::string& path, const std::vector<LobEvent>& events) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open output file: " + path);
    write_events(out, events);
}

// Full-file scan for the validate-data command: collects every violation
// instead of stopping at the first.
struct FileValidationReport {
    std::size_t event_count = 0;
    int day_count = 0;
    std::vector<std::string> violations;  // "line N: message"
};

inline FileValidationReport validate_events_file(std::istream& in, std::size_t max_violations = 100) {
    FileValidationReport rep;
    std::string line;
    auto add = [&](std::size_t line_no, const std::string& msg) {
        if (rep.violations.size() < max_violations)
            rep.violations.push_back("line " + std::to_string(line_no) + ": " + msg);
    };
    if (!std::getline(in, line)) {
        add(1, "missing header line");
        return rep;
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != event_file_header()) add(1, "unexpected header line");

    std::string current_date;
    std::vector<std::string> seen_dates;
    std::int64_t prev_ts = 0;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        try {
            auto row = detail::parse_event_row(line, line_no);
            for (const auto& v : detail::event_violations(row.event)) add(line_no, v);
            if (row.date != current_date) {
                for (const auto& d : seen_dates)
                    if (d == row.date) add(line_no, "date " + row.date + " reappears after a later date");
                seen_dates.push_back(row.date);
                current_date = row.date;
                prev_ts = row.event.timestamp_ns;
            } else {
                if (row.event.timestamp_ns < prev_ts) add(line_no, "timestamps decrease within day");
                prev_ts = row.event.timestamp_ns;
            }
            ++rep.event_count;
        } catch (const ParseError& e) {
            add(line_no, e.what());
        }
    }
    rep.day_count = static_cast<int>(seen_dates.size());
    return rep;
}

inline FileValidationReport validate_events_file(const std::string& path, std::size_t max_violations = 100) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open event file: " + path);
    return validate_events_file(in, max_violations);
}

// ---------------------------------------------------------------------------
// Windowing and labels
// ---------------------------------------------------------------------------

// Three-class label from the smoothed future mid-price: mean of the next H
// mids relative to the current one, against threshold alpha.
inline MovementLabel label_midprice(std::span<const LobEvent> day_events, int t, int horizon, double alpha) {
    if (horizon < 1) throw std::invalid_argument("label_midprice: H must be >= 1");
    if (alpha < 0.0) throw std::invalid_argument("label_midprice: alpha must be >= 0");
    if (t < 0 || static_cast<std::size_t>(t) + static_cast<std::size_t>(horizon) >= day_events.size())
        throw std::out_of_range("label_midprice: fewer than H future events in day");
    double sum = 0.0;
    for (int u = 1; u <= horizon; ++u) sum += day_events[static_cast<std::size_t>(t + u)].mid();
    const double future_mean = sum / horizon;
    const double rel = future_mean / day_events[static_cast<std::size_t>(t)].mid() - 1.0;
    if (rel > alpha) return MovementLabel::Up;
    if (rel < -alpha) return MovementLabel::Down;
    return MovementLabel::Stationary;
}

namespace detail {
// Contiguous [begin, end) ranges of equal day_index.
inline std::vector<std::pair<std::size_t, std::size_t>> day_ranges(const std::vector<LobEvent>& events) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    std::size_t b = 0;
    for (std::size_t i = 1; i <= events.size(); ++i) {
        if (i == events.size() || events[i].day_index != events[b].day_index) {
            out.emplace_back(b, i);
            b = i;
        }
    }
    return out;
}
}  // namespace detail

// Sliding windows of T consecutive events with an H-step-ahead label.
// Windows and labels never cross day boundaries; short days contribute none.
inline std::vector<SampleWindow> build_windows(const std::vector<LobEvent>& events, int window_length,
                                               int horizon, double alpha) {
    if (window_length < 1) throw std::invalid_argument("build_windows: T must be >= 1");
    if (horizon < 1) throw std::invalid_argument("build_windows: H must be >= 1");
    if (alpha < 0.0) throw std::invalid_argument("build_windows: alpha must be >= 0");
    std::vector<SampleWindow> windows;
    for (auto [b, e] : detail::day_ranges(events)) {
        const std::size_t n = e - b;
        if (n < static_cast<std::size_t>(window_length) + static_cast<std::size_t>(horizon)) continue;
        std::span<const LobEvent> day(events.data() + b, n);
        for (int t = window_length - 1; t + horizon < static_cast<int>(n); ++t) {
            SampleWindow w;
            w.matrix = Matrix(kInputRows, static_cast<std::size_t>(window_length));
            for (int j = 0; j < window_length; ++j) {
                const LobEvent& ev = day[static_cast<std::size_t>(t - window_length + 1 + j)];
                for (std::size_t r = 0; r < kInputRows; ++r)
                    w.matrix(r, static_cast<std::size_t>(j)) = ev.feature(r);
            }
            w.label = label_midprice(day, t, horizon, alpha);
            w.origin_time_index = t;
            w.day_index = events[b].day_index;
            windows.push_back(std::move(w));
        }
    }
    return windows;
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

// Per-row mean and population standard deviation over all windows and
// columns. Rows with zero spread get stddev 1 so normalization maps them to
// a constant 0.
inline NormalizationStats compute_stats(const std::vector<SampleWindow>& train_windows) {
    if (train_windows.empty()) throw std::invalid_argument("compute_stats: empty training set");
    NormalizationStats stats;
    const std::size_t cols = train_windows.front().matrix.cols();
    const double n = static_cast<double>(train_windows.size() * cols);
    for (std::size_t r = 0; r < kInputRows; ++r) {
        double sum = 0.0;
        for (const auto& w : train_windows) {
            const double* row = w.matrix.row(r);
            for (std::size_t j = 0; j < cols; ++j) sum += row[j];
        }
        const double mean = sum / n;
        double ss = 0.0;
        for (const auto& w : train_windows) {
            const double* row = w.matrix.row(r);
            for (std::size_t j = 0; j < cols; ++j) {
                const double d = row[j] - mean;
                ss += d * d;
            }
        }
        double sd = std::sqrt(ss / n);
        if (sd < 1e-12) sd = 1.0;  // constant-row convention
        stats.mean[r] = mean;
        stats.stddev[r] = sd;
    }
    return stats;
}

inline std::vector<SampleWindow> normalize(const std::vector<SampleWindow>& windows,
                                           const NormalizationStats& stats) {
    for (double sd : stats.stddev)
        if (!(sd > 0.0)) throw std::invalid_argument("normalize: stddev must be > 0");
    std::vector<SampleWindow> out = windows;
    for (auto& w : out) {
        for (std::size_t r = 0; r < kInputRows; ++r) {
            double* row = w.matrix.row(r);
            const double m = stats.mean[r], inv = 1.0 / stats.stddev[r];
            for (std::size_t j = 0; j < w.matrix.cols(); ++j) row[j] = (row[j] - m) * inv;
        }
    }
    return out;
}

inline std::vector<SampleWindow> denormalize(const std::vector<SampleWindow>& windows,
                                             const NormalizationStats& stats) {
    std::vector<SampleWindow> out = windows;
    for (auto& w : out) {
        for (std::size_t r = 0; r < kInputRows; ++r) {
            double* row = w.matrix.row(r);
            const double m = stats.mean[r], sd = stats.stddev[r];
            for (std::size_t j = 0; j < w.matrix.cols(); ++j) row[j] = row[j] * sd + m;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Train / validation / test split
// ---------------------------------------------------------------------------

// First train_days days feed train+validation (validation is the
// chronological tail fraction of the train-day windows), last test_days days
// feed the test partition. Stats come from the train partition only and are
// applied to all three partitions.
inline Dataset split_dataset(const std::vector<LobEvent>& events, int train_days, int test_days,
                             double validation_fraction, int window_length, int horizon, double alpha) {
    if (train_days < 1 || test_days < 0) throw std::invalid_argument("split_dataset: bad day counts");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
        throw std::invalid_argument("split_dataset: validation_fraction must be in [0,1)");
    int day_count = 0;
    for (const auto& e : events) day_count = std::max(day_count, e.day_index + 1);
    if (day_count < train_days + test_days)
        throw std::invalid_argument("split_dataset: need at least " + std::to_string(train_days + test_days) +
                                    " distinct days, got " + std::to_string(day_count));

    std::vector<LobEvent> train_events, test_events;
    const int first_test_day = day_count - test_days;
    for (const auto& e : events) {
        if (e.day_index < train_days) train_events.push_back(e);
        else if (e.day_index >= first_test_day) test_events.push_back(e);
    }

    Dataset ds;
    ds.horizon = horizon;
    ds.window_length = window_length;
    auto train_all = build_windows(train_events, window_length, horizon, alpha);
    const std::size_t val_count =
        static_cast<std::size_t>(validation_fraction * static_cast<double>(train_all.size()));
    const std::size_t train_count = train_all.size() - val_count;
    std::vector<SampleWindow> train_part(train_all.begin(), train_all.begin() + static_cast<std::ptrdiff_t>(train_count));
    std::vector<SampleWindow> val_part(train_all.begin() + static_cast<std::ptrdiff_t>(train_count), train_all.end());
    auto test_part = build_windows(test_events, window_length, horizon, alpha);

    ds.normalization_stats = compute_stats(train_part);
    ds.train = normalize(train_part, ds.normalization_stats);
    ds.validation = normalize(val_part, ds.normalization_stats);
    ds.test = normalize(test_part, ds.normalization_stats);
    return ds;
}

}  // namespace levelscope
