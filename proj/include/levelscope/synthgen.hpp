#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <vector>

#include "levelscope/lob_data.hpp"
#include "levelscope/rng.hpp"

namespace levelscope {

// Synthetic LOB stream with controlled level informativeness. A persistent
// latent 3-state process (up/down/flat) drives the mid-price drift; volume
// imbalance at each informative level tracks the current state with a
// strength that decays with the level's rank among the informative set,
// while all other levels carry independent noise volumes. Prices beyond the
// best level sit on a fixed tick ladder around the mid, so every level sees
// the same price information and the planted signal lives in volumes only.
struct SynthConfig {
    int days = 10;
    int events_per_day = 2000;
    std::set<int> informative_levels = {1};
    double signal_strength = 0.9;  // in [0,1]
    double base_price = 100.0;
    double tick = 0.01;
    std::uint64_t seed = 0;

    void validate() const {
        if (days < 1) throw std::invalid_argument("synthgen: days must be >= 1");
        if (events_per_day < 1) throw std::invalid_argument("synthgen: events_per_day must be >= 1");
        for (int l : informative_levels)
            if (l < 1 || l > kNumLevels)
                throw std::invalid_argument("synthgen: informative level out of range 1..10");
        if (!(signal_strength >= 0.0 && signal_strength <= 1.0))
            throw std::invalid_argument("synthgen: signal_strength must be in [0,1]");
        if (!(base_price > 0.0)) throw std::invalid_argument("synthgen: base_price must be > 0");
        if (!(tick > 0.0) || tick > base_price / 100.0)
            throw std::invalid_argument("synthgen: tick must be in (0, base_price/100]");
    }
};

namespace synth_detail {
inline constexpr double kStayProb = 0.96;      // expected latent run length 25 events
inline constexpr double kMeanRevert = 0.999;   // AR(1) pull on the log mid
inline constexpr double kDriftPerEvent = 1.5e-3;
inline constexpr double kLogMidNoise = 4e-4;
inline constexpr double kSpreadJitterTicks = 20.0;  // half-spread varies in [0.5, 20.5] ticks
inline constexpr double kGapJitterTicks = 1.0;      // level gaps vary in [1, 2] ticks
inline constexpr double kBaseVolume = 100.0;
inline constexpr double kImbalanceGain = 0.8;  // volume response to imbalance
inline constexpr double kVolumeJitter = 0.15;
inline constexpr double kRankDecay = 0.6;      // strength falloff across informative ranks
}  // namespace synth_detail

inline std::vector<LobEvent> generate(const SynthConfig& config) {
    config.validate();
    using namespace synth_detail;

    // strength per level: rank i (ascending level order) gets s * decay^i
    std::array<double, kNumLevels> strength{};
    {
        int rank = 0;
        for (int l : config.informative_levels)
            strength[static_cast<std::size_t>(l - 1)] =
                config.signal_strength * std::pow(kRankDecay, rank++);
    }

    Rng rng(derive_seed(config.seed, {hash_str64("synthgen")}));
    int state = static_cast<int>(rng.below(3)) - 1;  // -1, 0, +1
    double log_mid = 0.0;

    std::vector<LobEvent> events;
    events.reserve(static_cast<std::size_t>(config.days) * static_cast<std::size_t>(config.events_per_day));
    for (int day = 0; day < config.days; ++day) {
        for (int i = 0; i < config.events_per_day; ++i) {
            if (!rng.bernoulli(kStayProb)) {
                // switch to one of the two other states
                const int shift = 1 + static_cast<int>(rng.below(2));
                state = ((state + 1 + shift) % 3) - 1;
            }
            log_mid = kMeanRevert * log_mid + state * kDriftPerEvent + kLogMidNoise * rng.normal();
            const double mid = config.base_price * std::exp(log_mid);

            LobEvent e;
            e.day_index = day;
            e.timestamp_ns = static_cast<std::int64_t>(day) * 86'400'000'000'000LL +
                             static_cast<std::int64_t>(i + 1) * 1'000'000LL;
            // jittered spread and ladder; the jitter cancels in the mid, so
            // labels stay noise-free while raw price rows do not leak the
            // drift cleanly
            const double half_spread = config.tick * (0.5 + kSpreadJitterTicks * rng.uniform());
            e.ask_price[0] = mid + half_spread;
            e.bid_price[0] = mid - half_spread;
            for (std::size_t k = 1; k < kNumLevels; ++k) {
                e.ask_price[k] = e.ask_price[k - 1] + config.tick * (1.0 + kGapJitterTicks * rng.uniform());
                e.bid_price[k] = e.bid_price[k - 1] - config.tick * (1.0 + kGapJitterTicks * rng.uniform());
            }
            for (std::size_t k = 0; k < kNumLevels; ++k) {
                const double s = strength[k];
                const double imbalance = s * state + (1.0 - s) * rng.uniform(-1.0, 1.0);
                e.bid_volume[k] = kBaseVolume * std::exp(kImbalanceGain * imbalance + kVolumeJitter * rng.normal());
                e.ask_volume[k] = kBaseVolume * std::exp(-kImbalanceGain * imbalance + kVolumeJitter * rng.normal());
            }
            events.push_back(e);
        }
    }
    return events;
}

}  // namespace levelscope
