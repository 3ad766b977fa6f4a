#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "levelscope/masking.hpp"
#include "levelscope/rng.hpp"

namespace levelscope {

// Maps a level mask to a fitness in [0,1]. The production evaluator trains
// a backbone on the masked dataset and returns validation macro-F1; tests
// plug in arbitrary deterministic functions.
using FitnessEvaluator = std::function<double(const LevelMask&)>;

// ---------------------------------------------------------------------------
// Binary particle swarm optimization over level masks
// ---------------------------------------------------------------------------

struct Particle {
    LevelMask position;
    std::array<double, kNumLevels> velocity{};
    LevelMask personal_best;
    double personal_best_fitness = -1.0;
};

struct RankedMask {
    LevelMask mask;
    double fitness = 0.0;
};

struct SwarmIterationRecord {
    int iteration = 0;  // 0 is the initial evaluation, movement starts at 1
    LevelMask global_best;
    double global_best_fitness = 0.0;
    std::vector<RankedMask> top_masks;  // best distinct masks so far, at most 3
};

struct SwarmState {
    std::vector<Particle> particles;
    LevelMask global_best;
    double global_best_fitness = -1.0;
    int iteration = 0;
    double inertia = 0.0;
    std::vector<SwarmIterationRecord> history;
};

struct BpsoConfig {
    int swarm_size = 10;
    int iterations = 30;
    double c1 = 2.0;
    double c2 = 2.0;
    double v_max = 6.0;
    double w_start = 0.9;
    double w_end = 0.4;
    std::uint64_t seed = 0;

    void validate() const {
        if (swarm_size < 1) throw std::invalid_argument("bpso: swarm_size must be >= 1");
        if (iterations < 0) throw std::invalid_argument("bpso: iterations must be >= 0");
        if (!(v_max > 0.0)) throw std::invalid_argument("bpso: v_max must be > 0");
        if (w_start < w_end) throw std::invalid_argument("bpso: w_start must be >= w_end");
    }
};

// v' = w*v + c1*r1*(pbest - pos) + c2*r2*(gbest - pos), clamped to
// [-v_max, v_max]. r1 and r2 are scalars shared across the 10 components.
inline std::array<double, kNumLevels> velocity_update(const Particle& p, const LevelMask& global_best,
                                                      double w, double c1, double c2, double r1,
                                                      double r2, double v_max) {
    std::array<double, kNumLevels> v{};
    for (std::size_t j = 0; j < kNumLevels; ++j) {
        const double pos = p.position.bits[j];
        const double vj = w * p.velocity[j] + c1 * r1 * (p.personal_best.bits[j] - pos) +
                          c2 * r2 * (global_best.bits[j] - pos);
        v[j] = std::clamp(vj, -v_max, v_max);
    }
    return v;
}

// bit j = 1 iff r3[j] < sigmoid(v[j]), strict inequality.
inline LevelMask position_update(const std::array<double, kNumLevels>& v_new,
                                 const std::array<double, kNumLevels>& r3) {
    LevelMask m;
    for (std::size_t j = 0; j < kNumLevels; ++j) {
        const double sig = 1.0 / (1.0 + std::exp(-v_new[j]));
        m.bits[j] = r3[j] < sig ? 1 : 0;
    }
    return m;
}

class EvaluatorFailure : public std::runtime_error {
public:
    EvaluatorFailure(const LevelMask& mask, const std::string& what)
        : std::runtime_error("fitness evaluation failed for mask " + mask.to_string() + ": " + what),
          mask_(mask) {}
    const LevelMask& mask() const { return mask_; }

private:
    LevelMask mask_;
};

namespace detail {

inline double checked_fitness(const FitnessEvaluator& evaluator, const LevelMask& mask) {
    try {
        return evaluator(mask);
    } catch (const std::exception& e) {
        throw EvaluatorFailure(mask, e.what());
    }
}

// Best distinct masks seen so far, ranked by fitness desc, first-discovered
// first among equals.
class TopMasks {
public:
    void offer(const LevelMask& mask, double fitness) {
        auto it = best_.find(mask.to_uint());
        if (it == best_.end()) {
            order_.push_back(mask);
            best_[mask.to_uint()] = fitness;
        } else if (fitness > it->second) {
            it->second = fitness;
        }
    }

    std::vector<RankedMask> top(std::size_t n) const {
        std::vector<RankedMask> all;
        all.reserve(order_.size());
        for (const auto& m : order_) all.push_back({m, best_.at(m.to_uint())});
        std::stable_sort(all.begin(), all.end(),
                         [](const RankedMask& a, const RankedMask& b) { return a.fitness > b.fitness; });
        if (all.size() > n) all.resize(n);
        return all;
    }

private:
    std::map<unsigned, double> best_;
    std::vector<LevelMask> order_;  // discovery order for deterministic ties
};

}  // namespace detail

// Runs BPSO and returns the best mask found plus the full swarm history.
// The random stream of particle k at iteration i is derived from
// (seed, i, k), so results do not depend on evaluation order.
inline std::pair<LevelMask, SwarmState> bpso_select(const FitnessEvaluator& evaluator,
                                                    const BpsoConfig& config) {
    config.validate();
    const std::size_t k_particles = static_cast<std::size_t>(config.swarm_size);
    SwarmState state;
    state.particles.resize(k_particles);
    detail::TopMasks tops;

    // initial swarm: uniform random bits, velocities uniform in [-v_max, v_max]
    for (std::size_t k = 0; k < k_particles; ++k) {
        Rng rng(derive_seed(config.seed, {hash_str64("swarm"), 0, static_cast<std::uint64_t>(k)}));
        Particle& p = state.particles[k];
        for (std::size_t j = 0; j < kNumLevels; ++j) p.position.bits[j] = rng.uniform() < 0.5 ? 1 : 0;
        for (std::size_t j = 0; j < kNumLevels; ++j) p.velocity[j] = rng.uniform(-config.v_max, config.v_max);
    }
    for (std::size_t k = 0; k < k_particles; ++k) {
        Particle& p = state.particles[k];
        const double f = detail::checked_fitness(evaluator, p.position);
        p.personal_best = p.position;
        p.personal_best_fitness = f;
        tops.offer(p.position, f);
        if (f > state.global_best_fitness) {
            state.global_best_fitness = f;
            state.global_best = p.position;
        }
    }
    state.inertia = config.w_start;
    state.history.push_back({0, state.global_best, state.global_best_fitness, tops.top(3)});

    for (int iter = 1; iter <= config.iterations; ++iter) {
        const double w =
            config.iterations <= 1
                ? config.w_start
                : config.w_start + (config.w_end - config.w_start) *
                                       (static_cast<double>(iter - 1) / static_cast<double>(config.iterations - 1));
        // move all particles against the previous iteration's bests
        std::vector<double> fitness(k_particles);
        for (std::size_t k = 0; k < k_particles; ++k) {
            Rng rng(derive_seed(config.seed, {hash_str64("swarm"), static_cast<std::uint64_t>(iter),
                                              static_cast<std::uint64_t>(k)}));
            Particle& p = state.particles[k];
            const double r1 = rng.uniform();
            const double r2 = rng.uniform();
            p.velocity = velocity_update(p, state.global_best, w, config.c1, config.c2, r1, r2, config.v_max);
            std::array<double, kNumLevels> r3{};
            for (std::size_t j = 0; j < kNumLevels; ++j) r3[j] = rng.uniform();
            p.position = position_update(p.velocity, r3);
        }
        for (std::size_t k = 0; k < k_particles; ++k)
            fitness[k] = detail::checked_fitness(evaluator, state.particles[k].position);
        // best-update reduction in particle-index order, strict improvement only
        for (std::size_t k = 0; k < k_particles; ++k) {
            Particle& p = state.particles[k];
            tops.offer(p.position, fitness[k]);
            if (fitness[k] > p.personal_best_fitness) {
                p.personal_best_fitness = fitness[k];
                p.personal_best = p.position;
            }
            if (fitness[k] > state.global_best_fitness) {
                state.global_best_fitness = fitness[k];
                state.global_best = p.position;
            }
        }
        state.iteration = iter;
        state.inertia = w;
        state.history.push_back({iter, state.global_best, state.global_best_fitness, tops.top(3)});
    }
    return {state.global_best, std::move(state)};
}

// ---------------------------------------------------------------------------
// Backward elimination over levels
// ---------------------------------------------------------------------------

enum class BeTieBreak { RemoveHigherLevel, RemoveLowerLevel };

struct BeConfig {
    BeTieBreak tie_break = BeTieBreak::RemoveHigherLevel;
    // When set, stop eliminating once the best candidate fitness of a round
    // falls below this threshold. Off by default: run down to one level.
    std::optional<double> stop_below;
};

struct EliminationRound {
    std::vector<int> remaining_before;                   // levels, ascending
    std::vector<std::pair<int, double>> candidate_fitness;  // (omitted level, fitness)
    int removed_level = 0;
    double fitness_after = 0.0;
};

struct EliminationTrace {
    double full_mask_fitness = 0.0;
    std::vector<EliminationRound> rounds;
    int final_level = 0;  // meaningful when the run reaches a single level
    // Best subset per cardinality, from 10 down to the last size reached.
    std::vector<RankedMask> per_cardinality;
};

// Evaluator failure during elimination; carries the rounds completed so far.
class EliminationFailure : public std::runtime_error {
public:
    EliminationFailure(const EvaluatorFailure& cause, EliminationTrace partial)
        : std::runtime_error(cause.what()), mask_(cause.mask()), partial_(std::move(partial)) {}
    const LevelMask& mask() const { return mask_; }
    const EliminationTrace& partial_trace() const { return partial_; }

private:
    LevelMask mask_;
    EliminationTrace partial_;
};

// Starts from all ten levels; each round trains one candidate per remaining
// level with that level omitted and removes the level whose omission yields
// the highest fitness. Ties go to the higher-numbered level by default.
inline EliminationTrace backward_eliminate(const FitnessEvaluator& evaluator,
                                           const BeConfig& config = {}) {
    std::vector<int> remaining;
    for (int l = 1; l <= kNumLevels; ++l) remaining.push_back(l);

    EliminationTrace trace;
    const LevelMask full = LevelMask::all_ones();
    try {
        trace.full_mask_fitness = detail::checked_fitness(evaluator, full);
    } catch (const EvaluatorFailure& e) {
        throw EliminationFailure(e, std::move(trace));
    }
    trace.per_cardinality.push_back({full, trace.full_mask_fitness});

    while (remaining.size() > 1) {
        EliminationRound round;
        round.remaining_before = remaining;
        int best_level = 0;
        double best_fitness = -std::numeric_limits<double>::infinity();
        for (int candidate : remaining) {
            std::set<int> kept(remaining.begin(), remaining.end());
            kept.erase(candidate);
            double f = 0.0;
            try {
                f = detail::checked_fitness(evaluator, mask_from_levels(kept));
            } catch (const EvaluatorFailure& e) {
                throw EliminationFailure(e, std::move(trace));
            }
            round.candidate_fitness.emplace_back(candidate, f);
            const bool better =
                f > best_fitness ||
                (f == best_fitness && (config.tie_break == BeTieBreak::RemoveHigherLevel
                                           ? candidate > best_level
                                           : candidate < best_level));
            if (better) {
                best_fitness = f;
                best_level = candidate;
            }
        }
        if (config.stop_below && best_fitness < *config.stop_below) break;
        round.removed_level = best_level;
        round.fitness_after = best_fitness;
        remaining.erase(std::find(remaining.begin(), remaining.end(), best_level));
        trace.rounds.push_back(round);
        trace.per_cardinality.push_back(
            {mask_from_levels(std::set<int>(remaining.begin(), remaining.end())), best_fitness});
    }
    if (remaining.size() == 1) trace.final_level = remaining.front();
    return trace;
}

// Subset of a given cardinality from a finished trace (10 down to 1).
inline const RankedMask& subset_of_cardinality(const EliminationTrace& trace, int cardinality) {
    for (const auto& rm : trace.per_cardinality)
        if (rm.mask.popcount() == cardinality) return rm;
    throw std::invalid_argument("trace has no subset of cardinality " + std::to_string(cardinality));
}

}  // namespace levelscope
