#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "levelscope/selection.hpp"

using namespace levelscope;

namespace {

// Fitness rises as the mask approaches the target; unique maximum at target.
FitnessEvaluator hamming_fitness(const LevelMask& target) {
    return [target](const LevelMask& s) {
        int dist = 0;
        for (std::size_t j = 0; j < kNumLevels; ++j) dist += s.bits[j] != target.bits[j];
        return (10.0 - dist) / 10.0;
    };
}

FitnessEvaluator additive_fitness(const std::array<double, kNumLevels>& weights) {
    return [weights](const LevelMask& s) {
        double sum = 0.0;
        for (std::size_t j = 0; j < kNumLevels; ++j) sum += weights[j] * s.bits[j];
        return sum;
    };
}

}  // namespace

TEST(VelocityUpdate, AttractionVanishesAtConsensus) {
    Particle p;
    p.position = mask_from_levels({1, 3});
    p.personal_best = p.position;
    p.velocity = {1.0, -2.0, 0.5, 0, 0, 0, 0, 0, 0, 0};
    const auto v = velocity_update(p, p.position, 0.7, 2.0, 2.0, 0.3, 0.9, 6.0);
    for (std::size_t j = 0; j < kNumLevels; ++j) EXPECT_DOUBLE_EQ(v[j], 0.7 * p.velocity[j]);
}

TEST(VelocityUpdate, DirectArithmetic) {
    Particle p;                        // position bit j = 0
    p.personal_best = mask_from_levels({1});  // pbest - pos = 1 at j=0
    const LevelMask gbest = mask_from_levels({1});
    const auto v = velocity_update(p, gbest, 0.9, 2.0, 2.0, 0.5, 0.5, 6.0);
    EXPECT_DOUBLE_EQ(v[0], 2.0);  // 0.9*0 + 2*0.5*1 + 2*0.5*1
    EXPECT_DOUBLE_EQ(v[1], 0.0);
}

TEST(VelocityUpdate, ClampsToVmax) {
    Particle p;
    p.velocity.fill(5.0);
    p.personal_best = LevelMask::all_ones();
    const auto v = velocity_update(p, LevelMask::all_ones(), 1.0, 4.0, 4.0, 1.0, 1.0, 6.0);
    for (std::size_t j = 0; j < kNumLevels; ++j) EXPECT_DOUBLE_EQ(v[j], 6.0);  // 5+4+4=13 clamped

    p.velocity.fill(-5.0);
    p.personal_best = LevelMask{};
    const auto w = velocity_update(p, LevelMask{}, 2.0, 0.0, 0.0, 0.0, 0.0, 6.0);
    for (std::size_t j = 0; j < kNumLevels; ++j) EXPECT_DOUBLE_EQ(w[j], -6.0);
}

TEST(PositionUpdate, SigmoidThresholding) {
    std::array<double, kNumLevels> v{};
    std::array<double, kNumLevels> r3{};
    r3.fill(0.4);
    EXPECT_EQ(position_update(v, r3).bits[0], 1);  // sigmoid(0)=0.5 > 0.4
    r3.fill(0.5);
    EXPECT_EQ(position_update(v, r3).bits[0], 0);  // strict inequality at the boundary
    v.fill(6.0);
    r3.fill(0.999);
    EXPECT_EQ(position_update(v, r3).bits[0], 0);  // sigmoid(6) ~= 0.99753 < 0.999
    r3.fill(0.997);
    EXPECT_EQ(position_update(v, r3).bits[0], 1);
}

TEST(PositionUpdate, SaturatesAtLargeVelocities) {
    std::array<double, kNumLevels> v{};
    std::array<double, kNumLevels> r3{};
    v.fill(30.0);
    r3.fill(0.9999999);
    for (auto bit : position_update(v, r3).bits) EXPECT_EQ(bit, 1);
    v.fill(-30.0);
    r3.fill(1e-7);
    for (auto bit : position_update(v, r3).bits) EXPECT_EQ(bit, 0);
}

TEST(BpsoSelect, ZeroIterationsReturnsBestOfInitialSwarm) {
    const auto target = mask_from_levels({1, 2});
    const auto fitness = hamming_fitness(target);
    BpsoConfig cfg;
    cfg.swarm_size = 8;
    cfg.iterations = 0;
    cfg.seed = 99;
    const auto [best, state] = bpso_select(fitness, cfg);
    ASSERT_EQ(state.history.size(), 1u);
    double manual_best = -1.0;
    for (const auto& p : state.particles) manual_best = std::max(manual_best, fitness(p.personal_best));
    EXPECT_DOUBLE_EQ(state.global_best_fitness, manual_best);
    EXPECT_DOUBLE_EQ(fitness(best), state.global_best_fitness);
}

TEST(BpsoSelect, ConstantFitnessKeepsFirstIncumbent) {
    const FitnessEvaluator constant = [](const LevelMask&) { return 0.42; };
    BpsoConfig cfg;
    cfg.swarm_size = 6;
    cfg.iterations = 4;
    cfg.seed = 5;
    const auto [best, state] = bpso_select(constant, cfg);
    EXPECT_DOUBLE_EQ(state.global_best_fitness, 0.42);
    // ties never displace the incumbent: the best is particle 0's initial position
    Rng rng(derive_seed(5, {hash_str64("swarm"), 0, 0}));
    LevelMask first;
    for (std::size_t j = 0; j < kNumLevels; ++j) first.bits[j] = rng.uniform() < 0.5 ? 1 : 0;
    EXPECT_EQ(best, first);
}

TEST(BpsoSelect, RecoversUniqueOptimumOnMockFitness) {
    const auto target = mask_from_levels({1, 2});
    const auto fitness = hamming_fitness(target);
    // brute force confirms the unique maximum over all 1024 masks
    unsigned arg_best = 0;
    double brute_best = -1.0;
    int max_count = 0;
    for (unsigned v = 0; v < 1024; ++v) {
        const double f = fitness(LevelMask::from_uint(v));
        if (f > brute_best) {
            brute_best = f;
            arg_best = v;
            max_count = 1;
        } else if (f == brute_best) {
            ++max_count;
        }
    }
    ASSERT_EQ(max_count, 1);
    ASSERT_EQ(LevelMask::from_uint(arg_best), target);

    int recovered = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        BpsoConfig cfg;
        cfg.swarm_size = 10;
        cfg.iterations = 50;
        cfg.seed = seed;
        const auto [best, state] = bpso_select(fitness, cfg);
        if (best == target) ++recovered;
        for (std::size_t i = 1; i < state.history.size(); ++i)
            EXPECT_GE(state.history[i].global_best_fitness, state.history[i - 1].global_best_fitness);
        EXPECT_DOUBLE_EQ(state.global_best_fitness, fitness(best));
        EXPECT_LE(state.global_best_fitness, brute_best);
    }
    EXPECT_GE(recovered, 18);
}

TEST(BpsoSelect, DeterministicGivenSeed) {
    const auto fitness = hamming_fitness(mask_from_levels({3, 7}));
    BpsoConfig cfg;
    cfg.swarm_size = 7;
    cfg.iterations = 12;
    cfg.seed = 2024;
    const auto [best_a, state_a] = bpso_select(fitness, cfg);
    const auto [best_b, state_b] = bpso_select(fitness, cfg);
    EXPECT_EQ(best_a, best_b);
    ASSERT_EQ(state_a.history.size(), state_b.history.size());
    for (std::size_t i = 0; i < state_a.history.size(); ++i)
        EXPECT_EQ(state_a.history[i].global_best, state_b.history[i].global_best);
}

TEST(BpsoSelect, TracksTopThreeDistinctMasks) {
    const auto fitness = hamming_fitness(mask_from_levels({1}));
    BpsoConfig cfg;
    cfg.swarm_size = 10;
    cfg.iterations = 25;
    cfg.seed = 8;
    const auto [best, state] = bpso_select(fitness, cfg);
    (void)best;
    const auto& tops = state.history.back().top_masks;
    ASSERT_GE(tops.size(), 2u);
    ASSERT_LE(tops.size(), 3u);
    std::set<unsigned> distinct;
    for (const auto& rm : tops) {
        distinct.insert(rm.mask.to_uint());
        EXPECT_DOUBLE_EQ(rm.fitness, fitness(rm.mask));
    }
    EXPECT_EQ(distinct.size(), tops.size());
    for (std::size_t i = 1; i < tops.size(); ++i) EXPECT_GE(tops[i - 1].fitness, tops[i].fitness);
}

TEST(BpsoSelect, InvalidConfigAndEvaluatorFailure) {
    BpsoConfig bad;
    bad.swarm_size = 0;
    EXPECT_THROW(bpso_select([](const LevelMask&) { return 0.0; }, bad), std::invalid_argument);
    bad.swarm_size = 3;
    bad.v_max = 0.0;
    EXPECT_THROW(bpso_select([](const LevelMask&) { return 0.0; }, bad), std::invalid_argument);

    BpsoConfig cfg;
    cfg.swarm_size = 3;
    cfg.iterations = 1;
    const FitnessEvaluator broken = [](const LevelMask&) -> double {
        throw std::runtime_error("boom");
    };
    try {
        bpso_select(broken, cfg);
        FAIL() << "expected EvaluatorFailure";
    } catch (const EvaluatorFailure& e) {
        EXPECT_NE(std::string(e.what()).find(e.mask().to_string()), std::string::npos);
    }
}

TEST(BackwardEliminate, StructuralShapeOfTrace) {
    const auto fitness = hamming_fitness(mask_from_levels({4}));
    const EliminationTrace trace = backward_eliminate(fitness);
    EXPECT_EQ(trace.rounds.size(), 9u);
    EXPECT_GE(trace.final_level, 1);
    EXPECT_LE(trace.final_level, 10);
    ASSERT_EQ(trace.per_cardinality.size(), 10u);
    for (int c = 0; c < 10; ++c) EXPECT_EQ(trace.per_cardinality[static_cast<std::size_t>(c)].mask.popcount(), 10 - c);
    // chain under inclusion: each subset contains the next
    for (std::size_t i = 1; i < trace.per_cardinality.size(); ++i) {
        const auto& outer = trace.per_cardinality[i - 1].mask;
        const auto& inner = trace.per_cardinality[i].mask;
        EXPECT_EQ(mask_and(outer, inner), inner);
    }
    for (std::size_t i = 0; i < trace.rounds.size(); ++i) {
        EXPECT_EQ(trace.rounds[i].remaining_before.size(), 10u - i);
        EXPECT_EQ(trace.rounds[i].candidate_fitness.size(), 10u - i);
    }
}

TEST(BackwardEliminate, AdditiveDecreasingWeightsRemoveHighLevelsFirst) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        // strictly decreasing positive weights, randomized gaps
        Rng rng(seed);
        std::array<double, kNumLevels> w{};
        double value = 1.0 + rng.uniform();
        for (std::size_t j = 0; j < kNumLevels; ++j) {
            w[j] = value;
            value -= 0.01 + 0.08 * rng.uniform();
        }
        const EliminationTrace trace = backward_eliminate(additive_fitness(w));
        ASSERT_EQ(trace.rounds.size(), 9u);
        for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(trace.rounds[i].removed_level, 10 - static_cast<int>(i));
        EXPECT_EQ(trace.final_level, 1);
    }
}

TEST(BackwardEliminate, TieBreakChoosesConfiguredEnd) {
    const FitnessEvaluator constant = [](const LevelMask&) { return 0.5; };
    const EliminationTrace high = backward_eliminate(constant);
    EXPECT_EQ(high.final_level, 1);  // removes 10, 9, ..., 2
    BeConfig cfg;
    cfg.tie_break = BeTieBreak::RemoveLowerLevel;
    const EliminationTrace low = backward_eliminate(constant, cfg);
    EXPECT_EQ(low.final_level, 10);
}

TEST(BackwardEliminate, ThresholdStopIsOptional) {
    // omitting any level from the full set already scores 0.9
    const auto fitness = hamming_fitness(LevelMask::all_ones());
    BeConfig cfg;
    cfg.stop_below = 0.85;
    const EliminationTrace trace = backward_eliminate(fitness, cfg);
    EXPECT_LT(trace.rounds.size(), 9u);
    EXPECT_EQ(trace.final_level, 0);  // never reached a singleton
    EXPECT_GE(trace.per_cardinality.back().fitness, 0.85);
}

TEST(BackwardEliminate, FailureCarriesPartialTrace) {
    int calls = 0;
    const FitnessEvaluator flaky = [&calls](const LevelMask& m) -> double {
        if (++calls > 12) throw std::runtime_error("gone");
        return static_cast<double>(m.popcount()) / 10.0;
    };
    try {
        backward_eliminate(flaky);
        FAIL() << "expected EliminationFailure";
    } catch (const EliminationFailure& e) {
        EXPECT_EQ(e.partial_trace().rounds.size(), 1u);  // full eval + 10 candidates + 1 more round
        EXPECT_FALSE(e.partial_trace().per_cardinality.empty());
    }
}

TEST(SubsetOfCardinality, LooksUpBySize) {
    const auto fitness = hamming_fitness(mask_from_levels({2}));
    const EliminationTrace trace = backward_eliminate(fitness);
    EXPECT_EQ(subset_of_cardinality(trace, 10).mask, LevelMask::all_ones());
    EXPECT_EQ(subset_of_cardinality(trace, 1).mask.popcount(), 1);
    EXPECT_THROW(subset_of_cardinality(trace, 11), std::invalid_argument);
}
