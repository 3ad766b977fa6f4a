#include <gtest/gtest.h>

#include "levelscope/masking.hpp"
#include "levelscope/rng.hpp"

using namespace levelscope;

namespace {

Matrix random_input(Rng& rng, int t_cols) {
    Matrix x(kInputRows, static_cast<std::size_t>(t_cols));
    for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-5.0, 5.0);
    return x;
}

}  // namespace

TEST(LevelMask, EncodingRoundTrip) {
    EXPECT_EQ(mask_from_levels({}).to_string(), "0000000000");
    EXPECT_EQ(mask_from_levels({1, 2, 3}).to_string(), "1110000000");
    EXPECT_EQ(mask_from_levels({10}).to_string(), "0000000001");
    for (unsigned v = 0; v < 1024; ++v) {
        const LevelMask m = LevelMask::from_uint(v);
        EXPECT_EQ(LevelMask::from_string(m.to_string()), m);
        EXPECT_EQ(m.to_uint(), v);
    }
    EXPECT_THROW(LevelMask::from_string("111"), std::invalid_argument);
    EXPECT_THROW(LevelMask::from_string("11100000x0"), std::invalid_argument);
    EXPECT_THROW(mask_from_levels({0}), std::invalid_argument);
    EXPECT_THROW(mask_from_levels({11}), std::invalid_argument);
}

TEST(MaskMatrix, AllOnesMask) {
    const Matrix m = mask_matrix(LevelMask::all_ones(), 7);
    ASSERT_EQ(m.rows(), 40u);
    ASSERT_EQ(m.cols(), 7u);
    for (std::size_t i = 0; i < m.size(); ++i) EXPECT_EQ(m.data()[i], 1.0);
}

TEST(MaskMatrix, SingleLevelRowBlocks) {
    // level 1 keeps rows 1-4 (1-based), level 3 keeps rows 9-12
    const Matrix m1 = mask_matrix(mask_from_levels({1}), 2);
    for (std::size_t r = 0; r < 40; ++r)
        for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(m1(r, j), r < 4 ? 1.0 : 0.0);

    const Matrix m3 = mask_matrix(mask_from_levels({3}), 5);
    for (std::size_t r = 0; r < 40; ++r)
        for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(m3(r, j), (r >= 8 && r < 12) ? 1.0 : 0.0);
}

TEST(MaskMatrix, RejectsBadWidth) {
    EXPECT_THROW(mask_matrix(LevelMask::all_ones(), 0), std::invalid_argument);
    EXPECT_THROW(mask_matrix_oracle(LevelMask::all_ones(), -1), std::invalid_argument);
}

TEST(MaskMatrix, ProductFormMatchesDirectFormExhaustively) {
    for (int t : {1, 3, 10}) {
        for (unsigned v = 0; v < 1024; ++v) {
            const LevelMask s = LevelMask::from_uint(v);
            const Matrix direct = mask_matrix(s, t);
            const Matrix product = mask_matrix_oracle(s, t);
            ASSERT_TRUE(direct == product) << "mask " << s.to_string() << " T=" << t;
        }
    }
}

TEST(MaskMatrix, ZeroMaskAnnihilates) {
    const Matrix m = mask_matrix_oracle(LevelMask{}, 4);
    for (std::size_t i = 0; i < m.size(); ++i) EXPECT_EQ(m.data()[i], 0.0);
}

TEST(ApplyMask, IdentityAndAnnihilation) {
    Rng rng(7);
    const Matrix x = random_input(rng, 6);
    EXPECT_TRUE(apply_mask(x, mask_matrix(LevelMask::all_ones(), 6)) == x);
    const Matrix zeroed = apply_mask(x, mask_matrix(LevelMask{}, 6));
    for (std::size_t i = 0; i < zeroed.size(); ++i) EXPECT_EQ(zeroed.data()[i], 0.0);
}

TEST(ApplyMask, ExcludedLevelRowsAreExactlyZero) {
    // rows 5-8 (1-based) belong to level 2
    Matrix x(kInputRows, 2, 3.5);
    x(4, 0) = 1.0;
    x(4, 1) = 2.0;
    LevelMask s = LevelMask::all_ones();
    s.bits[1] = 0;
    const Matrix out = apply_mask(x, mask_matrix(s, 2));
    for (std::size_t r = 0; r < 40; ++r) {
        for (std::size_t j = 0; j < 2; ++j) {
            if (r >= 4 && r < 8) EXPECT_EQ(out(r, j), 0.0);
            else EXPECT_EQ(out(r, j), x(r, j));
        }
    }
}

TEST(ApplyMask, ShapeMismatchIsAnError) {
    Matrix x(kInputRows, 3);
    EXPECT_THROW(apply_mask(x, mask_matrix(LevelMask::all_ones(), 4)), std::invalid_argument);
}

TEST(ApplyMask, Idempotent) {
    Rng rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        const LevelMask s = LevelMask::from_uint(static_cast<unsigned>(rng.below(1024)));
        const Matrix m = mask_matrix(s, 5);
        const Matrix x = random_input(rng, 5);
        const Matrix once = apply_mask(x, m);
        EXPECT_TRUE(apply_mask(once, m) == once);
    }
}

TEST(ApplyMask, SequentialMasksComposeViaBitwiseAnd) {
    Rng rng(29);
    for (int trial = 0; trial < 50; ++trial) {
        const LevelMask a = LevelMask::from_uint(static_cast<unsigned>(rng.below(1024)));
        const LevelMask b = LevelMask::from_uint(static_cast<unsigned>(rng.below(1024)));
        const Matrix x = random_input(rng, 4);
        const Matrix sequential = apply_mask(apply_mask(x, mask_matrix(a, 4)), mask_matrix(b, 4));
        const Matrix combined = apply_mask(x, mask_matrix(mask_and(a, b), 4));
        EXPECT_TRUE(sequential == combined);
    }
}

TEST(MaskMatrix, TogglingOneLevelChangesExactlyItsRowBlock) {
    Rng rng(31);
    for (int level = 1; level <= 10; ++level) {
        LevelMask s = LevelMask::from_uint(static_cast<unsigned>(rng.below(1024)));
        LevelMask toggled = s;
        toggled.bits[static_cast<std::size_t>(level - 1)] ^= 1;
        const Matrix a = mask_matrix(s, 3);
        const Matrix b = mask_matrix(toggled, 3);
        for (std::size_t r = 0; r < 40; ++r) {
            const bool in_block = level_of_row(r) == level;
            for (std::size_t j = 0; j < 3; ++j) {
                if (in_block) EXPECT_NE(a(r, j), b(r, j));
                else EXPECT_EQ(a(r, j), b(r, j));
            }
        }
    }
}

TEST(ApplyLevelMask, MatchesExpandedMaskPath) {
    Rng rng(41);
    for (int trial = 0; trial < 30; ++trial) {
        const LevelMask s = LevelMask::from_uint(static_cast<unsigned>(rng.below(1024)));
        const Matrix x = random_input(rng, 8);
        Matrix fast;
        apply_level_mask(s, x, fast);
        EXPECT_TRUE(fast == apply_mask(x, mask_matrix(s, 8)));
    }
}
