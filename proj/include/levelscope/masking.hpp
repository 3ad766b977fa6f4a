#pragma once

#include <array>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>

#include "levelscope/matrix.hpp"

namespace levelscope {

inline constexpr int kNumLevels = 10;
inline constexpr int kRowsPerLevel = 4;  // ask price, ask volume, bid price, bid volume
inline constexpr int kInputRows = kNumLevels * kRowsPerLevel;

// Binary vector selecting book levels. bits[k-1] == 1 keeps level k.
struct LevelMask {
    std::array<std::uint8_t, kNumLevels> bits{};

    static LevelMask all_ones() {
        LevelMask m;
        m.bits.fill(1);
        return m;
    }

    bool includes_level(int level) const {  // level in 1..10
        return bits[static_cast<std::size_t>(level - 1)] != 0;
    }

    int popcount() const {
        int n = 0;
        for (auto b : bits) n += b;
        return n;
    }

    // 10-character '0'/'1' string, level 1 leftmost. The textual encoding
    // used in configs, trace files and reports.
    std::string to_string() const {
        std::string s(kNumLevels, '0');
        for (int i = 0; i < kNumLevels; ++i)
            if (bits[static_cast<std::size_t>(i)]) s[static_cast<std::size_t>(i)] = '1';
        return s;
    }

    static LevelMask from_string(const std::string& s) {
        if (s.size() != kNumLevels) throw std::invalid_argument("mask string must have 10 characters");
        LevelMask m;
        for (int i = 0; i < kNumLevels; ++i) {
            char c = s[static_cast<std::size_t>(i)];
            if (c != '0' && c != '1') throw std::invalid_argument("mask string must be binary");
            m.bits[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(c - '0');
        }
        return m;
    }

    // Compact integer form, bit (k-1) set iff level k included.
    unsigned to_uint() const {
        unsigned v = 0;
        for (int i = 0; i < kNumLevels; ++i)
            if (bits[static_cast<std::size_t>(i)]) v |= 1u << i;
        return v;
    }

    static LevelMask from_uint(unsigned v) {
        LevelMask m;
        for (int i = 0; i < kNumLevels; ++i) m.bits[static_cast<std::size_t>(i)] = (v >> i) & 1u;
        return m;
    }

    friend bool operator==(const LevelMask& a, const LevelMask& b) { return a.bits == b.bits; }
    friend bool operator<(const LevelMask& a, const LevelMask& b) { return a.bits < b.bits; }
};

inline LevelMask mask_from_levels(const std::set<int>& levels) {
    LevelMask m;
    for (int l : levels) {
        if (l < 1 || l > kNumLevels) throw std::invalid_argument("level out of range 1..10");
        m.bits[static_cast<std::size_t>(l - 1)] = 1;
    }
    return m;
}

inline LevelMask mask_and(const LevelMask& a, const LevelMask& b) {
    LevelMask m;
    for (int i = 0; i < kNumLevels; ++i)
        m.bits[static_cast<std::size_t>(i)] = a.bits[static_cast<std::size_t>(i)] & b.bits[static_cast<std::size_t>(i)];
    return m;
}

// Level that input row r (0-based, in 0..39) belongs to, 1-based.
inline int level_of_row(std::size_t r) { return static_cast<int>(r) / kRowsPerLevel + 1; }

// Expands a level mask to the 40xT binary input mask: row i carries the bit
// of level floor(i/4)+1 in every column.
inline Matrix mask_matrix(const LevelMask& s, int t_cols) {
    if (t_cols < 1) throw std::invalid_argument("mask_matrix: T must be >= 1");
    Matrix m(kInputRows, static_cast<std::size_t>(t_cols));
    for (std::size_t i = 0; i < kInputRows; ++i) {
        double v = s.bits[static_cast<std::size_t>(level_of_row(i) - 1)] ? 1.0 : 0.0;
        double* row = m.row(i);
        for (int j = 0; j < t_cols; ++j) row[static_cast<std::size_t>(j)] = v;
    }
    return m;
}

// Same mask built as an explicit matrix product E1 * s * E2, with E1 the
// 40x10 row-block indicator and E2 a 1xT row of ones. Kept as an
// independent construction for cross-checking mask_matrix.
inline Matrix mask_matrix_oracle(const LevelMask& s, int t_cols) {
    if (t_cols < 1) throw std::invalid_argument("mask_matrix_oracle: T must be >= 1");
    Matrix e1(kInputRows, kNumLevels);
    for (std::size_t i = 0; i < kInputRows; ++i) e1(i, static_cast<std::size_t>(level_of_row(i) - 1)) = 1.0;
    Matrix sv(kNumLevels, 1);
    for (int k = 0; k < kNumLevels; ++k) sv(static_cast<std::size_t>(k), 0) = s.bits[static_cast<std::size_t>(k)];
    Matrix e2(1, static_cast<std::size_t>(t_cols), 1.0);
    Matrix tmp, out;
    matmul(e1, sv, tmp);    // 40x1
    matmul(tmp, e2, out);   // 40xT
    return out;
}

// Elementwise product of a sample matrix with an expanded mask.
inline Matrix apply_mask(const Matrix& x, const Matrix& m) {
    if (!x.same_shape(m)) throw std::invalid_argument("apply_mask: shape mismatch");
    Matrix out = x;
    double* o = out.data();
    const double* mm = m.data();
    for (std::size_t i = 0; i < out.size(); ++i) o[i] *= mm[i];
    return out;
}

// Fast path used by the trainer: zero the rows of excluded levels in place.
inline void apply_level_mask(const LevelMask& s, const Matrix& x, Matrix& out) {
    if (out.rows() != x.rows() || out.cols() != x.cols()) out = Matrix(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double* dst = out.row(r);
        if (s.bits[static_cast<std::size_t>(level_of_row(r) - 1)]) {
            const double* src = x.row(r);
            for (std::size_t j = 0; j < x.cols(); ++j) dst[j] = src[j];
        } else {
            for (std::size_t j = 0; j < x.cols(); ++j) dst[j] = 0.0;
        }
    }
}

}  // namespace levelscope
