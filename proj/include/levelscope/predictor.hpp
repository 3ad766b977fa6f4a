#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "levelscope/lob_data.hpp"
#include "levelscope/masking.hpp"
#include "levelscope/matrix.hpp"
#include "levelscope/rng.hpp"

namespace levelscope {

enum class BackboneKind : int { TemporalBilinear = 0, Convolutional = 1 };

inline const char* to_string(BackboneKind k) {
    return k == BackboneKind::TemporalBilinear ? "temporal_bilinear" : "convolutional";
}

inline BackboneKind parse_backbone(std::string_view s) {
    if (s == "temporal_bilinear" || s == "bilinear") return BackboneKind::TemporalBilinear;
    if (s == "convolutional" || s == "conv") return BackboneKind::Convolutional;
    throw std::invalid_argument("unknown backbone: " + std::string(s));
}

// Model dimensions. The bilinear backbone projects the 40 input rows to a
// 60-row hidden representation; the convolutional one collapses each level
// block to one channel and convolves over time.
inline constexpr std::size_t kHidden = 60;
inline constexpr std::size_t kConvChannels = 16;
inline constexpr std::size_t kConvWidth = 5;
inline constexpr double kProbFloor = 1e-12;

struct NamedTensor {
    std::string name;
    Matrix value;
};

struct ModelParams {
    BackboneKind kind = BackboneKind::TemporalBilinear;
    int window_length = 0;
    std::uint64_t seed = 0;
    std::vector<NamedTensor> tensors;

    const Matrix& tensor(std::string_view name) const {
        for (const auto& t : tensors)
            if (t.name == name) return t.value;
        throw std::invalid_argument("no tensor named " + std::string(name));
    }
    Matrix& tensor(std::string_view name) {
        for (auto& t : tensors)
            if (t.name == name) return t.value;
        throw std::invalid_argument("no tensor named " + std::string(name));
    }
};

// Gradients aligned index-for-index with ModelParams::tensors.
using Gradients = std::vector<Matrix>;

inline Gradients zero_gradients(const ModelParams& p) {
    Gradients g;
    g.reserve(p.tensors.size());
    for (const auto& t : p.tensors) g.emplace_back(t.value.rows(), t.value.cols());
    return g;
}

// Glorot-uniform initialization: half-width sqrt(6/(fan_in+fan_out)) per
// weight matrix, biases zero, the bilinear mixing scalar at sigmoid(0)=0.5.
inline ModelParams init_params(BackboneKind kind, int window_length, std::uint64_t seed) {
    if (window_length < 1) throw std::invalid_argument("init_params: T must be >= 1");
    const auto t_cols = static_cast<std::size_t>(window_length);
    ModelParams p;
    p.kind = kind;
    p.window_length = window_length;
    p.seed = seed;
    Rng rng(derive_seed(seed, {hash_str64("init"), hash_str64(to_string(kind)),
                               static_cast<std::uint64_t>(window_length)}));
    auto glorot = [&rng](std::size_t rows, std::size_t cols, std::size_t fan_in, std::size_t fan_out) {
        const double half = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        Matrix m(rows, cols);
        for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-half, half);
        return m;
    };
    if (kind == BackboneKind::TemporalBilinear) {
        p.tensors.push_back({"w1", glorot(kHidden, kInputRows, kInputRows, kHidden)});
        p.tensors.push_back({"w_att", glorot(t_cols, t_cols, t_cols, t_cols)});
        p.tensors.push_back({"w2", glorot(t_cols, 1, t_cols, 1)});
        p.tensors.push_back({"b1", Matrix(kHidden, 1)});
        p.tensors.push_back({"w_out", glorot(kNumClasses, kHidden, kHidden, kNumClasses)});
        p.tensors.push_back({"b_out", Matrix(kNumClasses, 1)});
        p.tensors.push_back({"lambda_raw", Matrix(1, 1)});
    } else {
        p.tensors.push_back({"proj", glorot(1, kRowsPerLevel, kRowsPerLevel, 1)});
        p.tensors.push_back({"conv_w", glorot(kConvChannels, kNumLevels * kConvWidth,
                                              kNumLevels * kConvWidth, kConvChannels * kConvWidth)});
        p.tensors.push_back({"conv_b", Matrix(kConvChannels, 1)});
        p.tensors.push_back({"fc_w", glorot(kNumClasses, kConvChannels, kConvChannels, kNumClasses)});
        p.tensors.push_back({"fc_b", Matrix(kNumClasses, 1)});
    }
    return p;
}

namespace detail {

// Scratch space for one forward pass; reused across samples to avoid
// re-allocation in the training loop.
struct Workspace {
    // bilinear
    Matrix yb, scores, att, yt;
    std::vector<double> z;
    // convolutional
    Matrix s1, pre, act;
    std::vector<double> g;
    // shared
    std::array<double, kNumClasses> logits{};
    std::array<double, kNumClasses> probs_raw{};
    std::array<double, kNumClasses> probs{};
    // backward scratch
    Matrix dyt, datt, dscores, dyb, ds1, dpre;
};

inline void softmax3(const std::array<double, kNumClasses>& logits,
                     std::array<double, kNumClasses>& out) {
    const double m = std::max({logits[0], logits[1], logits[2]});
    double sum = 0.0;
    for (int i = 0; i < kNumClasses; ++i) {
        out[static_cast<std::size_t>(i)] = std::exp(logits[static_cast<std::size_t>(i)] - m);
        sum += out[static_cast<std::size_t>(i)];
    }
    for (int i = 0; i < kNumClasses; ++i) out[static_cast<std::size_t>(i)] /= sum;
}

inline void forward_bilinear(const ModelParams& p, const Matrix& x, Workspace& ws) {
    const auto t_cols = x.cols();
    const Matrix& w1 = p.tensors[0].value;
    const Matrix& w_att = p.tensors[1].value;
    const Matrix& w2 = p.tensors[2].value;
    const Matrix& b1 = p.tensors[3].value;
    const Matrix& w_out = p.tensors[4].value;
    const Matrix& b_out = p.tensors[5].value;
    const double lam = 1.0 / (1.0 + std::exp(-p.tensors[6].value(0, 0)));

    matmul(w1, x, ws.yb);          // 60 x T
    matmul(ws.yb, w_att, ws.scores);  // 60 x T
    // row-wise softmax over time
    if (!ws.att.same_shape(ws.scores)) ws.att = Matrix(ws.scores.rows(), ws.scores.cols());
    for (std::size_t i = 0; i < kHidden; ++i) {
        const double* srow = ws.scores.row(i);
        double* arow = ws.att.row(i);
        double m = srow[0];
        for (std::size_t j = 1; j < t_cols; ++j) m = std::max(m, srow[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < t_cols; ++j) {
            arow[j] = std::exp(srow[j] - m);
            sum += arow[j];
        }
        const double inv = 1.0 / sum;
        for (std::size_t j = 0; j < t_cols; ++j) arow[j] *= inv;
    }
    if (!ws.yt.same_shape(ws.yb)) ws.yt = Matrix(ws.yb.rows(), ws.yb.cols());
    for (std::size_t i = 0; i < ws.yb.size(); ++i)
        ws.yt.data()[i] = ws.yb.data()[i] * (lam * ws.att.data()[i] + (1.0 - lam));
    ws.z.assign(kHidden, 0.0);
    for (std::size_t i = 0; i < kHidden; ++i) {
        const double* yrow = ws.yt.row(i);
        double s = 0.0;
        for (std::size_t j = 0; j < t_cols; ++j) s += yrow[j] * w2(j, 0);
        ws.z[i] = s + b1(i, 0);
    }
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        double s = b_out(c, 0);
        const double* wrow = w_out.row(c);
        for (std::size_t i = 0; i < kHidden; ++i) s += wrow[i] * ws.z[i];
        ws.logits[c] = s;
    }
}

inline void forward_conv(const ModelParams& p, const Matrix& x, Workspace& ws) {
    const auto t_cols = x.cols();
    const Matrix& proj = p.tensors[0].value;
    const Matrix& conv_w = p.tensors[1].value;
    const Matrix& conv_b = p.tensors[2].value;
    const Matrix& fc_w = p.tensors[3].value;
    const Matrix& fc_b = p.tensors[4].value;
    const int half = static_cast<int>(kConvWidth) / 2;

    if (ws.s1.rows() != kNumLevels || ws.s1.cols() != t_cols) ws.s1 = Matrix(kNumLevels, t_cols);
    for (std::size_t k = 0; k < kNumLevels; ++k) {
        double* srow = ws.s1.row(k);
        for (std::size_t j = 0; j < t_cols; ++j) {
            double s = 0.0;
            for (std::size_t r = 0; r < kRowsPerLevel; ++r)
                s += proj(0, r) * x(k * kRowsPerLevel + r, j);
            srow[j] = s;
        }
    }
    if (ws.pre.rows() != kConvChannels || ws.pre.cols() != t_cols) {
        ws.pre = Matrix(kConvChannels, t_cols);
        ws.act = Matrix(kConvChannels, t_cols);
    }
    for (std::size_t o = 0; o < kConvChannels; ++o) {
        const double* wrow = conv_w.row(o);
        double* prow = ws.pre.row(o);
        double* arow = ws.act.row(o);
        for (std::size_t t = 0; t < t_cols; ++t) {
            double s = conv_b(o, 0);
            for (std::size_t i = 0; i < kNumLevels; ++i) {
                const double* srow = ws.s1.row(i);
                for (std::size_t d = 0; d < kConvWidth; ++d) {
                    const int src = static_cast<int>(t) + static_cast<int>(d) - half;
                    if (src >= 0 && src < static_cast<int>(t_cols))
                        s += wrow[i * kConvWidth + d] * srow[static_cast<std::size_t>(src)];
                }
            }
            prow[t] = s;
            arow[t] = s > 0.0 ? s : 0.0;
        }
    }
    ws.g.assign(kConvChannels, 0.0);
    for (std::size_t o = 0; o < kConvChannels; ++o) {
        const double* arow = ws.act.row(o);
        double s = 0.0;
        for (std::size_t t = 0; t < t_cols; ++t) s += arow[t];
        ws.g[o] = s / static_cast<double>(t_cols);
    }
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        double s = fc_b(c, 0);
        const double* wrow = fc_w.row(c);
        for (std::size_t o = 0; o < kConvChannels; ++o) s += wrow[o] * ws.g[o];
        ws.logits[c] = s;
    }
}

inline void forward_ws(const ModelParams& p, const Matrix& x, Workspace& ws) {
    if (x.rows() != kInputRows) throw std::invalid_argument("forward: input must have 40 rows");
    if (x.cols() != static_cast<std::size_t>(p.window_length))
        throw std::invalid_argument("forward: input has " + std::to_string(x.cols()) +
                                    " columns, model expects " + std::to_string(p.window_length));
    if (!x.all_finite()) throw std::invalid_argument("forward: non-finite input");
    if (p.kind == BackboneKind::TemporalBilinear) forward_bilinear(p, x, ws);
    else forward_conv(p, x, ws);
    softmax3(ws.logits, ws.probs_raw);
    for (std::size_t c = 0; c < kNumClasses; ++c) ws.probs[c] = std::max(ws.probs_raw[c], kProbFloor);
}

// Accumulates one sample's contribution, with dlogits already scaled by the
// batch weight. Expects ws to hold the forward state for x.
inline void backward_bilinear(const ModelParams& p, const Matrix& x, Workspace& ws,
                              const std::array<double, kNumClasses>& dlogits, Gradients& g) {
    const auto t_cols = x.cols();
    const Matrix& w_att = p.tensors[1].value;
    const Matrix& w2 = p.tensors[2].value;
    const Matrix& w_out = p.tensors[4].value;
    const double lraw = p.tensors[6].value(0, 0);
    const double lam = 1.0 / (1.0 + std::exp(-lraw));

    Matrix& d_w1 = g[0];
    Matrix& d_w_att = g[1];
    Matrix& d_w2 = g[2];
    Matrix& d_b1 = g[3];
    Matrix& d_w_out = g[4];
    Matrix& d_b_out = g[5];
    Matrix& d_lraw = g[6];

    std::array<double, kHidden> dz{};
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        const double dl = dlogits[c];
        if (dl == 0.0) continue;
        double* gw = d_w_out.row(c);
        const double* wrow = w_out.row(c);
        for (std::size_t i = 0; i < kHidden; ++i) {
            gw[i] += dl * ws.z[i];
            dz[i] += dl * wrow[i];
        }
        d_b_out(c, 0) += dl;
    }

    if (!ws.dyt.same_shape(ws.yt)) ws.dyt = Matrix(ws.yt.rows(), ws.yt.cols());
    for (std::size_t i = 0; i < kHidden; ++i) {
        d_b1(i, 0) += dz[i];
        const double* yrow = ws.yt.row(i);
        double* drow = ws.dyt.row(i);
        for (std::size_t j = 0; j < t_cols; ++j) {
            d_w2(j, 0) += yrow[j] * dz[i];
            drow[j] = dz[i] * w2(j, 0);
        }
    }

    // yt = yb * (lam*att + (1-lam))
    double dlam = 0.0;
    if (!ws.datt.same_shape(ws.att)) ws.datt = Matrix(ws.att.rows(), ws.att.cols());
    if (!ws.dyb.same_shape(ws.yb)) ws.dyb = Matrix(ws.yb.rows(), ws.yb.cols());
    for (std::size_t i = 0; i < ws.yb.size(); ++i) {
        const double dyt = ws.dyt.data()[i];
        const double yb = ws.yb.data()[i];
        const double att = ws.att.data()[i];
        dlam += dyt * yb * (att - 1.0);
        ws.datt.data()[i] = dyt * lam * yb;
        ws.dyb.data()[i] = dyt * (lam * att + (1.0 - lam));
    }
    d_lraw(0, 0) += dlam * lam * (1.0 - lam);

    // att = row-softmax(scores)
    if (!ws.dscores.same_shape(ws.scores)) ws.dscores = Matrix(ws.scores.rows(), ws.scores.cols());
    for (std::size_t i = 0; i < kHidden; ++i) {
        const double* arow = ws.att.row(i);
        const double* darow = ws.datt.row(i);
        double* dsrow = ws.dscores.row(i);
        double dot = 0.0;
        for (std::size_t j = 0; j < t_cols; ++j) dot += darow[j] * arow[j];
        for (std::size_t j = 0; j < t_cols; ++j) dsrow[j] = arow[j] * (darow[j] - dot);
    }

    // scores = yb * w_att
    for (std::size_t a = 0; a < t_cols; ++a) {
        double* grow = d_w_att.row(a);
        for (std::size_t i = 0; i < kHidden; ++i) {
            const double yba = ws.yb(i, a);
            const double* dsrow = ws.dscores.row(i);
            for (std::size_t b = 0; b < t_cols; ++b) grow[b] += yba * dsrow[b];
        }
    }
    for (std::size_t i = 0; i < kHidden; ++i) {
        const double* dsrow = ws.dscores.row(i);
        double* dybrow = ws.dyb.row(i);
        for (std::size_t a = 0; a < t_cols; ++a) {
            const double* wrow = w_att.row(a);
            double s = 0.0;
            for (std::size_t b = 0; b < t_cols; ++b) s += dsrow[b] * wrow[b];
            dybrow[a] += s;
        }
    }

    // yb = w1 * x
    for (std::size_t i = 0; i < kHidden; ++i) {
        const double* dybrow = ws.dyb.row(i);
        double* grow = d_w1.row(i);
        for (std::size_t r = 0; r < kInputRows; ++r) {
            const double* xrow = x.row(r);
            double s = 0.0;
            for (std::size_t j = 0; j < t_cols; ++j) s += dybrow[j] * xrow[j];
            grow[r] += s;
        }
    }
}

inline void backward_conv(const ModelParams& p, const Matrix& x, Workspace& ws,
                          const std::array<double, kNumClasses>& dlogits, Gradients& g) {
    const auto t_cols = x.cols();
    const Matrix& conv_w = p.tensors[1].value;
    const Matrix& fc_w = p.tensors[3].value;
    const int half = static_cast<int>(kConvWidth) / 2;

    Matrix& d_proj = g[0];
    Matrix& d_conv_w = g[1];
    Matrix& d_conv_b = g[2];
    Matrix& d_fc_w = g[3];
    Matrix& d_fc_b = g[4];

    std::array<double, kConvChannels> dg{};
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        const double dl = dlogits[c];
        if (dl == 0.0) continue;
        double* grow = d_fc_w.row(c);
        const double* wrow = fc_w.row(c);
        for (std::size_t o = 0; o < kConvChannels; ++o) {
            grow[o] += dl * ws.g[o];
            dg[o] += dl * wrow[o];
        }
        d_fc_b(c, 0) += dl;
    }

    if (ws.dpre.rows() != kConvChannels || ws.dpre.cols() != t_cols)
        ws.dpre = Matrix(kConvChannels, t_cols);
    const double inv_t = 1.0 / static_cast<double>(t_cols);
    for (std::size_t o = 0; o < kConvChannels; ++o) {
        const double* prow = ws.pre.row(o);
        double* dprow = ws.dpre.row(o);
        const double base = dg[o] * inv_t;
        double db = 0.0;
        for (std::size_t t = 0; t < t_cols; ++t) {
            dprow[t] = prow[t] > 0.0 ? base : 0.0;
            db += dprow[t];
        }
        d_conv_b(o, 0) += db;
    }

    if (ws.ds1.rows() != kNumLevels || ws.ds1.cols() != t_cols) ws.ds1 = Matrix(kNumLevels, t_cols);
    ws.ds1.fill(0.0);
    for (std::size_t o = 0; o < kConvChannels; ++o) {
        const double* dprow = ws.dpre.row(o);
        const double* wrow = conv_w.row(o);
        double* gwrow = d_conv_w.row(o);
        for (std::size_t i = 0; i < kNumLevels; ++i) {
            const double* srow = ws.s1.row(i);
            double* dsrow = ws.ds1.row(i);
            for (std::size_t d = 0; d < kConvWidth; ++d) {
                const int off = static_cast<int>(d) - half;
                const double w = wrow[i * kConvWidth + d];
                double gw = 0.0;
                for (std::size_t t = 0; t < t_cols; ++t) {
                    const int src = static_cast<int>(t) + off;
                    if (src >= 0 && src < static_cast<int>(t_cols)) {
                        gw += dprow[t] * srow[static_cast<std::size_t>(src)];
                        dsrow[static_cast<std::size_t>(src)] += dprow[t] * w;
                    }
                }
                gwrow[i * kConvWidth + d] += gw;
            }
        }
    }

    for (std::size_t r = 0; r < kRowsPerLevel; ++r) {
        double s = 0.0;
        for (std::size_t k = 0; k < kNumLevels; ++k) {
            const double* dsrow = ws.ds1.row(k);
            const double* xrow = x.row(k * kRowsPerLevel + r);
            for (std::size_t t = 0; t < t_cols; ++t) s += dsrow[t] * xrow[t];
        }
        d_proj(0, r) += s;
    }
}

}  // namespace detail

// Class probabilities for one (already masked) input window.
inline std::array<double, kNumClasses> forward(const ModelParams& params, const Matrix& x) {
    detail::Workspace ws;
    detail::forward_ws(params, x, ws);
    return ws.probs;
}

struct TrainingSample {
    const Matrix* x = nullptr;  // masked 40xT input
    MovementLabel label = MovementLabel::Stationary;
};

// Mean cross-entropy over the batch and its exact gradient. The probability
// of the true class is floored at 1e-12 inside the log; samples sitting
// below the floor contribute zero gradient, matching the floored loss.
inline std::pair<double, Gradients> loss_and_gradient(const ModelParams& params,
                                                      std::span<const TrainingSample> batch) {
    if (batch.empty()) throw std::invalid_argument("loss_and_gradient: empty batch");
    Gradients grads = zero_gradients(params);
    detail::Workspace ws;
    const double w = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    for (const auto& sample : batch) {
        detail::forward_ws(params, *sample.x, ws);
        const auto y = static_cast<std::size_t>(sample.label);
        loss += -std::log(ws.probs[y]) * w;
        std::array<double, kNumClasses> dlogits{};
        if (ws.probs_raw[y] >= kProbFloor) {
            for (std::size_t c = 0; c < kNumClasses; ++c)
                dlogits[c] = (ws.probs_raw[c] - (c == y ? 1.0 : 0.0)) * w;
        }
        if (params.kind == BackboneKind::TemporalBilinear)
            detail::backward_bilinear(params, *sample.x, ws, dlogits, grads);
        else
            detail::backward_conv(params, *sample.x, ws, dlogits, grads);
    }
    return {loss, std::move(grads)};
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct F1Report {
    std::array<double, kNumClasses> precision{};
    std::array<double, kNumClasses> recall{};
    std::array<double, kNumClasses> f1{};
    double macro_f1 = 0.0;
    std::array<std::array<std::int64_t, kNumClasses>, kNumClasses> confusion{};  // [true][pred]
};

inline F1Report f1_from_confusion(const std::array<std::array<std::int64_t, kNumClasses>, kNumClasses>& conf) {
    F1Report rep;
    rep.confusion = conf;
    double sum = 0.0;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        std::int64_t tp = conf[c][c], fp = 0, fn = 0;
        for (std::size_t j = 0; j < kNumClasses; ++j) {
            if (j == c) continue;
            fp += conf[j][c];
            fn += conf[c][j];
        }
        const double p = (tp + fp) ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
        const double r = (tp + fn) ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
        const double f = (p + r > 0.0) ? 2.0 * p * r / (p + r) : 0.0;
        rep.precision[c] = p;
        rep.recall[c] = r;
        rep.f1[c] = f;
        sum += f;
    }
    rep.macro_f1 = sum / kNumClasses;
    return rep;
}

namespace detail {
inline std::size_t argmax3(const std::array<double, kNumClasses>& p) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < kNumClasses; ++c)
        if (p[c] > p[best]) best = c;
    return best;
}

inline F1Report evaluate_premasked(const ModelParams& params, std::span<const Matrix> inputs,
                                   std::span<const MovementLabel> labels) {
    std::array<std::array<std::int64_t, kNumClasses>, kNumClasses> conf{};
    Workspace ws;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        forward_ws(params, inputs[i], ws);
        conf[static_cast<std::size_t>(labels[i])][argmax3(ws.probs)] += 1;
    }
    return f1_from_confusion(conf);
}
}  // namespace detail

// Macro-F1 report for a window set under a level mask (applied here).
inline F1Report evaluate(const ModelParams& params, std::span<const SampleWindow> windows,
                         const LevelMask& mask) {
    if (windows.empty()) throw std::invalid_argument("evaluate: empty window list");
    std::array<std::array<std::int64_t, kNumClasses>, kNumClasses> conf{};
    detail::Workspace ws;
    Matrix masked;
    for (const auto& w : windows) {
        apply_level_mask(mask, w.matrix, masked);
        detail::forward_ws(params, masked, ws);
        conf[static_cast<std::size_t>(w.label)][detail::argmax3(ws.probs)] += 1;
    }
    return f1_from_confusion(conf);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
    double learning_rate = 0.01;
    int batch_size = 64;
    int max_epochs = 50;
    int early_stop_patience = 5;
    std::uint64_t seed = 0;
};

struct EpochStats {
    double train_loss = 0.0;
    double validation_macro_f1 = std::numeric_limits<double>::quiet_NaN();
};

struct TrainTrace {
    std::vector<EpochStats> epochs;
    int best_epoch = -1;  // -1 when no epoch ran or no validation set
};

struct TrainResult {
    ModelParams params;
    TrainTrace trace;
};

// Mini-batch gradient descent on masked training windows with model
// selection by validation macro-F1 and early stopping. Deterministic given
// config.seed; shuffling uses a seed-derived stream.
inline TrainResult train(const Dataset& dataset, const LevelMask& mask, BackboneKind kind,
                         const TrainConfig& config) {
    if (dataset.train.empty()) throw std::invalid_argument("train: empty train partition");
    if (!(config.learning_rate > 0.0)) throw std::invalid_argument("train: learning_rate must be > 0");
    if (config.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (config.max_epochs < 0 || config.early_stop_patience < 0)
        throw std::invalid_argument("train: negative epoch settings");

    TrainResult result;
    result.params = init_params(kind, dataset.window_length, config.seed);
    if (config.max_epochs == 0) return result;

    const std::size_t n = dataset.train.size();
    std::vector<Matrix> masked_train(n);
    for (std::size_t i = 0; i < n; ++i) apply_level_mask(mask, dataset.train[i].matrix, masked_train[i]);
    std::vector<Matrix> masked_val(dataset.validation.size());
    std::vector<MovementLabel> val_labels(dataset.validation.size());
    for (std::size_t i = 0; i < dataset.validation.size(); ++i) {
        apply_level_mask(mask, dataset.validation[i].matrix, masked_val[i]);
        val_labels[i] = dataset.validation[i].label;
    }

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng shuffle_rng(derive_seed(config.seed, {hash_str64("train_shuffle")}));

    ModelParams best = result.params;
    double best_f1 = -1.0;
    int epochs_without_improvement = 0;
    std::vector<TrainingSample> batch;
    batch.reserve(static_cast<std::size_t>(config.batch_size));

    for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t stop = std::min(n, start + static_cast<std::size_t>(config.batch_size));
            batch.clear();
            for (std::size_t i = start; i < stop; ++i)
                batch.push_back({&masked_train[order[i]], dataset.train[order[i]].label});
            auto [loss, grads] = loss_and_gradient(result.params, batch);
            loss_sum += loss * static_cast<double>(batch.size());
            for (std::size_t t = 0; t < grads.size(); ++t)
                axpy(-config.learning_rate, grads[t], result.params.tensors[t].value);
        }
        EpochStats stats;
        stats.train_loss = loss_sum / static_cast<double>(n);
        if (!masked_val.empty()) {
            stats.validation_macro_f1 =
                detail::evaluate_premasked(result.params, masked_val, val_labels).macro_f1;
            if (stats.validation_macro_f1 > best_f1) {
                best_f1 = stats.validation_macro_f1;
                best = result.params;
                result.trace.best_epoch = epoch;
                epochs_without_improvement = 0;
            } else {
                ++epochs_without_improvement;
            }
        }
        result.trace.epochs.push_back(stats);
        if (!masked_val.empty() && epochs_without_improvement > config.early_stop_patience) break;
    }
    if (result.trace.best_epoch >= 0) result.params = std::move(best);
    return result;
}

// ---------------------------------------------------------------------------
// Parameter container serialization. Layout, all integers little-endian:
//   magic "LVLSCOPE1" | u8 kind | u32 T | u64 seed | u32 tensor count |
//   per tensor: u32 name length, name bytes, u32 rows, u32 cols,
//               rows*cols f64 row-major.
// ---------------------------------------------------------------------------

inline constexpr char kParamsMagic[] = "LVLSCOPE1";

namespace detail {
inline void put_u32(std::ostream& out, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 4);
}
inline void put_u64(std::ostream& out, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 8);
}
inline std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}
inline std::uint64_t get_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}
}  // namespace detail

inline void save_params(std::ostream& out, const ModelParams& p) {
    out.write(kParamsMagic, 9);
    out.put(static_cast<char>(p.kind));
    detail::put_u32(out, static_cast<std::uint32_t>(p.window_length));
    detail::put_u64(out, p.seed);
    detail::put_u32(out, static_cast<std::uint32_t>(p.tensors.size()));
    for (const auto& t : p.tensors) {
        detail::put_u32(out, static_cast<std::uint32_t>(t.name.size()));
        out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        detail::put_u32(out, static_cast<std::uint32_t>(t.value.rows()));
        detail::put_u32(out, static_cast<std::uint32_t>(t.value.cols()));
        for (std::size_t i = 0; i < t.value.size(); ++i) {
            std::uint64_t bits;
            std::memcpy(&bits, &t.value.data()[i], 8);
            detail::put_u64(out, bits);
        }
    }
}

inline void save_params(const std::string& path, const ModelParams& p) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path);
    save_params(out, p);
}

inline ModelParams load_params(std::istream& in) {
    char magic[9];
    in.read(magic, 9);
    if (!in || std::memcmp(magic, kParamsMagic, 9) != 0)
        throw std::runtime_error("bad model file: wrong magic");
    ModelParams p;
    p.kind = static_cast<BackboneKind>(in.get());
    p.window_length = static_cast<int>(detail::get_u32(in));
    p.seed = detail::get_u64(in);
    const std::uint32_t count = detail::get_u32(in);
    for (std::uint32_t t = 0; t < count; ++t) {
        const std::uint32_t name_len = detail::get_u32(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const std::uint32_t rows = detail::get_u32(in);
        const std::uint32_t cols = detail::get_u32(in);
        Matrix m(rows, cols);
        for (std::size_t i = 0; i < m.size(); ++i) {
            const std::uint64_t bits = detail::get_u64(in);
            std::memcpy(&m.data()[i], &bits, 8);
        }
        if (!in) throw std::runtime_error("bad model file: truncated tensor data");
        p.tensors.push_back({std::move(name), std::move(m)});
    }
    return p;
}

inline ModelParams load_params(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return load_params(in);
}

}  // namespace levelscope
