#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "pistis/document.hpp"
#include "pistis/json_io.hpp"
#include "pistis/matching.hpp"
#include "pistis/util.hpp"

namespace pistis {

constexpr size_t kItemFeatureCount = 8;
constexpr size_t kQueryFeatureCount = 2;
constexpr const char* kFeaturizerVersion = "pistis.features/1";
constexpr const char* kModelFormat = "pistis.listwise/1";

// One training example: a whole ordered list with a single listwide label.
struct ListwiseSample {
    std::vector<double> query_features;                // kQueryFeatureCount
    std::vector<std::vector<double>> item_features;    // n x kItemFeatureCount, in list order
    LabelValue label = LabelValue::Even;
    double weight = 1.0;
};

struct FeatureContext {
    const InvertedIndex& index;
    const VectorIndex& vindex;
};

struct ListFeatures {
    std::vector<double> query_features;
    std::vector<std::vector<double>> item_features;
};

// Per-item features: bm25, tfidf, cosine, token jaccard, topic match,
// log doc length, normalized position in the candidate pool, trust weight.
// Query features: log token count, log distinct token count. All values are
// order-independent; order enters the model through positional embeddings.
inline ListFeatures featurize(const FeatureContext& ctx, const Document& query,
                              const std::vector<const Document*>& items,
                              const std::vector<size_t>& pool_positions, size_t pool_size) {
    if (items.empty()) throw Error(ErrorCode::invalid_argument, "empty item list");
    if (pool_positions.size() != items.size()) {
        throw Error(ErrorCode::invalid_argument, "positions/items length mismatch");
    }
    ListFeatures out;
    std::set<std::string> distinct(query.tokens.begin(), query.tokens.end());
    out.query_features = {std::log(1.0 + static_cast<double>(query.tokens.size())),
                          std::log(1.0 + static_cast<double>(distinct.size()))};

    auto query_vec = query.embedding && query.embedding->size() == ctx.vindex.dim
                         ? *query.embedding
                         : toy_embedding(query.tokens, ctx.vindex.dim);
    double denom = static_cast<double>(std::max<size_t>(pool_size, 1));
    for (size_t i = 0; i < items.size(); ++i) {
        const Document& d = *items[i];
        std::vector<double> f(kItemFeatureCount, 0.0);
        if (ctx.index.doc_lengths.count(d.id)) {
            f[0] = bm25_score(ctx.index, query.tokens, d.id);
            f[1] = tfidf_score(ctx.index, query.tokens, d.id);
        }
        auto vit = ctx.vindex.vectors.find(d.id);
        f[2] = vit != ctx.vindex.vectors.end() ? cosine_similarity(query_vec, vit->second)
                                               : cosine_similarity(query_vec, toy_embedding(d.tokens, ctx.vindex.dim));
        f[3] = token_jaccard(query.tokens, d.tokens);
        f[4] = (query.topic && d.topic && *query.topic == *d.topic) ? 1.0 : 0.0;
        f[5] = std::log(1.0 + static_cast<double>(d.tokens.size()));
        f[6] = static_cast<double>(std::min(pool_positions[i] + 1, pool_size)) / denom;
        f[7] = d.trust;
        out.item_features.push_back(std::move(f));
    }
    return out;
}

struct ListwiseHyperparams {
    size_t hidden = 16;
    size_t epochs = 200;
    double learning_rate = 0.05;
    size_t batch_size = 32;
};

// Listwise ranker trained from listwide labels. Architecture:
//   encode:  e_i = tanh(W_enc x_i + b_enc)
//   order:   z_i = e_i + P_i                       (positional embeddings)
//   mix:     a_ij = softmax_j(z_i . z_j / sqrt(h))
//            u_i = tanh(z_i + W_mix (sum_j a_ij z_j) + b_mix)
//   head:    logits = W_head [mean_i u_i ; q] + b_head   (3 classes)
// Quality is the expected label scaled to [0,1]. With the positional
// embeddings zeroed the network is permutation-invariant.
class ListwiseModel {
public:
    ListwiseModel() = default;

    static ListwiseModel init(size_t k_max, const ListwiseHyperparams& hp, uint64_t seed) {
        ListwiseModel m;
        m.f_ = kItemFeatureCount;
        m.q_ = kQueryFeatureCount;
        m.h_ = hp.hidden;
        m.k_max_ = k_max;
        m.hp_ = hp;
        m.theta_.assign(m.param_count(), 0.0);
        Rng rng(splitmix64(seed ^ 0x11c37e57ULL));
        for (double& w : m.theta_) w = rng.next_symmetric(0.05);
        m.fitted_ = true;
        return m;
    }

    bool fitted() const { return fitted_; }
    size_t hidden() const { return h_; }
    size_t k_max() const { return k_max_; }
    const ListwiseHyperparams& hyperparams() const { return hp_; }
    std::vector<double>& parameters() { return theta_; }
    const std::vector<double>& parameters() const { return theta_; }

    void zero_positional_embeddings() {
        std::fill(theta_.begin() + off_pos(), theta_.begin() + off_pos() + k_max_ * h_, 0.0);
    }

    // 3-class cross-entropy via mini-batch gradient descent; deterministic
    // per seed. Calling fit again on a fitted model continues from the
    // current weights (online continuation).
    static ListwiseModel fit(const std::vector<ListwiseSample>& samples, size_t k_max,
                             const ListwiseHyperparams& hp, uint64_t seed) {
        check_classes(samples);
        ListwiseModel m = init(k_max, hp, seed);
        m.train(samples, hp.epochs, seed);
        return m;
    }

    void continue_fit(const std::vector<ListwiseSample>& samples, size_t epochs, uint64_t seed) {
        require_fitted();
        if (samples.empty()) throw Error(ErrorCode::invalid_argument, "empty dataset");
        train(samples, epochs, seed);
    }

    std::array<double, 3> predict_class_probs(const std::vector<double>& query_features,
                                              const std::vector<std::vector<double>>& items) const {
        require_fitted();
        Workspace w;
        forward(query_features, items, w);
        return {w.probs[0], w.probs[1], w.probs[2]};
    }

    // quality = (0*P(Neg) + 1*P(Even) + 2*P(Pos)) / 2, in [0,1].
    double predict_quality(const std::vector<double>& query_features,
                           const std::vector<std::vector<double>>& items) const {
        auto p = predict_class_probs(query_features, items);
        return (p[1] + 2.0 * p[2]) / 2.0;
    }

    double loss(const ListwiseSample& s) const {
        require_fitted();
        Workspace w;
        forward(s.query_features, s.item_features, w);
        return -s.weight * std::log(std::max(w.probs[label_index(s.label)], 1e-300));
    }

    double mean_loss(const std::vector<ListwiseSample>& samples) const {
        if (samples.empty()) throw Error(ErrorCode::invalid_argument, "empty dataset");
        double total = 0.0;
        for (const auto& s : samples) total += loss(s);
        return total / static_cast<double>(samples.size());
    }

    // Analytic gradient of loss(s) w.r.t. the flat parameter vector.
    std::vector<double> gradient(const ListwiseSample& s) const {
        require_fitted();
        std::vector<double> grad(theta_.size(), 0.0);
        Workspace w;
        forward(s.query_features, s.item_features, w);
        backward(s, w, grad);
        return grad;
    }

    // ----------------------------------------------------------------------
    // Order selection: maximize predicted list quality over arrangements of
    // p_r items. Exhaustive for pools of up to 6 items, beam search (width 8)
    // beyond that; ties resolve to the first arrangement in lexicographic
    // index order.
    // ----------------------------------------------------------------------
    std::vector<size_t> select_order(const std::vector<double>& query_features,
                                     const std::vector<std::vector<double>>& items,
                                     size_t p_r) const {
        require_fitted();
        if (items.empty() || p_r == 0 || p_r > items.size()) {
            throw Error(ErrorCode::invalid_argument, "p_r must be in [1, |items|]");
        }
        if (p_r > k_max_) throw Error(ErrorCode::invalid_argument, "p_r exceeds model k_max");
        if (items.size() <= 6) {
            return exhaustive_order(query_features, items, p_r);
        }
        return beam_order(query_features, items, p_r, 8);
    }

    // ----------------------------------------------------------------------
    // Serialization (versioned JSON)
    // ----------------------------------------------------------------------
    void save(const std::string& path) const {
        require_fitted();
        Json j;
        j["format"] = kModelFormat;
        j["featurizer"] = kFeaturizerVersion;
        j["dims"] = {{"f", f_}, {"q", q_}, {"h", h_}, {"k_max", k_max_}};
        j["hyperparams"] = {{"hidden", hp_.hidden},
                            {"epochs", hp_.epochs},
                            {"learning_rate", hp_.learning_rate},
                            {"batch_size", hp_.batch_size}};
        j["theta"] = theta_;
        auto out = open_for_write(path);
        out << j.dump(2) << "\n";
    }

    static ListwiseModel load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw Error(ErrorCode::data, "cannot open " + path);
        Json j = Json::parse(in, nullptr, false);
        if (j.is_discarded()) throw Error(ErrorCode::data, path + ": malformed JSON");
        if (j.value("format", std::string{}) != kModelFormat) {
            throw Error(ErrorCode::data, path + ": unsupported model format");
        }
        if (j.value("featurizer", std::string{}) != kFeaturizerVersion) {
            throw Error(ErrorCode::data, path + ": featurizer version mismatch");
        }
        ListwiseModel m;
        m.f_ = j.at("dims").at("f").get<size_t>();
        m.q_ = j.at("dims").at("q").get<size_t>();
        m.h_ = j.at("dims").at("h").get<size_t>();
        m.k_max_ = j.at("dims").at("k_max").get<size_t>();
        m.hp_.hidden = j.at("hyperparams").at("hidden").get<size_t>();
        m.hp_.epochs = j.at("hyperparams").at("epochs").get<size_t>();
        m.hp_.learning_rate = j.at("hyperparams").at("learning_rate").get<double>();
        m.hp_.batch_size = j.at("hyperparams").at("batch_size").get<size_t>();
        m.theta_ = j.at("theta").get<std::vector<double>>();
        if (m.theta_.size() != m.param_count()) {
            throw Error(ErrorCode::data, path + ": parameter count mismatch");
        }
        m.fitted_ = true;
        return m;
    }

    static size_t label_index(LabelValue v) { return static_cast<size_t>(v); }

private:
    struct Workspace {
        size_t n = 0;
        std::vector<double> x;        // n*f inputs
        std::vector<double> e;        // n*h tanh encodings
        std::vector<double> z;        // n*h encodings + positions
        std::vector<double> attn;     // n*n row-softmax weights
        std::vector<double> ctx;      // n*h attention context
        std::vector<double> u;        // n*h mixed outputs
        std::vector<double> pooled;   // h
        std::vector<double> head_in;  // h+q
        std::array<double, 3> logits{};
        std::array<double, 3> probs{};
    };

    size_t off_w_enc() const { return 0; }
    size_t off_b_enc() const { return h_ * f_; }
    size_t off_pos() const { return off_b_enc() + h_; }
    size_t off_w_mix() const { return off_pos() + k_max_ * h_; }
    size_t off_b_mix() const { return off_w_mix() + h_ * h_; }
    size_t off_w_head() const { return off_b_mix() + h_; }
    size_t off_b_head() const { return off_w_head() + 3 * (h_ + q_); }
    size_t param_count() const { return off_b_head() + 3; }

    void require_fitted() const {
        if (!fitted_) throw Error(ErrorCode::not_fitted, "model not fitted");
    }

    static void check_classes(const std::vector<ListwiseSample>& samples) {
        if (samples.empty()) throw Error(ErrorCode::invalid_argument, "empty dataset");
        std::array<size_t, 3> counts{0, 0, 0};
        for (const auto& s : samples) ++counts[label_index(s.label)];
        if (counts[0] == 0 || counts[1] == 0 || counts[2] == 0) {
            throw Error(ErrorCode::invalid_argument,
                        "every label class must be present (negative=" +
                            std::to_string(counts[0]) + ", even=" + std::to_string(counts[1]) +
                            ", positive=" + std::to_string(counts[2]) + ")");
        }
    }

    void check_sample(const std::vector<double>& qf,
                      const std::vector<std::vector<double>>& items) const {
        if (qf.size() != q_) throw Error(ErrorCode::invalid_argument, "query feature width mismatch");
        if (items.empty()) throw Error(ErrorCode::invalid_argument, "empty item list");
        if (items.size() > k_max_) {
            throw Error(ErrorCode::invalid_argument, "list longer than model k_max");
        }
        for (const auto& row : items) {
            if (row.size() != f_) throw Error(ErrorCode::invalid_argument, "item feature width mismatch");
        }
    }

    void forward(const std::vector<double>& qf, const std::vector<std::vector<double>>& items,
                 Workspace& w) const {
        check_sample(qf, items);
        size_t n = items.size();
        w.n = n;
        w.x.assign(n * f_, 0.0);
        w.e.assign(n * h_, 0.0);
        w.z.assign(n * h_, 0.0);
        w.attn.assign(n * n, 0.0);
        w.ctx.assign(n * h_, 0.0);
        w.u.assign(n * h_, 0.0);
        w.pooled.assign(h_, 0.0);
        w.head_in.assign(h_ + q_, 0.0);

        const double* w_enc = theta_.data() + off_w_enc();
        const double* b_enc = theta_.data() + off_b_enc();
        const double* pos = theta_.data() + off_pos();
        const double* w_mix = theta_.data() + off_w_mix();
        const double* b_mix = theta_.data() + off_b_mix();
        const double* w_head = theta_.data() + off_w_head();
        const double* b_head = theta_.data() + off_b_head();

        for (size_t i = 0; i < n; ++i) {
            for (size_t c = 0; c < f_; ++c) w.x[i * f_ + c] = items[i][c];
            for (size_t r = 0; r < h_; ++r) {
                double acc = b_enc[r];
                for (size_t c = 0; c < f_; ++c) acc += w_enc[r * f_ + c] * items[i][c];
                double e = std::tanh(acc);
                w.e[i * h_ + r] = e;
                w.z[i * h_ + r] = e + pos[i * h_ + r];
            }
        }

        double scale = 1.0 / std::sqrt(static_cast<double>(h_));
        for (size_t i = 0; i < n; ++i) {
            double max_s = -1e300;
            std::vector<double> row(n, 0.0);
            for (size_t j = 0; j < n; ++j) {
                double dot = 0.0;
                for (size_t r = 0; r < h_; ++r) dot += w.z[i * h_ + r] * w.z[j * h_ + r];
                row[j] = dot * scale;
                max_s = std::max(max_s, row[j]);
            }
            double denom = 0.0;
            for (size_t j = 0; j < n; ++j) {
                row[j] = std::exp(row[j] - max_s);
                denom += row[j];
            }
            for (size_t j = 0; j < n; ++j) {
                w.attn[i * n + j] = row[j] / denom;
                for (size_t r = 0; r < h_; ++r) {
                    w.ctx[i * h_ + r] += w.attn[i * n + j] * w.z[j * h_ + r];
                }
            }
        }

        for (size_t i = 0; i < n; ++i) {
            for (size_t r = 0; r < h_; ++r) {
                double acc = b_mix[r];
                for (size_t c = 0; c < h_; ++c) acc += w_mix[r * h_ + c] * w.ctx[i * h_ + c];
                double u = std::tanh(w.z[i * h_ + r] + acc);
                w.u[i * h_ + r] = u;
                w.pooled[r] += u / static_cast<double>(n);
            }
        }

        for (size_t r = 0; r < h_; ++r) w.head_in[r] = w.pooled[r];
        for (size_t c = 0; c < q_; ++c) w.head_in[h_ + c] = qf[c];

        double max_l = -1e300;
        for (size_t k = 0; k < 3; ++k) {
            double acc = b_head[k];
            for (size_t c = 0; c < h_ + q_; ++c) acc += w_head[k * (h_ + q_) + c] * w.head_in[c];
            w.logits[k] = acc;
            max_l = std::max(max_l, acc);
        }
        double denom = 0.0;
        for (size_t k = 0; k < 3; ++k) {
            w.probs[k] = std::exp(w.logits[k] - max_l);
            denom += w.probs[k];
        }
        for (size_t k = 0; k < 3; ++k) w.probs[k] /= denom;
    }

    void backward(const ListwiseSample& s, const Workspace& w, std::vector<double>& grad) const {
        size_t n = w.n;
        const double* w_mix = theta_.data() + off_w_mix();
        const double* w_head = theta_.data() + off_w_head();

        double* g_w_enc = grad.data() + off_w_enc();
        double* g_b_enc = grad.data() + off_b_enc();
        double* g_pos = grad.data() + off_pos();
        double* g_w_mix = grad.data() + off_w_mix();
        double* g_b_mix = grad.data() + off_b_mix();
        double* g_w_head = grad.data() + off_w_head();
        double* g_b_head = grad.data() + off_b_head();

        std::array<double, 3> dlogits{};
        for (size_t k = 0; k < 3; ++k) dlogits[k] = s.weight * w.probs[k];
        dlogits[label_index(s.label)] -= s.weight;

        std::vector<double> dhead_in(h_ + q_, 0.0);
        for (size_t k = 0; k < 3; ++k) {
            g_b_head[k] += dlogits[k];
            for (size_t c = 0; c < h_ + q_; ++c) {
                g_w_head[k * (h_ + q_) + c] += dlogits[k] * w.head_in[c];
                dhead_in[c] += w_head[k * (h_ + q_) + c] * dlogits[k];
            }
        }

        std::vector<double> dz(n * h_, 0.0);
        std::vector<double> dctx(n * h_, 0.0);
        for (size_t i = 0; i < n; ++i) {
            for (size_t r = 0; r < h_; ++r) {
                double du = dhead_in[r] / static_cast<double>(n);
                double u = w.u[i * h_ + r];
                double dt = du * (1.0 - u * u);
                dz[i * h_ + r] += dt;
                g_b_mix[r] += dt;
                for (size_t c = 0; c < h_; ++c) {
                    g_w_mix[r * h_ + c] += dt * w.ctx[i * h_ + c];
                    dctx[i * h_ + c] += w_mix[r * h_ + c] * dt;
                }
            }
        }

        // Attention backward: ctx_i = sum_j attn_ij z_j with row softmax over
        // scaled dot products of z.
        double scale = 1.0 / std::sqrt(static_cast<double>(h_));
        for (size_t i = 0; i < n; ++i) {
            std::vector<double> da(n, 0.0);
            for (size_t j = 0; j < n; ++j) {
                double acc = 0.0;
                for (size_t r = 0; r < h_; ++r) acc += dctx[i * h_ + r] * w.z[j * h_ + r];
                da[j] = acc;
                for (size_t r = 0; r < h_; ++r) {
                    dz[j * h_ + r] += w.attn[i * n + j] * dctx[i * h_ + r];
                }
            }
            double dot = 0.0;
            for (size_t k = 0; k < n; ++k) dot += w.attn[i * n + k] * da[k];
            for (size_t j = 0; j < n; ++j) {
                double ds = w.attn[i * n + j] * (da[j] - dot);
                for (size_t r = 0; r < h_; ++r) {
                    dz[i * h_ + r] += ds * w.z[j * h_ + r] * scale;
                    dz[j * h_ + r] += ds * w.z[i * h_ + r] * scale;
                }
            }
        }

        for (size_t i = 0; i < n; ++i) {
            for (size_t r = 0; r < h_; ++r) {
                double d = dz[i * h_ + r];
                g_pos[i * h_ + r] += d;
                double e = w.e[i * h_ + r];
                double dpre = d * (1.0 - e * e);
                g_b_enc[r] += dpre;
                for (size_t c = 0; c < f_; ++c) {
                    g_w_enc[r * f_ + c] += dpre * w.x[i * f_ + c];
                }
            }
        }
    }

    void train(const std::vector<ListwiseSample>& samples, size_t epochs, uint64_t seed) {
        for (const auto& s : samples) check_sample(s.query_features, s.item_features);
        Rng rng(splitmix64(seed + 0x7ea1ed));
        std::vector<size_t> order(samples.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;

        std::vector<double> grad(theta_.size(), 0.0);
        for (size_t epoch = 0; epoch < epochs; ++epoch) {
            rng.shuffle(order);
            for (size_t start = 0; start < order.size(); start += hp_.batch_size) {
                size_t end = std::min(start + hp_.batch_size, order.size());
                std::fill(grad.begin(), grad.end(), 0.0);
                for (size_t b = start; b < end; ++b) {
                    const auto& s = samples[order[b]];
                    Workspace w;
                    forward(s.query_features, s.item_features, w);
                    backward(s, w, grad);
                }
                double inv = 1.0 / static_cast<double>(end - start);
                for (size_t p = 0; p < theta_.size(); ++p) {
                    theta_[p] -= hp_.learning_rate * grad[p] * inv;
                }
            }
        }
    }

    std::vector<size_t> exhaustive_order(const std::vector<double>& qf,
                                         const std::vector<std::vector<double>>& items,
                                         size_t p_r) const {
        std::vector<size_t> current, best;
        std::vector<bool> used(items.size(), false);
        double best_quality = -1.0;
        std::vector<std::vector<double>> rows;
        rows.reserve(p_r);
        enumerate(qf, items, p_r, current, used, rows, best, best_quality);
        return best;
    }

    void enumerate(const std::vector<double>& qf, const std::vector<std::vector<double>>& items,
                   size_t p_r, std::vector<size_t>& current, std::vector<bool>& used,
                   std::vector<std::vector<double>>& rows, std::vector<size_t>& best,
                   double& best_quality) const {
        if (current.size() == p_r) {
            double quality = predict_quality(qf, rows);
            if (quality > best_quality) {
                best_quality = quality;
                best = current;
            }
            return;
        }
        for (size_t i = 0; i < items.size(); ++i) {
            if (used[i]) continue;
            used[i] = true;
            current.push_back(i);
            rows.push_back(items[i]);
            enumerate(qf, items, p_r, current, used, rows, best, best_quality);
            rows.pop_back();
            current.pop_back();
            used[i] = false;
        }
    }

    std::vector<size_t> beam_order(const std::vector<double>& qf,
                                   const std::vector<std::vector<double>>& items, size_t p_r,
                                   size_t width) const {
        struct Partial {
            std::vector<size_t> seq;
            double quality;
        };
        std::vector<Partial> beam{{std::vector<size_t>{}, 0.0}};
        for (size_t pos = 0; pos < p_r; ++pos) {
            std::vector<Partial> next;
            for (const auto& p : beam) {
                for (size_t i = 0; i < items.size(); ++i) {
                    if (std::find(p.seq.begin(), p.seq.end(), i) != p.seq.end()) continue;
                    Partial ext;
                    ext.seq = p.seq;
                    ext.seq.push_back(i);
                    std::vector<std::vector<double>> rows;
                    rows.reserve(ext.seq.size());
                    for (size_t s : ext.seq) rows.push_back(items[s]);
                    ext.quality = predict_quality(qf, rows);
                    next.push_back(std::move(ext));
                }
            }
            std::sort(next.begin(), next.end(), [](const Partial& a, const Partial& b) {
                if (a.quality != b.quality) return a.quality > b.quality;
                return a.seq < b.seq;
            });
            if (next.size() > width) next.resize(width);
            beam = std::move(next);
        }
        // Never return an order worse than the input order.
        std::vector<size_t> identity(p_r);
        for (size_t i = 0; i < p_r; ++i) identity[i] = i;
        std::vector<std::vector<double>> id_rows;
        for (size_t i = 0; i < p_r; ++i) id_rows.push_back(items[i]);
        double id_quality = predict_quality(qf, id_rows);
        if (beam.empty() || id_quality > beam.front().quality) return identity;
        return beam.front().seq;
    }

    size_t f_ = 0;
    size_t q_ = 0;
    size_t h_ = 0;
    size_t k_max_ = 0;
    ListwiseHyperparams hp_;
    std::vector<double> theta_;
    bool fitted_ = false;
};

}  // namespace pistis
