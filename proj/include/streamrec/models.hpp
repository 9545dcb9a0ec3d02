#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "streamrec/config.hpp"
#include "streamrec/rng.hpp"
#include "streamrec/sampling.hpp"
#include "streamrec/types.hpp"

namespace streamrec {

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    double e = std::exp(z);
    return e / (1.0 + e);
}

constexpr double kPredictionClamp = 1e-7;

//! Binary cross-entropy with the prediction clamped to [1e-7, 1-1e-7].
inline double bce_loss(double label, double prediction) {
    double p = std::clamp(prediction, kPredictionClamp, 1.0 - kPredictionClamp);
    return -(label * std::log(p) + (1.0 - label) * std::log(1.0 - p));
}

struct ModelDims {
    std::size_t num_users = 0;
    std::size_t num_items = 0;
    std::size_t embedding_dim = 0;
    std::vector<std::size_t> hidden_widths;  // perceptron tower after the 2d input

    friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

//! Non-owning view of one embedding table inside a model's parameter block.
class EmbeddingTableView {
  public:
    EmbeddingTableView(std::span<const double> values, std::size_t rows, std::size_t dim)
        : values_(values), rows_(rows), dim_(dim) {
        assert(values.size() == rows * dim);
    }

    std::size_t rows() const { return rows_; }
    std::size_t dim() const { return dim_; }

    std::span<const double> lookup(std::size_t id) const {
        if (id >= rows_) throw std::out_of_range("embedding id " + std::to_string(id));
        return values_.subspan(id * dim_, dim_);
    }

    bool all_finite() const {
        for (double x : values_)
            if (!std::isfinite(x)) return false;
        return true;
    }

  private:
    std::span<const double> values_;
    std::size_t rows_, dim_;
};

struct ParamGroup {
    std::string name;
    std::size_t offset = 0;
    std::size_t size = 0;
    enum class Init { GaussianEmbedding, GlorotUniform, LeCunNormal, Zero } init = Init::Zero;
};

/*!
 * Gradient of one batch w.r.t. the flat parameter vector. Only the listed
 * ranges carry meaning: dense layers always, embedding rows only for users
 * and items present in the batch. Untouched rows receive no update at all.
 */
struct SparseGradients {
    std::vector<double> values;
    std::vector<std::pair<std::size_t, std::size_t>> touched;  // sorted, disjoint [begin,end)
    double mean_bce = 0.0;
    double l2_penalty = 0.0;

    double loss() const { return mean_bce + l2_penalty; }

    double touched_norm() const {
        double acc = 0.0;
        for (auto [b, e] : touched)
            for (std::size_t i = b; i < e; ++i) acc += values[i] * values[i];
        return std::sqrt(acc);
    }
};

/*!
 * Adam over the flat parameter vector, applied lazily: moments and
 * parameters move only on the touched ranges of each step. The step counter
 * is global, incremented once per update call.
 */
class AdamState {
  public:
    explicit AdamState(std::size_t num_params) : m_(num_params, 0.0), v_(num_params, 0.0) {}

    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    std::uint64_t step_count() const { return t_; }
    std::size_t size() const { return m_.size(); }

    void apply(std::span<double> params, const SparseGradients& grads, double learning_rate) {
        if (params.size() != m_.size() || grads.values.size() != m_.size())
            throw std::invalid_argument("adam state does not shape-match parameters");
        ++t_;
        double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
        double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
        for (auto [b, e] : grads.touched) {
            for (std::size_t i = b; i < e; ++i) {
                double g = grads.values[i];
                m_[i] = beta1 * m_[i] + (1.0 - beta1) * g;
                v_[i] = beta2 * v_[i] + (1.0 - beta2) * g * g;
                double mhat = m_[i] / bc1;
                double vhat = v_[i] / bc2;
                params[i] -= learning_rate * mhat / (std::sqrt(vhat) + epsilon);
            }
        }
    }

  private:
    std::vector<double> m_, v_;
    std::uint64_t t_ = 0;
};

struct TrainStats {
    double mean_bce = 0.0;
    double l2_penalty = 0.0;
    double gradient_norm = 0.0;  // before clipping
    bool clipped = false;
};

constexpr double kGradientClipNorm = 5.0;

/*!
 * One embedding-based recommender: GMF, MLP, or NeuMF. All parameters live
 * in a single flat vector in declaration order (the checkpoint layout):
 *
 *   GMF:   user table | item table | output weights (d) | output bias
 *   MLP:   user table | item table | dense layers 2d->h0->...->1 (W then b)
 *   NeuMF: GMF tables | MLP tables | MLP layers 2d->h0->...->h_last |
 *          fusion weights (d + h_last) | fusion bias
 *
 * The hidden tower is ReLU, the output sigmoid. NeuMF keeps separate
 * embedding tables per branch and exposes its GMF-branch pair embedding.
 */
class IndividualModel {
  public:
    IndividualModel(ModelKind kind, ModelDims dims) : kind_(kind), dims_(std::move(dims)) {
        if (dims_.num_users == 0 || dims_.num_items == 0 || dims_.embedding_dim == 0)
            throw std::invalid_argument("model dims must be positive");
        if (kind_ != ModelKind::Gmf) {
            if (dims_.hidden_widths.empty())
                throw std::invalid_argument("perceptron tower needs at least one hidden width");
            for (std::size_t w : dims_.hidden_widths)
                if (w == 0) throw std::invalid_argument("hidden widths must be positive");
        }
        build_layout();
        params_.assign(total_, 0.0);
    }

    static IndividualModel initialized(ModelKind kind, ModelDims dims, Rng& rng) {
        IndividualModel model(kind, std::move(dims));
        model.init_parameters(rng);
        return model;
    }

    ModelKind kind() const { return kind_; }
    const ModelDims& dims() const { return dims_; }
    std::size_t num_parameters() const { return total_; }
    std::span<double> parameters() { return params_; }
    std::span<const double> parameters() const { return params_; }
    const std::vector<ParamGroup>& parameter_groups() const { return groups_; }

    //! Predicted interaction probability, sigmoid output.
    double predict(UserId u, ItemId v) const {
        check_ids(u, v);
        switch (kind_) {
            case ModelKind::Gmf: return sigmoid(gmf_logit(u, v));
            case ModelKind::Mlp: {
                std::vector<double> scratch;
                return sigmoid(mlp_logit(u, v, scratch, nullptr));
            }
            case ModelKind::NeuMf: {
                std::vector<double> scratch;
                return sigmoid(neumf_logit(u, v, scratch, nullptr));
            }
        }
        return 0.5;
    }

    //! Scores one user against many items; scratch reused across candidates.
    void score_candidates(UserId u, std::span<const ItemId> items, std::span<double> out) const {
        assert(out.size() == items.size());
        std::vector<double> scratch;
        for (std::size_t i = 0; i < items.size(); ++i) {
            check_ids(u, items[i]);
            switch (kind_) {
                case ModelKind::Gmf: out[i] = sigmoid(gmf_logit(u, items[i])); break;
                case ModelKind::Mlp: out[i] = sigmoid(mlp_logit(u, items[i], scratch, nullptr)); break;
                case ModelKind::NeuMf:
                    out[i] = sigmoid(neumf_logit(u, items[i], scratch, nullptr));
                    break;
            }
        }
    }

    //! Concatenated pair embedding [p_u; q_v]; the GMF branch for NeuMF.
    void pair_embedding(UserId u, ItemId v, std::span<double> out) const {
        check_ids(u, v);
        std::size_t d = dims_.embedding_dim;
        if (out.size() != 2 * d) throw std::invalid_argument("pair embedding needs a 2d buffer");
        std::size_t uoff = user_table_off_ + static_cast<std::size_t>(u) * d;
        std::size_t voff = item_table_off_ + static_cast<std::size_t>(v) * d;
        std::copy_n(params_.begin() + static_cast<std::ptrdiff_t>(uoff), d, out.begin());
        std::copy_n(params_.begin() + static_cast<std::ptrdiff_t>(voff), d,
                    out.begin() + static_cast<std::ptrdiff_t>(d));
    }

    std::vector<double> pair_embedding(UserId u, ItemId v) const {
        std::vector<double> out(2 * dims_.embedding_dim);
        pair_embedding(u, v, out);
        return out;
    }

    //! Views of the embedding tables backing pair_embedding (GMF branch for NeuMF).
    EmbeddingTableView user_table() const {
        return {parameters().subspan(user_table_off_, dims_.num_users * dims_.embedding_dim),
                dims_.num_users, dims_.embedding_dim};
    }
    EmbeddingTableView item_table() const {
        return {parameters().subspan(item_table_off_, dims_.num_items * dims_.embedding_dim),
                dims_.num_items, dims_.embedding_dim};
    }

    /*!
     * Mean-batch BCE plus L2 gradient. L2 covers the dense parameters and
     * the embedding rows present in the batch; rows outside the batch stay
     * untouched. Matches batch_loss for finite-difference checks.
     */
    SparseGradients gradients(const std::vector<LabeledExample>& batch, double l2_weight) const {
        if (batch.empty()) throw std::invalid_argument("train batch is empty");
        SparseGradients g;
        g.values.assign(total_, 0.0);
        collect_touched(batch, g.touched);

        double inv_b = 1.0 / static_cast<double>(batch.size());
        double bce_sum = 0.0;
        std::vector<double> scratch, acts;
        for (const auto& ex : batch) {
            check_ids(ex.user, ex.item);
            double z = 0.0;
            switch (kind_) {
                case ModelKind::Gmf: z = gmf_logit(ex.user, ex.item); break;
                case ModelKind::Mlp: z = mlp_logit(ex.user, ex.item, scratch, &acts); break;
                case ModelKind::NeuMf: z = neumf_logit(ex.user, ex.item, scratch, &acts); break;
            }
            double yhat = sigmoid(z);
            bce_sum += bce_loss(ex.label, yhat);
            double delta = (yhat - ex.label) * inv_b;  // dL/dz of the batch mean
            switch (kind_) {
                case ModelKind::Gmf: gmf_backward(ex.user, ex.item, delta, g.values); break;
                case ModelKind::Mlp: mlp_backward(ex.user, ex.item, delta, acts, g.values); break;
                case ModelKind::NeuMf: neumf_backward(ex.user, ex.item, delta, acts, g.values); break;
            }
        }
        g.mean_bce = bce_sum * inv_b;

        if (l2_weight > 0.0) {
            double sq = 0.0;
            for (auto [b, e] : g.touched) {
                for (std::size_t i = b; i < e; ++i) {
                    g.values[i] += l2_weight * params_[i];
                    sq += params_[i] * params_[i];
                }
            }
            g.l2_penalty = 0.5 * l2_weight * sq;
        }
        return g;
    }

    //! The objective gradients() differentiates; finite-difference oracle target.
    double batch_loss(const std::vector<LabeledExample>& batch, double l2_weight) const {
        if (batch.empty()) throw std::invalid_argument("train batch is empty");
        double bce_sum = 0.0;
        std::vector<double> scratch;
        for (const auto& ex : batch) {
            double z = 0.0;
            switch (kind_) {
                case ModelKind::Gmf: z = gmf_logit(ex.user, ex.item); break;
                case ModelKind::Mlp: z = mlp_logit(ex.user, ex.item, scratch, nullptr); break;
                case ModelKind::NeuMf: z = neumf_logit(ex.user, ex.item, scratch, nullptr); break;
            }
            bce_sum += bce_loss(ex.label, sigmoid(z));
        }
        double loss = bce_sum / static_cast<double>(batch.size());
        if (l2_weight > 0.0) {
            std::vector<std::pair<std::size_t, std::size_t>> touched;
            collect_touched(batch, touched);
            double sq = 0.0;
            for (auto [b, e] : touched)
                for (std::size_t i = b; i < e; ++i) sq += params_[i] * params_[i];
            loss += 0.5 * l2_weight * sq;
        }
        return loss;
    }

    //! One Adam step on the batch. Returns the loss before the step.
    TrainStats train_step(const std::vector<LabeledExample>& batch, AdamState& adam,
                          double learning_rate, double l2_weight) {
        SparseGradients g = gradients(batch, l2_weight);
        double norm = g.touched_norm();
        if (!std::isfinite(norm)) {
            std::string diag = "non-finite gradient;";
            for (const auto& grp : parameter_groups()) {
                double sq = 0.0;
                for (std::size_t i = grp.offset; i < grp.offset + grp.size; ++i)
                    sq += params_[i] * params_[i];
                diag += " |" + grp.name + "|=" + std::to_string(std::sqrt(sq));
            }
            throw std::runtime_error(diag);
        }
        TrainStats stats{g.mean_bce, g.l2_penalty, norm, false};
        if (norm > kGradientClipNorm) {
            double scale = kGradientClipNorm / norm;
            for (auto [b, e] : g.touched)
                for (std::size_t i = b; i < e; ++i) g.values[i] *= scale;
            stats.clipped = true;
        }
        adam.apply(params_, g, learning_rate);
        return stats;
    }

    void save(std::ostream& out) const {
        write_u32(out, kMagic);
        write_u32(out, static_cast<std::uint32_t>(kind_));
        write_u64(out, dims_.num_users);
        write_u64(out, dims_.num_items);
        write_u64(out, dims_.embedding_dim);
        write_u64(out, dims_.hidden_widths.size());
        for (std::size_t w : dims_.hidden_widths) write_u64(out, w);
        // parameter body: 64-bit reals, little-endian, declaration order
        for (double p : params_) write_f64(out, p);
        if (!out) throw std::runtime_error("checkpoint write failed");
    }

    static IndividualModel load(std::istream& in) {
        if (read_u32(in) != kMagic) throw std::runtime_error("not a model checkpoint");
        std::uint32_t kind_raw = read_u32(in);
        if (kind_raw > 2) throw std::runtime_error("unknown model kind in checkpoint");
        ModelDims dims;
        dims.num_users = read_u64(in);
        dims.num_items = read_u64(in);
        dims.embedding_dim = read_u64(in);
        std::size_t n_hidden = read_u64(in);
        dims.hidden_widths.resize(n_hidden);
        for (std::size_t i = 0; i < n_hidden; ++i) dims.hidden_widths[i] = read_u64(in);
        IndividualModel model(static_cast<ModelKind>(kind_raw), std::move(dims));
        for (double& p : model.params_) p = read_f64(in);
        if (!in) throw std::runtime_error("checkpoint truncated");
        return model;
    }

  private:
    static constexpr std::uint32_t kMagic = 0x314D5253;  // "SRM1"

    struct LayerSpec {
        std::size_t w_off = 0, b_off = 0;
        std::size_t in = 0, out = 0;
    };

    void check_ids(UserId u, ItemId v) const {
        if (u >= dims_.num_users)
            throw std::out_of_range("user id " + std::to_string(u) + " out of range");
        if (v >= dims_.num_items)
            throw std::out_of_range("item id " + std::to_string(v) + " out of range");
    }

    std::size_t add_group(const std::string& name, std::size_t size, ParamGroup::Init init) {
        std::size_t off = total_;
        groups_.push_back({name, off, size, init});
        total_ += size;
        return off;
    }

    void build_layout() {
        std::size_t d = dims_.embedding_dim;
        std::size_t m = dims_.num_users, n = dims_.num_items;
        auto emb = ParamGroup::Init::GaussianEmbedding;
        auto glorot = ParamGroup::Init::GlorotUniform;
        auto lecun = ParamGroup::Init::LeCunNormal;
        auto zero = ParamGroup::Init::Zero;

        if (kind_ == ModelKind::Gmf) {
            user_table_off_ = add_group("user_embeddings", m * d, emb);
            item_table_off_ = add_group("item_embeddings", n * d, emb);
            dense_begin_ = total_;
            out_w_off_ = add_group("output_weights", d, lecun);
            out_b_off_ = add_group("output_bias", 1, zero);
            return;
        }

        if (kind_ == ModelKind::Mlp) {
            user_table_off_ = add_group("user_embeddings", m * d, emb);
            item_table_off_ = add_group("item_embeddings", n * d, emb);
            dense_begin_ = total_;
            std::vector<std::size_t> widths;
            widths.push_back(2 * d);
            for (std::size_t w : dims_.hidden_widths) widths.push_back(w);
            widths.push_back(1);
            for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
                bool output_layer = (l + 2 == widths.size());
                LayerSpec spec;
                spec.in = widths[l];
                spec.out = widths[l + 1];
                std::string tag = output_layer ? "output" : "hidden" + std::to_string(l + 1);
                spec.w_off = add_group(tag + "_weights", spec.in * spec.out,
                                       output_layer ? lecun : glorot);
                spec.b_off = add_group(tag + "_bias", spec.out, zero);
                layers_.push_back(spec);
            }
            return;
        }

        // NeuMF: separate tables per branch, perceptron tower without its
        // output layer, then the fusion layer over [phi_gmf; phi_mlp_last].
        user_table_off_ = add_group("gmf_user_embeddings", m * d, emb);
        item_table_off_ = add_group("gmf_item_embeddings", n * d, emb);
        mlp_user_off_ = add_group("mlp_user_embeddings", m * d, emb);
        mlp_item_off_ = add_group("mlp_item_embeddings", n * d, emb);
        dense_begin_ = total_;
        std::vector<std::size_t> widths;
        widths.push_back(2 * d);
        for (std::size_t w : dims_.hidden_widths) widths.push_back(w);
        for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
            LayerSpec spec;
            spec.in = widths[l];
            spec.out = widths[l + 1];
            std::string tag = "hidden" + std::to_string(l + 1);
            spec.w_off = add_group(tag + "_weights", spec.in * spec.out, glorot);
            spec.b_off = add_group(tag + "_bias", spec.out, zero);
            layers_.push_back(spec);
        }
        fusion_in_ = d + dims_.hidden_widths.back();
        out_w_off_ = add_group("fusion_weights", fusion_in_, lecun);
        out_b_off_ = add_group("fusion_bias", 1, zero);
    }

    void init_parameters(Rng& rng) {
        for (const auto& grp : groups_) {
            switch (grp.init) {
                case ParamGroup::Init::GaussianEmbedding:
                    // N(0, 0.25): variance 0.25, std 0.5
                    for (std::size_t i = 0; i < grp.size; ++i)
                        params_[grp.offset + i] = rng.normal(0.0, 0.5);
                    break;
                case ParamGroup::Init::GlorotUniform: {
                    const LayerSpec* spec = layer_for_group(grp.offset);
                    double limit = std::sqrt(6.0 / static_cast<double>(spec->in + spec->out));
                    for (std::size_t i = 0; i < grp.size; ++i)
                        params_[grp.offset + i] = rng.uniform_range(-limit, limit);
                    break;
                }
                case ParamGroup::Init::LeCunNormal: {
                    std::size_t fan_in = fan_in_for_output(grp);
                    double stddev = std::sqrt(1.0 / static_cast<double>(fan_in));
                    for (std::size_t i = 0; i < grp.size; ++i)
                        params_[grp.offset + i] = rng.normal(0.0, stddev);
                    break;
                }
                case ParamGroup::Init::Zero:
                    break;  // biases stay zero
            }
        }
    }

    const LayerSpec* layer_for_group(std::size_t offset) const {
        for (const auto& l : layers_)
            if (l.w_off == offset) return &l;
        throw std::logic_error("no layer at offset");
    }

    std::size_t fan_in_for_output(const ParamGroup& grp) const {
        if (kind_ == ModelKind::Gmf) return dims_.embedding_dim;
        if (kind_ == ModelKind::NeuMf && grp.offset == out_w_off_) return fusion_in_;
        return layers_.back().in;  // MLP output layer
    }

    // ---- forward passes ----

    double gmf_logit(UserId u, ItemId v) const {
        std::size_t d = dims_.embedding_dim;
        const double* p = params_.data() + user_table_off_ + static_cast<std::size_t>(u) * d;
        const double* q = params_.data() + item_table_off_ + static_cast<std::size_t>(v) * d;
        const double* w = params_.data() + out_w_off_;
        double z = params_[out_b_off_];
        for (std::size_t i = 0; i < d; ++i) z += w[i] * p[i] * q[i];
        return z;
    }

    /*!
     * Perceptron tower forward. `acts` (when given) captures, per example,
     * the activation sequence x0, x1, ..., needed for backprop; the layout
     * is consecutive segments sized by layer widths.
     */
    double tower_forward(std::size_t uoff, std::size_t voff, bool through_output,
                         std::vector<double>& scratch, std::vector<double>* acts) const {
        std::size_t d = dims_.embedding_dim;
        // x0 = [p_u; q_v]
        scratch.assign(2 * d, 0.0);
        std::copy_n(params_.data() + uoff, d, scratch.data());
        std::copy_n(params_.data() + voff, d, scratch.data() + d);
        if (acts) {
            acts->clear();
            acts->insert(acts->end(), scratch.begin(), scratch.end());
        }
        std::vector<double> next;
        double logit = 0.0;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            const LayerSpec& spec = layers_[l];
            bool is_output = through_output && (l + 1 == layers_.size());
            next.assign(spec.out, 0.0);
            const double* W = params_.data() + spec.w_off;
            const double* b = params_.data() + spec.b_off;
            for (std::size_t o = 0; o < spec.out; ++o) {
                double z = b[o];
                const double* row = W + o * spec.in;
                for (std::size_t i = 0; i < spec.in; ++i) z += row[i] * scratch[i];
                next[o] = is_output ? z : (z > 0.0 ? z : 0.0);  // ReLU hidden
            }
            if (is_output) logit = next[0];
            scratch.swap(next);
            if (acts) acts->insert(acts->end(), scratch.begin(), scratch.end());
        }
        return logit;
    }

    double mlp_logit(UserId u, ItemId v, std::vector<double>& scratch,
                     std::vector<double>* acts) const {
        std::size_t d = dims_.embedding_dim;
        return tower_forward(user_table_off_ + static_cast<std::size_t>(u) * d,
                             item_table_off_ + static_cast<std::size_t>(v) * d, true, scratch, acts);
    }

    double neumf_logit(UserId u, ItemId v, std::vector<double>& scratch,
                       std::vector<double>* acts) const {
        std::size_t d = dims_.embedding_dim;
        tower_forward(mlp_user_off_ + static_cast<std::size_t>(u) * d,
                      mlp_item_off_ + static_cast<std::size_t>(v) * d, false, scratch, acts);
        // scratch now holds phi_mlp_last
        const double* pg = params_.data() + user_table_off_ + static_cast<std::size_t>(u) * d;
        const double* qg = params_.data() + item_table_off_ + static_cast<std::size_t>(v) * d;
        const double* wf = params_.data() + out_w_off_;
        double z = params_[out_b_off_];
        for (std::size_t i = 0; i < d; ++i) z += wf[i] * pg[i] * qg[i];
        std::size_t h = layers_.back().out;
        for (std::size_t i = 0; i < h; ++i) z += wf[d + i] * scratch[i];
        return z;
    }

    // ---- backward passes (accumulate into flat gradient) ----

    void gmf_backward(UserId u, ItemId v, double delta, std::vector<double>& grad) const {
        std::size_t d = dims_.embedding_dim;
        std::size_t uoff = user_table_off_ + static_cast<std::size_t>(u) * d;
        std::size_t voff = item_table_off_ + static_cast<std::size_t>(v) * d;
        const double* p = params_.data() + uoff;
        const double* q = params_.data() + voff;
        const double* w = params_.data() + out_w_off_;
        for (std::size_t i = 0; i < d; ++i) {
            double phi = p[i] * q[i];
            grad[out_w_off_ + i] += delta * phi;
            double dphi = delta * w[i];
            grad[uoff + i] += dphi * q[i];
            grad[voff + i] += dphi * p[i];
        }
        grad[out_b_off_] += delta;
    }

    /*!
     * Backprop through the tower given captured activations; returns the
     * gradient w.r.t. x0 split into the two embedding rows. `delta_top` is
     * dL/d(top activation): scalar for an output tower, vector otherwise.
     */
    void tower_backward(std::size_t uoff, std::size_t voff, bool through_output,
                        std::span<const double> delta_top, const std::vector<double>& acts,
                        std::vector<double>& grad) const {
        std::size_t d = dims_.embedding_dim;
        // activation segment offsets inside acts
        std::vector<std::size_t> seg_off;
        std::size_t off = 0;
        seg_off.push_back(0);
        off += 2 * d;
        for (const auto& l : layers_) {
            seg_off.push_back(off);
            off += l.out;
        }
        std::vector<double> delta(delta_top.begin(), delta_top.end());
        std::vector<double> delta_prev;
        for (std::size_t li = layers_.size(); li-- > 0;) {
            const LayerSpec& spec = layers_[li];
            bool is_output = through_output && (li + 1 == layers_.size());
            const double* x_prev = acts.data() + seg_off[li];
            const double* x_here = acts.data() + seg_off[li + 1];
            // ReLU gate: zero activation means zero (or negative) pre-activation
            if (!is_output)
                for (std::size_t o = 0; o < spec.out; ++o)
                    if (x_here[o] <= 0.0) delta[o] = 0.0;
            delta_prev.assign(spec.in, 0.0);
            const double* W = params_.data() + spec.w_off;
            for (std::size_t o = 0; o < spec.out; ++o) {
                double dz = delta[o];
                if (dz == 0.0) continue;
                double* gw = grad.data() + spec.w_off + o * spec.in;
                const double* row = W + o * spec.in;
                for (std::size_t i = 0; i < spec.in; ++i) {
                    gw[i] += dz * x_prev[i];
                    delta_prev[i] += dz * row[i];
                }
                grad[spec.b_off + o] += dz;
            }
            delta.swap(delta_prev);
        }
        // delta now holds dL/dx0 = [dL/dp_u; dL/dq_v]
        for (std::size_t i = 0; i < d; ++i) {
            grad[uoff + i] += delta[i];
            grad[voff + i] += delta[d + i];
        }
    }

    void mlp_backward(UserId u, ItemId v, double delta, const std::vector<double>& acts,
                      std::vector<double>& grad) const {
        std::size_t d = dims_.embedding_dim;
        double top[1] = {delta};
        tower_backward(user_table_off_ + static_cast<std::size_t>(u) * d,
                       item_table_off_ + static_cast<std::size_t>(v) * d, true, top, acts, grad);
    }

    void neumf_backward(UserId u, ItemId v, double delta, const std::vector<double>& acts,
                        std::vector<double>& grad) const {
        std::size_t d = dims_.embedding_dim;
        std::size_t h = layers_.back().out;
        std::size_t ug = user_table_off_ + static_cast<std::size_t>(u) * d;
        std::size_t vg = item_table_off_ + static_cast<std::size_t>(v) * d;
        const double* pg = params_.data() + ug;
        const double* qg = params_.data() + vg;
        const double* wf = params_.data() + out_w_off_;
        const double* phi_mlp = acts.data() + (acts.size() - h);
        // fusion layer
        for (std::size_t i = 0; i < d; ++i) {
            double phi = pg[i] * qg[i];
            grad[out_w_off_ + i] += delta * phi;
            double dphi = delta * wf[i];
            grad[ug + i] += dphi * qg[i];
            grad[vg + i] += dphi * pg[i];
        }
        std::vector<double> delta_mlp(h);
        for (std::size_t i = 0; i < h; ++i) {
            grad[out_w_off_ + d + i] += delta * phi_mlp[i];
            delta_mlp[i] = delta * wf[d + i];
        }
        grad[out_b_off_] += delta;
        tower_backward(mlp_user_off_ + static_cast<std::size_t>(u) * d,
                       mlp_item_off_ + static_cast<std::size_t>(v) * d, false, delta_mlp, acts,
                       grad);
    }

    void collect_touched(const std::vector<LabeledExample>& batch,
                         std::vector<std::pair<std::size_t, std::size_t>>& touched) const {
        std::size_t d = dims_.embedding_dim;
        std::vector<UserId> users;
        std::vector<ItemId> items;
        users.reserve(batch.size());
        items.reserve(batch.size());
        for (const auto& ex : batch) {
            users.push_back(ex.user);
            items.push_back(ex.item);
        }
        std::sort(users.begin(), users.end());
        users.erase(std::unique(users.begin(), users.end()), users.end());
        std::sort(items.begin(), items.end());
        items.erase(std::unique(items.begin(), items.end()), items.end());

        touched.clear();
        auto add_rows = [&](std::size_t table_off, auto& ids) {
            for (auto id : ids) {
                std::size_t b = table_off + static_cast<std::size_t>(id) * d;
                touched.emplace_back(b, b + d);
            }
        };
        add_rows(user_table_off_, users);
        add_rows(item_table_off_, items);
        if (kind_ == ModelKind::NeuMf) {
            add_rows(mlp_user_off_, users);
            add_rows(mlp_item_off_, items);
        }
        touched.emplace_back(dense_begin_, total_);
    }

    // ---- little-endian scalar io ----

    static void write_u32(std::ostream& out, std::uint32_t x) {
        unsigned char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((x >> (8 * i)) & 0xFF);
        out.write(reinterpret_cast<const char*>(b), 4);
    }
    static void write_u64(std::ostream& out, std::uint64_t x) {
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((x >> (8 * i)) & 0xFF);
        out.write(reinterpret_cast<const char*>(b), 8);
    }
    static void write_f64(std::ostream& out, double x) {
        std::uint64_t bits;
        std::memcpy(&bits, &x, 8);
        write_u64(out, bits);
    }
    static std::uint32_t read_u32(std::istream& in) {
        unsigned char b[4];
        in.read(reinterpret_cast<char*>(b), 4);
        std::uint32_t x = 0;
        for (int i = 0; i < 4; ++i) x |= static_cast<std::uint32_t>(b[i]) << (8 * i);
        return x;
    }
    static std::uint64_t read_u64(std::istream& in) {
        unsigned char b[8];
        in.read(reinterpret_cast<char*>(b), 8);
        std::uint64_t x = 0;
        for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        return x;
    }
    static double read_f64(std::istream& in) {
        std::uint64_t bits = read_u64(in);
        double x;
        std::memcpy(&x, &bits, 8);
        return x;
    }

    ModelKind kind_;
    ModelDims dims_;
    std::vector<double> params_;
    std::vector<ParamGroup> groups_;
    std::vector<LayerSpec> layers_;
    std::size_t total_ = 0;
    std::size_t user_table_off_ = 0, item_table_off_ = 0;  // GMF branch for NeuMF
    std::size_t mlp_user_off_ = 0, mlp_item_off_ = 0;      // NeuMF only
    std::size_t dense_begin_ = 0;
    std::size_t out_w_off_ = 0, out_b_off_ = 0;  // GMF output / NeuMF fusion
    std::size_t fusion_in_ = 0;

    friend class ModelTestAccess;
};

//! Builds the model dimensions for a universe under one config.
inline ModelDims model_dims(const ExperimentConfig& cfg, std::size_t num_users,
                            std::size_t num_items) {
    ModelDims dims;
    dims.num_users = num_users;
    dims.num_items = num_items;
    dims.embedding_dim = cfg.embedding_dim;
    dims.hidden_widths = cfg.mlp_hidden_widths;
    return dims;
}

}  // namespace streamrec
