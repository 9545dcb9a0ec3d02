#pragma once

#include <cctype>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace streamrec {

enum class ModelKind { Gmf, Mlp, NeuMf };
enum class SamplerKind { Sts, Ndo, Rr, Sw };
enum class FuserKind { Ael, Avg, AdaW };

inline std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::Gmf: return "GMF";
        case ModelKind::Mlp: return "MLP";
        case ModelKind::NeuMf: return "NeuMF";
    }
    return "?";
}
inline std::string to_string(SamplerKind k) {
    switch (k) {
        case SamplerKind::Sts: return "STS";
        case SamplerKind::Ndo: return "NDO";
        case SamplerKind::Rr: return "RR";
        case SamplerKind::Sw: return "SW";
    }
    return "?";
}
inline std::string to_string(FuserKind k) {
    switch (k) {
        case FuserKind::Ael: return "AEL";
        case FuserKind::Avg: return "AVG";
        case FuserKind::AdaW: return "AdaW";
    }
    return "?";
}

namespace detail {
inline std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}
}  // namespace detail

inline ModelKind parse_model_kind(const std::string& s) {
    std::string v = detail::lower(s);
    if (v == "gmf") return ModelKind::Gmf;
    if (v == "mlp") return ModelKind::Mlp;
    if (v == "neumf") return ModelKind::NeuMf;
    throw std::invalid_argument("model_kind must be one of GMF|MLP|NeuMF, got '" + s + "'");
}
inline SamplerKind parse_sampler_kind(const std::string& s) {
    std::string v = detail::lower(s);
    if (v == "sts") return SamplerKind::Sts;
    if (v == "ndo") return SamplerKind::Ndo;
    if (v == "rr") return SamplerKind::Rr;
    if (v == "sw") return SamplerKind::Sw;
    throw std::invalid_argument("sampler_kind must be one of STS|NDO|RR|SW, got '" + s + "'");
}
inline FuserKind parse_fuser_kind(const std::string& s) {
    std::string v = detail::lower(s);
    if (v == "ael") return FuserKind::Ael;
    if (v == "avg") return FuserKind::Avg;
    if (v == "adaw") return FuserKind::AdaW;
    throw std::invalid_argument("fuser_kind must be one of AEL|AVG|AdaW, got '" + s + "'");
}

/*!
 * Full experiment configuration. Defaults follow the documented defaults
 * table; every field can be set from a config file or a key=value override.
 *
 * batch_size doubles as n_p: the number of interactions processed per
 * training iteration is one training batch per model.
 */
struct ExperimentConfig {
    double alpha = 0.5;                       // share of each batch drawn from new data
    double lambda_new = 1.02;                 // recency decay over new data
    double lambda_res = 1.005;                // recency decay over the reservoir
    std::size_t reservoir_capacity = 10000;
    std::size_t batch_size = 256;             // bs; bound to n_p
    std::size_t n_receive = 256;              // n_r
    std::size_t num_models = 8;               // o
    ModelKind model_kind = ModelKind::NeuMf;
    std::size_t embedding_dim = 16;           // d
    std::vector<std::size_t> mlp_hidden_widths = {16, 8};  // after the 2d input
    double learning_rate = 0.001;
    double l2_weight = 1e-6;
    std::size_t negative_ratio = 4;           // negatives per positive
    std::size_t memory_top_e = 10;            // neighbors per confidence estimate
    std::size_t eval_negatives = 99;
    std::size_t top_k = 10;
    std::uint64_t rng_seed = 42;
    SamplerKind sampler_kind = SamplerKind::Sts;
    FuserKind fuser_kind = FuserKind::Ael;
    double train_fraction = 0.9;
    std::size_t sliding_window = 0;           // SW sampler window; 0 means batch_size

    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;

    std::size_t window_size() const { return sliding_window == 0 ? batch_size : sliding_window; }

    void validate() const {
        if (alpha < 0.0 || alpha > 1.0)
            throw std::invalid_argument("alpha must lie in [0,1], got " + std::to_string(alpha));
        if (lambda_new < 1.0)
            throw std::invalid_argument("lambda_new must be >= 1, got " + std::to_string(lambda_new));
        if (lambda_res < 1.0)
            throw std::invalid_argument("lambda_res must be >= 1, got " + std::to_string(lambda_res));
        if (reservoir_capacity == 0) throw std::invalid_argument("reservoir_capacity must be positive");
        if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
        if (n_receive == 0) throw std::invalid_argument("n_r must be positive");
        if (num_models == 0) throw std::invalid_argument("num_models must be positive");
        if (embedding_dim == 0) throw std::invalid_argument("embedding_dim must be positive");
        for (std::size_t w : mlp_hidden_widths)
            if (w == 0) throw std::invalid_argument("mlp_layer_widths entries must be positive");
        if (learning_rate < 0.0) throw std::invalid_argument("learning_rate must be >= 0");
        if (l2_weight < 0.0) throw std::invalid_argument("l2_weight must be >= 0");
        if (memory_top_e == 0) throw std::invalid_argument("memory_top_e must be positive");
        if (eval_negatives == 0) throw std::invalid_argument("eval_negatives must be positive");
        if (top_k == 0) throw std::invalid_argument("top_k must be positive");
        if (train_fraction <= 0.0 || train_fraction >= 1.0)
            throw std::invalid_argument("train_fraction must lie in (0,1), got " +
                                        std::to_string(train_fraction));
    }
};

/*!
 * One runnable experiment: the configuration plus filesystem context.
 * repeats > 1 reruns with seeds rng_seed, rng_seed+1, ... and writes a
 * median summary next to the per-seed outputs.
 */
struct RunSpec {
    ExperimentConfig config;
    std::string dataset_path;
    std::string out_dir;
    std::string label = "run";
    std::size_t repeats = 1;
    std::size_t workers = 1;
    std::size_t subsample_users = 0;  // 0 = keep all

    friend bool operator==(const RunSpec&, const RunSpec&) = default;

    void validate() const {
        config.validate();
        if (repeats == 0) throw std::invalid_argument("repeats must be >= 1");
        if (workers == 0) throw std::invalid_argument("workers must be >= 1");
    }
};

namespace detail {

inline std::vector<std::size_t> parse_width_list(const std::string& value) {
    std::vector<std::size_t> widths;
    std::string tok;
    std::istringstream in(value);
    while (std::getline(in, tok, ',')) {
        if (tok.empty()) continue;
        widths.push_back(static_cast<std::size_t>(std::stoull(tok)));
    }
    if (widths.empty()) throw std::invalid_argument("mlp_layer_widths must list at least one width");
    return widths;
}

inline std::string join_widths(const std::vector<std::size_t>& widths) {
    std::string out;
    for (std::size_t i = 0; i < widths.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(widths[i]);
    }
    return out;
}

}  // namespace detail

//! Applies one key=value pair to a RunSpec. Unknown keys are an error.
inline void apply_key(RunSpec& spec, const std::string& key, const std::string& value) {
    ExperimentConfig& c = spec.config;
    bool known = true;
    try {
        if (key == "alpha") c.alpha = std::stod(value);
        else if (key == "lambda_new") c.lambda_new = std::stod(value);
        else if (key == "lambda_res") c.lambda_res = std::stod(value);
        else if (key == "reservoir_capacity") c.reservoir_capacity = std::stoull(value);
        else if (key == "bs" || key == "batch_size" || key == "n_p") c.batch_size = std::stoull(value);
        else if (key == "n_r") c.n_receive = std::stoull(value);
        else if (key == "num_models" || key == "o") c.num_models = std::stoull(value);
        else if (key == "model_kind") c.model_kind = parse_model_kind(value);
        else if (key == "embedding_dim" || key == "d") c.embedding_dim = std::stoull(value);
        else if (key == "mlp_layer_widths") c.mlp_hidden_widths = detail::parse_width_list(value);
        else if (key == "learning_rate" || key == "lr") c.learning_rate = std::stod(value);
        else if (key == "l2_weight") c.l2_weight = std::stod(value);
        else if (key == "negative_ratio") c.negative_ratio = std::stoull(value);
        else if (key == "memory_top_e" || key == "e") c.memory_top_e = std::stoull(value);
        else if (key == "eval_negatives") c.eval_negatives = std::stoull(value);
        else if (key == "top_k") c.top_k = std::stoull(value);
        else if (key == "rng_seed" || key == "seed") c.rng_seed = std::stoull(value);
        else if (key == "sampler_kind") c.sampler_kind = parse_sampler_kind(value);
        else if (key == "fuser_kind") c.fuser_kind = parse_fuser_kind(value);
        else if (key == "train_fraction") c.train_fraction = std::stod(value);
        else if (key == "sliding_window") c.sliding_window = std::stoull(value);
        else if (key == "dataset") spec.dataset_path = value;
        else if (key == "out") spec.out_dir = value;
        else if (key == "label") spec.label = value;
        else if (key == "repeats") spec.repeats = std::stoull(value);
        else if (key == "workers") spec.workers = std::stoull(value);
        else if (key == "subsample_users") spec.subsample_users = std::stoull(value);
        else known = false;
    } catch (const std::exception&) {
        throw std::invalid_argument("bad value '" + value + "' for config key '" + key + "'");
    }
    if (!known) throw std::invalid_argument("unknown config key '" + key + "'");
}

/*!
 * Flat key=value config format. Blank lines and #-comments are skipped;
 * [section] headers are allowed for readability and carry no meaning.
 */
inline RunSpec parse_run_spec(std::istream& in) {
    RunSpec spec;
    std::string line;
    std::size_t lineno = 0;
    bool saw_bs = false, saw_np = false;
    std::string bs_value, np_value;
    while (std::getline(in, line)) {
        ++lineno;
        std::size_t begin = line.find_first_not_of(" \t\r");
        if (begin == std::string::npos) continue;
        std::size_t end = line.find_last_not_of(" \t\r");
        std::string body = line.substr(begin, end - begin + 1);
        if (body.empty() || body[0] == '#') continue;
        if (body.front() == '[' && body.back() == ']') continue;
        std::size_t eq = body.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key=value, got '" + body + "'");
        std::string key = body.substr(0, eq);
        std::string value = body.substr(eq + 1);
        auto strip = [](std::string& s) {
            std::size_t b = s.find_first_not_of(" \t");
            std::size_t e = s.find_last_not_of(" \t");
            s = (b == std::string::npos) ? std::string{} : s.substr(b, e - b + 1);
        };
        strip(key);
        strip(value);
        if (key == "bs" || key == "batch_size") { saw_bs = true; bs_value = value; }
        if (key == "n_p") { saw_np = true; np_value = value; }
        apply_key(spec, key, value);
    }
    // bs and n_p are one knob; naming both with different values is a mistake
    if (saw_bs && saw_np && bs_value != np_value)
        throw std::invalid_argument("keys 'bs' and 'n_p' are bound to the same value; got " +
                                    bs_value + " and " + np_value);
    return spec;
}

inline std::string serialize_run_spec(const RunSpec& spec) {
    const ExperimentConfig& c = spec.config;
    std::ostringstream out;
    out << "[run]\n";
    out << "label=" << spec.label << "\n";
    out << "dataset=" << spec.dataset_path << "\n";
    out << "out=" << spec.out_dir << "\n";
    out << "repeats=" << spec.repeats << "\n";
    out << "workers=" << spec.workers << "\n";
    out << "subsample_users=" << spec.subsample_users << "\n";
    out << "\n[stream]\n";
    out << "bs=" << c.batch_size << "\n";
    out << "n_r=" << c.n_receive << "\n";
    out << "train_fraction=" << c.train_fraction << "\n";
    out << "reservoir_capacity=" << c.reservoir_capacity << "\n";
    out << "\n[sampling]\n";
    out << "sampler_kind=" << to_string(c.sampler_kind) << "\n";
    out << "alpha=" << c.alpha << "\n";
    out << "lambda_new=" << c.lambda_new << "\n";
    out << "lambda_res=" << c.lambda_res << "\n";
    out << "negative_ratio=" << c.negative_ratio << "\n";
    out << "sliding_window=" << c.sliding_window << "\n";
    out << "\n[models]\n";
    out << "model_kind=" << to_string(c.model_kind) << "\n";
    out << "num_models=" << c.num_models << "\n";
    out << "embedding_dim=" << c.embedding_dim << "\n";
    out << "mlp_layer_widths=" << detail::join_widths(c.mlp_hidden_widths) << "\n";
    out << "learning_rate=" << c.learning_rate << "\n";
    out << "l2_weight=" << c.l2_weight << "\n";
    out << "\n[ensemble]\n";
    out << "fuser_kind=" << to_string(c.fuser_kind) << "\n";
    out << "memory_top_e=" << c.memory_top_e << "\n";
    out << "\n[evaluation]\n";
    out << "eval_negatives=" << c.eval_negatives << "\n";
    out << "top_k=" << c.top_k << "\n";
    out << "rng_seed=" << c.rng_seed << "\n";
    return out.str();
}

}  // namespace streamrec
