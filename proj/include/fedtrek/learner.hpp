// Copyright (c) 2026 the fedtrek authors
// SPDX-License-Identifier: Apache-2.0
//
// Toy preference model: a frozen bilinear base over seeded item embeddings
// plus a trainable low-rank adapter, optimized with the KTO objective on
// desirable/undesirable completion examples. The frozen base doubles as the
// KTO reference policy. Gradients are exact and closed-form, which keeps the
// whole stack checkable against finite differences.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fedtrek/common.hpp"
#include "fedtrek/dataset.hpp"
#include "fedtrek/matrix.hpp"
#include "fedtrek/pkg.hpp"
#include "fedtrek/prompt.hpp"
#include "fedtrek/rng.hpp"

namespace fedtrek {

// ---------------------------------------------------------------------------
// Catalog and base model
// ---------------------------------------------------------------------------

enum class EmbedScheme { gaussian, identity };

struct Catalog {
    std::vector<EntityRef> entities;
    std::size_t dim = 0;
    EmbedScheme scheme = EmbedScheme::gaussian;
    std::uint64_t seed = 0;
    std::vector<Vec> embeddings;                      // one unit-norm row per entity
    std::map<std::string, std::size_t> index_by_iri;  // bijection with entities
    std::map<std::string, std::size_t> index_by_label;  // normalized label, first wins

    std::size_t size() const { return entities.size(); }

    std::optional<std::size_t> find_iri(const std::string& iri) const {
        auto it = index_by_iri.find(iri);
        if (it == index_by_iri.end()) return std::nullopt;
        return it->second;
    }

    std::optional<std::size_t> find_label(const std::string& raw_label) const {
        auto it = index_by_label.find(normalize_label(raw_label));
        if (it == index_by_label.end()) return std::nullopt;
        return it->second;
    }
};

namespace detail {

inline void index_catalog(Catalog& c) {
    for (std::size_t i = 0; i < c.entities.size(); ++i) {
        require(!c.entities[i].iri.empty(), "catalog: empty iri at index " + std::to_string(i));
        require(c.index_by_iri.emplace(c.entities[i].iri, i).second,
                "catalog: duplicate iri '" + c.entities[i].iri + "'");
        c.index_by_label.emplace(normalize_label(c.entities[i].label), i);  // first wins
    }
}

}  // namespace detail

// Seeded gaussian embeddings, L2-normalized per row.
inline Catalog make_catalog(std::vector<EntityRef> entities, std::size_t dim, std::uint64_t seed) {
    require(!entities.empty(), "catalog: needs at least one entity");
    require(dim >= 1, "catalog: embedding dim must be >= 1");
    Catalog c;
    c.entities = std::move(entities);
    c.dim = dim;
    c.scheme = EmbedScheme::gaussian;
    c.seed = seed;
    Rng rng(mix_seed(seed, 0x9a7a11edull));
    for (std::size_t i = 0; i < c.entities.size(); ++i) {
        Vec row(dim);
        double norm2 = 0.0;
        do {
            for (double& x : row) x = rng.next_gaussian();
            norm2 = dot(row, row);
        } while (norm2 < 1e-24);
        const double inv = 1.0 / std::sqrt(norm2);
        for (double& x : row) x *= inv;
        c.embeddings.push_back(std::move(row));
    }
    detail::index_catalog(c);
    return c;
}

// One-hot rows (dim = catalog size): orthonormal embeddings carry no
// similarity signal at all, useful when the benchmark must isolate what is
// learned from preference data alone.
inline Catalog make_identity_catalog(std::vector<EntityRef> entities) {
    require(!entities.empty(), "catalog: needs at least one entity");
    Catalog c;
    c.entities = std::move(entities);
    c.dim = c.entities.size();
    c.scheme = EmbedScheme::identity;
    c.seed = 0;
    for (std::size_t i = 0; i < c.entities.size(); ++i) {
        Vec row(c.dim, 0.0);
        row[i] = 1.0;
        c.embeddings.push_back(std::move(row));
    }
    detail::index_catalog(c);
    return c;
}

struct BaseModel {
    Catalog catalog;
    Mat W;  // dim x dim, frozen after construction
};

inline BaseModel make_base_model(Catalog catalog, std::uint64_t w_seed, double w_scale) {
    BaseModel m;
    m.W = Mat(catalog.dim, catalog.dim);
    m.catalog = std::move(catalog);
    Rng rng(mix_seed(w_seed, 0xba5e0000ull));
    for (double& x : m.W.v) x = w_scale == 0.0 ? 0.0 : w_scale * rng.next_gaussian();
    return m;
}

// ---------------------------------------------------------------------------
// Low-rank adapter
// ---------------------------------------------------------------------------

struct LowRankAdapter {
    std::size_t rank = 0;
    double alpha = 0.0;
    Mat A;  // rank x dim
    Mat B;  // dim x rank

    double kappa() const { return alpha / static_cast<double>(rank); }
    std::size_t param_count() const { return A.v.size() + B.v.size(); }

    bool operator==(const LowRankAdapter&) const = default;
};

inline void validate_adapter(const LowRankAdapter& a, std::size_t dim) {
    require(a.rank >= 1, "adapter: rank must be >= 1");
    require(a.A.rows == a.rank && a.A.cols == dim, "adapter: A must be rank x dim");
    require(a.B.rows == dim && a.B.cols == a.rank, "adapter: B must be dim x rank");
}

// A gets a small gaussian init, B starts at zero, so the effective update
// B·A is zero and the fresh policy coincides with the frozen reference.
inline LowRankAdapter init_adapter(std::size_t dim, std::size_t rank, double alpha,
                                   std::uint64_t seed, double init_scale = 0.02) {
    require(rank >= 1, "init_adapter: rank must be >= 1");
    LowRankAdapter a;
    a.rank = rank;
    a.alpha = alpha;
    a.A = Mat(rank, dim);
    a.B = Mat(dim, rank);
    Rng rng(mix_seed(seed, 0xada47e4ull));
    for (double& x : a.A.v) x = init_scale * rng.next_gaussian();
    return a;
}

struct AdapterDelta {
    Mat dA;
    Mat dB;
    std::size_t example_count = 0;

    bool operator==(const AdapterDelta&) const = default;
};

inline AdapterDelta zero_delta(const LowRankAdapter& a) {
    return {Mat(a.A.rows, a.A.cols), Mat(a.B.rows, a.B.cols), 0};
}

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

// Liked mean minus disliked mean over the catalog embeddings of the subpkg
// entities; entities absent from the catalog are skipped; empty (or fully
// unmatched) sides contribute zero.
inline Vec context_embedding(const BaseModel& model, const SubPkg& sub) {
    Vec liked(model.catalog.dim, 0.0), disliked(model.catalog.dim, 0.0);
    double n_liked = 0.0, n_disliked = 0.0;
    for (const auto& t : sub.triples) {
        auto idx = model.catalog.find_iri(t.object.iri);
        if (!idx) continue;
        Vec& acc = t.relation == Relation::liked ? liked : disliked;
        for (std::size_t i = 0; i < model.catalog.dim; ++i) acc[i] += model.catalog.embeddings[*idx][i];
        (t.relation == Relation::liked ? n_liked : n_disliked) += 1.0;
    }
    Vec out(model.catalog.dim, 0.0);
    for (std::size_t i = 0; i < model.catalog.dim; ++i) {
        double l = n_liked > 0.0 ? liked[i] / n_liked : 0.0;
        double d = n_disliked > 0.0 ? disliked[i] / n_disliked : 0.0;
        out[i] = l - d;
    }
    return out;
}

// Same mean-difference construction from bare label lists (the form a prompt
// stores); labels that match no catalog entity are skipped.
inline Vec context_from_labels(const BaseModel& model, const std::vector<std::string>& liked,
                               const std::vector<std::string>& disliked) {
    Vec acc_l(model.catalog.dim, 0.0), acc_d(model.catalog.dim, 0.0);
    double n_l = 0.0, n_d = 0.0;
    auto fold = [&](const std::vector<std::string>& labels, Vec& acc, double& n) {
        for (const auto& label : labels) {
            auto idx = model.catalog.find_label(label);
            if (!idx) continue;
            for (std::size_t i = 0; i < model.catalog.dim; ++i) acc[i] += model.catalog.embeddings[*idx][i];
            n += 1.0;
        }
    };
    fold(liked, acc_l, n_l);
    fold(disliked, acc_d, n_d);
    Vec out(model.catalog.dim, 0.0);
    for (std::size_t i = 0; i < model.catalog.dim; ++i)
        out[i] = (n_l > 0.0 ? acc_l[i] / n_l : 0.0) - (n_d > 0.0 ? acc_d[i] / n_d : 0.0);
    return out;
}

// s_j = c^T (W + (alpha/rank) B A) e_j for every catalog entity j.
inline Vec score_all(const BaseModel& model, const LowRankAdapter& adapter, const Vec& context) {
    validate_adapter(adapter, model.catalog.dim);
    require(context.size() == model.catalog.dim, "score_all: context has wrong dimension");
    const Vec u = mat_tvec(model.W, context);     // W^T c
    const Vec t = mat_tvec(adapter.B, context);   // B^T c, rank entries
    const Vec ta = mat_tvec(adapter.A, t);        // A^T (B^T c), dim entries
    const double kappa = adapter.kappa();
    Vec scores(model.catalog.size(), 0.0);
    for (std::size_t j = 0; j < model.catalog.size(); ++j) {
        const Vec& e = model.catalog.embeddings[j];
        scores[j] = dot(u, e) + kappa * dot(ta, e);
    }
    return scores;
}

inline double score(const BaseModel& model, const LowRankAdapter& adapter, const Vec& context,
                    std::size_t item_index) {
    require(item_index < model.catalog.size(), "score: item index out of range");
    return score_all(model, adapter, context)[item_index];
}

inline Vec log_softmax(const Vec& scores) {
    require(!scores.empty(), "log_softmax: empty input");
    double mx = scores[0];
    for (double s : scores) mx = std::max(mx, s);
    double sum = 0.0;
    for (double s : scores) sum += std::exp(s - mx);
    const double lse = mx + std::log(sum);
    Vec out(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] - lse;
    return out;
}

// Completion log-likelihood: items are independent draws from the softmax
// over the whole catalog.
inline double policy_logprob(const BaseModel& model, const LowRankAdapter& adapter,
                             const Vec& context, const std::vector<std::size_t>& items) {
    require(!items.empty(), "policy_logprob: empty item list");
    const Vec ls = log_softmax(score_all(model, adapter, context));
    double lp = 0.0;
    for (std::size_t j : items) {
        require(j < ls.size(), "policy_logprob: item index out of range");
        lp += ls[j];
    }
    return lp;
}

// The frozen base as reference policy: adapter contribution zeroed out.
inline double reference_logprob(const BaseModel& model, const Vec& context,
                                const std::vector<std::size_t>& items) {
    LowRankAdapter off;
    off.rank = 1;
    off.alpha = 0.0;
    off.A = Mat(1, model.catalog.dim);
    off.B = Mat(model.catalog.dim, 1);
    return policy_logprob(model, off, context, items);
}

// ---------------------------------------------------------------------------
// KTO objective
// ---------------------------------------------------------------------------

struct TrainConfig {
    double beta = 0.1;                    // reward temperature
    double lambda_desirable = 4.0 / 3.0;  // 4:3 asymmetry
    double lambda_undesirable = 1.0;
    double learning_rate = 0.05;
    std::size_t epochs = 8;
    std::size_t batch_size = 8;
    std::uint64_t rng_seed = 0;
};

inline void validate_train_config(const TrainConfig& cfg) {
    require(cfg.beta > 0.0, "train config: beta must be > 0");
    require(cfg.lambda_desirable > 0.0 && cfg.lambda_undesirable > 0.0,
            "train config: lambda weights must be > 0");
    const double ratio = cfg.lambda_desirable / cfg.lambda_undesirable;
    require(ratio >= 0.75 - 1e-12 && ratio <= 4.0 / 3.0 + 1e-12,
            "train config: lambda_desirable/lambda_undesirable must lie in [3/4, 4/3]");
    require(cfg.learning_rate > 0.0, "train config: learning_rate must be > 0");
    require(cfg.batch_size >= 1, "train config: batch_size must be >= 1");
}

// One example as the learner sees it.
struct TrainInstance {
    Vec context;
    std::vector<std::size_t> items;  // catalog indices of the completion
    bool desirable = true;
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct KtoResult {
    double loss = 0.0;
    double z = 0.0;  // reference point actually used
    Mat dA;
    Mat dB;
};

namespace detail {

struct ScoredInstance {
    const TrainInstance* inst;
    Vec policy_ls;  // log-softmax over catalog under the adapter
    Vec ref_ls;     // log-softmax under the frozen base
    Vec policy_p;   // softmax probabilities under the adapter
};

inline double lp_of(const Vec& ls, const std::vector<std::size_t>& items) {
    double lp = 0.0;
    for (std::size_t j : items) lp += ls[j];
    return lp;
}

inline std::vector<ScoredInstance> score_batch(const std::vector<TrainInstance>& batch,
                                               const BaseModel& model,
                                               const LowRankAdapter& adapter) {
    require(!batch.empty(), "kto: empty batch");
    std::vector<ScoredInstance> out;
    out.reserve(batch.size());
    for (const auto& inst : batch) {
        require(!inst.items.empty(), "kto: instance with no completion items");
        for (std::size_t j : inst.items)
            require(j < model.catalog.size(), "kto: item index out of range");
        ScoredInstance s;
        s.inst = &inst;
        s.policy_ls = log_softmax(score_all(model, adapter, inst.context));
        LowRankAdapter off;
        off.rank = 1;
        off.alpha = 0.0;
        off.A = Mat(1, model.catalog.dim);
        off.B = Mat(model.catalog.dim, 1);
        s.ref_ls = log_softmax(score_all(model, off, inst.context));
        s.policy_p.resize(s.policy_ls.size());
        for (std::size_t j = 0; j < s.policy_ls.size(); ++j) s.policy_p[j] = std::exp(s.policy_ls[j]);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace detail

// Reference point z: mean reward under mismatched prompt/completion pairings
// (each context with the next instance's completion, cyclically), clamped at
// zero. A single-instance batch has no mismatched pairing and uses z = 0.
inline double estimate_z(const std::vector<TrainInstance>& batch, const BaseModel& model,
                         const LowRankAdapter& adapter, const TrainConfig& cfg) {
    const auto scored = detail::score_batch(batch, model, adapter);
    const std::size_t n = scored.size();
    if (n < 2) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& items = scored[(i + 1) % n].inst->items;
        acc += cfg.beta * (detail::lp_of(scored[i].policy_ls, items) -
                           detail::lp_of(scored[i].ref_ls, items));
    }
    return std::max(0.0, acc / static_cast<double>(n));
}

// Loss only, at a pinned reference point. This is the function the gradient
// is a derivative of (z is held constant), so numeric checks target it.
inline double kto_loss_at_z(const std::vector<TrainInstance>& batch, const BaseModel& model,
                            const LowRankAdapter& adapter, const TrainConfig& cfg, double z) {
    validate_train_config(cfg);
    const auto scored = detail::score_batch(batch, model, adapter);
    double loss = 0.0;
    for (const auto& s : scored) {
        const double r = cfg.beta * (detail::lp_of(s.policy_ls, s.inst->items) -
                                     detail::lp_of(s.ref_ls, s.inst->items));
        if (s.inst->desirable)
            loss += cfg.lambda_desirable - cfg.lambda_desirable * sigmoid(r - z);
        else
            loss += cfg.lambda_undesirable - cfg.lambda_undesirable * sigmoid(z - r);
    }
    return loss / static_cast<double>(scored.size());
}

// Loss and exact analytic gradients w.r.t. A and B. z is estimated from the
// batch and then treated as a constant: no gradient flows through it.
//
// With w_j = count_j(items) - |items| * p_j and y = sum_j w_j e_j,
//   d lp/dA = kappa (B^T c) y^T,   d lp/dB = kappa c (A y)^T,
// and each instance contributes g_i/n * beta times that, where
//   g_i = -lambda_D sigmoid'(r_i - z)  (desirable)
//   g_i = +lambda_U sigmoid'(z - r_i)  (undesirable).
inline KtoResult kto_loss(const std::vector<TrainInstance>& batch, const BaseModel& model,
                          const LowRankAdapter& adapter, const TrainConfig& cfg) {
    validate_train_config(cfg);
    const double z = estimate_z(batch, model, adapter, cfg);
    const auto scored = detail::score_batch(batch, model, adapter);
    const std::size_t n = scored.size();
    const double kappa = adapter.kappa();

    KtoResult out;
    out.z = z;
    out.dA = Mat(adapter.A.rows, adapter.A.cols);
    out.dB = Mat(adapter.B.rows, adapter.B.cols);
    double loss = 0.0;
    for (const auto& s : scored) {
        const auto& items = s.inst->items;
        const double r =
            cfg.beta * (detail::lp_of(s.policy_ls, items) - detail::lp_of(s.ref_ls, items));
        double g;
        if (s.inst->desirable) {
            const double sig = sigmoid(r - z);
            loss += cfg.lambda_desirable * (1.0 - sig);
            g = -cfg.lambda_desirable * sig * (1.0 - sig);
        } else {
            const double sig = sigmoid(z - r);
            loss += cfg.lambda_undesirable * (1.0 - sig);
            g = cfg.lambda_undesirable * sig * (1.0 - sig);
        }
        // y = sum_j w_j e_j over the full catalog
        Vec w(model.catalog.size(), 0.0);
        for (std::size_t j : items) w[j] += 1.0;
        const double m = static_cast<double>(items.size());
        for (std::size_t j = 0; j < w.size(); ++j) w[j] -= m * s.policy_p[j];
        Vec y(model.catalog.dim, 0.0);
        for (std::size_t j = 0; j < w.size(); ++j) {
            if (w[j] == 0.0) continue;
            const Vec& e = model.catalog.embeddings[j];
            for (std::size_t d = 0; d < y.size(); ++d) y[d] += w[j] * e[d];
        }
        const double coef = (g / static_cast<double>(n)) * cfg.beta * kappa;
        const Vec bt_c = mat_tvec(adapter.B, s.inst->context);  // B^T c
        add_scaled_outer(out.dA, coef, bt_c, y);                // rank x dim
        const Vec ay = mat_vec(adapter.A, y);                   // A y, rank entries
        add_scaled_outer(out.dB, coef, s.inst->context, ay);    // dim x rank
    }
    out.loss = loss / static_cast<double>(n);
    return out;
}

// ---------------------------------------------------------------------------
// Example encoding and local training
// ---------------------------------------------------------------------------

// Bridge from rendered text back to the learner: context from the prompt's
// embedded PKG, items from the completion bullets. Returns nothing when no
// completion item matches the catalog (the example cannot be scored).
inline std::optional<TrainInstance> encode_example(const BaseModel& model,
                                                   const PreferenceExample& ex) {
    PromptPkg stated = parse_prompt_pkg(ex.prompt);
    TrainInstance inst;
    inst.context = context_from_labels(model, stated.liked, stated.disliked);
    for (const auto& label : parse_completion(ex.completion)) {
        if (auto idx = model.catalog.find_label(label)) inst.items.push_back(*idx);
    }
    inst.desirable = ex.label == Label::desirable;
    if (inst.items.empty()) return std::nullopt;
    return inst;
}

// Mini-batch gradient descent on the KTO loss from the given starting
// adapter. Returns the parameter delta plus how many examples were usable;
// zero usable examples yield a zero delta with count 0.
inline AdapterDelta train_local(const std::vector<PreferenceExample>& examples,
                                const BaseModel& model, const LowRankAdapter& start,
                                const TrainConfig& cfg) {
    validate_train_config(cfg);
    validate_adapter(start, model.catalog.dim);
    std::vector<TrainInstance> instances;
    for (const auto& ex : examples)
        if (auto inst = encode_example(model, ex)) instances.push_back(std::move(*inst));
    if (instances.empty()) return zero_delta(start);

    LowRankAdapter adapter = start;
    Rng rng(mix_seed(cfg.rng_seed, 0x10ca17a1ull));
    std::vector<std::size_t> order(instances.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t at = 0; at < order.size(); at += cfg.batch_size) {
            const std::size_t end = std::min(at + cfg.batch_size, order.size());
            std::vector<TrainInstance> batch;
            batch.reserve(end - at);
            for (std::size_t i = at; i < end; ++i) batch.push_back(instances[order[i]]);
            KtoResult res = kto_loss(batch, model, adapter, cfg);
            adapter.A.add_scaled(res.dA, -cfg.learning_rate);
            adapter.B.add_scaled(res.dB, -cfg.learning_rate);
        }
    }
    return {adapter.A - start.A, adapter.B - start.B, instances.size()};
}

// ---------------------------------------------------------------------------
// Recommendation
// ---------------------------------------------------------------------------

// Top-k catalog labels by score, never returning anything already present in
// the subpkg (either relation); ties break toward the lower catalog index.
inline std::vector<std::string> recommend(const BaseModel& model, const LowRankAdapter& adapter,
                                          const SubPkg& sub, std::size_t k) {
    require(k >= 1, "recommend: k must be >= 1");
    std::set<std::string> excluded;
    for (const auto& t : sub.triples) excluded.insert(t.object.iri);
    const Vec scores = score_all(model, adapter, context_embedding(model, sub));
    std::vector<std::size_t> order;
    order.reserve(model.catalog.size());
    for (std::size_t j = 0; j < model.catalog.size(); ++j)
        if (!excluded.count(model.catalog.entities[j].iri)) order.push_back(j);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    if (order.size() > k) order.resize(k);
    std::vector<std::string> out;
    out.reserve(order.size());
    for (std::size_t j : order) out.push_back(model.catalog.entities[j].label);
    return out;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline void save_catalog(const Catalog& c, const std::string& path) {
    ojson doc;
    doc["format"] = "catalog/1";
    doc["scheme"] = c.scheme == EmbedScheme::identity ? "identity" : "gaussian";
    doc["embedding_dim"] = c.dim;
    doc["seed"] = c.seed;
    ojson ents = ojson::array();
    for (const auto& e : c.entities) {
        ojson o;
        o["iri"] = e.iri;
        o["label"] = e.label;
        o["entity_type"] = e.entity_type;
        ents.push_back(std::move(o));
    }
    doc["entities"] = std::move(ents);
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "save_catalog: cannot open '" + path + "'");
    out << doc.dump(2) << '\n';
    require(out.good(), "save_catalog: write failed for '" + path + "'");
}

// Embeddings are regenerated from the recorded seed, never stored.
inline Catalog load_catalog(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "load_catalog: cannot open '" + path + "'");
    json doc = json::parse(in, nullptr, false);
    require(!doc.is_discarded(), path + ": malformed JSON");
    require(doc.value("format", "") == "catalog/1", path + ": not a catalog file");
    std::vector<EntityRef> entities;
    require(doc.contains("entities") && doc["entities"].is_array(), path + ": missing entities");
    for (const auto& o : doc["entities"]) {
        EntityRef e;
        e.iri = o.at("iri").get<std::string>();
        e.label = o.at("label").get<std::string>();
        e.entity_type = o.at("entity_type").get<std::string>();
        entities.push_back(std::move(e));
    }
    const std::string scheme = doc.value("scheme", "gaussian");
    if (scheme == "identity") return make_identity_catalog(std::move(entities));
    require(doc.contains("embedding_dim") && doc.contains("seed"), path + ": missing dim/seed");
    return make_catalog(std::move(entities), doc["embedding_dim"].get<std::size_t>(),
                        doc["seed"].get<std::uint64_t>());
}

inline void save_adapter(const LowRankAdapter& a, const std::string& path) {
    ojson doc;
    doc["format"] = "adapter/1";
    doc["rank"] = a.rank;
    doc["alpha"] = a.alpha;
    doc["dim"] = a.A.cols;
    doc["A"] = a.A.v;
    doc["B"] = a.B.v;
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "save_adapter: cannot open '" + path + "'");
    out << doc.dump() << '\n';
    require(out.good(), "save_adapter: write failed for '" + path + "'");
}

inline LowRankAdapter load_adapter(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "load_adapter: cannot open '" + path + "'");
    json doc = json::parse(in, nullptr, false);
    require(!doc.is_discarded(), path + ": malformed JSON");
    require(doc.value("format", "") == "adapter/1", path + ": not an adapter file");
    LowRankAdapter a;
    a.rank = doc.at("rank").get<std::size_t>();
    a.alpha = doc.at("alpha").get<double>();
    const std::size_t dim = doc.at("dim").get<std::size_t>();
    a.A = Mat(a.rank, dim);
    a.B = Mat(dim, a.rank);
    const auto& av = doc.at("A");
    const auto& bv = doc.at("B");
    require(av.is_array() && av.size() == a.A.v.size(), path + ": A has wrong length");
    require(bv.is_array() && bv.size() == a.B.v.size(), path + ": B has wrong length");
    for (std::size_t i = 0; i < a.A.v.size(); ++i) a.A.v[i] = av[i].get<double>();
    for (std::size_t i = 0; i < a.B.v.size(); ++i) a.B.v[i] = bv[i].get<double>();
    validate_adapter(a, dim);
    return a;
}

}  // namespace fedtrek
