// Copyright (c) 2026 the fedtrek authors
// SPDX-License-Identifier: Apache-2.0
//
// Communication-round state machine: select clients, broadcast the global
// adapter, train locally, upload deltas, aggregate, repeat — plus the byte
// ledger and the closed-form communication-cost report. The orchestrator
// only ever touches adapters, deltas, and counts; client examples stay with
// their client.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "fedtrek/common.hpp"
#include "fedtrek/dataset.hpp"
#include "fedtrek/learner.hpp"
#include "fedtrek/rng.hpp"

namespace fedtrek {

enum class Aggregation { fedavg_weighted, fedavg_uniform };

struct FederationConfig {
    std::size_t total_rounds = 128;
    std::size_t clients_per_round = 4;
    Aggregation aggregation = Aggregation::fedavg_weighted;
    std::size_t bytes_per_param = 4;
    std::uint64_t rng_seed = 0;
    // When nonzero, the ledger accounts bytes as if the payload had this many
    // parameters (for cost studies decoupled from the toy adapter's size).
    std::size_t payload_params_override = 0;
};

inline void validate_federation_config(const FederationConfig& cfg) {
    require(cfg.total_rounds >= 1, "federation config: total_rounds must be >= 1");
    require(cfg.clients_per_round >= 1, "federation config: clients_per_round must be >= 1");
    require(cfg.bytes_per_param >= 1, "federation config: bytes_per_param must be >= 1");
}

// ---------------------------------------------------------------------------
// Client selection
// ---------------------------------------------------------------------------

// Uniform without replacement; the draw depends only on (seed, round_index),
// so any round can be replayed in isolation. Returned ids are sorted.
inline std::vector<std::string> select_clients(std::size_t round_index,
                                               const std::vector<std::string>& pool,
                                               const FederationConfig& cfg) {
    require(pool.size() >= cfg.clients_per_round,
            "select_clients: pool of " + std::to_string(pool.size()) + " smaller than " +
                std::to_string(cfg.clients_per_round));
    Rng rng(mix_seed(cfg.rng_seed, 0x5e1ec7ull + round_index));
    std::vector<std::size_t> picks = rng.sample_indices(pool.size(), cfg.clients_per_round);
    std::vector<std::string> out;
    out.reserve(picks.size());
    for (std::size_t i : picks) out.push_back(pool[i]);
    std::sort(out.begin(), out.end());
    return out;
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

// FedAvg weights: example-count proportional, falling back to uniform when
// every count is zero; or plain uniform.
inline std::vector<double> aggregation_weights(const std::vector<AdapterDelta>& deltas,
                                               const FederationConfig& cfg) {
    require(!deltas.empty(), "aggregate: no deltas");
    const std::size_t n = deltas.size();
    std::vector<double> w(n, 1.0 / static_cast<double>(n));
    if (cfg.aggregation == Aggregation::fedavg_uniform) return w;
    std::uint64_t total = 0;
    for (const auto& d : deltas) total += d.example_count;
    if (total == 0) return w;
    for (std::size_t i = 0; i < n; ++i)
        w[i] = static_cast<double>(deltas[i].example_count) / static_cast<double>(total);
    return w;
}

namespace detail {

// Componentwise weighted sum with two guarantees the naive loop lacks:
// terms are accumulated in a canonical order (sorted by magnitude, then
// value), making the result independent of input permutation, and the sum is
// clamped to the inputs' componentwise hull, so convexity holds exactly even
// when the weights only sum to 1 up to rounding.
inline void weighted_sum_exact(const std::vector<const Mat*>& parts, const std::vector<double>& w,
                               Mat& out) {
    const std::size_t n = parts.size();
    std::vector<double> terms(n);
    for (std::size_t comp = 0; comp < out.v.size(); ++comp) {
        double lo = parts[0]->v[comp], hi = lo;
        for (std::size_t i = 0; i < n; ++i) {
            const double x = parts[i]->v[comp];
            lo = std::min(lo, x);
            hi = std::max(hi, x);
            terms[i] = w[i] * x;
        }
        std::sort(terms.begin(), terms.end(), [](double a, double b) {
            const double aa = std::abs(a), ab = std::abs(b);
            if (aa != ab) return aa < ab;
            return a < b;
        });
        double acc = 0.0;
        for (double t : terms) acc += t;
        out.v[comp] = std::clamp(acc, lo, hi);
    }
}

}  // namespace detail

inline AdapterDelta aggregate(const std::vector<AdapterDelta>& deltas, const FederationConfig& cfg) {
    require(!deltas.empty(), "aggregate: no deltas");
    for (const auto& d : deltas)
        require(d.dA.same_shape(deltas[0].dA) && d.dB.same_shape(deltas[0].dB),
                "aggregate: delta shape mismatch");
    const std::vector<double> w = aggregation_weights(deltas, cfg);
    AdapterDelta out{Mat(deltas[0].dA.rows, deltas[0].dA.cols),
                     Mat(deltas[0].dB.rows, deltas[0].dB.cols), 0};
    std::vector<const Mat*> as, bs;
    for (const auto& d : deltas) {
        as.push_back(&d.dA);
        bs.push_back(&d.dB);
        out.example_count += d.example_count;
    }
    detail::weighted_sum_exact(as, w, out.dA);
    detail::weighted_sum_exact(bs, w, out.dB);
    return out;
}

// ---------------------------------------------------------------------------
// Ledger and round history
// ---------------------------------------------------------------------------

struct CommEntry {
    std::size_t round_index = 0;
    std::uint64_t download_bytes = 0;  // server -> selected clients
    std::uint64_t upload_bytes = 0;    // selected clients -> server
};

struct CommLedger {
    std::vector<CommEntry> entries;
    std::uint64_t total_download = 0;
    std::uint64_t total_upload = 0;

    std::uint64_t total() const { return total_download + total_upload; }

    void add(const CommEntry& e) {
        entries.push_back(e);
        total_download += e.download_bytes;
        total_upload += e.upload_bytes;
    }
};

struct RoundRecord {
    std::size_t round_index = 0;
    std::vector<std::string> selected_clients;  // sorted
    std::vector<AdapterDelta> deltas;           // aligned with selected_clients
    std::vector<double> weights;                // aligned, non-negative, sum 1
    std::uint64_t download_bytes = 0;
    std::uint64_t upload_bytes = 0;
};

// ---------------------------------------------------------------------------
// Training drivers
// ---------------------------------------------------------------------------

using ClientExamples = std::map<std::string, std::vector<PreferenceExample>>;

inline ClientExamples partition_examples(const std::vector<PreferenceExample>& examples) {
    ClientExamples out;
    for (const auto& ex : examples) out[ex.client_id].push_back(ex);
    return out;
}

struct TrainingRun {
    LowRankAdapter adapter;
    std::vector<RoundRecord> rounds;
    CommLedger ledger;
};

// Called after each round with the round record and the updated global
// adapter; useful for checkpointing. Never influences the run itself.
using RoundObserver = std::function<void(const RoundRecord&, const LowRankAdapter&)>;

// The full federated loop. Per-client training seeds derive from
// (train seed, round, client id), so runs replay bit-identically and client
// execution order cannot matter.
inline TrainingRun run_training(const ClientExamples& clients, const BaseModel& model,
                                const LowRankAdapter& init, const FederationConfig& cfg,
                                const TrainConfig& train_cfg,
                                const RoundObserver& on_round = {}) {
    validate_federation_config(cfg);
    validate_train_config(train_cfg);
    validate_adapter(init, model.catalog.dim);
    std::vector<std::string> pool;
    for (const auto& [id, xs] : clients) {
        require(!xs.empty(), "run_training: client '" + id + "' has no examples");
        pool.push_back(id);
    }
    require(pool.size() >= cfg.clients_per_round, "run_training: fewer clients than clients_per_round");

    TrainingRun run;
    run.adapter = init;
    const std::uint64_t payload_params =
        cfg.payload_params_override ? cfg.payload_params_override : init.param_count();
    const std::uint64_t payload_bytes = payload_params * cfg.bytes_per_param;

    for (std::size_t r = 0; r < cfg.total_rounds; ++r) {
        RoundRecord rec;
        rec.round_index = r;
        rec.selected_clients = select_clients(r, pool, cfg);
        rec.download_bytes = payload_bytes * rec.selected_clients.size();
        for (const auto& id : rec.selected_clients) {
            TrainConfig local_cfg = train_cfg;
            local_cfg.rng_seed = mix_seed(train_cfg.rng_seed, mix_seed(r, fnv1a64(id)));
            rec.deltas.push_back(train_local(clients.at(id), model, run.adapter, local_cfg));
        }
        rec.upload_bytes = payload_bytes * rec.selected_clients.size();
        rec.weights = aggregation_weights(rec.deltas, cfg);
        AdapterDelta agg = aggregate(rec.deltas, cfg);
        run.adapter.A.add_scaled(agg.dA, 1.0);
        run.adapter.B.add_scaled(agg.dB, 1.0);
        run.ledger.add({r, rec.download_bytes, rec.upload_bytes});
        run.rounds.push_back(std::move(rec));
        if (on_round) on_round(run.rounds.back(), run.adapter);
    }
    return run;
}

// All clients' examples pooled into one local run (client-id order).
inline LowRankAdapter run_centralized(const ClientExamples& clients, const BaseModel& model,
                                      const LowRankAdapter& init, const TrainConfig& train_cfg) {
    std::vector<PreferenceExample> pooled;
    for (const auto& [id, xs] : clients) pooled.insert(pooled.end(), xs.begin(), xs.end());
    AdapterDelta d = train_local(pooled, model, init, train_cfg);
    LowRankAdapter out = init;
    out.A.add_scaled(d.dA, 1.0);
    out.B.add_scaled(d.dB, 1.0);
    return out;
}

// n_users isolated models over clients holding at least min_examples
// examples, sampled uniformly; each trains alone from the shared init.
inline std::vector<std::pair<std::string, LowRankAdapter>> run_local_only(
    const ClientExamples& clients, const BaseModel& model, const LowRankAdapter& init,
    const TrainConfig& train_cfg, std::size_t n_users, std::size_t min_examples,
    std::uint64_t sample_seed) {
    std::vector<std::string> eligible;
    for (const auto& [id, xs] : clients)
        if (xs.size() >= min_examples) eligible.push_back(id);
    require(eligible.size() >= n_users,
            "run_local_only: only " + std::to_string(eligible.size()) + " clients have >= " +
                std::to_string(min_examples) + " examples, need " + std::to_string(n_users));
    Rng rng(mix_seed(sample_seed, 0x10ca1ull));
    std::vector<std::size_t> picks = rng.sample_indices(eligible.size(), n_users);
    std::vector<std::string> chosen;
    for (std::size_t i : picks) chosen.push_back(eligible[i]);
    std::sort(chosen.begin(), chosen.end());

    std::vector<std::pair<std::string, LowRankAdapter>> out;
    for (const auto& id : chosen) {
        TrainConfig local_cfg = train_cfg;
        local_cfg.rng_seed = mix_seed(train_cfg.rng_seed, fnv1a64(id));
        AdapterDelta d = train_local(clients.at(id), model, init, local_cfg);
        LowRankAdapter a = init;
        a.A.add_scaled(d.dA, 1.0);
        a.B.add_scaled(d.dB, 1.0);
        out.emplace_back(id, std::move(a));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Communication cost
// ---------------------------------------------------------------------------

struct CommCostReport {
    std::uint64_t per_round_client_bytes = 0;  // one-way payload per client per round
    std::uint64_t total_server_bytes = 0;      // x2 directions x clients x rounds
};

inline CommCostReport comm_cost_report(std::uint64_t trainable_params, const FederationConfig& cfg) {
    require(trainable_params > 0, "comm_cost_report: params must be > 0");
    CommCostReport r;
    r.per_round_client_bytes = trainable_params * cfg.bytes_per_param;
    r.total_server_bytes =
        r.per_round_client_bytes * 2 * cfg.clients_per_round * cfg.total_rounds;
    return r;
}

inline std::string format_mib(std::uint64_t bytes) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", static_cast<double>(bytes) / (1024.0 * 1024.0));
    return buf;
}

inline std::string format_gib(std::uint64_t bytes) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.1f", static_cast<double>(bytes) / (1024.0 * 1024.0 * 1024.0));
    return buf;
}

// "38.50 MB / 38.5 GB" — per-round one-way payload, then whole-run total.
inline std::string comm_cost_line(const CommCostReport& r) {
    return format_mib(r.per_round_client_bytes) + " MB / " + format_gib(r.total_server_bytes) + " GB";
}

// ---------------------------------------------------------------------------
// Run history serialization
// ---------------------------------------------------------------------------

inline void write_rounds_jsonl(const std::vector<RoundRecord>& rounds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "cannot open '" + path + "' for writing");
    for (const auto& rec : rounds) {
        ojson doc;
        doc["round"] = rec.round_index;
        doc["selected"] = rec.selected_clients;
        ojson counts = ojson::array();
        ojson norms = ojson::array();
        for (const auto& d : rec.deltas) {
            counts.push_back(d.example_count);
            double sq = 0.0;
            for (double x : d.dA.v) sq += x * x;
            for (double x : d.dB.v) sq += x * x;
            norms.push_back(std::sqrt(sq));
        }
        doc["example_counts"] = std::move(counts);
        doc["delta_norms"] = std::move(norms);
        doc["weights"] = rec.weights;
        doc["download_bytes"] = rec.download_bytes;
        doc["upload_bytes"] = rec.upload_bytes;
        out << doc.dump() << '\n';
    }
    require(out.good(), "write failed for '" + path + "'");
}

inline void write_comm_json(const CommLedger& ledger, const std::string& path) {
    ojson doc;
    ojson rounds = ojson::array();
    for (const auto& e : ledger.entries) {
        ojson o;
        o["round"] = e.round_index;
        o["download_bytes"] = e.download_bytes;
        o["upload_bytes"] = e.upload_bytes;
        rounds.push_back(std::move(o));
    }
    doc["rounds"] = std::move(rounds);
    doc["total_download_bytes"] = ledger.total_download;
    doc["total_upload_bytes"] = ledger.total_upload;
    doc["total_bytes"] = ledger.total();
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "cannot open '" + path + "' for writing");
    out << doc.dump(2) << '\n';
    require(out.good(), "write failed for '" + path + "'");
}

}  // namespace fedtrek
