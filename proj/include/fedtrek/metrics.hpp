// Copyright (c) 2026 the fedtrek authors
// SPDX-License-Identifier: Apache-2.0
//
// Evaluation harness: set-overlap classification metrics (micro-averaged
// precision/recall/F1, macro behind a flag), first-correct-rank metrics
// (MRR, Hits@k), end-to-end model evaluation over held-out cases, and the
// 3x2 training-regime ablation grid.

#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fedtrek/common.hpp"
#include "fedtrek/dataset.hpp"
#include "fedtrek/federation.hpp"
#include "fedtrek/learner.hpp"
#include "fedtrek/prompt.hpp"

namespace fedtrek {

struct EvalCase {
    std::string client_id;
    SubPkg sub;                     // knowledge state at evaluation time
    std::vector<std::string> gold;  // normalized labels, unordered semantics, non-empty
};

struct PredictionRecord {
    EvalCase eval_case;
    std::vector<std::string> predicted;  // normalized, deduplicated, rank order
};

struct MatchResult {
    std::set<std::string> tp;
    std::set<std::string> fp;
    std::set<std::string> fn;
};

inline MatchResult match_items(const std::vector<std::string>& predicted,
                               const std::set<std::string>& gold) {
    MatchResult r;
    for (const auto& p : predicted) (gold.count(p) ? r.tp : r.fp).insert(p);
    for (const auto& g : gold)
        if (!r.tp.count(g)) r.fn.insert(g);
    return r;
}

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

namespace detail {

inline Prf prf_from_counts(double tp, double fp, double fn) {
    Prf out;
    out.precision = tp + fp > 0.0 ? tp / (tp + fp) : 0.0;
    out.recall = tp + fn > 0.0 ? tp / (tp + fn) : 0.0;
    out.f1 = out.precision + out.recall > 0.0
                 ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
                 : 0.0;
    return out;
}

inline std::set<std::string> gold_set(const EvalCase& c) {
    return std::set<std::string>(c.gold.begin(), c.gold.end());
}

}  // namespace detail

// Micro averaging: pool TP/FP/FN counts over all records, then apply the
// formulas once. Degenerate denominators score 0.
inline Prf classification_metrics(const std::vector<PredictionRecord>& records) {
    require(!records.empty(), "classification_metrics: no records");
    double tp = 0.0, fp = 0.0, fn = 0.0;
    for (const auto& rec : records) {
        MatchResult m = match_items(rec.predicted, detail::gold_set(rec.eval_case));
        tp += static_cast<double>(m.tp.size());
        fp += static_cast<double>(m.fp.size());
        fn += static_cast<double>(m.fn.size());
    }
    return detail::prf_from_counts(tp, fp, fn);
}

// Macro averaging: per-record P/R/F1, then the plain mean of each.
inline Prf classification_metrics_macro(const std::vector<PredictionRecord>& records) {
    require(!records.empty(), "classification_metrics: no records");
    Prf acc;
    for (const auto& rec : records) {
        MatchResult m = match_items(rec.predicted, detail::gold_set(rec.eval_case));
        Prf one = detail::prf_from_counts(static_cast<double>(m.tp.size()),
                                          static_cast<double>(m.fp.size()),
                                          static_cast<double>(m.fn.size()));
        acc.precision += one.precision;
        acc.recall += one.recall;
        acc.f1 += one.f1;
    }
    const double n = static_cast<double>(records.size());
    return {acc.precision / n, acc.recall / n, acc.f1 / n};
}

// 1-based rank of the first predicted item present in gold; nullopt if the
// list contains no correct prediction (rank treated as infinite).
inline std::optional<std::size_t> first_correct_rank(const PredictionRecord& rec) {
    const auto gold = detail::gold_set(rec.eval_case);
    for (std::size_t i = 0; i < rec.predicted.size(); ++i)
        if (gold.count(rec.predicted[i])) return i + 1;
    return std::nullopt;
}

struct RankMetrics {
    double mrr = 0.0;
    double hits1 = 0.0;
    double hits3 = 0.0;
    double hits10 = 0.0;
};

inline RankMetrics ranking_metrics(const std::vector<PredictionRecord>& records) {
    require(!records.empty(), "ranking_metrics: no records");
    RankMetrics out;
    for (const auto& rec : records) {
        auto rank = first_correct_rank(rec);
        if (!rank) continue;  // reciprocal rank 0, no hit at any k
        out.mrr += 1.0 / static_cast<double>(*rank);
        if (*rank <= 1) out.hits1 += 1.0;
        if (*rank <= 3) out.hits3 += 1.0;
        if (*rank <= 10) out.hits10 += 1.0;
    }
    const double n = static_cast<double>(records.size());
    out.mrr /= n;
    out.hits1 /= n;
    out.hits3 /= n;
    out.hits10 /= n;
    return out;
}

struct MetricsReport {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double mrr = 0.0;
    double hits1 = 0.0;
    double hits3 = 0.0;
    double hits10 = 0.0;
    std::size_t n_cases = 0;
};

inline MetricsReport report_from_records(const std::vector<PredictionRecord>& records,
                                         bool macro = false) {
    Prf prf = macro ? classification_metrics_macro(records) : classification_metrics(records);
    RankMetrics rank = ranking_metrics(records);
    return {prf.precision, prf.recall, prf.f1, rank.mrr, rank.hits1, rank.hits3, rank.hits10,
            records.size()};
}

// Run the recommender on every case and score it. Predictions are normalized
// and deduplicated before matching; k defaults high enough to cover Hits@10.
inline MetricsReport evaluate(const BaseModel& model, const LowRankAdapter& adapter,
                              const std::vector<EvalCase>& cases, std::size_t k_predict = 10,
                              bool macro = false) {
    require(!cases.empty(), "evaluate: empty test set");
    std::vector<PredictionRecord> records;
    records.reserve(cases.size());
    for (const auto& c : cases) {
        require(!c.gold.empty(), "evaluate: case with empty gold set");
        PredictionRecord rec;
        rec.eval_case = c;
        std::set<std::string> seen;
        for (const auto& label : recommend(model, adapter, c.sub, k_predict)) {
            std::string norm = normalize_label(label);
            if (seen.insert(norm).second) rec.predicted.push_back(std::move(norm));
        }
        records.push_back(std::move(rec));
    }
    return report_from_records(records, macro);
}

// Held-out examples carry their evaluation state in text form: rebuild the
// subpkg from the prompt's embedded PKG (labels matched against the catalog;
// unmatched ones are unpredictable anyway) and the gold set from the
// reference completion.
inline std::vector<EvalCase> eval_cases_from_examples(const BaseModel& model,
                                                      const std::vector<PreferenceExample>& test) {
    std::vector<EvalCase> out;
    for (const auto& ex : test) {
        PromptPkg stated = parse_prompt_pkg(ex.prompt);
        EvalCase c;
        c.client_id = ex.client_id;
        c.sub.user_id = stated.user_id;
        auto push_side = [&](const std::vector<std::string>& labels, Relation rel) {
            for (const auto& label : labels) {
                auto idx = model.catalog.find_label(label);
                if (!idx) continue;
                c.sub.triples.push_back({stated.user_id, rel, model.catalog.entities[*idx],
                                         static_cast<std::int64_t>(c.sub.triples.size())});
            }
        };
        push_side(stated.liked, Relation::liked);
        push_side(stated.disliked, Relation::disliked);
        std::set<std::string> seen;
        for (const auto& label : parse_completion(ex.completion)) {
            std::string norm = normalize_label(label);
            if (seen.insert(norm).second) c.gold.push_back(std::move(norm));
        }
        require(!c.gold.empty(), "eval case: completion with no items for client '" + ex.client_id + "'");
        out.push_back(std::move(c));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Ablation grid
// ---------------------------------------------------------------------------

struct AblationRow {
    std::string mode;  // "centralized" | "federated" | "local"
    bool with_synthetic = false;
    MetricsReport report;
};

struct AblationInputs {
    ClientExamples real_train;       // real examples only
    ClientExamples augmented_train;  // real + synthetic
    std::vector<EvalCase> cases;
    std::size_t k_predict = 10;
    std::size_t local_n_users = 10;
    std::size_t local_min_examples = 10;
    std::uint64_t local_sample_seed = 0;
};

// {centralized, federated, local} x {real, +synthetic}, all evaluated on the
// same held-out cases. The local row is the mean of the sampled users'
// individual reports, mirroring the averaging in the protocol it models.
inline std::vector<AblationRow> ablation_grid(const AblationInputs& in, const BaseModel& model,
                                              const LowRankAdapter& init,
                                              const FederationConfig& fed_cfg,
                                              const TrainConfig& train_cfg) {
    require(!in.cases.empty(), "ablation_grid: empty test set");
    std::vector<AblationRow> rows;
    for (bool syn : {false, true}) {
        const ClientExamples& data = syn ? in.augmented_train : in.real_train;
        {
            LowRankAdapter a = run_centralized(data, model, init, train_cfg);
            rows.push_back({"centralized", syn, evaluate(model, a, in.cases, in.k_predict)});
        }
        {
            TrainingRun run = run_training(data, model, init, fed_cfg, train_cfg);
            rows.push_back({"federated", syn, evaluate(model, run.adapter, in.cases, in.k_predict)});
        }
        {
            auto locals = run_local_only(data, model, init, train_cfg, in.local_n_users,
                                         in.local_min_examples, in.local_sample_seed);
            MetricsReport mean;
            for (const auto& [id, adapter] : locals) {
                (void)id;
                MetricsReport r = evaluate(model, adapter, in.cases, in.k_predict);
                mean.precision += r.precision;
                mean.recall += r.recall;
                mean.f1 += r.f1;
                mean.mrr += r.mrr;
                mean.hits1 += r.hits1;
                mean.hits3 += r.hits3;
                mean.hits10 += r.hits10;
                mean.n_cases = r.n_cases;
            }
            const double n = static_cast<double>(locals.size());
            mean.precision /= n;
            mean.recall /= n;
            mean.f1 /= n;
            mean.mrr /= n;
            mean.hits1 /= n;
            mean.hits3 /= n;
            mean.hits10 /= n;
            rows.push_back({"local", syn, mean});
        }
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Report serialization
// ---------------------------------------------------------------------------

inline ojson metrics_to_json(const MetricsReport& r) {
    ojson doc;
    doc["precision"] = r.precision;
    doc["recall"] = r.recall;
    doc["f1"] = r.f1;
    doc["mrr"] = r.mrr;
    doc["hits_at_1"] = r.hits1;
    doc["hits_at_3"] = r.hits3;
    doc["hits_at_10"] = r.hits10;
    doc["n_cases"] = r.n_cases;
    return doc;
}

inline std::string csv_cell(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

inline std::string ablation_to_csv(const std::vector<AblationRow>& rows) {
    std::string out = "mode,synthetic,precision,recall,f1,mrr,hits@1,hits@3,hits@10,n_cases\n";
    for (const auto& row : rows) {
        const MetricsReport& r = row.report;
        out += row.mode;
        out += row.with_synthetic ? ",yes," : ",no,";
        out += csv_cell(r.precision) + "," + csv_cell(r.recall) + "," + csv_cell(r.f1) + "," +
               csv_cell(r.mrr) + "," + csv_cell(r.hits1) + "," + csv_cell(r.hits3) + "," +
               csv_cell(r.hits10) + "," + std::to_string(r.n_cases) + "\n";
    }
    return out;
}

}  // namespace fedtrek
