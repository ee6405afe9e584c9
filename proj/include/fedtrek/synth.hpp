// Copyright (c) 2026 the fedtrek authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic example generation over a client's PKG: masking (hide triples,
// ask the model to recover liked ones / avoid disliked ones) and redundancy
// penalization (repeating known facts is always undesirable).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fedtrek/common.hpp"
#include "fedtrek/dataset.hpp"
#include "fedtrek/pkg.hpp"
#include "fedtrek/prompt.hpp"
#include "fedtrek/rng.hpp"

namespace fedtrek {

struct SynthConfig {
    std::size_t mask_count_per_client = 2;
    std::size_t redundancy_count_per_client = 1;
    double mask_fraction = 0.3;
    std::uint64_t rng_seed = 0;
};

inline void validate_synth_config(const SynthConfig& cfg) {
    require(cfg.mask_fraction > 0.0 && cfg.mask_fraction < 1.0,
            "synth config: mask_fraction must be in (0, 1)");
}

namespace detail {

// Prompt over the given triples with the generic one-turn request.
inline std::string synth_prompt(const PersonalKnowledgeGraph& pkg,
                                std::vector<PreferenceTriple> triples, const DomainProfile& profile) {
    SubPkg sub{pkg.user_id, profile.entity_type, kNoCutoff, std::move(triples)};
    return render_prompt(render_system_prompt(profile, sub),
                         {{"User", synthetic_user_query(profile)}});
}

inline PreferenceExample make_synth_example(const PersonalKnowledgeGraph& pkg, std::string prompt,
                                            const std::vector<const PreferenceTriple*>& group,
                                            Label label, Origin origin) {
    PreferenceExample ex;
    ex.client_id = pkg.user_id;
    ex.prompt = std::move(prompt);
    std::vector<std::string> labels;
    ex.source_ids = {"pkg:" + pkg.user_id,
                     origin == Origin::synthetic_mask ? "synth:mask" : "synth:redundancy"};
    for (const PreferenceTriple* t : group) {
        labels.push_back(t->object.label);
        ex.source_ids.push_back("ent:" + t->object.iri);
    }
    ex.completion = render_completion(labels);
    ex.label = label;
    ex.origin = origin;
    return ex;
}

}  // namespace detail

// Hide a random ceil(mask_fraction * n) triples (always leaving a non-empty
// remainder), prompt from the remainder, completion from the hidden set.
// All-liked sets are desirable, all-disliked undesirable, and a mixed set
// splits into one example per relation sharing the same prompt. PKGs with
// fewer than two triples cannot be split and yield nothing.
inline std::vector<PreferenceExample> mask_triples(const PersonalKnowledgeGraph& pkg,
                                                   const DomainProfile& profile,
                                                   const SynthConfig& cfg, Rng& rng) {
    validate_synth_config(cfg);
    std::vector<PreferenceExample> out;
    const std::size_t n = pkg.triples.size();
    if (n < 2) return out;
    for (std::size_t gen = 0; gen < cfg.mask_count_per_client; ++gen) {
        std::size_t k = static_cast<std::size_t>(
            std::ceil(cfg.mask_fraction * static_cast<double>(n)));
        k = std::min(k, n - 1);
        std::vector<std::size_t> picks = rng.sample_indices(n, k);
        std::sort(picks.begin(), picks.end());  // chronological completion order

        std::vector<PreferenceTriple> remainder;
        std::vector<const PreferenceTriple*> hidden_liked, hidden_disliked;
        std::size_t next_pick = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (next_pick < picks.size() && picks[next_pick] == i) {
                ++next_pick;
                const PreferenceTriple& t = pkg.triples[i];
                (t.relation == Relation::liked ? hidden_liked : hidden_disliked).push_back(&t);
            } else {
                remainder.push_back(pkg.triples[i]);
            }
        }
        std::string prompt = detail::synth_prompt(pkg, std::move(remainder), profile);
        if (!hidden_liked.empty())
            out.push_back(detail::make_synth_example(pkg, prompt, hidden_liked, Label::desirable,
                                                     Origin::synthetic_mask));
        if (!hidden_disliked.empty())
            out.push_back(detail::make_synth_example(pkg, prompt, hidden_disliked,
                                                     Label::undesirable, Origin::synthetic_mask));
    }
    return out;
}

// Completions repeating a random non-empty subset of the (fully visible)
// prompt PKG; always undesirable, liked or not.
inline std::vector<PreferenceExample> redundancy_negatives(const PersonalKnowledgeGraph& pkg,
                                                           const DomainProfile& profile,
                                                           const SynthConfig& cfg, Rng& rng) {
    validate_synth_config(cfg);
    require(!pkg.triples.empty(), "redundancy_negatives: pkg must be non-empty");
    std::vector<PreferenceExample> out;
    const std::size_t n = pkg.triples.size();
    for (std::size_t gen = 0; gen < cfg.redundancy_count_per_client; ++gen) {
        std::size_t k = 1 + static_cast<std::size_t>(rng.below(n));
        std::vector<std::size_t> picks = rng.sample_indices(n, k);
        std::sort(picks.begin(), picks.end());
        std::vector<const PreferenceTriple*> group;
        for (std::size_t i : picks) group.push_back(&pkg.triples[i]);
        std::string prompt = detail::synth_prompt(pkg, pkg.triples, profile);
        out.push_back(detail::make_synth_example(pkg, std::move(prompt), group, Label::undesirable,
                                                 Origin::synthetic_redundancy));
    }
    return out;
}

// Union of the real examples and per-client synthetic ones. Clients are
// processed in sorted id order with derived seeds, so output is independent
// of map iteration quirks and stable across runs.
inline std::vector<PreferenceExample> augment(
    const std::vector<PreferenceExample>& examples,
    const std::map<std::string, PersonalKnowledgeGraph>& pkgs, const DomainProfile& profile,
    const SynthConfig& cfg) {
    validate_synth_config(cfg);
    std::vector<PreferenceExample> out = examples;
    for (const auto& [client_id, pkg] : pkgs) {
        if (pkg.triples.empty()) continue;  // nothing to mask or repeat
        Rng rng(mix_seed(cfg.rng_seed, fnv1a64(client_id)));
        for (auto& ex : mask_triples(pkg, profile, cfg, rng)) out.push_back(std::move(ex));
        for (auto& ex : redundancy_negatives(pkg, profile, cfg, rng)) out.push_back(std::move(ex));
    }
    return out;
}

// Rating tables have no conversations: build per-user PKGs from the star
// thresholds, then all examples are synthetic by construction.
inline BuiltDataset build_recipe_examples(const std::vector<RatingRecord>& ratings,
                                          const DomainProfile& profile, const SynthConfig& cfg) {
    BuiltDataset out;
    out.profile = profile;
    out.entities = collect_rating_entities(ratings);
    out.pkgs = build_rating_pkgs(ratings);
    out.examples = augment({}, out.pkgs, profile, cfg);
    return out;
}

}  // namespace fedtrek
