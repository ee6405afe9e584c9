// Copyright (c) 2026 the fedtrek authors
// SPDX-License-Identifier: Apache-2.0
//
// Seeded generators for the bundled corpora: an annotated movie conversation
// corpus, a recipe rating table, and the clustered-preference benchmark used
// to compare federated against purely local training. Every name is invented;
// reruns with the same seed are byte-identical.

#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "fedtrek/common.hpp"
#include "fedtrek/dataset.hpp"
#include "fedtrek/pkg.hpp"
#include "fedtrek/rng.hpp"

namespace fedtrek {

inline constexpr std::uint64_t kFixtureSeed = 727;

namespace detail {

inline const std::vector<std::string>& movie_adjectives() {
    static const std::vector<std::string> v = {"Crimson", "Silent",  "Paper", "Hollow", "Violet",
                                               "Iron",    "Glass",   "Winter", "Neon",  "Salt",
                                               "Amber",   "Restless"};
    return v;
}

inline const std::vector<std::string>& movie_nouns() {
    static const std::vector<std::string> v = {"Harbor",  "Orchard", "Signal", "Meridian",
                                               "Lantern", "Canyon",  "Parade", "Archive",
                                               "Comet",   "Garden"};
    return v;
}

inline std::string two_digits(std::size_t n) {
    std::string s = std::to_string(n);
    return s.size() < 2 ? "0" + s : s;
}

}  // namespace detail

// Invented movie catalog: adjective-noun titles with years, unique by
// construction.
inline std::vector<EntityRef> gen_movie_entities(std::size_t count, std::uint64_t seed) {
    const auto& adjs = detail::movie_adjectives();
    const auto& nouns = detail::movie_nouns();
    require(count <= adjs.size() * nouns.size(), "gen_movie_entities: catalog cap exceeded");
    std::vector<std::size_t> combos(adjs.size() * nouns.size());
    for (std::size_t i = 0; i < combos.size(); ++i) combos[i] = i;
    Rng rng(mix_seed(seed, 0x30e1e5ull));
    rng.shuffle(combos);
    std::vector<EntityRef> out;
    for (std::size_t i = 0; i < count; ++i) {
        const std::string& adj = adjs[combos[i] / nouns.size()];
        const std::string& noun = nouns[combos[i] % nouns.size()];
        const std::size_t year = 1968 + rng.below(56);
        EntityRef e;
        e.label = adj + " " + noun + " (" + std::to_string(year) + ")";
        e.iri = "movie:m" + detail::two_digits(i);
        e.entity_type = "movie";
        out.push_back(std::move(e));
    }
    return out;
}

namespace detail {

inline std::string preference_clause(const Mention& m) {
    switch (m.sentiment) {
        case Sentiment::liked: return "I really enjoyed " + m.entity.label;
        case Sentiment::disliked: return "I did not enjoy " + m.entity.label;
        default: return "I just watched " + m.entity.label;
    }
}

inline std::string join_labels(const std::vector<Mention>& ms) {
    std::string out;
    for (std::size_t i = 0; i < ms.size(); ++i) {
        if (i) out += i + 1 == ms.size() ? " and " : ", ";
        out += ms[i].entity.label;
    }
    return out;
}

}  // namespace detail

// Annotated two-party conversations: the initiator states preferences, the
// helper recommends, and each recommendation mention carries the initiator's
// eventual sentiment. Recommendations deliberately mix novel liked items,
// novel disliked ones, repeats of already-stated movies, and the occasional
// unannotated (unknown) suggestion.
inline std::vector<ConversationLog> gen_movie_corpus(std::uint64_t seed) {
    const std::vector<EntityRef> movies = gen_movie_entities(60, seed);
    const std::size_t n_clients = 16;
    const std::size_t convs_per_client = 5;
    std::vector<ConversationLog> corpus;

    for (std::size_t u = 0; u < n_clients; ++u) {
        const std::string client = "u" + detail::two_digits(u + 1);
        Rng rng(mix_seed(seed, fnv1a64(client)));
        // Per-client slice of the catalog, consumed front to back as the
        // "novel" supply; once exhausted, recommendations repeat old items.
        std::vector<std::size_t> pool(movies.size());
        for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
        rng.shuffle(pool);
        pool.resize(26);
        std::size_t next_novel = 0;
        std::vector<std::size_t> stated;  // indices already in the PKG
        std::set<std::size_t> stated_set;

        auto state_mention = [&](Sentiment s) -> Mention {
            Mention m;
            if (next_novel < pool.size()) {
                m.entity = movies[pool[next_novel++]];
            } else {
                m.entity = movies[stated[rng.below(stated.size())]];
            }
            m.is_recommendation = false;
            m.sentiment = s;
            return m;
        };
        auto note_stated = [&](const Mention& m) {
            if (m.sentiment == Sentiment::unknown) return;
            for (std::size_t i = 0; i < movies.size(); ++i)
                if (movies[i].iri == m.entity.iri && stated_set.insert(i).second) stated.push_back(i);
        };

        for (std::size_t j = 0; j < convs_per_client; ++j) {
            ConversationLog conv;
            conv.conversation_id = "conv-" + client + "-" + std::to_string(j + 1);
            conv.initiator_id = client;
            conv.respondent_id = "helper-0" + std::to_string(1 + (u + j) % 4);

            // Opening statement: two stated preferences.
            ConvMessage open;
            open.role = Role::initiator;
            open.mentions.push_back(state_mention(rng.below(10) < 7 ? Sentiment::liked : Sentiment::disliked));
            open.mentions.push_back(state_mention(rng.below(10) < 6 ? Sentiment::liked : Sentiment::disliked));
            open.text = detail::preference_clause(open.mentions[0]) + "; " +
                        detail::preference_clause(open.mentions[1]) + ".";
            for (const auto& m : open.mentions) note_stated(m);
            conv.messages.push_back(std::move(open));

            // First recommendation turn: one or two novel items plus, often,
            // a repeat of something already stated.
            ConvMessage rec1;
            rec1.role = Role::respondent;
            const std::size_t novel_count = 1 + rng.below(2);
            for (std::size_t t = 0; t < novel_count; ++t) {
                Mention m;
                if (next_novel < pool.size()) {
                    m.entity = movies[pool[next_novel++]];
                    const std::uint64_t roll = rng.below(20);
                    m.sentiment = roll < 11   ? Sentiment::liked
                                  : roll < 17 ? Sentiment::disliked
                                              : Sentiment::unknown;
                } else {
                    m.entity = movies[stated[rng.below(stated.size())]];
                    m.sentiment = Sentiment::liked;  // repeat: label comes from redundancy
                }
                m.is_recommendation = true;
                rec1.mentions.push_back(std::move(m));
            }
            if (!stated.empty() && rng.below(10) < 6) {
                Mention m;
                m.entity = movies[stated[rng.below(stated.size())]];
                m.is_recommendation = true;
                m.sentiment = rng.below(2) ? Sentiment::liked : Sentiment::disliked;
                rec1.mentions.push_back(std::move(m));
            }
            rec1.text = "Then you could try " + detail::join_labels(rec1.mentions) + ".";
            for (const auto& m : rec1.mentions) note_stated(m);
            conv.messages.push_back(std::move(rec1));

            // The initiator volunteers one more preference.
            ConvMessage more;
            more.role = Role::initiator;
            more.mentions.push_back(state_mention(rng.below(10) < 7 ? Sentiment::liked : Sentiment::disliked));
            more.text = "Thanks. By the way, " + detail::preference_clause(more.mentions[0]) + ".";
            for (const auto& m : more.mentions) note_stated(m);
            conv.messages.push_back(std::move(more));

            // Second recommendation turn: one or two more suggestions.
            ConvMessage rec2;
            rec2.role = Role::respondent;
            const std::size_t rec2_count = 1 + rng.below(2);
            for (std::size_t t = 0; t < rec2_count; ++t) {
                Mention m;
                const bool repeat = next_novel >= pool.size() || (!stated.empty() && rng.below(10) < 2);
                if (repeat) {
                    m.entity = movies[stated[rng.below(stated.size())]];
                    m.sentiment = Sentiment::liked;
                } else {
                    m.entity = movies[pool[next_novel++]];
                    const std::uint64_t roll = rng.below(20);
                    m.sentiment = roll < 12   ? Sentiment::liked
                                  : roll < 18 ? Sentiment::disliked
                                              : Sentiment::unknown;
                }
                m.is_recommendation = true;
                rec2.mentions.push_back(std::move(m));
            }
            rec2.text = "In that case, consider " + detail::join_labels(rec2.mentions) + ".";
            for (const auto& m : rec2.mentions) note_stated(m);
            conv.messages.push_back(std::move(rec2));

            corpus.push_back(std::move(conv));
        }
    }
    return corpus;
}

// ---------------------------------------------------------------------------
// Recipe ratings
// ---------------------------------------------------------------------------

inline std::vector<EntityRef> gen_recipe_entities(std::size_t count, std::uint64_t seed) {
    static const std::vector<std::string> firsts = {"Saffron", "Charred", "Smoky",  "Pickled",
                                                    "Toasted", "Braised", "Chilled", "Golden"};
    static const std::vector<std::string> mains = {"Lentil", "Fennel",  "Barley", "Walnut",
                                                   "Plum",   "Paprika", "Leek"};
    static const std::vector<std::string> forms = {"Stew", "Galette", "Salad", "Flatbread", "Broth"};
    require(count <= firsts.size() * mains.size() * forms.size(),
            "gen_recipe_entities: catalog cap exceeded");
    std::vector<std::size_t> combos(firsts.size() * mains.size() * forms.size());
    for (std::size_t i = 0; i < combos.size(); ++i) combos[i] = i;
    Rng rng(mix_seed(seed, 0x4ec19e5ull));
    rng.shuffle(combos);
    std::vector<EntityRef> out;
    for (std::size_t i = 0; i < count; ++i) {
        std::size_t c = combos[i];
        const std::string& form = forms[c % forms.size()];
        c /= forms.size();
        const std::string& main = mains[c % mains.size()];
        const std::string& first = firsts[c / mains.size()];
        EntityRef e;
        e.label = first + " " + main + " " + form;
        e.iri = "recipe:r" + detail::two_digits(i);
        e.entity_type = "recipe";
        out.push_back(std::move(e));
    }
    return out;
}

// Star ratings with the full 0..5 range, including neutral 3s that the PKG
// thresholds must drop. Each (user, recipe) pair appears at most once.
inline std::vector<RatingRecord> gen_recipe_ratings(std::uint64_t seed) {
    const std::vector<EntityRef> recipes = gen_recipe_entities(40, seed);
    static const std::vector<std::string> tags = {"spicy", "weeknight", "vegan", "slow", "bright"};
    std::vector<RatingRecord> out;
    for (std::size_t u = 0; u < 12; ++u) {
        const std::string user = "ru" + detail::two_digits(u + 1);
        Rng rng(mix_seed(seed, fnv1a64(user)));
        std::vector<std::size_t> picks = rng.sample_indices(recipes.size(), 10 + rng.below(5));
        for (std::size_t idx : picks) {
            RatingRecord r;
            r.user_id = user;
            r.recipe = recipes[idx];
            // Skewed toward decisive ratings; ~1 in 6 lands on neutral 3.
            const std::uint64_t roll = rng.below(12);
            r.stars = roll < 4 ? 5 : roll < 7 ? 4 : roll < 9 ? 1 : roll < 10 ? 0 : roll < 11 ? 2 : 3;
            r.attrs.emplace_back("tag", tags[rng.below(tags.size())]);
            out.push_back(std::move(r));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Clustered-preference benchmark
// ---------------------------------------------------------------------------

// Clients belong to latent taste clusters; each PKG reveals only part of its
// cluster and the remaining members are the unseen gold items. Embeddings
// are one-hot, so item similarity carries no signal: whatever a model learns
// about unseen items can only come from other clients' revealed preferences.
struct ClusterBenchmark {
    DomainProfile profile;
    std::vector<EntityRef> entities;  // cluster-major order
    std::map<std::string, PersonalKnowledgeGraph> pkgs;
    std::map<std::string, std::vector<std::string>> gold_labels;  // raw labels
    std::map<std::string, std::size_t> cluster_of;
};

inline ClusterBenchmark gen_cluster_benchmark(std::uint64_t seed, std::size_t n_clusters = 4,
                                              std::size_t clients_per_cluster = 10,
                                              std::size_t items_per_cluster = 30,
                                              std::size_t revealed_per_client = 8,
                                              std::size_t gold_per_client = 3) {
    require(revealed_per_client + gold_per_client <= items_per_cluster,
            "cluster benchmark: revealed + gold exceeds cluster size");
    static const std::vector<std::string> cluster_names = {"Aurora", "Basalt", "Cedar", "Delta",
                                                           "Ember",  "Fjord"};
    require(n_clusters <= cluster_names.size(), "cluster benchmark: too many clusters");
    ClusterBenchmark out;
    out.profile = {"music", "tracks", "track"};
    for (std::size_t c = 0; c < n_clusters; ++c)
        for (std::size_t i = 0; i < items_per_cluster; ++i) {
            EntityRef e;
            e.label = cluster_names[c] + " Track " + detail::two_digits(i + 1);
            e.iri = "track:" + cluster_names[c] + "-" + detail::two_digits(i + 1);
            e.entity_type = "track";
            out.entities.push_back(std::move(e));
        }
    for (std::size_t c = 0; c < n_clusters; ++c) {
        for (std::size_t k = 0; k < clients_per_cluster; ++k) {
            const std::string client =
                "listener-" + cluster_names[c] + "-" + detail::two_digits(k + 1);
            Rng rng(mix_seed(seed, fnv1a64(client)));
            std::vector<std::size_t> picks =
                rng.sample_indices(items_per_cluster, revealed_per_client + gold_per_client);
            PersonalKnowledgeGraph pkg{client, {}};
            for (std::size_t i = 0; i < revealed_per_client; ++i) {
                const EntityRef& e = out.entities[c * items_per_cluster + picks[i]];
                pkg.triples.push_back({client, Relation::liked, e, static_cast<std::int64_t>(i)});
            }
            std::vector<std::string> gold;
            for (std::size_t i = revealed_per_client; i < picks.size(); ++i)
                gold.push_back(out.entities[c * items_per_cluster + picks[i]].label);
            out.pkgs[client] = std::move(pkg);
            out.gold_labels[client] = std::move(gold);
            out.cluster_of[client] = c;
        }
    }
    return out;
}

}  // namespace fedtrek
