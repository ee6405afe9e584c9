// Copyright (c) 2026 the fedtrek authors
// SPDX-License-Identifier: Apache-2.0
//
// Dataset builder: turns annotated conversation corpora (or rating tables)
// into client-partitioned preference examples. Conversations are replayed
// chronologically per client; each respondent recommendation message yields
// desirable/undesirable examples according to sentiment and redundancy.

#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "fedtrek/common.hpp"
#include "fedtrek/pkg.hpp"
#include "fedtrek/prompt.hpp"
#include "fedtrek/rng.hpp"

namespace fedtrek {

enum class Sentiment { liked, disliked, unknown };
enum class Role { initiator, respondent };
enum class Label { desirable, undesirable };
enum class Origin { real, synthetic_mask, synthetic_redundancy };

inline const char* to_string(Sentiment s) {
    switch (s) {
        case Sentiment::liked: return "liked";
        case Sentiment::disliked: return "disliked";
        default: return "unknown";
    }
}
inline const char* to_string(Role r) { return r == Role::initiator ? "initiator" : "respondent"; }
inline const char* to_string(Label l) { return l == Label::desirable ? "desirable" : "undesirable"; }
inline const char* to_string(Origin o) {
    switch (o) {
        case Origin::real: return "real";
        case Origin::synthetic_mask: return "synthetic_mask";
        default: return "synthetic_redundancy";
    }
}

inline Sentiment sentiment_from_string(std::string_view s, const std::string& path) {
    if (s == "liked") return Sentiment::liked;
    if (s == "disliked") return Sentiment::disliked;
    if (s == "unknown") return Sentiment::unknown;
    fail(path + ": unknown sentiment '" + std::string(s) + "'");
}
inline Role role_from_string(std::string_view s, const std::string& path) {
    if (s == "initiator") return Role::initiator;
    if (s == "respondent") return Role::respondent;
    fail(path + ": unknown role '" + std::string(s) + "'");
}
inline Label label_from_string(std::string_view s, const std::string& path) {
    if (s == "desirable") return Label::desirable;
    if (s == "undesirable") return Label::undesirable;
    fail(path + ": unknown label '" + std::string(s) + "'");
}
inline Origin origin_from_string(std::string_view s, const std::string& path) {
    if (s == "real") return Origin::real;
    if (s == "synthetic_mask") return Origin::synthetic_mask;
    if (s == "synthetic_redundancy") return Origin::synthetic_redundancy;
    fail(path + ": unknown origin '" + std::string(s) + "'");
}

struct Mention {
    EntityRef entity;
    bool is_recommendation = false;
    Sentiment sentiment = Sentiment::unknown;

    bool operator==(const Mention&) const = default;
};

struct ConvMessage {
    Role role = Role::initiator;
    std::string text;
    std::vector<Mention> mentions;

    bool operator==(const ConvMessage&) const = default;
};

struct ConversationLog {
    std::string conversation_id;
    std::string initiator_id;
    std::string respondent_id;
    std::vector<ConvMessage> messages;

    bool operator==(const ConversationLog&) const = default;
};

struct PreferenceExample {
    std::string client_id;
    std::string prompt;
    std::string completion;
    Label label = Label::desirable;
    Origin origin = Origin::real;
    std::vector<std::string> source_ids;  // provenance: conv/msg/entity or pkg/seed tags

    bool operator==(const PreferenceExample&) const = default;
};

struct RatingRecord {
    std::string user_id;
    EntityRef recipe;
    int stars = 0;  // 0..5
    std::vector<std::pair<std::string, std::string>> attrs;  // (attribute, value)

    bool operator==(const RatingRecord&) const = default;
};

inline void validate_conversation(const ConversationLog& conv) {
    require(!conv.conversation_id.empty(), "conversation: empty conversation_id");
    require(!conv.initiator_id.empty(), "conversation '" + conv.conversation_id + "': empty initiator_id");
    require(!conv.respondent_id.empty(), "conversation '" + conv.conversation_id + "': empty respondent_id");
    require(!conv.messages.empty(), "conversation '" + conv.conversation_id + "': needs at least one message");
    for (const auto& m : conv.messages)
        for (const auto& men : m.mentions) {
            require(!men.entity.iri.empty(), "conversation '" + conv.conversation_id + "': mention without iri");
            require(!men.entity.label.empty(), "conversation '" + conv.conversation_id + "': mention without label");
        }
}

// ---------------------------------------------------------------------------
// Client partition and chronology
// ---------------------------------------------------------------------------

// Group conversations by initiator, preserving corpus order within a client
// (corpus order stands in for time).
inline std::map<std::string, std::vector<ConversationLog>> partition_by_client(
    const std::vector<ConversationLog>& corpus) {
    std::map<std::string, std::vector<ConversationLog>> out;
    for (const auto& conv : corpus) {
        validate_conversation(conv);
        out[conv.initiator_id].push_back(conv);
    }
    return out;
}

// PKG state immediately before one message.
struct PkgSnapshot {
    std::size_t conv_pos = 0;  // index into the client's conversation list
    std::size_t msg_pos = 0;   // index into that conversation's messages
    PersonalKnowledgeGraph before;
};

// Replay a client's conversations in order, folding every liked/disliked
// mention (either speaker states the initiator's preference) into the PKG.
// unknown-sentiment mentions never enter. The returned list has one snapshot
// per message — the graph as it stood before that message — plus a final
// entry (conv_pos = size) holding the end-state PKG.
inline std::vector<PkgSnapshot> build_pkg_chronology(const std::string& client_id,
                                                     const std::vector<ConversationLog>& convs) {
    std::vector<PkgSnapshot> out;
    PersonalKnowledgeGraph pkg{client_id, {}};
    std::int64_t next_order = 0;
    for (std::size_t c = 0; c < convs.size(); ++c) {
        require(convs[c].initiator_id == client_id,
                "chronology: conversation '" + convs[c].conversation_id + "' initiated by '" +
                    convs[c].initiator_id + "', not '" + client_id + "'");
        for (std::size_t m = 0; m < convs[c].messages.size(); ++m) {
            out.push_back({c, m, pkg});
            for (const auto& mention : convs[c].messages[m].mentions) {
                if (mention.sentiment == Sentiment::unknown) continue;
                Relation rel =
                    mention.sentiment == Sentiment::liked ? Relation::liked : Relation::disliked;
                AddOutcome added = add_preference(pkg, {client_id, rel, mention.entity, next_order});
                pkg = std::move(added.pkg);
                if (!added.redundant) ++next_order;
            }
        }
    }
    out.push_back({convs.size(), 0, pkg});
    return out;
}

inline PersonalKnowledgeGraph final_pkg(const std::string& client_id,
                                        const std::vector<ConversationLog>& convs) {
    auto chron = build_pkg_chronology(client_id, convs);
    return chron.back().before;
}

// ---------------------------------------------------------------------------
// Example extraction
// ---------------------------------------------------------------------------

// Per respondent message holding at least one recommendation mention, emit up
// to two examples over the prompt "system + dialogue so far": the recommended
// entities split into a desirable group (liked and novel w.r.t. the snapshot)
// and an undesirable group (disliked, or already present — redundancy wins
// over sentiment). Unknown-sentiment novel recommendations produce nothing.
inline std::vector<PreferenceExample> extract_examples(
    const ConversationLog& conv, const std::vector<PersonalKnowledgeGraph>& snapshots_before,
    const DomainProfile& profile) {
    validate_conversation(conv);
    require(snapshots_before.size() >= conv.messages.size(),
            "extract_examples: snapshots do not cover conversation '" + conv.conversation_id + "'");
    std::vector<PreferenceExample> out;
    for (std::size_t m = 0; m < conv.messages.size(); ++m) {
        const ConvMessage& msg = conv.messages[m];
        if (msg.role != Role::respondent) continue;
        std::vector<const Mention*> recs;
        for (const auto& mention : msg.mentions)
            if (mention.is_recommendation) recs.push_back(&mention);
        if (recs.empty()) continue;

        const PersonalKnowledgeGraph& snapshot = snapshots_before[m];
        SubPkg sub = query_subpkg(snapshot, profile.entity_type);
        std::string system = render_system_prompt(profile, sub);
        std::vector<DialogueTurn> turns;
        for (std::size_t j = 0; j < m; ++j) {
            turns.push_back({conv.messages[j].role == Role::initiator ? "User" : "Assistant",
                             conv.messages[j].text});
        }
        std::string prompt = render_prompt(system, turns);

        std::vector<std::string> desirable_labels, undesirable_labels;
        std::vector<std::string> desirable_src, undesirable_src;
        for (const Mention* rec : recs) {
            bool present = contains_iri(snapshot, rec->entity.iri);
            if (present || rec->sentiment == Sentiment::disliked) {
                undesirable_labels.push_back(rec->entity.label);
                undesirable_src.push_back("ent:" + rec->entity.iri);
            } else if (rec->sentiment == Sentiment::liked) {
                desirable_labels.push_back(rec->entity.label);
                desirable_src.push_back("ent:" + rec->entity.iri);
            }
            // novel + unknown sentiment: no label evidence, dropped
        }
        auto emit = [&](Label label, std::vector<std::string>&& labels, std::vector<std::string>&& src) {
            if (labels.empty()) return;
            PreferenceExample ex;
            ex.client_id = conv.initiator_id;
            ex.prompt = prompt;
            ex.completion = render_completion(labels);
            ex.label = label;
            ex.origin = Origin::real;
            ex.source_ids = {"conv:" + conv.conversation_id, "msg:" + std::to_string(m)};
            for (auto& s : src) ex.source_ids.push_back(std::move(s));
            out.push_back(std::move(ex));
        };
        emit(Label::desirable, std::move(desirable_labels), std::move(desirable_src));
        emit(Label::undesirable, std::move(undesirable_labels), std::move(undesirable_src));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Whole-corpus assembly
// ---------------------------------------------------------------------------

struct BuiltDataset {
    DomainProfile profile;
    std::vector<PreferenceExample> examples;
    std::map<std::string, PersonalKnowledgeGraph> pkgs;  // end-state PKG per client
    std::vector<EntityRef> entities;                     // catalog, first-appearance order
};

// Catalog = unique entities in corpus appearance order; conflicting reuse of
// an iri (different label or type) is a corpus defect and fails loudly.
inline std::vector<EntityRef> collect_entities(const std::vector<ConversationLog>& corpus) {
    std::vector<EntityRef> out;
    std::map<std::string, std::size_t> by_iri;
    for (const auto& conv : corpus)
        for (const auto& msg : conv.messages)
            for (const auto& mention : msg.mentions) {
                auto it = by_iri.find(mention.entity.iri);
                if (it == by_iri.end()) {
                    by_iri[mention.entity.iri] = out.size();
                    out.push_back(mention.entity);
                } else {
                    require(out[it->second] == mention.entity,
                            "corpus: entity '" + mention.entity.iri +
                                "' re-declared with different label or type");
                }
            }
    return out;
}

inline BuiltDataset build_movie_dataset(const std::vector<ConversationLog>& corpus,
                                        const DomainProfile& profile = movie_profile()) {
    BuiltDataset out;
    out.profile = profile;
    out.entities = collect_entities(corpus);
    for (auto& [client_id, convs] : partition_by_client(corpus)) {
        auto chron = build_pkg_chronology(client_id, convs);
        // Slice the per-message snapshots belonging to each conversation.
        std::size_t cursor = 0;
        for (std::size_t c = 0; c < convs.size(); ++c) {
            std::vector<PersonalKnowledgeGraph> before;
            before.reserve(convs[c].messages.size());
            for (std::size_t m = 0; m < convs[c].messages.size(); ++m, ++cursor) {
                require(cursor < chron.size() && chron[cursor].conv_pos == c &&
                            chron[cursor].msg_pos == m,
                        "build_movie_dataset: chronology misaligned");
                before.push_back(chron[cursor].before);
            }
            auto extracted = extract_examples(convs[c], before, profile);
            for (auto& ex : extracted) out.examples.push_back(std::move(ex));
        }
        out.pkgs[client_id] = chron.back().before;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Ratings → PKGs (recipes)
// ---------------------------------------------------------------------------

// Star thresholds: >= 4 liked, <= 2 disliked, 3 is neutral and dropped.
inline std::map<std::string, PersonalKnowledgeGraph> build_rating_pkgs(
    const std::vector<RatingRecord>& ratings) {
    std::map<std::string, PersonalKnowledgeGraph> pkgs;
    std::map<std::string, std::int64_t> next_order;
    for (const auto& r : ratings) {
        require(!r.user_id.empty(), "rating: empty user_id");
        require(!r.recipe.iri.empty() && !r.recipe.label.empty(), "rating: recipe needs iri and label");
        require(r.stars >= 0 && r.stars <= 5,
                "rating: stars " + std::to_string(r.stars) + " outside 0..5 for user '" + r.user_id + "'");
        if (r.stars == 3) continue;
        Relation rel = r.stars >= 4 ? Relation::liked : Relation::disliked;
        auto [it, fresh] = pkgs.try_emplace(r.user_id, PersonalKnowledgeGraph{r.user_id, {}});
        (void)fresh;
        AddOutcome added = add_preference(it->second, {r.user_id, rel, r.recipe, next_order[r.user_id]});
        it->second = std::move(added.pkg);
        if (!added.redundant) ++next_order[r.user_id];
    }
    return pkgs;
}

inline std::vector<EntityRef> collect_rating_entities(const std::vector<RatingRecord>& ratings) {
    std::vector<EntityRef> out;
    std::map<std::string, std::size_t> by_iri;
    for (const auto& r : ratings) {
        auto it = by_iri.find(r.recipe.iri);
        if (it == by_iri.end()) {
            by_iri[r.recipe.iri] = out.size();
            out.push_back(r.recipe);
        } else {
            require(out[it->second] == r.recipe,
                    "ratings: recipe '" + r.recipe.iri + "' re-declared with different label or type");
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Train/test split and counts
// ---------------------------------------------------------------------------

// Which examples may enter the held-out test set. The conversational corpora
// hold out real positives; rating-derived corpora have no real examples, so
// their split draws from all positives.
enum class HoldoutPool { desirable_real, desirable_any };

struct TrainTestSplit {
    std::vector<PreferenceExample> train;
    std::vector<PreferenceExample> test;
};

inline TrainTestSplit split_train_test(const std::vector<PreferenceExample>& examples,
                                       double holdout_fraction, std::uint64_t rng_seed,
                                       HoldoutPool pool = HoldoutPool::desirable_real) {
    require(holdout_fraction > 0.0 && holdout_fraction < 1.0,
            "split_train_test: holdout_fraction must be in (0, 1)");
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        if (examples[i].label != Label::desirable) continue;
        if (pool == HoldoutPool::desirable_real && examples[i].origin != Origin::real) continue;
        eligible.push_back(i);
    }
    require(!eligible.empty(), "split_train_test: no eligible held-out positives");
    std::size_t n_test = static_cast<std::size_t>(std::llround(holdout_fraction * static_cast<double>(eligible.size())));
    if (n_test == 0) n_test = 1;
    if (n_test > eligible.size()) n_test = eligible.size();
    Rng rng(rng_seed);
    std::vector<std::size_t> picks = rng.sample_indices(eligible.size(), n_test);
    std::set<std::size_t> test_rows;
    for (std::size_t p : picks) test_rows.insert(eligible[p]);
    TrainTestSplit out;
    for (std::size_t i = 0; i < examples.size(); ++i)
        (test_rows.count(i) ? out.test : out.train).push_back(examples[i]);
    return out;
}

struct DatasetCounts {
    std::size_t clients = 0;
    std::size_t real = 0;
    std::size_t synthetic = 0;
    std::size_t test = 0;
};

inline DatasetCounts count_report(const std::vector<PreferenceExample>& train,
                                  const std::vector<PreferenceExample>& test) {
    DatasetCounts c;
    std::set<std::string> clients;
    auto tally = [&](const std::vector<PreferenceExample>& xs) {
        for (const auto& ex : xs) {
            clients.insert(ex.client_id);
            (ex.origin == Origin::real ? c.real : c.synthetic) += 1;
        }
    };
    tally(train);
    tally(test);
    c.clients = clients.size();
    c.test = test.size();
    return c;
}

// ---------------------------------------------------------------------------
// JSON Lines I/O
// ---------------------------------------------------------------------------

namespace detail {

// Parse one JSONL file, reporting the 1-based line number on any failure.
template <typename Fn>
void for_each_jsonl(const std::string& path, Fn&& fn) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot open '" + path + "'");
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        json doc = json::parse(line, nullptr, false);
        require(!doc.is_discarded(), path + ":" + std::to_string(line_no) + ": malformed JSON");
        try {
            fn(doc);
        } catch (const Error& e) {
            fail(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

inline std::string get_string(const json& o, const char* key, const std::string& where) {
    auto it = o.find(key);
    require(it != o.end() && it->is_string(), where + ": missing string field '" + std::string(key) + "'");
    return it->get<std::string>();
}

inline EntityRef entity_from_json(const json& o, const std::string& where) {
    require(o.is_object(), where + ": entity must be an object");
    EntityRef e;
    e.iri = get_string(o, "iri", where);
    e.label = get_string(o, "label", where);
    e.entity_type = get_string(o, "entity_type", where);
    return e;
}

inline ojson entity_to_json(const EntityRef& e) {
    ojson o;
    o["iri"] = e.iri;
    o["label"] = e.label;
    o["entity_type"] = e.entity_type;
    return o;
}

}  // namespace detail

inline std::vector<ConversationLog> read_convs_jsonl(const std::string& path) {
    std::vector<ConversationLog> out;
    detail::for_each_jsonl(path, [&](const json& doc) {
        require(doc.is_object(), "conversation must be an object");
        ConversationLog conv;
        conv.conversation_id = detail::get_string(doc, "conversation_id", "conversation");
        conv.initiator_id = detail::get_string(doc, "initiator_id", "conversation");
        conv.respondent_id = detail::get_string(doc, "respondent_id", "conversation");
        auto msgs = doc.find("messages");
        require(msgs != doc.end() && msgs->is_array(), "conversation: missing 'messages' array");
        for (const auto& m : *msgs) {
            ConvMessage msg;
            msg.role = role_from_string(detail::get_string(m, "role", "message"), "message.role");
            msg.text = detail::get_string(m, "text", "message");
            if (auto men = m.find("mentions"); men != m.end()) {
                require(men->is_array(), "message: 'mentions' must be an array");
                for (const auto& mj : *men) {
                    Mention mention;
                    mention.entity = detail::entity_from_json(mj, "mention");
                    auto rec = mj.find("is_recommendation");
                    require(rec != mj.end() && rec->is_boolean(),
                            "mention: missing boolean 'is_recommendation'");
                    mention.is_recommendation = rec->get<bool>();
                    mention.sentiment = sentiment_from_string(
                        detail::get_string(mj, "sentiment", "mention"), "mention.sentiment");
                    msg.mentions.push_back(std::move(mention));
                }
            }
            conv.messages.push_back(std::move(msg));
        }
        validate_conversation(conv);
        out.push_back(std::move(conv));
    });
    return out;
}

inline void write_convs_jsonl(const std::vector<ConversationLog>& corpus, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "cannot open '" + path + "' for writing");
    for (const auto& conv : corpus) {
        ojson doc;
        doc["conversation_id"] = conv.conversation_id;
        doc["initiator_id"] = conv.initiator_id;
        doc["respondent_id"] = conv.respondent_id;
        ojson msgs = ojson::array();
        for (const auto& m : conv.messages) {
            ojson mo;
            mo["role"] = to_string(m.role);
            mo["text"] = m.text;
            ojson mentions = ojson::array();
            for (const auto& men : m.mentions) {
                ojson mj = detail::entity_to_json(men.entity);
                mj["is_recommendation"] = men.is_recommendation;
                mj["sentiment"] = to_string(men.sentiment);
                mentions.push_back(std::move(mj));
            }
            mo["mentions"] = std::move(mentions);
            msgs.push_back(std::move(mo));
        }
        doc["messages"] = std::move(msgs);
        out << doc.dump() << '\n';
    }
    require(out.good(), "write failed for '" + path + "'");
}

inline std::vector<RatingRecord> read_ratings_jsonl(const std::string& path) {
    std::vector<RatingRecord> out;
    detail::for_each_jsonl(path, [&](const json& doc) {
        require(doc.is_object(), "rating must be an object");
        RatingRecord r;
        r.user_id = detail::get_string(doc, "user_id", "rating");
        auto recipe = doc.find("recipe");
        require(recipe != doc.end(), "rating: missing 'recipe'");
        r.recipe = detail::entity_from_json(*recipe, "rating.recipe");
        auto stars = doc.find("stars");
        require(stars != doc.end() && stars->is_number_integer(), "rating: missing integer 'stars'");
        r.stars = stars->get<int>();
        require(r.stars >= 0 && r.stars <= 5, "rating: stars outside 0..5");
        if (auto attrs = doc.find("attrs"); attrs != doc.end()) {
            require(attrs->is_array(), "rating: 'attrs' must be an array");
            for (const auto& a : *attrs) {
                require(a.is_array() && a.size() == 2 && a[0].is_string() && a[1].is_string(),
                        "rating: each attr must be a [name, value] string pair");
                r.attrs.emplace_back(a[0].get<std::string>(), a[1].get<std::string>());
            }
        }
        out.push_back(std::move(r));
    });
    return out;
}

inline void write_ratings_jsonl(const std::vector<RatingRecord>& ratings, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "cannot open '" + path + "' for writing");
    for (const auto& r : ratings) {
        ojson doc;
        doc["user_id"] = r.user_id;
        doc["recipe"] = detail::entity_to_json(r.recipe);
        doc["stars"] = r.stars;
        ojson attrs = ojson::array();
        for (const auto& [k, v] : r.attrs) attrs.push_back(ojson::array({k, v}));
        doc["attrs"] = std::move(attrs);
        out << doc.dump() << '\n';
    }
    require(out.good(), "write failed for '" + path + "'");
}

inline std::vector<PreferenceExample> read_examples_jsonl(const std::string& path) {
    std::vector<PreferenceExample> out;
    detail::for_each_jsonl(path, [&](const json& doc) {
        require(doc.is_object(), "example must be an object");
        PreferenceExample ex;
        ex.client_id = detail::get_string(doc, "client_id", "example");
        ex.prompt = detail::get_string(doc, "prompt", "example");
        ex.completion = detail::get_string(doc, "completion", "example");
        require(!ex.prompt.empty() && !ex.completion.empty(), "example: prompt and completion must be non-empty");
        ex.label = label_from_string(detail::get_string(doc, "label", "example"), "example.label");
        ex.origin = origin_from_string(detail::get_string(doc, "origin", "example"), "example.origin");
        if (auto src = doc.find("source_ids"); src != doc.end()) {
            require(src->is_array(), "example: 'source_ids' must be an array");
            for (const auto& s : *src) {
                require(s.is_string(), "example: source_ids entries must be strings");
                ex.source_ids.push_back(s.get<std::string>());
            }
        }
        out.push_back(std::move(ex));
    });
    return out;
}

inline void write_examples_jsonl(const std::vector<PreferenceExample>& examples, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "cannot open '" + path + "' for writing");
    for (const auto& ex : examples) {
        require(!ex.prompt.empty() && !ex.completion.empty(),
                "example: prompt and completion must be non-empty");
        ojson doc;
        doc["client_id"] = ex.client_id;
        doc["prompt"] = ex.prompt;
        doc["completion"] = ex.completion;
        doc["label"] = to_string(ex.label);
        doc["origin"] = to_string(ex.origin);
        doc["source_ids"] = ex.source_ids;
        out << doc.dump() << '\n';
    }
    require(out.good(), "write failed for '" + path + "'");
}

}  // namespace fedtrek
