// Copyright (c) 2026 the fedtrek authors
// SPDX-License-Identifier: Apache-2.0
//
// Personal knowledge graph store: one user's chronologically ordered
// liked/disliked entity triples, JSON-LD serializable, queryable by
// domain + time cutoff, and renderable as the compact prompt JSON.

#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedtrek/common.hpp"

namespace fedtrek {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

enum class Relation { liked, disliked };

inline const char* to_string(Relation r) { return r == Relation::liked ? "liked" : "disliked"; }

inline Relation relation_from_string(std::string_view s, const std::string& path) {
    if (s == "liked") return Relation::liked;
    if (s == "disliked") return Relation::disliked;
    fail(path + ": unknown relation '" + std::string(s) + "'");
}

struct EntityRef {
    std::string iri;          // stable, unique per entity
    std::string label;        // display string, e.g. "Zodiac (2007)"
    std::string entity_type;  // domain class tag, e.g. "movie"

    bool operator==(const EntityRef&) const = default;
};

struct PreferenceTriple {
    std::string subject;  // user id
    Relation relation = Relation::liked;
    EntityRef object;
    std::int64_t order_index = 0;  // chronological position, >= 0

    bool operator==(const PreferenceTriple&) const = default;
};

struct PersonalKnowledgeGraph {
    std::string user_id;
    std::vector<PreferenceTriple> triples;  // sorted by order_index, ties by insertion

    bool operator==(const PersonalKnowledgeGraph&) const = default;
};

// Same shape as a PKG, restricted to one entity_type and an order cutoff.
struct SubPkg {
    std::string user_id;
    std::string domain;
    std::int64_t cutoff = INT64_MAX;
    std::vector<PreferenceTriple> triples;

    bool operator==(const SubPkg&) const = default;
};

constexpr std::int64_t kNoCutoff = INT64_MAX;

inline void validate_pkg(const PersonalKnowledgeGraph& pkg) {
    std::set<std::pair<int, std::string>> seen;
    std::int64_t prev = -1;
    for (const auto& t : pkg.triples) {
        require(t.subject == pkg.user_id, "pkg: triple subject '" + t.subject +
                                              "' does not match user '" + pkg.user_id + "'");
        require(t.order_index >= 0, "pkg: negative order_index");
        require(t.order_index >= prev, "pkg: triples not sorted by order_index");
        require(!t.object.iri.empty(), "pkg: entity iri must be non-empty");
        require(!t.object.label.empty(), "pkg: entity label must be non-empty");
        require(seen.insert({static_cast<int>(t.relation), t.object.iri}).second,
                "pkg: duplicate (relation, iri) pair for '" + t.object.iri + "'");
        prev = t.order_index;
    }
}

struct AddOutcome {
    PersonalKnowledgeGraph pkg;
    bool redundant = false;  // the (relation, iri) pair was already present
};

// Append a triple preserving the order invariant. Re-adding an existing
// (relation, iri) pair is idempotent and reported through the flag.
inline AddOutcome add_preference(const PersonalKnowledgeGraph& pkg, const PreferenceTriple& t) {
    require(t.subject == pkg.user_id,
            "add_preference: subject '" + t.subject + "' does not match pkg user '" + pkg.user_id + "'");
    require(t.order_index >= 0, "add_preference: negative order_index");
    require(!t.object.iri.empty(), "add_preference: entity iri must be non-empty");
    require(!t.object.label.empty(), "add_preference: entity label must be non-empty");
    for (const auto& existing : pkg.triples) {
        if (existing.relation == t.relation && existing.object.iri == t.object.iri) {
            return {pkg, true};
        }
    }
    AddOutcome out{pkg, false};
    auto pos = std::upper_bound(
        out.pkg.triples.begin(), out.pkg.triples.end(), t,
        [](const PreferenceTriple& a, const PreferenceTriple& b) { return a.order_index < b.order_index; });
    out.pkg.triples.insert(pos, t);
    return out;
}

inline bool contains_iri(const PersonalKnowledgeGraph& pkg, const std::string& iri) {
    for (const auto& t : pkg.triples)
        if (t.object.iri == iri) return true;
    return false;
}

inline bool contains_entity(const PersonalKnowledgeGraph& pkg, const EntityRef& e) {
    return contains_iri(pkg, e.iri);
}

inline SubPkg query_subpkg(const PersonalKnowledgeGraph& pkg, const std::string& domain,
                           std::int64_t cutoff = kNoCutoff) {
    require(cutoff >= 0, "query_subpkg: cutoff must be >= 0");
    SubPkg out{pkg.user_id, domain, cutoff, {}};
    for (const auto& t : pkg.triples) {
        if (t.object.entity_type == domain && t.order_index <= cutoff) out.triples.push_back(t);
    }
    return out;
}

// Whole PKG viewed as a SubPkg (no domain filter); used by the synthetic
// generators whose PKGs are single-domain by construction.
inline SubPkg as_subpkg(const PersonalKnowledgeGraph& pkg, const std::string& domain) {
    return SubPkg{pkg.user_id, domain, kNoCutoff, pkg.triples};
}

// Latest stated preference for an entity (highest order_index wins,
// later insertion wins ties); nullopt if the entity is absent.
inline std::optional<Relation> current_relation(const PersonalKnowledgeGraph& pkg, const std::string& iri) {
    std::optional<Relation> out;
    for (const auto& t : pkg.triples)
        if (t.object.iri == iri) out = t.relation;  // list is order-sorted, last hit is latest
    return out;
}

// ---------------------------------------------------------------------------
// Compact prompt JSON: {"<user>": {"liked": [...], "disliked": [...]}}
// ---------------------------------------------------------------------------

// Minimal JSON string escaping, matching the conventional renderer the prompt
// examples were produced with (", \, control chars; UTF-8 passes through).
inline void append_json_string(std::string& out, std::string_view s) {
    out.push_back('"');
    for (unsigned char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\b': out += "\\b"; break;
            case '\f': out += "\\f"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            default:
                if (c < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof buf, "\\u%04x", c);
                    out += buf;
                } else {
                    out.push_back(static_cast<char>(c));
                }
        }
    }
    out.push_back('"');
}

// Deterministic compact serialization of a SubPkg for prompt embedding.
// Key order is fixed ("liked" then "disliked", empty keys omitted); labels
// appear in order_index order. Two equal SubPkgs yield identical bytes.
inline std::string to_prompt_json(const SubPkg& sub) {
    std::vector<std::string_view> liked;
    std::vector<std::string_view> disliked;
    for (const auto& t : sub.triples) {
        (t.relation == Relation::liked ? liked : disliked).push_back(t.object.label);
    }
    std::string out;
    out.push_back('{');
    append_json_string(out, sub.user_id);
    out += ": {";
    auto emit_list = [&out](const char* key, const std::vector<std::string_view>& items) {
        append_json_string(out, key);
        out += ": [";
        for (std::size_t i = 0; i < items.size(); ++i) {
            if (i) out += ", ";
            append_json_string(out, items[i]);
        }
        out += "]";
    };
    if (!liked.empty()) emit_list("liked", liked);
    if (!disliked.empty()) {
        if (!liked.empty()) out += ", ";
        emit_list("disliked", disliked);
    }
    out += "}}";
    return out;
}

// ---------------------------------------------------------------------------
// JSON-LD serialization
// ---------------------------------------------------------------------------

namespace detail {

inline std::string schema_class_for(const std::string& entity_type) {
    std::string name = entity_type;
    if (!name.empty() && name[0] >= 'a' && name[0] <= 'z') name[0] = static_cast<char>(name[0] - 'a' + 'A');
    return "schema:" + name;
}

inline const json* find_key(const json& obj, const char* key) {
    auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
}

}  // namespace detail

// Canonical document: @context mapping relations and entity types to
// schema.org-style IRIs, one user node, one node per entity with @type,
// liked/disliked edges as property arrays. Each edge carries the triple's
// order_index ("order") and its global position ("seq"); seq pins the
// interleave of equal order indices so the round trip is exact.
inline ojson to_jsonld(const PersonalKnowledgeGraph& pkg) {
    ojson context;
    context["schema"] = "https://schema.org/";
    context["pkg"] = "https://w3id.org/fedtrek/pkg#";
    context["label"] = "schema:name";
    context["userId"] = "pkg:userId";
    context["order"] = "pkg:orderIndex";
    context["seq"] = "pkg:sequence";
    context["liked"] = ojson{{"@id", "pkg:liked"}, {"@container", "@list"}};
    context["disliked"] = ojson{{"@id", "pkg:disliked"}, {"@container", "@list"}};
    context["User"] = "pkg:User";

    std::map<std::string, std::string> type_terms;  // entity_type -> schema class
    for (const auto& t : pkg.triples) type_terms[t.object.entity_type] = detail::schema_class_for(t.object.entity_type);
    for (const auto& [term, iri] : type_terms) context[term] = iri;

    ojson user_node;
    user_node["@id"] = "pkg:user:" + pkg.user_id;
    user_node["@type"] = "User";
    user_node["userId"] = pkg.user_id;
    ojson liked = ojson::array();
    ojson disliked = ojson::array();
    std::vector<std::string> entity_order;  // first-appearance order
    std::map<std::string, const EntityRef*> entity_by_iri;
    for (std::size_t i = 0; i < pkg.triples.size(); ++i) {
        const auto& t = pkg.triples[i];
        ojson edge;
        edge["@id"] = t.object.iri;
        edge["order"] = t.order_index;
        edge["seq"] = i;
        (t.relation == Relation::liked ? liked : disliked).push_back(std::move(edge));
        if (!entity_by_iri.count(t.object.iri)) {
            entity_by_iri[t.object.iri] = &t.object;
            entity_order.push_back(t.object.iri);
        }
    }
    if (!liked.empty()) user_node["liked"] = std::move(liked);
    if (!disliked.empty()) user_node["disliked"] = std::move(disliked);

    ojson graph = ojson::array();
    graph.push_back(std::move(user_node));
    for (const auto& iri : entity_order) {
        const EntityRef& e = *entity_by_iri.at(iri);
        ojson node;
        node["@id"] = e.iri;
        node["@type"] = e.entity_type;
        node["label"] = e.label;
        graph.push_back(std::move(node));
    }

    ojson doc;
    doc["@context"] = std::move(context);
    doc["@graph"] = std::move(graph);
    return doc;
}

inline PersonalKnowledgeGraph from_jsonld(const json& doc) {
    require(doc.is_object(), "$: document must be a JSON object");
    const json* context = detail::find_key(doc, "@context");
    require(context != nullptr, "$.@context: missing context");
    require(context->is_object(), "$.@context: context must be an object");
    require(context->contains("liked") && context->contains("disliked"),
            "$.@context: context must map 'liked' and 'disliked'");
    const json* graph = detail::find_key(doc, "@graph");
    require(graph != nullptr && graph->is_array(), "$.@graph: missing or non-array graph");

    // Locate the single user node and collect entity nodes.
    const json* user_node = nullptr;
    std::size_t user_pos = 0;
    std::map<std::string, EntityRef> entities;
    for (std::size_t i = 0; i < graph->size(); ++i) {
        const json& node = (*graph)[i];
        const std::string path = "$.@graph[" + std::to_string(i) + "]";
        require(node.is_object(), path + ": node must be an object");
        if (node.contains("userId")) {
            require(user_node == nullptr, path + ": more than one user node");
            user_node = &node;
            user_pos = i;
            continue;
        }
        const json* id = detail::find_key(node, "@id");
        require(id != nullptr && id->is_string(), path + ".@id: missing entity iri");
        EntityRef e;
        e.iri = id->get<std::string>();
        const json* type = detail::find_key(node, "@type");
        require(type != nullptr && type->is_string(), path + ".@type: missing entity type");
        e.entity_type = type->get<std::string>();
        const json* label = detail::find_key(node, "label");
        require(label != nullptr && label->is_string(), path + ".label: missing entity label");
        e.label = label->get<std::string>();
        entities[e.iri] = std::move(e);
    }
    require(user_node != nullptr, "$.@graph: no user node (expected a node with 'userId')");

    const std::string user_path = "$.@graph[" + std::to_string(user_pos) + "]";
    PersonalKnowledgeGraph pkg;
    const json* uid = detail::find_key(*user_node, "userId");
    require(uid->is_string(), user_path + ".userId: must be a string");
    pkg.user_id = uid->get<std::string>();

    struct ParsedEdge {
        Relation relation;
        std::string iri;
        std::int64_t order;
        std::int64_t seq;
    };
    std::vector<ParsedEdge> edges;
    for (auto it = user_node->begin(); it != user_node->end(); ++it) {
        const std::string& key = it.key();
        if (key == "@id" || key == "@type" || key == "userId") continue;
        const std::string path = user_path + "." + key;
        Relation rel = relation_from_string(key, path);  // anything else is an unknown relation
        require(it.value().is_array(), path + ": edge list must be an array");
        for (std::size_t j = 0; j < it.value().size(); ++j) {
            const json& edge = it.value()[j];
            const std::string epath = path + "[" + std::to_string(j) + "]";
            require(edge.is_object(), epath + ": edge must be an object");
            const json* id = detail::find_key(edge, "@id");
            require(id != nullptr && id->is_string(), epath + ".@id: missing entity reference");
            const json* order = detail::find_key(edge, "order");
            require(order != nullptr && order->is_number_integer(), epath + ".order: missing order index");
            const json* seq = detail::find_key(edge, "seq");
            require(seq != nullptr && seq->is_number_integer(), epath + ".seq: missing sequence number");
            std::int64_t order_v = order->get<std::int64_t>();
            require(order_v >= 0, epath + ".order: must be >= 0");
            edges.push_back({rel, id->get<std::string>(), order_v, seq->get<std::int64_t>()});
        }
    }
    std::stable_sort(edges.begin(), edges.end(),
                     [](const ParsedEdge& a, const ParsedEdge& b) { return a.seq < b.seq; });
    for (const auto& e : edges) {
        auto ent = entities.find(e.iri);
        require(ent != entities.end(), user_path + ": edge references undeclared entity '" + e.iri + "'");
        pkg.triples.push_back({pkg.user_id, e.relation, ent->second, e.order});
    }
    validate_pkg(pkg);
    return pkg;
}

inline PersonalKnowledgeGraph from_jsonld_text(const std::string& text) {
    json doc = json::parse(text, nullptr, false);
    require(!doc.is_discarded(), "$: malformed JSON");
    return from_jsonld(doc);
}

inline void save_pkg(const PersonalKnowledgeGraph& pkg, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "save_pkg: cannot open '" + path + "'");
    out << to_jsonld(pkg).dump(2) << '\n';
    require(out.good(), "save_pkg: write failed for '" + path + "'");
}

inline PersonalKnowledgeGraph load_pkg(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "load_pkg: cannot open '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return from_jsonld_text(buf.str());
}

}  // namespace fedtrek
