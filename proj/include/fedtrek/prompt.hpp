// Copyright (c) 2026 the fedtrek authors
// SPDX-License-Identifier: Apache-2.0
//
// Prompt codec: the system prompt template and its placeholder renderer,
// dialogue flattening, the bulleted completion format, and the strict
// parsers that invert both (completion -> labels, prompt -> embedded PKG).

#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "fedtrek/common.hpp"
#include "fedtrek/pkg.hpp"

namespace fedtrek {

// Recommendation-task wording for one domain. entity_type ties the profile
// to PKG triples; the other two fill the template slots.
struct DomainProfile {
    std::string recommendation_domain;  // e.g. "movie"
    std::string item_type;              // e.g. "movies"
    std::string entity_type;            // e.g. "movie"
};

inline DomainProfile movie_profile() { return {"movie", "movies", "movie"}; }
inline DomainProfile recipe_profile() { return {"recipe", "recipes", "recipe"}; }

inline constexpr std::string_view kSystemPromptTemplate =
    "You perform {Recommendation_Domain} recommendations based on a Knowledge Graph. "
    "You will recommend a list of {Item_Type} to the user that are not already in their "
    "knowledge graph. The user's entity is represented by {User_ID}. Use this knowledge "
    "graph when responding to their queries: {User_PKG}. Provide the recommendations as "
    "a bulleted list with dashes (-) as the bullet points.";

inline constexpr std::string_view kCompletionHeader =
    "Based on your Knowledge Graph, I recommend the following: ";

inline constexpr std::string_view kPkgAnchor = "when responding to their queries: ";

// Substitute {Name} slots from the map; unknown slot names and unconsumed
// map entries are errors so template drift cannot pass silently.
inline std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& slots) {
    std::string out;
    out.reserve(tmpl.size());
    std::map<std::string, bool> used;
    for (const auto& [k, v] : slots) used[k] = false;
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] != '{') {
            out.push_back(tmpl[i++]);
            continue;
        }
        std::size_t close = tmpl.find('}', i);
        require(close != std::string_view::npos, "template: unterminated '{' at offset " + std::to_string(i));
        std::string name(tmpl.substr(i + 1, close - i - 1));
        auto it = slots.find(name);
        require(it != slots.end(), "template: unknown placeholder '{" + name + "}'");
        out += it->second;
        used[name] = true;
        i = close + 1;
    }
    for (const auto& [k, was_used] : used)
        require(was_used, "template: placeholder '{" + k + "}' never appears");
    return out;
}

// System prompt for one user over the given sub-PKG snapshot.
inline std::string render_system_prompt(const DomainProfile& profile, const SubPkg& sub,
                                        std::string_view tmpl = kSystemPromptTemplate) {
    require(!sub.user_id.empty(), "render_system_prompt: empty user id");
    return render_template(tmpl, {
                                     {"Recommendation_Domain", profile.recommendation_domain},
                                     {"Item_Type", profile.item_type},
                                     {"User_ID", sub.user_id},
                                     {"User_PKG", to_prompt_json(sub)},
                                 });
}

// One dialogue turn as it appears in the flattened prompt.
struct DialogueTurn {
    std::string speaker;  // "User" or "Assistant"
    std::string text;

    bool operator==(const DialogueTurn&) const = default;
};

// Full model input: system line followed by the conversation so far,
// one "Speaker: text" line per turn.
inline std::string render_prompt(const std::string& system_text, const std::vector<DialogueTurn>& turns) {
    std::string out = "System: " + system_text;
    for (const auto& t : turns) {
        require(t.speaker == "User" || t.speaker == "Assistant",
                "render_prompt: speaker must be 'User' or 'Assistant', got '" + t.speaker + "'");
        out += "\n" + t.speaker + ": " + t.text;
    }
    return out;
}

inline std::string synthetic_user_query(const DomainProfile& profile) {
    return "Recommend " + profile.item_type + " to me.";
}

// Target completion: fixed header, then one "- label" line per item.
inline std::string render_completion(const std::vector<std::string>& labels) {
    require(!labels.empty(), "render_completion: need at least one item");
    std::string out(kCompletionHeader);
    for (const auto& label : labels) {
        require(!label.empty(), "render_completion: empty item label");
        require(label.find('\n') == std::string::npos, "render_completion: label contains newline");
        out += "\n- " + label;
    }
    return out;
}

// Inverse of render_completion, tolerant of model chatter: every line whose
// first non-space character is '-' yields one item (dash and surrounding
// whitespace stripped); other lines are ignored. Repeats keep their first
// occurrence; zero bullets is a valid empty prediction, not an error.
inline std::vector<std::string> parse_completion(std::string_view text) {
    std::vector<std::string> labels;
    std::set<std::string, std::less<>> seen;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t eol = text.find('\n', pos);
        std::string_view line =
            text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
        std::size_t first = line.find_first_not_of(" \t\r");
        if (first != std::string_view::npos && line[first] == '-') {
            std::string label = trim(line.substr(first + 1));
            if (!label.empty() && seen.insert(label).second) labels.push_back(std::move(label));
        }
        if (eol == std::string_view::npos) break;
        pos = eol + 1;
    }
    return labels;
}

// PKG statement recovered from a rendered prompt.
struct PromptPkg {
    std::string user_id;
    std::vector<std::string> liked;
    std::vector<std::string> disliked;

    bool operator==(const PromptPkg&) const = default;
};

// Pull the compact {"user": {...}} JSON back out of a rendered prompt via
// the fixed anchor phrase and a balanced-brace scan (labels may contain
// braces only inside strings, which the scan respects).
inline std::string extract_pkg_json(std::string_view prompt) {
    std::size_t at = prompt.find(kPkgAnchor);
    require(at != std::string_view::npos, "prompt: anchor phrase for the knowledge graph not found");
    std::size_t start = at + kPkgAnchor.size();
    require(start < prompt.size() && prompt[start] == '{', "prompt: no JSON object after anchor");
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = start; i < prompt.size(); ++i) {
        char c = prompt[i];
        if (in_string) {
            if (c == '\\') {
                ++i;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') in_string = true;
        else if (c == '{') ++depth;
        else if (c == '}') {
            --depth;
            if (depth == 0) return std::string(prompt.substr(start, i - start + 1));
        }
    }
    fail("prompt: unbalanced braces in embedded knowledge graph");
}

inline PromptPkg parse_prompt_pkg(std::string_view prompt) {
    json doc = json::parse(extract_pkg_json(prompt), nullptr, false);
    require(!doc.is_discarded(), "prompt: embedded knowledge graph is not valid JSON");
    require(doc.is_object() && doc.size() == 1, "prompt: embedded graph must be a single-user object");
    PromptPkg out;
    const auto it = doc.begin();
    out.user_id = it.key();
    const json& body = it.value();
    require(body.is_object(), "prompt: user value must be an object");
    for (const auto& [key, value] : body.items()) {
        require(key == "liked" || key == "disliked", "prompt: unknown relation '" + key + "' in embedded graph");
        require(value.is_array(), "prompt: '" + key + "' must be an array");
        auto& dst = key == "liked" ? out.liked : out.disliked;
        for (const auto& item : value) {
            require(item.is_string(), "prompt: '" + key + "' entries must be strings");
            dst.push_back(item.get<std::string>());
        }
    }
    return out;
}

// Case/whitespace-insensitive form used to match free-text labels against
// the catalog: lowercase ASCII, trimmed, runs of whitespace collapsed.
inline std::string normalize_label(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (char raw : s) {
        unsigned char c = static_cast<unsigned char>(raw);
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
            if (!out.empty()) pending_space = true;
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c));
    }
    return out;
}

}  // namespace fedtrek
