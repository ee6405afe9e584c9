// Copyright (c) 2026 the fedtrek authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "fedtrek/prompt.hpp"
#include "fedtrek/rng.hpp"
#include "testutil.hpp"

using namespace fedtrek;
using Catch::Matchers::ContainsSubstring;

namespace {

SubPkg sample_subpkg() {
    SubPkg sub;
    sub.user_id = "32";
    sub.domain = "movie";
    sub.triples.push_back(
        {"32", Relation::liked, {"m:raiders", "Raiders of the Lost Ark (1981)", "movie"}, 0});
    sub.triples.push_back({"32", Relation::disliked, {"m:neon", "Neon Harbor (1970)", "movie"}, 1});
    return sub;
}

}  // namespace

TEST_CASE("system prompt template matches the shipped resource file byte for byte") {
    const std::string file = testutil::read_file(testutil::data_path("templates/system_prompt.txt"));
    REQUIRE(file == std::string(kSystemPromptTemplate));
}

TEST_CASE("render_system_prompt instantiates every placeholder") {
    SubPkg sub = sample_subpkg();
    const std::string text = render_system_prompt(movie_profile(), sub);
    REQUIRE_THAT(text, ContainsSubstring("You perform movie recommendations"));
    REQUIRE_THAT(text, ContainsSubstring("recommend a list of movies"));
    REQUIRE_THAT(text, ContainsSubstring("represented by 32"));
    REQUIRE_THAT(text, ContainsSubstring(to_prompt_json(sub)));
    REQUIRE_THAT(text, ContainsSubstring("bulleted list with dashes (-)"));
    // No placeholder survives rendering.
    REQUIRE(text.find('{') == text.find(to_prompt_json(sub)));
    REQUIRE(text.find("{Recommendation_Domain}") == std::string::npos);

    // Determinism: equal inputs give identical bytes.
    REQUIRE(render_system_prompt(movie_profile(), sub) == text);
}

TEST_CASE("render_system_prompt embeds an empty graph as an empty object") {
    SubPkg sub;
    sub.user_id = "32";
    sub.domain = "movie";
    const std::string text = render_system_prompt(movie_profile(), sub);
    REQUIRE_THAT(text, ContainsSubstring(R"({"32": {}})"));
}

TEST_CASE("render_system_prompt rejects an empty user id") {
    SubPkg sub;
    REQUIRE_THROWS_AS(render_system_prompt(movie_profile(), sub), Error);
}

TEST_CASE("render_template reports bad placeholders") {
    REQUIRE_THROWS_WITH(render_template("hi {Nope}", {}), ContainsSubstring("Nope"));
    REQUIRE_THROWS_WITH(render_template("hi {Unterminated", {}),
                        ContainsSubstring("unterminated"));
    REQUIRE_THROWS_WITH(render_template("no slots", {{"Unused", "x"}}),
                        ContainsSubstring("Unused"));
}

TEST_CASE("render_prompt lays out speaker-tagged turns") {
    const std::string text =
        render_prompt("SYS", {{"User", "hello"}, {"Assistant", "hi"}, {"User", "rec?"}});
    REQUIRE(text == "System: SYS\nUser: hello\nAssistant: hi\nUser: rec?");
    REQUIRE_THROWS_AS(render_prompt("SYS", {{"narrator", "hm"}}), Error);
}

TEST_CASE("synthetic_user_query names the item type") {
    REQUIRE(synthetic_user_query(movie_profile()) == "Recommend movies to me.");
    REQUIRE(synthetic_user_query(recipe_profile()) == "Recommend recipes to me.");
}

TEST_CASE("render_completion emits the header and one dash line per item") {
    REQUIRE(render_completion({"What Lies Beneath (2000)"}) ==
            "Based on your Knowledge Graph, I recommend the following: \n- What Lies Beneath (2000)");
    REQUIRE(render_completion({"A", "B"}) ==
            "Based on your Knowledge Graph, I recommend the following: \n- A\n- B");
    REQUIRE_THROWS_AS(render_completion({}), Error);
    REQUIRE_THROWS_AS(render_completion({""}), Error);
    REQUIRE_THROWS_AS(render_completion({"two\nlines"}), Error);
}

TEST_CASE("parse_completion extracts dash lines and ignores chatter") {
    REQUIRE(parse_completion("chatter\n- X \n- Y") == std::vector<std::string>{"X", "Y"});
    REQUIRE(parse_completion("no bullets here").empty());
    REQUIRE(parse_completion("").empty());
    REQUIRE(parse_completion("  - indented\n\t- tabbed") ==
            std::vector<std::string>{"indented", "tabbed"});
    REQUIRE(parse_completion("-tight") == std::vector<std::string>{"tight"});
    REQUIRE(parse_completion("- \n-   \n- real") == std::vector<std::string>{"real"});
    // First occurrence wins on repeats.
    REQUIRE(parse_completion("- A\n- B\n- A") == std::vector<std::string>{"A", "B"});
}

TEST_CASE("parse_completion inverts render_completion") {
    REQUIRE(parse_completion(render_completion({"A", "B"})) == std::vector<std::string>{"A", "B"});

    Rng rng(2024);
    static const std::vector<std::string> words = {"Amber",  "Basalt", "Cinder", "Dune",
                                                   "Ember",  "Fable",  "Garnet", "Hollow",
                                                   "Indigo", "Juniper"};
    for (int trial = 0; trial < 200; ++trial) {
        std::set<std::string> labels;
        const std::size_t n = 1 + rng.below(8);
        while (labels.size() < n)
            labels.insert(words[rng.below(words.size())] + " " + words[rng.below(words.size())] +
                          " (" + std::to_string(1960 + rng.below(60)) + ")");
        std::vector<std::string> in(labels.begin(), labels.end());
        rng.shuffle(in);
        REQUIRE(parse_completion(render_completion(in)) == in);
    }
}

TEST_CASE("extract_pkg_json recovers the embedded graph despite tricky labels") {
    SubPkg sub;
    sub.user_id = "u{9}";
    sub.domain = "movie";
    sub.triples.push_back({"u{9}", Relation::liked, {"m:a", "Braces {inside} (2001)", "movie"}, 0});
    sub.triples.push_back({"u{9}", Relation::disliked, {"m:b", "Quote \" and } brace", "movie"}, 1});
    const std::string prompt =
        render_prompt(render_system_prompt(movie_profile(), sub), {{"User", "pick for me"}});

    const std::string embedded = extract_pkg_json(prompt);
    REQUIRE(embedded == to_prompt_json(sub));

    PromptPkg parsed = parse_prompt_pkg(prompt);
    REQUIRE(parsed.user_id == "u{9}");
    REQUIRE(parsed.liked == std::vector<std::string>{"Braces {inside} (2001)"});
    REQUIRE(parsed.disliked == std::vector<std::string>{"Quote \" and } brace"});
}

TEST_CASE("parse_prompt_pkg fails when no graph is embedded") {
    REQUIRE_THROWS_AS(parse_prompt_pkg("System: no graph here"), Error);
}

TEST_CASE("normalize_label is case/whitespace insensitive but keeps years") {
    REQUIRE(normalize_label("  The   GODFATHER  ") == "the godfather");
    REQUIRE(normalize_label("Air Force One (1997)") == "air force one (1997)");
    REQUIRE(normalize_label("a\tb\r\nc") == "a b c");
    REQUIRE(normalize_label("") == "");
}
