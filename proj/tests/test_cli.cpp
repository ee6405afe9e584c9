// Copyright (c) 2026 the fedtrek authors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end exercises of the command-line tool: every subcommand runs as a
// real child process against the bundled miniature corpora.

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "fedtrek/learner.hpp"
#include "fedtrek/dataset.hpp"
#include "testutil.hpp"

using namespace fedtrek;
using Catch::Matchers::ContainsSubstring;
using testutil::data_path;
using testutil::nonempty_lines;
using testutil::read_file;
using testutil::run_cli;
using testutil::TempDir;

namespace {

std::string quoted(const std::string& s) { return "'" + s + "'"; }

// Builds a movie dataset into <tmp>/<name> and returns its path.
std::string build_movie_dir(const TempDir& tmp, const std::string& name,
                            const std::string& extra = "") {
    const std::string dir = tmp.str(name);
    auto r = run_cli("build-dataset --convs " + quoted(data_path("fixtures/mini_movie.convs.jsonl")) +
                         " --out " + quoted(dir) + " " + extra,
                     tmp);
    REQUIRE(r.exit_code == 0);
    return dir;
}

}  // namespace

TEST_CASE("gen-corpus regenerates the bundled fixtures byte for byte") {
    TempDir tmp;
    auto movie = run_cli("gen-corpus --domain movie --out " + quoted(tmp.str("m.convs.jsonl")), tmp);
    REQUIRE(movie.exit_code == 0);
    REQUIRE_THAT(movie.output, ContainsSubstring("wrote "));
    REQUIRE(read_file(tmp.str("m.convs.jsonl")) ==
            read_file(data_path("fixtures/mini_movie.convs.jsonl")));

    json manifest = json::parse(read_file(tmp.str("m.convs.jsonl.manifest.json")));
    REQUIRE(manifest["counts"]["clients"] == 16);
    REQUIRE(manifest["counts"]["conversations"] == 80);
    REQUIRE(manifest["counts"]["messages"] == 320);
    REQUIRE(manifest["counts"]["entities"] == 60);

    auto recipe =
        run_cli("gen-corpus --domain recipe --out " + quoted(tmp.str("r.ratings.jsonl")), tmp);
    REQUIRE(recipe.exit_code == 0);
    REQUIRE(read_file(tmp.str("r.ratings.jsonl")) ==
            read_file(data_path("fixtures/mini_recipe.ratings.jsonl")));

    auto other = run_cli(
        "gen-corpus --domain movie --seed 9 --out " + quoted(tmp.str("other.convs.jsonl")), tmp);
    REQUIRE(other.exit_code == 0);
    REQUIRE(read_file(tmp.str("other.convs.jsonl")) != read_file(tmp.str("m.convs.jsonl")));

    auto bad = run_cli("gen-corpus --domain books --out " + quoted(tmp.str("b.jsonl")), tmp);
    REQUIRE(bad.exit_code != 0);
}

TEST_CASE("build-dataset lays out a complete, deterministic dataset directory") {
    TempDir tmp;
    const std::string d1 = build_movie_dir(tmp, "d1");
    const std::string d2 = build_movie_dir(tmp, "d2");

    for (const char* f : {"profile.json", "catalog.json", "train.examples.jsonl",
                          "test.examples.jsonl", "manifest.json"})
        REQUIRE(std::filesystem::exists(std::filesystem::path(d1) / f));

    // Two invocations at different paths produce the same data bytes.
    for (const char* f :
         {"profile.json", "catalog.json", "train.examples.jsonl", "test.examples.jsonl"})
        REQUIRE(read_file(d1 + "/" + f) == read_file(d2 + "/" + f));

    auto train = read_examples_jsonl(d1 + "/train.examples.jsonl");
    auto test = read_examples_jsonl(d1 + "/test.examples.jsonl");
    REQUIRE(!train.empty());
    REQUIRE(!test.empty());
    for (const auto& ex : train) REQUIRE(ex.origin == Origin::real);
    for (const auto& ex : test) {
        REQUIRE(ex.origin == Origin::real);
        REQUIRE(ex.label == Label::desirable);  // the holdout pool is positive-only
    }

    // One serialized graph per client, all loadable.
    std::set<std::string> clients;
    for (const auto& ex : train) clients.insert(ex.client_id);
    for (const auto& ex : test) clients.insert(ex.client_id);
    std::size_t pkg_files = 0;
    for (const auto& entry : std::filesystem::directory_iterator(d1 + "/pkgs")) {
        ++pkg_files;
        PersonalKnowledgeGraph pkg = load_pkg(entry.path().string());
        REQUIRE(!pkg.user_id.empty());
    }
    REQUIRE(pkg_files == 16);
    REQUIRE(clients.size() <= pkg_files);

    json manifest = json::parse(read_file(d1 + "/manifest.json"));
    REQUIRE(manifest["command"] == "build-dataset");
    REQUIRE(manifest["counts"]["train"] == train.size());
    REQUIRE(manifest["counts"]["test"] == test.size());

    // A different split seed moves examples across the boundary.
    const std::string d3 = build_movie_dir(tmp, "d3", "--seed 6");
    REQUIRE(read_file(d1 + "/train.examples.jsonl") != read_file(d3 + "/train.examples.jsonl"));
}

TEST_CASE("build-dataset rejects bad invocations") {
    TempDir tmp;
    auto neither = run_cli("build-dataset --out " + quoted(tmp.str("x")), tmp);
    REQUIRE(neither.exit_code != 0);

    auto both = run_cli("build-dataset --convs " +
                            quoted(data_path("fixtures/mini_movie.convs.jsonl")) + " --ratings " +
                            quoted(data_path("fixtures/mini_recipe.ratings.jsonl")) + " --out " +
                            quoted(tmp.str("x")),
                        tmp);
    REQUIRE(both.exit_code != 0);

    auto missing = run_cli(
        "build-dataset --convs " + quoted(tmp.str("absent.jsonl")) + " --out " + quoted(tmp.str("x")),
        tmp);
    REQUIRE(missing.exit_code != 0);

    auto zero = run_cli("build-dataset --convs " +
                            quoted(data_path("fixtures/mini_movie.convs.jsonl")) +
                            " --holdout 0 --out " + quoted(tmp.str("x")),
                        tmp);
    REQUIRE(zero.exit_code != 0);
    REQUIRE_THAT(zero.output, ContainsSubstring("0"));

    auto one = run_cli("build-dataset --convs " +
                           quoted(data_path("fixtures/mini_movie.convs.jsonl")) +
                           " --holdout 1.0 --out " + quoted(tmp.str("x")),
                       tmp);
    REQUIRE(one.exit_code != 0);
}

TEST_CASE("ratings build produces an all-synthetic recipe dataset") {
    TempDir tmp;
    const std::string dir = tmp.str("recipe");
    auto r = run_cli("build-dataset --ratings " +
                         quoted(data_path("fixtures/mini_recipe.ratings.jsonl")) + " --out " +
                         quoted(dir),
                     tmp);
    REQUIRE(r.exit_code == 0);
    auto train = read_examples_jsonl(dir + "/train.examples.jsonl");
    REQUIRE(!train.empty());
    for (const auto& ex : train) REQUIRE(ex.origin != Origin::real);
    json profile = json::parse(read_file(dir + "/profile.json"));
    REQUIRE(profile["recommendation_domain"] == "recipe");
}

TEST_CASE("synth augments the training split and keeps the test split intact") {
    TempDir tmp;
    const std::string d1 = build_movie_dir(tmp, "d1");
    const std::string a1 = tmp.str("a1");
    auto r = run_cli("synth --in " + quoted(d1) + " --out " + quoted(a1), tmp);
    REQUIRE(r.exit_code == 0);

    auto before = read_examples_jsonl(d1 + "/train.examples.jsonl");
    auto after = read_examples_jsonl(a1 + "/train.examples.jsonl");
    REQUIRE(after.size() > before.size());
    std::size_t real = 0, synthetic = 0;
    for (const auto& ex : after) (ex.origin == Origin::real ? real : synthetic) += 1;
    REQUIRE(real == before.size());
    REQUIRE(synthetic == after.size() - before.size());
    REQUIRE_THAT(r.output,
                 ContainsSubstring("(" + std::to_string(synthetic) + " synthetic)"));
    REQUIRE(read_file(d1 + "/test.examples.jsonl") == read_file(a1 + "/test.examples.jsonl"));
    REQUIRE(read_file(d1 + "/catalog.json") == read_file(a1 + "/catalog.json"));

    const std::string a2 = tmp.str("a2");
    REQUIRE(run_cli("synth --in " + quoted(d1) + " --out " + quoted(a2), tmp).exit_code == 0);
    REQUIRE(read_file(a1 + "/train.examples.jsonl") == read_file(a2 + "/train.examples.jsonl"));

    const std::string a3 = tmp.str("a3");
    REQUIRE(run_cli("synth --in " + quoted(d1) + " --out " + quoted(a3) + " --seed 99", tmp)
                .exit_code == 0);
    REQUIRE(read_file(a1 + "/train.examples.jsonl") != read_file(a3 + "/train.examples.jsonl"));
}

TEST_CASE("train federated writes adapters, round history, and checkpoints") {
    TempDir tmp;
    const std::string d1 = build_movie_dir(tmp, "d1");
    const std::string out = tmp.str("fed");
    auto r = run_cli("train --mode federated --data " + quoted(d1) + " --out " + quoted(out) +
                         " --rounds 4 --checkpoint-every 2",
                     tmp);
    REQUIRE(r.exit_code == 0);
    REQUIRE_THAT(r.output, ContainsSubstring("federated: 4 rounds"));
    REQUIRE_THAT(r.output, ContainsSubstring("MB / "));

    LowRankAdapter adapter = load_adapter(out + "/adapter.json");
    REQUIRE(adapter.rank == 16);
    REQUIRE(adapter.A.cols == 16);  // default embedding dimension

    auto lines = nonempty_lines(read_file(out + "/rounds.jsonl"));
    REQUIRE(lines.size() == 4);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        json doc = json::parse(lines[i]);
        REQUIRE(doc["round"] == i);
        REQUIRE(doc["selected"].size() == 4);
        REQUIRE(doc["weights"].size() == 4);
    }

    json comm = json::parse(read_file(out + "/comm.json"));
    REQUIRE(comm["rounds"].size() == 4);
    const std::uint64_t payload = adapter.param_count() * 4;
    REQUIRE(comm["total_bytes"] == payload * 4 * 4 * 2);

    REQUIRE(std::filesystem::exists(out + "/checkpoints/round-0002.adapter.json"));
    REQUIRE(std::filesystem::exists(out + "/checkpoints/round-0004.adapter.json"));
    REQUIRE_FALSE(std::filesystem::exists(out + "/checkpoints/round-0001.adapter.json"));
    // The final checkpoint is the final adapter.
    REQUIRE(load_adapter(out + "/checkpoints/round-0004.adapter.json") == adapter);

    const std::string out2 = tmp.str("fed2");
    REQUIRE(run_cli("train --mode federated --data " + quoted(d1) + " --out " + quoted(out2) +
                        " --rounds 4",
                    tmp)
                .exit_code == 0);
    REQUIRE(read_file(out + "/adapter.json") == read_file(out2 + "/adapter.json"));
    REQUIRE(read_file(out + "/rounds.jsonl") == read_file(out2 + "/rounds.jsonl"));

    // The ledger can account for a hypothetical payload size.
    const std::string out3 = tmp.str("fed3");
    REQUIRE(run_cli("train --mode federated --data " + quoted(d1) + " --out " + quoted(out3) +
                        " --rounds 2 --payload-params 1000",
                    tmp)
                .exit_code == 0);
    json comm3 = json::parse(read_file(out3 + "/comm.json"));
    REQUIRE(comm3["total_bytes"] == 1000ull * 4 * 4 * 2 * 2);
}

TEST_CASE("train centralized and local lay out their outputs") {
    TempDir tmp;
    const std::string d1 = build_movie_dir(tmp, "d1");

    const std::string cen = tmp.str("cen");
    auto rc = run_cli("train --mode centralized --data " + quoted(d1) + " --out " + quoted(cen), tmp);
    REQUIRE(rc.exit_code == 0);
    REQUIRE_THAT(rc.output, ContainsSubstring("centralized: trained on"));
    REQUIRE(std::filesystem::exists(cen + "/adapter.json"));
    REQUIRE_FALSE(std::filesystem::exists(cen + "/rounds.jsonl"));
    REQUIRE_FALSE(std::filesystem::exists(cen + "/comm.json"));

    const std::string loc = tmp.str("loc");
    auto rl = run_cli("train --mode local --data " + quoted(d1) + " --out " + quoted(loc), tmp);
    REQUIRE(rl.exit_code == 0);
    REQUIRE_THAT(rl.output, ContainsSubstring("local: trained 10 isolated users"));
    json users = json::parse(read_file(loc + "/local_users.json"));
    REQUIRE(users["users"].size() == 10);
    for (const auto& id : users["users"]) {
        LowRankAdapter a = load_adapter(loc + "/local/" + id.get<std::string>() + ".adapter.json");
        REQUIRE(a.rank == 16);
    }

    auto bad = run_cli("train --mode osmosis --data " + quoted(d1) + " --out " + quoted(tmp.str("x")),
                       tmp);
    REQUIRE(bad.exit_code != 0);
}

TEST_CASE("eval writes a stable metrics report") {
    TempDir tmp;
    const std::string d1 = build_movie_dir(tmp, "d1");
    const std::string fed = tmp.str("fed");
    REQUIRE(run_cli("train --mode federated --data " + quoted(d1) + " --out " + quoted(fed) +
                        " --rounds 4",
                    tmp)
                .exit_code == 0);

    const std::string e1 = tmp.str("e1");
    auto r = run_cli("eval --testset " + quoted(d1 + "/test.examples.jsonl") + " --adapter " +
                         quoted(fed + "/adapter.json") + " --out " + quoted(e1),
                     tmp);
    REQUIRE(r.exit_code == 0);

    json doc = json::parse(read_file(e1 + "/metrics.json"));
    for (const char* key : {"precision", "recall", "f1", "mrr", "hits_at_1", "hits_at_3",
                            "hits_at_10", "n_cases", "k", "averaging"})
        REQUIRE(doc.contains(key));
    REQUIRE(doc["averaging"] == "micro");
    REQUIRE(doc["k"] == 10);
    const std::size_t n_test = nonempty_lines(read_file(d1 + "/test.examples.jsonl")).size();
    REQUIRE(doc["n_cases"] == n_test);
    char over[64];
    std::snprintf(over, sizeof over, "over %zu cases", n_test);
    REQUIRE_THAT(r.output, ContainsSubstring(over));

    const std::string e2 = tmp.str("e2");
    REQUIRE(run_cli("eval --testset " + quoted(d1 + "/test.examples.jsonl") + " --adapter " +
                        quoted(fed + "/adapter.json") + " --out " + quoted(e2),
                    tmp)
                .exit_code == 0);
    REQUIRE(read_file(e1 + "/metrics.json") == read_file(e2 + "/metrics.json"));

    const std::string e3 = tmp.str("e3");
    REQUIRE(run_cli("eval --testset " + quoted(d1 + "/test.examples.jsonl") + " --adapter " +
                        quoted(fed + "/adapter.json") + " --macro --out " + quoted(e3),
                    tmp)
                .exit_code == 0);
    REQUIRE(json::parse(read_file(e3 + "/metrics.json"))["averaging"] == "macro");

    auto missing = run_cli("eval --testset " + quoted(tmp.str("absent.jsonl")) + " --adapter " +
                               quoted(fed + "/adapter.json") + " --out " + quoted(tmp.str("x")),
                           tmp);
    REQUIRE(missing.exit_code != 0);
}

TEST_CASE("ablate writes the six-row grid") {
    TempDir tmp;
    const std::string d1 = build_movie_dir(tmp, "d1");
    const std::string out = tmp.str("ab");
    auto r = run_cli("ablate --data " + quoted(d1) + " --out " + quoted(out) + " --reference " +
                         quoted(data_path("reference/reference_results.json")),
                     tmp);
    REQUIRE(r.exit_code == 0);
    REQUIRE_THAT(r.output, ContainsSubstring("wrote 6 ablation rows"));

    auto lines = nonempty_lines(read_file(out + "/ablation.csv"));
    REQUIRE(lines.size() == 7);
    REQUIRE(lines[0] == "mode,synthetic,precision,recall,f1,mrr,hits@1,hits@3,hits@10,n_cases");
    const char* prefixes[] = {"centralized,no,", "federated,no,", "local,no,",
                              "centralized,yes,", "federated,yes,", "local,yes,"};
    for (int i = 0; i < 6; ++i)
        REQUIRE(lines[i + 1].rfind(prefixes[i], 0) == 0);

    json doc = json::parse(read_file(out + "/ablation.json"));
    REQUIRE(doc["rows"].size() == 6);
    REQUIRE(doc["rows"][1]["mode"] == "federated");
    REQUIRE(doc["rows"][1]["metrics"].contains("hits_at_10"));
    REQUIRE(doc["reference"].contains("movie_domain"));
}

TEST_CASE("commcost reproduces the published budget lines") {
    TempDir tmp;
    struct Case {
        const char* preset;
        const char* params;
        const char* per_round;
        const char* total;
        const char* line;
    };
    const Case cases[] = {
        {"0.6B", "trainable params: 10093000", "per-round per-client bytes: 40372000",
         "total server bytes: 41340928000", "38.50 MB / 38.5 GB"},
        {"1.7B", "trainable params: 17433000", "per-round per-client bytes: 69732000",
         "total server bytes: 71405568000", "66.50 MB / 66.5 GB"},
        {"4B", "trainable params: 33030000", "per-round per-client bytes: 132120000",
         "total server bytes: 135290880000", "126.00 MB / 126.0 GB"},
    };
    for (const Case& c : cases) {
        auto r = run_cli(std::string("commcost --model-preset ") + c.preset, tmp);
        REQUIRE(r.exit_code == 0);
        auto lines = nonempty_lines(r.output);
        REQUIRE(lines.size() == 4);
        REQUIRE(lines[0] == c.params);
        REQUIRE(lines[1] == c.per_round);
        REQUIRE(lines[2] == c.total);
        REQUIRE(lines[3] == c.line);
    }

    auto tiny = run_cli("commcost --params 1 --rounds 1 --clients 1", tmp);
    REQUIRE(tiny.exit_code == 0);
    auto lines = nonempty_lines(tiny.output);
    REQUIRE(lines[1] == "per-round per-client bytes: 4");
    REQUIRE(lines[2] == "total server bytes: 8");

    REQUIRE(run_cli("commcost --model-preset 9B", tmp).exit_code != 0);
    REQUIRE(run_cli("commcost", tmp).exit_code != 0);
}

TEST_CASE("config files are validated strictly") {
    TempDir tmp;
    testutil::write_file(tmp.str("bad.json"), "{\"learner\": {\"bogus\": 1}}\n");
    auto r = run_cli("build-dataset --convs " + quoted(data_path("fixtures/mini_movie.convs.jsonl")) +
                         " --out " + quoted(tmp.str("x")) + " --config " + quoted(tmp.str("bad.json")),
                     tmp);
    REQUIRE(r.exit_code != 0);
    REQUIRE_THAT(r.output, ContainsSubstring("unknown key"));
    REQUIRE_THAT(r.output, ContainsSubstring("learner.bogus"));

    testutil::write_file(tmp.str("bad2.json"), "{\"weather\": {}}\n");
    auto r2 = run_cli("build-dataset --convs " +
                          quoted(data_path("fixtures/mini_movie.convs.jsonl")) + " --out " +
                          quoted(tmp.str("y")) + " --config " + quoted(tmp.str("bad2.json")),
                      tmp);
    REQUIRE(r2.exit_code != 0);

    // The checked-in default config must describe only known settings.
    auto ok = run_cli("build-dataset --convs " + quoted(data_path("fixtures/mini_movie.convs.jsonl")) +
                          " --out " + quoted(tmp.str("z")) + " --config " +
                          quoted(data_path("configs/default.json")),
                      tmp);
    REQUIRE(ok.exit_code == 0);
}

TEST_CASE("the full pipeline reruns byte-identically") {
    TempDir tmp;
    auto chain = [&](const std::string& tag) {
        const std::string corpus = tmp.str(tag + ".convs.jsonl");
        REQUIRE(run_cli("gen-corpus --domain movie --out " + quoted(corpus), tmp).exit_code == 0);
        const std::string data = tmp.str(tag + "-data");
        REQUIRE(run_cli("build-dataset --convs " + quoted(corpus) + " --out " + quoted(data), tmp)
                    .exit_code == 0);
        const std::string aug = tmp.str(tag + "-aug");
        REQUIRE(run_cli("synth --in " + quoted(data) + " --out " + quoted(aug), tmp).exit_code == 0);
        const std::string fed = tmp.str(tag + "-fed");
        REQUIRE(run_cli("train --mode federated --data " + quoted(aug) + " --out " + quoted(fed) +
                            " --rounds 6",
                        tmp)
                    .exit_code == 0);
        const std::string ev = tmp.str(tag + "-eval");
        REQUIRE(run_cli("eval --testset " + quoted(aug + "/test.examples.jsonl") + " --adapter " +
                            quoted(fed + "/adapter.json") + " --out " + quoted(ev),
                        tmp)
                    .exit_code == 0);
        return std::vector<std::string>{
            read_file(corpus),
            read_file(data + "/train.examples.jsonl"),
            read_file(data + "/test.examples.jsonl"),
            read_file(aug + "/train.examples.jsonl"),
            read_file(fed + "/adapter.json"),
            read_file(fed + "/rounds.jsonl"),
            read_file(fed + "/comm.json"),
            read_file(ev + "/metrics.json"),
        };
    };
    auto first = chain("one");
    auto second = chain("two");
    REQUIRE(first == second);
}
