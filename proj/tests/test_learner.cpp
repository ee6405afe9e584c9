// Copyright (c) 2026 the fedtrek authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fedtrek/learner.hpp"
#include "testutil.hpp"

using namespace fedtrek;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

std::vector<EntityRef> some_entities(std::size_t n) {
    std::vector<EntityRef> out;
    for (std::size_t i = 0; i < n; ++i)
        out.push_back({"m:e" + std::to_string(i), "Item " + std::to_string(i) + " (1990)",
                       "movie"});
    return out;
}

Vec random_vec(Rng& rng, std::size_t n, double scale = 1.0) {
    Vec v(n);
    for (double& x : v) x = scale * rng.next_gaussian();
    return v;
}

// A small random-but-reproducible setup with a *nonzero* B so that both
// adapter factors matter to every quantity under test.
struct Setup {
    BaseModel model;
    LowRankAdapter adapter;
};

Setup make_setup(std::uint64_t seed, std::size_t n_items = 12, std::size_t dim = 6,
                 std::size_t rank = 3) {
    Setup s;
    s.model = make_base_model(make_catalog(some_entities(n_items), dim, seed), seed + 1, 0.1);
    s.adapter = init_adapter(dim, rank, 2.0 * rank, seed + 2, 0.05);
    Rng rng(seed + 3);
    for (double& x : s.adapter.B.v) x = 0.05 * rng.next_gaussian();
    return s;
}

std::vector<TrainInstance> random_batch(const Setup& s, Rng& rng, std::size_t n) {
    std::vector<TrainInstance> batch;
    for (std::size_t i = 0; i < n; ++i) {
        TrainInstance inst;
        inst.context = random_vec(rng, s.model.catalog.dim);
        const std::size_t m = 1 + rng.below(3);
        for (std::size_t j = 0; j < m; ++j) inst.items.push_back(rng.below(s.model.catalog.size()));
        inst.desirable = rng.below(2) == 0;
        batch.push_back(std::move(inst));
    }
    return batch;
}

}  // namespace

TEST_CASE("gaussian catalog rows are unit norm and seed-deterministic") {
    Catalog a = make_catalog(some_entities(9), 5, 42);
    Catalog b = make_catalog(some_entities(9), 5, 42);
    Catalog c = make_catalog(some_entities(9), 5, 43);
    REQUIRE(a.embeddings.size() == 9);
    for (const auto& row : a.embeddings) {
        REQUIRE(row.size() == 5);
        REQUIRE_THAT(std::sqrt(dot(row, row)), WithinAbs(1.0, 1e-12));
    }
    REQUIRE(a.embeddings == b.embeddings);
    REQUIRE(a.embeddings != c.embeddings);
    REQUIRE(a.scheme == EmbedScheme::gaussian);
}

TEST_CASE("identity catalog is one-hot with dim equal to size") {
    Catalog c = make_identity_catalog(some_entities(4));
    REQUIRE(c.dim == 4);
    REQUIRE(c.scheme == EmbedScheme::identity);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            REQUIRE(c.embeddings[i][j] == (i == j ? 1.0 : 0.0));
}

TEST_CASE("catalog lookups work by iri and normalized label") {
    Catalog c = make_catalog(some_entities(3), 4, 1);
    REQUIRE(c.find_iri("m:e1").value() == 1);
    REQUIRE_FALSE(c.find_iri("m:ghost").has_value());
    REQUIRE(c.find_label("Item 2 (1990)").value() == 2);
    REQUIRE(c.find_label("  item   2 (1990) ").value() == 2);  // normalized match
    REQUIRE_FALSE(c.find_label("Item 9 (1990)").has_value());

    auto dup = some_entities(2);
    dup[1].iri = dup[0].iri;
    REQUIRE_THROWS_WITH(make_catalog(dup, 4, 1), ContainsSubstring("duplicate iri"));
    REQUIRE_THROWS_AS(make_catalog({}, 4, 1), Error);
    REQUIRE_THROWS_AS(make_catalog(some_entities(2), 0, 1), Error);
}

TEST_CASE("base model W is seed-deterministic and zero at scale zero") {
    Catalog c = make_catalog(some_entities(3), 4, 1);
    BaseModel m1 = make_base_model(c, 7, 0.1);
    BaseModel m2 = make_base_model(c, 7, 0.1);
    BaseModel m3 = make_base_model(c, 8, 0.1);
    REQUIRE(m1.W == m2.W);
    REQUIRE(m1.W != m3.W);
    BaseModel z = make_base_model(c, 7, 0.0);
    for (double x : z.W.v) REQUIRE(x == 0.0);
}

TEST_CASE("fresh adapter has zero B so the policy coincides with the reference") {
    Setup s = make_setup(5);
    LowRankAdapter fresh = init_adapter(s.model.catalog.dim, 3, 6.0, 9);
    for (double x : fresh.B.v) REQUIRE(x == 0.0);
    bool a_nonzero = false;
    for (double x : fresh.A.v) a_nonzero |= x != 0.0;
    REQUIRE(a_nonzero);

    Rng rng(2);
    for (int t = 0; t < 5; ++t) {
        Vec ctx = random_vec(rng, s.model.catalog.dim);
        std::vector<std::size_t> items{0, 2};
        REQUIRE(policy_logprob(s.model, fresh, ctx, items) ==
                reference_logprob(s.model, ctx, items));
    }
}

TEST_CASE("score_all matches an explicit effective-matrix computation") {
    Setup s = make_setup(17);
    Rng rng(3);
    const std::size_t d = s.model.catalog.dim;
    // M = W + (alpha/rank) B A, built entry by entry.
    Mat m(d, d);
    const double kappa = s.adapter.kappa();
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            double ba = 0.0;
            for (std::size_t r = 0; r < s.adapter.rank; ++r)
                ba += s.adapter.B.at(i, r) * s.adapter.A.at(r, j);
            m.at(i, j) = s.model.W.at(i, j) + kappa * ba;
        }
    for (int t = 0; t < 10; ++t) {
        Vec ctx = random_vec(rng, d);
        Vec got = score_all(s.model, s.adapter, ctx);
        for (std::size_t e = 0; e < s.model.catalog.size(); ++e) {
            double want = 0.0;
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = 0; j < d; ++j)
                    want += ctx[i] * m.at(i, j) * s.model.catalog.embeddings[e][j];
            REQUIRE_THAT(got[e], WithinAbs(want, 1e-10));
            REQUIRE(score(s.model, s.adapter, ctx, e) == got[e]);
        }
    }
    REQUIRE_THROWS_AS(score_all(s.model, s.adapter, Vec(d + 1, 0.0)), Error);
}

TEST_CASE("log_softmax normalizes and is shift invariant") {
    Rng rng(4);
    for (int t = 0; t < 20; ++t) {
        Vec scores = random_vec(rng, 1 + rng.below(15), 5.0);
        Vec ls = log_softmax(scores);
        double total = 0.0;
        for (double x : ls) {
            total += std::exp(x);
            REQUIRE(x <= 0.0);
        }
        REQUIRE_THAT(total, WithinAbs(1.0, 1e-12));
        Vec shifted = scores;
        for (double& x : shifted) x += 123.5;
        Vec ls2 = log_softmax(shifted);
        for (std::size_t i = 0; i < ls.size(); ++i) REQUIRE_THAT(ls2[i], WithinAbs(ls[i], 1e-9));
    }
    REQUIRE_THROWS_AS(log_softmax({}), Error);
}

TEST_CASE("policy_logprob sums per-item log-softmax terms") {
    Setup s = make_setup(23);
    Rng rng(5);
    Vec ctx = random_vec(rng, s.model.catalog.dim);
    Vec ls = log_softmax(score_all(s.model, s.adapter, ctx));
    std::vector<std::size_t> items{1, 4, 4, 0};  // repeats count twice
    REQUIRE_THAT(policy_logprob(s.model, s.adapter, ctx, items),
                 WithinAbs(ls[1] + ls[4] + ls[4] + ls[0], 1e-12));
    REQUIRE_THROWS_AS(policy_logprob(s.model, s.adapter, ctx, {}), Error);
    REQUIRE_THROWS_AS(policy_logprob(s.model, s.adapter, ctx, {999}), Error);
}

TEST_CASE("estimate_z equals the cyclic mismatched-reward mean clamped at zero") {
    TrainConfig cfg;
    bool saw_positive = false, saw_clamped = false;
    for (std::uint64_t seed = 0; seed < 40 && !(saw_positive && saw_clamped); ++seed) {
        Setup s = make_setup(seed);
        Rng rng(seed + 100);
        auto batch = random_batch(s, rng, 2 + rng.below(5));
        double acc = 0.0;
        const std::size_t n = batch.size();
        for (std::size_t i = 0; i < n; ++i) {
            const auto& items = batch[(i + 1) % n].items;
            acc += cfg.beta * (policy_logprob(s.model, s.adapter, batch[i].context, items) -
                               reference_logprob(s.model, batch[i].context, items));
        }
        const double mean = acc / static_cast<double>(n);
        const double z = estimate_z(batch, s.model, s.adapter, cfg);
        if (mean > 0.0) {
            saw_positive = true;
            REQUIRE_THAT(z, WithinAbs(mean, 1e-12));
        } else {
            saw_clamped = true;
            REQUIRE(z == 0.0);
        }
    }
    REQUIRE(saw_positive);
    REQUIRE(saw_clamped);

    Setup s = make_setup(1);
    Rng rng(1);
    auto single = random_batch(s, rng, 1);
    REQUIRE(estimate_z(single, s.model, s.adapter, cfg) == 0.0);
}

TEST_CASE("a fresh adapter on a balanced batch starts at loss 7/12") {
    Setup s = make_setup(31);
    LowRankAdapter fresh =
        init_adapter(s.model.catalog.dim, 4, 16.0, 77);  // B = 0: rewards all zero
    TrainConfig cfg;
    Rng rng(6);
    std::vector<TrainInstance> batch;
    for (int i = 0; i < 6; ++i) {
        TrainInstance inst;
        inst.context = random_vec(rng, s.model.catalog.dim);
        inst.items = {rng.below(s.model.catalog.size())};
        inst.desirable = i % 2 == 0;
        batch.push_back(std::move(inst));
    }
    KtoResult res = kto_loss(batch, s.model, fresh, cfg);
    REQUIRE_THAT(res.loss, WithinAbs(7.0 / 12.0, 1e-12));
    REQUIRE(res.z == 0.0);
    // With B = 0 the A-gradient vanishes (it is left-multiplied by B^T c)
    // but the B-gradient does not.
    for (double x : res.dA.v) REQUIRE(x == 0.0);
    bool db_nonzero = false;
    for (double x : res.dB.v) db_nonzero |= x != 0.0;
    REQUIRE(db_nonzero);
    REQUIRE_THAT(kto_loss_at_z(batch, s.model, fresh, cfg, res.z), WithinAbs(res.loss, 1e-15));
}

TEST_CASE("analytic gradients match central finite differences of the pinned-z loss") {
    TrainConfig cfg;
    const double eps = 1e-6;
    std::size_t checked = 0;
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        Setup s = make_setup(seed * 13 + 2, 10, 5, 2);
        Rng rng(seed + 900);
        auto batch = random_batch(s, rng, 4);
        KtoResult res = kto_loss(batch, s.model, s.adapter, cfg);

        auto check = [&](Mat LowRankAdapter::* field, const Mat& grad) {
            for (std::size_t i = 0; i < grad.v.size(); ++i) {
                LowRankAdapter up = s.adapter, down = s.adapter;
                (up.*field).v[i] += eps;
                (down.*field).v[i] -= eps;
                const double numeric = (kto_loss_at_z(batch, s.model, up, cfg, res.z) -
                                        kto_loss_at_z(batch, s.model, down, cfg, res.z)) /
                                       (2.0 * eps);
                const double denom = std::max({std::abs(numeric), std::abs(grad.v[i]), 1e-8});
                REQUIRE(std::abs(numeric - grad.v[i]) / denom < 1e-4);
                ++checked;
            }
        };
        check(&LowRankAdapter::A, res.dA);
        check(&LowRankAdapter::B, res.dB);
    }
    REQUIRE(checked >= 100);
}

TEST_CASE("train config validation enforces the lambda ratio band") {
    TrainConfig cfg;
    REQUIRE_NOTHROW(validate_train_config(cfg));
    cfg.lambda_desirable = 2.0;  // ratio 2 > 4/3
    REQUIRE_THROWS_WITH(validate_train_config(cfg), ContainsSubstring("[3/4, 4/3]"));
    cfg.lambda_desirable = 0.5;  // ratio 1/2 < 3/4
    REQUIRE_THROWS_AS(validate_train_config(cfg), Error);
    cfg = TrainConfig{};
    cfg.beta = 0.0;
    REQUIRE_THROWS_AS(validate_train_config(cfg), Error);
    cfg = TrainConfig{};
    cfg.learning_rate = 0.0;
    REQUIRE_THROWS_AS(validate_train_config(cfg), Error);
    cfg = TrainConfig{};
    cfg.batch_size = 0;
    REQUIRE_THROWS_AS(validate_train_config(cfg), Error);
}

TEST_CASE("encode_example maps prompt and completion onto the catalog") {
    Setup s = make_setup(41);
    SubPkg sub{"u9", "movie", kNoCutoff, {}};
    sub.triples.push_back({"u9", Relation::liked, s.model.catalog.entities[0], 0});
    sub.triples.push_back({"u9", Relation::disliked, s.model.catalog.entities[3], 1});
    std::string prompt = render_prompt(render_system_prompt(movie_profile(), sub),
                                       {{"User", "Recommend movies to me."}});

    PreferenceExample ex;
    ex.prompt = prompt;
    ex.completion = render_completion({s.model.catalog.entities[5].label, "No Such Film (1900)"});
    ex.label = Label::undesirable;
    auto inst = encode_example(s.model, ex);
    REQUIRE(inst.has_value());
    REQUIRE(inst->items == std::vector<std::size_t>{5});  // unmatched label skipped
    REQUIRE_FALSE(inst->desirable);
    Vec want = context_from_labels(s.model, {s.model.catalog.entities[0].label},
                                   {s.model.catalog.entities[3].label});
    REQUIRE(inst->context == want);

    ex.completion = render_completion({"No Such Film (1900)"});
    REQUIRE_FALSE(encode_example(s.model, ex).has_value());
}

TEST_CASE("context builders take the liked mean minus the disliked mean") {
    Setup s = make_setup(43);
    const auto& emb = s.model.catalog.embeddings;
    SubPkg sub{"u", "movie", kNoCutoff, {}};
    sub.triples.push_back({"u", Relation::liked, s.model.catalog.entities[0], 0});
    sub.triples.push_back({"u", Relation::liked, s.model.catalog.entities[2], 1});
    sub.triples.push_back({"u", Relation::disliked, s.model.catalog.entities[4], 2});
    sub.triples.push_back({"u", Relation::liked, {"m:?", "Unknown (1999)", "movie"}, 3});
    Vec ctx = context_embedding(s.model, sub);
    for (std::size_t i = 0; i < s.model.catalog.dim; ++i)
        REQUIRE_THAT(ctx[i], WithinAbs((emb[0][i] + emb[2][i]) / 2.0 - emb[4][i], 1e-12));

    Vec from_labels = context_from_labels(
        s.model,
        {s.model.catalog.entities[0].label, s.model.catalog.entities[2].label, "Unknown (1999)"},
        {s.model.catalog.entities[4].label});
    REQUIRE(ctx == from_labels);

    // No matched entities at all: the zero vector, not an error.
    Vec zero = context_from_labels(s.model, {"Unknown (1999)"}, {});
    for (double x : zero) REQUIRE(x == 0.0);
}

TEST_CASE("train_local is deterministic and reports usable example counts") {
    Setup s = make_setup(47);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.rng_seed = 9;
    LowRankAdapter start = init_adapter(s.model.catalog.dim, 2, 4.0, 55);

    std::vector<PreferenceExample> examples;
    for (int i = 0; i < 7; ++i) {
        SubPkg sub{"u", "movie", kNoCutoff, {}};
        sub.triples.push_back(
            {"u", Relation::liked, s.model.catalog.entities[(i * 3 + 1) % 10], 0});
        PreferenceExample ex;
        ex.client_id = "u";
        ex.prompt = render_prompt(render_system_prompt(movie_profile(), sub),
                                  {{"User", "Recommend movies to me."}});
        ex.completion = render_completion({s.model.catalog.entities[i % 10].label});
        ex.label = i % 2 == 0 ? Label::desirable : Label::undesirable;
        examples.push_back(std::move(ex));
    }
    // One example whose completion misses the catalog entirely: not usable.
    PreferenceExample miss = examples[0];
    miss.completion = render_completion({"Nowhere Man (1901)"});
    examples.push_back(miss);

    AdapterDelta d1 = train_local(examples, s.model, start, cfg);
    AdapterDelta d2 = train_local(examples, s.model, start, cfg);
    REQUIRE(d1 == d2);
    REQUIRE(d1.example_count == 7);
    bool moved = false;
    for (double x : d1.dB.v) moved |= x != 0.0;
    REQUIRE(moved);

    TrainConfig other = cfg;
    other.rng_seed = 10;
    AdapterDelta d3 = train_local(examples, s.model, start, other);
    REQUIRE(d3.example_count == 7);
    REQUIRE(d1 != d3);  // shuffle order feeds through the batch structure

    AdapterDelta none = train_local({miss}, s.model, start, cfg);
    REQUIRE(none.example_count == 0);
    REQUIRE(none == zero_delta(start));
    REQUIRE(train_local({}, s.model, start, cfg).example_count == 0);
}

TEST_CASE("recommend ranks by score, skips known entities, and truncates to k") {
    BaseModel model = make_base_model(make_identity_catalog(some_entities(4)), 0, 0.0);
    // Context will be exactly e_0, so scores are row 0 of W.
    model.W.at(0, 0) = 9.0;
    model.W.at(0, 1) = 3.0;
    model.W.at(0, 2) = 7.0;
    model.W.at(0, 3) = 5.0;
    LowRankAdapter fresh = init_adapter(4, 1, 0.0, 1);
    SubPkg sub{"u", "movie", kNoCutoff, {}};
    sub.triples.push_back({"u", Relation::liked, model.catalog.entities[0], 0});

    auto top = recommend(model, fresh, sub, 2);
    REQUIRE(top == std::vector<std::string>{"Item 2 (1990)", "Item 3 (1990)"});
    auto all = recommend(model, fresh, sub, 10);
    REQUIRE(all == std::vector<std::string>{"Item 2 (1990)", "Item 3 (1990)", "Item 1 (1990)"});

    // Equal scores fall back to catalog order.
    model.W.at(0, 1) = 5.0;
    model.W.at(0, 2) = 5.0;
    model.W.at(0, 3) = 5.0;
    auto tied = recommend(model, fresh, sub, 3);
    REQUIRE(tied == std::vector<std::string>{"Item 1 (1990)", "Item 2 (1990)", "Item 3 (1990)"});
    REQUIRE_THROWS_AS(recommend(model, fresh, sub, 0), Error);
}

TEST_CASE("catalog serialization regenerates embeddings from the stored seed") {
    testutil::TempDir tmp;
    Catalog c = make_catalog(some_entities(6), 5, 321);
    save_catalog(c, tmp.str("cat.json"));
    Catalog back = load_catalog(tmp.str("cat.json"));
    REQUIRE(back.entities == c.entities);
    REQUIRE(back.dim == c.dim);
    REQUIRE(back.seed == c.seed);
    REQUIRE(back.scheme == c.scheme);
    REQUIRE(back.embeddings == c.embeddings);

    Catalog ident = make_identity_catalog(some_entities(3));
    save_catalog(ident, tmp.str("ident.json"));
    Catalog ib = load_catalog(tmp.str("ident.json"));
    REQUIRE(ib.scheme == EmbedScheme::identity);
    REQUIRE(ib.embeddings == ident.embeddings);

    testutil::write_file(tmp.str("bad.json"), "{\"format\": \"other/1\"}\n");
    REQUIRE_THROWS_WITH(load_catalog(tmp.str("bad.json")), ContainsSubstring("not a catalog"));
    testutil::write_file(tmp.str("broken.json"), "{nope");
    REQUIRE_THROWS_WITH(load_catalog(tmp.str("broken.json")), ContainsSubstring("malformed"));
    REQUIRE_THROWS_AS(load_catalog(tmp.str("absent.json")), Error);
}

TEST_CASE("adapter serialization round-trips every parameter exactly") {
    testutil::TempDir tmp;
    Setup s = make_setup(61);
    save_adapter(s.adapter, tmp.str("a.json"));
    LowRankAdapter back = load_adapter(tmp.str("a.json"));
    REQUIRE(back == s.adapter);

    json doc = json::parse(testutil::read_file(tmp.str("a.json")));
    doc["B"].push_back(0.0);
    testutil::write_file(tmp.str("wrong.json"), doc.dump());
    REQUIRE_THROWS_WITH(load_adapter(tmp.str("wrong.json")),
                        ContainsSubstring("B has wrong length"));
    testutil::write_file(tmp.str("bad.json"), "{\"format\": \"catalog/1\"}\n");
    REQUIRE_THROWS_WITH(load_adapter(tmp.str("bad.json")), ContainsSubstring("not an adapter"));
}

TEST_CASE("adapter shape validation rejects mismatched factors") {
    LowRankAdapter a = init_adapter(5, 2, 4.0, 1);
    REQUIRE_NOTHROW(validate_adapter(a, 5));
    REQUIRE_THROWS_AS(validate_adapter(a, 6), Error);
    LowRankAdapter bad = a;
    bad.rank = 0;
    REQUIRE_THROWS_AS(validate_adapter(bad, 5), Error);
    REQUIRE_THROWS_AS(init_adapter(5, 0, 4.0, 1), Error);
    REQUIRE(a.param_count() == 2 * 5 + 5 * 2);
    REQUIRE(a.kappa() == 2.0);
}
