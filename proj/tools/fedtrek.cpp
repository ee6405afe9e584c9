// Copyright (c) 2026 the fedtrek authors
// SPDX-License-Identifier: Apache-2.0
//
// fedtrek command-line tool: wires the library modules into reproducible
// pipelines. Every command that writes files also writes a manifest next to
// them recording the resolved settings, input digests, and output list; the
// manifest is the only artifact carrying a timestamp.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "fedtrek/common.hpp"
#include "fedtrek/dataset.hpp"
#include "fedtrek/federation.hpp"
#include "fedtrek/fixture.hpp"
#include "fedtrek/learner.hpp"
#include "fedtrek/manifest.hpp"
#include "fedtrek/metrics.hpp"
#include "fedtrek/pkg.hpp"
#include "fedtrek/prompt.hpp"
#include "fedtrek/synth.hpp"
#include "fedtrek/version.hpp"

namespace fs = std::filesystem;
using namespace fedtrek;
using ojson = nlohmann::ordered_json;

namespace {

bool log_debug() {
    const char* v = std::getenv("FEDTREK_LOG");
    return v && std::string_view(v) == "debug";
}

void debugf(const std::string& msg) {
    if (log_debug()) std::fprintf(stderr, "[fedtrek] %s\n", msg.c_str());
}

// ---------------------------------------------------------------------------
// Settings file: one declarative JSON document with a section per module.
// Missing sections/keys keep their defaults; unknown keys are errors so a
// typo cannot silently fall back to a default.
// ---------------------------------------------------------------------------

struct Settings {
    // learner
    std::size_t rank = 16;
    double alpha = 64.0;
    double beta = 0.1;
    double lambda_desirable = 4.0 / 3.0;
    double lambda_undesirable = 1.0;
    double learning_rate = 0.05;
    std::size_t epochs = 8;
    std::size_t batch_size = 8;
    std::uint64_t train_seed = 1;
    std::uint64_t init_seed = 101;
    double init_scale = 0.02;
    // base model
    std::uint64_t w_seed = 11;
    double w_scale = 0.1;
    // federation
    std::size_t rounds = 128;
    std::size_t clients_per_round = 4;
    std::string aggregation = "weighted";
    std::size_t bytes_per_param = 4;
    std::uint64_t fed_seed = 2;
    std::size_t payload_params = 0;
    // local-only baseline
    std::size_t local_n_users = 10;
    std::size_t local_min_examples = 10;
    std::uint64_t local_sample_seed = 3;
    // eval
    std::size_t eval_k = 10;
    bool eval_macro = false;
    // synthetic augmentation
    double mask_fraction = 0.3;
    std::size_t mask_per_client = 2;
    std::size_t redundancy_per_client = 1;
    std::uint64_t synth_seed = 4;
};

double num_field(const json& v, const std::string& where) {
    require(v.is_number(), "config: " + where + " must be a number");
    return v.get<double>();
}

std::size_t size_field(const json& v, const std::string& where) {
    require(v.is_number_integer() && v.get<std::int64_t>() >= 0,
            "config: " + where + " must be a non-negative integer");
    return static_cast<std::size_t>(v.get<std::int64_t>());
}

std::uint64_t seed_field(const json& v, const std::string& where) {
    require(v.is_number_integer() && v.get<std::int64_t>() >= 0,
            "config: " + where + " must be a non-negative integer");
    return v.get<std::uint64_t>();
}

Settings load_settings(const std::string& path) {
    Settings s;
    if (path.empty()) return s;
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "config: cannot open '" + path + "'");
    json doc = json::parse(in, nullptr, false);
    require(!doc.is_discarded(), "config: malformed JSON in '" + path + "'");
    require(doc.is_object(), "config: top level must be an object");

    static const std::set<std::string> known_sections = {"learner", "model", "federation",
                                                         "local", "eval", "synth"};
    for (const auto& [section, body] : doc.items()) {
        require(known_sections.count(section) > 0, "config: unknown section '" + section + "'");
        require(body.is_object(), "config: section '" + section + "' must be an object");
        for (const auto& [key, v] : body.items()) {
            const std::string where = section + "." + key;
            if (section == "learner") {
                if (key == "rank") s.rank = size_field(v, where);
                else if (key == "alpha") s.alpha = num_field(v, where);
                else if (key == "beta") s.beta = num_field(v, where);
                else if (key == "lambda_desirable") s.lambda_desirable = num_field(v, where);
                else if (key == "lambda_undesirable") s.lambda_undesirable = num_field(v, where);
                else if (key == "learning_rate") s.learning_rate = num_field(v, where);
                else if (key == "epochs") s.epochs = size_field(v, where);
                else if (key == "batch_size") s.batch_size = size_field(v, where);
                else if (key == "seed") s.train_seed = seed_field(v, where);
                else if (key == "init_seed") s.init_seed = seed_field(v, where);
                else if (key == "init_scale") s.init_scale = num_field(v, where);
                else fail("config: unknown key '" + where + "'");
            } else if (section == "model") {
                if (key == "w_seed") s.w_seed = seed_field(v, where);
                else if (key == "w_scale") s.w_scale = num_field(v, where);
                else fail("config: unknown key '" + where + "'");
            } else if (section == "federation") {
                if (key == "rounds") s.rounds = size_field(v, where);
                else if (key == "clients_per_round") s.clients_per_round = size_field(v, where);
                else if (key == "aggregation") {
                    require(v.is_string(), "config: " + where + " must be a string");
                    s.aggregation = v.get<std::string>();
                } else if (key == "bytes_per_param") s.bytes_per_param = size_field(v, where);
                else if (key == "seed") s.fed_seed = seed_field(v, where);
                else if (key == "payload_params") s.payload_params = size_field(v, where);
                else fail("config: unknown key '" + where + "'");
            } else if (section == "local") {
                if (key == "n_users") s.local_n_users = size_field(v, where);
                else if (key == "min_examples") s.local_min_examples = size_field(v, where);
                else if (key == "sample_seed") s.local_sample_seed = seed_field(v, where);
                else fail("config: unknown key '" + where + "'");
            } else if (section == "eval") {
                if (key == "k") s.eval_k = size_field(v, where);
                else if (key == "macro") {
                    require(v.is_boolean(), "config: " + where + " must be a boolean");
                    s.eval_macro = v.get<bool>();
                } else fail("config: unknown key '" + where + "'");
            } else if (section == "synth") {
                if (key == "mask_fraction") s.mask_fraction = num_field(v, where);
                else if (key == "mask_per_client") s.mask_per_client = size_field(v, where);
                else if (key == "redundancy_per_client") s.redundancy_per_client = size_field(v, where);
                else if (key == "seed") s.synth_seed = seed_field(v, where);
                else fail("config: unknown key '" + where + "'");
            }
        }
    }
    return s;
}

ojson settings_to_json(const Settings& s) {
    ojson doc;
    doc["learner"] = {{"rank", s.rank},
                      {"alpha", s.alpha},
                      {"beta", s.beta},
                      {"lambda_desirable", s.lambda_desirable},
                      {"lambda_undesirable", s.lambda_undesirable},
                      {"learning_rate", s.learning_rate},
                      {"epochs", s.epochs},
                      {"batch_size", s.batch_size},
                      {"seed", s.train_seed},
                      {"init_seed", s.init_seed},
                      {"init_scale", s.init_scale}};
    doc["model"] = {{"w_seed", s.w_seed}, {"w_scale", s.w_scale}};
    doc["federation"] = {{"rounds", s.rounds},
                         {"clients_per_round", s.clients_per_round},
                         {"aggregation", s.aggregation},
                         {"bytes_per_param", s.bytes_per_param},
                         {"seed", s.fed_seed},
                         {"payload_params", s.payload_params}};
    doc["local"] = {{"n_users", s.local_n_users},
                    {"min_examples", s.local_min_examples},
                    {"sample_seed", s.local_sample_seed}};
    doc["eval"] = {{"k", s.eval_k}, {"macro", s.eval_macro}};
    doc["synth"] = {{"mask_fraction", s.mask_fraction},
                    {"mask_per_client", s.mask_per_client},
                    {"redundancy_per_client", s.redundancy_per_client},
                    {"seed", s.synth_seed}};
    return doc;
}

TrainConfig make_train_config(const Settings& s) {
    TrainConfig c;
    c.beta = s.beta;
    c.lambda_desirable = s.lambda_desirable;
    c.lambda_undesirable = s.lambda_undesirable;
    c.learning_rate = s.learning_rate;
    c.epochs = s.epochs;
    c.batch_size = s.batch_size;
    c.rng_seed = s.train_seed;
    return c;
}

FederationConfig make_fed_config(const Settings& s) {
    FederationConfig c;
    c.total_rounds = s.rounds;
    c.clients_per_round = s.clients_per_round;
    if (s.aggregation == "weighted") c.aggregation = Aggregation::fedavg_weighted;
    else if (s.aggregation == "uniform") c.aggregation = Aggregation::fedavg_uniform;
    else fail("config: federation.aggregation must be 'weighted' or 'uniform', got '" +
              s.aggregation + "'");
    c.bytes_per_param = s.bytes_per_param;
    c.rng_seed = s.fed_seed;
    c.payload_params_override = s.payload_params;
    return c;
}

SynthConfig make_synth_config(const Settings& s) {
    SynthConfig c;
    c.mask_fraction = s.mask_fraction;
    c.mask_count_per_client = s.mask_per_client;
    c.redundancy_count_per_client = s.redundancy_per_client;
    c.rng_seed = s.synth_seed;
    return c;
}

// ---------------------------------------------------------------------------
// Dataset directory layout
//   profile.json             domain wording used in prompts
//   catalog.json             entity list + embedding settings
//   train.examples.jsonl     training triples
//   test.examples.jsonl      held-out triples
//   pkgs/<id>.pkg.jsonld     one end-state graph per client
//   manifest.json            run manifest
// ---------------------------------------------------------------------------

std::string sanitize_id(const std::string& id) {
    std::string out = id;
    for (char& ch : out) {
        const bool ok = (ch >= 'a' && ch <= 'z') || (ch >= 'A' && ch <= 'Z') ||
                        (ch >= '0' && ch <= '9') || ch == '.' || ch == '_' || ch == '-';
        if (!ok) ch = '_';
    }
    return out;
}

void write_profile(const DomainProfile& p, const fs::path& path) {
    ojson doc;
    doc["recommendation_domain"] = p.recommendation_domain;
    doc["item_type"] = p.item_type;
    doc["entity_type"] = p.entity_type;
    std::ofstream out(path, std::ios::binary);
    require(out.good(), "cannot open '" + path.string() + "'");
    out << doc.dump(2) << '\n';
    require(out.good(), "write failed for '" + path.string() + "'");
}

DomainProfile read_profile(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "cannot open '" + path.string() + "'");
    json doc = json::parse(in, nullptr, false);
    require(!doc.is_discarded(), "malformed JSON in '" + path.string() + "'");
    DomainProfile p;
    p.recommendation_domain = detail::get_string(doc, "recommendation_domain", path.string());
    p.item_type = detail::get_string(doc, "item_type", path.string());
    p.entity_type = detail::get_string(doc, "entity_type", path.string());
    return p;
}

struct LoadedDataset {
    DomainProfile profile;
    Catalog catalog;
    std::vector<PreferenceExample> train;
    std::vector<PreferenceExample> test;
    std::map<std::string, PersonalKnowledgeGraph> pkgs;
};

LoadedDataset load_dataset_dir(const fs::path& dir, bool need_pkgs) {
    require(fs::is_directory(dir), "dataset directory not found: '" + dir.string() + "'");
    LoadedDataset d;
    d.profile = read_profile(dir / "profile.json");
    d.catalog = load_catalog((dir / "catalog.json").string());
    d.train = read_examples_jsonl((dir / "train.examples.jsonl").string());
    d.test = read_examples_jsonl((dir / "test.examples.jsonl").string());
    if (need_pkgs) {
        const fs::path pkg_dir = dir / "pkgs";
        require(fs::is_directory(pkg_dir), "pkg directory not found: '" + pkg_dir.string() + "'");
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(pkg_dir))
            if (e.is_regular_file() && e.path().extension() == ".jsonld") files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            PersonalKnowledgeGraph pkg = load_pkg(f.string());
            require(!d.pkgs.count(pkg.user_id), "duplicate pkg for user '" + pkg.user_id + "'");
            d.pkgs.emplace(pkg.user_id, std::move(pkg));
        }
    }
    return d;
}

// Writes the full directory; returns the relative output names for the
// manifest (manifest itself excluded).
std::vector<std::string> write_dataset_dir(const fs::path& dir, const DomainProfile& profile,
                                           const Catalog& catalog,
                                           const std::vector<PreferenceExample>& train,
                                           const std::vector<PreferenceExample>& test,
                                           const std::map<std::string, PersonalKnowledgeGraph>& pkgs) {
    fs::create_directories(dir / "pkgs");
    std::vector<std::string> outputs;
    write_profile(profile, dir / "profile.json");
    outputs.push_back("profile.json");
    save_catalog(catalog, (dir / "catalog.json").string());
    outputs.push_back("catalog.json");
    write_examples_jsonl(train, (dir / "train.examples.jsonl").string());
    outputs.push_back("train.examples.jsonl");
    write_examples_jsonl(test, (dir / "test.examples.jsonl").string());
    outputs.push_back("test.examples.jsonl");
    std::set<std::string> used;
    for (const auto& [id, pkg] : pkgs) {
        const std::string base = sanitize_id(id);
        require(used.insert(base).second, "pkg filename collision for user '" + id + "'");
        const std::string rel = "pkgs/" + base + ".pkg.jsonld";
        save_pkg(pkg, (dir / rel).string());
        outputs.push_back(rel);
    }
    return outputs;
}

ojson counts_json(const DatasetCounts& c, std::size_t train_rows, std::size_t test_rows) {
    ojson doc;
    doc["clients"] = c.clients;
    doc["real"] = c.real;
    doc["synthetic"] = c.synthetic;
    doc["train"] = train_rows;
    doc["test"] = test_rows;
    return doc;
}

// ---------------------------------------------------------------------------
// gen-corpus
// ---------------------------------------------------------------------------

struct GenCorpusArgs {
    std::string domain;
    std::string out;
    std::uint64_t seed = kFixtureSeed;
};

void cmd_gen_corpus(const GenCorpusArgs& a) {
    fs::path out(a.out);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    ojson counts;
    if (a.domain == "movie") {
        std::vector<ConversationLog> corpus = gen_movie_corpus(a.seed);
        write_convs_jsonl(corpus, a.out);
        std::set<std::string> clients;
        std::size_t messages = 0;
        for (const auto& c : corpus) {
            clients.insert(c.initiator_id);
            messages += c.messages.size();
        }
        counts["clients"] = clients.size();
        counts["conversations"] = corpus.size();
        counts["messages"] = messages;
        counts["entities"] = collect_entities(corpus).size();
    } else {
        std::vector<RatingRecord> ratings = gen_recipe_ratings(a.seed);
        write_ratings_jsonl(ratings, a.out);
        std::set<std::string> users;
        for (const auto& r : ratings) users.insert(r.user_id);
        counts["users"] = users.size();
        counts["ratings"] = ratings.size();
        counts["entities"] = collect_rating_entities(ratings).size();
    }
    RunManifest m;
    m.command = "gen-corpus";
    m.config = {{"domain", a.domain}, {"seed", a.seed}};
    m.outputs = {out.filename().string()};
    m.extra["counts"] = counts;
    write_manifest(m, a.out + ".manifest.json");
    std::printf("wrote %s (%s)\n", a.out.c_str(), counts.dump().c_str());
}

// ---------------------------------------------------------------------------
// build-dataset
// ---------------------------------------------------------------------------

struct BuildArgs {
    std::string convs;
    std::string ratings;
    std::string out;
    std::string config;
    std::uint64_t split_seed = 5;
    double holdout = 0.2;
    std::size_t embed_dim = 16;
    std::uint64_t embed_seed = 9;
    std::string embed_scheme = "gaussian";
};

void cmd_build_dataset(const BuildArgs& a) {
    require(a.convs.empty() != a.ratings.empty(),
            "build-dataset: exactly one of --convs / --ratings is required");
    Settings s = load_settings(a.config);

    BuiltDataset built;
    HoldoutPool pool;
    std::string input_path;
    if (!a.convs.empty()) {
        input_path = a.convs;
        debugf("reading conversations from " + input_path);
        built = build_movie_dataset(read_convs_jsonl(a.convs), movie_profile());
        pool = HoldoutPool::desirable_real;
    } else {
        input_path = a.ratings;
        debugf("reading ratings from " + input_path);
        built = build_recipe_examples(read_ratings_jsonl(a.ratings), recipe_profile(),
                                      make_synth_config(s));
        pool = HoldoutPool::desirable_any;  // rating-derived examples are all synthetic
    }

    Catalog catalog = a.embed_scheme == "identity"
                          ? make_identity_catalog(built.entities)
                          : make_catalog(built.entities, a.embed_dim, a.embed_seed);
    TrainTestSplit split = split_train_test(built.examples, a.holdout, a.split_seed, pool);
    DatasetCounts counts = count_report(split.train, split.test);

    fs::path dir(a.out);
    std::vector<std::string> outputs =
        write_dataset_dir(dir, built.profile, catalog, split.train, split.test, built.pkgs);

    RunManifest m;
    m.command = "build-dataset";
    m.config["settings"] = settings_to_json(s);
    m.config["flags"] = {{"input", input_path},
                         {"split_seed", a.split_seed},
                         {"holdout", a.holdout},
                         {"embed_dim", a.embed_dim},
                         {"embed_seed", a.embed_seed},
                         {"embed_scheme", a.embed_scheme}};
    m.inputs = {{input_path, file_digest(input_path)}};
    m.outputs = outputs;
    m.extra["counts"] = counts_json(counts, split.train.size(), split.test.size());
    write_manifest(m, (dir / "manifest.json").string());
    std::printf("wrote dataset to %s: %zu train, %zu test, %zu clients\n", a.out.c_str(),
                split.train.size(), split.test.size(), counts.clients);
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthArgs {
    std::string in;
    std::string out;
    std::string config;
    std::optional<double> mask_frac;
    std::optional<std::size_t> mask_per_client;
    std::optional<std::size_t> redundancy_per_client;
    std::optional<std::uint64_t> seed;
};

void cmd_synth(const SynthArgs& a) {
    Settings s = load_settings(a.config);
    if (a.mask_frac) s.mask_fraction = *a.mask_frac;
    if (a.mask_per_client) s.mask_per_client = *a.mask_per_client;
    if (a.redundancy_per_client) s.redundancy_per_client = *a.redundancy_per_client;
    if (a.seed) s.synth_seed = *a.seed;

    LoadedDataset d = load_dataset_dir(a.in, /*need_pkgs=*/true);
    std::vector<PreferenceExample> augmented =
        augment(d.train, d.pkgs, d.profile, make_synth_config(s));
    DatasetCounts counts = count_report(augmented, d.test);

    fs::path dir(a.out);
    std::vector<std::string> outputs =
        write_dataset_dir(dir, d.profile, d.catalog, augmented, d.test, d.pkgs);

    RunManifest m;
    m.command = "synth";
    m.config["settings"] = settings_to_json(s);
    m.config["flags"] = {{"in", a.in}};
    m.inputs = {{(fs::path(a.in) / "train.examples.jsonl").string(),
                 file_digest((fs::path(a.in) / "train.examples.jsonl").string())},
                {(fs::path(a.in) / "catalog.json").string(),
                 file_digest((fs::path(a.in) / "catalog.json").string())}};
    m.outputs = outputs;
    m.extra["counts"] = counts_json(counts, augmented.size(), d.test.size());
    write_manifest(m, (dir / "manifest.json").string());
    std::printf("wrote augmented dataset to %s: %zu train (%zu synthetic), %zu test\n",
                a.out.c_str(), augmented.size(), counts.synthetic, d.test.size());
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string mode;
    std::string data;
    std::string out;
    std::string config;
    std::optional<std::size_t> rounds;
    std::optional<std::size_t> clients_per_round;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> payload_params;
    std::optional<std::string> aggregation;
    std::size_t checkpoint_every = 0;
};

void cmd_train(const TrainArgs& a) {
    Settings s = load_settings(a.config);
    if (a.rounds) s.rounds = *a.rounds;
    if (a.clients_per_round) s.clients_per_round = *a.clients_per_round;
    if (a.seed) s.train_seed = *a.seed;
    if (a.payload_params) s.payload_params = *a.payload_params;
    if (a.aggregation) s.aggregation = *a.aggregation;

    LoadedDataset d = load_dataset_dir(a.data, /*need_pkgs=*/false);
    BaseModel model = make_base_model(d.catalog, s.w_seed, s.w_scale);
    LowRankAdapter init = init_adapter(model.catalog.dim, s.rank, s.alpha, s.init_seed, s.init_scale);
    TrainConfig train_cfg = make_train_config(s);
    ClientExamples clients = partition_examples(d.train);

    fs::path dir(a.out);
    fs::create_directories(dir);
    std::vector<std::string> outputs;

    if (a.mode == "federated") {
        FederationConfig fed_cfg = make_fed_config(s);
        if (a.checkpoint_every > 0) fs::create_directories(dir / "checkpoints");
        RoundObserver observer;
        if (a.checkpoint_every > 0) {
            observer = [&](const RoundRecord& rec, const LowRankAdapter& adapter) {
                if ((rec.round_index + 1) % a.checkpoint_every != 0) return;
                char name[64];
                std::snprintf(name, sizeof name, "checkpoints/round-%04zu.adapter.json",
                              rec.round_index + 1);
                save_adapter(adapter, (dir / name).string());
                outputs.push_back(name);
            };
        }
        TrainingRun run = run_training(clients, model, init, fed_cfg, train_cfg, observer);
        save_adapter(run.adapter, (dir / "adapter.json").string());
        outputs.push_back("adapter.json");
        write_rounds_jsonl(run.rounds, (dir / "rounds.jsonl").string());
        outputs.push_back("rounds.jsonl");
        write_comm_json(run.ledger, (dir / "comm.json").string());
        outputs.push_back("comm.json");
        std::printf("federated: %zu rounds, %zu clients, total traffic %s\n", run.rounds.size(),
                    clients.size(), comm_cost_line({run.ledger.total() / (2 * s.clients_per_round *
                                                                          s.rounds),
                                                    run.ledger.total()})
                                       .c_str());
    } else if (a.mode == "centralized") {
        LowRankAdapter adapter = run_centralized(clients, model, init, train_cfg);
        save_adapter(adapter, (dir / "adapter.json").string());
        outputs.push_back("adapter.json");
        std::printf("centralized: trained on %zu examples from %zu clients\n", d.train.size(),
                    clients.size());
    } else {  // local
        auto locals = run_local_only(clients, model, init, train_cfg, s.local_n_users,
                                     s.local_min_examples, s.local_sample_seed);
        fs::create_directories(dir / "local");
        ojson users = ojson::array();
        for (const auto& [id, adapter] : locals) {
            const std::string rel = "local/" + sanitize_id(id) + ".adapter.json";
            save_adapter(adapter, (dir / rel).string());
            outputs.push_back(rel);
            users.push_back(id);
        }
        ojson listing;
        listing["users"] = users;
        std::ofstream lout(dir / "local_users.json", std::ios::binary);
        require(lout.good(), "cannot open local_users.json");
        lout << listing.dump(2) << '\n';
        outputs.push_back("local_users.json");
        std::printf("local: trained %zu isolated users\n", locals.size());
    }

    RunManifest m;
    m.command = "train";
    m.config["settings"] = settings_to_json(s);
    m.config["flags"] = {{"mode", a.mode},
                         {"data", a.data},
                         {"checkpoint_every", a.checkpoint_every}};
    m.inputs = {{(fs::path(a.data) / "train.examples.jsonl").string(),
                 file_digest((fs::path(a.data) / "train.examples.jsonl").string())},
                {(fs::path(a.data) / "catalog.json").string(),
                 file_digest((fs::path(a.data) / "catalog.json").string())}};
    m.outputs = outputs;
    write_manifest(m, (dir / "manifest.json").string());
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string testset;
    std::string catalog;
    std::string adapter;
    std::string out;
    std::string config;
    std::optional<std::size_t> k;
    bool macro = false;
};

void cmd_eval(const EvalArgs& a) {
    Settings s = load_settings(a.config);
    if (a.k) s.eval_k = *a.k;
    if (a.macro) s.eval_macro = true;

    std::string catalog_path = a.catalog;
    if (catalog_path.empty())
        catalog_path = (fs::path(a.testset).parent_path() / "catalog.json").string();

    Catalog catalog = load_catalog(catalog_path);
    BaseModel model = make_base_model(std::move(catalog), s.w_seed, s.w_scale);
    LowRankAdapter adapter = load_adapter(a.adapter);
    validate_adapter(adapter, model.catalog.dim);
    std::vector<PreferenceExample> test = read_examples_jsonl(a.testset);
    std::vector<EvalCase> cases = eval_cases_from_examples(model, test);
    MetricsReport report = evaluate(model, adapter, cases, s.eval_k, s.eval_macro);

    fs::path dir(a.out);
    fs::create_directories(dir);
    ojson doc = metrics_to_json(report);
    doc["k"] = s.eval_k;
    doc["averaging"] = s.eval_macro ? "macro" : "micro";
    std::ofstream out(dir / "metrics.json", std::ios::binary);
    require(out.good(), "cannot open metrics.json");
    out << doc.dump(2) << '\n';
    require(out.good(), "write failed for metrics.json");

    RunManifest m;
    m.command = "eval";
    m.config["settings"] = settings_to_json(s);
    m.config["flags"] = {{"testset", a.testset}, {"catalog", catalog_path}, {"adapter", a.adapter}};
    m.inputs = {{a.testset, file_digest(a.testset)},
                {catalog_path, file_digest(catalog_path)},
                {a.adapter, file_digest(a.adapter)}};
    m.outputs = {"metrics.json"};
    write_manifest(m, (dir / "manifest.json").string());
    std::printf("f1 %.4f mrr %.4f hits@10 %.4f over %zu cases\n", report.f1, report.mrr,
                report.hits10, report.n_cases);
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

struct AblateArgs {
    std::string data;
    std::string out;
    std::string config;
    std::string reference;
};

void cmd_ablate(const AblateArgs& a) {
    Settings s = load_settings(a.config);
    LoadedDataset d = load_dataset_dir(a.data, /*need_pkgs=*/true);

    // Both arms derive from the same real rows so the comparison is clean
    // even when the input directory was already augmented.
    std::vector<PreferenceExample> real_rows;
    for (const auto& ex : d.train)
        if (ex.origin == Origin::real) real_rows.push_back(ex);
    if (real_rows.empty()) real_rows = d.train;  // rating-derived sets have no real rows
    std::vector<PreferenceExample> augmented_rows =
        augment(real_rows, d.pkgs, d.profile, make_synth_config(s));

    BaseModel model = make_base_model(d.catalog, s.w_seed, s.w_scale);
    LowRankAdapter init = init_adapter(model.catalog.dim, s.rank, s.alpha, s.init_seed, s.init_scale);

    AblationInputs in;
    in.real_train = partition_examples(real_rows);
    in.augmented_train = partition_examples(augmented_rows);
    in.cases = eval_cases_from_examples(model, d.test);
    in.k_predict = s.eval_k;
    in.local_n_users = s.local_n_users;
    in.local_min_examples = s.local_min_examples;
    in.local_sample_seed = s.local_sample_seed;

    std::vector<AblationRow> rows =
        ablation_grid(in, model, init, make_fed_config(s), make_train_config(s));

    fs::path dir(a.out);
    fs::create_directories(dir);
    std::ofstream csv(dir / "ablation.csv", std::ios::binary);
    require(csv.good(), "cannot open ablation.csv");
    csv << ablation_to_csv(rows);
    require(csv.good(), "write failed for ablation.csv");

    ojson doc;
    doc["rows"] = ojson::array();
    for (const auto& row : rows) {
        ojson r;
        r["mode"] = row.mode;
        r["synthetic"] = row.with_synthetic;
        r["metrics"] = metrics_to_json(row.report);
        doc["rows"].push_back(std::move(r));
    }
    if (!a.reference.empty()) {
        std::ifstream ref(a.reference, std::ios::binary);
        require(ref.good(), "cannot open reference file '" + a.reference + "'");
        json refdoc = json::parse(ref, nullptr, false);
        require(!refdoc.is_discarded(), "malformed JSON in '" + a.reference + "'");
        doc["reference"] = refdoc;
    }
    std::ofstream jout(dir / "ablation.json", std::ios::binary);
    require(jout.good(), "cannot open ablation.json");
    jout << doc.dump(2) << '\n';
    require(jout.good(), "write failed for ablation.json");

    RunManifest m;
    m.command = "ablate";
    m.config["settings"] = settings_to_json(s);
    m.config["flags"] = {{"data", a.data}, {"reference", a.reference}};
    m.inputs = {{(fs::path(a.data) / "train.examples.jsonl").string(),
                 file_digest((fs::path(a.data) / "train.examples.jsonl").string())},
                {(fs::path(a.data) / "test.examples.jsonl").string(),
                 file_digest((fs::path(a.data) / "test.examples.jsonl").string())}};
    m.outputs = {"ablation.csv", "ablation.json"};
    write_manifest(m, (dir / "manifest.json").string());
    std::printf("wrote %zu ablation rows to %s\n", rows.size(), a.out.c_str());
}

// ---------------------------------------------------------------------------
// commcost
// ---------------------------------------------------------------------------

struct CommArgs {
    std::uint64_t params = 0;
    std::string preset;
    std::size_t rounds = 128;
    std::size_t clients = 4;
    std::size_t bytes_per_param = 4;
};

std::uint64_t preset_params(const std::string& preset) {
    // Trainable low-rank adapter sizes for the published model family.
    if (preset == "0.6B") return 10093000;
    if (preset == "1.7B") return 17433000;
    if (preset == "4B") return 33030000;
    fail("unknown model preset '" + preset + "'");
}

void cmd_commcost(const CommArgs& a) {
    require(a.params > 0 || !a.preset.empty(),
            "commcost: one of --params / --model-preset is required");
    const std::uint64_t params = a.params > 0 ? a.params : preset_params(a.preset);
    FederationConfig cfg;
    cfg.total_rounds = a.rounds;
    cfg.clients_per_round = a.clients;
    cfg.bytes_per_param = a.bytes_per_param;
    validate_federation_config(cfg);
    CommCostReport r = comm_cost_report(params, cfg);
    std::printf("trainable params: %llu\n", static_cast<unsigned long long>(params));
    std::printf("per-round per-client bytes: %llu\n",
                static_cast<unsigned long long>(r.per_round_client_bytes));
    std::printf("total server bytes: %llu\n",
                static_cast<unsigned long long>(r.total_server_bytes));
    std::printf("%s\n", comm_cost_line(r).c_str());
}

const CLI::Validator OpenUnitInterval(
    [](std::string& v) -> std::string {
        double d = 0.0;
        try {
            d = std::stod(v);
        } catch (...) {
            return "not a number: " + v;
        }
        if (!(d > 0.0 && d < 1.0)) return "value " + v + " is not strictly between 0 and 1";
        return {};
    },
    "FLOAT in (0,1)");

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"federated preference-model toolkit"};
    app.set_version_flag("--version", std::string(kToolName) + " " + std::string(kToolVersion));
    app.require_subcommand(1);

    GenCorpusArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-corpus", "write a deterministic miniature corpus");
    gen_cmd->add_option("--domain", gen.domain, "corpus flavor")
        ->required()
        ->check(CLI::IsMember({"movie", "recipe"}));
    gen_cmd->add_option("--out", gen.out, "output .jsonl path")->required();
    gen_cmd->add_option("--seed", gen.seed, "generator seed")->capture_default_str();
    gen_cmd->callback([&] { cmd_gen_corpus(gen); });

    BuildArgs build;
    auto* build_cmd =
        app.add_subcommand("build-dataset", "turn a corpus into training/test examples");
    auto* convs_opt = build_cmd->add_option("--convs", build.convs, "conversation corpus (.jsonl)")
                          ->check(CLI::ExistingFile);
    build_cmd->add_option("--ratings", build.ratings, "rating table (.jsonl)")
        ->check(CLI::ExistingFile)
        ->excludes(convs_opt);
    build_cmd->add_option("--out", build.out, "output dataset directory")->required();
    build_cmd->add_option("--config", build.config, "settings file")->check(CLI::ExistingFile);
    build_cmd->add_option("--seed", build.split_seed, "train/test split seed")
        ->capture_default_str();
    build_cmd->add_option("--holdout", build.holdout, "held-out fraction of eligible positives")
        ->capture_default_str()
        ->check(OpenUnitInterval);
    build_cmd->add_option("--embed-dim", build.embed_dim, "embedding dimension")
        ->capture_default_str();
    build_cmd->add_option("--embed-seed", build.embed_seed, "embedding seed")
        ->capture_default_str();
    build_cmd->add_option("--embed-scheme", build.embed_scheme, "embedding scheme")
        ->capture_default_str()
        ->check(CLI::IsMember({"gaussian", "identity"}));
    build_cmd->callback([&] { cmd_build_dataset(build); });

    SynthArgs synth;
    auto* synth_cmd = app.add_subcommand("synth", "augment a dataset with synthetic examples");
    synth_cmd->add_option("--in", synth.in, "input dataset directory")->required();
    synth_cmd->add_option("--out", synth.out, "output dataset directory")->required();
    synth_cmd->add_option("--config", synth.config, "settings file")->check(CLI::ExistingFile);
    synth_cmd->add_option("--mask-frac", synth.mask_frac, "fraction of each graph to mask")
        ->check(OpenUnitInterval);
    synth_cmd->add_option("--mask-per-client", synth.mask_per_client, "masking examples per client");
    synth_cmd->add_option("--redundancy-per-client", synth.redundancy_per_client,
                          "redundancy examples per client");
    synth_cmd->add_option("--seed", synth.seed, "augmentation seed");
    synth_cmd->callback([&] { cmd_synth(synth); });

    TrainArgs train;
    auto* train_cmd = app.add_subcommand("train", "fit an adapter on a dataset");
    train_cmd->add_option("--mode", train.mode, "training protocol")
        ->required()
        ->check(CLI::IsMember({"federated", "centralized", "local"}));
    train_cmd->add_option("--data", train.data, "dataset directory")->required();
    train_cmd->add_option("--out", train.out, "output directory")->required();
    train_cmd->add_option("--config", train.config, "settings file")->check(CLI::ExistingFile);
    train_cmd->add_option("--rounds", train.rounds, "federated rounds");
    train_cmd->add_option("--clients-per-round", train.clients_per_round, "clients per round");
    train_cmd->add_option("--seed", train.seed, "training seed");
    train_cmd->add_option("--payload-params", train.payload_params,
                          "account traffic as if the payload had this many parameters");
    train_cmd->add_option("--aggregation", train.aggregation, "delta averaging rule")
        ->check(CLI::IsMember({"weighted", "uniform"}));
    train_cmd->add_option("--checkpoint-every", train.checkpoint_every,
                          "save the global adapter every N rounds (federated only)");
    train_cmd->callback([&] { cmd_train(train); });

    EvalArgs eval;
    auto* eval_cmd = app.add_subcommand("eval", "score an adapter on held-out examples");
    eval_cmd->add_option("--testset", eval.testset, "held-out examples (.jsonl)")
        ->required()
        ->check(CLI::ExistingFile);
    eval_cmd->add_option("--catalog", eval.catalog, "catalog file (default: sibling catalog.json)")
        ->check(CLI::ExistingFile);
    eval_cmd->add_option("--adapter", eval.adapter, "adapter checkpoint")
        ->required()
        ->check(CLI::ExistingFile);
    eval_cmd->add_option("--out", eval.out, "output directory")->required();
    eval_cmd->add_option("--config", eval.config, "settings file")->check(CLI::ExistingFile);
    eval_cmd->add_option("--k", eval.k, "recommendations per case");
    eval_cmd->add_flag("--macro", eval.macro, "macro-average the classification metrics");
    eval_cmd->callback([&] { cmd_eval(eval); });

    AblateArgs ablate;
    auto* ablate_cmd =
        app.add_subcommand("ablate", "train and score all protocol/augmentation combinations");
    ablate_cmd->add_option("--data", ablate.data, "dataset directory")->required();
    ablate_cmd->add_option("--out", ablate.out, "output directory")->required();
    ablate_cmd->add_option("--config", ablate.config, "settings file")->check(CLI::ExistingFile);
    ablate_cmd->add_option("--reference", ablate.reference,
                           "published-results file to embed alongside the rows")
        ->check(CLI::ExistingFile);
    ablate_cmd->callback([&] { cmd_ablate(ablate); });

    CommArgs comm;
    auto* comm_cmd = app.add_subcommand("commcost", "report federated traffic for a model size");
    auto* params_opt =
        comm_cmd->add_option("--params", comm.params, "trainable parameters exchanged per round");
    comm_cmd->add_option("--model-preset", comm.preset, "published adapter size")
        ->check(CLI::IsMember({"0.6B", "1.7B", "4B"}))
        ->excludes(params_opt);
    comm_cmd->add_option("--rounds", comm.rounds, "communication rounds")->capture_default_str();
    comm_cmd->add_option("--clients", comm.clients, "clients per round")->capture_default_str();
    comm_cmd->add_option("--bytes-per-param", comm.bytes_per_param, "bytes per parameter")
        ->capture_default_str();
    comm_cmd->callback([&] { cmd_commcost(comm); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
