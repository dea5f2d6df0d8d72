// Copyright (c) 2026 The lftrank Authors
// SPDX-License-Identifier: Apache-2.0

// lftrank: corpus generation, pre-training, training, reranking and
// evaluation for lightweight fine-tuning of neural rankers.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "lftrank/checkpoint.hpp"
#include "lftrank/config.hpp"
#include "lftrank/experiment.hpp"
#include "lftrank/gradcheck.hpp"
#include "lftrank/io.hpp"

namespace fs = std::filesystem;
using namespace lftrank;

namespace {

struct Common {
    std::string config_path;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string precision = "f32";
};

void add_common(CLI::App* cmd, Common& c, bool with_out, bool with_precision) {
    cmd->add_option("--config", c.config_path, "experiment config file");
    cmd->add_option("--set", c.sets, "override a config key (key=value), repeatable");
    cmd->add_option("--seed", c.seed, "override the seed key");
    if (with_out) {
        cmd->add_option("--out", c.out, "output path")->required();
    }
    if (with_precision) {
        cmd->add_option("--precision", c.precision, "f32 | f64")->check(CLI::IsMember({"f32", "f64"}));
    }
}

ExperimentConfig load_config(const Common& c) {
    ExperimentConfig config = c.config_path.empty() ? ExperimentConfig::parse("", "<none>")
                                                    : ExperimentConfig::load(c.config_path);
    for (const auto& s : c.sets) {
        config.set(s);
    }
    if (c.seed) {
        config.set("seed=" + std::to_string(*c.seed));
    }
    return config;
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

void require_file(const fs::path& path, const std::string& what) {
    if (!fs::is_regular_file(path)) {
        throw DataError(what + " '" + path.string() + "' does not exist");
    }
}

void require_dir(const fs::path& path, const std::string& what) {
    if (!fs::is_directory(path)) {
        throw DataError(what + " '" + path.string() + "' is not a directory");
    }
}

struct Experiment {
    ExperimentConfig config;
    ModelSpec spec;
    Corpus corpus;
    PreparedCorpus data;
    FoldData fold;
};

Experiment load_experiment(const ExperimentConfig& config) {
    config.require({"model", "lft.method", "paths.data"});
    Experiment e{config, model_spec_from(config), {}, {}, {}};
    const fs::path dir = config.get("paths.data");
    require_dir(dir, "paths.data");
    e.corpus = read_corpus(dir);
    const Vocab vocab = read_vocab(dir);
    if (vocab.size() > e.spec.encoder.vocab_size()) {
        throw ConfigError("encoder.vocab is " + std::to_string(e.spec.encoder.vocab_size()) + " but " +
                          (dir / corpus_files::vocab).string() + " holds " + std::to_string(vocab.size()) +
                          " tokens");
    }
    e.data = prepare_corpus(e.corpus, vocab);
    std::vector<std::string> qids;
    for (const auto& q : e.corpus.queries) {
        qids.push_back(q.qid);
    }
    const auto folds = fold_split(qids, config.get_size("train.folds"), config.get_u64("seed"));
    e.fold = fold_data(e.data, fold_rotation(folds, config.get_size("train.fold")));
    return e;
}

// Model with every parameter read from a full checkpoint; the file must hold
// exactly the parameters the spec creates.
template <typename T>
RankingModel<T> load_model(const ModelSpec& spec, const fs::path& path, std::uint64_t seed) {
    require_file(path, "model checkpoint");
    auto model = RankingModel<T>::create(spec, init_encoder<T>(spec.encoder, seed), seed);
    std::set<std::string> in_file;
    for (const auto& t : read_container(path)) {
        in_file.insert(t.name);
    }
    for (const auto& name : model.params().names()) {
        if (in_file.count(name) == 0) {
            throw DataError(path.string() + ": missing tensor '" + name + "' required by " + spec.describe());
        }
    }
    load_into(model.params(), path);
    return model;
}

std::string run_tag(const ExperimentConfig& config) { return config.get("model") + "." + config.get("lft.method"); }

int cmd_gen_corpus(const Common& c) {
    const auto config = load_config(c);
    const auto corpus_config = corpus_config_from(config);
    const std::size_t vocab_size = encoder_config_from(config).vocab_size();
    const Corpus corpus = generate_corpus(corpus_config);
    const Vocab vocab = build_vocab(corpus, vocab_size);
    write_corpus(c.out, corpus, vocab);
    std::cout << corpus.documents.size() << " documents, " << corpus.queries.size() << " queries ("
              << to_string(corpus_config.regime) << ", mean length " << fixed(mean_query_length(corpus), 3) << "), "
              << corpus.triplets.size() << " triplets, vocabulary " << vocab.size() << " -> " << c.out << "\n";
    return 0;
}

int cmd_pretrain(const Common& c) {
    const auto config = load_config(c);
    config.require({"paths.data"});
    const EncoderConfig encoder = encoder_config_from(config);
    auto schedule = pretrain_schedule_from(config);
    const fs::path dir = config.get("paths.data");
    require_dir(dir, "paths.data");
    const Corpus corpus = read_corpus(dir);
    const PreparedCorpus data = prepare_corpus(corpus, read_vocab(dir));
    const auto texts = pretraining_texts(data);
    const auto result = pretrain_masked<float>(texts, encoder, schedule);
    std::string log;
    for (std::size_t i = 0; i < result.losses.size(); ++i) {
        log += std::to_string(i + 1) + "\t" + fixed(result.losses[i], 6) + "\n";
    }
    const fs::path out = c.out;
    fs::create_directories(out);
    save_checkpoint(result.encoder, out / "encoder.ckpt");
    write_text_file(out / "pretrain.log", log);
    const double acc = masked_token_accuracy(result.encoder, result.head, encoder, texts, schedule.mask_prob,
                                             schedule.seed);
    std::cout << "masked-token accuracy " << fixed(acc, 4) << " -> " << (out / "encoder.ckpt").string() << "\n";
    return 0;
}

template <typename T>
int train_impl(const Common& c, const ExperimentConfig& config) {
    config.require({"model", "lft.method", "paths.data", "paths.encoder"});
    const Experiment e = load_experiment(config);
    const TrainConfig train_config = train_config_from(config);
    const fs::path encoder_path = config.get("paths.encoder");
    require_file(encoder_path, "paths.encoder");
    auto encoder = load_encoder_checkpoint<T>(encoder_path, e.spec.encoder);
    auto model = RankingModel<T>::create(e.spec, encoder, config.get_u64("seed"));

    std::ostringstream log;
    const auto result = train(model, e.fold.train, e.data.docs, e.fold.val, e.fold.qrels, train_config, &log);
    const Run run = rerank_all(model, e.fold.test, e.data.docs, run_tag(config));

    const fs::path out = c.out;
    fs::create_directories(out);
    save_checkpoint(model.params(), out / "model.ckpt");
    write_text_file(out / "train.log", log.str());
    write_text_file(out / "test.run", format_run(run));
    const std::size_t k = train_config.val_k;
    std::cout << e.spec.describe() << "\nbest epoch " << result.best_epoch << ", validation P@" << k << " "
              << fixed(result.best_val, 4) << ", test P@" << k << " "
              << fixed(precision_at_k(run, e.fold.qrels, k).mean(), 4) << "\n";
    return 0;
}

int cmd_train(const Common& c) {
    const auto config = load_config(c);
    return c.precision == "f64" ? train_impl<double>(c, config) : train_impl<float>(c, config);
}

template <typename T>
int rerank_impl(const Common& c, const ExperimentConfig& config, const std::string& model_path, bool all) {
    const Experiment e = load_experiment(config);
    const auto model = load_model<T>(e.spec, model_path, config.get_u64("seed"));
    std::vector<RerankQuery> queries = e.fold.test;
    if (all) {
        std::vector<std::string> qids;
        for (const auto& q : e.corpus.queries) {
            qids.push_back(q.qid);
        }
        queries = rerank_queries(e.data, qids);
    }
    const Run run = rerank_all(model, queries, e.data.docs, run_tag(config));
    write_text_file(c.out, format_run(run));
    std::cout << queries.size() << " queries, " << run.size() << " records -> " << c.out << "\n";
    return 0;
}

int cmd_rerank(const Common& c, const std::string& model_path, bool all) {
    const auto config = load_config(c);
    return c.precision == "f64" ? rerank_impl<double>(c, config, model_path, all)
                                : rerank_impl<float>(c, config, model_path, all);
}

int cmd_eval(const std::string& run_path, const std::string& qrels_path, std::size_t k, bool per_query) {
    require_file(run_path, "run");
    require_file(qrels_path, "qrels");
    const Run run = parse_run(read_text_file(run_path), run_path);
    validate_run(run);
    const Qrels qrels = parse_qrels(read_text_file(qrels_path), qrels_path);
    const auto p = precision_at_k(run, qrels, k);
    const auto n = ndcg_at_k(run, qrels, k);
    const std::string ks = std::to_string(k);
    if (per_query) {
        for (const auto& [qid, v] : p.per_query) {
            std::cout << qid << "\tP@" << ks << "\t" << fixed(v, 6) << "\tnDCG@" << ks << "\t"
                      << fixed(n.per_query.at(qid), 6) << "\n";
        }
    }
    std::cout << "P@" << ks << "\t" << fixed(p.mean(), 6) << "\n";
    std::cout << "nDCG@" << ks << "\t" << fixed(n.mean(), 6) << "\n";
    std::cout << "queries\t" << p.per_query.size() << "\n";
    if (!p.skipped.empty()) {
        std::cout << "skipped\t" << p.skipped.size() << "\n";
    }
    return 0;
}

int cmd_count_params(const Common& c, const std::string& convention) {
    const auto config = load_config(c);
    const ModelSpec spec = model_spec_from(config);
    const auto conv = convention == "optimizer" ? CountConvention::optimizer : CountConvention::retained;
    const std::size_t count = count_trainable(spec.lft, spec.binding, spec.encoder, conv);
    std::cout << count << " (" << format_count(count) << ")\n";
    return 0;
}

int cmd_gradcheck(const Common& c) {
    if (c.precision != "f64") {
        throw ConfigError("gradcheck runs at --precision f64 only");
    }
    const auto config = load_config(c);
    const ModelSpec spec = model_spec_from(config);
    const std::uint64_t seed = config.get_u64("seed");
    auto model = RankingModel<double>::create(spec, init_encoder<double>(spec.encoder, seed), seed);
    // Zero-initialized adapter factors would hide their downstream paths.
    std::mt19937_64 rng(derive_seed(seed, "gradcheck"));
    for (const auto& name : model.params().trainable_names()) {
        if (name.size() > 2 && name.compare(name.size() - 2, 2, ".B") == 0) {
            auto& t = model.params().mutable_tensor(name);
            t = normal_tensor<double>(t.shape(), 0.05, rng);
        }
    }
    const std::size_t vocab = spec.encoder.vocab_size();
    auto text = [&](std::size_t len) {
        TokenIds ids(len);
        for (auto& t : ids) {
            t = static_cast<std::int32_t>(token::first_free + draw_index(rng, vocab - token::first_free));
        }
        return ids;
    };
    DocTable docs{{"a", text(6)}, {"b", text(5)}, {"c", text(7)}};
    const std::vector<TokenTriplet> triplets{{text(3), "a", "b"}, {text(2), "c", "a"}};
    std::vector<const TokenTriplet*> batch{&triplets[0], &triplets[1]};
    const LossBuilder loss = [&](Graph<double>& g) { return batch_loss(g, model, batch, docs); };
    const auto report = grad_check(loss, model.params(), {1e-4, 1e-4, 4, seed});
    std::cout << spec.describe() << "\nmax relative error " << report.max_rel_err << " over " << report.coordinates
              << " coordinates (worst: " << report.worst_param << "[" << report.worst_index << "])\n";
    return report.max_rel_err < 1e-4 ? 0 : 2;
}

int cmd_merge_lora(const Common& c, const std::string& model_path) {
    const auto config = load_config(c);
    const ModelSpec spec = model_spec_from(config);
    const auto model = load_model<double>(spec, model_path, config.get_u64("seed"));
    const auto merged = merge_lora(model);
    save_checkpoint(merged.params(), c.out);
    std::cout << "merged " << describe(spec.lft) << " into the encoder; remaining: " << describe(merged.spec().lft)
              << " -> " << c.out << "\n";
    return 0;
}

int cmd_stats(const std::string& a_path, const std::string& b_path, const std::string& qrels_path, std::size_t k,
              const std::string& metric) {
    for (const auto& [p, what] : {std::pair{a_path, "run a"}, {b_path, "run b"}, {qrels_path, "qrels"}}) {
        require_file(p, what);
    }
    const Qrels qrels = parse_qrels(read_text_file(qrels_path), qrels_path);
    auto report = [&](const std::string& path) {
        const Run run = parse_run(read_text_file(path), path);
        validate_run(run);
        return metric == "ndcg" ? ndcg_at_k(run, qrels, k) : precision_at_k(run, qrels, k);
    };
    const auto a = report(a_path);
    const auto b = report(b_path);
    std::vector<double> av;
    std::vector<double> bv;
    for (const auto& [qid, v] : a.per_query) {
        auto it = b.per_query.find(qid);
        if (it == b.per_query.end()) {
            throw DataError("query '" + qid + "' is in " + a_path + " but not in " + b_path);
        }
        av.push_back(v);
        bv.push_back(it->second);
    }
    if (av.size() != b.per_query.size()) {
        throw DataError(b_path + " has queries missing from " + a_path);
    }
    const auto t = t_test_one_tailed(av, bv);
    const std::string name = (metric == "ndcg" ? "nDCG@" : "P@") + std::to_string(k);
    std::cout << "metric\tqueries\tmean_a\tmean_b\timprovement_pct\tt\tp_one_tailed\n"
              << name << "\t" << av.size() << "\t" << fixed(a.mean(), 4) << "\t" << fixed(b.mean(), 4) << "\t"
              << fixed(improvement_pct(a.mean(), b.mean()), 2) << "\t" << fixed(t.t, 4) << "\t" << fixed(t.p, 4)
              << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Lightweight fine-tuning lab for neural ranking models"};
    app.require_subcommand(1);

    Common common;
    std::string model_path;
    std::string run_path;
    std::string run_b;
    std::string qrels_path;
    std::size_t k = 20;
    std::string metric = "p";
    std::string convention = "retained";
    bool per_query = false;
    bool all_queries = false;

    auto* gen = app.add_subcommand("gen-corpus", "generate a synthetic corpus directory");
    add_common(gen, common, true, false);

    auto* pre = app.add_subcommand("pretrain", "masked-token pre-training of the encoder");
    add_common(pre, common, true, false);

    auto* tr = app.add_subcommand("train", "train one fold; writes model.ckpt, train.log and test.run");
    add_common(tr, common, true, true);

    auto* rr = app.add_subcommand("rerank", "rerank the test fold (or every query) with a trained model");
    add_common(rr, common, true, true);
    rr->add_option("--model", model_path, "model checkpoint")->required();
    rr->add_flag("--all", all_queries, "rerank every query, not only the test fold");

    auto* ev = app.add_subcommand("eval", "P@k and nDCG@k of a run");
    ev->add_option("--run", run_path, "run file")->required();
    ev->add_option("--qrels", qrels_path, "qrels file")->required();
    ev->add_option("--k", k, "cutoff")->check(CLI::PositiveNumber);
    ev->add_flag("--per-query", per_query, "print per-query values");

    auto* cp = app.add_subcommand("count-params", "trainable adapter parameters");
    add_common(cp, common, false, false);
    cp->add_option("--convention", convention, "retained | optimizer")
        ->check(CLI::IsMember({"retained", "optimizer"}));

    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the training loss gradients");
    Common gc_common;
    gc_common.precision = "f64";
    add_common(gc, gc_common, false, true);

    auto* ml = app.add_subcommand("merge-lora", "fold LoRA adapters into the encoder weights");
    add_common(ml, common, true, false);
    ml->add_option("--model", model_path, "model checkpoint")->required();

    auto* st = app.add_subcommand("stats", "one-tailed t-test of run a over run b");
    st->add_option("--a", run_path, "run file a")->required();
    st->add_option("--b", run_b, "run file b")->required();
    st->add_option("--qrels", qrels_path, "qrels file")->required();
    st->add_option("--k", k, "cutoff")->check(CLI::PositiveNumber);
    st->add_option("--metric", metric, "p | ndcg")->check(CLI::IsMember({"p", "ndcg"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) {
            return cmd_gen_corpus(common);
        }
        if (pre->parsed()) {
            return cmd_pretrain(common);
        }
        if (tr->parsed()) {
            return cmd_train(common);
        }
        if (rr->parsed()) {
            return cmd_rerank(common, model_path, all_queries);
        }
        if (ev->parsed()) {
            return cmd_eval(run_path, qrels_path, k, per_query);
        }
        if (cp->parsed()) {
            return cmd_count_params(common, convention);
        }
        if (gc->parsed()) {
            return cmd_gradcheck(gc_common);
        }
        if (ml->parsed()) {
            return cmd_merge_lora(common, model_path);
        }
        if (st->parsed()) {
            return cmd_stats(run_path, run_b, qrels_path, k, metric);
        }
    } catch (const InvariantError& e) {
        std::cerr << "lftrank: internal error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "lftrank: " << e.what() << "\n";
        return 1;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "lftrank: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "lftrank: internal error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
