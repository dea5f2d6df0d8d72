// Copyright (c) 2026 The lftrank Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <set>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "lftrank/train.hpp"

using namespace lftrank;
using namespace lftrank::testing;

namespace {

std::string two_decimals(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

Run make_run(const std::string& qid, const std::vector<std::string>& docids) {
    Run run;
    for (std::size_t i = 0; i < docids.size(); ++i) {
        run.push_back({qid, docids[i], i + 1, 1.0 / static_cast<double>(i + 1), "t"});
    }
    return run;
}

// Reference metrics coded directly from the definitions over plain vectors
// of relevance grades in rank order.
double ref_precision(const std::vector<int>& rels, std::size_t k) {
    double hits = 0;
    for (std::size_t i = 0; i < rels.size() && i < k; ++i) {
        if (rels[i] > 0) {
            hits += 1;
        }
    }
    return hits / static_cast<double>(k);
}

double ref_ndcg(const std::vector<int>& rels, std::vector<int> judged, std::size_t k) {
    auto dcg = [k](const std::vector<int>& r) {
        double total = 0;
        for (std::size_t i = 0; i < r.size() && i < k; ++i) {
            total += (std::pow(2.0, r[i]) - 1.0) / (std::log(static_cast<double>(i) + 2.0) / std::log(2.0));
        }
        return total;
    };
    std::sort(judged.rbegin(), judged.rend());
    const double ideal = dcg(judged);
    return ideal == 0 ? 0.0 : dcg(rels) / ideal;
}

struct ToyData {
    EncoderConfig config = tiny_config(1, 8, 2, 40, 32);
    DocTable docs;
    std::vector<TokenTriplet> triplets;
    std::vector<RerankQuery> val;
    Qrels qrels;
};

// Query i asks for tokens in band i; documents d{i}{j} repeat band-i tokens
// (relevant) or band-(i+1) tokens (not relevant).
ToyData toy_data() {
    ToyData t;
    for (int band = 0; band < 3; ++band) {
        const auto base = static_cast<std::int32_t>(token::first_free + 10 * band);
        const std::string qid = "q" + std::to_string(band);
        RerankQuery q{qid, {base, static_cast<std::int32_t>(base + 1)}, {}};
        for (int j = 0; j < 3; ++j) {
            const std::string rel = "r" + std::to_string(band) + std::to_string(j);
            const std::string irr = "n" + std::to_string(band) + std::to_string(j);
            t.docs[rel] = {base, static_cast<std::int32_t>(base + 2 + j), static_cast<std::int32_t>(base + 1)};
            const auto other = static_cast<std::int32_t>(token::first_free + 10 * ((band + 1) % 3));
            t.docs[irr] = {other, static_cast<std::int32_t>(other + 3 + j), static_cast<std::int32_t>(other + 1)};
            q.candidates.push_back(rel);
            q.candidates.push_back(irr);
            t.qrels[qid][rel] = 1;
            t.qrels[qid][irr] = 0;
            t.triplets.push_back({q.text, rel, irr});
        }
        t.val.push_back(q);
    }
    return t;
}

RankingModel<double> toy_model(const ToyData& data, const LftSpec& lft, RankerKind ranker = RankerKind::colbert) {
    ModelSpec spec{data.config, ranker, lft, ranker == RankerKind::mono ? TowerBinding{CrossBinding{}}
                                                                         : TowerBinding{SiameseBinding{}}, {}};
    return RankingModel<double>::create(spec, init_encoder<double>(data.config, 3), 11);
}

TrainConfig fast_config(std::size_t epochs) {
    TrainConfig c;
    c.max_epochs = epochs;
    c.batch_size = 4;
    c.val_k = 3;
    c.seed = 5;
    for (auto& [_, lr] : c.learning_rates) {
        lr = 1e-2;
    }
    return c;
}

bool same_entries(const ParamStore<double>& a, const ParamStore<double>& b, const std::string& prefix) {
    for (const auto& [name, entry] : a.entries()) {
        if (name.rfind(prefix, 0) == 0 && !(entry.tensor == b.get(name))) {
            return false;
        }
    }
    return true;
}

}  // namespace

TEST_CASE("triplet loss") {
    CHECK(triplet_loss(0.3, 0.3) == 0.5);
    CHECK(triplet_loss(40.0, 0.0) < 1e-15);
    CHECK(triplet_loss(40.0, 0.0) > 0.0);
    CHECK(triplet_loss(-800.0, 0.0) == 1.0);
    CHECK(triplet_loss(1.0, 0.0) == doctest::Approx(0.2689414213699951).epsilon(1e-15));
    double prev = 1.0;
    for (double margin = -10; margin <= 10; margin += 0.5) {
        const double v = triplet_loss(margin, 0.0);
        CHECK(v > 0.0);
        CHECK(v < 1.0);
        CHECK(v < prev);
        prev = v;
    }
    for (double sp : {-2.0, 0.0, 0.7, 5.0}) {
        for (double sn : {-1.0, 0.3, 4.0}) {
            ParamStore<double> store;
            store.add("pos", Tensor<double>::scalar(sp), true);
            store.add("neg", Tensor<double>::scalar(sn), true);
            Graph<double> g(store, {});
            auto loss = triplet_loss(g.param("pos"), g.param("neg"));
            CHECK(loss.value().item() == doctest::Approx(triplet_loss(sp, sn)).epsilon(1e-14));
            g.tape().backward(loss);
            const auto grads = g.param_grads();
            const double h = 1e-6;
            const double fd_pos = (triplet_loss(sp + h, sn) - triplet_loss(sp - h, sn)) / (2 * h);
            const double fd_neg = (triplet_loss(sp, sn + h) - triplet_loss(sp, sn - h)) / (2 * h);
            CHECK(fd_pos < 0.0);
            CHECK(fd_neg > 0.0);
            CHECK(grads.at("pos").item() == doctest::Approx(fd_pos).epsilon(1e-6));
            CHECK(grads.at("neg").item() == doctest::Approx(fd_neg).epsilon(1e-6));
        }
    }
}

TEST_CASE("precision at k") {
    Qrels qrels;
    std::vector<std::string> ids;
    for (int i = 0; i < 20; ++i) {
        ids.push_back("d" + std::to_string(100 + i));
        qrels["q"][ids.back()] = i % 4 == 0 ? 1 : 0;
    }
    CHECK(precision_at_k(make_run("q", ids), qrels, 20).per_query.at("q") == 0.25);
    CHECK(precision_at_k(make_run("q", {"d100", "d104", "d108"}), qrels, 3).per_query.at("q") == 1.0);

    Qrels ten;
    std::vector<std::string> short_run;
    for (int i = 0; i < 10; ++i) {
        short_run.push_back("x" + std::to_string(i));
        ten["q"][short_run.back()] = 1;
    }
    CHECK(precision_at_k(make_run("q", short_run), ten, 20).per_query.at("q") == 0.5);

    SUBCASE("permutation within top k") {
        auto a = precision_at_k(make_run("q", {"d100", "d101", "d104", "d107"}), qrels, 3).per_query.at("q");
        auto b = precision_at_k(make_run("q", {"d104", "d100", "d101", "d107"}), qrels, 3).per_query.at("q");
        CHECK(a == b);
    }
    SUBCASE("queries without records are skipped") {
        Qrels two = qrels;
        two["other"]["d1"] = 1;
        auto report = precision_at_k(make_run("q", ids), two, 20);
        CHECK(report.per_query.size() == 1);
        REQUIRE(report.skipped.size() == 1);
        CHECK(report.skipped[0] == "other");
        CHECK(report.mean() == 0.25);
    }
    CHECK_THROWS_AS(precision_at_k(make_run("q", ids), qrels, 0), ConfigError);
}

TEST_CASE("nDCG at k") {
    Qrels qrels;
    qrels["q"] = {{"a", 2}, {"b", 1}, {"c", 0}};
    CHECK(ndcg_at_k(make_run("q", {"a", "b", "c"}), qrels, 3).per_query.at("q") == doctest::Approx(1.0));
    Qrels single;
    single["q"] = {{"rel", 1}, {"other", 0}};
    CHECK(ndcg_at_k(make_run("q", {"other", "rel"}), single, 2).per_query.at("q") ==
          doctest::Approx(0.63092975357145753).epsilon(1e-15));
    CHECK(ndcg_at_k(make_run("q", {"c", "zz"}), qrels, 2).per_query.at("q") == 0.0);
    Qrels none;
    none["q"] = {{"a", 0}};
    CHECK(ndcg_at_k(make_run("q", {"a"}), none, 5).per_query.at("q") == 0.0);
}

TEST_CASE("metrics match the reference on random instances") {
    std::mt19937_64 rng(2026);
    for (int instance = 0; instance < 100; ++instance) {
        const std::size_t n_docs = 1 + draw_index(rng, 10);
        const std::size_t k = 1 + draw_index(rng, 10);
        Qrels qrels;
        std::vector<std::string> ids;
        std::vector<int> rels;
        std::vector<int> judged;
        for (std::size_t i = 0; i < n_docs; ++i) {
            ids.push_back("d" + std::to_string(i));
            const int rel = static_cast<int>(draw_index(rng, 3));
            rels.push_back(rel);
            judged.push_back(rel);
            qrels["q"][ids.back()] = rel;
        }
        // Judged documents absent from the run still count toward the ideal.
        const std::size_t extra = draw_index(rng, 3);
        for (std::size_t i = 0; i < extra; ++i) {
            const int rel = static_cast<int>(draw_index(rng, 3));
            qrels["q"]["unretrieved" + std::to_string(i)] = rel;
            judged.push_back(rel);
        }
        const Run run = make_run("q", ids);
        CAPTURE(instance);
        CHECK(std::abs(precision_at_k(run, qrels, k).per_query.at("q") - ref_precision(rels, k)) <= 1e-12);
        const double nd = ndcg_at_k(run, qrels, k).per_query.at("q");
        CHECK(std::abs(nd - ref_ndcg(rels, judged, k)) <= 1e-12);
        CHECK(nd >= 0.0);
        CHECK(nd <= 1.0 + 1e-12);
    }
}

TEST_CASE("one-tailed t-test") {
    const std::vector<double> a{2, 3, 4};
    const std::vector<double> b{1, 2, 3};
    const auto r = t_test_one_tailed(a, b);
    CHECK(r.t == doctest::Approx(1.2247448713915889).epsilon(1e-12));
    CHECK(r.p == doctest::Approx(0.14393206736334541).epsilon(1e-10));
    CHECK(r.df == 4);
    const auto swapped = t_test_one_tailed(b, a);
    CHECK(r.p + swapped.p == doctest::Approx(1.0).epsilon(1e-14));
    const auto same = t_test_one_tailed(a, a);
    CHECK(same.t == 0.0);
    CHECK(same.p == 0.5);
    const std::vector<double> c{1, 1};
    const std::vector<double> d{2, 2};
    CHECK(t_test_one_tailed(c, c).p == 0.5);
    CHECK(t_test_one_tailed(d, c).p == 0.0);
    CHECK(t_test_one_tailed(c, d).p == 1.0);
    CHECK_THROWS_AS(t_test_one_tailed(std::vector<double>{1.0}, b), DataError);
}

TEST_CASE("improvement percentage") {
    CHECK(two_decimals(improvement_pct(0.4012, 0.3966)) == "1.16");
    CHECK(two_decimals(improvement_pct(0.2447, 0.1846)) == "32.56");
    CHECK(improvement_pct(0.3, 0.3) == 0.0);
    CHECK_THROWS_AS(improvement_pct(0.3, 0.0), DataError);
}

TEST_CASE("fold split") {
    std::vector<std::string> ids;
    for (int i = 0; i < 10; ++i) {
        ids.push_back("q" + std::to_string(i));
    }
    const auto folds = fold_split(ids, 5, 3);
    REQUIRE(folds.size() == 5);
    std::set<std::string> all;
    for (const auto& f : folds) {
        CHECK(f.size() == 2);
        all.insert(f.begin(), f.end());
    }
    CHECK(all.size() == 10);
    CHECK(fold_split(ids, 5, 3) == folds);
    std::vector<std::string> reversed(ids.rbegin(), ids.rend());
    CHECK(fold_split(reversed, 5, 3) == folds);
    CHECK(fold_split(ids, 5, 4) != folds);
    for (std::size_t r = 0; r < 5; ++r) {
        const auto rot = fold_rotation(folds, r);
        CHECK(rot.test == folds[r]);
        CHECK(rot.val == folds[(r + 1) % 5]);
        CHECK(rot.train.size() == 6);
    }
    CHECK_THROWS_AS(fold_split({"a", "b"}, 5, 1), DataError);
    CHECK_THROWS_AS(fold_rotation(folds, 5), ConfigError);
}

TEST_CASE("sort_and_rank tie rule") {
    std::vector<RunRecord> records{{"q", "d2", 0, 0.9, "t"}, {"q", "d1", 0, 0.3, "t"}};
    sort_and_rank(records);
    CHECK(records[0].docid == "d2");
    CHECK(records[1].rank == 2);
    std::vector<RunRecord> tied{{"q", "c", 0, 1.0, "t"}, {"q", "a", 0, 1.0, "t"}, {"q", "b", 0, 1.0, "t"}};
    sort_and_rank(tied);
    CHECK(tied[0].docid == "a");
    CHECK(tied[1].docid == "b");
    CHECK(tied[2].docid == "c");
    CHECK_NOTHROW(validate_run(tied));
    tied[2].rank = 2;
    CHECK_THROWS_AS(validate_run(tied), DataError);
}

TEST_CASE("rerank") {
    ToyData data = toy_data();
    SUBCASE("constant scores fall back to docid order") {
        auto model = toy_model(data, FullFT{}, RankerKind::mono);
        model.params().mutable_tensor("ranker.mono.weight").fill(0.0);
        const auto records = rerank<double>(model, data.val[0], data.docs, nullptr, "x");
        std::vector<std::string> order;
        for (const auto& r : records) {
            order.push_back(r.docid);
        }
        auto sorted = order;
        std::sort(sorted.begin(), sorted.end());
        CHECK(order == sorted);
    }
    SUBCASE("single candidate") {
        auto model = toy_model(data, small_lora());
        RerankQuery one{"q", data.val[0].text, {"r00"}};
        const auto cache = precompute_docs(model, data.docs);
        const auto records = rerank(model, one, data.docs, &cache, "x");
        REQUIRE(records.size() == 1);
        CHECK(records[0].rank == 1);
    }
    SUBCASE("unknown docid is named") {
        auto model = toy_model(data, small_lora());
        RerankQuery bad{"q", data.val[0].text, {"r00", "missing-doc"}};
        const auto cache = precompute_docs(model, data.docs);
        CHECK_THROWS_WITH_AS(rerank(model, bad, data.docs, &cache, "x"), doctest::Contains("missing-doc"), DataError);
        auto cross = toy_model(data, FullFT{}, RankerKind::mono);
        CHECK_THROWS_WITH_AS(rerank<double>(cross, bad, data.docs, nullptr, "x"), doctest::Contains("missing-doc"),
                             DataError);
    }
    SUBCASE("bi-encoders need a current cache") {
        auto model = toy_model(data, small_lora());
        CHECK_THROWS_AS(rerank<double>(model, data.val[0], data.docs, nullptr, "x"), ContractError);
        const auto cache = precompute_docs(model, data.docs);
        model.params().mutable_tensor("lora.0.q.B").values()[0] = 0.5;
        CHECK_THROWS_AS(rerank(model, data.val[0], data.docs, &cache, "x"), StaleCacheError);
    }
}

TEST_CASE("epoch log format") {
    CHECK(format_epoch_log({3, 0.25, 0.5, 2}) == "3\t0.250000\t0.500000\t2\n");
}

TEST_CASE("training") {
    ToyData data = toy_data();

    SUBCASE("zero epochs return the initialization") {
        auto model = toy_model(data, small_lora());
        const auto init = model.params();
        auto result = train(model, data.triplets, data.docs, data.val, data.qrels, fast_config(0));
        CHECK(result.best_epoch == 0);
        CHECK(result.log.empty());
        CHECK(same_entries(result.best, init, ""));
        CHECK(same_entries(model.params(), init, ""));
    }
    SUBCASE("same seed gives identical checkpoints") {
        auto a = toy_model(data, small_prefix(2));
        auto b = toy_model(data, small_prefix(2));
        auto ra = train(a, data.triplets, data.docs, data.val, data.qrels, fast_config(3));
        auto rb = train(b, data.triplets, data.docs, data.val, data.qrels, fast_config(3));
        CHECK(same_entries(ra.best, rb.best, ""));
        CHECK(ra.best_epoch == rb.best_epoch);
        REQUIRE(ra.log.size() == 3);
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(ra.log[i].train_loss == rb.log[i].train_loss);
        }
    }
    SUBCASE("loss decreases on separable triplets") {
        auto model = toy_model(data, small_lora());
        auto result = train(model, data.triplets, data.docs, data.val, data.qrels, fast_config(5));
        CHECK(result.log.back().train_loss < result.log.front().train_loss);
    }
    SUBCASE("adapters leave the encoder untouched") {
        for (const LftSpec& lft : {LftSpec{small_lora()}, LftSpec{small_lora(true)}, LftSpec{small_prefix(2)},
                                   LftSpec{PromptTuning{2}}}) {
            auto model = toy_model(data, lft);
            const auto init = model.params();
            train(model, data.triplets, data.docs, data.val, data.qrels, fast_config(3));
            CHECK(same_entries(model.params(), init, "layer."));
            CHECK(same_entries(model.params(), init, "embeddings."));
            CHECK_FALSE(same_entries(model.params(), init, "ranker."));
        }
    }
    SUBCASE("sequential hybrid freezes stage one") {
        Hybrid h{small_prefix(2), small_lora(), HybridMode::sequential, 2, 2};
        auto model = toy_model(data, h);
        std::ostringstream log;
        auto result = train(model, data.triplets, data.docs, data.val, data.qrels, fast_config(4), &log);
        REQUIRE(result.log.size() == 4);
        CHECK(result.log[1].stage == 1);
        CHECK(result.log[2].stage == 2);
        CHECK(log.str().find("3\t") != std::string::npos);
        // Stage-2 epochs keep the stage-1 prefix module of the restored best
        // stage-1 epoch.
        auto stage1 = toy_model(data, h);
        train(stage1, data.triplets, data.docs, data.val, data.qrels, fast_config(2));
        CHECK(same_entries(model.params(), stage1.params(), "prefix."));
        CHECK_THROWS_AS(train(model, data.triplets, data.docs, data.val, data.qrels, fast_config(5)), ScheduleError);
    }
    SUBCASE("errors") {
        auto model = toy_model(data, small_lora());
        CHECK_THROWS_AS(train(model, {}, data.docs, data.val, data.qrels, fast_config(1)), DataError);
        std::vector<TokenTriplet> bad{{data.triplets[0].query, "r00", "nope"}};
        CHECK_THROWS_WITH_AS(train(model, bad, data.docs, data.val, data.qrels, fast_config(1)),
                             doctest::Contains("nope"), DataError);
        model.params().mutable_tensor("ranker.col.proj.weight").values()[0] = std::nan("");
        CHECK_THROWS_WITH_AS(train(model, data.triplets, data.docs, data.val, data.qrels, fast_config(1)),
                             doctest::Contains("epoch 1, batch 1"), NumericError);
    }
}
