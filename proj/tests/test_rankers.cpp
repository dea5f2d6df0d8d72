// Copyright (c) 2026 The lftrank Authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"
#include "helpers.hpp"
#include "lftrank/gradcheck.hpp"

using namespace lftrank;
using namespace lftrank::testing;

TEST_CASE("mono head") {
    ParamStore<double> store;
    store.add("ranker.mono.weight", Tensor<double>::matrix({{1.5, 2.0}}));
    store.add("ranker.mono.bias", Tensor<double>::vector({0.25}));
    auto g = Graph<double>::inference(store);
    auto cls = g.constant(Tensor<double>::matrix({{0.3, -0.7}}));
    CHECK(score_mono(g, cls).value().item() == doctest::Approx(-0.7).epsilon(1e-15));

    SUBCASE("zero head scores zero") {
        ParamStore<double> zero;
        zero.add("ranker.mono.weight", Tensor<double>({1, 2}));
        zero.add("ranker.mono.bias", Tensor<double>({1}));
        auto gz = Graph<double>::inference(zero);
        CHECK(score_mono(gz, gz.constant(sin_block(1, 2, 0))).value().item() == 0.0);
    }
    SUBCASE("linear in the CLS vector") {
        auto a = g.constant(sin_block(1, 2, 3));
        auto b = g.constant(sin_block(1, 2, 9));
        const double bias = 0.25;
        const double sa = score_mono(g, a).value().item() - bias;
        const double sb = score_mono(g, b).value().item() - bias;
        const double sab = score_mono(g, add(scale(a, 2.0), b)).value().item() - bias;
        CHECK(sab == doctest::Approx(2 * sa + sb).epsilon(1e-12));
    }
}

TEST_CASE("twin head") {
    ParamStore<double> store;
    store.add("ranker.twin.fc1.weight", Tensor<double>::matrix({{0.1, -0.2, 0.3, 0.4, -0.5, 0.6, 0.7, -0.8},
                                                                {0.05, 0.15, -0.25, 0.35, 0.45, -0.55, 0.65, 0.75}}));
    store.add("ranker.twin.fc1.bias", Tensor<double>::vector({0.01, -0.02}));
    store.add("ranker.twin.fc2.weight", Tensor<double>::matrix({{1.0, -2.0}}));
    store.add("ranker.twin.fc2.bias", Tensor<double>::vector({0.5}));
    auto g = Graph<double>::inference(store);
    auto cq = g.constant(Tensor<double>::matrix({{0.3, -0.7}}));
    auto cd = g.constant(Tensor<double>::matrix({{1.0, 0.2}}));
    CHECK(score_twin(g, cq, cd).value().item() == doctest::Approx(1.572).epsilon(1e-14));

    const auto same = twin_features(cq, cq).value();
    CHECK(same[4] == 0.0);
    CHECK(same[5] == 0.0);
    const auto f_qd = twin_features(cq, cd).value();
    const auto f_dq = twin_features(cd, cq).value();
    for (std::size_t c = 4; c < 8; ++c) {
        CHECK(f_qd[c] == f_dq[c]);
    }
    CHECK_THROWS_AS(twin_features(cq, g.constant(Tensor<double>({1, 3}))), DimensionError);

    ParamStore<double> zero = store;
    zero.mutable_tensor("ranker.twin.fc2.weight").fill(0.0);
    auto gz = Graph<double>::inference(zero);
    CHECK(score_twin(gz, gz.constant(sin_block(1, 2, 0)), gz.constant(sin_block(1, 2, 5))).value().item() == 0.5);
}

TEST_CASE("ColBERT MaxSim") {
    Tape<double> tape;
    auto unit = [](std::initializer_list<double> v) {
        auto t = Tensor<double>::matrix({v});
        double n = 0;
        for (double x : t.values()) {
            n += x * x;
        }
        for (double& x : t.values()) {
            x /= std::sqrt(n);
        }
        return t;
    };
    auto q = tape.constant(unit({1, 2, 2}));
    auto d = tape.constant(concat_rows<double>({tape.constant(unit({0, 1, 0})), q}).value());
    CHECK(score_colbert(q, d).value().item() == doctest::Approx(1.0).epsilon(1e-15));
    auto ortho = tape.constant(unit({0, 1, -1}));
    CHECK(score_colbert(q, ortho).value().item() == doctest::Approx(0.0).scale(1.0));

    SUBCASE("brute force") {
        std::mt19937_64 rng(12);
        auto qm = tape.constant(normal_tensor<double>({4, 8}, 1.0, rng));
        auto dm = tape.constant(normal_tensor<double>({6, 8}, 1.0, rng));
        double expected = 0;
        for (std::size_t i = 0; i < 4; ++i) {
            double best = -1e300;
            for (std::size_t j = 0; j < 6; ++j) {
                double dot = 0;
                for (std::size_t c = 0; c < 8; ++c) {
                    dot += qm.value().at(i, c) * dm.value().at(j, c);
                }
                best = std::max(best, dot);
            }
            expected += best;
        }
        const double got = score_colbert(qm, dm).value().item();
        CHECK(got == doctest::Approx(expected).epsilon(1e-13));
        auto extra = tape.constant(normal_tensor<double>({1, 8}, 1.0, rng));
        CHECK(score_colbert(qm, concat_rows<double>({dm, extra})).value().item() >= got);
    }
    CHECK_THROWS_AS(score_colbert(q, tape.constant(Tensor<double>({0, 3}))), ContractError);
}

TEST_CASE("ColBERT representation skips slots and [SEP]") {
    const auto config = tiny_config(2, 8, 2);
    ModelSpec spec{config, RankerKind::colbert, small_prefix(3), SiameseBinding{}, {}};
    auto model = RankingModel<double>::create(spec, init_encoder<double>(config, 2), 3);
    const auto rep = model.rep(Tower::query, {6, 7, 8});
    CHECK(rep.tokens.shape() == Shape{4, 32});
    for (std::size_t r = 0; r < 4; ++r) {
        double n = 0;
        for (double v : rep.tokens.row(r)) {
            n += v * v;
        }
        CHECK(n == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("document cache") {
    const auto config = tiny_config(2, 8, 2);
    std::mt19937_64 rng(4);
    std::map<std::string, TokenIds> docs;
    for (int i = 0; i < 5; ++i) {
        docs.emplace("d" + std::to_string(i), random_text(rng, 4 + i, 40));
    }
    const auto query = random_text(rng, 3, 40);
    for (RankerKind kind : {RankerKind::twin, RankerKind::colbert}) {
        ModelSpec spec{config, kind, small_lora(), SiameseBinding{}, {}};
        auto model = RankingModel<double>::create(spec, init_encoder<double>(config, 2), 3);
        perturb(model.params(), "lora.", 0.2, 5);
        const auto cache = precompute_docs(model, docs);
        CHECK(cache.reps.size() == docs.size());
        const auto qrep = model.rep(Tower::query, query);
        for (const auto& [id, text] : docs) {
            CHECK(model.score_cached(qrep, cache.reps.at(id)) == model.score(query, text));
        }
        CHECK_NOTHROW(cache.check(model));
        model.params().mutable_tensor("lora.0.q.B").values()[0] += 0.1;
        CHECK_THROWS_AS(cache.check(model), StaleCacheError);
    }
    ModelSpec cross{config, RankerKind::mono, FullFT{}, CrossBinding{}, {}};
    auto mono = RankingModel<double>::create(cross, init_encoder<double>(config, 2), 3);
    CHECK_THROWS_AS(precompute_docs(mono, docs), ContractError);
}

TEST_CASE("model gradients") {
    const auto config = tiny_config(1, 8, 2, 40, 32);
    std::mt19937_64 rng(1);
    const auto q = random_text(rng, 3, 40);
    const auto d = random_text(rng, 5, 40);
    struct Case {
        RankerKind ranker;
        LftSpec lft;
        TowerBinding binding;
    };
    const std::vector<Case> cases{
        {RankerKind::mono, small_lora(true), CrossBinding{}},
        {RankerKind::mono, small_prefix(2), CrossBinding{}},
        {RankerKind::twin, PromptTuning{2}, SiameseBinding{}},
        {RankerKind::colbert, Hybrid{small_prefix(2), small_lora(), HybridMode::concurrent},
         SemiSiameseBinding{PrefixSharing::concat, LoraSharing::shared_v, 1}},
    };
    for (const auto& c : cases) {
        ModelSpec spec{config, c.ranker, c.lft, c.binding, {}};
        auto model = RankingModel<double>::create(spec, init_encoder<double>(config, 2), 3);
        perturb(model.params(), "lora.", 0.2, 5);
        CAPTURE(spec.describe());
        auto report = grad_check([&](Graph<double>& g) { return model.score(g, q, d); }, model.params(),
                                 {1e-4, 1e-5, 4, 2});
        CAPTURE(report.worst_param);
        CAPTURE(report.max_rel_err);
        CAPTURE(report.worst_analytic);
        CAPTURE(report.worst_numeric);
        CHECK(report.passed);
    }
}
