// Copyright (c) 2026 The lftrank Authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"
#include "helpers.hpp"
#include "lftrank/gradcheck.hpp"

using namespace lftrank;
using namespace lftrank::testing;

namespace {

ParamStore<double> prefix_store(const EncoderConfig& config, const PrefixTuning& spec, std::uint64_t seed) {
    ParamStore<double> store;
    add_prefix_source(store, spec, seed);
    add_prefix_mlps(store, "prefix", spec, config, seed);
    return store;
}

std::vector<Tensor<double>> materialized(const ParamStore<double>& store, const EncoderConfig& config) {
    auto g = Graph<double>::inference(store);
    std::vector<Tensor<double>> out;
    for (auto v : materialize_prefixes(g, "prefix", config)) {
        out.push_back(v.value());
    }
    return out;
}

}  // namespace

TEST_CASE("prefix materialization") {
    const auto config = tiny_config(2, 8, 2);
    const PrefixTuning spec = small_prefix(5);
    auto store = prefix_store(config, spec, 3);
    const auto base = materialized(store, config);
    REQUIRE(base.size() == config.layers() + 1);
    for (const auto& p : base) {
        CHECK(p.shape() == Shape{5, 8});
    }

    SUBCASE("zero MLP weights give the up bias") {
        auto zeroed = store;
        for (const auto& name : zeroed.names()) {
            if (name.find(".weight") != std::string::npos) {
                zeroed.mutable_tensor(name).fill(0.0);
            }
        }
        zeroed.mutable_tensor("prefix.mlp.1.up.bias") = Tensor<double>({8}, 0.25);
        const auto out = materialized(zeroed, config);
        for (double v : out[1].values()) {
            CHECK(v == 0.25);
        }
        for (double v : out[0].values()) {
            CHECK(v == 0.0);
        }
    }

    SUBCASE("per-index locality") {
        auto moved = store;
        moved.mutable_tensor(prefix_source_name).at(3, 1) += 0.5;
        const auto out = materialized(moved, config);
        for (std::size_t p = 0; p < out.size(); ++p) {
            for (std::size_t r = 0; r < 5; ++r) {
                bool same = true;
                for (std::size_t c = 0; c < 8; ++c) {
                    same = same && out[p].at(r, c) == base[p].at(r, c);
                }
                CHECK(same == (r != 3));
            }
        }
    }
}

TEST_CASE("prefix MLP hand oracle") {
    EncoderConfig::Dims dims;
    dims.layers = 1;
    dims.model_dim = 2;
    dims.heads = 1;
    dims.ffn_dim = 2;
    dims.vocab_size = 8;
    dims.max_seq_len = 8;
    const EncoderConfig config(dims);
    ParamStore<double> store;
    store.add(prefix_source_name, Tensor<double>::matrix({{1.0, -2.0}}));
    for (int point : {0, 1}) {
        const std::string base = "prefix.mlp." + std::to_string(point) + ".";
        store.add(base + "down.weight", Tensor<double>::matrix({{0.5, 0.25}, {-1.0, 0.5}}));
        store.add(base + "down.bias", Tensor<double>::vector({0.1, 0.2}));
        store.add(base + "up.weight", Tensor<double>::matrix({{1.0, 2.0}, {-0.5, 0.3}}));
        store.add(base + "up.bias", Tensor<double>::vector({0.05, -0.05}));
    }
    const auto out = materialized(store, config);
    CHECK(out[0][0] == doctest::Approx(0.15).epsilon(1e-15));
    CHECK(out[0][1] == doctest::Approx(-0.1).epsilon(1e-15));
}

TEST_CASE("apply_prefix replaces slots and blocks gradient") {
    ParamStore<double> store;
    std::mt19937_64 rng(4);
    store.add("h", normal_tensor<double>({6, 4}, 1.0, rng), true);
    store.add("p", normal_tensor<double>({2, 4}, 1.0, rng), true);
    Graph<double> g(store, {});
    auto out = apply_prefix(g.param("h"), g.param("p"));
    for (std::size_t r = 0; r < 2; ++r) {
        for (std::size_t c = 0; c < 4; ++c) {
            CHECK(out.value().at(r, c) == store.get("p").at(r, c));
        }
    }
    for (std::size_t r = 2; r < 6; ++r) {
        for (std::size_t c = 0; c < 4; ++c) {
            CHECK(out.value().at(r, c) == store.get("h").at(r, c));
        }
    }
    CHECK(apply_prefix(g.param("h"), Var<double>{}).value() == store.get("h"));
    CHECK_THROWS_AS(apply_prefix(g.param("p"), g.param("h")), ContractError);

    // Loss mixes rows through attention-like products so slot rows matter downstream.
    auto loss_of = [](Graph<double>& gg) {
        auto x = apply_prefix(gg.param("h"), gg.param("p"));
        return sum(mul(softmax_rows(matmul_nt(x, x)), matmul_nt(x, x)));
    };
    Graph<double> gb(store, {});
    gb.tape().backward(loss_of(gb));
    const auto grads = gb.param_grads();
    const auto& gh = grads.at("h");
    for (std::size_t c = 0; c < 4; ++c) {
        CHECK(gh.at(0, c) == 0.0);
        CHECK(gh.at(1, c) == 0.0);
    }
    // Finite differences agree at the slot coordinates too (zero).
    for (std::size_t idx : {std::size_t{1}, std::size_t{6}}) {
        auto plus = store;
        plus.mutable_tensor("h")[idx] += 1e-5;
        auto minus = store;
        minus.mutable_tensor("h")[idx] -= 1e-5;
        Graph<double> gp(plus, {false, false, 0, false});
        Graph<double> gm(minus, {false, false, 0, false});
        CHECK((loss_of(gp).value().item() - loss_of(gm).value().item()) == 0.0);
    }
    auto report = grad_check(loss_of, store);
    CHECK(report.passed);
}

TEST_CASE("prompt_prepend") {
    Tape<double> tape;
    auto emb = tape.constant(Tensor<double>({3, 4}, 1.0));
    CHECK(prompt_prepend(emb, Var<double>{}, 8).value() == emb.value());
    auto prompt = tape.constant(Tensor<double>({2, 4}, 2.0));
    CHECK(prompt_prepend(emb, prompt, 8).value().shape() == Shape{5, 4});
    CHECK_THROWS_AS(prompt_prepend(emb, prompt, 4), LengthError);
}

TEST_CASE("prompt gradients reach through every layer") {
    const auto config = tiny_config(2, 8, 2);
    ModelSpec spec{config, RankerKind::twin, PromptTuning{3}, SiameseBinding{}, {}};
    auto model = RankingModel<double>::create(spec, init_encoder<double>(config, 2), 5);
    std::mt19937_64 rng(3);
    const auto q = random_text(rng, 3, config.vocab_size());
    const auto d = random_text(rng, 6, config.vocab_size());
    // Only the prompt is checked here.
    for (const auto& name : model.params().names()) {
        model.params().set_trainable(name, name == prompt_name);
    }
    Graph<double> g(model.params(), {});
    g.tape().backward(model.score(g, q, d));
    double norm = 0;
    for (double v : g.param_grads().at(prompt_name).values()) {
        norm += v * v;
    }
    CHECK(norm > 0.0);
    auto report = grad_check([&](Graph<double>& gg) { return model.score(gg, q, d); }, model.params(),
                             {1e-5, 1e-5, 24, 1});
    CHECK(report.passed);
}

TEST_CASE("lora merge") {
    std::mt19937_64 rng(8);
    const auto w0 = normal_tensor<double>({4, 4}, 1.0, rng);
    const auto a = normal_tensor<double>({2, 4}, 1.0, rng);
    CHECK(lora_merged_weight(w0, a, Tensor<double>({4, 2}), 2.0) == w0);
    CHECK_THROWS_AS(lora_merged_weight(w0, a, Tensor<double>({3, 2}), 2.0), DimensionError);

    ParamStore<double> store;
    store.add("w", w0);
    store.add("l.A", a);
    store.add("l.B", normal_tensor<double>({4, 2}, 1.0, rng));
    lora_merge(store, "w", "l", 0.5);
    const auto once = store.get("w");
    CHECK_FALSE(once == w0);
    for (double v : store.get("l.B").values()) {
        CHECK(v == 0.0);
    }
    lora_merge(store, "w", "l", 0.5);
    CHECK(store.get("w") == once);
}

TEST_CASE("freeze plans") {
    const auto config = tiny_config(2, 8, 2);
    const auto encoder = init_encoder<float>(config, 1);
    auto names_of = [&](const LftSpec& lft, RankerKind ranker = RankerKind::colbert,
                        TowerBinding binding = SiameseBinding{}) {
        ModelSpec spec{config, ranker, lft, binding, {}};
        auto model = RankingModel<float>::create(spec, encoder, 1);
        return std::pair{build_freeze_plan(lft, model.params()), model.params().element_count()};
    };
    {
        auto [plan, total] = names_of(small_lora());
        for (const auto& n : plan.trainable) {
            CHECK((n.rfind("lora.", 0) == 0 || n.rfind("ranker.", 0) == 0));
        }
        CHECK(plan.trainable.count("lora.0.q.A") == 1);
    }
    {
        auto [plan, total] = names_of(small_prefix());
        for (const auto& n : plan.trainable) {
            CHECK((n.rfind("prefix.", 0) == 0 || n.rfind("ranker.", 0) == 0));
        }
        CHECK(plan.trainable.count(prefix_source_name) == 1);
    }
    {
        ModelSpec spec{config, RankerKind::colbert, FullFT{}, SiameseBinding{}, {}};
        auto model = RankingModel<float>::create(spec, encoder, 1);
        auto plan = build_freeze_plan(FullFT{}, model.params());
        CHECK(plan.trainable.size() == model.params().size());
        CHECK(plan.element_count(model.params()) == model.params().element_count());
    }
    {
        Hybrid h{small_prefix(), small_lora(), HybridMode::sequential, 2, 2};
        ModelSpec spec{config, RankerKind::colbert, h, SiameseBinding{}, {}};
        auto model = RankingModel<float>::create(spec, encoder, 1);
        auto first = build_freeze_plan(h, model.params(), HybridPhase::first);
        auto second = build_freeze_plan(h, model.params(), HybridPhase::second);
        CHECK(first.trainable.count("lora.0.q.A") == 0);
        CHECK(first.trainable.count(prefix_source_name) == 1);
        CHECK(second.trainable.count("lora.0.q.A") == 1);
        CHECK(second.trainable.count(prefix_source_name) == 0);
    }
}

TEST_CASE("hybrid stage schedule") {
    Hybrid h{PrefixTuning{}, LoraTuning{}, HybridMode::sequential, 30, 10};
    auto s5 = hybrid_stage(h, 5);
    CHECK(s5.stage == 1);
    CHECK(s5.first_active);
    CHECK_FALSE(s5.second_active);
    auto s30 = hybrid_stage(h, 30);
    CHECK(s30.stage == 2);
    CHECK(s30.boundary);
    CHECK_FALSE(s30.first_active);
    CHECK(s30.second_active);
    CHECK_FALSE(hybrid_stage(h, 31).boundary);
    CHECK_THROWS_AS(hybrid_stage(h, 40), ScheduleError);
    h.mode = HybridMode::concurrent;
    for (std::size_t e : {0u, 17u, 39u}) {
        auto s = hybrid_stage(h, e);
        CHECK(s.first_active);
        CHECK(s.second_active);
    }
}

TEST_CASE("spec validation") {
    const auto config = tiny_config(2, 8, 2);
    CHECK_THROWS_AS(validate_spec(LoraTuning{8}, config), ConfigError);
    CHECK_THROWS_AS(validate_spec(LoraTuning{0}, config), ConfigError);
    CHECK_THROWS_AS(validate_spec(PrefixTuning{0, 4, 4}, config), ConfigError);
    CHECK_THROWS_AS(validate_spec(Hybrid{PromptTuning{2}, small_prefix(), HybridMode::sequential, 1, 1}, config),
                    ConfigError);
    CHECK_THROWS_AS(validate_spec(Hybrid{small_lora(), small_lora(true), HybridMode::sequential, 1, 1}, config),
                    ConfigError);
    CHECK_NOTHROW(validate_spec(Hybrid{small_prefix(), small_lora(), HybridMode::sequential, 1, 1}, config));
}

TEST_CASE("trainable-parameter goldens") {
    const auto bert = EncoderConfig::bert_base_like();
    const auto retained = CountConvention::retained;
    const auto optimizer = CountConvention::optimizer;
    CHECK(count_trainable(PromptTuning{10}, bert, optimizer) == 7680);
    CHECK(format_count(7680) == "8K");
    CHECK(count_trainable(PrefixTuning{}, bert, retained) == 99840);
    CHECK(format_count(99840) == "0.1M");
    CHECK(count_trainable(LoraTuning{}, bert, optimizer) == 589824);
    CHECK(format_count(589824) == "0.6M");
    LoraTuning plus;
    plus.plus = true;
    CHECK(count_trainable(plus, bert, optimizer) == 884736);
    CHECK(format_count(884736) == "0.9M");
    CHECK(count_trainable(Hybrid{PrefixTuning{}, LoraTuning{}}, bert, retained) == 689664);
    CHECK(format_count(689664) == "0.7M");
    CHECK(format_count(984576) == "1M");
    CHECK(format_count(299520) == "0.3M");
    CHECK(format_count(42) == "0.04K");
}

TEST_CASE("optimizer count equals freeze-plan enumeration") {
    const auto config = tiny_config(2, 8, 2);
    const auto encoder = init_encoder<float>(config, 1);
    struct Case {
        LftSpec lft;
        TowerBinding binding;
    };
    const std::vector<Case> cases{
        {FullFT{}, SiameseBinding{}},
        {PromptTuning{3}, SiameseBinding{}},
        {small_prefix(), SiameseBinding{}},
        {small_lora(), SiameseBinding{}},
        {small_lora(true), SiameseBinding{}},
        {Hybrid{small_prefix(), small_lora()}, SiameseBinding{}},
        {Hybrid{small_lora(), PromptTuning{2}, HybridMode::concurrent}, SiameseBinding{}},
        {small_prefix(), SemiSiameseBinding{PrefixSharing::average, LoraSharing::off}},
        {small_prefix(), SemiSiameseBinding{PrefixSharing::concat, LoraSharing::off, 2}},
        {small_prefix(), SemiSiameseBinding{PrefixSharing::none, LoraSharing::off}},
        {small_lora(), SemiSiameseBinding{PrefixSharing::off, LoraSharing::shared_q}},
        {small_lora(true), SemiSiameseBinding{PrefixSharing::off, LoraSharing::shared_v}},
        {small_lora(), SemiSiameseBinding{PrefixSharing::off, LoraSharing::hetero_both}},
        {Hybrid{small_prefix(), small_lora()}, SemiSiameseBinding{PrefixSharing::off, LoraSharing::shared_q}},
        {FullFT{}, HeteroFullBinding{}},
    };
    for (const auto& c : cases) {
        ModelSpec spec{config, RankerKind::twin, c.lft, c.binding, {}};
        auto model = RankingModel<float>::create(spec, encoder, 4);
        const auto plan = build_freeze_plan(c.lft, model.params());
        CAPTURE(spec.describe());
        CHECK(count_trainable(c.lft, c.binding, config, CountConvention::optimizer) ==
              plan.element_count(model.params(), false));
    }
}

TEST_CASE("merged LoRA models") {
    const auto config = tiny_config(2, 8, 2);
    const auto encoder = init_encoder<double>(config, 4);
    std::mt19937_64 rng(12);
    const auto q = random_text(rng, 3, 40);
    const auto d = random_text(rng, 7, 40);
    for (const LftSpec& lft : {LftSpec{small_lora()}, LftSpec{small_lora(true)},
                               LftSpec{Hybrid{small_prefix(), small_lora(), HybridMode::concurrent, 1, 1}}}) {
        CAPTURE(describe(lft));
        for (RankerKind ranker : {RankerKind::mono, RankerKind::colbert}) {
            const TowerBinding binding = ranker == RankerKind::mono ? TowerBinding{CrossBinding{}}
                                                                    : TowerBinding{SiameseBinding{}};
            auto model = RankingModel<double>::create({config, ranker, lft, binding, {}}, encoder, 2);
            perturb(model.params(), "lora.", 0.3, 9);
            const auto merged = merge_lora(model);
            CHECK(lora_of(merged.spec().lft) == nullptr);
            CHECK((prefix_of(merged.spec().lft) != nullptr) == (prefix_of(lft) != nullptr));
            for (const auto& name : merged.params().names()) {
                CHECK(name.rfind("lora.", 0) != 0);
            }
            CHECK(merged.score(q, d) == doctest::Approx(model.score(q, d)).epsilon(1e-12));
            CHECK_FALSE(merged.params().get("layer.0.attn.wq.weight") == model.params().get("layer.0.attn.wq.weight"));
        }
    }
    auto plain = RankingModel<double>::create({config, RankerKind::colbert, small_prefix(), SiameseBinding{}, {}},
                                              encoder, 2);
    CHECK_THROWS_AS(merge_lora(plain), ContractError);
    auto split = RankingModel<double>::create(
        {config, RankerKind::colbert, small_lora(), SemiSiameseBinding{PrefixSharing::off, LoraSharing::shared_q, 5}, {}},
        encoder, 2);
    CHECK_THROWS_AS(merge_lora(split), ContractError);
}
