// Copyright (c) 2026 The lftrank Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "helpers.hpp"
#include "lftrank/checkpoint.hpp"

using namespace lftrank;
using lftrank::testing::random_text;
using lftrank::testing::sin_block;
using lftrank::testing::tiny_config;

namespace {

std::vector<Tensor<double>> run_encoder(const ParamStore<double>& store, const EncoderConfig& config,
                                        const TokenSequence& seq) {
    auto g = Graph<double>::inference(store);
    std::vector<Tensor<double>> out;
    for (auto v : encode(g, config, seq, AdapterHooks<double>{})) {
        out.push_back(v.value());
    }
    return out;
}

ParamStore<double> attention_params(std::size_t d, const std::vector<Tensor<double>>& w) {
    // w: wq, bq, wk, bk, wv, bv, wd, bd, gain, bias
    ParamStore<double> store;
    const char* names[] = {"attn.wq.weight", "attn.wq.bias", "attn.wk.weight", "attn.wk.bias",   "attn.wv.weight",
                           "attn.wv.bias",   "attn.dense.weight", "attn.dense.bias", "ln1.gain", "ln1.bias"};
    for (std::size_t i = 0; i < 10; ++i) {
        Tensor<double> t = w[i];
        const bool vec = i % 2 == 1 || i >= 8;
        store.add(layer_param("", 0, names[i]), Tensor<double>(vec ? Shape{d} : Shape{d, d}, t.values()));
    }
    return store;
}

}  // namespace

TEST_CASE("encoder config validation") {
    EncoderConfig::Dims dims;
    dims.model_dim = 10;
    dims.heads = 3;
    CHECK_THROWS_AS(EncoderConfig{dims}, ConfigError);
    dims.heads = 2;
    dims.layers = 0;
    CHECK_THROWS_AS(EncoderConfig{dims}, ConfigError);
}

TEST_CASE("encode shape and determinism") {
    const auto config = tiny_config(2, 8, 2);
    const auto store = init_encoder<double>(config, 1);
    std::mt19937_64 rng(2);
    const auto seq = single_sequence(random_text(rng, 5, config.vocab_size()), config.max_seq_len());
    const auto a = run_encoder(store, config, seq);
    REQUIRE(a.size() == 3);
    for (const auto& layer : a) {
        CHECK(layer.shape() == Shape{7, 8});
    }
    CHECK(a == run_encoder(store, config, seq));

    const auto too_long = single_sequence(random_text(rng, 200, config.vocab_size()), 400);
    CHECK_THROWS_AS(run_encoder(store, config, too_long), LengthError);
}

TEST_CASE("pad extension leaves real positions unchanged") {
    const auto config = tiny_config(2, 8, 2);
    const auto store = init_encoder<double>(config, 4);
    std::mt19937_64 rng(5);
    const auto seq = single_sequence(random_text(rng, 6, config.vocab_size()), config.max_seq_len());
    const auto base = run_encoder(store, config, seq);
    const auto padded = run_encoder(store, config, seq.padded_to(seq.length() + 7));
    double worst = 0;
    for (std::size_t l = 0; l < base.size(); ++l) {
        for (std::size_t i = 0; i < base[l].numel(); ++i) {
            worst = std::max(worst, std::abs(base[l][i] - padded[l][i]));
        }
    }
    CHECK(worst < 1e-6);

    TokenSequence holes = seq;
    holes.mask[2] = 0;
    CHECK_THROWS_AS(holes.validate(), ContractError);
}

TEST_CASE("attention on a single token") {
    const auto config = tiny_config(1, 4, 2);
    const auto store = init_encoder<double>(config, 8);
    auto g = Graph<double>::inference(store);
    std::mt19937_64 rng(1);
    const auto h = normal_tensor<double>({1, 4}, 1.0, rng);
    const std::vector<std::uint8_t> mask{1};
    auto out = attention_block(g, config, "", 0, g.constant(h), std::span(mask), LayerLoraHooks<double>{});

    auto v = linear(g.constant(h), g.param("layer.0.attn.wv.weight"), g.param("layer.0.attn.wv.bias"));
    auto dense = linear(v, g.param("layer.0.attn.dense.weight"), g.param("layer.0.attn.dense.bias"));
    auto expected = layer_norm(add(g.constant(h), dense), g.param("layer.0.ln1.gain"), g.param("layer.0.ln1.bias"),
                               EncoderConfig::layer_norm_eps);
    CHECK(out.value() == expected.value());
}

TEST_CASE("attention matches hand-sized oracles") {
    EncoderConfig::Dims dims;
    dims.layers = 1;
    dims.model_dim = 2;
    dims.heads = 1;
    dims.ffn_dim = 2;
    dims.vocab_size = 8;
    dims.max_seq_len = 8;
    const EncoderConfig c2(dims);
    const auto store2 = attention_params(
        2, {Tensor<double>::matrix({{0.5, 0.0}, {0.0, 1.0}}), Tensor<double>::vector({0.0, 0.1}),
            Tensor<double>::matrix({{1.0, 0.5}, {0.0, 1.0}}), Tensor<double>::vector({0.0, 0.0}),
            Tensor<double>::matrix({{1.0, 0.0}, {1.0, 1.0}}), Tensor<double>::vector({0.2, 0.0}),
            Tensor<double>::matrix({{1.0, 0.0}, {0.0, 1.0}}), Tensor<double>::vector({0.0, 0.0}),
            Tensor<double>::vector({2.0, 0.5}), Tensor<double>::vector({0.1, -0.3})});
    const std::vector<std::uint8_t> mask2{1, 1};
    auto g2 = Graph<double>::inference(store2);
    auto out2 = attention_block(g2, c2, "", 0, g2.constant(Tensor<double>::matrix({{1.0, 2.0}, {0.5, -1.0}})),
                                std::span(mask2), LayerLoraHooks<double>{})
                    .value();
    const double expect2[] = {-1.8999999999994832, 0.19999999999987084, 2.0999999999991559, -0.79999999999978899};
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(out2[i] == doctest::Approx(expect2[i]).epsilon(1e-12));
    }

    dims.model_dim = 4;
    dims.heads = 2;
    const EncoderConfig c4(dims);
    const auto store4 = attention_params(
        4, {sin_block(4, 4, 10), sin_block(4, 0, 30), sin_block(4, 4, 40), sin_block(4, 0, 60), sin_block(4, 4, 20),
            sin_block(4, 0, 70), sin_block(4, 4, 50), sin_block(4, 0, 80), sin_block(4, 0, 85),
            sin_block(4, 0, 90)});
    // gain = 1 + 0.1·sin, bias = 0.1·sin
    ParamStore<double> adjusted = store4;
    for (auto& v : adjusted.mutable_tensor("layer.0.ln1.gain").values()) {
        v = 1.0 + 0.1 * v;
    }
    for (auto& v : adjusted.mutable_tensor("layer.0.ln1.bias").values()) {
        v = 0.1 * v;
    }
    const std::vector<std::uint8_t> mask4{1, 1, 1};
    auto g4 = Graph<double>::inference(adjusted);
    auto out4 = attention_block(g4, c4, "", 0, g4.constant(sin_block(3, 4, 0)), std::span(mask4),
                                LayerLoraHooks<double>{})
                    .value();
    const double expect4[] = {-0.59490378659245036, 0.67145874344260625,  -1.0171839907128566, 1.2351478211341254,
                              -0.10797857988559222, -0.035997938730564255, -1.0292859174868756, 1.5027805182591047,
                              -0.84818480586124723, 0.41495414456781732,  -0.70057714325197928, 1.4246977796458233};
    for (std::size_t i = 0; i < 12; ++i) {
        CHECK(out4[i] == doctest::Approx(expect4[i]).epsilon(1e-12));
    }
}

TEST_CASE("zero-B LoRA hooks are exactly neutral") {
    const auto config = tiny_config(2, 8, 2);
    ParamStore<double> store = init_encoder<double>(config, 3);
    for (std::size_t l = 0; l < config.layers(); ++l) {
        for (auto t : {LoraTarget::q, LoraTarget::v, LoraTarget::dense}) {
            add_lora_pair(store, lora_stem(l, t), 8, 8, 2, 3);
        }
    }
    std::mt19937_64 rng(6);
    const auto seq = single_sequence(random_text(rng, 5, config.vocab_size()), config.max_seq_len());
    auto g = Graph<double>::inference(store);
    AdapterHooks<double> hooks;
    hooks.lora.resize(config.layers());
    for (std::size_t l = 0; l < config.layers(); ++l) {
        auto hook = [&](LoraTarget t) {
            return LoraHook<double>{g.param(lora_stem(l, t) + ".A"), g.param(lora_stem(l, t) + ".B"), 2.0, 0.0};
        };
        hooks.lora[l] = {hook(LoraTarget::q), hook(LoraTarget::v), hook(LoraTarget::dense)};
    }
    const auto with = encode(g, config, seq, hooks).back().value();
    CHECK(with == run_encoder(store, config, seq).back());
}

TEST_CASE("lora_forward hand case") {
    ParamStore<double> store;
    Graph<double> g(store, {});
    auto x = g.constant(Tensor<double>::matrix({{3.0, 5.0}}));
    auto w0 = g.constant(Tensor<double>::matrix({{1.0, 0.0}, {0.0, 1.0}}));
    auto bias = g.constant(Tensor<double>::vector({0.0, 0.0}));
    LoraHook<double> hook{g.constant(Tensor<double>::matrix({{1.0, 0.0}})),
                          g.constant(Tensor<double>::matrix({{1.0}, {0.0}})), 1.0, 0.0};
    CHECK(lora_forward(g, x, w0, bias, &hook).value() == Tensor<double>::matrix({{6.0, 5.0}}));

    LoraHook<double> zero{hook.a, g.constant(Tensor<double>({2, 1})), 1.0, 0.0};
    CHECK(lora_forward(g, x, w0, bias, &zero).value() == lora_forward<double>(g, x, w0, bias, nullptr).value());
}

TEST_CASE("parameter counting") {
    const auto bert = EncoderConfig::bert_base_like();
    CHECK(count_parameters(bert) == 108891648);
    CHECK(format_count(count_parameters(bert)) == "110M");

    EncoderConfig::Dims dims;
    dims.layers = 1;
    dims.model_dim = 4;
    dims.heads = 2;
    dims.ffn_dim = 8;
    dims.vocab_size = 10;
    dims.max_seq_len = 16;
    const EncoderConfig small(dims);
    const auto store = init_encoder<float>(small, 0);
    CHECK(count_parameters(small) == store.element_count());
    for (const auto& name : store.names()) {
        CHECK(is_encoder_param_name(name, small));
    }
    CHECK_FALSE(is_encoder_param_name("layer.1.attn.wq.weight", small));
    CHECK_FALSE(is_encoder_param_name("lora.0.q.A", small));

    auto doubled_dims = dims;
    doubled_dims.layers = 2;
    const EncoderConfig doubled(doubled_dims);
    const std::size_t block = count_parameters(doubled) - count_parameters(small);
    CHECK(init_encoder<float>(doubled, 0).element_count() == count_parameters(doubled));
    doubled_dims.layers = 4;
    CHECK(count_parameters(EncoderConfig(doubled_dims)) == count_parameters(doubled) + 2 * block);
}

TEST_CASE("masked pre-training") {
    const auto config = tiny_config(1, 16, 2, 30, 32);
    std::mt19937_64 rng(12);
    // Two-word repeating patterns make masked tokens predictable from context.
    std::vector<TokenIds> corpus;
    for (int i = 0; i < 60; ++i) {
        const std::int32_t base = token::first_free + 2 * (i % 10);
        TokenIds doc;
        for (int k = 0; k < 6; ++k) {
            doc.push_back(base);
            doc.push_back(base + 1);
        }
        corpus.push_back(doc);
    }
    PretrainSchedule none;
    none.steps = 0;
    none.seed = 9;
    CHECK(pretrain_masked<float>(corpus, config, none).encoder.entries().size() ==
          init_encoder<float>(config, 9).size());
    const auto init = init_encoder<float>(config, 9);
    const auto zero = pretrain_masked<float>(corpus, config, none).encoder;
    for (const auto& name : init.names()) {
        CHECK(zero.get(name) == init.get(name));
    }

    PretrainSchedule schedule;
    schedule.steps = 200;
    schedule.batch_size = 4;
    schedule.learning_rate = 3e-3;
    schedule.seed = 9;
    const auto a = pretrain_masked<float>(corpus, config, schedule);
    const auto b = pretrain_masked<float>(corpus, config, schedule);
    for (const auto& name : a.encoder.names()) {
        CHECK(a.encoder.get(name) == b.encoder.get(name));
    }
    CHECK(a.encoder.size() == init.size());
    const double accuracy = masked_token_accuracy(a.encoder, a.head, config, corpus, 0.15, 77);
    MESSAGE("masked-token accuracy " << accuracy);
    CHECK(accuracy > 1.0 / static_cast<double>(config.vocab_size()));

    CHECK_THROWS_AS(pretrain_masked<float>({}, config, schedule), DataError);
}

TEST_CASE("checkpoint container") {
    const auto dir = std::filesystem::temp_directory_path() / "lftrank_ckpt_test";
    std::filesystem::create_directories(dir);
    const auto config = tiny_config(1, 8, 2);
    const auto store = init_encoder<float>(config, 21);
    const auto path = dir / "enc.lftr";
    save_checkpoint(store, path);
    const auto loaded = load_encoder_checkpoint<float>(path, config);
    CHECK(loaded.names() == store.names());
    for (const auto& name : store.names()) {
        CHECK(loaded.get(name) == store.get(name));
    }

    std::vector<std::uint8_t> bytes = encode_container({{"a", Tensor<float>::vector({1.0f, 2.0f})}});
    const auto decoded = decode_container(bytes);
    CHECK(encode_container(decoded) == bytes);

    auto corrupt = bytes;
    corrupt[0] = 'X';
    CHECK_THROWS_AS(decode_container(corrupt), FormatError);

    auto version = bytes;
    version[4] = 9;
    CHECK_THROWS_AS(decode_container(version), FormatError);

    auto truncated = bytes;
    truncated.resize(truncated.size() - 3);
    try {
        decode_container(truncated);
        FAIL("truncated container accepted");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("'a'") != std::string::npos);
    }

    std::vector<NamedTensor> with_extra;
    for (const auto& [name, e] : store.entries()) {
        with_extra.push_back({name, e.tensor});
    }
    with_extra.push_back({"mystery.tensor", Tensor<float>::vector({1.0f})});
    write_container(dir / "extra.lftr", with_extra);
    try {
        load_encoder_checkpoint<float>(dir / "extra.lftr", config);
        FAIL("unknown tensor accepted");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("mystery.tensor") != std::string::npos);
    }
    std::filesystem::remove_all(dir);
}
