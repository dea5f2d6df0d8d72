// Copyright (c) 2026 The lftrank Authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"
#include "lftrank/config.hpp"

using namespace lftrank;

TEST_CASE("config parsing") {
    const auto c = ExperimentConfig::parse("# LoRA run\nmodel = colbert\n\nlft.method=lora  # rank 16\n", "lora.cfg");
    CHECK(c.get("model") == "colbert");
    CHECK(c.get("lft.method") == "lora");
    CHECK(c.get_size("lft.lora_rank") == 16);
    CHECK(c.get("binding") == "siamese");

    CHECK_THROWS_WITH_AS(ExperimentConfig::parse("model = twin\nmodle = twin\n", "x.cfg"),
                         doctest::Contains("x.cfg:2: unknown key 'modle'"), ConfigError);
    CHECK_THROWS_WITH_AS(ExperimentConfig::parse("model = twin\nmodel = mono\n", "x.cfg"),
                         doctest::Contains("duplicate key 'model'"), ConfigError);
    CHECK_THROWS_WITH_AS(ExperimentConfig::parse("just words\n", "x.cfg"), doctest::Contains("x.cfg:1"),
                         ConfigError);

    auto over = c;
    over.set("lft.lora_rank=8");
    CHECK(over.get_size("lft.lora_rank") == 8);
    CHECK_THROWS_AS(over.set("nope=1"), ConfigError);
    over.set("lft.lora_rank=eight");
    CHECK_THROWS_WITH_AS(over.get_size("lft.lora_rank"), doctest::Contains("lft.lora_rank"), ConfigError);
}

TEST_CASE("missing keys are reported together") {
    const auto empty = ExperimentConfig::parse("", "empty.cfg");
    try {
        empty.require({"model", "lft.method", "paths.data", "seed"});
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("model") != std::string::npos);
        CHECK(msg.find("lft.method") != std::string::npos);
        CHECK(msg.find("paths.data") != std::string::npos);
        CHECK(msg.find("seed") == std::string::npos);
    }
    CHECK_THROWS_AS(model_spec_from(empty), ConfigError);
}

TEST_CASE("specs from config") {
    auto c = ExperimentConfig::parse("model = colbert\nlft.method = lora\nencoder.preset = bert_base\n", "c");
    auto spec = model_spec_from(c);
    CHECK(count_trainable(spec.lft, spec.binding, spec.encoder, CountConvention::retained) == 589824);

    c.set("lft.method=hybrid");
    c.set("binding=semi_siamese");
    c.set("ss.lora=shared_q");
    spec = model_spec_from(c);
    CHECK(count_trainable(spec.lft, spec.binding, spec.encoder, CountConvention::retained) == 984576);
    CHECK(std::get<Hybrid>(spec.lft).m_epochs == 30);

    c.set("model=mono");
    CHECK_THROWS_AS(model_spec_from(c), ConfigError);
    c.set("binding=cross");
    c.set("lft.method=prompt");
    spec = model_spec_from(c);
    CHECK(std::holds_alternative<PromptTuning>(spec.lft));

    c.set("lft.method=adapters");
    CHECK_THROWS_WITH_AS(model_spec_from(c), doctest::Contains("lft.method"), ConfigError);

    const auto t = train_config_from(c);
    CHECK(t.batch_size == 16);
    CHECK(t.learning_rates.at("encoder") == 2e-5);
    c.set("train.lr_lora=0");
    CHECK_THROWS_AS(train_config_from(c), ConfigError);

    const auto corpus = corpus_config_from(c);
    CHECK(corpus.n_docs == 200);
    CHECK(corpus.seed == 7);
    c.set("corpus.regime=medium");
    CHECK_THROWS_WITH_AS(corpus_config_from(c), doctest::Contains("corpus.regime"), ConfigError);
}
