// Copyright (c) 2026 The lftrank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <vector>

#include "lftrank/corpus.hpp"
#include "lftrank/train.hpp"

namespace lftrank {

/// A corpus with every text mapped to token ids.
struct PreparedCorpus {
    DocTable docs;
    std::map<std::string, TokenIds> queries;
    std::map<std::string, std::vector<std::string>> candidates;
    std::map<std::string, std::vector<TokenTriplet>> triplets;  // by qid
    Qrels qrels;
};

/// Throws DataError for triplets whose query text matches no query.
PreparedCorpus prepare_corpus(const Corpus& corpus, const Vocab& vocab);

struct FoldData {
    std::vector<TokenTriplet> train;
    std::vector<RerankQuery> val;
    std::vector<RerankQuery> test;
    Qrels qrels;
};

FoldData fold_data(const PreparedCorpus& data, const FoldRotation& rotation);

std::vector<RerankQuery> rerank_queries(const PreparedCorpus& data, const std::vector<std::string>& qids);

/// Document texts for masked-token pre-training.
std::vector<TokenIds> pretraining_texts(const PreparedCorpus& data);

}  // namespace lftrank
