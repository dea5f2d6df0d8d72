// Copyright (c) 2026 The lftrank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "lftrank/encoder.hpp"
#include "lftrank/metrics.hpp"

namespace lftrank {

enum class QueryRegime { short_queries, long_queries };

const char* to_string(QueryRegime regime);

struct SyntheticCorpusConfig {
    std::size_t n_topics = 5;
    std::size_t n_docs = 200;
    std::size_t n_queries = 40;
    std::size_t candidates_per_query = 20;
    QueryRegime regime = QueryRegime::short_queries;
    double doc_length_mean = 40.0;
    double doc_length_spread = 8.0;
    // Distinct content words, shared background words included.
    std::size_t vocab_size = 600;
    std::size_t triplets_per_query = 12;
    // Off-topic words come from the document's secondary topic with this
    // probability, otherwise from the shared background.
    double secondary_share = 0.6;
    // Fraction of negative candidates drawn from documents whose secondary
    // topic is the query's topic.
    double hard_negative_share = 0.5;
    // Queries draw from this most frequent fraction of their topic's words
    // (at least 4 words).
    double query_core_share = 0.3;
    // Probability that a document's topic word is drawn from the whole topic
    // list; otherwise it avoids the core words that queries use.
    double lexical_overlap = 1.0;
    std::uint64_t seed = 7;

    /// Throws ConfigError naming the offending field.
    void validate() const;
};

struct Document {
    std::string docid;
    std::string text;
};

struct Query {
    std::string qid;
    std::string text;
};

struct Triplet {
    std::string query;  // query text
    std::string pos;
    std::string neg;
};

struct Candidates {
    std::string qid;
    std::vector<std::string> docids;
};

struct Corpus {
    std::vector<Document> documents;
    std::vector<Query> queries;
    Qrels qrels;
    std::vector<Triplet> triplets;
    std::vector<Candidates> candidates;
};

/// Topic-clustered synthetic corpus. Documents draw mostly from one topic
/// cluster; relevance is 2 for high-purity and 1 for low-purity documents of
/// the query's topic. Negatives prefer documents whose off-topic words come
/// from the query's topic.
Corpus generate_corpus(const SyntheticCorpusConfig& config);

/// Lowercased words, split on whitespace and ASCII punctuation.
std::vector<std::string> split_words(const std::string& text);

class Vocab {
public:
    Vocab();

    /// Assigns the next id; existing words keep theirs.
    std::int32_t add(const std::string& word);
    std::int32_t id(const std::string& word) const;  // [UNK] when absent
    const std::string& token(std::int32_t id) const;
    bool contains(const std::string& word) const { return ids_.count(word) != 0; }
    std::size_t size() const { return tokens_.size(); }
    const std::vector<std::string>& tokens() const { return tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::int32_t> ids_;
};

/// The `size − 5` most frequent words of documents and queries (ties
/// lexicographic) after the reserved tokens.
Vocab build_vocab(const Corpus& corpus, std::size_t size);

TokenIds encode_text(const std::string& text, const Vocab& vocab);
std::string decode_text(const TokenIds& ids, const Vocab& vocab);

/// [CLS] words [SEP], truncated to capacity.
TokenSequence tokenize(const std::string& text, const Vocab& vocab, std::size_t capacity);

/// Mean word count over the queries.
double mean_query_length(const Corpus& corpus);

}  // namespace lftrank
