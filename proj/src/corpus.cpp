// Copyright (c) 2026 The lftrank Authors
// SPDX-License-Identifier: Apache-2.0

#include "lftrank/corpus.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <set>

namespace lftrank {

namespace {

constexpr std::array<const char*, 20> function_words{"the",   "of",   "what", "when", "how",  "does", "is",
                                                     "a",     "to",   "in",   "and",  "for",  "with", "about",
                                                     "on",    "are",  "do",   "why",  "which", "that"};

constexpr double high_purity = 0.8;
constexpr double low_purity = 0.5;

// Consonant-vowel pseudo-words; distinct indices give distinct words.
std::string make_word(std::size_t index) {
    static constexpr std::string_view consonants = "bdfgklmnprstvz";
    static constexpr std::string_view vowels = "aeiou";
    const std::size_t syllables = consonants.size() * vowels.size();
    std::string out;
    std::size_t n = index;
    std::size_t count = 0;
    do {
        const std::size_t s = n % syllables;
        out += consonants[s / vowels.size()];
        out += vowels[s % vowels.size()];
        n /= syllables;
        ++count;
    } while (n > 0 || count < 2);
    return out;
}

double draw_normal(std::mt19937_64& rng) {
    const double u1 = std::max(draw_unit(rng), 0x1.0p-53);
    const double u2 = draw_unit(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t draw_weighted(std::mt19937_64& rng, const std::vector<double>& cumulative) {
    const double u = draw_unit(rng) * cumulative.back();
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    return std::min(static_cast<std::size_t>(it - cumulative.begin()), cumulative.size() - 1);
}

std::vector<double> zipf_cumulative(std::size_t n) {
    std::vector<double> out(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        total += 1.0 / static_cast<double>(i + 1);
        out[i] = total;
    }
    return out;
}

std::string join(const std::vector<std::string>& words) {
    std::string out;
    for (const auto& w : words) {
        if (!out.empty()) {
            out += ' ';
        }
        out += w;
    }
    return out;
}

std::string padded_id(char prefix, std::size_t index, std::size_t total) {
    const int width = static_cast<int>(std::to_string(total).size());
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%c%0*zu", prefix, width, index + 1);
    return buf;
}

struct DocMeta {
    std::size_t topic = 0;
    std::size_t secondary = 0;
    int grade = 1;
};

template <typename V>
std::vector<typename V::value_type> sample_without_replacement(const V& pool, std::size_t n, std::mt19937_64& rng) {
    std::vector<typename V::value_type> items(pool.begin(), pool.end());
    portable_shuffle(items, rng);
    items.resize(std::min(n, items.size()));
    return items;
}

}  // namespace

const char* to_string(QueryRegime regime) { return regime == QueryRegime::short_queries ? "short" : "long"; }

void SyntheticCorpusConfig::validate() const {
    if (n_topics < 2) {
        throw ConfigError("corpus.topics must be at least 2");
    }
    if (n_docs < 2 * n_topics) {
        throw ConfigError("corpus.docs must be at least twice corpus.topics");
    }
    if (n_queries == 0) {
        throw ConfigError("corpus.queries must be positive");
    }
    if (candidates_per_query < 2) {
        throw ConfigError("corpus.candidates must be at least 2");
    }
    if (!(doc_length_mean >= 4.0) || !(doc_length_spread >= 0.0)) {
        throw ConfigError("corpus.doc_length must be at least 4 with a non-negative spread");
    }
    if (vocab_size < 5 * 10 || (vocab_size - vocab_size / 5) / n_topics < 10) {
        throw ConfigError("corpus.vocab of " + std::to_string(vocab_size) + " words is too small for " +
                          std::to_string(n_topics) + " topics (need 10 words per topic plus background)");
    }
    if (!(secondary_share >= 0.0 && secondary_share <= 1.0)) {
        throw ConfigError("corpus.secondary_share must lie in [0, 1]");
    }
    if (!(hard_negative_share >= 0.0 && hard_negative_share <= 1.0)) {
        throw ConfigError("corpus.hard_negatives must lie in [0, 1]");
    }
    if (!(query_core_share > 0.0 && query_core_share < 1.0)) {
        throw ConfigError("corpus.query_core must lie in (0, 1)");
    }
    if (!(lexical_overlap >= 0.0 && lexical_overlap <= 1.0)) {
        throw ConfigError("corpus.lexical_overlap must lie in [0, 1]");
    }
    if (triplets_per_query == 0) {
        throw ConfigError("corpus.triplets_per_query must be positive");
    }
}

Corpus generate_corpus(const SyntheticCorpusConfig& config) {
    config.validate();
    const std::size_t background = config.vocab_size / 5;
    const std::size_t per_topic = (config.vocab_size - background) / config.n_topics;

    std::vector<std::vector<std::string>> topic_words(config.n_topics);
    std::size_t next = 0;
    for (auto& words : topic_words) {
        for (std::size_t i = 0; i < per_topic; ++i) {
            words.push_back(make_word(next++));
        }
    }
    std::vector<std::string> background_words;
    for (std::size_t i = 0; i < background; ++i) {
        background_words.push_back(make_word(next++));
    }
    auto rng = named_rng(config.seed, "corpus");
    const auto topic_cdf = zipf_cumulative(per_topic);
    const std::size_t core = std::max<std::size_t>(4, static_cast<std::size_t>(config.query_core_share * static_cast<double>(per_topic)));
    const auto core_cdf = zipf_cumulative(core);
    const auto tail_cdf = zipf_cumulative(per_topic - core);
    auto topic_word = [&](std::size_t topic) -> const std::string& {
        if (draw_unit(rng) < config.lexical_overlap) {
            return topic_words[topic][draw_weighted(rng, topic_cdf)];
        }
        return topic_words[topic][core + draw_weighted(rng, tail_cdf)];
    };

    Corpus corpus;

    std::vector<DocMeta> meta(config.n_docs);
    std::vector<std::vector<std::size_t>> docs_by_topic(config.n_topics);
    for (std::size_t j = 0; j < config.n_docs; ++j) {
        DocMeta& m = meta[j];
        m.topic = j % config.n_topics;
        m.secondary = (m.topic + 1 + draw_index(rng, config.n_topics - 1)) % config.n_topics;
        m.grade = draw_unit(rng) < 0.5 ? 2 : 1;
        docs_by_topic[m.topic].push_back(j);
        const double purity = m.grade == 2 ? high_purity : low_purity;
        const double len_draw = config.doc_length_mean + config.doc_length_spread * draw_normal(rng);
        const auto len = static_cast<std::size_t>(std::max(4.0, std::round(len_draw)));
        std::vector<std::string> words;
        for (std::size_t w = 0; w < len; ++w) {
            const double u = draw_unit(rng);
            if (u < purity) {
                words.push_back(topic_word(m.topic));
            } else if (draw_unit(rng) < config.secondary_share) {
                words.push_back(topic_word(m.secondary));
            } else {
                words.push_back(background_words[draw_index(rng, background_words.size())]);
            }
        }
        corpus.documents.push_back({padded_id('d', j, config.n_docs), join(words)});
    }

    std::set<std::string> seen_queries;
    std::vector<std::size_t> query_topic;
    for (std::size_t i = 0; i < config.n_queries; ++i) {
        const std::size_t topic = i % config.n_topics;
        std::string text;
        for (int attempt = 0;; ++attempt) {
            if (attempt == 1000) {
                throw ConfigError("corpus.vocab is too small to draw " + std::to_string(config.n_queries) +
                                  " distinct queries");
            }
            std::size_t content = 0;
            std::size_t filler = 0;
            const double u = draw_unit(rng);
            if (config.regime == QueryRegime::short_queries) {
                content = u < 0.1 ? 1 : u < 0.5 ? 2 : u < 0.9 ? 3 : 4;
            } else {
                content = u < 0.3 ? 2 : u < 0.7 ? 3 : 4;
                filler = 1 + draw_index(rng, 5);
            }
            std::vector<std::string> words;
            std::set<std::size_t> used;
            while (words.size() < content) {
                const std::size_t w = draw_weighted(rng, core_cdf);
                if (used.insert(w).second) {
                    words.push_back(topic_words[topic][w]);
                }
            }
            for (std::size_t f = 0; f < filler; ++f) {
                const auto pos = static_cast<std::ptrdiff_t>(draw_index(rng, words.size() + 1));
                words.insert(words.begin() + pos, function_words[draw_index(rng, function_words.size())]);
            }
            text = join(words);
            if (seen_queries.insert(text).second) {
                break;
            }
        }
        corpus.queries.push_back({padded_id('q', i, config.n_queries), text});
        query_topic.push_back(topic);
    }

    for (std::size_t i = 0; i < config.n_queries; ++i) {
        const std::size_t topic = query_topic[i];
        const std::string& qid = corpus.queries[i].qid;
        const std::size_t n_rel = std::min((config.candidates_per_query + 1) / 2, docs_by_topic[topic].size());
        const std::size_t n_neg = config.candidates_per_query - n_rel;
        const auto relevant = sample_without_replacement(docs_by_topic[topic], n_rel, rng);

        std::vector<std::size_t> hard;
        std::vector<std::size_t> easy;
        for (std::size_t j = 0; j < config.n_docs; ++j) {
            if (meta[j].topic != topic) {
                (meta[j].secondary == topic ? hard : easy).push_back(j);
            }
        }
        const auto n_hard = static_cast<std::size_t>(std::llround(config.hard_negative_share * static_cast<double>(n_neg)));
        auto negatives = sample_without_replacement(hard, n_hard, rng);
        for (std::size_t j : sample_without_replacement(easy, n_neg - negatives.size(), rng)) {
            negatives.push_back(j);
        }
        if (negatives.size() < n_neg) {
            std::set<std::size_t> taken(negatives.begin(), negatives.end());
            for (std::size_t j : hard) {
                if (negatives.size() < n_neg && taken.insert(j).second) {
                    negatives.push_back(j);
                }
            }
        }

        Candidates cands{qid, {}};
        for (std::size_t j : relevant) {
            cands.docids.push_back(corpus.documents[j].docid);
            corpus.qrels[qid][corpus.documents[j].docid] = meta[j].grade;
        }
        for (std::size_t j : negatives) {
            cands.docids.push_back(corpus.documents[j].docid);
            corpus.qrels[qid][corpus.documents[j].docid] = 0;
        }
        std::sort(cands.docids.begin(), cands.docids.end());
        corpus.candidates.push_back(std::move(cands));

        for (std::size_t t = 0; t < config.triplets_per_query; ++t) {
            const std::size_t pos = relevant[draw_index(rng, relevant.size())];
            const std::size_t neg = negatives[draw_index(rng, negatives.size())];
            corpus.triplets.push_back(
                {corpus.queries[i].text, corpus.documents[pos].docid, corpus.documents[neg].docid});
        }
    }
    return corpus;
}

std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> out;
    std::string current;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isspace(c) != 0 || std::ispunct(c) != 0) {
            if (!current.empty()) {
                out.push_back(std::move(current));
                current.clear();
            }
        } else {
            current += static_cast<char>(std::tolower(c));
        }
    }
    if (!current.empty()) {
        out.push_back(std::move(current));
    }
    return out;
}

Vocab::Vocab() {
    for (const char* t : {"[PAD]", "[CLS]", "[SEP]", "[MASK]", "[UNK]"}) {
        add(t);
    }
}

std::int32_t Vocab::add(const std::string& word) {
    auto it = ids_.find(word);
    if (it != ids_.end()) {
        return it->second;
    }
    const auto id = static_cast<std::int32_t>(tokens_.size());
    tokens_.push_back(word);
    ids_.emplace(word, id);
    return id;
}

std::int32_t Vocab::id(const std::string& word) const {
    auto it = ids_.find(word);
    return it == ids_.end() ? token::unk : it->second;
}

const std::string& Vocab::token(std::int32_t id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
        throw DataError("token id " + std::to_string(id) + " is outside the vocabulary of " +
                        std::to_string(tokens_.size()));
    }
    return tokens_[static_cast<std::size_t>(id)];
}

Vocab build_vocab(const Corpus& corpus, std::size_t size) {
    if (size <= static_cast<std::size_t>(token::first_free)) {
        throw ConfigError("vocabulary size must exceed the " + std::to_string(token::first_free) + " reserved tokens");
    }
    std::map<std::string, std::size_t> counts;
    for (const auto& d : corpus.documents) {
        for (auto& w : split_words(d.text)) {
            ++counts[w];
        }
    }
    for (const auto& q : corpus.queries) {
        for (auto& w : split_words(q.text)) {
            ++counts[w];
        }
    }
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    Vocab vocab;
    for (const auto& [word, _] : ranked) {
        if (vocab.size() == size) {
            break;
        }
        vocab.add(word);
    }
    return vocab;
}

TokenIds encode_text(const std::string& text, const Vocab& vocab) {
    TokenIds out;
    for (const auto& w : split_words(text)) {
        out.push_back(vocab.id(w));
    }
    return out;
}

std::string decode_text(const TokenIds& ids, const Vocab& vocab) {
    std::vector<std::string> words;
    for (auto id : ids) {
        words.push_back(vocab.token(id));
    }
    return join(words);
}

TokenSequence tokenize(const std::string& text, const Vocab& vocab, std::size_t capacity) {
    return single_sequence(encode_text(text, vocab), capacity);
}

double mean_query_length(const Corpus& corpus) {
    if (corpus.queries.empty()) {
        return 0.0;
    }
    std::size_t total = 0;
    for (const auto& q : corpus.queries) {
        total += split_words(q.text).size();
    }
    return static_cast<double>(total) / static_cast<double>(corpus.queries.size());
}

}  // namespace lftrank
