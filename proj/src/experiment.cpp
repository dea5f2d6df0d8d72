// Copyright (c) 2026 The lftrank Authors
// SPDX-License-Identifier: Apache-2.0

#include "lftrank/experiment.hpp"

namespace lftrank {

PreparedCorpus prepare_corpus(const Corpus& corpus, const Vocab& vocab) {
    PreparedCorpus out;
    for (const auto& d : corpus.documents) {
        out.docs.emplace(d.docid, encode_text(d.text, vocab));
    }
    std::map<std::string, std::string> qid_by_text;
    for (const auto& q : corpus.queries) {
        out.queries.emplace(q.qid, encode_text(q.text, vocab));
        if (!qid_by_text.emplace(q.text, q.qid).second) {
            throw DataError("queries '" + qid_by_text[q.text] + "' and '" + q.qid + "' share the text '" + q.text +
                            "'; triplets cannot be assigned to folds");
        }
    }
    for (const auto& c : corpus.candidates) {
        if (out.queries.count(c.qid) == 0) {
            throw DataError("candidates for unknown query '" + c.qid + "'");
        }
        out.candidates[c.qid] = c.docids;
    }
    for (const auto& t : corpus.triplets) {
        auto it = qid_by_text.find(t.query);
        if (it == qid_by_text.end()) {
            throw DataError("triplet query '" + t.query + "' matches no query text");
        }
        out.triplets[it->second].push_back({encode_text(t.query, vocab), t.pos, t.neg});
    }
    out.qrels = corpus.qrels;
    return out;
}

std::vector<RerankQuery> rerank_queries(const PreparedCorpus& data, const std::vector<std::string>& qids) {
    std::vector<RerankQuery> out;
    for (const auto& qid : qids) {
        auto q = data.queries.find(qid);
        if (q == data.queries.end()) {
            throw DataError("unknown query '" + qid + "'");
        }
        auto c = data.candidates.find(qid);
        out.push_back({qid, q->second, c == data.candidates.end() ? std::vector<std::string>{} : c->second});
    }
    return out;
}

FoldData fold_data(const PreparedCorpus& data, const FoldRotation& rotation) {
    FoldData out;
    for (const auto& qid : rotation.train) {
        if (auto it = data.triplets.find(qid); it != data.triplets.end()) {
            out.train.insert(out.train.end(), it->second.begin(), it->second.end());
        }
    }
    out.val = rerank_queries(data, rotation.val);
    out.test = rerank_queries(data, rotation.test);
    out.qrels = data.qrels;
    return out;
}

std::vector<TokenIds> pretraining_texts(const PreparedCorpus& data) {
    std::vector<TokenIds> out;
    out.reserve(data.docs.size());
    for (const auto& [_, ids] : data.docs) {
        out.push_back(ids);
    }
    return out;
}

}  // namespace lftrank
