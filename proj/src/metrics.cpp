// Copyright (c) 2026 The lftrank Authors
// SPDX-License-Identifier: Apache-2.0

#include "lftrank/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include <boost/math/distributions/students_t.hpp>

#include "lftrank/tensor.hpp"

namespace lftrank {

void sort_and_rank(std::vector<RunRecord>& records) {
    std::sort(records.begin(), records.end(), [](const RunRecord& a, const RunRecord& b) {
        if (a.score != b.score) {
            return a.score > b.score;
        }
        return a.docid < b.docid;
    });
    for (std::size_t i = 0; i < records.size(); ++i) {
        records[i].rank = i + 1;
    }
}

namespace {

std::map<std::string, std::vector<const RunRecord*>> by_query(const Run& run) {
    std::map<std::string, std::vector<const RunRecord*>> out;
    for (const auto& r : run) {
        out[r.qid].push_back(&r);
    }
    for (auto& [_, records] : out) {
        std::sort(records.begin(), records.end(),
                  [](const RunRecord* a, const RunRecord* b) { return a->rank < b->rank; });
    }
    return out;
}

int relevance(const Qrels& qrels, const std::string& qid, const std::string& docid) {
    auto q = qrels.find(qid);
    if (q == qrels.end()) {
        return 0;
    }
    auto d = q->second.find(docid);
    return d == q->second.end() ? 0 : d->second;
}

template <typename PerQuery>
MetricReport evaluate(const char* metric, const Run& run, const Qrels& qrels, std::size_t k, PerQuery per_query) {
    if (k == 0) {
        throw ConfigError(std::string(metric) + ": k must be at least 1");
    }
    MetricReport report;
    report.metric = metric;
    report.k = k;
    const auto grouped = by_query(run);
    for (const auto& [qid, records] : grouped) {
        report.per_query[qid] = per_query(qid, records);
    }
    for (const auto& [qid, _] : qrels) {
        if (grouped.count(qid) == 0) {
            report.skipped.push_back(qid);
        }
    }
    return report;
}

}  // namespace

void validate_run(const Run& run) {
    for (const auto& [qid, records] : by_query(run)) {
        std::set<std::string> seen;
        for (std::size_t i = 0; i < records.size(); ++i) {
            if (records[i]->rank != i + 1) {
                throw DataError("run: ranks for query '" + qid + "' are not 1.." + std::to_string(records.size()));
            }
            if (!seen.insert(records[i]->docid).second) {
                throw DataError("run: document '" + records[i]->docid + "' appears twice for query '" + qid + "'");
            }
        }
    }
}

double MetricReport::mean() const {
    if (per_query.empty()) {
        return 0.0;
    }
    double total = 0.0;
    for (const auto& [_, v] : per_query) {
        total += v;
    }
    return total / static_cast<double>(per_query.size());
}

MetricReport precision_at_k(const Run& run, const Qrels& qrels, std::size_t k) {
    return evaluate("P", run, qrels, k, [&](const std::string& qid, const std::vector<const RunRecord*>& records) {
        std::size_t hits = 0;
        for (std::size_t i = 0; i < std::min(k, records.size()); ++i) {
            hits += relevance(qrels, qid, records[i]->docid) >= 1 ? 1 : 0;
        }
        return static_cast<double>(hits) / static_cast<double>(k);
    });
}

MetricReport ndcg_at_k(const Run& run, const Qrels& qrels, std::size_t k) {
    auto gain = [](int rel) { return std::exp2(static_cast<double>(rel)) - 1.0; };
    auto discount = [](std::size_t i) { return std::log2(static_cast<double>(i) + 2.0); };
    return evaluate("nDCG", run, qrels, k, [&](const std::string& qid, const std::vector<const RunRecord*>& records) {
        double dcg = 0.0;
        for (std::size_t i = 0; i < std::min(k, records.size()); ++i) {
            dcg += gain(relevance(qrels, qid, records[i]->docid)) / discount(i);
        }
        std::vector<int> ideal;
        if (auto q = qrels.find(qid); q != qrels.end()) {
            for (const auto& [_, rel] : q->second) {
                ideal.push_back(rel);
            }
        }
        std::sort(ideal.begin(), ideal.end(), std::greater<>());
        double idcg = 0.0;
        for (std::size_t i = 0; i < std::min(k, ideal.size()); ++i) {
            idcg += gain(ideal[i]) / discount(i);
        }
        return idcg > 0.0 ? dcg / idcg : 0.0;
    });
}

TTestResult t_test_one_tailed(std::span<const double> a, std::span<const double> b) {
    if (a.size() < 2 || b.size() < 2) {
        throw DataError("t-test needs at least two observations per sample (got " + std::to_string(a.size()) +
                        " and " + std::to_string(b.size()) + ")");
    }
    auto mean = [](std::span<const double> x) {
        return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
    };
    auto sum_sq = [](std::span<const double> x, double m) {
        double s = 0.0;
        for (double v : x) {
            s += (v - m) * (v - m);
        }
        return s;
    };
    const double ma = mean(a);
    const double mb = mean(b);
    TTestResult out;
    out.df = a.size() + b.size() - 2;
    const double pooled = (sum_sq(a, ma) + sum_sq(b, mb)) / static_cast<double>(out.df);
    if (pooled == 0.0) {
        out.t = 0.0;
        out.p = ma == mb ? 0.5 : (ma > mb ? 0.0 : 1.0);
        if (ma != mb) {
            out.t = ma > mb ? INFINITY : -INFINITY;
        }
        return out;
    }
    const double se = std::sqrt(pooled * (1.0 / static_cast<double>(a.size()) + 1.0 / static_cast<double>(b.size())));
    out.t = (ma - mb) / se;
    const boost::math::students_t dist(static_cast<double>(out.df));
    out.p = boost::math::cdf(boost::math::complement(dist, out.t));
    return out;
}

double improvement_pct(double lft_score, double full_ft_score) {
    if (full_ft_score == 0.0) {
        throw DataError("improvement over a zero full fine-tuning score is undefined");
    }
    return 100.0 * (lft_score / full_ft_score - 1.0);
}

std::vector<std::vector<std::string>> fold_split(std::vector<std::string> query_ids, std::size_t n_folds,
                                                 std::uint64_t seed) {
    if (n_folds == 0 || query_ids.size() < n_folds) {
        throw DataError("fold_split: " + std::to_string(query_ids.size()) + " queries cannot fill " +
                        std::to_string(n_folds) + " folds");
    }
    std::sort(query_ids.begin(), query_ids.end());
    if (std::adjacent_find(query_ids.begin(), query_ids.end()) != query_ids.end()) {
        throw DataError("fold_split: duplicate query ids");
    }
    auto rng = named_rng(seed, "folds");
    portable_shuffle(query_ids, rng);
    std::vector<std::vector<std::string>> folds(n_folds);
    for (std::size_t i = 0; i < query_ids.size(); ++i) {
        folds[i % n_folds].push_back(query_ids[i]);
    }
    return folds;
}

FoldRotation fold_rotation(const std::vector<std::vector<std::string>>& folds, std::size_t r) {
    const std::size_t n = folds.size();
    if (n < 3 || r >= n) {
        throw ConfigError("fold rotation " + std::to_string(r) + " is out of range for " + std::to_string(n) +
                          " folds");
    }
    FoldRotation out;
    out.test = folds[r];
    out.val = folds[(r + 1) % n];
    for (std::size_t f = 0; f < n; ++f) {
        if (f != r && f != (r + 1) % n) {
            out.train.insert(out.train.end(), folds[f].begin(), folds[f].end());
        }
    }
    return out;
}

}  // namespace lftrank
