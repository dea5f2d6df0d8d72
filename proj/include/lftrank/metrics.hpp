// Copyright (c) 2026 The lftrank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace lftrank {

struct RunRecord {
    std::string qid;
    std::string docid;
    std::size_t rank = 0;
    double score = 0.0;
    std::string tag;
};

using Run = std::vector<RunRecord>;

/// qid -> docid -> graded relevance (>= 0).
using Qrels = std::map<std::string, std::map<std::string, int>>;

/// Orders records by descending score, ties by ascending docid, and assigns
/// ranks 1..n.
void sort_and_rank(std::vector<RunRecord>& records);

/// Throws DataError unless every qid's ranks are exactly 1..n.
void validate_run(const Run& run);

struct MetricReport {
    std::string metric;
    std::size_t k = 0;
    std::map<std::string, double> per_query;
    // Judged queries without any run records; excluded from the mean.
    std::vector<std::string> skipped;

    double mean() const;
};

/// |relevant in top k| / k, with rel >= 1 counting as relevant. The
/// denominator stays k when fewer than k records exist.
MetricReport precision_at_k(const Run& run, const Qrels& qrels, std::size_t k);

/// Σ_{i<=k} (2^rel_i − 1)/log2(i+1), normalized by the ideal DCG of the
/// judged documents; 0 when nothing is relevant.
MetricReport ndcg_at_k(const Run& run, const Qrels& qrels, std::size_t k);

struct TTestResult {
    double t = 0.0;
    double p = 0.5;
    std::size_t df = 0;
};

/// Pooled-variance two-sample t-test of H1: mean(a) > mean(b).
TTestResult t_test_one_tailed(std::span<const double> a, std::span<const double> b);

/// 100·(lft / full_ft − 1).
double improvement_pct(double lft_score, double full_ft_score);

/// Seeded partition of query ids into n folds of near-equal size.
std::vector<std::vector<std::string>> fold_split(std::vector<std::string> query_ids, std::size_t n_folds,
                                                 std::uint64_t seed);

struct FoldRotation {
    std::vector<std::string> train;
    std::vector<std::string> val;
    std::vector<std::string> test;
};

/// Rotation r: test = fold r, validation = fold (r+1) mod n, train = rest.
FoldRotation fold_rotation(const std::vector<std::vector<std::string>>& folds, std::size_t r);

}  // namespace lftrank
