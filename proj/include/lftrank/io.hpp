// Copyright (c) 2026 The lftrank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lftrank/corpus.hpp"
#include "lftrank/metrics.hpp"

namespace lftrank {

// Text formats. Every parser throws FormatError naming the source, the
// 1-based line number and the offending line.
//
//   run        {qid} Q0 {docid} {rank} {score:.6f} {tag}
//   qrels      {qid} 0 {docid} {rel}
//   triplets   {query}\t{pos_docid}\t{neg_docid}
//   documents  {docid}\t{text}
//   queries    {qid}\t{text}
//   candidates {qid}\t{docid}[,{docid}...]
//   vocab      one token per line, line index = id

std::string format_run(const Run& run);
Run parse_run(const std::string& content, const std::string& source = "run");

std::string format_qrels(const Qrels& qrels);
Qrels parse_qrels(const std::string& content, const std::string& source = "qrels");

std::string format_triplets(const std::vector<Triplet>& triplets);
std::vector<Triplet> parse_triplets(const std::string& content, const std::string& source = "triplets");

std::string format_documents(const std::vector<Document>& docs);
std::vector<Document> parse_documents(const std::string& content, const std::string& source = "documents");

std::string format_queries(const std::vector<Query>& queries);
std::vector<Query> parse_queries(const std::string& content, const std::string& source = "queries");

std::string format_candidates(const std::vector<Candidates>& candidates);
std::vector<Candidates> parse_candidates(const std::string& content, const std::string& source = "candidates");

std::string format_vocab(const Vocab& vocab);
Vocab parse_vocab(const std::string& content, const std::string& source = "vocab");

std::string read_text_file(const std::filesystem::path& path);

/// Writes through a temporary file renamed into place.
void write_text_file(const std::filesystem::path& path, const std::string& content);

// File names of a corpus directory.
namespace corpus_files {
inline constexpr const char* documents = "docs.tsv";
inline constexpr const char* queries = "queries.tsv";
inline constexpr const char* qrels = "qrels.txt";
inline constexpr const char* triplets = "triplets.tsv";
inline constexpr const char* candidates = "candidates.tsv";
inline constexpr const char* vocab = "vocab.txt";
}  // namespace corpus_files

void write_corpus(const std::filesystem::path& dir, const Corpus& corpus, const Vocab& vocab);
Corpus read_corpus(const std::filesystem::path& dir);
Vocab read_vocab(const std::filesystem::path& dir);

}  // namespace lftrank
