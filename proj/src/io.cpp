// Copyright (c) 2026 The lftrank Authors
// SPDX-License-Identifier: Apache-2.0

#include "lftrank/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string_view>

namespace lftrank {

namespace {

struct Line {
    std::size_t number;
    std::string_view text;
};

std::vector<Line> split_lines(const std::string& content) {
    std::vector<Line> out;
    std::size_t start = 0;
    std::size_t number = 1;
    while (start < content.size()) {
        std::size_t end = content.find('\n', start);
        if (end == std::string::npos) {
            end = content.size();
        }
        out.push_back({number++, std::string_view(content).substr(start, end - start)});
        start = end + 1;
    }
    return out;
}

[[noreturn]] void fail(const std::string& source, const Line& line, const std::string& why) {
    throw FormatError(source + ":" + std::to_string(line.number) + ": " + why + ": '" + std::string(line.text) + "'");
}

std::vector<std::string_view> split(std::string_view text, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t end = text.find(sep, start);
        if (end == std::string_view::npos) {
            out.push_back(text.substr(start));
            return out;
        }
        out.push_back(text.substr(start, end - start));
        start = end + 1;
    }
}

std::vector<std::string_view> fields(const std::string& source, const Line& line, char sep, std::size_t expected,
                                     const char* what) {
    auto parts = split(line.text, sep);
    if (parts.size() != expected) {
        fail(source, line,
             std::string("expected ") + std::to_string(expected) + " " + what + "-separated fields, found " +
                 std::to_string(parts.size()));
    }
    return parts;
}

void require_token(const std::string& source, const Line& line, std::string_view value, const char* name) {
    if (value.empty() || value.find_first_of(" \t\r") != std::string_view::npos) {
        fail(source, line, std::string("empty or malformed ") + name);
    }
}

long long parse_int(const std::string& source, const Line& line, std::string_view value, const char* name) {
    long long out = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc{} || ptr != value.data() + value.size()) {
        fail(source, line, std::string(name) + " is not an integer");
    }
    return out;
}

double parse_double(const std::string& source, const Line& line, std::string_view value, const char* name) {
    double out = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc{} || ptr != value.data() + value.size() || !std::isfinite(out)) {
        fail(source, line, std::string(name) + " is not a finite number");
    }
    return out;
}

std::string score_text(double score) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", score);
    return buf;
}

}  // namespace

std::string format_run(const Run& run) {
    std::string out;
    for (const auto& r : run) {
        out += r.qid + " Q0 " + r.docid + " " + std::to_string(r.rank) + " " + score_text(r.score) + " " + r.tag + "\n";
    }
    return out;
}

Run parse_run(const std::string& content, const std::string& source) {
    Run run;
    for (const auto& line : split_lines(content)) {
        const auto f = fields(source, line, ' ', 6, "space");
        require_token(source, line, f[0], "qid");
        if (f[1] != "Q0") {
            fail(source, line, "second field must be Q0");
        }
        require_token(source, line, f[2], "docid");
        const long long rank = parse_int(source, line, f[3], "rank");
        if (rank < 1) {
            fail(source, line, "rank must be at least 1");
        }
        require_token(source, line, f[5], "tag");
        run.push_back({std::string(f[0]), std::string(f[2]), static_cast<std::size_t>(rank),
                       parse_double(source, line, f[4], "score"), std::string(f[5])});
    }
    return run;
}

std::string format_qrels(const Qrels& qrels) {
    std::string out;
    for (const auto& [qid, docs] : qrels) {
        for (const auto& [docid, rel] : docs) {
            out += qid + " 0 " + docid + " " + std::to_string(rel) + "\n";
        }
    }
    return out;
}

Qrels parse_qrels(const std::string& content, const std::string& source) {
    Qrels qrels;
    for (const auto& line : split_lines(content)) {
        const auto f = fields(source, line, ' ', 4, "space");
        require_token(source, line, f[0], "qid");
        parse_int(source, line, f[1], "iteration");
        require_token(source, line, f[2], "docid");
        const long long rel = parse_int(source, line, f[3], "relevance");
        if (rel < 0) {
            fail(source, line, "relevance must be non-negative");
        }
        if (!qrels[std::string(f[0])].emplace(std::string(f[2]), static_cast<int>(rel)).second) {
            fail(source, line, "duplicate judgment");
        }
    }
    return qrels;
}

std::string format_triplets(const std::vector<Triplet>& triplets) {
    std::string out;
    for (const auto& t : triplets) {
        out += t.query + "\t" + t.pos + "\t" + t.neg + "\n";
    }
    return out;
}

std::vector<Triplet> parse_triplets(const std::string& content, const std::string& source) {
    std::vector<Triplet> out;
    for (const auto& line : split_lines(content)) {
        const auto f = fields(source, line, '\t', 3, "tab");
        if (f[0].empty()) {
            fail(source, line, "empty query");
        }
        require_token(source, line, f[1], "positive docid");
        require_token(source, line, f[2], "negative docid");
        if (f[1] == f[2]) {
            fail(source, line, "positive and negative are the same document");
        }
        out.push_back({std::string(f[0]), std::string(f[1]), std::string(f[2])});
    }
    return out;
}

std::string format_documents(const std::vector<Document>& docs) {
    std::string out;
    for (const auto& d : docs) {
        out += d.docid + "\t" + d.text + "\n";
    }
    return out;
}

std::vector<Document> parse_documents(const std::string& content, const std::string& source) {
    std::vector<Document> out;
    std::set<std::string> seen;
    for (const auto& line : split_lines(content)) {
        const auto f = fields(source, line, '\t', 2, "tab");
        require_token(source, line, f[0], "docid");
        if (!seen.emplace(f[0]).second) {
            fail(source, line, "duplicate docid");
        }
        out.push_back({std::string(f[0]), std::string(f[1])});
    }
    return out;
}

std::string format_queries(const std::vector<Query>& queries) {
    std::string out;
    for (const auto& q : queries) {
        out += q.qid + "\t" + q.text + "\n";
    }
    return out;
}

std::vector<Query> parse_queries(const std::string& content, const std::string& source) {
    std::vector<Query> out;
    std::set<std::string> seen;
    for (const auto& line : split_lines(content)) {
        const auto f = fields(source, line, '\t', 2, "tab");
        require_token(source, line, f[0], "qid");
        if (!seen.emplace(f[0]).second) {
            fail(source, line, "duplicate qid");
        }
        out.push_back({std::string(f[0]), std::string(f[1])});
    }
    return out;
}

std::string format_candidates(const std::vector<Candidates>& candidates) {
    std::string out;
    for (const auto& c : candidates) {
        out += c.qid + "\t";
        for (std::size_t i = 0; i < c.docids.size(); ++i) {
            out += (i == 0 ? "" : ",") + c.docids[i];
        }
        out += "\n";
    }
    return out;
}

std::vector<Candidates> parse_candidates(const std::string& content, const std::string& source) {
    std::vector<Candidates> out;
    for (const auto& line : split_lines(content)) {
        const auto f = fields(source, line, '\t', 2, "tab");
        require_token(source, line, f[0], "qid");
        Candidates c{std::string(f[0]), {}};
        for (auto docid : split(f[1], ',')) {
            require_token(source, line, docid, "docid");
            c.docids.emplace_back(docid);
        }
        out.push_back(std::move(c));
    }
    return out;
}

std::string format_vocab(const Vocab& vocab) {
    std::string out;
    for (const auto& t : vocab.tokens()) {
        out += t + "\n";
    }
    return out;
}

Vocab parse_vocab(const std::string& content, const std::string& source) {
    Vocab fresh;
    Vocab vocab;
    for (const auto& line : split_lines(content)) {
        require_token(source, line, line.text, "token");
        const std::string word(line.text);
        const auto expected = static_cast<std::int32_t>(line.number - 1);
        if (expected < static_cast<std::int32_t>(fresh.size())) {
            if (fresh.token(expected) != word) {
                fail(source, line, "reserved id " + std::to_string(expected) + " must be " + fresh.token(expected));
            }
            continue;
        }
        if (vocab.contains(word)) {
            fail(source, line, "duplicate token");
        }
        vocab.add(word);
    }
    return vocab;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open '" + path.string() + "' for reading");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw DataError("cannot open '" + tmp.string() + "' for writing");
        }
        out << content;
        if (!out) {
            throw DataError("write to '" + tmp.string() + "' failed");
        }
    }
    std::filesystem::rename(tmp, path);
}

void write_corpus(const std::filesystem::path& dir, const Corpus& corpus, const Vocab& vocab) {
    write_text_file(dir / corpus_files::documents, format_documents(corpus.documents));
    write_text_file(dir / corpus_files::queries, format_queries(corpus.queries));
    write_text_file(dir / corpus_files::qrels, format_qrels(corpus.qrels));
    write_text_file(dir / corpus_files::triplets, format_triplets(corpus.triplets));
    write_text_file(dir / corpus_files::candidates, format_candidates(corpus.candidates));
    write_text_file(dir / corpus_files::vocab, format_vocab(vocab));
}

Corpus read_corpus(const std::filesystem::path& dir) {
    auto load = [&](const char* name) { return std::pair{read_text_file(dir / name), (dir / name).string()}; };
    Corpus corpus;
    {
        auto [text, src] = load(corpus_files::documents);
        corpus.documents = parse_documents(text, src);
    }
    {
        auto [text, src] = load(corpus_files::queries);
        corpus.queries = parse_queries(text, src);
    }
    {
        auto [text, src] = load(corpus_files::qrels);
        corpus.qrels = parse_qrels(text, src);
    }
    {
        auto [text, src] = load(corpus_files::triplets);
        corpus.triplets = parse_triplets(text, src);
    }
    {
        auto [text, src] = load(corpus_files::candidates);
        corpus.candidates = parse_candidates(text, src);
    }
    std::set<std::string> docids;
    for (const auto& d : corpus.documents) {
        docids.insert(d.docid);
    }
    for (const auto& t : corpus.triplets) {
        for (const auto* id : {&t.pos, &t.neg}) {
            if (docids.count(*id) == 0) {
                throw DataError((dir / corpus_files::triplets).string() + ": unknown docid '" + *id + "'");
            }
        }
    }
    for (const auto& c : corpus.candidates) {
        for (const auto& id : c.docids) {
            if (docids.count(id) == 0) {
                throw DataError((dir / corpus_files::candidates).string() + ": unknown docid '" + id +
                                "' for query '" + c.qid + "'");
            }
        }
    }
    return corpus;
}

Vocab read_vocab(const std::filesystem::path& dir) {
    const auto path = dir / corpus_files::vocab;
    return parse_vocab(read_text_file(path), path.string());
}

}  // namespace lftrank
