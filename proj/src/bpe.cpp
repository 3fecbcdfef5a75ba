#include "deskml/bpe.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>

namespace deskml::bpe {

namespace {

struct Word {
    std::vector<std::string> symbols;
    std::size_t count = 0;
};

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

std::vector<std::string_view> split_words(std::string_view text) {
    std::vector<std::string_view> words;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_space(text[i])) {
            ++i;
        }
        std::size_t j = i;
        while (j < text.size() && !is_space(text[j])) {
            ++j;
        }
        if (j > i) {
            words.push_back(text.substr(i, j - i));
        }
        i = j;
    }
    return words;
}

std::vector<std::string> initial_symbols(std::string_view word, const std::string& marker) {
    auto symbols = utf8_chars(word);
    symbols.push_back(marker);
    return symbols;
}

void apply_merge(std::vector<std::string>& symbols, const MergeRule& rule) {
    if (symbols.size() < 2) {
        return;
    }
    std::vector<std::string> out;
    out.reserve(symbols.size());
    std::size_t i = 0;
    while (i < symbols.size()) {
        if (i + 1 < symbols.size() && symbols[i] == rule.first && symbols[i + 1] == rule.second) {
            out.push_back(rule.first + rule.second);
            i += 2;
        } else {
            out.push_back(std::move(symbols[i]));
            ++i;
        }
    }
    symbols = std::move(out);
}

void add_rule_to_vocab(MergeTable& table, const MergeRule& rule) {
    table.vocab.insert(rule.first);
    table.vocab.insert(rule.second);
    table.vocab.insert(rule.first + rule.second);
}

}  // namespace

std::vector<std::string> utf8_chars(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        const auto lead = static_cast<unsigned char>(text[i]);
        std::size_t len = 1;
        if (lead >= 0xF0) {
            len = 4;
        } else if (lead >= 0xE0) {
            len = 3;
        } else if (lead >= 0xC0) {
            len = 2;
        }
        len = std::min(len, text.size() - i);
        out.emplace_back(text.substr(i, len));
        i += len;
    }
    return out;
}

std::map<std::string, std::size_t> word_counts(std::string_view text) {
    std::map<std::string, std::size_t> counts;
    for (std::string_view w : split_words(text)) {
        ++counts[std::string(w)];
    }
    return counts;
}

MergeTable train(const std::map<std::string, std::size_t>& corpus, std::size_t num_merges, const TrainOptions& opts) {
    if (corpus.empty()) {
        throw DomainError("BPE training needs a non-empty corpus");
    }
    MergeTable table;
    table.marker = opts.marker;
    std::vector<Word> words;
    for (const auto& [text, count] : corpus) {
        if (count == 0) {
            continue;
        }
        if (split_words(text).size() != 1) {
            throw DomainError(fmt::format("corpus entry '{}' is not a single whitespace-free word", text));
        }
        Word w{initial_symbols(text, opts.marker), count};
        for (const auto& s : w.symbols) {
            table.vocab.insert(s);
        }
        words.push_back(std::move(w));
    }
    if (words.empty()) {
        throw DomainError("BPE training needs a non-empty corpus");
    }

    for (std::size_t round = 0; round < num_merges; ++round) {
        // std::map iterates pairs in lexicographic (left, right) order, so the
        // first pair reaching the maximum count is the tie-break winner.
        std::map<MergeRule, std::size_t> pair_counts;
        for (const Word& w : words) {
            for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i) {
                pair_counts[{w.symbols[i], w.symbols[i + 1]}] += w.count;
            }
        }
        if (pair_counts.empty()) {
            break;
        }
        auto best = pair_counts.begin();
        for (auto it = pair_counts.begin(); it != pair_counts.end(); ++it) {
            if (it->second > best->second) {
                best = it;
            }
        }
        if (opts.stop_at_singletons && best->second <= 1) {
            break;
        }
        const MergeRule rule = best->first;
        for (Word& w : words) {
            apply_merge(w.symbols, rule);
        }
        table.merges.push_back(rule);
        add_rule_to_vocab(table, rule);
    }
    return table;
}

std::vector<std::string> encode(std::string_view text, const MergeTable& table) {
    std::vector<std::string> tokens;
    for (std::string_view word : split_words(text)) {
        auto symbols = initial_symbols(word, table.marker);
        for (const MergeRule& rule : table.merges) {
            apply_merge(symbols, rule);
        }
        tokens.insert(tokens.end(), std::make_move_iterator(symbols.begin()), std::make_move_iterator(symbols.end()));
    }
    return tokens;
}

std::string decode(const std::vector<std::string>& tokens, std::string_view marker) {
    std::string joined;
    for (const auto& t : tokens) {
        joined += t;
    }
    std::string out;
    out.reserve(joined.size());
    std::size_t i = 0;
    while (i < joined.size()) {
        if (!marker.empty() && joined.compare(i, marker.size(), marker) == 0) {
            out.push_back(' ');
            i += marker.size();
        } else {
            out.push_back(joined[i]);
            ++i;
        }
    }
    while (!out.empty() && out.back() == ' ') {
        out.pop_back();
    }
    return out;
}

std::string to_text(const MergeTable& table) {
    std::string out = "#bpe v1\n";
    for (const auto& [l, r] : table.merges) {
        out += l;
        out += ' ';
        out += r;
        out += '\n';
    }
    return out;
}

MergeTable from_text(std::string_view text, std::string_view marker) {
    MergeTable table;
    table.marker = std::string(marker);
    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line) || line != "#bpe v1") {
        throw Error("merge table must start with the header '#bpe v1'");
    }
    std::size_t line_no = 1;
    std::set<MergeRule> seen;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        const auto parts = split_words(line);
        if (parts.size() != 2) {
            throw Error(fmt::format("merge table line {}: expected 'left right', got '{}'", line_no, line));
        }
        MergeRule rule{std::string(parts[0]), std::string(parts[1])};
        if (!seen.insert(rule).second) {
            throw Error(fmt::format("merge table line {}: duplicate rule '{} {}'", line_no, rule.first, rule.second));
        }
        add_rule_to_vocab(table, rule);
        table.merges.push_back(std::move(rule));
    }
    return table;
}

void save(const MergeTable& table, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error("cannot open " + path.string() + " for writing");
    }
    out << to_text(table);
}

MergeTable load(const std::filesystem::path& path, std::string_view marker) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open merge table " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_text(buf.str(), marker);
}

}  // namespace deskml::bpe
