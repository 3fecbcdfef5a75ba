#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "deskml/errors.hpp"

namespace deskml::bpe {

/// End-of-word marker appended to every word (U+2581).
inline constexpr std::string_view kDefaultMarker = "▁";

using MergeRule = std::pair<std::string, std::string>;

struct MergeTable {
    std::vector<MergeRule> merges;  // in learned order
    std::set<std::string> vocab;    // every symbol the table can produce
    std::string marker = std::string(kDefaultMarker);
};

struct TrainOptions {
    std::string marker = std::string(kDefaultMarker);
    /// Stop once the most frequent pair occurs only once.
    bool stop_at_singletons = false;
};

/// Splits UTF-8 text into code points.
std::vector<std::string> utf8_chars(std::string_view text);

/// Whitespace pre-tokenisation with counts.
std::map<std::string, std::size_t> word_counts(std::string_view text);

/// Learns up to num_merges merge rules. Each round merges the adjacent pair
/// with the highest count; equal counts go to the lexicographically smallest
/// (left, right). Training stops early only when no adjacent pair remains or
/// when stop_at_singletons is set and the best count is 1.
MergeTable train(const std::map<std::string, std::size_t>& corpus, std::size_t num_merges,
                 const TrainOptions& opts = {});

/// Splits on whitespace, appends the marker to each word and applies every
/// merge rule in learned order.
std::vector<std::string> encode(std::string_view text, const MergeTable& table);

/// Concatenates tokens, turns markers into spaces and trims the trailing space.
std::string decode(const std::vector<std::string>& tokens, std::string_view marker = kDefaultMarker);

/// Text format: header line "#bpe v1", then one "left right" pair per line.
void save(const MergeTable& table, const std::filesystem::path& path);
MergeTable load(const std::filesystem::path& path, std::string_view marker = kDefaultMarker);
std::string to_text(const MergeTable& table);
MergeTable from_text(std::string_view text, std::string_view marker = kDefaultMarker);

}  // namespace deskml::bpe
