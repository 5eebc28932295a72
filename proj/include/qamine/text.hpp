#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace qamine {

/// Token cap applied to queries and documents before featurization or indexing.
inline constexpr std::size_t kMaxTokens = 256;

/// Shared tokenizer for BM25 and the dense featurizer.
///
/// Splits on non-alphanumeric bytes, then splits identifiers on underscores
/// and camelCase humps ("parseHTTPHeader" -> parse, http, header). Tokens are
/// ASCII-lowercased. Bytes >= 0x80 count as alphanumeric so UTF-8 words stay
/// intact. At most `max_tokens` tokens are returned.
std::vector<std::string> tokenize(std::string_view text, std::size_t max_tokens = kMaxTokens);

/// Number of Unicode scalar values in UTF-8 text (non-continuation bytes).
std::size_t utf8_length(std::string_view text);

/// Splits UTF-8 text into code points, each kept as its byte sequence.
std::vector<std::string_view> utf8_chars(std::string_view text);

/// Whitespace-delimited word count.
std::size_t word_count(std::string_view text);

/// ASCII case folding plus whitespace-run collapsing, with trimmed ends.
std::string normalize_for_matching(std::string_view text);

std::uint64_t fnv1a64(std::string_view bytes);

/// splitmix64 finalizer; used to derive independent parameters from a seed.
std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace qamine
