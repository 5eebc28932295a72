#include "qamine/text.hpp"

namespace qamine {

namespace {

bool is_word_byte(unsigned char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
}

bool is_upper(unsigned char c) { return c >= 'A' && c <= 'Z'; }
bool is_lower(unsigned char c) { return c >= 'a' && c <= 'z'; }

bool is_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

char to_lower(char c) {
  return is_upper(static_cast<unsigned char>(c)) ? static_cast<char>(c - 'A' + 'a') : c;
}

void push_lowered(std::vector<std::string>& out, std::string_view piece) {
  std::string token;
  token.reserve(piece.size());
  for (char c : piece) token.push_back(to_lower(c));
  out.push_back(std::move(token));
}

// Splits one alphanumeric run on camelCase humps:
// lower->Upper starts a new piece; in an Upper run, the last Upper before a
// lower letter starts a new piece (HTTPServer -> HTTP, Server).
void split_camel(std::string_view word, std::vector<std::string>& out, std::size_t max_tokens) {
  std::size_t start = 0;
  for (std::size_t i = 1; i < word.size() && out.size() < max_tokens; ++i) {
    auto prev = static_cast<unsigned char>(word[i - 1]);
    auto cur = static_cast<unsigned char>(word[i]);
    bool boundary = false;
    if (is_upper(cur) && is_lower(prev)) {
      boundary = true;
    } else if (is_upper(prev) && is_upper(cur) && i + 1 < word.size() &&
               is_lower(static_cast<unsigned char>(word[i + 1]))) {
      boundary = true;
    }
    if (boundary) {
      push_lowered(out, word.substr(start, i - start));
      start = i;
    }
  }
  if (out.size() < max_tokens) push_lowered(out, word.substr(start));
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text, std::size_t max_tokens) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size() && tokens.size() < max_tokens) {
    while (i < text.size() && !is_word_byte(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t start = i;
    while (i < text.size() && is_word_byte(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) split_camel(text.substr(start, i - start), tokens, max_tokens);
  }
  return tokens;
}

std::size_t utf8_length(std::string_view text) {
  std::size_t n = 0;
  for (char c : text) {
    if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) ++n;
  }
  return n;
}

std::vector<std::string_view> utf8_chars(std::string_view text) {
  std::vector<std::string_view> chars;
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t j = i + 1;
    while (j < text.size() && (static_cast<unsigned char>(text[j]) & 0xC0) == 0x80) ++j;
    chars.push_back(text.substr(i, j - i));
    i = j;
  }
  return chars;
}

std::size_t word_count(std::string_view text) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : text) {
    bool space = is_space(static_cast<unsigned char>(c));
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

std::string normalize_for_matching(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (is_space(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(to_lower(c));
  }
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace qamine
