#include <array>
#include <cstdint>
#include <optional>

#include "qamine/ingest.hpp"

namespace qamine::ingest {

namespace {

bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }

bool starts_tag(std::string_view s, std::size_t lt) {
  if (lt + 1 >= s.size()) return false;
  char c = s[lt + 1];
  return is_alpha(c) || c == '/' || c == '!' || c == '?';
}

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

struct Entity {
  std::size_t length = 0;  // bytes consumed, including '&' and ';'
  std::string text;        // decoded UTF-8
};

// Recognises an entity starting at s[pos] == '&'.
std::optional<Entity> match_entity(std::string_view s, std::size_t pos) {
  static constexpr std::array<std::pair<std::string_view, std::string_view>, 5> kNamed{{
      {"&lt;", "<"}, {"&gt;", ">"}, {"&amp;", "&"}, {"&quot;", "\""}, {"&apos;", "'"}}};
  std::string_view rest = s.substr(pos);
  for (const auto& [name, text] : kNamed) {
    if (rest.starts_with(name)) return Entity{name.size(), std::string(text)};
  }
  if (!rest.starts_with("&#")) return std::nullopt;
  std::size_t i = 2;
  bool hex = i < rest.size() && (rest[i] == 'x' || rest[i] == 'X');
  if (hex) ++i;
  std::size_t digits_start = i;
  std::uint64_t cp = 0;
  while (i < rest.size() && i - digits_start < 8) {
    char c = rest[i];
    int d = -1;
    if (c >= '0' && c <= '9') d = c - '0';
    else if (hex && c >= 'a' && c <= 'f') d = c - 'a' + 10;
    else if (hex && c >= 'A' && c <= 'F') d = c - 'A' + 10;
    if (d < 0) break;
    cp = cp * (hex ? 16 : 10) + static_cast<std::uint64_t>(d);
    ++i;
  }
  if (i == digits_start || i >= rest.size() || rest[i] != ';') return std::nullopt;
  if (cp == 0 || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return std::nullopt;
  Entity e;
  e.length = i + 1;
  append_utf8(e.text, static_cast<std::uint32_t>(cp));
  return e;
}

bool is_block_tag(std::string_view name) {
  static constexpr std::array<std::string_view, 19> kBlock{
      "p", "pre", "br", "li", "div", "ul", "ol", "h1", "h2", "h3",
      "h4", "h5", "h6", "blockquote", "tr", "hr", "table", "dt", "dd"};
  for (auto b : kBlock) {
    if (name == b) return true;
  }
  return false;
}

// Index one past the '>' closing the tag opened at s[lt], or s.size().
std::size_t tag_end(std::string_view s, std::size_t lt) {
  if (s.substr(lt).starts_with("<!--")) {
    auto close = s.find("-->", lt + 4);
    return close == std::string_view::npos ? s.size() : close + 3;
  }
  char quote = 0;
  for (std::size_t i = lt + 1; i < s.size(); ++i) {
    char c = s[i];
    if (quote) {
      if (c == quote) quote = 0;
    } else if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == '>') {
      return i + 1;
    }
  }
  // Unbalanced quote inside the tag: fall back to the first '>'.
  auto gt = s.find('>', lt + 1);
  return gt == std::string_view::npos ? s.size() : gt + 1;
}

std::string tag_name(std::string_view s, std::size_t lt) {
  std::size_t i = lt + 1;
  if (i < s.size() && s[i] == '/') ++i;
  std::string name;
  while (i < s.size() && (is_alpha(s[i]) || (s[i] >= '0' && s[i] <= '9'))) {
    char c = s[i++];
    name.push_back((c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c);
  }
  return name;
}

// Makes decoded text a fixed point of strip_html.
std::string escape_fixpoint(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    char c = raw[i];
    if (c == '<' && starts_tag(raw, i)) {
      out += "< ";
    } else if (c == '&' && match_entity(raw, i)) {
      out += "&amp;";
    } else {
      out.push_back(c);
    }
  }
  return out;
}

}  // namespace

std::string strip_html(std::string_view html) {
  std::string raw;
  raw.reserve(html.size());
  auto newline = [&raw] {
    if (!raw.empty() && raw.back() != '\n') raw.push_back('\n');
  };
  std::size_t i = 0;
  while (i < html.size()) {
    char c = html[i];
    if (c == '<' && starts_tag(html, i)) {
      std::size_t end = tag_end(html, i);
      if (is_block_tag(tag_name(html, i))) newline();
      i = end;
    } else if (c == '&') {
      if (auto e = match_entity(html, i)) {
        raw += e->text;
        i += e->length;
      } else {
        raw.push_back(c);
        ++i;
      }
    } else {
      raw.push_back(c);
      ++i;
    }
  }
  return escape_fixpoint(raw);
}

std::string sanitize_plain_text(std::string_view text) { return escape_fixpoint(text); }

std::vector<std::string> parse_tags(std::string_view tags) {
  std::vector<std::string> out;
  if (tags.starts_with('<')) tags.remove_prefix(1);
  if (tags.ends_with('>')) tags.remove_suffix(1);
  if (tags.empty()) return out;
  std::size_t start = 0;
  while (true) {
    auto sep = tags.find("><", start);
    auto piece = tags.substr(start, sep == std::string_view::npos ? std::string_view::npos : sep - start);
    if (!piece.empty()) {
      std::string tag(piece);
      for (auto& ch : tag) {
        if (ch >= 'A' && ch <= 'Z') ch = static_cast<char>(ch - 'A' + 'a');
      }
      out.push_back(std::move(tag));
    }
    if (sep == std::string_view::npos) break;
    start = sep + 2;
  }
  return out;
}

}  // namespace qamine::ingest
