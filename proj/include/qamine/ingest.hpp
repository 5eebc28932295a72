#pragma once

#include <cstdint>
#include <deque>
#include <istream>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "qamine/common.hpp"

namespace qamine::ingest {

/// Removes HTML markup from a post body.
///
/// Element text (including <code> and <pre> content) is kept in document
/// order; p, pre, br, li, div, headings, blockquote, tr and hr emit a line
/// break. The five XML entities and numeric character references are decoded;
/// unknown entities pass through verbatim.
///
/// The result is a fixed point: strip_html(strip_html(x)) == strip_html(x).
/// To get there, a decoded '<' directly followed by a letter, '/', '!' or '?'
/// is written as "< " and a decoded '&' that would start a recognised entity
/// is written back as "&amp;". Neither case occurs for well-formed dump text
/// apart from literal angle brackets in code (e.g. "#include < stdio.h>").
std::string strip_html(std::string_view html);

/// Applies only the fixed-point escaping of strip_html to plain text (titles).
std::string sanitize_plain_text(std::string_view text);

/// "<c><malloc>" -> {"c", "malloc"}.
std::vector<std::string> parse_tags(std::string_view tags);

struct RejectedRow {
  std::int64_t byte_offset = 0;
  std::string reason;
};

struct ParseReport {
  std::int64_t rows_read = 0;
  std::int64_t rows_skipped = 0;  // PostTypeId outside {1, 2}
  std::vector<RejectedRow> rejects;
};

/// Pull-style reader over a posts XML stream.
///
/// Input is pushed through expat in fixed-size chunks and parsing is
/// suspended as soon as a row is produced, so memory use does not depend on
/// the length of the document.
class PostReader {
 public:
  explicit PostReader(std::istream& in, std::size_t chunk_size = 1 << 16);
  ~PostReader();
  PostReader(const PostReader&) = delete;
  PostReader& operator=(const PostReader&) = delete;

  /// Next question or answer row; std::nullopt at end of document.
  /// Throws XmlParseError on malformed XML.
  std::optional<RawPost> next();

  const ParseReport& report() const { return report_; }

 private:
  struct Impl;
  void on_row(const char** attrs);

  std::unique_ptr<Impl> impl_;
  std::deque<RawPost> pending_;
  ParseReport report_;
};

/// Eagerly collects all rows; convenience for tests and small inputs.
std::vector<RawPost> parse_posts(std::istream& in, ParseReport* report = nullptr);

struct AssembleReport {
  std::int64_t questions = 0;
  std::int64_t answers = 0;
  std::int64_t no_accepted_answer = 0;
  std::int64_t dangling_accepted = 0;
  std::int64_t pairs_emitted = 0;
};

/// Joins questions with their accepted answers.
///
/// Answers are buffered by id, so posts may arrive in any order. Pairs are
/// emitted in the order their questions appeared.
class QAAssembler {
 public:
  void add(RawPost post);
  std::vector<QAPair> finish();
  const AssembleReport& report() const { return report_; }

 private:
  std::vector<RawPost> questions_;
  std::vector<std::pair<std::int64_t, std::string>> answers_;  // id, body_html
  AssembleReport report_;
};

std::vector<QAPair> assemble_qa_pairs(std::vector<RawPost> posts, AssembleReport* report = nullptr);

/// Sidecar diagnostics document for an ingest run.
nlohmann::ordered_json diagnostics_json(const ParseReport& parse, const AssembleReport& assemble);

}  // namespace qamine::ingest
