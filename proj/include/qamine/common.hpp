#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace qamine {

// Error taxonomy. The CLI maps each kind onto a process exit status.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

/// Invalid configuration or arguments (bad ratios, empty eval query, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "config"; }
};

/// Input data failed validation (malformed line, broken invariant).
class DataError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "data"; }
};

/// Input file could not be opened.
class InputNotFound : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "input_not_found"; }
};

/// Malformed XML. Carries the byte offset the parser stopped at.
class XmlParseError : public DataError {
 public:
  XmlParseError(std::int64_t offset, const std::string& what);
  std::int64_t byte_offset() const noexcept { return offset_; }
  const char* kind() const noexcept override { return "xml_parse"; }

 private:
  std::int64_t offset_;
};

/// Milliseconds since the Unix epoch, UTC.
class Timestamp {
 public:
  constexpr Timestamp() = default;
  constexpr explicit Timestamp(std::int64_t millis) : millis_(millis) {}

  constexpr std::int64_t millis() const { return millis_; }

  /// Accepts "YYYY-MM-DDTHH:MM:SS[.fff][Z]" as found in dump attributes.
  static Timestamp parse_iso8601(std::string_view text);
  /// Always "YYYY-MM-DDTHH:MM:SS.mmmZ".
  std::string to_iso8601() const;

  friend constexpr auto operator<=>(Timestamp, Timestamp) = default;

 private:
  std::int64_t millis_ = 0;
};

enum class PostType { Question, Answer };

struct RawPost {
  std::int64_t id = 0;
  PostType post_type = PostType::Question;
  std::optional<std::int64_t> parent_id;
  std::optional<std::int64_t> accepted_answer_id;
  Timestamp creation_date;
  std::optional<std::string> title;
  std::string body_html;
  std::vector<std::string> tags;
  std::int64_t score = 0;
};

struct QAPair {
  std::int64_t question_id = 0;
  std::string question;     // title
  std::string description;  // stripped question body
  std::string answer;       // stripped accepted-answer body
  std::vector<std::string> tags;
  Timestamp creation_date;

  bool operator==(const QAPair&) const = default;
};

/// Query side of the retrieval task: question, newline, description.
std::string query_text(const QAPair& pair);

}  // namespace qamine
