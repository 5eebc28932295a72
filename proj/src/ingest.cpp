#include "qamine/ingest.hpp"

#include <expat.h>

#include <charconv>
#include <cstring>
#include <unordered_map>

namespace qamine::ingest {

struct PostReader::Impl {
  XML_Parser parser = nullptr;
  std::istream* in = nullptr;
  std::vector<char> buffer;
  bool finished_input = false;
  bool done = false;
  PostReader* owner = nullptr;

  ~Impl() {
    if (parser) XML_ParserFree(parser);
  }

  static void XMLCALL start_element(void* user, const XML_Char* name, const XML_Char** attrs) {
    auto* self = static_cast<Impl*>(user);
    if (std::strcmp(name, "row") != 0) return;
    self->owner->on_row(attrs);
    if (!self->owner->pending_.empty()) XML_StopParser(self->parser, XML_TRUE);
  }

  [[noreturn]] void fail() const {
    throw XmlParseError(XML_GetCurrentByteIndex(parser), XML_ErrorString(XML_GetErrorCode(parser)));
  }
};

PostReader::PostReader(std::istream& in, std::size_t chunk_size) : impl_(std::make_unique<Impl>()) {
  impl_->parser = XML_ParserCreate("UTF-8");
  if (!impl_->parser) throw Error("cannot create XML parser");
  impl_->in = &in;
  impl_->buffer.resize(chunk_size);
  impl_->owner = this;
  XML_SetUserData(impl_->parser, impl_.get());
  XML_SetStartElementHandler(impl_->parser, &Impl::start_element);
}

PostReader::~PostReader() = default;

std::optional<RawPost> PostReader::next() {
  auto& p = *impl_;
  while (pending_.empty() && !p.done) {
    XML_ParsingStatus status;
    XML_GetParsingStatus(p.parser, &status);
    XML_Status rc;
    if (status.parsing == XML_SUSPENDED) {
      rc = XML_ResumeParser(p.parser);
    } else if (!p.finished_input) {
      p.in->read(p.buffer.data(), static_cast<std::streamsize>(p.buffer.size()));
      auto got = static_cast<int>(p.in->gcount());
      p.finished_input = got == 0 || !*p.in;
      rc = XML_Parse(p.parser, p.buffer.data(), got, p.finished_input ? XML_TRUE : XML_FALSE);
    } else {
      p.done = true;
      break;
    }
    if (rc == XML_STATUS_ERROR) p.fail();
    if (rc == XML_STATUS_OK && p.finished_input) {
      XML_GetParsingStatus(p.parser, &status);
      if (status.parsing == XML_FINISHED) p.done = true;
    }
  }
  if (pending_.empty()) return std::nullopt;
  RawPost post = std::move(pending_.front());
  pending_.pop_front();
  return post;
}

namespace {

std::optional<std::int64_t> parse_int(const char* text) {
  std::int64_t v = 0;
  const char* end = text + std::strlen(text);
  auto [ptr, ec] = std::from_chars(text, end, v);
  if (ec != std::errc{} || ptr != end) return std::nullopt;
  return v;
}

}  // namespace

void PostReader::on_row(const char** attrs) {
  ++report_.rows_read;
  std::int64_t offset = XML_GetCurrentByteIndex(impl_->parser);
  auto reject = [&](std::string reason) { report_.rejects.push_back({offset, std::move(reason)}); };

  const char* id = nullptr;
  const char* type = nullptr;
  const char* body = nullptr;
  const char* title = nullptr;
  const char* tags = nullptr;
  const char* parent = nullptr;
  const char* accepted = nullptr;
  const char* created = nullptr;
  const char* score = nullptr;
  for (std::size_t i = 0; attrs[i]; i += 2) {
    std::string_view key = attrs[i];
    const char* value = attrs[i + 1];
    if (key == "Id") id = value;
    else if (key == "PostTypeId") type = value;
    else if (key == "Body") body = value;
    else if (key == "Title") title = value;
    else if (key == "Tags") tags = value;
    else if (key == "ParentId") parent = value;
    else if (key == "AcceptedAnswerId") accepted = value;
    else if (key == "CreationDate") created = value;
    else if (key == "Score") score = value;
  }

  std::optional<std::int64_t> post_type;
  if (type) post_type = parse_int(type);
  if (post_type && *post_type != 1 && *post_type != 2) {
    ++report_.rows_skipped;
    return;
  }
  if (!id) return reject("missing Id");
  auto id_value = parse_int(id);
  if (!id_value || *id_value <= 0) return reject("invalid Id '" + std::string(id) + "'");
  std::string where = "row Id=" + std::string(id) + ": ";
  if (!post_type) return reject(where + "missing or invalid PostTypeId");
  if (!body) return reject(where + "missing Body");

  RawPost post;
  post.id = *id_value;
  post.post_type = post_type.value() == 1 ? PostType::Question : PostType::Answer;
  post.body_html = body;
  if (created) {
    try {
      post.creation_date = Timestamp::parse_iso8601(created);
    } catch (const DataError& e) {
      return reject(where + e.what());
    }
  }
  if (score) post.score = parse_int(score).value_or(0);

  if (post.post_type == PostType::Question) {
    if (title) post.title = title;
    if (tags) post.tags = parse_tags(tags);
    if (accepted) {
      auto acc = parse_int(accepted);
      if (!acc) return reject(where + "invalid AcceptedAnswerId");
      post.accepted_answer_id = *acc;
    }
  } else {
    auto parent_value = parent ? parse_int(parent) : std::nullopt;
    if (!parent_value) return reject(where + "answer without valid ParentId");
    post.parent_id = *parent_value;
  }
  pending_.push_back(std::move(post));
}

std::vector<RawPost> parse_posts(std::istream& in, ParseReport* report) {
  PostReader reader(in);
  std::vector<RawPost> posts;
  while (auto post = reader.next()) posts.push_back(std::move(*post));
  if (report) *report = reader.report();
  return posts;
}

void QAAssembler::add(RawPost post) {
  if (post.post_type == PostType::Answer) {
    ++report_.answers;
    answers_.emplace_back(post.id, std::move(post.body_html));
  } else {
    ++report_.questions;
    if (!post.accepted_answer_id) {
      ++report_.no_accepted_answer;
      return;
    }
    questions_.push_back(std::move(post));
  }
}

std::vector<QAPair> QAAssembler::finish() {
  std::unordered_map<std::int64_t, std::size_t> answer_index;
  answer_index.reserve(answers_.size());
  for (std::size_t i = 0; i < answers_.size(); ++i) answer_index.emplace(answers_[i].first, i);

  std::vector<QAPair> pairs;
  for (auto& q : questions_) {
    auto it = answer_index.find(*q.accepted_answer_id);
    if (it == answer_index.end()) {
      ++report_.dangling_accepted;
      continue;
    }
    QAPair pair;
    pair.question_id = q.id;
    pair.question = sanitize_plain_text(q.title.value_or(""));
    pair.description = strip_html(q.body_html);
    pair.answer = strip_html(answers_[it->second].second);
    pair.tags = std::move(q.tags);
    pair.creation_date = q.creation_date;
    pairs.push_back(std::move(pair));
  }
  report_.pairs_emitted = static_cast<std::int64_t>(pairs.size());
  questions_.clear();
  answers_.clear();
  return pairs;
}

std::vector<QAPair> assemble_qa_pairs(std::vector<RawPost> posts, AssembleReport* report) {
  QAAssembler assembler;
  for (auto& post : posts) assembler.add(std::move(post));
  auto pairs = assembler.finish();
  if (report) *report = assembler.report();
  return pairs;
}

nlohmann::ordered_json diagnostics_json(const ParseReport& parse, const AssembleReport& assemble) {
  nlohmann::ordered_json j;
  j["rows_read"] = parse.rows_read;
  j["rows_skipped"] = parse.rows_skipped;
  j["rows_rejected"] = parse.rejects.size();
  j["questions"] = assemble.questions;
  j["answers"] = assemble.answers;
  j["no_accepted_answer"] = assemble.no_accepted_answer;
  j["dangling_accepted"] = assemble.dangling_accepted;
  j["pairs_emitted"] = assemble.pairs_emitted;
  auto rejects = nlohmann::ordered_json::array();
  for (const auto& r : parse.rejects) {
    rejects.push_back({{"byte_offset", r.byte_offset}, {"reason", r.reason}});
  }
  j["rejects"] = std::move(rejects);
  return j;
}

}  // namespace qamine::ingest
