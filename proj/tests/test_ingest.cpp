#include <gtest/gtest.h>

#include <fstream>
#include <regex>
#include <sstream>

#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include "qamine/ingest.hpp"
#include "qamine/io.hpp"
#include "support.hpp"

using namespace qamine;
using namespace qamine::ingest;

namespace {

bool has_tag_like(const std::string& s) {
  static const std::regex tag("<[A-Za-z/]");
  return std::regex_search(s, tag);
}

std::string row(const std::string& attrs) { return "  <row " + attrs + " />\n"; }

std::string doc(const std::string& rows) {
  return "<?xml version=\"1.0\" encoding=\"utf-8\"?>\n<posts>\n" + rows + "</posts>\n";
}

std::vector<RawPost> parse(const std::string& xml, ParseReport* report = nullptr) {
  std::istringstream in(xml);
  return parse_posts(in, report);
}

RawPost question(std::int64_t id, std::optional<std::int64_t> accepted, std::string body = "<p>body text</p>") {
  RawPost p;
  p.id = id;
  p.post_type = PostType::Question;
  p.accepted_answer_id = accepted;
  p.title = "title " + std::to_string(id);
  p.body_html = std::move(body);
  p.tags = {"c"};
  p.creation_date = Timestamp(id * 1000);
  return p;
}

RawPost answer(std::int64_t id, std::int64_t parent, std::string body = "<p>answer text</p>") {
  RawPost p;
  p.id = id;
  p.post_type = PostType::Answer;
  p.parent_id = parent;
  p.body_html = std::move(body);
  return p;
}

}  // namespace

TEST(StripHtml, KeepsInlineCodeText) {
  EXPECT_EQ(strip_html("<p>use <code>malloc(5)</code> here</p>"), "use malloc(5) here\n");
}

TEST(StripHtml, DecodesEntities) {
  EXPECT_EQ(strip_html("x &lt; y &amp;&amp; z"), "x < y && z");
  EXPECT_EQ(strip_html("&quot;q&quot; &apos;a&apos; &gt;"), "\"q\" 'a' >");
  EXPECT_EQ(strip_html("&#65;&#x42;&#x263A;"), "AB\xE2\x98\xBA");
}

TEST(StripHtml, UnknownEntitiesPassThrough) {
  EXPECT_EQ(strip_html("a&nbsp;b"), "a&nbsp;b");
  EXPECT_EQ(strip_html("&#0; &#xD800; &#1114112;"), "&#0; &#xD800; &#1114112;");
  EXPECT_EQ(strip_html("AT&T"), "AT&T");
}

TEST(StripHtml, PreservesCodeBlocksVerbatim) {
  std::string out = strip_html("<p>Try:</p><pre><code>int a;\nint b;</code></pre><p>done</p>");
  EXPECT_EQ(out, "Try:\nint a;\nint b;\ndone\n");
  EXPECT_EQ(strip_html("<pre><code>int a;\nint b;</code></pre>"), "int a;\nint b;\n");
}

TEST(StripHtml, BlockBoundariesEmitNewlines) {
  EXPECT_EQ(strip_html("<ul><li>one</li><li>two</li></ul>"), "one\ntwo\n");
  EXPECT_EQ(strip_html("a<br>b<br/>c"), "a\nb\nc");
}

TEST(StripHtml, ToleratesBrokenMarkup) {
  EXPECT_EQ(strip_html("text <b>bold"), "text bold");
  EXPECT_EQ(strip_html("a <!-- note --> b"), "a  b");
  // unterminated tag: falls back to the first '>'
  EXPECT_EQ(strip_html("cut <a href=\"x>y\""), "cut y\"");
  EXPECT_EQ(strip_html("<a href='a>b'>link</a>"), "link");
  EXPECT_EQ(strip_html("if (a < b && c > d)"), "if (a < b && c > d)");
}

TEST(StripHtml, DecodedMarkupCannotReintroduceTags) {
  std::string out = strip_html("&lt;script&gt;alert(1)&lt;/script&gt;");
  EXPECT_FALSE(has_tag_like(out)) << out;
  EXPECT_NE(out.find("script"), std::string::npos);
  EXPECT_EQ(strip_html(out), out);
}

TEST(StripHtml, PropertyIdempotentAndTagFree) {
  const std::vector<std::string> atoms{"<", ">", "/", "p", "a", "code", "pre", "br", "&", "lt;", "gt;", "amp;",
                                       "#", "x", "6", "0", ";", " ", "\n", "\"", "'", "!--", "--", "=", "é",
                                       "<p>", "</p>", "&lt;", "&amp;", "&#60;", "<b", "?"};
  Rng rng(2024);
  for (int trial = 0; trial < 20000; ++trial) {
    std::string in;
    std::size_t n = rng.below(30);
    for (std::size_t i = 0; i < n; ++i) in += atoms[rng.below(atoms.size())];
    std::string once = strip_html(in);
    ASSERT_FALSE(has_tag_like(once)) << "input: " << in << "\noutput: " << once;
    ASSERT_EQ(strip_html(once), once) << "input: " << in;
  }
}

TEST(Tags, SplitsConcatenatedTagList) {
  EXPECT_EQ(parse_tags("<c><malloc>"), (std::vector<std::string>{"c", "malloc"}));
  EXPECT_EQ(parse_tags("<C++><Python-3.x>"), (std::vector<std::string>{"c++", "python-3.x"}));
  EXPECT_TRUE(parse_tags("").empty());
}

TEST(ParsePosts, QuestionRowMapsFields) {
  auto posts = parse(doc(row(R"(Id="1" PostTypeId="1" Title="t" Body="&lt;p&gt;b&lt;/p&gt;" Tags="&lt;c&gt;&lt;malloc&gt;" AcceptedAnswerId="2" CreationDate="2008-07-31T21:42:52.667" Score="7")")));
  ASSERT_EQ(posts.size(), 1u);
  const auto& p = posts[0];
  EXPECT_EQ(p.id, 1);
  EXPECT_EQ(p.post_type, PostType::Question);
  EXPECT_EQ(p.title, "t");
  EXPECT_EQ(p.body_html, "<p>b</p>");
  EXPECT_EQ(p.tags, (std::vector<std::string>{"c", "malloc"}));
  EXPECT_EQ(p.accepted_answer_id, 2);
  EXPECT_FALSE(p.parent_id);
  EXPECT_EQ(p.score, 7);
  EXPECT_EQ(p.creation_date.to_iso8601(), "2008-07-31T21:42:52.667Z");
}

TEST(ParsePosts, AnswerRowMapsFields) {
  auto posts = parse(doc(row(R"(Id="2" PostTypeId="2" ParentId="1" Body="&lt;p&gt;a&lt;/p&gt;")")));
  ASSERT_EQ(posts.size(), 1u);
  EXPECT_EQ(posts[0].post_type, PostType::Answer);
  EXPECT_EQ(posts[0].parent_id, 1);
  EXPECT_TRUE(posts[0].tags.empty());
}

TEST(ParsePosts, SkipsOtherPostTypes) {
  ParseReport report;
  auto posts = parse(doc(row(R"(Id="3" PostTypeId="5" Body="wiki")") + row(R"(Id="4" PostTypeId="4" Body="x")")),
                     &report);
  EXPECT_TRUE(posts.empty());
  EXPECT_EQ(report.rows_read, 2);
  EXPECT_EQ(report.rows_skipped, 2);
}

TEST(ParsePosts, MalformedXmlNamesByteOffset) {
  std::string xml = doc(row(R"(Id="1" PostTypeId="1" Body="x")"));
  xml.insert(xml.find("</posts>"), "<row Id=\"2\" Body=\"unterminated />\n");
  try {
    parse(xml);
    FAIL() << "expected XmlParseError";
  } catch (const XmlParseError& e) {
    EXPECT_GT(e.byte_offset(), 0);
    EXPECT_NE(std::string(e.what()).find("at byte"), std::string::npos) << e.what();
  }
}

TEST(ParsePosts, RejectsRowsMissingIdOrBodyAndContinues) {
  ParseReport report;
  auto posts = parse(doc(row(R"(PostTypeId="1" Body="x")") + row(R"(Id="5" PostTypeId="2" ParentId="1")") +
                         row(R"(Id="6" PostTypeId="2" ParentId="1" Body="ok")") +
                         row(R"(Id="7" PostTypeId="2" Body="orphan")")),
                     &report);
  ASSERT_EQ(posts.size(), 1u);
  EXPECT_EQ(posts[0].id, 6);
  ASSERT_EQ(report.rejects.size(), 3u);
  EXPECT_NE(report.rejects[0].reason.find("Id"), std::string::npos);
  EXPECT_NE(report.rejects[1].reason.find("Body"), std::string::npos);
  EXPECT_GT(report.rejects[1].byte_offset, report.rejects[0].byte_offset);
}

TEST(ParsePosts, ChunkSizeDoesNotChangeOutput) {
  std::string xml = qamine::read_file(qamine::testing::toy_dir() / "Posts.xml");
  auto reference = parse(xml);
  for (std::size_t chunk : {1u, 7u, 333u}) {
    std::istringstream in(xml);
    PostReader reader(in, chunk);
    std::size_t i = 0;
    while (auto p = reader.next()) {
      ASSERT_LT(i, reference.size());
      EXPECT_EQ(p->id, reference[i].id);
      EXPECT_EQ(p->body_html, reference[i].body_html);
      ++i;
    }
    EXPECT_EQ(i, reference.size());
  }
}

TEST(Assemble, JoinsAcceptedAnswer) {
  AssembleReport report;
  auto pairs = assemble_qa_pairs({question(1, 2), answer(2, 1)}, &report);
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_EQ(pairs[0].question_id, 1);
  EXPECT_EQ(pairs[0].question, "title 1");
  EXPECT_EQ(pairs[0].description, "body text\n");
  EXPECT_EQ(pairs[0].answer, "answer text\n");
  EXPECT_EQ(pairs[0].tags, (std::vector<std::string>{"c"}));
  EXPECT_EQ(report.pairs_emitted, 1);
}

TEST(Assemble, QuestionWithoutAcceptedAnswerIsDropped) {
  AssembleReport report;
  EXPECT_TRUE(assemble_qa_pairs({question(1, std::nullopt), answer(2, 1)}, &report).empty());
  EXPECT_EQ(report.no_accepted_answer, 1);
}

TEST(Assemble, DanglingReferenceIsCounted) {
  AssembleReport report;
  EXPECT_TRUE(assemble_qa_pairs({question(1, 9)}, &report).empty());
  EXPECT_EQ(report.dangling_accepted, 1);
}

TEST(Assemble, UsesAcceptedNotFirstAnswer) {
  auto pairs = assemble_qa_pairs({answer(2, 1, "wrong"), question(1, 3), answer(3, 1, "<p>right one</p>")});
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_EQ(pairs[0].answer, "right one\n");
}

TEST(Assemble, JoinCompletenessUnderAnyOrder) {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<RawPost> posts;
    std::int64_t questions = 1 + static_cast<std::int64_t>(rng.below(40));
    for (std::int64_t q = 0; q < questions; ++q) {
      posts.push_back(question(2 * q + 1, 2 * q + 2, "<p>q &amp; " + std::to_string(q) + "</p>"));
      posts.push_back(answer(2 * q + 2, 2 * q + 1, "<pre><code>a&lt;" + std::to_string(q) + "</code></pre>"));
    }
    for (std::size_t i = posts.size(); i > 1; --i) std::swap(posts[i - 1], posts[rng.below(i)]);
    auto pairs = assemble_qa_pairs(posts);
    ASSERT_EQ(static_cast<std::int64_t>(pairs.size()), questions);
    for (const auto& p : pairs) {
      EXPECT_EQ(p.answer, "a<" + std::to_string((p.question_id - 1) / 2) + "\n");
      for (const auto* field : {&p.question, &p.description, &p.answer}) EXPECT_FALSE(has_tag_like(*field));
    }
  }
}

TEST(Assemble, TitlesAreSanitized) {
  auto q = question(1, 2);
  q.title = "Why is <div> ignored &amp; what is &lt;b&gt;?";
  auto pairs = assemble_qa_pairs({q, answer(2, 1)});
  ASSERT_EQ(pairs.size(), 1u);
  EXPECT_FALSE(has_tag_like(pairs[0].question)) << pairs[0].question;
  EXPECT_NE(pairs[0].question.find("div"), std::string::npos);
}

TEST(Ingest, ToyDumpDiagnostics) {
  std::ifstream in(qamine::testing::toy_dir() / "Posts.xml", std::ios::binary);
  PostReader reader(in);
  QAAssembler assembler;
  while (auto p = reader.next()) assembler.add(std::move(*p));
  auto pairs = assembler.finish();
  EXPECT_EQ(pairs.size(), 12u);
  EXPECT_EQ(reader.report().rows_read, 30);
  EXPECT_EQ(reader.report().rows_skipped, 3);
  EXPECT_EQ(assembler.report().dangling_accepted, 1);
  EXPECT_EQ(assembler.report().no_accepted_answer, 1);
  for (const auto& p : pairs) {
    for (const auto* field : {&p.question, &p.description, &p.answer}) EXPECT_FALSE(has_tag_like(*field)) << *field;
  }
}

// --- bounded memory ------------------------------------------------------

namespace {

// Writes a dump of `bytes` size made of identical-sized rows.
void write_dump(const std::filesystem::path& path, std::size_t bytes) {
  std::ofstream out(path, std::ios::binary);
  out << "<?xml version=\"1.0\" encoding=\"utf-8\"?>\n<posts>\n";
  std::string body(400, 'x');
  std::size_t written = 0;
  for (std::int64_t id = 1; written < bytes; ++id) {
    std::string r = id % 2 ? "  <row Id=\"" + std::to_string(id) + "\" PostTypeId=\"1\" AcceptedAnswerId=\"" +
                                 std::to_string(id + 1) + "\" Title=\"title\" Tags=\"&lt;c&gt;\" Body=\"&lt;p&gt;" +
                                 body + "&lt;/p&gt;\" />\n"
                           : "  <row Id=\"" + std::to_string(id) + "\" PostTypeId=\"2\" ParentId=\"" +
                                 std::to_string(id - 1) + "\" Body=\"&lt;p&gt;" + body + "&lt;/p&gt;\" />\n";
    out << r;
    written += r.size();
  }
  out << "</posts>\n";
}

// Parses the file in a child process and returns its peak RSS in KiB.
long child_peak_rss_kib(const std::filesystem::path& path, long* rows_out) {
  int fds[2];
  if (pipe(fds) != 0) return -1;
  pid_t pid = fork();
  if (pid == 0) {
    close(fds[0]);
    std::ifstream in(path, std::ios::binary);
    PostReader reader(in);
    long rows = 0;
    while (reader.next()) ++rows;
    if (write(fds[1], &rows, sizeof rows) != sizeof rows) _exit(2);
    _exit(0);
  }
  close(fds[1]);
  long rows = -1;
  if (read(fds[0], &rows, sizeof rows) != sizeof rows) rows = -1;
  close(fds[0]);
  int status = 0;
  rusage usage{};
  wait4(pid, &status, 0, &usage);
  *rows_out = rows;
  return WIFEXITED(status) && WEXITSTATUS(status) == 0 ? usage.ru_maxrss : -1;
}

}  // namespace

TEST(ParsePostsStreaming, PeakMemoryIndependentOfFileSize) {
  auto dir = qamine::testing::scratch_dir("stream");
  write_dump(dir / "small.xml", 1u << 20);
  write_dump(dir / "large.xml", 100u << 20);
  long small_rows = 0, large_rows = 0;
  long small_rss = child_peak_rss_kib(dir / "small.xml", &small_rows);
  long large_rss = child_peak_rss_kib(dir / "large.xml", &large_rows);
  std::filesystem::remove_all(dir);
  ASSERT_GT(small_rss, 0);
  ASSERT_GT(large_rss, 0);
  EXPECT_GT(large_rows, 90 * small_rows);
  // 100x the input must not cost more than a few MiB of extra resident memory.
  EXPECT_LT(large_rss - small_rss, 8 * 1024) << "small=" << small_rss << " KiB, large=" << large_rss << " KiB";
}
