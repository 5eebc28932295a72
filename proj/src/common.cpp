#include "qamine/common.hpp"

#include <chrono>
#include <cstdio>

namespace qamine {

XmlParseError::XmlParseError(std::int64_t offset, const std::string& what)
    : DataError("XML parse error at byte " + std::to_string(offset) + ": " + what),
      offset_(offset) {}

namespace {

int read_digits(std::string_view text, std::size_t pos, std::size_t count) {
  if (pos + count > text.size()) {
    throw DataError("truncated timestamp: '" + std::string(text) + "'");
  }
  int value = 0;
  for (std::size_t i = pos; i < pos + count; ++i) {
    char c = text[i];
    if (c < '0' || c > '9') {
      throw DataError("bad timestamp: '" + std::string(text) + "'");
    }
    value = value * 10 + (c - '0');
  }
  return value;
}

void expect_char(std::string_view text, std::size_t pos, char c) {
  if (pos >= text.size() || text[pos] != c) {
    throw DataError("bad timestamp: '" + std::string(text) + "'");
  }
}

}  // namespace

Timestamp Timestamp::parse_iso8601(std::string_view text) {
  using namespace std::chrono;
  int y = read_digits(text, 0, 4);
  expect_char(text, 4, '-');
  int mo = read_digits(text, 5, 2);
  expect_char(text, 7, '-');
  int d = read_digits(text, 8, 2);
  if (text.size() <= 10 || (text[10] != 'T' && text[10] != ' ')) {
    throw DataError("bad timestamp: '" + std::string(text) + "'");
  }
  int h = read_digits(text, 11, 2);
  expect_char(text, 13, ':');
  int mi = read_digits(text, 14, 2);
  expect_char(text, 16, ':');
  int s = read_digits(text, 17, 2);
  std::size_t pos = 19;
  int ms = 0;
  if (pos < text.size() && text[pos] == '.') {
    ++pos;
    int scale = 100;
    while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') {
      ms += (text[pos] - '0') * scale;
      scale /= 10;
      ++pos;
    }
  }
  if (pos < text.size() && text[pos] == 'Z') ++pos;
  if (pos != text.size()) {
    throw DataError("bad timestamp: '" + std::string(text) + "'");
  }
  year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || s > 60) {
    throw DataError("bad timestamp: '" + std::string(text) + "'");
  }
  auto tp = sys_days{ymd} + hours{h} + minutes{mi} + seconds{s} + milliseconds{ms};
  return Timestamp(duration_cast<milliseconds>(tp.time_since_epoch()).count());
}

std::string Timestamp::to_iso8601() const {
  using namespace std::chrono;
  sys_time<milliseconds> tp{milliseconds{millis_}};
  auto dp = floor<days>(tp);
  year_month_day ymd{dp};
  hh_mm_ss<milliseconds> tod{tp - dp};
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02ld:%02ld:%02ld.%03ldZ",
                static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()), static_cast<long>(tod.hours().count()),
                static_cast<long>(tod.minutes().count()),
                static_cast<long>(tod.seconds().count()),
                static_cast<long>(tod.subseconds().count()));
  return buf;
}

std::string query_text(const QAPair& pair) { return pair.question + "\n" + pair.description; }

}  // namespace qamine
