#include "qamine/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "qamine/common.hpp"

namespace qamine::eval {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    auto tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  if (!fields.empty() && !fields.back().empty() && fields.back().back() == '\r') fields.back().pop_back();
  return fields;
}

bool skippable(const std::string& line) {
  return line.empty() || line == "\r" || line[0] == '#';
}

[[noreturn]] void bad_line(const std::string& source, std::size_t line_no, const std::string& why) {
  throw DataError(source + ":" + std::to_string(line_no) + ": " + why);
}

void check_known(const Run& run, const Qrels& qrels) {
  for (const auto& [qid, _] : run.ranked) {
    if (!qrels.relevant.contains(qid)) throw DataError("run query '" + qid + "' has no relevance judgments");
  }
}

const std::vector<std::string>* ranking_for(const Run& run, const std::string& qid) {
  auto it = run.ranked.find(qid);
  return it == run.ranked.end() ? nullptr : &it->second;
}

template <typename PerQuery>
double mean_over_qrels(const Run& run, const Qrels& qrels, PerQuery&& per_query) {
  check_known(run, qrels);
  if (qrels.relevant.empty()) return 0.0;
  double total = 0;
  for (const auto& [qid, rel] : qrels.relevant) {
    const auto* ranking = ranking_for(run, qid);
    if (ranking) total += per_query(*ranking, rel);
  }
  return total / static_cast<double>(qrels.relevant.size());
}

double average_precision(const std::vector<std::string>& ranking, const std::set<std::string>& rel) {
  double sum = 0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < ranking.size(); ++r) {
    if (rel.contains(ranking[r])) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  return sum / static_cast<double>(rel.size());
}

std::size_t first_relevant(const std::vector<std::string>& ranking, const std::set<std::string>& rel) {
  for (std::size_t r = 0; r < ranking.size(); ++r) {
    if (rel.contains(ranking[r])) return r + 1;
  }
  return 0;
}

}  // namespace

Qrels parse_qrels(std::istream& in, const std::string& source_name) {
  Qrels qrels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (skippable(line)) continue;
    auto f = split_fields(line);
    if (f.size() != 2 || f[0].empty() || f[1].empty()) {
      bad_line(source_name, line_no, "expected 'query_id<TAB>doc_id'");
    }
    qrels.relevant[f[0]].insert(f[1]);
  }
  return qrels;
}

Run parse_run(std::istream& in, const std::string& source_name) {
  std::map<std::string, std::map<std::size_t, std::string>> by_rank;
  std::map<std::string, std::set<std::string>> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (skippable(line)) continue;
    auto f = split_fields(line);
    if (f.size() != 4 || f[0].empty() || f[2].empty()) {
      bad_line(source_name, line_no, "expected 'query_id<TAB>rank<TAB>doc_id<TAB>score'");
    }
    std::size_t rank = 0;
    auto [ptr, ec] = std::from_chars(f[1].data(), f[1].data() + f[1].size(), rank);
    if (ec != std::errc{} || ptr != f[1].data() + f[1].size() || rank == 0) {
      bad_line(source_name, line_no, "rank must be a positive integer");
    }
    char* end = nullptr;
    std::strtod(f[3].c_str(), &end);
    if (f[3].empty() || end != f[3].c_str() + f[3].size()) bad_line(source_name, line_no, "score is not a number");
    if (!by_rank[f[0]].emplace(rank, f[2]).second) bad_line(source_name, line_no, "duplicate rank for query");
    if (!seen[f[0]].insert(f[2]).second) bad_line(source_name, line_no, "duplicate doc id for query");
  }
  Run run;
  for (auto& [qid, ranks] : by_rank) {
    auto& list = run.ranked[qid];
    for (auto& [_, doc] : ranks) list.push_back(std::move(doc));
  }
  return run;
}

Qrels load_qrels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputNotFound("cannot open qrels: " + path.string());
  return parse_qrels(in, path.string());
}

Run load_run(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputNotFound("cannot open run: " + path.string());
  return parse_run(in, path.string());
}

double mrr_at_k(const Run& run, const Qrels& qrels, std::size_t k) {
  if (k == 0) throw ConfigError("k must be >= 1");
  return mean_over_qrels(run, qrels, [k](const auto& ranking, const auto& rel) {
    auto r = first_relevant(ranking, rel);
    return (r > 0 && r <= k) ? 1.0 / static_cast<double>(r) : 0.0;
  });
}

double recall_at_k(const Run& run, const Qrels& qrels, std::size_t k) {
  if (k == 0) throw ConfigError("k must be >= 1");
  return mean_over_qrels(run, qrels, [k](const auto& ranking, const auto& rel) {
    std::size_t hits = 0;
    for (std::size_t r = 0; r < std::min(k, ranking.size()); ++r) hits += rel.contains(ranking[r]);
    return static_cast<double>(hits) / static_cast<double>(rel.size());
  });
}

double mean_average_precision(const Run& run, const Qrels& qrels) {
  return mean_over_qrels(run, qrels, [](const auto& ranking, const auto& rel) { return average_precision(ranking, rel); });
}

EvalReport evaluate(const Run& run, const Qrels& qrels, const std::vector<std::size_t>& ks) {
  if (ks.empty()) throw ConfigError("at least one cutoff is required");
  EvalReport report;
  report.ks = ks;
  std::sort(report.ks.begin(), report.ks.end());
  report.ks.erase(std::unique(report.ks.begin(), report.ks.end()), report.ks.end());
  for (auto k : report.ks) {
    report.mrr_at_k[k] = mrr_at_k(run, qrels, k);
    report.recall_at_k[k] = recall_at_k(run, qrels, k);
  }
  report.map_score = mean_average_precision(run, qrels);
  report.num_queries = qrels.relevant.size();
  for (const auto& [qid, rel] : qrels.relevant) {
    QueryDiagnostics d;
    d.query_id = qid;
    d.relevant = rel.size();
    if (const auto* ranking = ranking_for(run, qid)) {
      d.retrieved = ranking->size();
      d.first_relevant_rank = first_relevant(*ranking, rel);
      d.average_precision = average_precision(*ranking, rel);
    }
    report.per_query.push_back(std::move(d));
  }
  return report;
}

EvalReport evaluate_run(const std::filesystem::path& run_path, const std::filesystem::path& qrels_path,
                        const std::vector<std::size_t>& ks) {
  return evaluate(load_run(run_path), load_qrels(qrels_path), ks);
}

nlohmann::ordered_json report_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["num_queries"] = report.num_queries;
  auto mrr = nlohmann::ordered_json::object();
  auto recall = nlohmann::ordered_json::object();
  for (auto k : report.ks) {
    mrr[std::to_string(k)] = report.mrr_at_k.at(k);
    recall[std::to_string(k)] = report.recall_at_k.at(k);
  }
  j["mrr_at_k"] = std::move(mrr);
  j["recall_at_k"] = std::move(recall);
  j["map"] = report.map_score;
  auto per = nlohmann::ordered_json::array();
  for (const auto& d : report.per_query) {
    per.push_back({{"query_id", d.query_id},
                   {"first_relevant_rank", d.first_relevant_rank},
                   {"relevant", d.relevant},
                   {"retrieved", d.retrieved},
                   {"average_precision", d.average_precision}});
  }
  j["per_query"] = std::move(per);
  return j;
}

std::string report_table(const EvalReport& report, const std::string& label) {
  std::vector<std::pair<std::string, double>> cols;
  for (auto k : report.ks) cols.emplace_back("MRR@" + std::to_string(k), report.mrr_at_k.at(k));
  for (auto k : report.ks) cols.emplace_back("R@" + std::to_string(k), report.recall_at_k.at(k));
  cols.emplace_back("MAP", report.map_score);

  std::size_t label_width = std::max<std::size_t>(label.size(), 5);
  std::ostringstream out;
  char buf[32];
  out << std::string(label_width - 5, ' ') << "Model";
  for (const auto& [name, _] : cols) {
    std::snprintf(buf, sizeof(buf), "  %8s", name.c_str());
    out << buf;
  }
  out << '\n' << std::string(label_width - label.size(), ' ') << label;
  for (const auto& [_, value] : cols) {
    std::snprintf(buf, sizeof(buf), "  %8.2f", 100.0 * value);
    out << buf;
  }
  out << '\n';
  return out.str();
}

}  // namespace qamine::eval
