#pragma once

#include <filesystem>
#include <istream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

namespace qamine::eval {

/// query_id -> relevant doc ids (never empty).
struct Qrels {
  std::map<std::string, std::set<std::string>> relevant;
};

/// query_id -> doc ids in rank order (rank 1 first).
struct Run {
  std::map<std::string, std::vector<std::string>> ranked;
};

/// "query_id<TAB>doc_id" per line. Errors name the offending line.
Qrels parse_qrels(std::istream& in, const std::string& source_name = "qrels");
/// "query_id<TAB>rank<TAB>doc_id<TAB>score" per line; '#' lines are comments.
Run parse_run(std::istream& in, const std::string& source_name = "run");

Qrels load_qrels(const std::filesystem::path& path);
Run load_run(const std::filesystem::path& path);

/// Each metric averages over every qrels query; a query absent from the run
/// scores 0. A run query absent from the qrels raises DataError.
double mrr_at_k(const Run& run, const Qrels& qrels, std::size_t k);
double recall_at_k(const Run& run, const Qrels& qrels, std::size_t k);
double mean_average_precision(const Run& run, const Qrels& qrels);

struct QueryDiagnostics {
  std::string query_id;
  std::size_t first_relevant_rank = 0;  // 1-based; 0 if never retrieved
  std::size_t relevant = 0;
  std::size_t retrieved = 0;
  double average_precision = 0;
};

struct EvalReport {
  std::vector<std::size_t> ks;
  std::map<std::size_t, double> mrr_at_k;
  std::map<std::size_t, double> recall_at_k;
  double map_score = 0;
  std::size_t num_queries = 0;
  std::vector<QueryDiagnostics> per_query;
};

EvalReport evaluate(const Run& run, const Qrels& qrels, const std::vector<std::size_t>& ks);
EvalReport evaluate_run(const std::filesystem::path& run_path, const std::filesystem::path& qrels_path,
                        const std::vector<std::size_t>& ks);

nlohmann::ordered_json report_json(const EvalReport& report);
/// Aligned text table, one column per metric, values in percent.
std::string report_table(const EvalReport& report, const std::string& label = "run");

}  // namespace qamine::eval
