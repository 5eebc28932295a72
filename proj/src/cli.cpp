#include "qamine/cli.hpp"

#include <chrono>
#include <fstream>
#include <map>
#include <optional>
#include <set>

#include "CLI11.hpp"
#include "qamine/corpus.hpp"
#include "qamine/decontam.hpp"
#include "qamine/encoder.hpp"
#include "qamine/eval.hpp"
#include "qamine/ingest.hpp"
#include "qamine/io.hpp"
#include "qamine/retrieval.hpp"
#include "qamine/text.hpp"

namespace qamine::cli {

namespace {

using nlohmann::ordered_json;

Timestamp now() {
  using namespace std::chrono;
  return Timestamp(duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count());
}

void require_input(const fs::path& path) {
  if (!fs::exists(path)) throw InputNotFound("input not found: " + path.string());
}

/// Reproducibility record written next to each run's outputs.
class Manifest {
 public:
  Manifest(std::string subcommand, std::vector<std::string> command_line)
      : subcommand_(std::move(subcommand)), command_line_(std::move(command_line)), started_(now()) {}

  void set_config(ordered_json config) { config_ = std::move(config); }
  void set_seed(std::uint64_t seed) { seed_ = seed; }
  void input(const fs::path& path) { inputs_.push_back(path); }
  void output(const fs::path& path) { outputs_.push_back(path); }

  void write(const fs::path& path) const {
    ordered_json j;
    j["tool"] = "qamine";
    j["tool_version"] = kToolVersion;
    j["subcommand"] = subcommand_;
    j["command_line"] = command_line_;
    j["config"] = config_;
    j["seed"] = seed_ ? ordered_json(*seed_) : ordered_json(nullptr);
    auto digests = [](const std::vector<fs::path>& paths) {
      ordered_json d = ordered_json::object();
      for (const auto& p : paths) d[p.string()] = sha256_file(p);
      return d;
    };
    j["inputs"] = digests(inputs_);
    j["outputs"] = digests(outputs_);
    j["started_at"] = started_.to_iso8601();
    j["finished_at"] = now().to_iso8601();
    write_file_atomic(path, dump_json(j));
  }

 private:
  std::string subcommand_;
  std::vector<std::string> command_line_;
  ordered_json config_ = ordered_json::object();
  std::optional<std::uint64_t> seed_;
  std::vector<fs::path> inputs_;
  std::vector<fs::path> outputs_;
  Timestamp started_;
};

ordered_json resolved_config(const CLI::App& sub) {
  ordered_json j = ordered_json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string& name = opt->get_single_name();
    if (name == "help" || name.empty()) continue;
    if (opt->count() > 0) {
      if (opt->get_type_size() == 0) {
        j[name] = true;
      } else {
        const auto& results = opt->results();
        j[name] = results.size() == 1 ? ordered_json(results.front()) : ordered_json(results);
      }
    } else if (opt->get_type_size() == 0) {
      j[name] = false;
    } else {
      j[name] = opt->get_default_str();
    }
  }
  return j;
}

/// Appends options from a JSON config file for every key the command line
/// does not already set.
std::vector<std::string> merge_config_file(std::vector<std::string> args) {
  std::optional<std::string> config_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
    if (args[i].starts_with("--config=")) config_path = args[i].substr(9);
  }
  if (!config_path) return args;
  require_input(*config_path);
  nlohmann::json cfg;
  try {
    cfg = nlohmann::json::parse(read_file(*config_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file " + *config_path + ": " + e.what());
  }
  if (!cfg.is_object()) throw ConfigError("config file must hold a JSON object");
  auto given = [&](const std::string& key) {
    for (const auto& a : args) {
      if (a == "--" + key || a.starts_with("--" + key + "=")) return true;
    }
    return false;
  };
  auto scalar = [](const nlohmann::json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
  for (const auto& [key, value] : cfg.items()) {
    if (key == "config" || given(key)) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) args.push_back("--" + key);
    } else if (value.is_array()) {
      for (const auto& v : value) {
        args.push_back("--" + key);
        args.push_back(scalar(v));
      }
    } else {
      args.push_back("--" + key);
      args.push_back(scalar(value));
    }
  }
  return args;
}

fs::path with_suffix(const fs::path& p, const std::string& suffix) {
  fs::path out = p;
  out += suffix;
  return out;
}

// ---------------------------------------------------------------------------
// Subcommands

struct IngestOpts {
  std::string posts, out, diagnostics;
};

void run_ingest(const IngestOpts& o, Manifest& m, std::ostream& log) {
  require_input(o.posts);
  std::ifstream in(o.posts, std::ios::binary);
  if (!in) throw InputNotFound("cannot open " + o.posts);
  ingest::PostReader reader(in);
  ingest::QAAssembler assembler;
  while (auto post = reader.next()) assembler.add(std::move(*post));
  auto pairs = assembler.finish();
  write_pairs_jsonl(o.out, pairs);
  fs::path diag = o.diagnostics.empty() ? with_suffix(o.out, ".diagnostics.json") : fs::path(o.diagnostics);
  write_file_atomic(diag, dump_json(ingest::diagnostics_json(reader.report(), assembler.report())));
  m.input(o.posts);
  m.output(o.out);
  m.output(diag);
  m.write(with_suffix(o.out, ".manifest.json"));
  log << "ingest: " << pairs.size() << " pairs from " << reader.report().rows_read << " rows\n";
}

struct FilterOpts {
  std::string in, out_dir;
  std::int64_t min_chars = 20;
  std::int64_t max_chars = 4096;
  std::vector<std::string> languages = corpus::default_languages();
};

void run_filter(const FilterOpts& o, Manifest& m, std::ostream& log) {
  corpus::FilterConfig cfg{o.min_chars, o.max_chars, o.languages};
  cfg.validate();
  require_input(o.in);
  auto pairs = read_pairs_jsonl(o.in);
  std::vector<QAPair> kept;
  std::int64_t too_short = 0;
  std::int64_t too_long = 0;
  for (auto& p : pairs) {
    auto d = corpus::length_filter(p, cfg);
    if (d.keep) kept.push_back(std::move(p));
    else if (d.reason == corpus::DropReason::TooShort) ++too_short;
    else ++too_long;
  }
  auto parts = corpus::partition_by_language(kept, cfg);
  ordered_json report;
  report["input"] = pairs.size();
  report["kept"] = kept.size();
  report["dropped_too_short"] = too_short;
  report["dropped_too_long"] = too_long;
  report["discarded_no_language"] = parts.discarded_no_language;
  report["multi_language_pairs"] = parts.multi_language_pairs;
  ordered_json subsets = ordered_json::object();
  m.input(o.in);
  for (const auto& lang : cfg.languages) {
    const auto& subset = parts.subsets[lang];
    subsets[lang] = subset.size();
    if (subset.empty()) continue;
    fs::path out = fs::path(o.out_dir) / (lang + ".jsonl");
    write_pairs_jsonl(out, subset);
    m.output(out);
  }
  report["subsets"] = std::move(subsets);
  fs::path report_path = fs::path(o.out_dir) / "filter_report.json";
  write_file_atomic(report_path, dump_json(report));
  m.output(report_path);
  m.write(fs::path(o.out_dir) / "filter.manifest.json");
  log << "filter: kept " << kept.size() << " of " << pairs.size() << " pairs\n";
}

struct SplitOpts {
  std::string in_dir, out_dir;
  std::vector<std::string> languages = corpus::default_languages();
  std::vector<double> ratios{0.8, 0.1, 0.1};
  bool allow_small = false;
};

void run_split(const SplitOpts& o, Manifest& m, std::ostream& log) {
  if (o.ratios.size() != 3) throw ConfigError("--ratios needs three values");
  corpus::SplitRatios ratios{o.ratios[0], o.ratios[1], o.ratios[2]};
  if (!fs::is_directory(o.in_dir)) throw InputNotFound("input directory not found: " + o.in_dir);
  ordered_json report = ordered_json::object();
  for (const auto& lang : o.languages) {
    fs::path in = fs::path(o.in_dir) / (lang + ".jsonl");
    if (!fs::exists(in)) continue;
    auto split = corpus::chronological_split(read_pairs_jsonl(in), lang, ratios, o.allow_small);
    m.input(in);
    for (auto [name, part] : {std::pair{"train", &split.train}, {"valid", &split.valid}, {"test", &split.test}}) {
      fs::path out = fs::path(o.out_dir) / (lang + "." + name + ".jsonl");
      write_pairs_jsonl(out, *part);
      m.output(out);
    }
    report[lang] = {{"train", split.train.size()}, {"valid", split.valid.size()}, {"test", split.test.size()}};
    log << "split: " << lang << " " << split.train.size() << "/" << split.valid.size() << "/"
        << split.test.size() << "\n";
  }
  fs::path report_path = fs::path(o.out_dir) / "split_report.json";
  write_file_atomic(report_path, dump_json(report));
  m.output(report_path);
  m.write(fs::path(o.out_dir) / "split.manifest.json");
}

struct StatsOpts {
  std::string in_dir, out;
  std::vector<std::string> languages = corpus::default_languages();
  std::string suffix = ".jsonl";
};

void run_stats(const StatsOpts& o, Manifest& m, std::ostream& log) {
  if (!fs::is_directory(o.in_dir)) throw InputNotFound("input directory not found: " + o.in_dir);
  std::map<std::string, std::vector<QAPair>> subsets;
  for (const auto& lang : o.languages) {
    fs::path in = fs::path(o.in_dir) / (lang + o.suffix);
    auto& subset = subsets[lang];
    if (!fs::exists(in)) continue;
    subset = read_pairs_jsonl(in);
    m.input(in);
  }
  auto stats = corpus::compute_stats(subsets);
  write_file_atomic(o.out, dump_json(corpus::stats_json(stats)));
  m.output(o.out);
  m.write(with_suffix(o.out, ".manifest.json"));
  log << "stats: " << stats.size() << " languages\n";
}

struct DecontamOpts {
  std::string in, out, report, dropped, mode = "both";
  std::vector<std::string> evals;
  int num_perm = 128;
  int shingle = 5;
  double threshold = 0.8;
  std::uint64_t seed = 1;
  bool no_banding = false;
};

std::vector<std::string> read_queries_jsonl(const fs::path& path) {
  require_input(path);
  std::ifstream in(path, std::ios::binary);
  std::vector<std::string> queries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      queries.push_back(nlohmann::json::parse(line).at("query").get<std::string>());
    } catch (const std::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return queries;
}

void run_decontaminate(const DecontamOpts& o, Manifest& m, std::ostream& log) {
  decontam::DecontamConfig cfg;
  cfg.num_permutations = o.num_perm;
  cfg.shingle_width = o.shingle;
  cfg.jaccard_threshold = o.threshold;
  cfg.seed = o.seed;
  cfg.use_banding = !o.no_banding;
  cfg.validate();
  decontam::Mode mode = o.mode == "substring" ? decontam::Mode::Substring
                        : o.mode == "fuzzy"   ? decontam::Mode::Fuzzy
                                              : decontam::Mode::Both;
  require_input(o.in);
  std::vector<decontam::EvalSet> sets;
  for (const auto& spec : o.evals) {
    auto eq = spec.find('=');
    fs::path path = eq == std::string::npos ? fs::path(spec) : fs::path(spec.substr(eq + 1));
    std::string name = eq == std::string::npos ? path.stem().string() : spec.substr(0, eq);
    sets.push_back({name, read_queries_jsonl(path)});
    m.input(path);
  }
  auto train = read_pairs_jsonl(o.in);
  m.input(o.in);
  decontam::DecontamReport rep;
  auto result = decontam::decontaminate(train, sets, cfg, mode, &rep);
  write_pairs_jsonl(o.out, result.kept);
  m.output(o.out);
  fs::path report_path = o.report.empty() ? with_suffix(o.out, ".contamination.json") : fs::path(o.report);
  write_file_atomic(report_path, dump_json(decontam::report_json(rep, cfg, mode)));
  m.output(report_path);
  if (!o.dropped.empty()) {
    write_pairs_jsonl(o.dropped, result.dropped);
    m.output(o.dropped);
  }
  m.set_seed(o.seed);
  m.write(with_suffix(o.out, ".manifest.json"));
  log << "decontaminate: kept " << rep.kept << " of " << rep.input << " (" << rep.dropped_substring
      << " substring, " << rep.dropped_fuzzy << " fuzzy)\n";
}

struct TrainOpts {
  std::string data_dir, out, loss_trace, sampler_manifest, split = "train";
  std::vector<std::string> languages = corpus::default_languages();
  std::int64_t steps = 1000;
  std::size_t batch_size = 32;
  double alpha = 0.5;
  std::uint64_t seed = 0;
  double lr = 0.01;
  double warmup = 0.1;
  std::uint32_t dim = encoder::kDefaultDim;
  std::uint32_t embed_dim = encoder::kDefaultEmbedDim;
  double temperature = encoder::kDefaultTemperature;
  bool symmetric = false;
};

void run_train(const TrainOpts& o, Manifest& m, std::ostream& log) {
  if (!fs::is_directory(o.data_dir)) throw InputNotFound("data directory not found: " + o.data_dir);
  std::vector<encoder::LanguageSubset> subsets;
  std::vector<std::string> names;
  for (const auto& lang : o.languages) {
    fs::path in = fs::path(o.data_dir) / (lang + "." + o.split + ".jsonl");
    if (!fs::exists(in)) continue;
    m.input(in);
    auto subset = encoder::make_subset(lang, read_pairs_jsonl(in), o.dim);
    if (subset.queries.empty()) continue;
    names.push_back(lang);
    subsets.push_back(std::move(subset));
  }
  if (subsets.empty()) throw DataError("no non-empty training subsets in " + o.data_dir);

  encoder::TrainConfig cfg;
  cfg.steps = o.steps;
  cfg.batch_size = o.batch_size;
  cfg.alpha = o.alpha;
  cfg.seed = o.seed;
  cfg.peak_lr = o.lr;
  cfg.warmup_fraction = o.warmup;
  cfg.loss.symmetric = o.symmetric;
  auto model = encoder::EncoderModel::initialize(o.dim, o.embed_dim, o.temperature, o.seed);
  auto result = encoder::train(std::move(model), subsets, cfg);

  result.model.save(o.out);
  fs::path trace = o.loss_trace.empty() ? with_suffix(o.out, ".loss.csv") : fs::path(o.loss_trace);
  write_file_atomic(trace, encoder::loss_trace_csv(result.trace));
  fs::path sampler = o.sampler_manifest.empty() ? with_suffix(o.out, ".sampler.json") : fs::path(o.sampler_manifest);
  write_file_atomic(sampler, dump_json(sampling::sampler_manifest(result.weights, names, o.batch_size, o.seed)));
  m.output(o.out);
  m.output(trace);
  m.output(sampler);
  m.set_seed(o.seed);
  m.write(with_suffix(o.out, ".manifest.json"));
  log << "train: " << o.steps << " steps, final loss " << result.trace.back().loss << "\n";
}

/// Answers keyed by question id. The same pair may appear in several
/// language files; conflicting texts for one id are rejected.
retrieval::Corpus load_answer_corpus(const std::vector<std::string>& files, Manifest& m) {
  std::map<std::int64_t, std::string> docs;
  for (const auto& f : files) {
    require_input(f);
    m.input(f);
    for (auto& p : read_pairs_jsonl(f)) {
      auto [it, inserted] = docs.emplace(p.question_id, std::move(p.answer));
      if (!inserted && it->second != p.answer) {
        throw DataError("question " + std::to_string(p.question_id) + " has conflicting answers across inputs");
      }
    }
  }
  retrieval::Corpus corpus;
  for (auto& [id, text] : docs) corpus.docs.emplace_back(id, std::move(text));
  return corpus;
}

struct IndexOpts {
  std::vector<std::string> corpus;
  std::string kind = "bm25", model, out;
  double k1 = 1.2;
  double b = 0.75;
};

void run_index(const IndexOpts& o, Manifest& m, std::ostream& log) {
  auto corpus = load_answer_corpus(o.corpus, m);
  if (o.kind == "bm25") {
    retrieval::Bm25Params params;
    params.k1 = o.k1;
    params.b = o.b;
    retrieval::save_index(o.out, retrieval::build_bm25_index(corpus, params));
  } else if (o.kind == "dense") {
    if (o.model.empty()) throw ConfigError("--model is required for a dense index");
    require_input(o.model);
    m.input(o.model);
    auto model = encoder::EncoderModel::load(o.model);
    auto index = retrieval::build_dense_index(model, corpus);
    for (const auto& [id, why] : index.skipped()) log << "index: skipped doc " << id << ": " << why << "\n";
    retrieval::save_index(o.out, index);
  } else {
    throw ConfigError("--kind must be bm25 or dense");
  }
  m.output(o.out);
  m.write(with_suffix(o.out, ".manifest.json"));
  log << "index: " << o.kind << " over " << corpus.docs.size() << " documents\n";
}

struct SearchOpts {
  std::string index, model, out, qrels_out;
  std::vector<std::string> queries;
  std::size_t k = 100;
};

void run_search(const SearchOpts& o, Manifest& m, std::ostream& log) {
  if (o.k == 0) throw ConfigError("--k must be >= 1");
  require_input(o.index);
  m.input(o.index);
  auto index = retrieval::load_index(o.index);
  std::optional<encoder::EncoderModel> model;
  std::vector<std::pair<std::string, std::string>> header;
  if (std::holds_alternative<retrieval::DenseIndex>(index)) {
    if (o.model.empty()) throw ConfigError("--model is required to search a dense index");
    require_input(o.model);
    m.input(o.model);
    model = encoder::EncoderModel::load(o.model);
    header = {{"retriever", "dense"},
              {"model_fingerprint", model->fingerprint()},
              {"featurizer_version", std::to_string(encoder::kFeaturizerVersion)}};
  } else {
    const auto& bm = std::get<retrieval::Bm25Index>(index);
    char buf[32];
    header = {{"retriever", "bm25"}};
    std::snprintf(buf, sizeof(buf), "%g", bm.params().k1);
    header.emplace_back("k1", buf);
    std::snprintf(buf, sizeof(buf), "%g", bm.params().b);
    header.emplace_back("b", buf);
    header.emplace_back("idf", "ln(1+(N-df+0.5)/(df+0.5))");
  }
  header.emplace_back("tokenizer", "alnum+camel+underscore, lowercase");
  header.emplace_back("max_tokens", std::to_string(kMaxTokens));
  header.emplace_back("k", std::to_string(o.k));

  std::map<std::int64_t, std::string> queries;
  for (const auto& f : o.queries) {
    require_input(f);
    m.input(f);
    for (const auto& p : read_pairs_jsonl(f)) queries.emplace(p.question_id, query_text(p));
  }
  std::vector<retrieval::RunEntry> run;
  std::string qrels;
  for (const auto& [qid, text] : queries) {
    retrieval::RunEntry entry;
    entry.query_id = std::to_string(qid);
    if (model) {
      entry.results = retrieval::dense_search(std::get<retrieval::DenseIndex>(index), *model, text, o.k);
    } else {
      entry.results = retrieval::bm25_search(std::get<retrieval::Bm25Index>(index), text, o.k);
    }
    qrels += entry.query_id + "\t" + entry.query_id + "\n";
    run.push_back(std::move(entry));
  }
  write_file_atomic(o.out, retrieval::format_run(run, header));
  m.output(o.out);
  if (!o.qrels_out.empty()) {
    write_file_atomic(o.qrels_out, qrels);
    m.output(o.qrels_out);
  }
  m.write(with_suffix(o.out, ".manifest.json"));
  log << "search: " << run.size() << " queries\n";
}

struct EvalOpts {
  std::string run, qrels, out, label = "run";
  std::vector<std::size_t> ks{10, 100};
};

void run_eval(const EvalOpts& o, Manifest& m, std::ostream& out) {
  require_input(o.run);
  require_input(o.qrels);
  if (o.ks.empty() || std::find(o.ks.begin(), o.ks.end(), std::size_t{0}) != o.ks.end()) {
    throw ConfigError("--k needs positive cutoffs");
  }
  auto report = eval::evaluate_run(o.run, o.qrels, o.ks);
  auto table = eval::report_table(report, o.label);
  m.input(o.run);
  m.input(o.qrels);
  if (!o.out.empty()) {
    write_file_atomic(o.out, dump_json(eval::report_json(report)));
    write_file_atomic(with_suffix(o.out, ".txt"), table);
    m.output(o.out);
    m.output(with_suffix(o.out, ".txt"));
    m.write(with_suffix(o.out, ".manifest.json"));
  }
  out << table;
}

void emit_error(std::ostream& err, const std::string& kind, const std::string& message, int code) {
  ordered_json j;
  j["error"] = {{"kind", kind}, {"message", message}, {"exit_code", code}};
  err << j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << "\n";
}

}  // namespace

int run_command(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mine, clean and decontaminate community QA dumps; train and evaluate retrievers."};
  app.name("qamine");
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  app.set_version_flag("--version", kToolVersion);

  auto add_config = [](CLI::App* sub) {
    sub->add_option("--config", "JSON file of option values; command-line flags take precedence");
  };

  IngestOpts ingest_o;
  auto* ingest = app.add_subcommand("ingest", "Parse Posts.xml and join questions with accepted answers");
  ingest->add_option("--posts", ingest_o.posts, "Posts.xml dump file")->required();
  ingest->add_option("--out", ingest_o.out, "Output QA pairs (JSON lines)")->required();
  ingest->add_option("--diagnostics", ingest_o.diagnostics, "Diagnostics JSON (default: <out>.diagnostics.json)");
  add_config(ingest);

  FilterOpts filter_o;
  auto* filter = app.add_subcommand("filter", "Length-filter pairs and partition them by language tag");
  filter->add_option("--in", filter_o.in, "QA pairs (JSON lines)")->required();
  filter->add_option("--out-dir", filter_o.out_dir, "Directory for <lang>.jsonl subsets")->required();
  filter->add_option("--min-chars", filter_o.min_chars, "Drop fields shorter than this");
  filter->add_option("--max-chars", filter_o.max_chars, "Drop fields longer than this");
  filter->add_option("--languages", filter_o.languages, "Language tags")->delimiter(',');
  add_config(filter);

  SplitOpts split_o;
  auto* split = app.add_subcommand("split", "Chronological train/valid/test split per language");
  split->add_option("--in-dir", split_o.in_dir, "Directory with <lang>.jsonl")->required();
  split->add_option("--out-dir", split_o.out_dir, "Directory for <lang>.{train,valid,test}.jsonl")->required();
  split->add_option("--languages", split_o.languages, "Language tags")->delimiter(',');
  split->add_option("--ratios", split_o.ratios, "train,valid,test fractions")->delimiter(',')->expected(3);
  split->add_flag("--allow-small", split_o.allow_small, "Permit subsets with fewer than 3 pairs");
  add_config(split);

  StatsOpts stats_o;
  auto* stats = app.add_subcommand("stats", "Per-language counts and length histograms");
  stats->add_option("--in-dir", stats_o.in_dir, "Directory with <lang><suffix> files")->required();
  stats->add_option("--out", stats_o.out, "Stats JSON")->required();
  stats->add_option("--languages", stats_o.languages, "Language tags")->delimiter(',');
  stats->add_option("--suffix", stats_o.suffix, "File suffix after the language name");
  add_config(stats);

  DecontamOpts dec_o;
  auto* dec = app.add_subcommand("decontaminate", "Drop training pairs overlapping evaluation queries");
  dec->add_option("--in", dec_o.in, "Training pairs (JSON lines)")->required();
  dec->add_option("--out", dec_o.out, "Kept pairs (JSON lines)")->required();
  dec->add_option("--eval", dec_o.evals, "Eval query set as NAME=PATH (JSON lines with a 'query' key)")->required();
  dec->add_option("--report", dec_o.report, "Contamination report (default: <out>.contamination.json)");
  dec->add_option("--dropped", dec_o.dropped, "Write dropped pairs here");
  dec->add_option("--mode", dec_o.mode, "substring, fuzzy or both")
      ->check(CLI::IsMember({"substring", "fuzzy", "both"}));
  dec->add_option("--num-perm", dec_o.num_perm, "MinHash permutations");
  dec->add_option("--shingle", dec_o.shingle, "Shingle width in characters");
  dec->add_option("--threshold", dec_o.threshold, "Jaccard threshold for fuzzy drops");
  dec->add_option("--seed", dec_o.seed, "MinHash seed");
  dec->add_flag("--no-banding", dec_o.no_banding, "Compare every query signature instead of LSH bands");
  add_config(dec);

  TrainOpts train_o;
  auto* train = app.add_subcommand("train", "Contrastive training of the hashed-feature dual encoder");
  train->add_option("--data-dir", train_o.data_dir, "Directory with <lang>.<split>.jsonl")->required();
  train->add_option("--out", train_o.out, "Model checkpoint")->required();
  train->add_option("--languages", train_o.languages, "Language tags")->delimiter(',');
  train->add_option("--split", train_o.split, "Split name to train on");
  train->add_option("--loss-trace", train_o.loss_trace, "Loss CSV (default: <out>.loss.csv)");
  train->add_option("--sampler-manifest", train_o.sampler_manifest, "Sampler JSON (default: <out>.sampler.json)");
  train->add_option("--steps", train_o.steps, "Training steps");
  train->add_option("--batch-size", train_o.batch_size, "Pairs per batch (>= 2)");
  train->add_option("--alpha", train_o.alpha, "Subset sampling smoothing exponent");
  train->add_option("--seed", train_o.seed, "Seed for initialization and sampling");
  train->add_option("--lr", train_o.lr, "Peak learning rate");
  train->add_option("--warmup", train_o.warmup, "Warmup fraction of steps");
  train->add_option("--dim", train_o.dim, "Hashed feature dimension");
  train->add_option("--embed-dim", train_o.embed_dim, "Embedding dimension");
  train->add_option("--temperature", train_o.temperature, "Softmax temperature");
  train->add_flag("--symmetric", train_o.symmetric, "Also apply the document-to-query loss");
  add_config(train);

  IndexOpts index_o;
  auto* index = app.add_subcommand("index", "Build a BM25 or dense index over answers");
  index->add_option("--corpus", index_o.corpus, "QA pair files whose answers form the corpus")->required();
  index->add_option("--kind", index_o.kind, "bm25 or dense")->check(CLI::IsMember({"bm25", "dense"}));
  index->add_option("--model", index_o.model, "Encoder checkpoint (dense only)");
  index->add_option("--out", index_o.out, "Index file")->required();
  index->add_option("--k1", index_o.k1, "BM25 k1");
  index->add_option("--b", index_o.b, "BM25 b");
  add_config(index);

  SearchOpts search_o;
  auto* search = app.add_subcommand("search", "Retrieve answers for question+description queries");
  search->add_option("--index", search_o.index, "Index file")->required();
  search->add_option("--model", search_o.model, "Encoder checkpoint (dense index only)");
  search->add_option("--queries", search_o.queries, "QA pair files providing queries")->required();
  search->add_option("--k", search_o.k, "Results per query");
  search->add_option("--out", search_o.out, "Run file (TSV)")->required();
  search->add_option("--qrels-out", search_o.qrels_out, "Write qrels pairing each query with its own answer");
  add_config(search);

  EvalOpts eval_o;
  auto* ev = app.add_subcommand("eval", "Score a run file against qrels");
  ev->add_option("--run", eval_o.run, "Run file (TSV)")->required();
  ev->add_option("--qrels", eval_o.qrels, "Qrels file (TSV)")->required();
  ev->add_option("--k", eval_o.ks, "Cutoffs, e.g. 10,100,1000")->delimiter(',');
  ev->add_option("--out", eval_o.out, "Report JSON (a .txt table is written alongside)");
  ev->add_option("--label", eval_o.label, "Row label in the text table");
  add_config(ev);

  std::vector<std::string> args;
  try {
    args = merge_config_file(raw_args);
  } catch (const InputNotFound& e) {
    emit_error(err, e.kind(), e.what(), kNoInput);
    return kNoInput;
  } catch (const Error& e) {
    emit_error(err, e.kind(), e.what(), kUsage);
    return kUsage;
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << "\n";
    return kOk;
  } catch (const CLI::ParseError& e) {
    emit_error(err, "usage", e.what(), kUsage);
    return kUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  std::vector<std::string> command_line{"qamine"};
  command_line.insert(command_line.end(), args.begin(), args.end());
  Manifest manifest(sub->get_name(), command_line);
  manifest.set_config(resolved_config(*sub));

  try {
    if (sub == ingest) run_ingest(ingest_o, manifest, err);
    else if (sub == filter) run_filter(filter_o, manifest, err);
    else if (sub == split) run_split(split_o, manifest, err);
    else if (sub == stats) run_stats(stats_o, manifest, err);
    else if (sub == dec) run_decontaminate(dec_o, manifest, err);
    else if (sub == train) run_train(train_o, manifest, err);
    else if (sub == index) run_index(index_o, manifest, err);
    else if (sub == search) run_search(search_o, manifest, err);
    else if (sub == ev) run_eval(eval_o, manifest, out);
  } catch (const InputNotFound& e) {
    emit_error(err, e.kind(), e.what(), kNoInput);
    return kNoInput;
  } catch (const ConfigError& e) {
    emit_error(err, e.kind(), e.what(), kUsage);
    return kUsage;
  } catch (const DataError& e) {
    emit_error(err, e.kind(), e.what(), kDataError);
    return kDataError;
  } catch (const std::exception& e) {
    emit_error(err, "internal", e.what(), kFailure);
    return kFailure;
  }
  return kOk;
}

}  // namespace qamine::cli
