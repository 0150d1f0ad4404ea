// kmmd: command-line front end for corpus ingestion, embedding, MMD tests and
// text metrics. Exit codes: 0 ok, 1 usage, 2 data/validation, 3 provider/network.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "kmmd/kmmd.hpp"

namespace fs = std::filesystem;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kProvider = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  // inputs
  std::string input;
  std::string field;
  std::string generated;
  std::string input_format = "auto";
  std::string id_col = "id";
  std::string text_col = "text";
  std::string category_col = "category";
  std::string seq_col = "seq";

  // embeddings
  std::string cache;
  std::string provider = "http";
  std::string base_url = kmmd::ProviderConfig{}.base_url;
  std::string model = kmmd::ProviderConfig{}.model;
  std::string api_key_env = kmmd::ProviderConfig{}.api_key_env;
  std::size_t batch_size = kmmd::ProviderConfig{}.batch_size;
  std::size_t max_retries = kmmd::ProviderConfig{}.max_retries;
  std::size_t timeout_ms = 60'000;
  std::size_t max_in_flight = kmmd::ProviderConfig{}.max_in_flight;
  std::size_t mock_dim = 64;

  // kernel and test
  std::string kernel = "poly2";
  int degree = 2;
  std::string bandwidth = "median";
  bool normalize = true;
  std::size_t permutations = kmmd::kDefaultPermutations;
  double alpha = kmmd::kDefaultAlpha;
  std::uint64_t seed = kmmd::kDefaultSeed;
  std::size_t threads = kmmd::default_thread_count();
  std::size_t memory_budget_mb = 2048;

  // analyses
  std::size_t min_group = kmmd::kDefaultMinGroup;
  std::size_t window_size = kmmd::kDefaultWindowSize;
  std::vector<std::size_t> sizes{5, 10, 20, 50};
  std::size_t trials = 100;
  std::size_t top_k = 50;
  std::size_t ma_window = 301;
  bool sum_surprisal = false;
  bool stopwords = true;
  std::vector<std::string> extra_stopwords;
  bool case_fold = false;
  std::string names = "brands";
  std::string histogram_out;

  // output
  std::string format = "csv";
  std::string out;
};

// ---------------------------------------------------------------------------
// option groups

void add_output(CLI::App* cmd, Options& o, bool json_allowed = true) {
  if (json_allowed) {
    cmd->add_option("--format", o.format, "Report format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
  }
  cmd->add_option("--out", o.out, "Output file (stdout when omitted)");
}

void add_corpus_mapping(CLI::App* cmd, Options& o) {
  cmd->add_option("--input-format", o.input_format, "Corpus format")
      ->check(CLI::IsMember({"auto", "csv", "jsonl"}))
      ->capture_default_str();
  cmd->add_option("--id-col", o.id_col, "Id column/key")->capture_default_str();
  cmd->add_option("--text-col", o.text_col, "Text column/key")->capture_default_str();
  cmd->add_option("--category-col", o.category_col, "Category column/key ('' to ignore)")->capture_default_str();
  cmd->add_option("--seq-col", o.seq_col, "Generation-order column/key ('' to ignore)")->capture_default_str();
}

void add_tokenizer(CLI::App* cmd, Options& o) {
  cmd->add_option("--stopwords", o.stopwords, "Remove English stopwords {true|false}")->capture_default_str();
  cmd->add_option("--extra-stopwords", o.extra_stopwords, "Additional words to drop");
}

void add_embedding(CLI::App* cmd, Options& o) {
  cmd->add_option("--cache", o.cache, "Embedding cache file (EMB1)");
  cmd->add_option("--provider", o.provider, "Embedding provider")
      ->check(CLI::IsMember({"http", "mock"}))
      ->capture_default_str();
  cmd->add_option("--base-url", o.base_url, "Embeddings endpoint base URL")->capture_default_str();
  cmd->add_option("--model", o.model, "Embedding model")->capture_default_str();
  cmd->add_option("--api-key-env", o.api_key_env, "Environment variable holding the API key")->capture_default_str();
  cmd->add_option("--batch-size", o.batch_size, "Texts per request")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--max-retries", o.max_retries, "Retries per request")->capture_default_str();
  cmd->add_option("--timeout-ms", o.timeout_ms, "Request timeout")->capture_default_str();
  cmd->add_option("--max-in-flight", o.max_in_flight, "Concurrent requests")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--mock-dim", o.mock_dim, "Dimension of mock-provider vectors")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

void add_compute(CLI::App* cmd, Options& o) {
  cmd->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--memory-budget-mb", o.memory_budget_mb, "Memory budget for kernel matrices")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

void add_test(CLI::App* cmd, Options& o) {
  add_embedding(cmd, o);
  add_compute(cmd, o);
  cmd->add_option("--kernel", o.kernel, "Kernel family")
      ->check(CLI::IsMember({"linear", "poly2", "rbf"}))
      ->capture_default_str();
  cmd->add_option("--degree", o.degree, "Polynomial degree")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--bandwidth", o.bandwidth, "RBF bandwidth: a number or 'median'")
      ->check(CLI::Validator(
          [](std::string& v) -> std::string {
            if (v == "median") return {};
            double h = 0.0;
            return CLI::detail::lexical_cast(v, h) && h > 0.0 ? std::string{} : "expected a positive number or 'median'";
          },
          "NUMBER|median"))
      ->capture_default_str();
  cmd->add_option("--normalize", o.normalize, "L2-normalize embeddings {true|false}")->capture_default_str();
  cmd->add_option("--permutations", o.permutations, "Permutation count")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--alpha", o.alpha, "Level of the two-sided null band")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  cmd->add_option("--seed", o.seed, "Master seed")->capture_default_str();
}

// ---------------------------------------------------------------------------
// helpers

kmmd::Corpus read_corpus(const std::string& path, const Options& o) {
  if (path.empty()) throw UsageError("missing corpus path");
  kmmd::FieldMapping mapping{o.id_col, o.text_col, o.category_col, o.seq_col};
  const auto format = o.input_format == "auto"  ? kmmd::corpus_format_from_path(path)
                      : o.input_format == "csv" ? kmmd::CorpusFormat::csv
                                                : kmmd::CorpusFormat::jsonl;
  return kmmd::load_corpus(path, format, mapping);
}

kmmd::TokenizerConfig tokenizer(const Options& o) {
  kmmd::TokenizerConfig config;
  config.remove_stopwords = o.stopwords;
  config.extra_stopwords = o.extra_stopwords;
  return config;
}

kmmd::ProviderConfig provider_config(const Options& o) {
  kmmd::ProviderConfig config;
  config.base_url = o.base_url;
  config.model = o.model;
  config.api_key_env = o.api_key_env;
  config.batch_size = o.batch_size;
  config.max_retries = o.max_retries;
  config.timeout = std::chrono::milliseconds(o.timeout_ms);
  config.max_in_flight = o.max_in_flight;
  return config;
}

kmmd::EmbeddingMatrix embed(const kmmd::Corpus& corpus, const Options& o) {
  const auto config = provider_config(o);
  std::optional<fs::path> cache;
  if (!o.cache.empty()) cache = o.cache;
  if (o.provider == "mock") {
    return kmmd::embed_corpus(corpus, config, kmmd::MockProvider(o.mock_dim, o.model), cache);
  }
  return kmmd::embed_corpus(corpus, config, kmmd::HttpProvider(config), cache);
}

kmmd::EmbeddingMatrix prepare(kmmd::EmbeddingMatrix m, const Options& o) {
  return o.normalize ? kmmd::normalize_rows(m) : m;
}

/// EMB1 files load directly; anything else is read as a corpus and embedded.
kmmd::EmbeddingMatrix embeddings_for(const std::string& path, const Options& o) {
  if (path.empty()) throw UsageError("missing input path");
  if (!fs::exists(path)) throw kmmd::DataError("missing file " + path);
  if (kmmd::is_embedding_file(path)) return prepare(kmmd::load_embeddings(path), o);
  return prepare(embed(read_corpus(path, o), o), o);
}

kmmd::AnalysisSettings settings(const Options& o) {
  kmmd::AnalysisSettings s;
  if (o.kernel == "linear") {
    s.spec = kmmd::KernelSpec::linear();
  } else if (o.kernel == "poly2") {
    s.spec = kmmd::KernelSpec::polynomial(o.degree);
  } else if (o.bandwidth == "median") {
    s.spec = kmmd::KernelSpec::rbf_median();
  } else {
    double h = 0.0;
    try {
      std::size_t used = 0;
      h = std::stod(o.bandwidth, &used);
      if (used != o.bandwidth.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw UsageError("--bandwidth must be a number or 'median', got '" + o.bandwidth + "'");
    }
    s.spec = kmmd::KernelSpec::rbf(h);
  }
  s.permutations = o.permutations;
  s.alpha = o.alpha;
  s.seed = o.seed;
  s.plan.threads = o.threads;
  s.plan.memory_budget = o.memory_budget_mb << 20;
  return s;
}

void emit(const Options& o, const std::function<void(std::ostream&)>& csv_writer,
          const std::function<nlohmann::ordered_json()>& json_writer) {
  std::ostringstream buffer;
  if (o.format == "json") {
    buffer << json_writer().dump(2) << '\n';
  } else {
    csv_writer(buffer);
  }
  if (o.out.empty()) {
    std::cout << buffer.str();
    return;
  }
  std::ofstream file(o.out, std::ios::binary | std::ios::trunc);
  if (!file) throw kmmd::DataError("cannot write " + o.out);
  file << buffer.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw kmmd::DataError("cannot write " + path);
  file << text;
}

std::vector<std::string> names_for(const kmmd::Corpus& corpus, const Options& o) {
  if (o.names == "titles") {
    std::vector<std::string> titles;
    for (const auto& doc : corpus) titles.push_back(kmmd::utf8::trim(doc.text));
    return titles;
  }
  return kmmd::extract_brand_names(corpus);
}

// ---------------------------------------------------------------------------
// subcommands

void run_ingest(const Options& o) {
  const auto corpus = read_corpus(o.input, o);
  std::cerr << "ingested " << corpus.size() << " documents from " << o.input << '\n';
  if (o.out.empty()) std::cout << kmmd::to_jsonl(corpus);
  else kmmd::save_corpus(corpus, o.out);
}

void run_embed(const Options& o) {
  if (o.out.empty()) throw UsageError("embed requires --out");
  const auto corpus = read_corpus(o.input, o);
  const auto m = embed(corpus, o);
  kmmd::save_embeddings(m, o.out);
  std::cerr << "embedded " << m.rows() << " documents, dim " << m.dim() << '\n';
}

void run_compare(const Options& o) {
  const auto s = settings(o);
  const auto field = embeddings_for(o.field, o);
  const auto generated = embeddings_for(o.generated, o);
  kmmd::GroupReport report;
  report.config_digest = kmmd::config_digest("compare", s,
                                             {{"model_a", field.model()},
                                              {"model_b", generated.model()},
                                              {"normalized", o.normalize ? "true" : "false"}});
  report.overall = kmmd::mmd_test(field, generated, s.spec, s.permutations, s.alpha, s.seed, s.plan);
  emit(o, [&](std::ostream& os) { kmmd::write_csv(os, report); }, [&] { return kmmd::to_json(report); });
}

void run_categories(const Options& o) {
  const auto s = settings(o);
  const auto field_corpus = read_corpus(o.field, o);
  const auto generated_corpus = read_corpus(o.generated, o);
  const auto field = prepare(embed(field_corpus, o), o);
  const auto generated = prepare(embed(generated_corpus, o), o);
  const auto report = kmmd::category_mmd({field_corpus, field}, {generated_corpus, generated}, s, o.min_group);
  if (report.omitted_documents > 0) {
    std::cerr << "note: " << report.omitted_documents << " field document(s) in a too-small Other group were not tested\n";
  }
  emit(o, [&](std::ostream& os) { kmmd::write_csv(os, report); }, [&] { return kmmd::to_json(report); });
}

void run_windows(const Options& o) {
  const auto s = settings(o);
  const auto generated_corpus = read_corpus(o.generated, o);
  const auto field_corpus = read_corpus(o.field, o);
  const auto generated = prepare(embed(generated_corpus, o), o);
  const auto field = prepare(embed(field_corpus, o), o);
  const auto report = kmmd::window_mmd({generated_corpus, generated}, {field_corpus, field}, s, o.window_size);
  emit(o, [&](std::ostream& os) { kmmd::write_csv(os, report); }, [&] { return kmmd::to_json(report); });
}

void run_sweep(const Options& o) {
  const auto s = settings(o);
  const auto field = embeddings_for(o.field, o);
  const auto generated = embeddings_for(o.generated, o);
  const auto report = kmmd::sample_size_sweep(field, generated, o.sizes, o.trials, s);
  emit(o, [&](std::ostream& os) { kmmd::write_csv(os, report); }, [&] { return kmmd::to_json(report); });
}

void run_entropy(const Options& o) {
  const auto corpus = read_corpus(o.input, o);
  std::optional<std::size_t> window;
  if (o.ma_window > 0) window = o.ma_window;
  const auto series = kmmd::entropy_series(corpus, tokenizer(o), window,
                                           o.sum_surprisal ? kmmd::SurprisalMode::sum : kmmd::SurprisalMode::mean);
  emit(o, [&](std::ostream& os) { kmmd::write_csv(os, series); }, [&] { return kmmd::to_json(series); });
}

void run_levenshtein(const Options& o) {
  const auto corpus = read_corpus(o.input, o);
  const auto names = kmmd::unique_strings(names_for(corpus, o), o.case_fold);
  const auto summary = kmmd::pairwise_levenshtein_summary(names, {o.case_fold, o.threads});
  emit(o, [&](std::ostream& os) { kmmd::write_csv(os, summary); },
       [&] {
         auto j = kmmd::to_json(summary);
         j["unique_names"] = names.size();
         return j;
       });
  if (!o.histogram_out.empty()) {
    std::ostringstream hist;
    kmmd::write_histogram_csv(hist, summary);
    write_text(o.histogram_out, hist.str());
  }
}

void run_dupes(const Options& o) {
  const auto corpus = read_corpus(o.input, o);
  const auto names = names_for(corpus, o);
  if (names.empty()) throw kmmd::DataError("no titles with a brand name (text before ':')");
  const auto profile = kmmd::duplication_profile(names);
  emit(o, [&](std::ostream& os) { kmmd::write_csv(os, profile); },
       [&] {
         auto j = kmmd::to_json(profile);
         j["documents"] = corpus.size();
         return j;
       });
}

void run_freq(const Options& o) {
  const auto corpus = read_corpus(o.input, o);
  const auto ranked = kmmd::word_frequency_report(corpus, tokenizer(o), o.top_k);
  emit(o, [&](std::ostream& os) { kmmd::write_frequency_csv(os, ranked); },
       [&] { return kmmd::frequency_json(ranked); });
}

void run_cosine(const Options& o) {
  const auto s = settings(o);
  const auto x = embeddings_for(o.field, o);
  const auto y = o.generated.empty() ? x : embeddings_for(o.generated, o);
  const auto m = kmmd::cosine_similarity_matrix(x, y, s.plan);
  std::ostringstream buffer;
  kmmd::write_matrix_csv(buffer, x.ids(), y.ids(), m);
  if (o.out.empty()) std::cout << buffer.str();
  else write_text(o.out, buffer.str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kernel MMD two-sample testing of text corpora, with supporting text metrics"};
  app.set_config("--config", "", "TOML config file; command-line flags take precedence");
  app.require_subcommand(1);
  Options o;

  auto* ingest = app.add_subcommand("ingest", "Validate a corpus and write canonical JSONL");
  ingest->add_option("--input", o.input, "Corpus file (csv or jsonl)")->required();
  add_corpus_mapping(ingest, o);
  add_output(ingest, o, false);

  auto* embed_cmd = app.add_subcommand("embed", "Embed a corpus into an EMB1 file via the cache/provider");
  embed_cmd->add_option("--input", o.input, "Corpus file")->required();
  add_corpus_mapping(embed_cmd, o);
  add_embedding(embed_cmd, o);
  embed_cmd->add_option("--out", o.out, "Output EMB1 file")->required();

  auto* compare = app.add_subcommand("compare", "Permutation MMD test between two samples");
  compare->add_option("--field", o.field, "Field corpus or EMB1 file")->required();
  compare->add_option("--generated", o.generated, "Generated corpus or EMB1 file")->required();
  add_corpus_mapping(compare, o);
  add_test(compare, o);
  add_output(compare, o);

  auto* categories = app.add_subcommand("categories", "Per-category MMD table");
  categories->add_option("--field", o.field, "Field corpus with categories")->required();
  categories->add_option("--generated", o.generated, "Generated corpus")->required();
  categories->add_option("--min-group", o.min_group, "Minimum documents for a category row")->capture_default_str();
  add_corpus_mapping(categories, o);
  add_test(categories, o);
  add_output(categories, o);

  auto* windows = app.add_subcommand("windows", "Per-window MMD table over generation order");
  windows->add_option("--generated", o.generated, "Generated corpus with seq order")->required();
  windows->add_option("--field", o.field, "Field corpus")->required();
  windows->add_option("--window-size", o.window_size, "Documents per window")->capture_default_str();
  add_corpus_mapping(windows, o);
  add_test(windows, o);
  add_output(windows, o);

  auto* sweep = app.add_subcommand("sweep", "Rejection rate and null band across sample sizes");
  sweep->add_option("--field", o.field, "Field corpus or EMB1 file")->required();
  sweep->add_option("--generated", o.generated, "Generated corpus or EMB1 file")->required();
  sweep->add_option("--sizes", o.sizes, "Sample sizes")->delimiter(',')->capture_default_str();
  sweep->add_option("--trials", o.trials, "Experiments per size")->check(CLI::PositiveNumber)->capture_default_str();
  add_corpus_mapping(sweep, o);
  add_test(sweep, o);
  add_output(sweep, o);

  auto* entropy = app.add_subcommand("entropy", "Per-title surprisal series in generation order");
  entropy->add_option("--input", o.input, "Corpus file")->required();
  entropy->add_option("--window", o.ma_window, "Centered moving-average width (odd; 0 disables)")
      ->capture_default_str();
  entropy->add_flag("--sum", o.sum_surprisal, "Sum per-word surprisal instead of averaging");
  add_corpus_mapping(entropy, o);
  add_tokenizer(entropy, o);
  add_output(entropy, o);

  auto* lev = app.add_subcommand("levenshtein", "Pairwise edit-distance summary of unique names");
  lev->add_option("--input", o.input, "Corpus file")->required();
  lev->add_option("--names", o.names, "Strings to compare")
      ->check(CLI::IsMember({"brands", "titles"}))
      ->capture_default_str();
  lev->add_flag("--case-fold", o.case_fold, "Compare case-insensitively");
  lev->add_option("--histogram-out", o.histogram_out, "Also write (distance, pairs) CSV here");
  lev->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  add_corpus_mapping(lev, o);
  add_output(lev, o);

  auto* dupes = app.add_subcommand("dupes", "Brand-name duplication profile");
  dupes->add_option("--input", o.input, "Corpus file")->required();
  dupes->add_option("--names", o.names, "Strings to count")
      ->check(CLI::IsMember({"brands", "titles"}))
      ->capture_default_str();
  add_corpus_mapping(dupes, o);
  add_output(dupes, o);

  auto* freq = app.add_subcommand("freq", "Word-frequency table");
  freq->add_option("--input", o.input, "Corpus file")->required();
  freq->add_option("--top-k", o.top_k, "Rows to emit")->check(CLI::PositiveNumber)->capture_default_str();
  add_corpus_mapping(freq, o);
  add_tokenizer(freq, o);
  add_output(freq, o);

  auto* cosine = app.add_subcommand("cosine", "Cosine-similarity matrix as CSV");
  cosine->add_option("--field", o.field, "Rows: corpus or EMB1 file")->required();
  cosine->add_option("--generated", o.generated, "Columns: corpus or EMB1 file (defaults to --field)");
  add_corpus_mapping(cosine, o);
  add_test(cosine, o);
  cosine->add_option("--out", o.out, "Output CSV (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*ingest) run_ingest(o);
    else if (*embed_cmd) run_embed(o);
    else if (*compare) run_compare(o);
    else if (*categories) run_categories(o);
    else if (*windows) run_windows(o);
    else if (*sweep) run_sweep(o);
    else if (*entropy) run_entropy(o);
    else if (*lev) run_levenshtein(o);
    else if (*dupes) run_dupes(o);
    else if (*freq) run_freq(o);
    else if (*cosine) run_cosine(o);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const kmmd::ProviderError& e) {
    std::cerr << "provider error: " << e.what() << '\n';
    return kProvider;
  } catch (const kmmd::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kOk;
}
