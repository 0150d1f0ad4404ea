// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "cli_support.hpp"
#include "kmmd/kmmd.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace kmmd;
using namespace kmmd::testing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

/// Rows around `center` with isotropic noise, optionally scaled to unit norm.
EmbeddingMatrix cluster(std::size_t n, const std::vector<double>& center, double sd, std::mt19937_64& rng,
                        bool normalize, const std::string& prefix) {
  auto m = make_matrix(gaussian_rows(n, center.size(), rng, center, sd), false, prefix);
  return normalize ? normalize_rows(m) : m;
}

std::vector<double> add(const std::vector<double>& a, const std::vector<double>& b, double t = 1.0) {
  std::vector<double> out(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) out[k] = a[k] + t * b[k];
  return out;
}

/// Unit vector orthogonal to `c`.
std::vector<double> orthogonal_unit(const std::vector<double>& c, std::mt19937_64& rng) {
  auto u = random_unit(c.size(), rng);
  const double proj = dot(u, c);
  for (std::size_t k = 0; k < u.size(); ++k) u[k] -= proj * c[k];
  const double norm = std::sqrt(dot(u, u));
  for (auto& v : u) v /= norm;
  return u;
}

// ---------------------------------------------------------------------------

Outcome oracle_equivalence() {
  const auto start = Clock::now();
  std::mt19937_64 rng(1001);
  double worst_poly = 0.0, worst_poly_independent = 0.0, worst_linear = 0.0;
  for (int instance = 0; instance < 100; ++instance) {
    const std::size_t m = 2 + rng() % 19;
    const std::size_t n = 2 + rng() % 19;
    const std::size_t d = 2 + rng() % 15;
    const auto x = make_matrix(gaussian_rows(m, d, rng));
    const auto y = make_matrix(gaussian_rows(n, d, rng, std::vector<double>(d, 0.5)));

    const double kernel_trick = mmd2_unbiased(x, y, KernelSpec::poly2());
    auto feature_rows = [](const Matrix& phi) {
      Rows out(static_cast<std::size_t>(phi.rows()));
      for (Eigen::Index i = 0; i < phi.rows(); ++i) out[static_cast<std::size_t>(i)].assign(phi.row(i).begin(), phi.row(i).end());
      return out;
    };
    const double explicit_features =
        feature_space_mmd2_unbiased(feature_rows(explicit_poly2_features(x)), feature_rows(explicit_poly2_features(y)));
    Rows fx, fy;
    for (const auto& r : rows_of(x)) fx.push_back(ordered_pair_features(r));
    for (const auto& r : rows_of(y)) fy.push_back(ordered_pair_features(r));
    const double independent = feature_space_mmd2_unbiased(fx, fy);
    worst_poly = std::max(worst_poly, std::abs(kernel_trick - explicit_features));
    worst_poly_independent = std::max(worst_poly_independent, std::abs(kernel_trick - independent));

    std::vector<double> mx(d, 0.0), my(d, 0.0);
    for (const auto& r : rows_of(x))
      for (std::size_t k = 0; k < d; ++k) mx[k] += r[k] / static_cast<double>(m);
    for (const auto& r : rows_of(y))
      for (std::size_t k = 0; k < d; ++k) my[k] += r[k] / static_cast<double>(n);
    double sq = 0.0;
    for (std::size_t k = 0; k < d; ++k) sq += (mx[k] - my[k]) * (mx[k] - my[k]);
    worst_linear = std::max(worst_linear, std::abs(mmd2_biased(x, y, KernelSpec::linear()) - sq));
  }
  const double elapsed = seconds_since(start);
  Outcome o;
  o.pass = worst_poly <= 1e-9 && worst_poly_independent <= 1e-9 && worst_linear <= 1e-12 && elapsed < 5.0;
  o.detail = "100 instances; poly2 vs explicit features max|diff|=" + fmt(worst_poly) + " (independent map " +
             fmt(worst_poly_independent) + ", tol 1e-9); linear biased vs squared mean difference max|diff|=" +
             fmt(worst_linear) + " (tol 1e-12); " + fmt(elapsed) + " s (limit 5 s)";
  return o;
}

Outcome null_calibration() {
  const auto start = Clock::now();
  std::mt19937_64 rng(2002);
  const std::vector<double> center(32, 0.0);
  std::size_t inside = 0, small_p = 0;
  const std::size_t trials = 200;
  for (std::size_t t = 0; t < trials; ++t) {
    const auto x = cluster(50, center, 1.0, rng, true, "x");
    const auto y = cluster(50, center, 1.0, rng, true, "y");
    const auto r = mmd_test(x, y, KernelSpec::poly2(), 500, 0.01, derive_seed(2002, t));
    if (r.estimate >= r.null_lower && r.estimate <= r.null_upper) ++inside;
    if (r.p_value <= 0.05) ++small_p;
  }
  const double elapsed = seconds_since(start);
  const double rate = static_cast<double>(small_p) / trials;
  Outcome o;
  o.pass = inside >= 190 && inside <= 200 && rate <= 0.08 && elapsed < 120.0;
  o.detail = "estimate inside 99% band in " + std::to_string(inside) + "/200 (need >=190); P(p<=0.05)=" + fmt(rate) +
             " (limit 0.08); " + fmt(elapsed) + " s (limit 120 s)";
  return o;
}

Outcome desk_scale_power() {
  const auto start = Clock::now();
  std::mt19937_64 rng(3003);
  std::size_t rejections = 0;
  for (std::size_t t = 0; t < 100; ++t) {
    const auto c = random_unit(32, rng);
    const auto u = random_unit(32, rng);
    const auto x = cluster(10, c, 0.1, rng, true, "x");
    const auto y = cluster(10, add(c, u), 0.1, rng, true, "y");
    const auto r = mmd_test(x, y, KernelSpec::poly2(), 500, 0.01, derive_seed(3003, t));
    if (r.significant()) ++rejections;
  }
  const double elapsed = seconds_since(start);
  Outcome o;
  o.pass = rejections >= 90 && elapsed < 60.0;
  o.detail = "rejections at alpha=0.01 with m=n=10: " + std::to_string(rejections) + "/100 (need >=90); " +
             fmt(elapsed) + " s (limit 60 s)";
  return o;
}

Outcome window_drift() {
  const auto start = Clock::now();
  const std::size_t windows = 12, window_size = 50, field_size = 200, dim = 32;
  std::size_t monotone_runs = 0;
  for (std::size_t run = 0; run < 100; ++run) {
    std::mt19937_64 rng(derive_seed(4004, run));
    const auto c = random_unit(dim, rng);
    const auto u = orthogonal_unit(c, rng);

    const std::size_t total = windows * window_size;
    std::vector<Document> docs;
    Rows rows;
    std::normal_distribution<double> noise(0.0, 0.1);
    for (std::size_t i = 0; i < total; ++i) {
      docs.push_back({"g" + std::to_string(i), "generated " + std::to_string(i), {}, i});
      auto mean = add(c, u, static_cast<double>(i) / static_cast<double>(total - 1));
      for (auto& v : mean) v += noise(rng);
      rows.push_back(mean);
    }
    const Corpus gen_corpus("generated", docs);
    const auto gen = normalize_rows(make_matrix(rows, false, "g"));

    std::vector<Document> field_docs;
    for (std::size_t i = 0; i < field_size; ++i) field_docs.push_back({"f" + std::to_string(i), "field", {}, i});
    const Corpus field_corpus("field", field_docs);
    const auto field = cluster(field_size, c, 0.1, rng, true, "f");

    AnalysisSettings settings;
    settings.permutations = 100;
    settings.seed = derive_seed(4004, run, 1);
    const auto report = window_mmd({gen_corpus, gen}, {field_corpus, field}, settings, window_size);

    std::size_t inversions = 0;
    double worst_drop = 0.0;
    for (std::size_t w = 1; w < report.rows.size(); ++w) {
      const double drop = report.rows[w - 1].result.estimate - report.rows[w].result.estimate;
      if (drop > 0.0) {
        ++inversions;
        worst_drop = std::max(worst_drop, drop);
      }
    }
    if (report.rows.size() == windows && (inversions == 0 || (inversions == 1 && worst_drop <= 0.005))) {
      ++monotone_runs;
    }
  }
  Outcome o;
  o.pass = monotone_runs >= 95;
  o.detail = "12-window estimates nondecreasing (one inversion <= 0.005 allowed) in " + std::to_string(monotone_runs) +
             "/100 runs (need >=95); " + fmt(seconds_since(start)) + " s";
  return o;
}

Outcome entropy_trend() {
  const auto start = Clock::now();
  const std::size_t titles = 1200;
  std::size_t rising = 0;
  double worst_spot = 0.0;
  for (std::size_t run = 0; run < 100; ++run) {
    std::mt19937_64 rng(derive_seed(5005, run));
    // Common words dominate early titles; the share drawn from a large rare pool grows with seq.
    std::vector<Document> docs;
    for (std::size_t i = 0; i < titles; ++i) {
      const double rare_share = static_cast<double>(i) / static_cast<double>(titles - 1);
      std::string text;
      const std::size_t words = 3 + rng() % 4;
      for (std::size_t w = 0; w < words; ++w) {
        const bool rare = uniform_unit(rng) < rare_share;
        text += (rare ? "Rare" + std::to_string(rng() % 3000) : "Common" + std::to_string(rng() % 20)) + " ";
      }
      docs.push_back({"t" + std::to_string(i), text, {}, i});
    }
    const Corpus corpus("titles", docs);
    const auto series = entropy_series(corpus, {}, 301);
    if (series.points.size() == titles && series.smoothed.back() > series.smoothed.front()) ++rising;

    // Hand oracle: split on spaces, lowercase ASCII, count, average -log2(count/total).
    std::map<std::string, std::size_t> counts;
    std::size_t total = 0;
    auto words_of = [](const std::string& text) {
      std::vector<std::string> out;
      std::istringstream in(text);
      for (std::string w; in >> w;) {
        for (auto& ch : w) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        out.push_back(w);
      }
      return out;
    };
    for (const auto& d : docs)
      for (const auto& w : words_of(d.text)) {
        ++counts[w];
        ++total;
      }
    for (std::size_t spot = 0; spot < 20; ++spot) {
      const std::size_t i = (spot * 61 + run) % titles;
      double sum = 0.0;
      const auto ws = words_of(docs[i].text);
      for (const auto& w : ws) sum += -std::log2(static_cast<double>(counts[w]) / static_cast<double>(total));
      worst_spot = std::max(worst_spot, std::abs(series.points[i].surprisal - sum / static_cast<double>(ws.size())));
    }
  }
  Outcome o;
  o.pass = rising == 100 && worst_spot <= 1e-12;
  o.detail = "moving-average final > initial in " + std::to_string(rising) + "/100 runs; 20 spot titles per run max|diff|=" +
             fmt(worst_spot) + " (tol 1e-12); " + fmt(seconds_since(start)) + " s";
  return o;
}

Outcome levenshtein_suite() {
  std::mt19937_64 rng(6006);
  std::size_t mismatches = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto a = random_u32(rng, 0, 16, U"abcdeé ");
    const auto b = random_u32(rng, 0, 16, U"abcdeé ");
    if (levenshtein(a, b) != memo_levenshtein(a, b)) ++mismatches;
  }
  std::size_t axiom_failures = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto a = random_u32(rng, 0, 12, U"abc");
    const auto b = random_u32(rng, 0, 12, U"abc");
    const auto c = random_u32(rng, 0, 12, U"abc");
    const auto ab = levenshtein(a, b);
    const bool ok = (ab == 0) == (a == b) && ab == levenshtein(b, a) && levenshtein(a, c) <= ab + levenshtein(b, c);
    if (!ok) ++axiom_failures;
  }

  const std::u32string alphabet = U"abcdefghijklmnopqrstuvwxyz ";
  std::vector<std::string> names;
  std::set<std::u32string> seen;
  while (names.size() < 2000) {
    const auto s = random_u32(rng, 13, 17, alphabet);
    if (seen.insert(s).second) names.push_back(utf8::encode(s));
  }
  LevenshteinOptions options;
  options.threads = default_thread_count();
  const auto start = Clock::now();
  const auto full = pairwise_levenshtein_summary(names, options);
  const double elapsed = seconds_since(start);

  const std::vector<std::string> subsample(names.begin(), names.begin() + 100);
  const auto summary = pairwise_levenshtein_summary(subsample, options);
  std::vector<std::uint64_t> hist(summary.histogram.size(), 0);
  std::vector<std::size_t> dists;
  for (std::size_t i = 0; i < subsample.size(); ++i)
    for (std::size_t j = i + 1; j < subsample.size(); ++j) {
      const auto d = memo_levenshtein(utf8::decode(subsample[i]), utf8::decode(subsample[j]));
      if (d >= hist.size()) hist.resize(d + 1, 0);
      ++hist[d];
      dists.push_back(d);
    }
  std::sort(dists.begin(), dists.end());
  std::uint64_t sum = 0, sum_sq = 0;
  for (auto d : dists) {
    sum += d;
    sum_sq += d * d;
  }
  const double n = static_cast<double>(dists.size());
  const bool subsample_exact =
      summary.histogram == hist && summary.pair_count == dists.size() &&
      summary.mean == static_cast<double>(sum) / n &&
      summary.std_dev == std::sqrt(static_cast<double>(dists.size() * sum_sq - sum * sum) / (n * n)) &&
      summary.median == static_cast<double>(dists[(dists.size() - 1) / 2]) &&
      summary.q1 == static_cast<double>(dists[(dists.size() - 1) / 4]) &&
      summary.q3 == static_cast<double>(dists[(dists.size() - 1) * 3 / 4]);

  Outcome o;
  o.pass = mismatches == 0 && axiom_failures == 0 && full.pair_count == 1999000 && elapsed < 10.0 && subsample_exact;
  o.detail = "memo oracle mismatches " + std::to_string(mismatches) + "/10000; axiom failures " +
             std::to_string(axiom_failures) + "/10000; 2000 strings (" + std::to_string(full.pair_count) +
             " pairs, mean " + fmt(full.mean) + ") in " + fmt(elapsed) + " s on " + std::to_string(options.threads) +
             " thread(s) (limit 10 s); 100-string subsample " + (subsample_exact ? "exact" : "MISMATCH");
  return o;
}

Outcome blocked_gram() {
  const std::size_t dim = 3072, n_gen = 6000, n_field = 25583;
  const std::size_t budget = std::size_t{2} << 30;
  auto unit_rows = [&](std::size_t n, std::uint64_t seed, const std::string& prefix) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> normal;
    std::vector<std::string> ids(n);
    std::vector<float> data(n * dim);
    for (std::size_t i = 0; i < n; ++i) {
      ids[i] = prefix + std::to_string(i);
      double sq = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        data[i * dim + k] = normal(rng);
        sq += static_cast<double>(data[i * dim + k]) * data[i * dim + k];
      }
      const auto inv = static_cast<float>(1.0 / std::sqrt(sq));
      for (std::size_t k = 0; k < dim; ++k) data[i * dim + k] *= inv;
    }
    return normalize_rows(EmbeddingMatrix(std::move(ids), std::move(data), dim, "synthetic"));
  };
  const auto gen = unit_rows(n_gen, 7007, "g");
  const auto field = unit_rows(n_field, 7008, "f");

  const auto plan = GramBlockPlan::for_budget(dim, budget, 1);
  const auto start = Clock::now();
  const auto cross = kernel_sum(gen, field, KernelSpec::poly2(), plan);
  const double cross_elapsed = seconds_since(start);
  const auto within_gen = kernel_sum_offdiagonal(gen, KernelSpec::poly2(), plan);
  const auto within_field = kernel_sum_offdiagonal(field, KernelSpec::poly2(), plan);
  const double elapsed = seconds_since(start);
  const double m = n_gen, n = n_field;
  const double estimate = within_gen.sum / (m * (m - 1)) + within_field.sum / (n * (n - 1)) - 2.0 * cross.sum / (m * n);
  const std::size_t full_matrix_bytes = n_gen * n_field * sizeof(double);
  const std::size_t peak =
      std::max({cross.peak_working_bytes, within_gen.peak_working_bytes, within_field.peak_working_bytes});
  const bool streamed = peak <= budget && peak < full_matrix_bytes && std::isfinite(estimate);

  // 500 x 500 subproblem: tiled against a single tile.
  const std::vector<std::size_t> first = [] {
    std::vector<std::size_t> v(500);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
  }();
  const auto xs = gen.select(first);
  const auto ys = field.select(first);
  GramBlockPlan single;
  single.block_rows = single.block_cols = 500;
  GramBlockPlan tiled;
  tiled.block_rows = 64;
  tiled.block_cols = 96;
  double worst = 0.0;
  for (const auto& spec : {KernelSpec::linear(), KernelSpec::poly2(), KernelSpec::rbf(1.0)}) {
    worst = std::max(worst, (gram(xs, ys, spec, tiled) - gram(xs, ys, spec, single)).cwiseAbs().maxCoeff());
  }

  Outcome o;
  o.pass = streamed && worst <= 1e-12;
  o.detail = "6000x25583 at d=3072 streamed in " + std::to_string(cross.blocks) + " tiles, peak working set " +
             fmt(static_cast<double>(peak) / (1 << 20)) + " MiB vs " +
             fmt(static_cast<double>(full_matrix_bytes) / (1 << 20)) + " MiB full matrix (budget 2048 MiB); cross sum " +
             fmt(cross_elapsed) + " s, all MMD sums " + fmt(elapsed) + " s, estimate " + fmt(estimate) +
             "; 500x500 tiled vs single-block max|diff|=" + fmt(worst) + " (tol 1e-12)";
  return o;
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "kmmd_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string field = (samples_dir() / "field.csv").string();
  const std::string generated = (samples_dir() / "generated.jsonl").string();
  const std::vector<std::string> embed_flags{"--provider", "mock", "--mock-dim", "24"};

  // Warm cache shared by both runs as a byte-identical copy.
  const auto seed_cache = root / "seed_cache.emb";
  {
    std::vector<std::string> args{"embed", "--input", field, "--cache", seed_cache.string(), "--out",
                                  (root / "warm.emb").string()};
    args.insert(args.end(), embed_flags.begin(), embed_flags.end());
    if (run_cli(args, root / "warm").exit_code != 0) return {false, "could not prepare the embedding cache"};
  }

  struct Case {
    std::string name;
    std::vector<std::string> args;
    bool uses_cache;
    std::vector<std::string> extra_outputs;
  };
  const std::vector<std::string> test_flags{"--permutations", "200", "--seed", "11", "--threads", "2"};
  auto with = [](std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  };
  const std::vector<Case> cases{
      {"ingest", {"ingest", "--input", field}, false, {}},
      {"embed", with({"embed", "--input", generated}, embed_flags), true, {}},
      {"compare", with(with({"compare", "--field", field, "--generated", generated, "--format", "json"}, embed_flags),
                       test_flags),
       true, {}},
      {"categories",
       with(with({"categories", "--field", field, "--generated", generated, "--min-group", "12"}, embed_flags),
            test_flags),
       true, {}},
      {"windows",
       with(with({"windows", "--generated", generated, "--field", field, "--window-size", "15"}, embed_flags),
            test_flags),
       true, {}},
      {"sweep",
       with(with({"sweep", "--field", field, "--generated", generated, "--sizes", "5", "--sizes", "10", "--trials", "3"},
                 embed_flags),
            test_flags),
       true, {}},
      {"entropy", {"entropy", "--input", generated, "--window", "5"}, false, {}},
      {"levenshtein", {"levenshtein", "--input", generated, "--histogram-out", "{dir}/hist.csv"}, false, {"hist.csv"}},
      {"dupes", {"dupes", "--input", generated, "--format", "json"}, false, {}},
      {"freq", {"freq", "--input", generated, "--top-k", "15"}, false, {}},
      {"cosine", with({"cosine", "--field", field, "--generated", generated}, embed_flags), true, {}},
  };

  std::vector<std::string> failures;
  for (const auto& c : cases) {
    std::string outputs[2];
    for (int rep = 0; rep < 2; ++rep) {
      const auto dir = root / c.name / ("run" + std::to_string(rep));
      fs::create_directories(dir);
      std::vector<std::string> args;
      for (auto a : c.args) {
        if (const auto at = a.find("{dir}"); at != std::string::npos) a.replace(at, 5, dir.string());
        args.push_back(a);
      }
      if (c.uses_cache) {
        fs::copy_file(seed_cache, dir / "cache.emb");
        args.insert(args.end(), {"--cache", (dir / "cache.emb").string()});
      }
      args.insert(args.end(), {"--out", (dir / "out.dat").string()});
      const auto r = run_cli(args, dir / "io");
      if (r.exit_code != 0) {
        failures.push_back(c.name + " exited " + std::to_string(r.exit_code) + ": " + r.err);
        break;
      }
      outputs[rep] = slurp(dir / "out.dat");
      for (const auto& extra : c.extra_outputs) outputs[rep] += "\n--\n" + slurp(dir / extra);
      if (c.uses_cache) outputs[rep] += "\n--\n" + slurp(dir / "cache.emb");
    }
    if (outputs[0].empty() || outputs[0] != outputs[1]) failures.push_back(c.name);
  }

  // EMB1 round trip on a cache written by the CLI.
  const auto cached = load_embeddings(root / "embed" / "run0" / "cache.emb");
  const auto bytes = serialize_embeddings(cached);
  const auto back = deserialize_embeddings(bytes);
  const bool round_trip = bytes == slurp(root / "embed" / "run0" / "cache.emb") && back.ids() == cached.ids() &&
                          back.model() == cached.model() && back.normalized() == cached.normalized() &&
                          std::memcmp(back.data().data(), cached.data().data(), cached.data().size_bytes()) == 0;

  Outcome o;
  o.pass = failures.empty() && round_trip;
  std::string detail = std::to_string(cases.size() - failures.size()) + "/" + std::to_string(cases.size()) +
                       " subcommands byte-identical across two runs";
  for (const auto& f : failures) detail += "; differs/failed: " + f;
  detail += std::string("; EMB1 round trip ") + (round_trip ? "bit-exact" : "NOT bit-exact");
  o.detail = detail;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"AC1 oracle equivalence", oracle_equivalence},
      {"AC2 null calibration", null_calibration},
      {"AC3 desk-scale power", desk_scale_power},
      {"AC4 window drift", window_drift},
      {"AC5 entropy trend", entropy_trend},
      {"AC6 levenshtein suite", levenshtein_suite},
      {"AC7 blocked gram", blocked_gram},
      {"AC8 determinism", determinism},
  };
  const std::set<std::string> only(argv + 1, argv + argc);
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && !only.contains(name.substr(0, 3))) continue;
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
  }
  std::cout << (failed == 0 ? "all acceptance criteria passed" : std::to_string(failed) + " criteria failed")
            << std::endl;
  return failed == 0 ? 0 : 1;
}
