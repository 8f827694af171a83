// Copyright 2026 The qdrec Authors
// SPDX-License-Identifier: Apache-2.0
//
// qdrec command-line tool.
//
//   qdrec gen --config gen.ini --out corpus/
//   qdrec train --corpus corpus/ --config train.ini --out model.ckpt
//   qdrec eval --corpus corpus/ --config train.ini --checkpoint model.ckpt
//   qdrec bench --n 32,64,128 --j 8 --cprime 6
//   qdrec maskcheck --corpus corpus/ --user 3 --index 5
//   qdrec maskcheck --fixture tests/fixtures/worked_example_mask.txt
//   qdrec sampler-audit --corpus corpus/ --config train.ini --draws 100000
//
// Exit codes: 0 success, 1 validation failure, 2 I/O error. QDREC_SEED sets
// the seed used when neither the config nor --seed gives one.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "qdrec/catalog.hpp"
#include "qdrec/checkpoint.hpp"
#include "qdrec/config.hpp"
#include "qdrec/datagen.hpp"
#include "qdrec/error.hpp"
#include "qdrec/evalx.hpp"
#include "qdrec/masking.hpp"
#include "qdrec/model.hpp"
#include "qdrec/rng.hpp"
#include "qdrec/sampling.hpp"
#include "qdrec/scoring.hpp"
#include "qdrec/training.hpp"

namespace {

using namespace qdrec;

KvConfig load_config(const std::string& path) {
  return path.empty() ? KvConfig{} : KvConfig::load(path);
}

// --seed beats the config file, which beats QDREC_SEED.
void apply_seed(KvConfig& cfg, const std::string& section, std::optional<std::uint64_t> flag) {
  if (flag) {
    cfg.set(section, "seed", std::to_string(*flag));
    return;
  }
  if (cfg.has(section, "seed")) return;
  if (const char* env = std::getenv("QDREC_SEED")) {
    std::uint64_t v = 0;
    std::istringstream in(env);
    if (!(in >> v) || !in.eof())
      throw ValidationError(std::string("QDREC_SEED is not an unsigned integer: ") + env);
    cfg.set(section, "seed", std::to_string(v));
  }
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  return out;
}

ModelConfig model_for_corpus(const KvConfig& cfg, const TrainConfig& tc, const Corpus& corpus) {
  ModelConfig m = ModelConfig::from_config(cfg);
  m.n_items = corpus.catalog.size();
  m.n_users = std::max<std::size_t>(1, corpus.users.size());
  int feedback = 1;
  for (const auto& list : corpus.users)
    for (const auto& a : list) feedback = std::max(feedback, a.feedback + 1);
  m.n_feedback = static_cast<std::size_t>(feedback);
  m.n_scenarios = static_cast<std::size_t>(tc.n_scenarios);
  return tc.model_config(m);
}

int cmd_gen(const std::string& config, const std::string& out_dir,
            std::optional<std::uint64_t> seed) {
  KvConfig cfg = load_config(config);
  apply_seed(cfg, "gen", seed);
  const GenConfig gc = GenConfig::from_config(cfg);
  cfg.finish();
  const Corpus corpus = generate_corpus(gc);
  serialize_corpus(corpus, out_dir);
  std::size_t interactions = 0, searches = 0, deltas = 0, churned = 0;
  for (const auto& list : corpus.users) {
    for (const auto& a : list) {
      ++interactions;
      searches += a.triggering_query ? 1 : 0;
      deltas += a.delta ? 1 : 0;
    }
  }
  for (const auto& item : corpus.catalog.items()) {
    Timestamp online = 0;
    for (const auto& iv : item.lifecycle) online += iv.off - iv.on;
    churned += online < corpus.catalog.horizon() ? 1 : 0;
  }
  std::cout << "users " << corpus.users.size() << "\n"
            << "items " << corpus.catalog.size() << "\n"
            << "interactions " << interactions << "\n"
            << "search_triggered " << searches << "\n"
            << "delta " << deltas << "\n"
            << "sub_horizon_items " << churned << "\n";
  return 0;
}

struct TrainArgs {
  std::string corpus, config, out, log, resume;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers, epochs;
};

int cmd_train(const TrainArgs& a) {
  KvConfig cfg = load_config(a.config);
  apply_seed(cfg, "train", a.seed);
  apply_seed(cfg, "model", a.seed);
  apply_seed(cfg, "sampler", a.seed);
  TrainConfig tc = TrainConfig::from_config(cfg);
  if (a.workers) tc.workers = *a.workers;
  if (a.epochs) tc.epochs = *a.epochs;
  const Corpus corpus = parse_corpus(a.corpus);
  const ModelConfig mc = model_for_corpus(cfg, tc, corpus);
  cfg.finish();

  TrainOptions opts;
  if (!a.resume.empty()) opts.resume = load_tensors(a.resume);
  const std::string log_path = a.log.empty() ? a.out + ".csv" : a.log;
  std::ofstream log(log_path, opts.resume ? std::ios::app : std::ios::trunc);
  if (!log) throw IoError("cannot open " + log_path + " for writing");
  opts.log = &log;
  opts.on_epoch = [&](std::size_t, const NamedTensors& ck) { save_tensors(ck, a.out); };
  const TrainResult res = train_loop(corpus, init_params(mc), mc, tc, opts);
  save_tensors(res.checkpoint, a.out);
  std::cout << "epochs " << res.epoch_loss.size() << "\n";
  if (!res.epoch_loss.empty()) std::cout << "final_loss " << res.epoch_loss.back() << "\n";
  std::cout << "checkpoint " << a.out << "\nlog " << log_path << "\n";
  return 0;
}

struct EvalArgs {
  std::string corpus, config, checkpoint, protocol = "both", split = "test", out;
  bool popularity = false;
  std::optional<std::uint64_t> seed;
  std::size_t workers = 1;
};

int cmd_eval(const EvalArgs& a) {
  KvConfig cfg = load_config(a.config);
  apply_seed(cfg, "train", a.seed);
  apply_seed(cfg, "model", a.seed);
  apply_seed(cfg, "sampler", a.seed);
  const TrainConfig tc = TrainConfig::from_config(cfg);
  (void)ModelConfig::from_config(cfg);
  cfg.finish();
  if (a.protocol != "sampled" && a.protocol != "aligned" && a.protocol != "both")
    throw ValidationError("--protocol must be sampled, aligned or both");
  if (a.split != "test" && a.split != "valid") throw ValidationError("--split must be test or valid");

  const Corpus corpus = parse_corpus(a.corpus);
  const auto splits = leave_one_out(corpus);
  const auto cases = eval_cases(splits, a.split == "test" ? EvalSplit::kTest : EvalSplit::kValid);
  const LifecycleIndex index(corpus.catalog);

  std::size_t epoch = 0;
  std::optional<NamedTensors> ck;
  std::optional<ModelConfig> mc;
  std::optional<ModelParams> params;
  if (!a.checkpoint.empty()) {
    ck = load_tensors(a.checkpoint);
    mc = checkpoint_config(*ck);
    params = checkpoint_params(*ck, *mc);
    epoch = static_cast<std::size_t>(find_tensor(*ck, "meta.epochs_done")(0, 0));
  } else if (!a.popularity) {
    throw ValidationError("eval needs --checkpoint or --popularity");
  }
  const QueryPool pool =
      mc ? corpus_query_pool(corpus, tc.seed, mc->d) : QueryPool{};
  CaseScorer scorer;
  std::string tag = a.split;
  if (a.popularity) {
    scorer = popularity_scorer(train_popularity(splits, corpus.catalog.size()));
    tag += ":popularity";
  } else {
    SequenceOptions opts = tc.sequence_options(*mc);
    opts.ranking_mode = false;
    scorer = model_scorer(*params, *mc, opts, pool, tc.seed);
  }

  std::ostringstream rows;
  rows << kMetricHeader << "\n";
  if (a.protocol != "aligned") {
    const auto m = evaluate_sampled(scorer, cases, corpus, tc.eval_negatives, tc.seed, a.workers);
    if (m.skipped) std::cerr << "warning: skipped " << m.skipped << " users with no unseen items\n";
    rows << format_metric_row(epoch, tag + ":sampled", m) << "\n";
  }
  if (a.protocol != "sampled") {
    const auto m = evaluate_aligned(scorer, cases, index, a.workers);
    rows << format_metric_row(epoch, tag + ":aligned", m) << "\n";
  }
  std::cout << rows.str();
  if (!a.out.empty()) open_out(a.out) << rows.str();
  return 0;
}

std::vector<std::size_t> parse_list(const std::string& s, const char* what) {
  std::vector<std::size_t> out;
  std::stringstream in(s);
  std::string part;
  while (std::getline(in, part, ',')) {
    if (part.empty()) continue;
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(part, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != part.size()) throw ValidationError(std::string("--") + what + ": bad value " + part);
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

struct BenchArgs {
  std::string n = "32,64,128,256", j = "8", cprime = "6", d = "32", h = "3", out;
  std::uint64_t seed = 42;
  std::size_t repeat = 1;
};

int cmd_bench(const BenchArgs& a) {
  const auto ns = parse_list(a.n, "n"), js = parse_list(a.j, "j"), cs = parse_list(a.cprime, "cprime"),
             ds = parse_list(a.d, "d"), hs = parse_list(a.h, "h");
  std::ostringstream csv;
  csv << "path,N,J,cprime,d,h,macs,wall_ns,below_threshold\n";
  for (auto n : ns)
    for (auto j : js)
      for (auto c : cs)
        for (auto d : ds)
          for (auto h : hs) {
            ModelConfig mc;
            mc.d = d;
            mc.layers = h;
            mc.n_items = std::max<std::size_t>(100, c);
            mc.seed = a.seed;
            const ModelParams p = init_params(mc);
            Rng rng = make_rng(a.seed, "bench", n, j * 1000 + c);
            const ScoringCase sc = random_scoring_case(n, j, c, mc, rng);
            using Fn = CandidateScores (*)(const EventSequence&, std::span<const CandidateGroup>,
                                           const ModelParams&, const ModelConfig&);
            const std::pair<const char*, Fn> paths[] = {{"naive", &score_candidates_naive},
                                                        {"kv", &score_candidates_kv},
                                                        {"diag", &score_candidates_diag}};
            std::vector<CandidateScores> results;
            for (const auto& [name, fn] : paths) results.push_back(fn(sc.seq, sc.groups, p, mc));
            for (std::size_t k = 1; k < results.size(); ++k)
              for (std::size_t g = 0; g < results[0].logits.size(); ++g)
                for (std::size_t i = 0; i < results[0].logits[g].size(); ++i)
                  if (std::abs(results[k].logits[g][i] - results[0].logits[g][i]) > 1e-5)
                    throw ValidationError("bench sanity gate: " + std::string(paths[k].first) +
                                          " disagrees with naive at N=" + std::to_string(n));
            const bool below = complexity_threshold(n, j, c);
            for (std::size_t k = 0; k < 3; ++k) {
              std::int64_t best = -1;
              for (std::size_t r = 0; r < std::max<std::size_t>(1, a.repeat); ++r) {
                const auto t0 = std::chrono::steady_clock::now();
                (void)paths[k].second(sc.seq, sc.groups, p, mc);
                const auto ns_taken = std::chrono::duration_cast<std::chrono::nanoseconds>(
                                          std::chrono::steady_clock::now() - t0)
                                          .count();
                if (best < 0 || ns_taken < best) best = ns_taken;
              }
              csv << paths[k].first << "," << n << "," << j << "," << c << "," << d << "," << h
                  << "," << results[k].flops.total() << "," << best << "," << (below ? 1 : 0)
                  << "\n";
            }
          }
  std::cout << csv.str();
  if (!a.out.empty()) open_out(a.out) << csv.str();
  return 0;
}

struct MaskArgs {
  std::string corpus, fixture, config;
  std::size_t user = 0, index = 0, max_len = 0;
};

void print_mask(const char* title, const Matrix& m) {
  std::cout << "# " << title << "\n" << format_mask(m) << "\n";
}

int cmd_maskcheck(const MaskArgs& a) {
  if (!a.fixture.empty()) {
    std::ifstream in(a.fixture, std::ios::binary);
    if (!in) throw IoError("cannot open fixture " + a.fixture);
    std::stringstream buf;
    buf << in.rdbuf();
    const Matrix expected = parse_mask(buf.str());
    const Matrix got = build_mask(worked_example_sequence());
    print_mask("combined", got);
    if (!expected.same_shape(got)) {
      std::cerr << "mismatch: fixture is " << expected.rows() << "x" << expected.cols()
                << ", mask is " << got.rows() << "x" << got.cols() << "\n";
      return 1;
    }
    for (std::size_t r = 0; r < got.rows(); ++r)
      for (std::size_t c = 0; c < got.cols(); ++c)
        if (got(r, c) != expected(r, c)) {
          std::cerr << "mismatch at row " << r << " col " << c << ": fixture " << expected(r, c)
                    << ", mask " << got(r, c) << "\n";
          return 1;
        }
    std::cout << "fixture matches\n";
    return 0;
  }
  if (a.corpus.empty()) throw ValidationError("maskcheck needs --corpus or --fixture");
  KvConfig cfg = load_config(a.config);
  TrainConfig tc = TrainConfig::from_config(cfg);
  cfg.finish();
  const Corpus corpus = parse_corpus(a.corpus);
  if (a.user >= corpus.users.size())
    throw ValidationError("user " + std::to_string(a.user) + " out of range (" +
                          std::to_string(corpus.users.size()) + " users)");
  const auto& list = corpus.users[a.user];
  if (a.index >= list.size())
    throw ValidationError("sequence index " + std::to_string(a.index) + " out of range (" +
                          std::to_string(list.size()) + " interactions)");
  tc.max_len = a.max_len;
  tc.beta = 0.0;
  ModelConfig mc;
  SequenceOptions opts = tc.sequence_options(mc);
  Rng rng = make_rng(tc.seed, "maskcheck", a.user, a.index);
  const EventSequence seq = assemble_sequence(
      std::span<const Interaction>(list.data(), a.index + 1), opts, QueryPool{}, rng);
  std::cout << "# tokens\n" << dump_sequence(seq) << "\n";
  const ComponentMasks m = build_component_masks(seq, !tc.no_session_mask);
  print_mask("causal", m.causal);
  print_mask("session", m.session);
  print_mask("invalidq", m.invalidq);
  print_mask("combined", combine(m.causal, m.session, m.invalidq));
  return 0;
}

struct AuditArgs {
  std::string corpus, config;
  std::size_t draws = 100000;
  std::optional<std::uint64_t> seed;
};

int cmd_sampler_audit(const AuditArgs& a) {
  KvConfig cfg = load_config(a.config);
  apply_seed(cfg, "sampler", a.seed);
  SamplerConfig sc = SamplerConfig::from_config(cfg);
  cfg.finish();
  if (sc.strategy == Strategy::kHns)
    throw ValidationError("sampler-audit covers rns and pns; hns needs a model");
  const Corpus corpus = parse_corpus(a.corpus);
  const LifecycleIndex index(corpus.catalog);
  const NegativeSampler sampler(corpus.catalog, index, sc);
  std::vector<const Interaction*> pool;
  for (const auto& list : corpus.users)
    for (const auto& x : list) pool.push_back(&x);
  if (pool.empty()) throw ValidationError("corpus has no interactions");
  Rng rng = make_rng(sc.seed, "sampler_audit");
  std::size_t drawn = 0, violations = 0, calls = 0;
  while (drawn < a.draws) {
    const Interaction& x = *pool[uniform_index(rng, pool.size())];
    const std::size_t c =
        std::min({sc.c, a.draws - drawn, sampler.admissible(x.timestamp, x.item_id).size()});
    if (c == 0) continue;
    for (ItemId item : sampler.draw(x.timestamp, x.item_id, c, rng)) {
      if (item == x.item_id || (sc.aligned && !corpus.catalog.availability(item, x.timestamp)))
        ++violations;
    }
    drawn += c;
    ++calls;
  }
  std::cout << "strategy " << strategy_name(sc.strategy) << "\n"
            << "aligned " << (sc.aligned ? 1 : 0) << "\n"
            << "draws " << drawn << "\n"
            << "calls " << calls << "\n"
            << "violations " << violations << "\n";
  return violations == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qdrec: query-driven sequential recommendation toolkit"};
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed;
  std::string gen_config, gen_out;
  auto* gen = app.add_subcommand("gen", "generate a synthetic corpus");
  gen->add_option("--config", gen_config, "config file with a [gen] section");
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--seed", seed, "root seed");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "train a model");
  train->add_option("--corpus", ta.corpus, "corpus directory")->required();
  train->add_option("--config", ta.config, "config file");
  train->add_option("--out", ta.out, "checkpoint path")->required();
  train->add_option("--log", ta.log, "metric CSV path (default <out>.csv)");
  train->add_option("--resume", ta.resume, "checkpoint to resume from");
  train->add_option("--seed", ta.seed, "root seed");
  train->add_option("--workers", ta.workers, "worker threads");
  train->add_option("--epochs", ta.epochs, "override [train] epochs");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint or the popularity baseline");
  eval->add_option("--corpus", ea.corpus, "corpus directory")->required();
  eval->add_option("--config", ea.config, "config file");
  eval->add_option("--checkpoint", ea.checkpoint, "checkpoint path");
  eval->add_flag("--popularity", ea.popularity, "score by train-split popularity");
  eval->add_option("--protocol", ea.protocol, "sampled, aligned or both");
  eval->add_option("--split", ea.split, "test or valid");
  eval->add_option("--out", ea.out, "metric CSV path");
  eval->add_option("--seed", ea.seed, "root seed");
  eval->add_option("--workers", ea.workers, "worker threads");

  BenchArgs ba;
  auto* bench = app.add_subcommand("bench", "time and count the three scoring paths");
  bench->add_option("--n", ba.n, "sequence lengths, comma separated (empty for none)");
  bench->add_option("--j", ba.j, "placeholder counts");
  bench->add_option("--cprime", ba.cprime, "candidates per placeholder");
  bench->add_option("--d", ba.d, "model widths");
  bench->add_option("--layers", ba.h, "layer counts");
  bench->add_option("--repeat", ba.repeat, "timing repetitions (best kept)");
  bench->add_option("--seed", ba.seed, "seed");
  bench->add_option("--out", ba.out, "CSV path");

  MaskArgs ma;
  auto* mask = app.add_subcommand("maskcheck", "print masks of a corpus sequence");
  mask->add_option("--corpus", ma.corpus, "corpus directory");
  mask->add_option("--config", ma.config, "config file");
  mask->add_option("--user", ma.user, "user id");
  mask->add_option("--index", ma.index, "last interaction of the sequence");
  mask->add_option("--max-len", ma.max_len, "keep only the newest tokens");
  mask->add_option("--fixture", ma.fixture, "compare the worked example against a mask file");

  AuditArgs aa;
  auto* audit = app.add_subcommand("sampler-audit", "count availability violations of a sampler");
  audit->add_option("--corpus", aa.corpus, "corpus directory")->required();
  audit->add_option("--config", aa.config, "config file with a [sampler] section");
  audit->add_option("--draws", aa.draws, "number of negatives to draw");
  audit->add_option("--seed", aa.seed, "seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return cmd_gen(gen_config, gen_out, seed);
    if (train->parsed()) return cmd_train(ta);
    if (eval->parsed()) return cmd_eval(ea);
    if (bench->parsed()) return cmd_bench(ba);
    if (mask->parsed()) return cmd_maskcheck(ma);
    if (audit->parsed()) return cmd_sampler_audit(aa);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
