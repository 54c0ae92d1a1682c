#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <pthread.h>

#include <cmath>
#include <csignal>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "wet/wet.hpp"
#include "wet/proxy.hpp"

namespace {

using wet::Vector;

std::string num(double x) { return nlohmann::json(x).dump(); }

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw wet::Error("cannot open " + path + " for writing");
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  if (!out) throw wet::Error("failed writing " + path);
}

struct KeygenArgs {
  int n = 0, k = 25, w = 0;
  std::uint64_t seed = 0;
  double max_condition = wet::kDefaultMaxCondition;
  int max_attempts = wet::kDefaultMaxAttempts;
  std::string out;
};

int cmd_keygen(const KeygenArgs& a) {
  wet::KeyParams p{a.n, a.k, a.w == 0 ? a.n : a.w, a.seed, a.max_condition, a.max_attempts};
  const auto key = wet::generate_key(p);
  wet::save_key(key, a.out);
  std::cout << nlohmann::json{{"out", a.out},
                              {"n", key.n()},
                              {"k", key.k()},
                              {"w", key.w()},
                              {"condition", key.condition()},
                              {"key_fingerprint", wet::key_fingerprint(key.matrix())}}
                   .dump()
            << '\n';
  return 0;
}

struct CodecArgs {
  std::string key, in, out;
};

int cmd_inject(const CodecArgs& a) {
  const auto key = wet::load_key(a.key);
  wet::write_corpus(a.out, wet::inject_batch(key, wet::read_corpus(a.in)));
  return 0;
}

int cmd_recover(const CodecArgs& a) {
  const auto key = wet::load_key(a.key);
  wet::write_corpus(a.out, wet::recover_batch(key, wet::read_corpus(a.in)));
  return 0;
}

struct VerifyArgs {
  std::string key, suspect, original, contrast_suspect, contrast_original, out, csv;
  double threshold = wet::kDefaultThreshold;
};

int cmd_verify(const VerifyArgs& a) {
  const auto key = wet::load_key(a.key);
  const auto report = wet::verify(key, wet::read_corpus(a.suspect), wet::read_corpus(a.original),
                                  wet::read_corpus(a.contrast_suspect), wet::read_corpus(a.contrast_original),
                                  a.threshold);
  const auto text = wet::report_to_json(report).dump() + "\n";
  if (a.out.empty()) {
    std::cout << text;
  } else {
    write_text(a.out, text);
  }
  if (!a.csv.empty()) {
    auto out = open_out(a.csv);
    wet::write_report_csv(out, report);
  }
  return 0;
}

struct AttackArgs {
  std::string key, contrast_key, config, corpus, contrast_corpus, out;
  int samples = 500;
  std::uint64_t seed = 0;
  bool seed_set = false;
  double target_cos = 0.0;
  double threshold = wet::kDefaultThreshold;
};

int cmd_attack(const AttackArgs& a) {
  const auto key = wet::load_key(a.key);
  const auto contrast = wet::load_key(a.contrast_key);
  if (contrast.n() != key.n() || contrast.w() != key.w()) {
    throw wet::ParameterError("contrast key shape differs from the audited key");
  }
  wet::AttackConfig cfg;
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) throw wet::Error("cannot open attack config " + a.config);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception&) {
      throw wet::FormatError("attack config " + a.config + " is not valid JSON");
    }
    cfg = wet::attack_config_from_json(j);
  } else {
    cfg.lambda_grid = {0.01, 0.05, 0.1, 0.5, 1.0};
  }
  if (a.seed_set) cfg.seed = a.seed;
  if (a.target_cos > 0.0) cfg.spread = wet::calibrate_spread(a.target_cos, key.n(), 2000, cfg.seed);

  std::vector<wet::EmbeddingRecord> originals_w;
  std::vector<wet::EmbeddingRecord> originals_c;
  if (!a.corpus.empty()) {
    originals_w = wet::read_corpus(a.corpus);
    originals_c = a.contrast_corpus.empty()
                      ? wet::synthetic_corpus(static_cast<int>(originals_w.size()), key.n(),
                                              wet::derive_seed(cfg.seed, 11), "c")
                      : wet::read_corpus(a.contrast_corpus);
  } else {
    originals_w = wet::synthetic_corpus(a.samples, key.n(), wet::derive_seed(cfg.seed, 10), "w");
    originals_c = wet::synthetic_corpus(a.samples, key.n(), wet::derive_seed(cfg.seed, 11), "c");
  }

  std::ostringstream csv;
  csv << "attack,p,spread,lambda,trial,delta_cos,auc,mean_cos\n";
  auto row = [&](const wet::AttackSpec& spec, int trial) {
    const auto r = wet::run_experiment(key, contrast, originals_w, originals_c, spec,
                                       wet::derive_seed(cfg.seed, 100 + static_cast<std::uint64_t>(trial)),
                                       a.threshold);
    csv << spec.label() << ',' << spec.p << ',' << num(spec.spread) << ',' << num(spec.lambda) << ',' << trial << ','
        << num(r.report.delta_cos) << ',' << num(r.report.auc) << ',' << num(r.mean_cos) << '\n';
  };
  for (int t = 0; t < cfg.trials; ++t) {
    row(wet::AttackSpec::none(), t);
    row(wet::AttackSpec::paraphrase(cfg.p, cfg.spread), t);
    for (double lambda : cfg.lambda_grid) row(wet::AttackSpec::noise(lambda), t);
  }
  if (a.out.empty()) {
    std::cout << csv.str();
  } else {
    write_text(a.out, csv.str());
  }
  return 0;
}

struct WeightArgs {
  double pt = 0.005;
  int slen = 50;
  std::vector<int> p = {5, 10};
  std::vector<double> a = {0.1, 0.2, 0.3, 0.31, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::string out;
};

int cmd_weight_model(const WeightArgs& args) {
  wet::WeightModel model{args.pt, args.slen, 1, 1.0};
  const double ps = wet::trigger_prob(model);
  std::cout << "P_S = " << std::fixed << std::setprecision(3) << ps << '\n' << std::defaultfloat;
  std::ostringstream csv;
  csv << "p,a,p_single,p_avg,single_exceeds_avg\n";
  for (int p : args.p) {
    for (double a : args.a) {
      const auto t = wet::weight_tail_compare(ps, p, a);
      csv << p << ',' << num(a) << ',' << num(t.p_single) << ',' << num(t.p_avg) << ','
          << (t.p_single > t.p_avg ? "true" : "false") << '\n';
    }
  }
  if (args.out.empty()) {
    std::cout << csv.str();
  } else {
    write_text(args.out, csv.str());
  }
  return 0;
}

struct VariantArgs {
  int n = 1536, k = 25, samples = 500;
  double noise = wet::kImitationNoise;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_variants(const VariantArgs& a) {
  std::ostringstream csv;
  csv << "kind,condition,delta_cos,auc\n";
  for (auto kind : wet::kAllVariants) {
    const auto key = wet::make_variant_key(kind, a.n, a.k, a.n, wet::derive_seed(a.seed, 1));
    const auto contrast = wet::make_variant_key(kind, a.n, a.k, a.n, wet::derive_seed(a.seed, 2));
    const auto spec = a.noise > 0.0 ? wet::AttackSpec::noise(a.noise) : wet::AttackSpec::none();
    const auto r = wet::run_synthetic_experiment(key, contrast, a.samples, spec, wet::derive_seed(a.seed, 3));
    csv << wet::to_string(kind) << ',' << (std::isfinite(key.condition()) ? num(key.condition()) : "inf") << ','
        << num(r.report.delta_cos) << ',' << num(r.report.auc) << '\n';
  }
  if (a.out.empty()) {
    std::cout << csv.str();
  } else {
    write_text(a.out, csv.str());
  }
  return 0;
}

struct ObfuscationArgs {
  int n = 64, w_extra = 50, k = 5, samples = 1000;
  double threshold = wet::kPearsonThreshold;
  std::uint64_t seed = 0;
  std::string corr_out, importance_out;
};

int cmd_obfuscation(const ObfuscationArgs& a) {
  wet::Rng rng(a.seed);
  const auto layout = wet::make_layout(a.n, a.w_extra, a.k, rng);
  const auto mixing = wet::make_mixing(layout, rng);
  // Stand-in downstream task: labels are a fixed random linear probe of the originals.
  const Vector probe = wet::random_unit(a.n, rng);
  std::vector<Vector> corpus;
  std::vector<double> labels;
  for (int i = 0; i < a.samples; ++i) {
    const Vector e = wet::random_unit(a.n, rng);
    corpus.push_back(wet::obfuscate_hyperdims(layout, mixing, e));
    labels.push_back(probe.dot(e));
  }
  const auto pearson = wet::pearson_flags(corpus, layout, a.threshold);
  const Vector weights = wet::least_squares_importance(corpus, labels);

  if (!a.corr_out.empty()) {
    auto out = open_out(a.corr_out);
    const auto originals = layout.original_positions();
    out << "hyper_column";
    for (int o : originals) out << ",orig_" << o;
    out << '\n';
    for (int h = 0; h < layout.w_extra; ++h) {
      out << layout.positions[static_cast<std::size_t>(h)];
      for (int o = 0; o < layout.n; ++o) out << ',' << num(pearson.coefficients(h, o));
      out << '\n';
    }
  }
  double hyper_abs = 0.0;
  double orig_abs = 0.0;
  {
    std::ostringstream csv;
    csv << "column,is_hyperdim,weight\n";
    std::size_t next = 0;
    for (int c = 0; c < layout.combined_dim(); ++c) {
      const bool hyper = next < layout.positions.size() && layout.positions[next] == c;
      if (hyper) ++next;
      (hyper ? hyper_abs : orig_abs) += std::abs(weights[c]);
      csv << c << ',' << (hyper ? "true" : "false") << ',' << num(weights[c]) << '\n';
    }
    if (!a.importance_out.empty()) write_text(a.importance_out, csv.str());
  }
  std::set<int> flagged_hyper;
  for (const auto& f : pearson.flags) flagged_hyper.insert(f.hyper_column);
  std::cout << nlohmann::json{{"n", a.n},
                              {"w_extra", a.w_extra},
                              {"k", a.k},
                              {"flagged_pairs", pearson.flags.size()},
                              {"flagged_hyperdims", flagged_hyper.size()},
                              {"mean_abs_weight_hyperdims", a.w_extra > 0 ? hyper_abs / a.w_extra : 0.0},
                              {"mean_abs_weight_originals", orig_abs / a.n},
                              {"warnings", pearson.warnings}}
                   .dump()
            << '\n';
  return 0;
}

int cmd_serve(const std::string& config_path) {
  const auto cfg = wet::load_proxy_config(config_path);
  auto key = std::make_shared<const wet::WatermarkKey>(wet::load_key(cfg.key_path));
  std::shared_ptr<wet::UpstreamClient> upstream = wet::make_upstream(cfg, key->n());
  auto service = std::make_shared<const wet::WatermarkService>(key, upstream, cfg.max_batch);
  wet::ProxyServer server(service, &std::cerr);
  const int port = server.bind(cfg.listen_host, cfg.listen_port);

  // Signals are taken by a waiter thread so stop() never runs in a handler.
  sigset_t stop_signals;
  sigemptyset(&stop_signals);
  sigaddset(&stop_signals, SIGINT);
  sigaddset(&stop_signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&stop_signals, &sig);
    server.stop();
  });

  std::cerr << "listening on " << cfg.listen_host << ':' << port << " key_fingerprint=" << service->fingerprint()
            << std::endl;
  server.listen();
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  return 0;
}

struct CorpusArgs {
  int count = 100, dim = 64;
  std::uint64_t seed = 0;
  std::string prefix = "s", out;
};

int cmd_gen_corpus(const CorpusArgs& a) {
  wet::write_corpus(a.out, wet::synthetic_corpus(a.count, a.dim, a.seed, a.prefix));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Embedding watermarking toolkit"};
  app.require_subcommand(1);

  KeygenArgs keygen;
  auto* k = app.add_subcommand("keygen", "Generate a watermark key");
  k->add_option("--n", keygen.n, "Original embedding dimension")->required();
  k->add_option("--k", keygen.k, "Nonzero entries per generating row");
  k->add_option("--w", keygen.w, "Watermarked dimension (default n)");
  k->add_option("--seed", keygen.seed)->required();
  k->add_option("--max-condition", keygen.max_condition);
  k->add_option("--max-attempts", keygen.max_attempts);
  k->add_option("--out", keygen.out, "Key file to write")->required();

  CodecArgs inject_args, recover_args;
  auto* inj = app.add_subcommand("inject", "Watermark a JSONL corpus");
  inj->add_option("--key", inject_args.key)->required();
  inj->add_option("--in", inject_args.in)->required();
  inj->add_option("--out", inject_args.out)->required();
  auto* rec = app.add_subcommand("recover", "Apply the pseudoinverse to a JSONL corpus");
  rec->add_option("--key", recover_args.key)->required();
  rec->add_option("--in", recover_args.in)->required();
  rec->add_option("--out", recover_args.out)->required();

  VerifyArgs verify;
  auto* v = app.add_subcommand("verify", "Score suspect embeddings against originals");
  v->add_option("--key", verify.key)->required();
  v->add_option("--suspect", verify.suspect)->required();
  v->add_option("--original", verify.original)->required();
  v->add_option("--contrast-suspect", verify.contrast_suspect)->required();
  v->add_option("--contrast-original", verify.contrast_original)->required();
  v->add_option("--threshold", verify.threshold, "Decision threshold on delta_cos (percent)");
  v->add_option("--out", verify.out, "Report JSON (default stdout)");
  v->add_option("--csv", verify.csv, "Per-pair cosine CSV");

  AttackArgs attack;
  auto* at = app.add_subcommand("attack", "Paraphrase-averaging and Gaussian-noise attack grids (CSV)");
  at->add_option("--key", attack.key)->required();
  at->add_option("--contrast-key", attack.contrast_key)->required();
  at->add_option("--config", attack.config, "Attack config JSON {p, spread, lambda_grid, trials, seed}");
  at->add_option("--corpus", attack.corpus, "Original embeddings (JSONL); synthetic when omitted");
  at->add_option("--contrast-corpus", attack.contrast_corpus);
  at->add_option("--samples", attack.samples, "Synthetic samples per set");
  auto* seed_opt = at->add_option("--seed", attack.seed);
  at->add_option("--target-cos", attack.target_cos, "Calibrate spread to this mean paraphrase cosine");
  at->add_option("--threshold", attack.threshold);
  at->add_option("--out", attack.out, "CSV output (default stdout)");

  auto* an = app.add_subcommand("analyze", "Analytical and structural analyses");
  an->require_subcommand(1);
  WeightArgs weight;
  auto* wm = an->add_subcommand("weight-model", "Trigger probability and weight tails");
  wm->add_option("--pt", weight.pt, "Per-token trigger probability");
  wm->add_option("--slen", weight.slen, "Sentence length");
  wm->add_option("--p", weight.p, "Paraphrase counts");
  wm->add_option("--a", weight.a, "Tail thresholds");
  wm->add_option("--out", weight.out);
  VariantArgs variants;
  auto* va = an->add_subcommand("variants", "Compare transformation-matrix constructions");
  va->add_option("--n", variants.n);
  va->add_option("--k", variants.k);
  va->add_option("--samples", variants.samples);
  va->add_option("--noise", variants.noise, "Imitation noise level applied to suspects");
  va->add_option("--seed", variants.seed);
  va->add_option("--out", variants.out);
  ObfuscationArgs obf;
  auto* ob = an->add_subcommand("obfuscation", "Hyperdimension obfuscation detectors");
  ob->add_option("--n", obf.n);
  ob->add_option("--w-extra", obf.w_extra);
  ob->add_option("--k", obf.k);
  ob->add_option("--samples", obf.samples);
  ob->add_option("--threshold", obf.threshold);
  ob->add_option("--seed", obf.seed);
  ob->add_option("--corr-out", obf.corr_out);
  ob->add_option("--importance-out", obf.importance_out);

  std::string serve_config;
  auto* sv = app.add_subcommand("serve", "Run the watermarking proxy");
  sv->add_option("--config", serve_config)->required();

  CorpusArgs corpus;
  auto* gc = app.add_subcommand("gen-corpus", "Synthetic unit-sphere embeddings (JSONL)");
  gc->add_option("--count", corpus.count);
  gc->add_option("--dim", corpus.dim);
  gc->add_option("--seed", corpus.seed)->required();
  gc->add_option("--prefix", corpus.prefix);
  gc->add_option("--out", corpus.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  attack.seed_set = seed_opt->count() > 0;

  try {
    if (*k) return cmd_keygen(keygen);
    if (*inj) return cmd_inject(inject_args);
    if (*rec) return cmd_recover(recover_args);
    if (*v) return cmd_verify(verify);
    if (*at) return cmd_attack(attack);
    if (*wm) return cmd_weight_model(weight);
    if (*va) return cmd_variants(variants);
    if (*ob) return cmd_obfuscation(obf);
    if (*sv) return cmd_serve(serve_config);
    if (*gc) return cmd_gen_corpus(corpus);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
