// pep: command-line front end for the PEP pretraining pipeline.
//
// Settings resolve in this order, later wins: built-in defaults, the --config
// file, PEP_* environment variables, command-line flags. The environment
// mirrors the global flags: PEP_CONFIG, PEP_SEED, PEP_THREADS, PEP_OUT_DIR.

#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "pep/checkpoint.hpp"
#include "pep/config.hpp"
#include "pep/conversation.hpp"
#include "pep/downstream.hpp"
#include "pep/labels.hpp"
#include "pep/parallel.hpp"
#include "pep/random.hpp"
#include "pep/synthetic.hpp"
#include "pep/text.hpp"
#include "pep/trainer.hpp"
#include "pep/unicode.hpp"
#include "pep/vocab.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

// Missing inputs or stage prerequisites.
class PrerequisiteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GlobalFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::string out_dir;
  std::vector<std::string> sets;  // key=value overrides
};

std::optional<std::string> env(const char* name) {
  if (const char* v = std::getenv(name); v && *v) return std::string(v);
  return std::nullopt;
}

pep::RunConfig resolve_config(const GlobalFlags& g) {
  pep::RunConfig cfg;
  std::string path = g.config;
  if (path.empty()) path = env("PEP_CONFIG").value_or("");
  if (!path.empty()) cfg = pep::load_config(path);
  if (auto v = env("PEP_SEED")) pep::set_config_value(cfg, "train.seed", *v);
  if (auto v = env("PEP_THREADS")) pep::set_config_value(cfg, "train.threads", *v);
  if (auto v = env("PEP_OUT_DIR")) pep::set_config_value(cfg, "paths.out_dir", *v);
  if (g.seed) cfg.seed = *g.seed;
  if (g.threads) cfg.threads = *g.threads;
  if (!g.out_dir.empty()) cfg.paths.out_dir = g.out_dir;
  for (const auto& kv : g.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw pep::ConfigError("--set expects key=value, got " + kv);
    pep::set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PrerequisiteError("cannot read input file: " + path);
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  char two[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(two, sizeof two, "%02x", md[i]);
    hex += two;
  }
  return hex;
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Resolved config, input digests and artifact list for one command run.
class RunManifest {
 public:
  RunManifest(std::string command, const pep::RunConfig& cfg, std::vector<std::string> argv)
      : cfg_(cfg), dir_(cfg.paths.out_dir) {
    doc_["command"] = std::move(command);
    doc_["argv"] = std::move(argv);
    doc_["seed"] = cfg.seed;
    doc_["threads"] = cfg.threads;
    doc_["config_file"] = "config.resolved";
    doc_["inputs"] = json::array();
    doc_["artifacts"] = json::array();
    doc_["started_at"] = utc_now();
    doc_["finished_at"] = nullptr;
  }
  void input(const std::string& path) {
    doc_["inputs"].push_back({{"path", path}, {"sha256", sha256_file(path)},
                              {"bytes", fs::file_size(path)}});
  }
  void artifact(const std::string& path) { doc_["artifacts"].push_back(path); }
  /// Writes config.resolved and manifest.json into the output directory.
  void write() const {
    fs::create_directories(dir_);
    std::ofstream(dir_ / "config.resolved") << pep::to_text(cfg_);
    std::ofstream(dir_ / "manifest.json") << doc_.dump(2) << '\n';
  }
  void finish() {
    doc_["finished_at"] = utc_now();
    write();
  }
  fs::path dir() const { return dir_; }

 private:
  pep::RunConfig cfg_;
  fs::path dir_;
  json doc_;
};

std::string require(const std::string& flag_value, const std::string& config_value,
                    const std::string& what, const std::string& hint) {
  const std::string& v = flag_value.empty() ? config_value : flag_value;
  if (v.empty()) throw PrerequisiteError("missing " + what + ": " + hint);
  if (!fs::exists(v)) throw PrerequisiteError(what + " not found: " + v + " (" + hint + ")");
  return v;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PrerequisiteError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

// ---- commands ---------------------------------------------------------------

int cmd_preprocess(const std::string& in_path, const std::string& out_path) {
  std::ifstream in(in_path, std::ios::binary);
  if (!in) throw PrerequisiteError("cannot open input corpus: " + in_path);
  std::ostringstream out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (const auto bad = pep::unicode::find_invalid_utf8(line))
      throw std::runtime_error(in_path + ": line " + std::to_string(line_no) +
                               ": invalid UTF-8 at byte " + std::to_string(*bad + 1));
    out << pep::text::normalize(line) << '\n';
  }
  fs::path target(out_path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  std::ofstream(out_path, std::ios::binary) << out.str();
  return 0;
}

int cmd_build_vocab(const pep::RunConfig& cfg, RunManifest& m, const std::string& corpus_flag,
                    std::string out) {
  const auto corpus = require(corpus_flag, cfg.paths.corpus, "corpus",
                              "pass --corpus or set paths.corpus");
  m.input(corpus);
  if (out.empty()) out = (m.dir() / "vocab.txt").string();
  m.artifact(out);
  m.write();
  const auto posts = read_lines(corpus);
  const auto vocab = pep::build_vocab(posts, cfg.vocab_size, cfg.vocab_max);
  vocab.save(out);
  std::cout << "vocabulary: " << vocab.size() << " tokens -> " << out << '\n';
  return 0;
}

int cmd_derive_labels(const pep::RunConfig& cfg, RunManifest& m, const std::string& conv_flag,
                      std::string out) {
  const auto path = require(conv_flag, cfg.paths.conversations, "conversations file",
                            "pass --conversations or set paths.conversations");
  m.input(path);
  if (out.empty()) out = (m.dir() / "labels.tsv").string();
  m.artifact(out);
  m.write();
  const auto data = pep::load_conversations_strict(path);
  const auto labels = pep::derive_all(std::span<const pep::ClaimConversation>(data.conversations));
  std::ofstream os(out);
  for (std::size_t i = 0; i < labels.size(); ++i)
    pep::write_sparse_labels(os, data.conversations[i], labels[i]);
  std::cout << "labels for " << labels.size() << " trees -> " << out << '\n';
  return 0;
}

pep::EncoderConfig encoder_for(const pep::RunConfig& cfg, const pep::Vocabulary& vocab) {
  pep::EncoderConfig enc = cfg.encoder;
  if (enc.vocab_size == 0) enc.vocab_size = vocab.size();
  if (enc.vocab_size != vocab.size())
    throw PrerequisiteError("encoder.vocab_size " + std::to_string(enc.vocab_size) +
                            " does not match the vocabulary (" + std::to_string(vocab.size()) +
                            " tokens)");
  enc.validate();
  return enc;
}

pep::TrainOptions train_options(const pep::RunConfig& cfg, const std::string& ckpt,
                                std::ostream* log) {
  pep::TrainOptions o;
  o.seed = cfg.seed;
  o.adamw = cfg.optim;
  o.decay_mask = cfg.decay_mask;
  o.checkpoint_every = cfg.checkpoint_every;
  o.checkpoint_path = ckpt;
  o.log = log;
  return o;
}

int cmd_pretrain(const pep::RunConfig& cfg, RunManifest& m, int stage, const std::string& vocab_flag,
                 const std::string& corpus_flag, const std::string& conv_flag,
                 const std::string& init_flag, bool resume, std::size_t stop_at) {
  const auto vocab_path =
      require(vocab_flag, cfg.paths.vocab, "vocabulary",
              "pass --vocab or set paths.vocab; build one with `pep build-vocab`");
  std::string data_path;
  if (stage == 1)
    data_path = require(corpus_flag, cfg.paths.corpus, "stage-1 corpus",
                        "pass --corpus or set paths.corpus");
  else
    data_path = require(conv_flag, cfg.paths.conversations, "stage-2 conversations",
                        "pass --conversations or set paths.conversations");
  const std::string init = init_flag.empty() ? cfg.paths.checkpoint : init_flag;
  if (!init.empty() && !fs::exists(init))
    throw PrerequisiteError("initial checkpoint not found: " + init);
  m.input(vocab_path);
  m.input(data_path);
  if (!init.empty()) m.input(init);

  const fs::path ckpt = m.dir() / ("stage" + std::to_string(stage) + ".ckpt");
  const fs::path log_path = m.dir() / ("stage" + std::to_string(stage) + ".log.tsv");
  m.artifact(ckpt.string());
  m.artifact(log_path.string());
  m.write();

  const auto vocab = pep::Vocabulary::load(vocab_path);
  const auto enc = encoder_for(cfg, vocab);

  std::optional<pep::EncoderParams> params;
  pep::TrainerState state;
  if (resume && fs::exists(ckpt)) {
    auto c = pep::load_checkpoint(ckpt.string());
    params.emplace(std::move(c.params));
    state = std::move(c.state);
  } else if (!init.empty()) {
    auto c = pep::load_checkpoint(init);
    params.emplace(std::move(c.params));
    state = std::move(c.state);
    if (state.stage == stage) state = pep::TrainerState{stage, 0, 0, {}, {}};
  } else {
    params.emplace(enc);
    params->init_random(pep::mix_seed({cfg.seed, 0x1417}), cfg.init_std);
    state.stage = stage;
  }
  if (params->config() != enc)
    throw PrerequisiteError("checkpoint encoder config does not match the run config");

  const bool appending = resume && state.stage == stage && state.step > 0;
  std::ofstream log(log_path, appending ? std::ios::app : std::ios::trunc);
  if (!appending) log << pep::log_header() << '\n';
  auto opts = train_options(cfg, ckpt.string(), &log);
  opts.stop_at = stop_at;

  pep::TrainResult result;
  if (stage == 1) {
    std::vector<pep::TokenSequence> corpus;
    for (const auto& line : read_lines(data_path))
      if (!line.empty()) corpus.push_back(pep::encode_text(line, vocab, enc.max_positions));
    if (corpus.empty()) throw PrerequisiteError("stage-1 corpus has no posts: " + data_path);
    result = pep::train_stage1(*params, state, corpus, cfg.stage1, opts);
  } else {
    const auto data = pep::load_conversations_strict(data_path);
    const auto trees =
        pep::prepare_trees(data.conversations, vocab, cfg.tree_cap, cfg.seed, enc.max_positions);
    result = pep::train_stage2(*params, state, trees, cfg.stage2, cfg.pep, opts);
  }
  std::cout << "stage " << stage << ": " << result.records.size() << " steps";
  if (!result.records.empty()) std::cout << ", last total loss " << result.records.back().total;
  std::cout << " -> " << ckpt.string() << '\n';
  return 0;
}

struct EvalInputs {
  pep::Vocabulary vocab;
  pep::EncoderParams params;
  pep::ConversationDataset data;
  pep::LabelSet classes;
  std::vector<int> y;
  std::string init_name;
};

EvalInputs load_eval_inputs(const pep::RunConfig& cfg, RunManifest& m, const std::string& ckpt_flag,
                            const std::string& vocab_flag, const std::string& labeled_flag,
                            bool random_init) {
  const auto vocab_path = require(vocab_flag, cfg.paths.vocab, "vocabulary",
                                  "pass --vocab or set paths.vocab");
  const auto labeled = require(labeled_flag, cfg.paths.labeled, "labeled dataset",
                               "pass --labeled or set paths.labeled");
  std::string ckpt;
  if (!random_init)
    ckpt = require(ckpt_flag, cfg.paths.checkpoint, "checkpoint",
                   "pass --checkpoint (run `pep pretrain` first) or --random-init");
  m.input(vocab_path);
  m.input(labeled);
  if (!ckpt.empty()) m.input(ckpt);
  m.write();

  auto vocab = pep::Vocabulary::load(vocab_path);
  const auto enc = encoder_for(cfg, vocab);
  pep::EncoderParams params(enc);
  if (random_init) {
    params.init_random(pep::mix_seed({cfg.seed, 0x1417}), cfg.init_std);
  } else {
    params = pep::load_checkpoint(ckpt).params;
    if (params.config().vocab_size != vocab.size())
      throw PrerequisiteError("checkpoint vocabulary size does not match " + vocab_path);
  }
  auto data = pep::load_conversations_strict(labeled);
  if (!data.labeled) throw PrerequisiteError("dataset has no class labels: " + labeled);
  auto classes = pep::LabelSet::from(data.conversations);
  auto y = classes.encode(data.conversations);
  return {std::move(vocab), std::move(params), std::move(data), std::move(classes), std::move(y),
          random_init ? "random" : "checkpoint"};
}

// Stratified train/test split by test_fraction.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split(const std::vector<int>& y,
                                                                    std::size_t classes,
                                                                    double test_fraction,
                                                                    std::uint64_t seed) {
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(y.size())));
  if (n_test == 0 || n_test >= y.size())
    throw std::invalid_argument("eval.test_fraction leaves an empty train or test split");
  const auto test = pep::stratified_sample(y, classes, n_test, pep::mix_seed({seed, 0x5717}));
  std::vector<std::size_t> train;
  std::size_t t = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (t < test.size() && test[t] == i) {
      ++t;
      continue;
    }
    train.push_back(i);
  }
  return {train, test};
}

json metrics_record(const std::string& dataset, const std::string& init, const std::string& model,
                    std::optional<std::size_t> k, std::optional<std::size_t> rep,
                    const pep::Metrics& mt, const pep::LabelSet& classes) {
  json per_class = json::object();
  for (std::size_t c = 0; c < classes.size(); ++c)
    per_class[classes.names[c]] = {{"precision", mt.per_class[c].precision},
                                   {"recall", mt.per_class[c].recall},
                                   {"f1", mt.per_class[c].f1},
                                   {"support", mt.per_class[c].support}};
  json r;
  r["dataset"] = dataset;
  r["init"] = init;
  r["model"] = model;
  r["k"] = k ? json(*k) : json(nullptr);
  r["repetition"] = rep ? json(*rep) : json(nullptr);
  r["accuracy"] = mt.accuracy;
  r["macro_f1"] = mt.macro_f1;
  r["primary"] = mt.primary();
  r["per_class"] = per_class;
  return r;
}

template <class T>
std::vector<T> pick(const std::vector<T>& v, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  for (std::size_t i : idx) out.push_back(v[i]);
  return out;
}

pep::ProbeConfig probe_config(const pep::RunConfig& cfg) {
  pep::ProbeConfig p;
  p.l2 = cfg.eval.l2;
  p.tolerance = cfg.eval.tolerance;
  p.max_iterations = cfg.eval.max_iterations;
  return p;
}

int cmd_evaluate(const pep::RunConfig& cfg, RunManifest& m, const std::string& ckpt,
                 const std::string& vocab, const std::string& labeled, bool random_init,
                 const std::string& dataset) {
  const fs::path out = m.dir() / "metrics.jsonl";
  m.artifact(out.string());
  auto in = load_eval_inputs(cfg, m, ckpt, vocab, labeled, random_init);
  const std::size_t C = in.classes.size();
  const auto [train, test] = split(in.y, C, cfg.eval.test_fraction, cfg.seed);
  const auto& convs = in.data.conversations;
  const auto X = pep::claim_embeddings(convs, in.vocab, in.params, cfg.eval.pooling);
  const auto ytr = pick(in.y, train), yte = pick(in.y, test);
  const auto probe = pep::train_probe(pep::select_rows(X, train), ytr, C, probe_config(cfg));
  const auto probe_metrics =
      pep::evaluate(probe.predict(pep::select_rows(X, test)), yte, C, cfg.eval.balanced);
  std::ofstream os(out);
  const auto r1 = metrics_record(dataset, in.init_name, "probe", std::nullopt, std::nullopt,
                                 probe_metrics, in.classes);
  os << r1.dump() << '\n';
  std::cout << r1.dump() << '\n';
  if (cfg.eval.gcn) {
    std::vector<pep::GraphExample> graphs;
    for (std::size_t i = 0; i < convs.size(); ++i)
      graphs.push_back(pep::graph_example(convs[i], in.vocab, in.params, in.y[i]));
    pep::GcnConfig gc;
    gc.l2 = cfg.eval.l2;
    gc.tolerance = cfg.eval.tolerance;
    gc.seed = cfg.seed;
    const auto model = pep::train_gcn(pick(graphs, train), C, gc);
    const auto gm = pep::evaluate(model.predict(pick(graphs, test)), yte, C, cfg.eval.balanced);
    const auto r2 =
        metrics_record(dataset, in.init_name, "gcn", std::nullopt, std::nullopt, gm, in.classes);
    os << r2.dump() << '\n';
    std::cout << r2.dump() << '\n';
  }
  return 0;
}

int cmd_fewshot(const pep::RunConfig& cfg, RunManifest& m, const std::string& ckpt,
                const std::string& vocab, const std::string& labeled, bool random_init,
                const std::string& dataset) {
  const fs::path runs_path = m.dir() / "fewshot.jsonl";
  const fs::path curve_path = m.dir() / "fewshot_curve.tsv";
  m.artifact(runs_path.string());
  m.artifact(curve_path.string());
  auto in = load_eval_inputs(cfg, m, ckpt, vocab, labeled, random_init);
  const std::size_t C = in.classes.size();
  const auto [train, test] = split(in.y, C, cfg.eval.test_fraction, cfg.seed);
  const auto X = pep::claim_embeddings(in.data.conversations, in.vocab, in.params, cfg.eval.pooling);
  pep::FewShotConfig fc{cfg.eval.k_values, cfg.eval.repetitions, cfg.seed};
  const auto result =
      pep::few_shot_probe(pep::select_rows(X, train), pick(in.y, train), pep::select_rows(X, test),
                          pick(in.y, test), C, fc, cfg.eval.balanced, probe_config(cfg));
  std::ofstream os(runs_path);
  for (const auto& run : result.runs)
    os << metrics_record(dataset, in.init_name, "probe", run.k, run.repetition, run.metrics,
                         in.classes)
              .dump()
       << '\n';
  std::ofstream(curve_path) << pep::format_curve(result);
  std::cout << pep::format_curve(result);
  return 0;
}

int cmd_stats(const pep::RunConfig& cfg, RunManifest& m, const std::string& corpus,
              const std::string& vocab_flag, const std::string& conv) {
  if (corpus.empty() && conv.empty())
    throw PrerequisiteError("stats needs --corpus (with --vocab) and/or --conversations");
  json doc;
  if (!corpus.empty()) {
    const auto vocab_path = require(vocab_flag, cfg.paths.vocab, "vocabulary",
                                    "pass --vocab for corpus length statistics");
    m.input(corpus);
    m.input(vocab_path);
    const auto vocab = pep::Vocabulary::load(vocab_path);
    std::ifstream in(corpus, std::ios::binary);
    if (!in) throw PrerequisiteError("cannot open corpus: " + corpus);
    const auto s = pep::length_stats(in, vocab);
    json buckets = json::array();
    for (std::size_t b : s.buckets) buckets.push_back(b);
    doc["length"] = {{"posts", s.posts},         {"under_20", s.fraction_under_20()},
                     {"over_100", s.fraction_over_100()}, {"max", s.max_length},
                     {"median", s.quantile(0.5)}, {"p90", s.quantile(0.9)},
                     {"bucket_width", pep::LengthStats::kBucketWidth}, {"buckets", buckets}};
  }
  if (!conv.empty()) {
    m.input(conv);
    const auto s = pep::tree_stats(pep::load_conversations_strict(conv));
    json depth_trees = json::object(), depth_posts = json::object();
    for (auto [d, c] : s.tree_depth_histogram) depth_trees[std::to_string(d)] = c;
    for (auto [d, c] : s.post_depth_histogram) depth_posts[std::to_string(d)] = c;
    doc["trees"] = {{"claims", s.claims},       {"posts", s.total_posts},
                    {"mean_posts", s.mean_posts}, {"max_posts", s.max_posts},
                    {"max_depth", s.max_depth},  {"trees_by_depth", depth_trees},
                    {"posts_by_depth", depth_posts}};
  }
  const fs::path out = m.dir() / "stats.json";
  m.artifact(out.string());
  m.write();
  std::ofstream(out) << doc.dump(2) << '\n';
  std::cout << doc.dump(2) << '\n';
  return 0;
}

int cmd_synth(const pep::RunConfig& cfg, const std::string& kind, std::size_t count,
              const std::string& out) {
  pep::synth::TextOptions text;
  pep::ConversationDataset data;
  if (kind == "claims") data = pep::synth::make_interaction_claims(count, text, cfg.seed);
  else if (kind == "mix") data = pep::synth::make_pretraining_mix(count, text, cfg.seed);
  else if (kind == "branches")
    data = pep::synth::make_dataset(pep::synth::Shape::kBranches, count, text, cfg.seed);
  else throw std::invalid_argument("unknown --kind " + kind + " (claims|mix|branches)");
  fs::path target(out);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  pep::save_conversations(data, out);
  if (out.ends_with(".jsonl")) {
    std::ofstream posts(out.substr(0, out.size() - 6) + ".posts.txt");
    for (const auto& p : pep::synth::post_texts(data)) posts << p << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PEP: propagation-structure pretraining for social-media encoders"};
  app.require_subcommand(1);
  GlobalFlags g;
  app.add_option("--config", g.config, "key = value config file (env PEP_CONFIG)");
  app.add_option("--seed", g.seed, "random seed (env PEP_SEED)");
  app.add_option("--threads", g.threads, "worker threads, >= 1 (env PEP_THREADS)");
  app.add_option("--out-dir", g.out_dir, "output directory (env PEP_OUT_DIR)");
  app.add_option("--set", g.sets, "override one config key: --set key=value (repeatable)");

  std::string in, out, corpus, conv, vocab, init, ckpt, labeled, dataset = "dataset", kind = "claims";
  int stage = 0;
  bool resume = false, random_init = false;
  std::size_t count = 100, stop_at = 0;

  auto* pre = app.add_subcommand("preprocess", "normalize a corpus line by line");
  pre->add_option("--in", in, "raw corpus, one post per line")->required();
  pre->add_option("--out", out, "normalized output")->required();

  auto* bv = app.add_subcommand("build-vocab", "train the subword vocabulary");
  bv->add_option("--corpus", corpus, "normalized corpus");
  bv->add_option("--out", out, "vocabulary file (default <out-dir>/vocab.txt)");

  auto* dl = app.add_subcommand("derive-labels", "export sparse RoP/BrP/PaP labels");
  dl->add_option("--conversations", conv, "conversation records (JSON lines)");
  dl->add_option("--out", out, "label file (default <out-dir>/labels.tsv)");

  auto* pt = app.add_subcommand("pretrain", "run pretraining stage 1 (MLM) or 2 (MLM + PEP)");
  pt->add_option("--stage", stage, "1 or 2")->required()->check(CLI::IsMember({1, 2}));
  pt->add_option("--vocab", vocab, "vocabulary file");
  pt->add_option("--corpus", corpus, "stage-1 corpus, one post per line");
  pt->add_option("--conversations", conv, "stage-2 conversations (JSON lines)");
  pt->add_option("--init", init, "start from this checkpoint");
  pt->add_flag("--resume", resume, "continue from <out-dir>/stage<N>.ckpt if present");
  pt->add_option("--stop-at", stop_at, "stop after this step (checkpoint written)");

  auto* ev = app.add_subcommand("evaluate", "linear probe (and optional GCN) on claim labels");
  auto* fs_cmd = app.add_subcommand("fewshot", "few-shot probe curve over eval.k_values");
  for (auto* c : {ev, fs_cmd}) {
    c->add_option("--checkpoint", ckpt, "pretrained checkpoint");
    c->add_option("--vocab", vocab, "vocabulary file");
    c->add_option("--labeled", labeled, "labeled conversations (JSON lines)");
    c->add_option("--dataset", dataset, "dataset name for the metrics records");
    c->add_flag("--random-init", random_init, "use a randomly initialized encoder");
  }

  auto* st = app.add_subcommand("stats", "post length and propagation tree statistics");
  st->add_option("--corpus", corpus, "corpus for length statistics");
  st->add_option("--vocab", vocab, "vocabulary for length statistics");
  st->add_option("--conversations", conv, "conversations for tree statistics");

  auto* sy = app.add_subcommand("synth", "write a synthetic conversation dataset");
  sy->add_option("--kind", kind, "claims | mix | branches");
  sy->add_option("--count", count, "number of conversations");
  sy->add_option("--out", out, "output JSON lines file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const pep::RunConfig cfg = resolve_config(g);
    if (cfg.threads == 0) throw pep::ConfigError("threads must be >= 1");
    pep::set_num_threads(static_cast<int>(cfg.threads));
    std::vector<std::string> args(argv, argv + argc);
    const std::string name = app.get_subcommands().front()->get_name();
    RunManifest manifest(name, cfg, args);

    int rc = 0;
    if (*pre) {
      manifest.input(in);
      manifest.artifact(out);
      manifest.write();
      rc = cmd_preprocess(in, out);
    } else if (*bv) {
      rc = cmd_build_vocab(cfg, manifest, corpus, out);
    } else if (*dl) {
      rc = cmd_derive_labels(cfg, manifest, conv, out);
    } else if (*pt) {
      rc = cmd_pretrain(cfg, manifest, stage, vocab, corpus, conv, init, resume, stop_at);
    } else if (*ev) {
      rc = cmd_evaluate(cfg, manifest, ckpt, vocab, labeled, random_init, dataset);
    } else if (*fs_cmd) {
      rc = cmd_fewshot(cfg, manifest, ckpt, vocab, labeled, random_init, dataset);
    } else if (*st) {
      rc = cmd_stats(cfg, manifest, corpus, vocab, conv);
    } else if (*sy) {
      manifest.artifact(out);
      manifest.write();
      rc = cmd_synth(cfg, kind, count, out);
    }
    manifest.finish();
    return rc;
  } catch (const PrerequisiteError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const pep::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
