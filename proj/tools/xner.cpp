// xner: convert, train, tag, eval, sweep and grid commands.
//
// Exit codes: 0 success, 1 usage/config, 2 data format, 3 numeric failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "xner/checkpoint.hpp"
#include "xner/config.hpp"
#include "xner/corpus.hpp"
#include "xner/lexicon.hpp"
#include "xner/model.hpp"
#include "xner/training.hpp"

namespace fs = std::filesystem;
using namespace xner;

namespace {

// ---------------------------------------------------------------- settings

const std::set<std::string> kKnownKeys{
    "seed",
    "scheme",
    "input_scheme",
    "columns.count",
    "columns.word",
    "columns.tag",
    "target.name",
    "target.train",
    "target.dev",
    "target.test",
    "target.embeddings",
    "source.name",
    "source.train",
    "source.dev",
    "source.embeddings",
    "sharing.filters",
    "sharing.decoder",
    "sharing.embedding_space",
    "embeddings.bilingual",
    "model.lstm_size",
    "model.max_filter_width",
    "model.filters_per_width",
    "model.emb_dim",
    "model.learning_rate",
    "model.max_epochs",
    "model.patience",
    "model.clip_norm",
    "output.checkpoint",
    "output.report",
    "output.report_text",
    "grid.full",
    "grid.lstm_size",
    "grid.max_filter_width",
    "grid.filters_per_width",
    "grid.learning_rate",
    "sweep.fractions",
};

struct LangFiles {
  std::string name, train, dev, test, embeddings;
};

struct RunConfig {
  ColumnLayout layout{2, 0, 1};
  TagScheme input_scheme = TagScheme::IOB1;
  TagScheme scheme = TagScheme::IOBES;
  LangFiles target;
  std::optional<LangFiles> source;
  SharingConfig sharing;
  std::string bilingual;
  Hyperparams hp;
  std::string checkpoint, report, report_text;
};

void require_file(const std::string& key, const std::string& path) {
  if (!fs::is_regular_file(path)) throw ConfigError(key + ": file '" + path + "' not found");
}

void require_writable(const std::string& key, const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty() && !fs::is_directory(parent))
    throw ConfigError(key + ": directory '" + parent.string() + "' does not exist");
}

LangFiles lang_files(const Config& c, const std::string& sec, const std::string& fallback_name) {
  LangFiles l;
  l.name = c.str(sec + ".name", fallback_name);
  l.train = c.str(sec + ".train", "");
  l.dev = c.str(sec + ".dev", "");
  l.test = c.str(sec + ".test", "");
  l.embeddings = c.str(sec + ".embeddings", "");
  for (const auto& [k, v] : {std::pair{"train", l.train}, {"dev", l.dev}, {"test", l.test}, {"embeddings", l.embeddings}})
    if (!v.empty()) require_file(sec + "." + k, v);
  return l;
}

/// Validates everything (including that referenced files exist) up front.
RunConfig run_config(const Config& c) {
  c.check_known(kKnownKeys);
  RunConfig r;
  if (!c.has("seed")) throw ConfigError("a seed is required (set 'seed' in the config or pass --seed)");
  r.hp.seed = c.uint("seed");
  r.scheme = parse_scheme(c.str("scheme", "IOBES"));
  r.input_scheme = parse_scheme(c.str("input_scheme", "IOB1"));
  r.layout.columns = c.uint("columns.count", 2);
  r.layout.word = c.uint("columns.word", 0);
  r.layout.tag = c.uint("columns.tag", r.layout.columns - 1);
  if (r.input_scheme == TagScheme::IO && r.scheme != TagScheme::IO)
    throw ConfigError("input_scheme IO cannot be converted to " + to_string(r.scheme));

  r.target = lang_files(c, "target", "target");
  if (r.target.train.empty()) throw ConfigError("missing required setting 'target.train'");
  if (r.target.dev.empty()) throw ConfigError("missing required setting 'target.dev'");
  if (c.has("source.train")) {
    r.source = lang_files(c, "source", "source");
    if (r.source->name == r.target.name) throw ConfigError("source and target need different names");
  }

  r.sharing.share_filters = c.flag("sharing.filters", true);
  r.sharing.share_decoder = c.flag("sharing.decoder", true);
  r.sharing.shared_embedding_space = c.flag("sharing.embedding_space", false);
  r.bilingual = c.str("embeddings.bilingual", "");
  if (!r.bilingual.empty()) require_file("embeddings.bilingual", r.bilingual);
  if (r.sharing.shared_embedding_space && r.source && (!r.target.embeddings.empty() || !r.source->embeddings.empty()))
    throw ConfigError("sharing.embedding_space takes one embeddings.bilingual file, not per-language files");

  r.hp.lstm_size = c.uint("model.lstm_size", r.hp.lstm_size);
  r.hp.max_filter_width = c.uint("model.max_filter_width", r.hp.max_filter_width);
  r.hp.filters_per_width = c.uint("model.filters_per_width", r.hp.filters_per_width);
  r.hp.emb_dim = c.uint("model.emb_dim", r.hp.emb_dim);
  r.hp.learning_rate = c.real("model.learning_rate", r.hp.learning_rate);
  r.hp.max_epochs = c.uint("model.max_epochs", r.hp.max_epochs);
  r.hp.patience = c.uint("model.patience", r.hp.patience);
  r.hp.clip_norm = c.real("model.clip_norm", r.hp.clip_norm);
  if (r.hp.lstm_size == 0 || r.hp.max_filter_width == 0 || r.hp.filters_per_width == 0 || r.hp.emb_dim == 0)
    throw ConfigError("model sizes must be positive");
  if (!(r.hp.learning_rate >= 0)) throw ConfigError("model.learning_rate must be non-negative");

  r.checkpoint = c.str("output.checkpoint", "");
  r.report = c.str("output.report", "");
  r.report_text = c.str("output.report_text", "");
  for (const auto& [k, v] : {std::pair{"output.checkpoint", r.checkpoint}, {"output.report", r.report},
                             {"output.report_text", r.report_text}})
    if (!v.empty()) require_writable(k, v);
  return r;
}

// ---------------------------------------------------------------- data

struct Data {
  Corpus target_train, target_dev;
  std::optional<Corpus> target_test;
  std::optional<Corpus> source_train, source_dev;
  std::optional<Embeddings> target_emb, source_emb, bilingual;
};

Corpus read_corpus(const RunConfig& r, const std::string& path, const std::string& lang) {
  Corpus c = read_conll(path, r.layout, r.input_scheme, lang);
  if (c.repairs) std::cerr << "note: " << path << ": repaired " << c.repairs << " invalid tag sequence(s)\n";
  return c.scheme == r.scheme ? c : convert_scheme(c, r.scheme, r.layout.tag);
}

Embeddings read_embeddings(const RunConfig& r, const std::string& path) {
  try {
    return load_embeddings(read_file(path), r.hp.seed);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

Data load_data(const RunConfig& r) {
  Data d;
  d.target_train = read_corpus(r, r.target.train, r.target.name);
  d.target_dev = read_corpus(r, r.target.dev, r.target.name);
  if (!r.target.test.empty()) d.target_test = read_corpus(r, r.target.test, r.target.name);
  if (!r.target.embeddings.empty()) d.target_emb = read_embeddings(r, r.target.embeddings);
  if (r.source) {
    d.source_train = read_corpus(r, r.source->train, r.source->name);
    if (!r.source->dev.empty()) d.source_dev = read_corpus(r, r.source->dev, r.source->name);
    if (!r.source->embeddings.empty()) d.source_emb = read_embeddings(r, r.source->embeddings);
  }
  if (!r.bilingual.empty()) d.bilingual = read_embeddings(r, r.bilingual);
  return d;
}

struct Run {
  Model model;
  TrainReport report;
};

/// Trains on `target_train` alone or jointly with the source corpus.
Run run_training(const RunConfig& r, const Data& d, const Corpus& target_train, bool joint, const Hyperparams& hp,
                 std::ostream* log) {
  auto opt = [](const std::optional<Embeddings>& e) { return e ? &*e : nullptr; };
  std::vector<LanguageData> langs{{r.target.name, &target_train, opt(d.target_emb)}};
  if (joint) langs.push_back({r.source->name, &*d.source_train, opt(d.source_emb)});
  const Embeddings* shared = r.sharing.shared_embedding_space || !joint ? opt(d.bilingual) : nullptr;
  Model m = build_model(hp, langs, r.sharing, r.scheme, shared);

  const JointCorpus train_set =
      joint ? merge_shuffle(target_train, *d.source_train, hp.seed) : merge_shuffle(target_train, hp.seed);
  const JointCorpus dev = joint && d.source_dev ? merge_shuffle(d.target_dev, *d.source_dev, hp.seed)
                                                : merge_shuffle(d.target_dev, hp.seed);
  std::optional<JointCorpus> test;
  if (d.target_test) test = merge_shuffle(*d.target_test, hp.seed);
  TrainOptions opts;
  opts.log = log;
  opts.test = test ? &*test : nullptr;
  TrainReport rep = train(m, train_set, dev, hp, opts);
  return {std::move(m), std::move(rep)};
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os || !(os << text)) throw ConfigError("cannot write '" + path + "'");
}

void write_outputs(const RunConfig& r, const Run& run) {
  if (!r.checkpoint.empty()) save_checkpoint(run.model, r.checkpoint);
  if (!r.report.empty()) write_text(r.report, report_kv(run.report));
  if (!r.report_text.empty()) write_text(r.report_text, report_text(run.report));
}

// ---------------------------------------------------------------- CoNLL helpers

/// Column count of the first non-blank line, or `fallback` for an empty file.
std::size_t detect_columns(const std::string& text, std::size_t fallback) {
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::size_t n = 0;
    std::string tok;
    while (ls >> tok) ++n;
    if (n) return n;
  }
  return fallback;
}

Corpus read_tagged(const std::string& path, std::optional<std::size_t> columns, std::optional<std::size_t> tag_col,
                   std::size_t word_col, TagScheme scheme) {
  require_file("input", path);
  const std::string text = read_file(path);
  ColumnLayout layout;
  layout.columns = columns ? *columns : detect_columns(text, std::max(word_col, tag_col.value_or(1)) + 1);
  layout.word = word_col;
  layout.tag = tag_col ? *tag_col : layout.columns - 1;
  try {
    return parse_conll(text, layout, scheme);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------- commands

struct Global {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  bool verbose = false;

  Config load() const {
    Config c;
    if (!config_path.empty()) {
      require_file("--config", config_path);
      c = Config::parse(read_file(config_path), config_path);
    }
    for (const auto& o : overrides) c.set(o);
    if (seed) c.set("seed", std::to_string(*seed));
    return c;
  }
};

struct ConvertArgs {
  std::string in, out, from = "IOB1", to = "IOBES";
  std::optional<std::size_t> columns, tag_col;
  std::size_t word_col = 0;
};

void cmd_convert(const ConvertArgs& a) {
  const TagScheme from = parse_scheme(a.from), to = parse_scheme(a.to);
  if (from == TagScheme::IO && to != TagScheme::IO)
    throw ConfigError("cannot convert from IO to " + to_string(to) + ": entity boundaries are not recoverable");
  const Corpus c = read_tagged(a.in, a.columns, a.tag_col, a.word_col, from);
  const std::size_t cols = c.sentences.empty() ? 0 : c.sentences[0].tokens[0].fields.size();
  const Corpus out = convert_scheme(c, to, a.tag_col ? *a.tag_col : cols - 1);
  ColumnLayout layout{cols, a.word_col, a.tag_col ? *a.tag_col : cols - 1};
  std::ostringstream os;
  write_conll(os, out, layout);
  if (a.out.empty() || a.out == "-")
    std::cout << os.str();
  else
    write_text(a.out, os.str());
}

void cmd_train(const Global& g) {
  const RunConfig r = run_config(g.load());
  const Data d = load_data(r);
  const Run run = run_training(r, d, d.target_train, r.source.has_value(), r.hp, g.verbose ? &std::cerr : nullptr);
  write_outputs(r, run);
  std::cout << report_kv(run.report);
}

struct TagArgs {
  std::string model, in, out, lang, scheme;
  std::optional<std::size_t> columns;
  std::size_t word_col = 0;
  bool greedy = false;
};

void cmd_tag(const TagArgs& a) {
  require_file("--model", a.model);
  require_file("--in", a.in);
  const Model m = load_checkpoint(a.model);
  const std::string lang = a.lang.empty() ? m.spec().languages.front() : a.lang;
  m.language_index(lang);
  const TagScheme out_scheme = a.scheme.empty() ? m.spec().scheme : parse_scheme(a.scheme);
  if (m.spec().scheme == TagScheme::IO && out_scheme != TagScheme::IO)
    throw ConfigError("model predicts IO tags; cannot emit " + to_string(out_scheme));
  const std::string text = read_file(a.in);
  ColumnLayout layout;
  layout.columns = a.columns ? *a.columns : detect_columns(text, a.word_col + 1);
  layout.word = a.word_col;
  layout.tag = std::nullopt;
  Corpus c;
  try {
    c = parse_conll(text, layout, m.spec().scheme, lang);
  } catch (const DataError& e) {
    throw DataError(a.in + ": " + e.what());
  }
  std::ostringstream os;
  for (const auto& s : c.sentences) {
    Sentence p = s;
    std::vector<std::string> labels;
    for (std::size_t t : m.predict(s, lang, a.greedy).tags) labels.push_back(m.tags().label(t));
    for (std::size_t i = 0; i < p.size(); ++i) p.tokens[i].tag = labels[i];
    if (out_scheme != m.spec().scheme) labels = encode_spans(extract_spans(p), p.size(), out_scheme);
    for (std::size_t i = 0; i < s.size(); ++i) {
      for (const auto& f : s.tokens[i].fields) os << f << ' ';
      os << labels[i] << '\n';
    }
    os << '\n';
  }
  if (a.out.empty() || a.out == "-")
    std::cout << os.str();
  else
    write_text(a.out, os.str());
}

struct EvalArgs {
  std::string gold, pred, scheme = "IOB1", pred_scheme;
  std::optional<std::size_t> gold_col, pred_col;
  std::size_t word_col = 0;
};

void cmd_eval(const EvalArgs& a) {
  const TagScheme gs = parse_scheme(a.scheme);
  const TagScheme ps = a.pred_scheme.empty() ? gs : parse_scheme(a.pred_scheme);
  const Corpus gold = read_tagged(a.gold, std::nullopt, a.gold_col, a.word_col, gs);
  Corpus pred = read_tagged(a.pred.empty() ? a.gold : a.pred, std::nullopt, a.pred_col, a.word_col, ps);
  if (ps != gs) pred = convert_scheme(pred, gs);
  const F1Report r = evaluate_f1(gold, pred);
  std::cout << format_report(r) << format_report_kv(r);
}

void cmd_sweep(const Global& g, std::vector<double> fractions) {
  const Config c = g.load();
  const RunConfig r = run_config(c);
  if (!r.source) throw ConfigError("sweep needs a source language (source.train)");
  if (fractions.empty()) fractions = c.has("sweep.fractions") ? c.real_list("sweep.fractions") : std::vector<double>{};
  if (fractions.empty()) throw ConfigError("sweep needs fractions (--fractions or sweep.fractions)");
  for (double f : fractions)
    if (!(f > 0 && f <= 1)) throw ConfigError("sweep fraction " + std::to_string(f) + " outside (0, 1]");
  const Data d = load_data(r);
  std::ostream* log = g.verbose ? &std::cerr : nullptr;
  for (double f : fractions) {
    const Corpus sub = subsample(d.target_train, f, r.hp.seed);
    for (bool joint : {false, true}) {
      const Run run = run_training(r, d, sub, joint, r.hp, log);
      std::cout << "fraction=" << detail::fmt(f, 4) << " model=" << (joint ? "joint" : "mono")
                << " target_sentences=" << sub.sentences.size() << " best_epoch=" << run.report.best_epoch
                << " dev_f1=" << detail::fmt(run.report.best_dev_f1, 4);
      if (run.report.test_f1) std::cout << " test_f1=" << detail::fmt(*run.report.test_f1, 4);
      std::cout << '\n';
    }
  }
}

void cmd_grid(const Global& g) {
  const Config c = g.load();
  const RunConfig r = run_config(c);
  HyperparamGrid grid;
  if (c.flag("grid.full", false)) grid = HyperparamGrid::full();
  if (c.has("grid.lstm_size")) grid.lstm_size.clear();
  for (auto v : c.has("grid.lstm_size") ? c.uint_list("grid.lstm_size") : std::vector<std::uint64_t>{})
    grid.lstm_size.push_back(v);
  if (c.has("grid.max_filter_width")) {
    grid.max_filter_width.clear();
    for (auto v : c.uint_list("grid.max_filter_width")) grid.max_filter_width.push_back(v);
  }
  if (c.has("grid.filters_per_width")) {
    grid.filters_per_width.clear();
    for (auto v : c.uint_list("grid.filters_per_width")) grid.filters_per_width.push_back(v);
  }
  if (c.has("grid.learning_rate")) grid.learning_rate = c.real_list("grid.learning_rate");
  const auto points = grid.points(r.hp);
  const Data d = load_data(r);
  const bool joint = r.source.has_value();
  std::ostream* log = g.verbose ? &std::cerr : nullptr;

  std::vector<TrainReport> reports;
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < points.size(); ++i) {
    TrainReport rep;
    try {
      rep = run_training(r, d, d.target_train, joint, points[i], log).report;
    } catch (const NumericError& e) {
      rep.hp = points[i];
      rep.failed = true;
      rep.failure = e.what();
    }
    std::cout << "point=" << i + 1 << " lstm_size=" << points[i].lstm_size
              << " max_filter_width=" << points[i].max_filter_width
              << " filters_per_width=" << points[i].filters_per_width
              << " learning_rate=" << detail::fmt(points[i].learning_rate, 4) << " failed=" << rep.failed
              << " best_epoch=" << rep.best_epoch << " dev_f1=" << detail::fmt(rep.best_dev_f1, 4) << '\n';
    if (!rep.failed && (!best || rep.best_dev_f1 > reports[*best].best_dev_f1)) best = i;
    reports.push_back(std::move(rep));
  }
  if (!best) throw NumericError("grid search: every grid point diverged");
  std::cout << "best_point=" << *best + 1 << '\n';
  if (!r.checkpoint.empty() || !r.report.empty() || !r.report_text.empty())
    write_outputs(r, run_training(r, d, d.target_train, joint, points[*best], nullptr));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-lingual named entity recognition"};
  app.require_subcommand(1);
  Global g;
  app.add_option("-c,--config", g.config_path, "run configuration file");
  app.add_option("--set", g.overrides, "override a setting, e.g. --set model.lstm_size=50");
  app.add_option("--seed", g.seed, "random seed (overrides the config)");
  app.add_flag("-v,--verbose", g.verbose, "log progress to stderr");

  ConvertArgs ca;
  auto* convert = app.add_subcommand("convert", "convert a CoNLL file between tag schemes");
  convert->add_option("--in", ca.in, "input CoNLL file")->required();
  convert->add_option("--out", ca.out, "output file (default stdout)");
  convert->add_option("--from", ca.from, "input scheme (IOB1, IOBES, IO)");
  convert->add_option("--to", ca.to, "output scheme");
  convert->add_option("--columns", ca.columns, "column count (default: detected)");
  convert->add_option("--word-col", ca.word_col, "word column (0-based)");
  convert->add_option("--tag-col", ca.tag_col, "tag column (default: last)");

  app.add_subcommand("train", "train a monolingual or joint model from the configuration");

  TagArgs ta;
  auto* tag = app.add_subcommand("tag", "append predicted tags to a CoNLL file");
  tag->add_option("--model", ta.model, "checkpoint")->required();
  tag->add_option("--in", ta.in, "input CoNLL file")->required();
  tag->add_option("--out", ta.out, "output file (default stdout)");
  tag->add_option("--lang", ta.lang, "language (default: the checkpoint's first)");
  tag->add_option("--scheme", ta.scheme, "scheme of the emitted tags (default: the model's)");
  tag->add_option("--columns", ta.columns, "column count (default: detected)");
  tag->add_option("--word-col", ta.word_col, "word column (0-based)");
  tag->add_flag("--greedy", ta.greedy, "greedy instead of Viterbi decoding (debugging)");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "entity-level precision, recall and F1");
  eval->add_option("--gold", ea.gold, "gold CoNLL file")->required();
  eval->add_option("--pred", ea.pred, "predicted CoNLL file (default: the gold file)");
  eval->add_option("--gold-col", ea.gold_col, "gold tag column (default: last)");
  eval->add_option("--pred-col", ea.pred_col, "predicted tag column (default: last)");
  eval->add_option("--scheme", ea.scheme, "scheme of the gold tags");
  eval->add_option("--pred-scheme", ea.pred_scheme, "scheme of the predicted tags (default: same)");

  std::vector<double> fractions;
  auto* sweep = app.add_subcommand("sweep", "mono vs joint training over target-data fractions");
  sweep->add_option("--fractions", fractions, "fractions of the target training set")->delimiter(',');

  app.add_subcommand("grid", "hyperparameter grid search");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : static_cast<int>(ExitCode::usage);
  }

  try {
    if (*convert)
      cmd_convert(ca);
    else if (app.got_subcommand("train"))
      cmd_train(g);
    else if (*tag)
      cmd_tag(ta);
    else if (*eval)
      cmd_eval(ea);
    else if (*sweep)
      cmd_sweep(g, fractions);
    else if (app.got_subcommand("grid"))
      cmd_grid(g);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::usage);
  }
  return 0;
}
