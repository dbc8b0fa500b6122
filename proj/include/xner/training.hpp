#ifndef XNER_TRAINING_HPP_
#define XNER_TRAINING_HPP_

// Per-sentence SGD with gradient clipping, dev-F1 early stopping, grid
// search, and training reports.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "xner/corpus.hpp"
#include "xner/model.hpp"

namespace xner {

/// Hyperparameter axes swept by grid search.
struct HyperparamGrid {
  std::vector<std::size_t> lstm_size;
  std::vector<std::size_t> max_filter_width;
  std::vector<std::size_t> filters_per_width;
  std::vector<double> learning_rate;

  /// H ∈ {100..300 step 50}, k ∈ {4..9}, filters per width ∈ {10..30 step 5},
  /// lr ∈ {0.05..0.50 step 0.05}.
  static HyperparamGrid full() {
    HyperparamGrid g;
    for (std::size_t h = 100; h <= 300; h += 50) g.lstm_size.push_back(h);
    for (std::size_t k = 4; k <= 9; ++k) g.max_filter_width.push_back(k);
    for (std::size_t f = 10; f <= 30; f += 5) g.filters_per_width.push_back(f);
    for (int i = 1; i <= 10; ++i) g.learning_rate.push_back(0.05 * i);
    return g;
  }

  /// Cartesian product over `base`, lr varying fastest.
  std::vector<Hyperparams> points(const Hyperparams& base) const {
    auto or_base = [](const auto& axis, auto v) { return axis.empty() ? std::vector{v} : axis; };
    std::vector<Hyperparams> out;
    for (auto h : or_base(lstm_size, base.lstm_size))
      for (auto k : or_base(max_filter_width, base.max_filter_width))
        for (auto f : or_base(filters_per_width, base.filters_per_width))
          for (auto lr : or_base(learning_rate, base.learning_rate)) {
            Hyperparams p = base;
            p.lstm_size = h;
            p.max_filter_width = k;
            p.filters_per_width = f;
            p.learning_rate = lr;
            out.push_back(p);
          }
    return out;
  }
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_nll = 0;  // summed over the epoch's sentences
  double dev_f1 = 0;
  double seconds = 0;
};

struct TrainReport {
  Hyperparams hp;
  SharingConfig sharing;
  std::vector<std::string> languages;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 1-based; 0 if no epoch ran
  double best_dev_f1 = 0;
  std::optional<double> test_f1;
  bool failed = false;
  std::string failure;
};

struct TrainOptions {
  /// Called after every parameter update with the sentence just used.
  std::function<void(const Model&, const JointSentence&)> on_step;
  /// Progress lines (with wall-clock times) go here when set.
  std::ostream* log = nullptr;
  const JointCorpus* test = nullptr;
};

/// SGD update of everything the tape touched: clip the joint L2 norm of the
/// touched gradients to `clip`, step, and zero those gradients.
inline void sgd_step(const ad::Tape& tape, double lr, double clip) {
  double sq = 0;
  for (const auto& t : tape.touched()) {
    if (t.row < 0)
      for (ad::Real g : t.param->grad.values()) sq += static_cast<double>(g) * g;
    else
      for (ad::Real g : t.param->grad.row(static_cast<std::size_t>(t.row))) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  const double factor = (clip > 0 && norm > clip) ? clip / norm : 1.0;
  const auto step = static_cast<ad::Real>(lr * factor);
  auto apply = [step](std::span<ad::Real> v, std::span<ad::Real> g) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] -= step * g[i];
      g[i] = 0;
    }
  };
  for (const auto& t : tape.touched()) {
    if (t.row < 0)
      apply(t.param->value.values(), t.param->grad.values());
    else
      apply(t.param->value.row(static_cast<std::size_t>(t.row)), t.param->grad.row(static_cast<std::size_t>(t.row)));
  }
}

/// Entity-level F1 of the model's Viterbi output on a corpus.
inline F1Report evaluate(const Model& model, const JointCorpus& data) {
  std::vector<std::vector<EntitySpan>> gold, pred;
  std::size_t tokens = 0;
  for (const auto& js : data.sentences) {
    gold.push_back(extract_spans(js.sentence));
    Sentence p = js.sentence;
    const auto labels = model.predict_labels(js.sentence, js.language);
    for (std::size_t i = 0; i < p.size(); ++i) p.tokens[i].tag = labels[i];
    pred.push_back(extract_spans(p));
    tokens += p.size();
  }
  F1Report r = score_spans(gold, pred);
  r.tokens = tokens;
  return r;
}

inline double token_accuracy(const Model& model, const JointCorpus& data) {
  std::size_t correct = 0, total = 0;
  for (const auto& js : data.sentences) {
    const auto labels = model.predict_labels(js.sentence, js.language);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      correct += labels[i] == js.sentence.tokens[i].tag;
      ++total;
    }
  }
  return total ? static_cast<double>(correct) / static_cast<double>(total) : 1.0;
}

/// Trains in place and leaves the model at its best-dev epoch. Throws
/// NumericError if the loss becomes non-finite.
inline TrainReport train(Model& model, const JointCorpus& train_set, const JointCorpus& dev, const Hyperparams& hp,
                         const TrainOptions& opts = {}) {
  using Clock = std::chrono::steady_clock;
  TrainReport report;
  report.hp = hp;
  report.sharing = model.spec().sharing;
  report.languages = model.spec().languages;
  if (train_set.scheme != model.spec().scheme && !train_set.empty())
    throw ConfigError("train: corpus scheme " + to_string(train_set.scheme) + " differs from model scheme " +
                      to_string(model.spec().scheme));

  const auto& params = model.params();
  std::vector<ad::Tensor> best;
  auto snapshot = [&] {
    best.clear();
    for (const auto* p : params) best.push_back(p->value);
  };
  snapshot();
  for (auto* p : params) p->zero_grad();

  Rng rng = substream(hp.seed, "shuffle");
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t since_best = 0;
  bool have_best = false;

  for (std::size_t epoch = 1; epoch <= hp.max_epochs; ++epoch) {
    const auto t0 = Clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0;
    for (std::size_t k = 0; k < order.size(); ++k) {
      const JointSentence& js = train_set.sentences[order[k]];
      ad::Tape tape;
      const ad::Var loss = model.nll(tape, js.sentence, js.language);
      const double l = loss.value()[0];
      if (!std::isfinite(l))
        throw NumericError("training diverged: non-finite loss at epoch " + std::to_string(epoch) + ", sentence " +
                           std::to_string(k + 1) + " (corpus index " + std::to_string(order[k]) + ")");
      total += l;
      tape.backward(loss);
      sgd_step(tape, hp.learning_rate, hp.clip_norm);
      if (opts.on_step) opts.on_step(model, js);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_nll = total;
    rec.dev_f1 = evaluate(model, dev).overall.f1;
    rec.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    report.epochs.push_back(rec);
    if (opts.log)
      *opts.log << "epoch " << epoch << " nll " << rec.train_nll << " dev_f1 " << rec.dev_f1 << " (" << rec.seconds
                << " s)\n";
    if (!have_best || rec.dev_f1 > report.best_dev_f1) {
      have_best = true;
      report.best_dev_f1 = rec.dev_f1;
      report.best_epoch = epoch;
      snapshot();
      since_best = 0;
    } else if (++since_best >= hp.patience) {
      break;
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best[i];
  if (opts.test) report.test_f1 = evaluate(model, *opts.test).overall.f1;
  return report;
}

namespace detail {
inline std::string fmt(double v, int prec) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}
inline std::string join(const std::vector<std::string>& v, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += v[i];
  }
  return out;
}
}  // namespace detail

/// key=value lines: configuration first, then one line per epoch, then the
/// summary. Wall-clock times are left out so reports are reproducible.
inline std::string report_kv(const TrainReport& r) {
  std::ostringstream os;
  os << "languages=" << detail::join(r.languages, ",") << '\n'
     << "lstm_size=" << r.hp.lstm_size << '\n'
     << "max_filter_width=" << r.hp.max_filter_width << '\n'
     << "filters_per_width=" << r.hp.filters_per_width << '\n'
     << "learning_rate=" << detail::fmt(r.hp.learning_rate, 4) << '\n'
     << "max_epochs=" << r.hp.max_epochs << '\n'
     << "patience=" << r.hp.patience << '\n'
     << "seed=" << r.hp.seed << '\n'
     << "share_filters=" << r.sharing.share_filters << '\n'
     << "share_decoder=" << r.sharing.share_decoder << '\n'
     << "share_lstm=" << r.sharing.share_lstm << '\n'
     << "shared_embedding_space=" << r.sharing.shared_embedding_space << '\n';
  for (const auto& e : r.epochs)
    os << "epoch=" << e.epoch << " nll=" << detail::fmt(e.train_nll, 6) << " dev_f1=" << detail::fmt(e.dev_f1, 4)
       << '\n';
  os << "best_epoch=" << r.best_epoch << '\n' << "best_dev_f1=" << detail::fmt(r.best_dev_f1, 4) << '\n';
  if (r.test_f1) os << "test_f1=" << detail::fmt(*r.test_f1, 4) << '\n';
  if (r.failed) os << "failed=1\nfailure=" << r.failure << '\n';
  return os.str();
}

inline std::string report_text(const TrainReport& r) {
  std::ostringstream os;
  os << "Training report (" << detail::join(r.languages, " + ") << ")\n"
     << "  LSTM size " << r.hp.lstm_size << ", filter widths 1.." << r.hp.max_filter_width << " x "
     << r.hp.filters_per_width << ", learning rate " << detail::fmt(r.hp.learning_rate, 4) << ", seed " << r.hp.seed
     << '\n'
     << "  sharing: filters=" << (r.sharing.share_filters ? "yes" : "no")
     << " decoder=" << (r.sharing.share_decoder ? "yes" : "no") << " lstm=" << (r.sharing.share_lstm ? "yes" : "no")
     << " embedding-space=" << (r.sharing.shared_embedding_space ? "yes" : "no") << '\n';
  os << "  epoch        nll   dev F1\n";
  for (const auto& e : r.epochs)
    os << "  " << std::setw(5) << e.epoch << ' ' << std::setw(10) << detail::fmt(e.train_nll, 3) << ' '
       << std::setw(8) << detail::fmt(e.dev_f1, 2) << (e.epoch == r.best_epoch ? "  *" : "") << '\n';
  if (r.failed) os << "  FAILED: " << r.failure << '\n';
  os << "  best epoch " << r.best_epoch << ", dev F1 " << detail::fmt(r.best_dev_f1, 2) << '\n';
  if (r.test_f1) os << "  test F1 " << detail::fmt(*r.test_f1, 2) << '\n';
  return os.str();
}

struct GridResult {
  Hyperparams best;
  std::size_t best_index = 0;
  std::vector<TrainReport> reports;
};

/// Trains one model per grid point (built by `make_model`) and picks the
/// highest best-dev F1; earlier points win ties. Diverged points are kept in
/// the reports, marked failed.
inline GridResult grid_search(const std::vector<Hyperparams>& points,
                              const std::function<Model(const Hyperparams&)>& make_model, const JointCorpus& train_set,
                              const JointCorpus& dev, const TrainOptions& opts = {}) {
  if (points.empty()) throw ConfigError("grid search: empty grid");
  GridResult res;
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < points.size(); ++i) {
    TrainReport r;
    try {
      Model m = make_model(points[i]);
      r = train(m, train_set, dev, points[i], opts);
    } catch (const NumericError& e) {
      r = TrainReport{};
      r.hp = points[i];
      r.failed = true;
      r.failure = e.what();
    }
    if (!r.failed && (!best || r.best_dev_f1 > res.reports[*best].best_dev_f1)) best = i;
    res.reports.push_back(std::move(r));
  }
  if (!best) throw NumericError("grid search: every grid point diverged");
  res.best_index = *best;
  res.best = points[*best];
  return res;
}

}  // namespace xner

#endif  // XNER_TRAINING_HPP_
