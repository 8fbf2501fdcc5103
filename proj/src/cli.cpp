#include "snmt/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "snmt/checkpoint.hpp"
#include "snmt/error.hpp"
#include "snmt/eval.hpp"
#include "snmt/pipeline.hpp"
#include "snmt/service.hpp"
#include "snmt/svg.hpp"

namespace snmt::cli {

namespace fs = std::filesystem;

namespace {

// Flag combinations CLI11 cannot express; reported like parse errors.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string format4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out.flush()) throw IoError("write failed for " + path.string());
}

void write_pairs(const fs::path& path, std::span<const SentencePair> pairs) {
  std::string text;
  for (const auto& p : pairs) text += detokenize(p.source) + '\t' + detokenize(p.target) + '\n';
  write_text(path, text);
}

Json history_json(const TrainHistory& h) {
  Json j;
  j["stop_reason"] = to_string(h.stop_reason);
  j["best_epoch"] = h.best_epoch;
  j["best_validation_loss"] = h.best_validation_loss;
  Json epochs = Json::array();
  for (const auto& e : h.epochs) {
    epochs.push_back({{"train_loss", e.train_loss},
                      {"validation_loss", e.validation_loss},
                      {"seconds", e.seconds}});
  }
  j["epochs"] = std::move(epochs);
  return j;
}

TranslationModel<float> load_model(const fs::path& path) { return load_checkpoint(path).model; }

struct TrainArgs {
  std::string corpus;
  std::string out;
  std::uint64_t seed = 7;
  Index embed_dim = ModelConfig{}.embed_dim;
  Index hidden_dim = ModelConfig{}.hidden_dim;
  std::string cell = "lstm";
  bool bidirectional = false;
  bool no_attention = false;
  Index max_decode_len = ModelConfig{}.max_decode_len;
  double learning_rate = TrainConfig{}.learning_rate;
  Index batch_size = TrainConfig{}.batch_size;
  Index epochs = TrainConfig{}.max_epochs;
  Index patience = TrainConfig{}.patience;
  double clip_norm = TrainConfig{}.clip_norm;
  std::size_t min_count = 1;
  bool split = false;
  bool quiet = false;
};

int run_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  PipelineOptions o;
  o.model.embed_dim = a.embed_dim;
  o.model.hidden_dim = a.hidden_dim;
  o.model.cell_type = parse_cell_type(a.cell);
  o.model.bidirectional_encoder = a.bidirectional;
  o.model.attention_enabled = !a.no_attention;
  o.model.max_decode_len = a.max_decode_len;
  o.train.learning_rate = a.learning_rate;
  o.train.batch_size = a.batch_size;
  o.train.max_epochs = a.epochs;
  o.train.patience = a.patience;
  o.train.clip_norm = a.clip_norm;
  o.train.seed = a.seed;
  o.min_count = a.min_count;
  o.split = a.split;

  const auto corpus = load_corpus(a.corpus);
  for (const auto& bad : corpus.rejected) {
    err << "warning: " << a.corpus << ":" << bad.line_no << ": " << bad.reason << "\n";
  }
  auto progress = [&](Index epoch, const EpochRecord& r) {
    if (a.quiet) return;
    err << "epoch " << epoch + 1 << "/" << a.epochs << " train " << format4(r.train_loss)
        << " validation " << format4(r.validation_loss) << "\n";
  };
  const auto run = train_from_corpus(corpus, o, progress);

  const fs::path dir(a.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const auto& tm = run.model;
  save_checkpoint(dir / kCheckpointFileName, tm.model, tm.source_vocab, tm.target_vocab,
                  summarize(run.history));
  write_text(dir / "source_vocab.json", tm.source_vocab.to_json());
  write_text(dir / "target_vocab.json", tm.target_vocab.to_json());
  write_text(dir / "history.json", history_json(run.history).dump(2) + "\n");
  if (a.split) {
    write_pairs(dir / "train.tsv", run.train_pairs);
    write_pairs(dir / "validation.tsv", run.validation_pairs);
    write_pairs(dir / "test.tsv", run.test_pairs);
  }

  const auto saved = load_checkpoint(dir / kCheckpointFileName);
  out << "stop_reason " << to_string(run.history.stop_reason) << "\n"
      << "epochs " << run.history.epochs.size() << "\n"
      << "best_epoch " << run.history.best_epoch + 1 << "\n"
      << "best_validation_loss " << format4(run.history.best_validation_loss) << "\n"
      << "model_id " << saved.model.id << "\n";
  return kExitOk;
}

struct TranslateArgs {
  std::string model;
  std::vector<std::string> texts;
  Index max_len = 0;  // 0: the checkpoint's max_decode_len
  std::string attn_svg;
  bool json = false;
};

void report(const TranslationResult& r, const std::string& model_id, bool json, std::ostream& out,
            std::ostream& err) {
  for (const auto& d : r.diagnostics) err << "warning: " << d << "\n";
  if (json) {
    out << translate_response(r, model_id).dump() << "\n";
  } else {
    out << r.translation << "\n";
  }
}

int run_translate(const TranslateArgs& a, std::ostream& out, std::ostream& err) {
  if (!a.attn_svg.empty() && a.texts.size() != 1) {
    throw UsageError("--attn-svg needs exactly one --text");
  }
  const auto tm = load_model(a.model);
  const Index max_len = a.max_len > 0 ? a.max_len : tm.model.config.max_decode_len;
  if (a.texts.empty()) {
    for (std::string line; std::getline(std::cin, line);) {
      if (normalize_text(line).empty()) continue;
      report(translate_text(tm, line, max_len), tm.id, a.json, out, err);
    }
    return kExitOk;
  }
  for (const auto& text : a.texts) {
    const auto r = translate_text(tm, text, max_len);
    report(r, tm.id, a.json, out, err);
    if (!a.attn_svg.empty()) {
      if (!r.attention) throw DomainError("model has no attention to plot");
      write_text(a.attn_svg, render_attention_svg(*r.attention));
    }
  }
  return kExitOk;
}

struct PlotArgs {
  std::string model;
  std::vector<std::string> texts;
  std::string input;
  std::string out;
  std::string out_dir;
  Index max_len = 0;
};

int run_attn_plot(const PlotArgs& a, std::ostream& out, std::ostream& err) {
  std::vector<std::string> sentences = a.texts;
  if (!a.input.empty()) {
    std::ifstream in(a.input, std::ios::binary);
    if (!in) throw IoError("cannot open " + a.input);
    for (std::string line; std::getline(in, line);) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      // A corpus line plots its source side.
      if (const auto tab = line.find('\t'); tab != std::string::npos) line.resize(tab);
      if (!normalize_text(line).empty()) sentences.push_back(line);
    }
  }
  if (sentences.empty()) throw UsageError("nothing to plot: give --text or --input");
  if (a.out.empty() == a.out_dir.empty()) throw UsageError("give exactly one of --out and --out-dir");
  if (!a.out.empty() && sentences.size() != 1) throw UsageError("--out takes a single sentence; use --out-dir");

  const auto tm = load_model(a.model);
  if (!tm.model.config.attention_enabled) throw DomainError("model was trained without attention");
  const Index max_len = a.max_len > 0 ? a.max_len : tm.model.config.max_decode_len;
  if (!a.out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(a.out_dir, ec);
    if (ec) throw IoError("cannot create " + a.out_dir + ": " + ec.message());
  }
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const auto r = translate_text(tm, sentences[i], max_len);
    for (const auto& d : r.diagnostics) err << "warning: " << d << "\n";
    fs::path svg;
    if (!a.out.empty()) {
      svg = a.out;
    } else {
      char name[32];
      std::snprintf(name, sizeof name, "attention_%03zu.svg", i + 1);
      svg = fs::path(a.out_dir) / name;
    }
    write_text(svg, render_attention_svg(*r.attention));
    auto data = svg;
    data.replace_extension(".json");
    write_text(data, translate_response(r, tm.id).dump(2) + "\n");
    out << svg.string() << "\t" << r.translation << "\n";
  }
  return kExitOk;
}

struct EvaluateArgs {
  std::string model;
  std::string corpus;
  std::string predictions;
  std::string human_eval;
  int threshold = 3;
  Index max_len = 0;
};

int run_evaluate(const EvaluateArgs& a, std::ostream& out, std::ostream&) {
  if (a.model.empty() != a.corpus.empty()) throw UsageError("--model and --corpus go together");
  if (a.corpus.empty() && a.human_eval.empty()) {
    throw UsageError("nothing to evaluate: give --model with --corpus, or --human-eval");
  }
  if (!a.corpus.empty()) {
    const auto tm = load_model(a.model);
    const auto corpus = load_corpus(a.corpus);
    const Index max_len = a.max_len > 0 ? a.max_len : tm.model.config.max_decode_len;
    std::vector<TokenList> hyps, refs;
    std::string predictions;
    std::size_t exact = 0;
    for (const auto& p : corpus.pairs) {
      const auto ids = tm.source_vocab.encode(p.source);
      const auto d = greedy_decode(tm.model, std::span<const TokenId>(ids), max_len);
      hyps.push_back(tm.target_vocab.decode(d.ids));
      refs.push_back(p.target);
      if (hyps.back() == p.target) ++exact;
      predictions += detokenize(hyps.back()) + "\n";
    }
    if (!a.predictions.empty()) write_text(a.predictions, predictions);
    const auto bleu = corpus_bleu(hyps, refs);
    out << "pairs " << corpus.pairs.size() << "\n"
        << "exact_match " << format4(static_cast<double>(exact) / static_cast<double>(hyps.size()))
        << "\n"
        << "corpus_bleu " << format4(bleu.score) << "\n"
        << "mean_sentence_bleu " << format4(mean_sentence_bleu(hyps, refs)) << "\n";
  }
  if (!a.human_eval.empty()) {
    const auto s = human_eval_accuracy(load_human_eval(a.human_eval), a.threshold);
    out << "human_eval_count " << s.count << "\n"
        << "human_eval_threshold " << s.threshold << "\n"
        << "human_eval_accuracy " << format4(s.accuracy) << "\n"
        << "human_eval_histogram " << s.histogram[0] << " " << s.histogram[1] << " "
        << s.histogram[2] << " " << s.histogram[3] << "\n";
  }
  return kExitOk;
}

struct BleuArgs {
  std::string candidates;
  std::string references;
  int max_n = 4;
  bool sentence = false;
  bool verbose = false;
};

int run_bleu(const BleuArgs& a, std::ostream& out, std::ostream&) {
  const auto c = load_tokenized_lines(a.candidates);
  const auto r = load_tokenized_lines(a.references);
  const auto report = corpus_bleu(c, r, a.max_n);
  out << format4(report.score) << "\n";
  if (a.sentence) out << "mean_sentence_bleu " << format4(mean_sentence_bleu(c, r, a.max_n)) << "\n";
  if (a.verbose) {
    for (std::size_t n = 0; n < report.matches.size(); ++n) {
      out << "p" << n + 1 << " " << report.matches[n].matched << "/" << report.matches[n].total << "\n";
    }
    out << "brevity_penalty " << format4(report.brevity_penalty) << "\n"
        << "candidate_length " << report.candidate_length << "\n"
        << "reference_length " << report.reference_length << "\n";
  }
  return kExitOk;
}

struct StatsArgs {
  std::string corpus;
  std::size_t min_count = 1;
};

int run_stats(const StatsArgs& a, std::ostream& out, std::ostream& err) {
  const auto corpus = load_corpus(a.corpus);
  for (const auto& bad : corpus.rejected) {
    err << "warning: " << a.corpus << ":" << bad.line_no << ": " << bad.reason << "\n";
  }
  const auto s = corpus_stats(corpus);
  std::vector<TokenList> sources, targets;
  for (const auto& p : corpus.pairs) {
    sources.push_back(p.source);
    targets.push_back(p.target);
  }
  out << "samples " << s.samples << "\n"
      << "source_tokens " << s.source_tokens << "\n"
      << "target_tokens " << s.target_tokens << "\n"
      << "rejected_lines " << corpus.rejected.size() << "\n"
      << "source_vocab " << Vocabulary::build(sources, a.min_count).size() << "\n"
      << "target_vocab " << Vocabulary::build(targets, a.min_count).size() << "\n";
  return kExitOk;
}

struct ServeArgs {
  std::string model;
  std::string host = ServerOptions{}.host;
  int port = ServerOptions{}.port;
  std::string static_dir;
};

int run_serve(const ServeArgs& a, std::ostream& out, std::ostream& err) {
  TranslationService service;
  ServerOptions o;
  o.host = a.host;
  o.port = a.port;
  if (!a.static_dir.empty()) o.static_dir = a.static_dir;
  HttpServer server(service, o);
  const int port = server.bind();
  out << "listening on http://" << a.host << ":" << port << "\n" << std::flush;

  // Requests get 503 until the checkpoint is in place.
  int status = kExitOk;
  std::thread loader([&] {
    try {
      service.install(std::make_shared<const TranslationModel<float>>(load_model(a.model)));
      err << "loaded " << service.model()->id << "\n" << std::flush;
    } catch (const std::exception& e) {
      err << "error: " << e.what() << "\n" << std::flush;
      status = kExitFailure;
      server.stop();
    }
  });
  server.run();
  loader.join();
  return status;
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sanskrit to Hindi attention seq2seq translator", "snmt"};
  app.set_config("--config", "", "TOML/INI file; keys mirror the flags, one [section] per subcommand");
  app.require_subcommand(1);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a model on a tab-separated parallel corpus");
  t->add_option("--corpus", train.corpus, "source<TAB>target file")->required()->check(CLI::ExistingFile);
  t->add_option("--out", train.out, "Run directory for model.snmt, vocabularies and history")->required();
  t->add_option("--seed", train.seed, "Seed for initialization, shuffling and splitting")->capture_default_str();
  t->add_option("--embed-dim", train.embed_dim)->capture_default_str()->check(CLI::PositiveNumber);
  t->add_option("--hidden-dim", train.hidden_dim)->capture_default_str()->check(CLI::PositiveNumber);
  t->add_option("--cell", train.cell)->capture_default_str()->check(CLI::IsMember({"lstm", "gru"}));
  t->add_flag("--bidirectional", train.bidirectional, "Bidirectional encoder");
  t->add_flag("--no-attention", train.no_attention, "Plain encoder-decoder without attention");
  t->add_option("--max-decode-len", train.max_decode_len)->capture_default_str()->check(CLI::PositiveNumber);
  t->add_option("--learning-rate", train.learning_rate)->capture_default_str()->check(CLI::PositiveNumber);
  t->add_option("--batch-size", train.batch_size)->capture_default_str()->check(CLI::PositiveNumber);
  t->add_option("--epochs", train.epochs, "Maximum epochs")->capture_default_str()->check(CLI::PositiveNumber);
  t->add_option("--patience", train.patience)->capture_default_str()->check(CLI::PositiveNumber);
  t->add_option("--clip-norm", train.clip_norm)->capture_default_str()->check(CLI::PositiveNumber);
  t->add_option("--min-count", train.min_count)->capture_default_str()->check(CLI::PositiveNumber);
  t->add_flag("--split", train.split, "Hold out 10% validation and 10% test (default: validate on the training set)");
  t->add_flag("--quiet", train.quiet, "No per-epoch progress");

  TranslateArgs translate;
  auto* tr = app.add_subcommand("translate", "Translate sentences (stdin lines when --text is absent)");
  tr->add_option("--model", translate.model, "Run directory or checkpoint file")->required()->check(CLI::ExistingPath);
  tr->add_option("--text", translate.texts, "Sentence to translate; repeatable");
  tr->add_option("--max-len", translate.max_len, "Decode limit (default: from the checkpoint)")->check(CLI::PositiveNumber);
  tr->add_option("--attn-svg", translate.attn_svg, "Write the attention heatmap here");
  tr->add_flag("--json", translate.json, "Print the full response document");

  EvaluateArgs evaluate;
  auto* ev = app.add_subcommand("evaluate", "BLEU and exact match on a corpus, and/or human-eval accuracy");
  ev->add_option("--model", evaluate.model)->check(CLI::ExistingPath);
  ev->add_option("--corpus", evaluate.corpus)->check(CLI::ExistingFile);
  ev->add_option("--predictions", evaluate.predictions, "Write detokenized hypotheses here");
  ev->add_option("--human-eval", evaluate.human_eval, "sentence_id<TAB>score[<TAB>annotator] file")->check(CLI::ExistingFile);
  ev->add_option("--threshold", evaluate.threshold, "Lowest score counted as acceptable")->capture_default_str()->check(CLI::Range(2, 4));
  ev->add_option("--max-len", evaluate.max_len)->check(CLI::PositiveNumber);

  BleuArgs bleu;
  auto* bl = app.add_subcommand("bleu", "Corpus BLEU of line-aligned candidate and reference files");
  bl->add_option("--candidates", bleu.candidates)->required()->check(CLI::ExistingFile);
  bl->add_option("--references", bleu.references)->required()->check(CLI::ExistingFile);
  bl->add_option("--max-n", bleu.max_n)->capture_default_str()->check(CLI::Range(1, 10));
  bl->add_flag("--sentence", bleu.sentence, "Also report smoothed mean sentence BLEU");
  bl->add_flag("--verbose", bleu.verbose, "Report n-gram precisions and brevity penalty");

  StatsArgs stats;
  auto* st = app.add_subcommand("stats", "Sample and token counts of a parallel corpus");
  st->add_option("--corpus", stats.corpus)->required()->check(CLI::ExistingFile);
  st->add_option("--min-count", stats.min_count)->capture_default_str()->check(CLI::PositiveNumber);

  ServeArgs serve;
  auto* sv = app.add_subcommand("serve", "HTTP JSON translation service");
  sv->add_option("--model", serve.model, "Run directory or checkpoint file")->required();
  sv->add_option("--host", serve.host)->capture_default_str();
  sv->add_option("--port", serve.port)->capture_default_str()->check(CLI::Range(0, 65535));
  sv->add_option("--static-dir", serve.static_dir, "Serve the web UI from this directory")->check(CLI::ExistingDirectory);

  PlotArgs plot;
  auto* ap = app.add_subcommand("attn-plot", "Attention heatmaps (SVG plus JSON data) for sentences");
  ap->add_option("--model", plot.model, "Run directory or checkpoint file")->required()->check(CLI::ExistingPath);
  ap->add_option("--text", plot.texts, "Sentence; repeatable");
  ap->add_option("--input", plot.input, "One sentence per line, or a corpus whose source side is plotted")->check(CLI::ExistingFile);
  ap->add_option("--out", plot.out, "SVG path for a single sentence");
  ap->add_option("--out-dir", plot.out_dir, "Directory for attention_NNN.svg/.json");
  ap->add_option("--max-len", plot.max_len)->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code == 0) return kExitOk;
    const auto parsed = app.get_subcommands();
    err << (parsed.empty() ? app.help() : parsed.front()->help());
    return kExitUsage;
  }

  try {
    if (t->parsed()) return run_train(train, out, err);
    if (tr->parsed()) return run_translate(translate, out, err);
    if (ev->parsed()) return run_evaluate(evaluate, out, err);
    if (bl->parsed()) return run_bleu(bleu, out, err);
    if (st->parsed()) return run_stats(stats, out, err);
    if (sv->parsed()) return run_serve(serve, out, err);
    if (ap->parsed()) return run_attn_plot(plot, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace snmt::cli
