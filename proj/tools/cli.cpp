#include "cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>
#include <json.hpp>

#include "gedlab/checkpoint.hpp"
#include "gedlab/errors.hpp"
#include "gedlab/evaluation.hpp"
#include "gedlab/hash.hpp"
#include "gedlab/training.hpp"

namespace gedlab::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- run manifest ---------------------------------------------------------

class Manifest {
 public:
  Manifest(std::string command, const std::vector<std::string>& args)
      : start_(std::chrono::steady_clock::now()) {
    doc_["command"] = std::move(command);
    doc_["argv"] = args;
    doc_["inputs"] = json::object();
    doc_["outputs"] = json::object();
  }

  json& operator[](const std::string& key) { return doc_[key]; }
  void input(const fs::path& p) { doc_["inputs"][p.string()] = sha256_file(p); }
  void output(const fs::path& p) { doc_["outputs"][p.string()] = sha256_file(p); }

  // Without a path the manifest goes to standard error.
  void write(const std::optional<fs::path>& path) {
    doc_["duration_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    const std::string text = doc_.dump(2) + "\n";
    if (!path) {
      std::cerr << text;
      return;
    }
    std::ofstream out(*path, std::ios::binary);
    out << text;
    if (!out) throw std::runtime_error("cannot write manifest " + path->string());
  }

 private:
  json doc_;
  std::chrono::steady_clock::time_point start_;
};

std::optional<fs::path> manifest_path(const std::string& flag, const fs::path& out) {
  if (!flag.empty()) return fs::path(flag);
  if (!out.empty()) return fs::path(out.string() + ".manifest.json");
  return std::nullopt;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

// ---- configuration --------------------------------------------------------

json config_json(const ModelConfig& m, const TrainConfig& t) {
  json j = m;
  j.update(json(t));
  return j;
}

// Defaults < --config file < flags. Flags are recorded only when given.
class ConfigFlags {
 public:
  explicit ConfigFlags(json base) : merged_(std::move(base)) {}

  void add_file_option(CLI::App* app) {
    app->add_option("--config", file_, "JSON file with ModelConfig/TrainConfig fields (a run manifest also works)");
  }

  template <class T>
  void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app->add_option(flag, *value, help);
    appliers_.push_back([this, opt, value, key] {
      if (opt->count()) overrides_[key] = *value;
    });
  }

  void add_architecture(CLI::App* app, bool with_layer_heads) {
    add<std::size_t>(app, "--layers", "n_layers", "encoder layers L");
    add<std::size_t>(app, "--hidden", "hidden", "hidden size H");
    add<std::size_t>(app, "--attn-heads", "self_attn_heads", "self-attention heads A");
    if (with_layer_heads) add<std::size_t>(app, "--heads", "layer_attn_heads", "layer-attention heads J");
    add<std::size_t>(app, "--ffn-dim", "ffn_dim", "feed-forward width");
    add<std::size_t>(app, "--key-dim", "key_dim", "layer-attention key size (0 = H/J)");
    add<std::size_t>(app, "--max-len", "max_len", "maximum sequence length in sub-tokens");
  }

  void add_training(CLI::App* app) {
    add<double>(app, "--dropout", "dropout", "dropout rate");
    add<double>(app, "--attn-dropout", "attn_dropout", "layer-attention dropout rate");
    add<std::string>(app, "--head", "head_type", "output head: final, avgl or mhmla");
    add<double>(app, "--lr", "learning_rate", "Adam learning rate");
    add<std::size_t>(app, "--batch-size", "batch_size", "sentences per batch");
    add<std::size_t>(app, "--epochs", "epochs", "training epochs");
  }

  // Applied after the config file, like a flag.
  void set(const std::string& key, json value) { overrides_[key] = std::move(value); }

  void resolve(ModelConfig& model, TrainConfig& train) {
    if (!file_.empty()) {
      std::ifstream in(file_);
      if (!in) throw ConfigError("cannot read config file " + file_);
      json doc;
      try {
        doc = json::parse(in);
      } catch (const json::exception& e) {
        throw ConfigError("config file " + file_ + ": " + e.what());
      }
      if (doc.contains("config") && doc["config"].is_object()) doc = doc["config"];
      if (!doc.is_object()) throw ConfigError("config file " + file_ + " is not a JSON object");
      for (const auto& [key, value] : doc.items()) {
        if (!merged_.contains(key)) throw ConfigError("config file " + file_ + ": unknown field '" + key + "'");
        merged_[key] = value;
      }
    }
    for (auto& apply : appliers_) apply();
    merged_.update(overrides_);
    try {
      from_json(merged_, model);
      from_json(merged_, train);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("bad configuration value: ") + e.what());
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }

 private:
  json merged_;
  json overrides_ = json::object();
  std::string file_;
  std::vector<std::function<void()>> appliers_;
};

json desk_defaults() {
  json j = config_json(ModelConfig{}, TrainConfig::desk());
  j["key_dim"] = 0;
  return j;
}

// ---- shared helpers ---------------------------------------------------------

std::size_t count_truncated(const std::vector<TokenizedSentence>& sentences) {
  std::size_t n = 0;
  for (const auto& s : sentences) n += s.truncated;
  return n;
}

std::vector<TokenizedSentence> tokenize_checked(const LabeledCorpus& corpus, const SubwordVocab& vocab,
                                                const ModelConfig& config, const fs::path& source) {
  auto sentences = tokenize_corpus(corpus, vocab, config.max_len - 2);
  if (const std::size_t truncated = count_truncated(sentences)) {
    std::cerr << "warning: " << truncated << " of " << sentences.size() << " sentences in "
              << source.string() << " truncated to " << config.max_len - 2 << " sub-tokens\n";
  }
  return sentences;
}

struct TrainedRun {
  Model model;
  std::vector<double> epoch_losses;
  std::optional<EvalReport> dev_report;
};

TrainedRun train_and_score(const std::vector<TokenizedSentence>& train_set,
                           const std::vector<TokenizedSentence>* dev_set, const ModelConfig& model_config,
                           const TrainConfig& train_config, const std::string& tag) {
  TrainResult result = train(train_set, model_config, train_config, [&](const EpochStats& s, Model& m) {
    std::cerr << tag << "epoch " << s.epoch << "/" << train_config.epochs << " loss " << s.mean_loss;
    if (dev_set) std::cerr << " dev " << format_percent(evaluate(m, *dev_set));
    std::cerr << '\n';
  });
  // Score the weights exactly as they will be stored.
  result.model.round_to_float32();
  TrainedRun run{std::move(result.model), std::move(result.epoch_losses), std::nullopt};
  if (dev_set) run.dev_report = evaluate(run.model, *dev_set, train_config.seed);
  return run;
}

// Full-model check used by the gradcheck command: matrices drawn wider than
// the training init so attention gradients stay well above roundoff.
GradCheckReport model_gradcheck(const ModelConfig& config, std::uint64_t seed, double eps, double tol) {
  Model model(config, seed);
  Rng rng(seed + 1);
  for (auto& p : model.parameters()) {
    if (p.tensor->shape.size() != 2) continue;
    for (double& v : p.tensor->data) v = rng.normal(0.0, 0.3);
  }
  std::vector<TokenizedSentence> sentences;
  for (std::size_t len : {5u, 3u}) {
    TokenizedSentence s;
    for (std::size_t k = 0; k < len && k + 2 < config.max_len; ++k) {
      const std::size_t id = SubwordVocab::kReserved + rng.below(config.vocab_size - SubwordVocab::kReserved);
      s.words.push_back("w" + std::to_string(id));
      s.labels.push_back(rng.bernoulli(0.5) ? Label::incorrect : Label::correct);
      s.first_sub_index.push_back(s.sub_tokens.size());
      s.sub_tokens.push_back(id);
    }
    sentences.push_back(std::move(s));
  }
  const std::vector<const TokenizedSentence*> members{&sentences[0], &sentences[1]};
  const Batch batch = make_batch(members);
  auto loss = [&](Graph& g) { return cross_entropy(model.forward(g, batch, {}).probs, batch.targets); };
  return finite_diff_check(loss, model.parameters(), eps, tol);
}

// ---- subcommands --------------------------------------------------------------

struct Common {
  std::vector<std::string> args;
  std::string manifest;
};

int run_gen(const Common& common, std::size_t n, std::uint64_t seed, double error_rate, const fs::path& out) {
  Manifest manifest("gen", common.args);
  write_pairs(generate_synthetic_pairs(n, seed, error_rate), out);
  manifest["config"] = {{"n", n}, {"error_rate", error_rate}};
  manifest["seed"] = seed;
  manifest.output(out);
  manifest.write(manifest_path(common.manifest, out));
  return kOk;
}

int run_label(const Common& common, const std::vector<std::string>& pair_files, const fs::path& out) {
  Manifest manifest("label", common.args);
  std::vector<std::vector<SentencePair>> annotators;
  for (const auto& f : pair_files) {
    annotators.push_back(read_pairs(f));
    manifest.input(f);
  }
  const LabeledCorpus corpus = label_pairs(annotators);
  write_corpus(corpus, out);
  std::size_t errors = 0, tokens = 0;
  for (const auto& s : corpus.sentences) {
    tokens += s.labels.size();
    for (Label l : s.labels) errors += l == Label::incorrect;
  }
  manifest["config"] = {{"annotators", pair_files.size()}};
  manifest["seed"] = nullptr;
  manifest["stats"] = {{"sentences", corpus.sentences.size()}, {"tokens", tokens}, {"error_tokens", errors}};
  manifest.output(out);
  manifest.write(manifest_path(common.manifest, out));
  return kOk;
}

int run_train(const Common& common, ConfigFlags& flags, const fs::path& train_path, const std::string& dev_flag,
              const fs::path& out, std::size_t min_count) {
  Manifest manifest("train", common.args);
  ModelConfig model_config;
  TrainConfig train_config = TrainConfig::desk();
  flags.resolve(model_config, train_config);

  const LabeledCorpus train_corpus = read_corpus(train_path);
  manifest.input(train_path);
  const SubwordVocab vocab = SubwordVocab::build(train_corpus, min_count);
  model_config.vocab_size = vocab.size();
  model_config.validate();
  train_config.validate();

  const auto train_set = tokenize_checked(train_corpus, vocab, model_config, train_path);
  std::optional<std::vector<TokenizedSentence>> dev_set;
  if (!dev_flag.empty()) {
    dev_set = tokenize_checked(read_corpus(dev_flag), vocab, model_config, dev_flag);
    manifest.input(dev_flag);
  }

  TrainedRun run = train_and_score(train_set, dev_set ? &*dev_set : nullptr, model_config, train_config, "");
  save_checkpoint(run.model, vocab, out);

  manifest["config"] = config_json(model_config, train_config);
  manifest["seed"] = train_config.seed;
  manifest["epoch_losses"] = run.epoch_losses;
  manifest["truncated_sentences"] = count_truncated(train_set);
  if (run.dev_report) {
    manifest["dev_report"] = *run.dev_report;
    std::cerr << "dev " << format_percent(*run.dev_report) << '\n';
  }
  manifest.output(out);
  manifest.write(manifest_path(common.manifest, out));
  return kOk;
}

int run_eval(const Common& common, const fs::path& model_path, const fs::path& data_path, const std::string& out,
             std::uint64_t seed) {
  Manifest manifest("eval", common.args);
  Checkpoint ckpt = load_checkpoint(model_path);
  manifest.input(model_path);
  const auto sentences = tokenize_checked(read_corpus(data_path), ckpt.vocab, ckpt.model.config(), data_path);
  manifest.input(data_path);
  const EvalReport report = evaluate(ckpt.model, sentences, seed);
  const std::string text = json(report).dump(2) + "\n";
  std::cerr << format_percent(report) << '\n';
  if (out.empty()) {
    std::cout << text;
  } else {
    write_text(out, text);
    manifest.output(out);
  }
  manifest["config"] = ckpt.model.config();
  manifest["seed"] = seed;
  manifest["report"] = report;
  manifest.write(manifest_path(common.manifest, out));
  return kOk;
}

int run_attn(const Common& common, const fs::path& model_path, const fs::path& data_path, const std::string& out) {
  Manifest manifest("attn", common.args);
  Checkpoint ckpt = load_checkpoint(model_path);
  manifest.input(model_path);
  const auto sentences = tokenize_checked(read_corpus(data_path), ckpt.vocab, ckpt.model.config(), data_path);
  manifest.input(data_path);
  const std::string csv = attention_summary_csv(attention_summary(ckpt.model, sentences));
  if (out.empty()) {
    std::cout << csv;
  } else {
    write_text(out, csv);
    manifest.output(out);
  }
  manifest["config"] = ckpt.model.config();
  manifest["seed"] = nullptr;
  manifest.write(manifest_path(common.manifest, out));
  return kOk;
}

int run_gradcheck(const Common& common, ConfigFlags& flags, std::size_t vocab, std::uint64_t seed, double eps,
                  double tol) {
  Manifest manifest("gradcheck", common.args);
  ModelConfig config;
  TrainConfig unused;
  flags.resolve(config, unused);
  config.vocab_size = vocab;
  config.dropout = 0.0;
  config.attn_dropout = 0.0;
  config.validate();
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw ConfigError("--eps must lie in [1e-7, 1e-3]");
  const GradCheckReport r = model_gradcheck(config, seed, eps, tol);
  const json result = {{"passed", r.passed},
                       {"max_rel_error", r.max_rel_error},
                       {"worst_param", r.worst_param},
                       {"worst_index", r.worst_index},
                       {"worst_analytic", r.worst_analytic},
                       {"worst_numeric", r.worst_numeric},
                       {"entries_checked", r.entries_checked},
                       {"eps", eps},
                       {"tol", tol}};
  std::cout << result.dump(2) << '\n';
  manifest["config"] = config;
  manifest["seed"] = seed;
  manifest["result"] = result;
  manifest.write(manifest_path(common.manifest, {}));
  if (!r.passed) {
    std::cerr << "gradcheck failed: relative error " << r.max_rel_error << " in " << r.worst_param << "["
              << r.worst_index << "]\n";
    return kDataError;
  }
  return kOk;
}

int run_sweep(const Common& common, ConfigFlags& flags, const std::vector<std::size_t>& heads,
              const fs::path& train_path, const fs::path& dev_path, const fs::path& out_dir, std::size_t min_count) {
  Manifest manifest("sweep", common.args);
  ModelConfig base;
  TrainConfig train_config = TrainConfig::desk();
  flags.resolve(base, train_config);
  if (base.head_type != HeadType::mhmla) throw ConfigError("sweep varies the mhmla head; --head must be mhmla");
  train_config.validate();

  const LabeledCorpus train_corpus = read_corpus(train_path);
  const LabeledCorpus dev_corpus = read_corpus(dev_path);
  manifest.input(train_path);
  manifest.input(dev_path);
  const SubwordVocab vocab = SubwordVocab::build(train_corpus, min_count);
  base.vocab_size = vocab.size();
  const auto train_set = tokenize_checked(train_corpus, vocab, base, train_path);
  const auto dev_set = tokenize_checked(dev_corpus, vocab, base, dev_path);

  fs::create_directories(out_dir);
  json reports = json::object(), skipped = json::array();
  for (std::size_t j : heads) {
    if (j == 0 || base.hidden % j != 0) {
      std::cerr << "warning: skipping J=" << j << ": hidden size " << base.hidden << " is not divisible by it\n";
      skipped.push_back(j);
      continue;
    }
    ModelConfig config = base;
    config.layer_attn_heads = j;
    config.validate();
    TrainedRun run = train_and_score(train_set, &dev_set, config, train_config, "[J=" + std::to_string(j) + "] ");
    const fs::path report_path = out_dir / ("report_J" + std::to_string(j) + ".json");
    write_text(report_path, json(*run.dev_report).dump(2) + "\n");
    manifest.output(report_path);
    reports[std::to_string(j)] = *run.dev_report;
    std::cout << "J=" << j << ' ' << format_percent(*run.dev_report) << '\n';
  }
  manifest["config"] = config_json(base, train_config);
  manifest["seed"] = train_config.seed;
  manifest["heads"] = heads;
  manifest["skipped"] = skipped;
  manifest["reports"] = reports;
  manifest.write(common.manifest.empty() ? out_dir / "manifest.json" : fs::path(common.manifest));
  return kOk;
}

}  // namespace

int dispatch(int argc, const char* const* argv) {
  std::vector<std::string> args(argv, argv + argc);
  Common common{std::vector<std::string>(args.begin() + (argc > 0), args.end()), {}};

  CLI::App app{"Grammatical error detection lab: multi-head multi-layer attention over a small encoder"};
  app.name(argc > 0 ? fs::path(argv[0]).filename().string() : "gedlab");
  app.require_subcommand(1, 1);

  auto add_manifest = [&](CLI::App* sub) {
    sub->add_option("--manifest", common.manifest, "run manifest path (default: <out>.manifest.json)");
  };

  // gen
  std::size_t gen_n = 0;
  std::uint64_t gen_seed = 0;
  double gen_rate = 0.5;
  std::string gen_out;
  CLI::App* gen = app.add_subcommand("gen", "generate synthetic (source, corrected) sentence pairs");
  gen->add_option("--n", gen_n, "number of pairs")->required()->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "generator seed")->required();
  gen->add_option("--error-rate", gen_rate, "probability a sentence is corrupted")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 1.0));
  gen->add_option("--out", gen_out, "pair file to write")->required();
  add_manifest(gen);

  // label
  std::vector<std::string> label_pairs_files;
  std::string label_out;
  CLI::App* label = app.add_subcommand("label", "label pair files by alignment; several files are union-merged");
  label->add_option("--pairs", label_pairs_files, "one pair file per annotator")->required()->expected(1, -1);
  label->add_option("--out", label_out, "labeled corpus to write")->required();
  add_manifest(label);

  // train
  ConfigFlags train_flags(desk_defaults());
  std::string train_data, train_dev, train_out;
  std::uint64_t train_seed = 0;
  std::size_t train_min_count = 2;
  CLI::App* train_cmd = app.add_subcommand("train", "train a detector and save a checkpoint");
  train_cmd->add_option("--train", train_data, "labeled training corpus")->required();
  train_cmd->add_option("--dev", train_dev, "labeled dev corpus scored after training");
  train_cmd->add_option("--out", train_out, "checkpoint to write")->required();
  train_cmd->add_option("--seed", train_seed, "initialization and shuffling seed")->required();
  train_cmd->add_option("--min-count", train_min_count, "minimum word count for a whole-word piece")
      ->capture_default_str();
  train_flags.add_file_option(train_cmd);
  train_flags.add_architecture(train_cmd, true);
  train_flags.add_training(train_cmd);
  add_manifest(train_cmd);

  // eval
  std::string eval_model, eval_data, eval_out;
  std::uint64_t eval_seed = 0;
  CLI::App* eval = app.add_subcommand("eval", "score a checkpoint on a labeled corpus");
  eval->add_option("--model", eval_model, "checkpoint")->required();
  eval->add_option("--data", eval_data, "labeled corpus")->required();
  eval->add_option("--out", eval_out, "report file (default: standard output)");
  eval->add_option("--seed", eval_seed, "seed recorded in the report");
  add_manifest(eval);

  // attn
  std::string attn_model, attn_data, attn_out;
  CLI::App* attn = app.add_subcommand("attn", "export mean layer-attention weights per head as CSV");
  attn->add_option("--model", attn_model, "mhmla checkpoint")->required();
  attn->add_option("--data", attn_data, "labeled corpus")->required();
  attn->add_option("--out", attn_out, "CSV file (default: standard output)");
  add_manifest(attn);

  // gradcheck
  json gradcheck_base = desk_defaults();
  gradcheck_base.update(json{{"n_layers", 2}, {"hidden", 8}, {"self_attn_heads", 2}, {"layer_attn_heads", 2},
                             {"ffn_dim", 16}, {"max_len", 16}});
  ConfigFlags gradcheck_flags(gradcheck_base);
  std::size_t gc_vocab = 20;
  std::uint64_t gc_seed = 21;
  double gc_eps = 1e-5, gc_tol = 1e-4;
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every model gradient");
  gradcheck_flags.add_architecture(gradcheck, true);
  gradcheck_flags.add<std::string>(gradcheck, "--head", "head_type", "output head: final, avgl or mhmla");
  gradcheck->add_option("--vocab", gc_vocab, "vocabulary size")->capture_default_str();
  gradcheck->add_option("--seed", gc_seed, "parameter seed")->capture_default_str();
  gradcheck->add_option("--eps", gc_eps, "finite-difference step")->capture_default_str();
  gradcheck->add_option("--tol", gc_tol, "maximum relative error")->capture_default_str();
  add_manifest(gradcheck);

  // sweep
  ConfigFlags sweep_flags(desk_defaults());
  std::vector<std::size_t> sweep_heads;
  std::string sweep_train, sweep_dev, sweep_out;
  std::uint64_t sweep_seed = 0;
  std::size_t sweep_min_count = 2;
  CLI::App* sweep = app.add_subcommand("sweep", "train one mhmla model per layer-attention head count J");
  sweep->add_option("--heads", sweep_heads, "comma-separated J values")->required()->delimiter(',');
  sweep->add_option("--train", sweep_train, "labeled training corpus")->required();
  sweep->add_option("--dev", sweep_dev, "labeled dev corpus")->required();
  sweep->add_option("--out-dir", sweep_out, "directory for per-J reports")->required();
  sweep->add_option("--seed", sweep_seed, "initialization and shuffling seed")->required();
  sweep->add_option("--min-count", sweep_min_count, "minimum word count for a whole-word piece")
      ->capture_default_str();
  sweep_flags.add_file_option(sweep);
  sweep_flags.add_architecture(sweep, false);
  sweep_flags.add_training(sweep);
  add_manifest(sweep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const auto parsed = app.get_subcommands();
    std::cerr << (parsed.empty() ? app.help() : parsed.front()->help());
    return kUsage;
  }

  try {
    if (gen->parsed()) return run_gen(common, gen_n, gen_seed, gen_rate, gen_out);
    if (label->parsed()) return run_label(common, label_pairs_files, label_out);
    if (train_cmd->parsed()) {
      train_flags.set("seed", train_seed);
      return run_train(common, train_flags, train_data, train_dev, train_out, train_min_count);
    }
    if (eval->parsed()) return run_eval(common, eval_model, eval_data, eval_out, eval_seed);
    if (attn->parsed()) return run_attn(common, attn_model, attn_data, attn_out);
    if (gradcheck->parsed()) return run_gradcheck(common, gradcheck_flags, gc_vocab, gc_seed, gc_eps, gc_tol);
    if (sweep->parsed()) {
      sweep_flags.set("seed", sweep_seed);
      return run_sweep(common, sweep_flags, sweep_heads, sweep_train, sweep_dev, sweep_out, sweep_min_count);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDataError;
  }
  return kUsage;
}

int dispatch(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("gedlab");
  for (const auto& a : args) argv.push_back(a.c_str());
  return dispatch(static_cast<int>(argv.size()), argv.data());
}

}  // namespace gedlab::cli
