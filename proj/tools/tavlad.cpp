// SPDX-License-Identifier: Apache-2.0
//
// tavlad: command-line driver for the TA-VLAD pipeline.
//
//   gen-synth   write a synthetic dataset tree
//   codebook    k-means codebook from a manifest
//   train       one training stage
//   eval        accuracy and confusion counts
//   encode      video descriptor as raw little-endian f64
//   attention   per-frame attention maps as PGM images
//   gradcheck   full-pipeline finite-difference check

#include <chrono>
#include <cstdio>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "tavlad/tavlad.hpp"

namespace fs = std::filesystem;
using namespace tavlad;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
};

// Resolved configuration, echoed before a subcommand runs.
class ConfigEcho {
 public:
  explicit ConfigEcho(std::string command) : command_(std::move(command)) {}

  template <typename T>
  ConfigEcho& add(const std::string& key, const T& value) {
    std::ostringstream v;
    v << std::setprecision(17) << value;
    lines_.push_back(key + " = " + v.str());
    return *this;
  }

  void print() const {
    std::cout << "[" << command_ << "] resolved config\n";
    for (const auto& l : lines_) std::cout << "  " << l << "\n";
    std::cout.flush();
  }

 private:
  std::string command_;
  std::vector<std::string> lines_;
};

std::string yes_no(bool b) { return b ? "yes" : "no"; }

void require_same_header(const DatasetManifest& a, const DatasetManifest& b, const fs::path& pb) {
  if (a.num_classes != b.num_classes || a.channels != b.channels || a.grid_rows != b.grid_rows ||
      a.grid_cols != b.grid_cols)
    throw ContractError(detail::concat(pb.string(), ": header (", b.num_classes, " classes, ",
                                       b.channels, " channels, grid ", b.grid_rows, "x", b.grid_cols,
                                       ") does not match the training manifest (", a.num_classes,
                                       " classes, ", a.channels, " channels, grid ", a.grid_rows,
                                       "x", a.grid_cols, ")"));
}

void require_model_matches(const ModelParams& p, const DatasetManifest& m, const fs::path& mp) {
  if (p.channels() != m.channels)
    throw ContractError(detail::concat(mp.string(), ": manifest has ", m.channels,
                                       " channels, model expects ", p.channels()));
  if (p.num_classes() != m.num_classes)
    throw ContractError(detail::concat(mp.string(), ": manifest has ", m.num_classes,
                                       " classes, model predicts ", p.num_classes()));
}

FeatureVolume load_video(const fs::path& path, std::size_t sample_frames) {
  FeatureVolume v = read_features(path);
  if (sample_frames == 0) return v;
  return v.select_frames(uniform_sample(v.frames(), sample_frames));
}

// gen-synth -----------------------------------------------------------------

struct GenSynthOptions {
  SyntheticSpec spec;
  fs::path out;
};

void add_gen_synth(CLI::App& app, GenSynthOptions& o) {
  auto* c = app.add_subcommand("gen-synth", "Generate a synthetic order-sensitive action dataset");
  c->add_option("--out", o.out, "Output directory")->required();
  c->add_option("--classes", o.spec.num_classes, "Number of classes");
  c->add_option("--videos-per-class", o.spec.videos_per_class, "Videos per class");
  c->add_option("--frames", o.spec.frames, "Frames per video (T_total)");
  c->add_option("--grid-rows", o.spec.grid_rows, "Spatial grid rows");
  c->add_option("--grid-cols", o.spec.grid_cols, "Spatial grid columns");
  c->add_option("--channels", o.spec.channels, "Feature channels P");
  c->add_option("--segments", o.spec.segments, "Prototypes visited per video");
  c->add_option("--prototypes", o.spec.prototypes, "Prototype count (0: as many as needed)");
  c->add_option("--noise", o.spec.noise, "Gaussian noise sigma");
  c->add_option("--signal-cells", o.spec.signal_cells, "Signal cells per frame");
  c->add_flag("!--no-reversed-pairs", o.spec.reversed_pairs,
              "Give every class its own prototypes instead of order-reversed pairs");
  c->add_flag("--clamp", o.spec.clamp_nonnegative, "Clamp features at zero (post-activation)");
  c->add_option("--attention-scale", o.spec.attention_scale, "Scale of the attention weight rows");
  c->add_option("--sample-frames", o.spec.sample_frames, "Frames sampled per video (T_s) in manifests");
  c->add_option("--train-fraction", o.spec.train_fraction, "Fraction of each class for training");
  c->add_option("--val-fraction", o.spec.val_fraction, "Fraction of each class for validation");
}

int run_gen_synth(GenSynthOptions o, const Globals& g) {
  o.spec.seed = g.seed;
  const auto& s = o.spec;
  ConfigEcho("gen-synth")
      .add("out", o.out.string())
      .add("seed", s.seed)
      .add("classes", s.num_classes)
      .add("videos_per_class", s.videos_per_class)
      .add("frames", s.frames)
      .add("grid", std::to_string(s.grid_rows) + "x" + std::to_string(s.grid_cols))
      .add("channels", s.channels)
      .add("segments", s.segments)
      .add("prototypes", s.prototype_count())
      .add("noise", s.noise)
      .add("signal_cells", s.signal_cells)
      .add("reversed_pairs", yes_no(s.reversed_pairs))
      .add("clamp", yes_no(s.clamp_nonnegative))
      .add("attention_scale", s.attention_scale)
      .add("sample_frames", s.sample_frames)
      .print();
  const auto files = write_synthetic(generate_synthetic(s), o.out);
  std::cout << "train " << files.train << "\nval " << files.val << "\ntest " << files.test << "\n";
  return 0;
}

// codebook ------------------------------------------------------------------

struct CodebookOptions {
  fs::path manifest;
  std::size_t k = kDefaultClusters;
  std::size_t samples = 0;
  std::size_t iters = kDefaultKMeansIterations;
  double alpha = kDefaultAlpha;
  fs::path out;
};

void add_codebook(CLI::App& app, CodebookOptions& o) {
  auto* c = app.add_subcommand("codebook", "Cluster sampled features into a VLAD codebook");
  c->add_option("--manifest", o.manifest, "Training manifest")->required()->check(CLI::ExistingFile);
  c->add_option("--k", o.k, "Number of clusters");
  c->add_option("--samples", o.samples, "Feature samples (0: 100 per cluster)");
  c->add_option("--iters", o.iters, "Maximum Lloyd iterations");
  c->add_option("--alpha", o.alpha, "Soft-assignment selectivity");
  c->add_option("--out", o.out, "Output codebook checkpoint (TAVC)")->required();
}

int run_codebook(const CodebookOptions& o, const Globals& g) {
  const std::size_t n = o.samples == 0 ? o.k * kSamplesPerCluster : o.samples;
  ConfigEcho("codebook")
      .add("manifest", o.manifest.string())
      .add("k", o.k)
      .add("samples", n)
      .add("iters", o.iters)
      .add("alpha", o.alpha)
      .add("seed", g.seed)
      .add("out", o.out.string())
      .print();
  const auto m = read_manifest(o.manifest);
  Rng rng = Rng(g.seed).split("codebook");
  const Tensor samples = sample_features(m, n, rng);
  const auto km = kmeans(samples, o.k, o.iters, rng);
  std::cout << "distortion trace:";
  for (double d : km.distortion) std::cout << " " << std::setprecision(10) << d;
  std::cout << "\niterations " << km.iterations << (km.converged ? " (converged)" : " (limit reached)")
            << "\nfinal distortion " << std::setprecision(10) << km.distortion.back() << "\n";
  write_checkpoint(codebook_checkpoint(make_codebook(km.centers, o.alpha)), o.out);
  return 0;
}

// train ---------------------------------------------------------------------

struct TrainOptions {
  fs::path manifest, val, codebook, resume, out;
  std::uint32_t stage = 1;
  std::string aggregator = "gru";
  std::size_t hidden = kDefaultHidden;
  std::optional<std::size_t> epochs;
  std::optional<double> lr;
  std::size_t batch = 32;
  double decay = 0.5;
  std::size_t decay_every = 5;
  double dropout = kDefaultDropout;
  bool freeze_attention = false;
  bool no_attention = false;
  CLI::App* cmd = nullptr;
};

void add_train(CLI::App& app, TrainOptions& o) {
  auto* c = app.add_subcommand("train", "Run one training stage (1: GRU and classifier; 2: all)");
  o.cmd = c;
  c->add_option("--manifest", o.manifest, "Training manifest")->required()->check(CLI::ExistingFile);
  c->add_option("--val", o.val, "Validation manifest")->required()->check(CLI::ExistingFile);
  auto* cb = c->add_option("--codebook", o.codebook, "Codebook checkpoint for a fresh model")
                 ->check(CLI::ExistingFile);
  auto* rs = c->add_option("--resume", o.resume, "Model checkpoint to continue from")
                 ->check(CLI::ExistingFile);
  cb->excludes(rs);
  c->add_option("--stage", o.stage, "Training stage")->check(CLI::IsMember({1, 2}));
  c->add_option("--aggregator", o.aggregator, "Temporal aggregator (gru: TA-VLAD, sum: baseline)")
      ->check(CLI::IsMember({"gru", "sum"}));
  c->add_option("--hidden", o.hidden, "GRU hidden size H");
  c->add_option("--epochs", o.epochs, "Epochs [default: 50 in stage 1, 30 in stage 2]");
  c->add_option("--lr", o.lr, "Base learning rate [default: 1e-2 in stage 1, 1e-4 in stage 2]");
  c->add_option("--batch", o.batch, "Mini-batch size");
  c->add_option("--decay", o.decay, "Learning-rate decay factor");
  c->add_option("--decay-every", o.decay_every, "Epochs between decays");
  c->add_option("--dropout", o.dropout, "Dropout rate on the descriptor");
  c->add_flag("--freeze-attention", o.freeze_attention, "Keep attention weights fixed in stage 2");
  c->add_flag("--no-attention", o.no_attention, "Disable attention (plain soft-assignment VLAD)");
  c->add_option("--out", o.out, "Output directory for final.tavc, best.tavc, history.csv")->required();
}

int run_train(const TrainOptions& o, const Globals& g) {
  if (o.codebook.empty() && o.resume.empty())
    throw CLI::ValidationError("train", "one of --codebook or --resume is required");
  if (o.stage == 2 && o.resume.empty())
    throw CLI::ValidationError("train", "--stage 2 requires --resume with a stage-1 checkpoint");

  TrainConfig cfg = TrainConfig::defaults_for_stage(o.stage);
  if (o.epochs) cfg.epochs = *o.epochs;
  if (o.lr) cfg.base_lr = *o.lr;
  cfg.batch_size = o.batch;
  cfg.decay_factor = o.decay;
  cfg.decay_every = o.decay_every;
  cfg.dropout_rate = o.dropout;
  cfg.freeze_attention = o.freeze_attention;
  cfg.seed = Rng::derive(g.seed, "train.stage" + std::to_string(o.stage)).next_u64();
  cfg.threads = g.threads;

  const auto train_m = read_manifest(o.manifest);
  const auto val_m = read_manifest(o.val);
  require_same_header(train_m, val_m, o.val);

  ModelParams params;
  if (!o.resume.empty()) {
    params = load_checkpoint(o.resume);
    const auto structural = {"--aggregator", "--hidden", "--no-attention"};
    for (const char* flag : structural)
      if (o.cmd->count(flag) > 0)
        throw CLI::ValidationError("train", std::string(flag) + " cannot change a resumed model");
  } else {
    const Codebook cb = codebook_from_checkpoint(read_checkpoint(o.codebook));
    if (cb.channels() != train_m.channels)
      throw ContractError(detail::concat(o.codebook.string(), ": codebook has ", cb.channels(),
                                         " channels, manifest has ", train_m.channels));
    ModelOptions mo;
    mo.hidden = o.hidden;
    mo.num_classes = train_m.num_classes;
    mo.aggregator = o.aggregator == "sum" ? Aggregator::sum : Aggregator::gru;
    mo.attention_enabled = !o.no_attention;
    mo.dropout_rate = o.dropout;
    Rng init = Rng(g.seed).split("init");
    params = init_model(load_manifest_attention(train_m), cb, mo, init);
  }
  require_model_matches(params, train_m, o.manifest);

  ConfigEcho("train")
      .add("manifest", o.manifest.string())
      .add("val", o.val.string())
      .add(o.resume.empty() ? "codebook" : "resume", (o.resume.empty() ? o.codebook : o.resume).string())
      .add("stage", cfg.stage)
      .add("aggregator", to_string(params.aggregator))
      .add("attention", yes_no(params.attention_enabled))
      .add("hidden", params.hidden())
      .add("clusters", params.clusters())
      .add("epochs", cfg.epochs)
      .add("lr", cfg.base_lr)
      .add("batch", cfg.batch_size)
      .add("decay", std::to_string(cfg.decay_factor) + " every " + std::to_string(cfg.decay_every))
      .add("dropout", cfg.dropout_rate)
      .add("freeze_attention", yes_no(cfg.freeze_attention))
      .add("seed", g.seed)
      .add("threads", g.threads)
      .add("out", o.out.string())
      .print();

  const Dataset train = load_dataset(train_m);
  const Dataset val = load_dataset(val_m);
  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult r = train_stage(train, val, std::move(params), cfg);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  std::error_code ec;
  fs::create_directories(o.out, ec);
  if (ec) throw IoError("cannot create " + o.out.string() + ": " + ec.message());
  save_checkpoint(r.final_params, o.out / "final.tavc");
  save_checkpoint(r.best_params, o.out / "best.tavc");
  write_history(r.history, o.out / "history.csv");

  const auto& last = r.history.back();
  std::cout << std::fixed << std::setprecision(6) << "final train_loss " << last.train_loss
            << " train_acc " << last.train_accuracy << " val_acc " << last.val_accuracy << "\n"
            << "best epoch " << r.best_epoch << " val_acc " << r.history[r.best_epoch].val_accuracy
            << "\n"
            << std::setprecision(2) << "elapsed " << secs << " s\n";
  return 0;
}

// eval ----------------------------------------------------------------------

struct EvalOptions {
  fs::path manifest, model, confusion = "confusion.csv";
};

void add_eval(CLI::App& app, EvalOptions& o) {
  auto* c = app.add_subcommand("eval", "Classification accuracy on a manifest");
  c->add_option("--manifest", o.manifest, "Manifest to evaluate")->required()->check(CLI::ExistingFile);
  c->add_option("--model", o.model, "Model checkpoint")->required()->check(CLI::ExistingFile);
  c->add_option("--confusion", o.confusion, "Confusion counts CSV (rows: true, cols: predicted)");
}

int run_eval(const EvalOptions& o, const Globals& g) {
  ConfigEcho("eval")
      .add("manifest", o.manifest.string())
      .add("model", o.model.string())
      .add("confusion", o.confusion.string())
      .add("threads", g.threads)
      .print();
  const auto m = read_manifest(o.manifest);
  const auto params = load_checkpoint(o.model);
  require_model_matches(params, m, o.manifest);
  const auto r = evaluate(load_dataset(m), params, g.threads);

  std::ofstream out(o.confusion, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + o.confusion.string());
  out << "true";
  for (std::size_t c = 0; c < r.confusion.size(); ++c) out << ",pred_" << c;
  out << "\n";
  for (std::size_t t = 0; t < r.confusion.size(); ++t) {
    out << t;
    for (std::size_t count : r.confusion[t]) out << "," << count;
    out << "\n";
  }
  if (!out) throw IoError("write failed: " + o.confusion.string());
  std::cout << "accuracy " << std::fixed << std::setprecision(6) << r.accuracy << "\n";
  return 0;
}

// encode --------------------------------------------------------------------

struct EncodeOptions {
  fs::path model, features, out;
  std::size_t sample_frames = 0;
};

void add_encode(CLI::App& app, EncodeOptions& o) {
  auto* c = app.add_subcommand("encode", "Write the video descriptor as little-endian f64 values");
  c->add_option("--model", o.model, "Model checkpoint")->required()->check(CLI::ExistingFile);
  c->add_option("--features", o.features, "Feature volume (TAVF)")->required()->check(CLI::ExistingFile);
  c->add_option("--sample-frames", o.sample_frames, "Uniformly sample this many frames (0: all)");
  c->add_option("--out", o.out, "Output file")->required();
}

int run_encode(const EncodeOptions& o, const Globals&) {
  ConfigEcho("encode")
      .add("model", o.model.string())
      .add("features", o.features.string())
      .add("sample_frames", o.sample_frames)
      .add("out", o.out.string())
      .print();
  const auto params = load_checkpoint(o.model);
  const auto video = load_video(o.features, o.sample_frames);
  const auto r = forward(video, params, Mode::eval);
  if (r.descriptor.degenerate) std::cerr << "warning: descriptor norm is degenerate\n";
  io::ByteWriter w;
  for (double x : r.descriptor.values) w.f64(x);
  w.save(o.out);
  std::cout << "descriptor " << r.descriptor.values.size() << " values, predicted class "
            << argmax(r.logits) << "\n";
  return 0;
}

// attention -----------------------------------------------------------------

struct AttentionOptions {
  fs::path model, weights, features, out;
  std::size_t sample_frames = 0;
};

void add_attention(CLI::App& app, AttentionOptions& o) {
  auto* c = app.add_subcommand("attention", "Export per-frame attention maps as PGM images");
  auto* m = c->add_option("--model", o.model, "Model checkpoint")->check(CLI::ExistingFile);
  auto* w = c->add_option("--weights", o.weights, "Attention weights (TAVW) instead of a model")
                ->check(CLI::ExistingFile);
  m->excludes(w);
  c->add_option("--features", o.features, "Feature volume (TAVF)")->required()->check(CLI::ExistingFile);
  c->add_option("--sample-frames", o.sample_frames, "Uniformly sample this many frames (0: all)");
  c->add_option("--out", o.out, "Output directory for frame_<t>.pgm")->required();
}

int run_attention(const AttentionOptions& o, const Globals&) {
  if (o.model.empty() == o.weights.empty())
    throw CLI::ValidationError("attention", "exactly one of --model or --weights is required");
  ConfigEcho("attention")
      .add(o.model.empty() ? "weights" : "model", (o.model.empty() ? o.weights : o.model).string())
      .add("features", o.features.string())
      .add("sample_frames", o.sample_frames)
      .add("out", o.out.string())
      .print();
  const AttentionWeights aw =
      o.model.empty() ? read_attention_weights(o.weights) : load_checkpoint(o.model).attention;
  const auto video = load_video(o.features, o.sample_frames);
  if (aw.channels() != video.channels())
    throw ContractError(detail::concat(o.features.string(), ": volume has ", video.channels(),
                                       " channels, attention weights expect ", aw.channels()));
  const auto files = export_attention_pgm(attention_map(video, aw), video.grid_rows(),
                                          video.grid_cols(), o.out);
  std::cout << "wrote " << files.size() << " images\n";
  return 0;
}

// gradcheck -----------------------------------------------------------------

struct GradcheckOptions {
  std::size_t seeds = 10;
  double eps = kGradSuiteEps;
  double tol = kGradSuiteTol;
};

void add_gradcheck(CLI::App& app, GradcheckOptions& o) {
  auto* c = app.add_subcommand("gradcheck", "Finite-difference check of the full pipeline");
  c->add_option("--seeds", o.seeds, "Number of consecutive seeds starting at --seed");
  c->add_option("--eps", o.eps, "Central-difference step");
  c->add_option("--tol", o.tol, "Relative error tolerance");
}

int run_gradcheck(const GradcheckOptions& o, const Globals& g) {
  ConfigEcho("gradcheck")
      .add("seed", g.seed)
      .add("seeds", o.seeds)
      .add("eps", o.eps)
      .add("tol", o.tol)
      .add("cases", gradient_suite_cases().size())
      .print();
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < o.seeds; ++i) seeds.push_back(g.seed + i);
  std::size_t failed = 0;
  double worst = 0.0;
  const auto results = run_gradient_suite(seeds, o.eps, o.tol);
  for (const auto& r : results) {
    const auto* w = r.report.worst();
    if (w) worst = std::max(worst, w->max_rel_error);
    if (r.report.passed()) continue;
    ++failed;
    std::cerr << "FAIL seed " << r.seed << " " << r.config.label() << ": " << w->name << "["
              << w->worst_index << "] analytic " << w->analytic << " numeric " << w->numeric
              << " rel " << w->max_rel_error << "\n";
  }
  std::cout << results.size() - failed << "/" << results.size() << " checks passed, worst relative error "
            << std::scientific << std::setprecision(3) << worst << "\n";
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TA-VLAD: temporal attentive VLAD video descriptors"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Random seed for every stochastic step");
  app.add_option("--threads", g.threads, "Worker thread cap (default: available cores)")
      ->check(CLI::PositiveNumber);

  GenSynthOptions gen;
  CodebookOptions cbo;
  TrainOptions tro;
  EvalOptions evo;
  EncodeOptions eno;
  AttentionOptions ato;
  GradcheckOptions gco;
  add_gen_synth(app, gen);
  add_codebook(app, cbo);
  add_train(app, tro);
  add_eval(app, evo);
  add_encode(app, eno);
  add_attention(app, ato);
  add_gradcheck(app, gco);
  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    if (cmd == "gen-synth") return run_gen_synth(gen, g);
    if (cmd == "codebook") return run_codebook(cbo, g);
    if (cmd == "train") return run_train(tro, g);
    if (cmd == "eval") return run_eval(evo, g);
    if (cmd == "encode") return run_encode(eno, g);
    if (cmd == "attention") return run_attention(ato, g);
    if (cmd == "gradcheck") return run_gradcheck(gco, g);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "tavlad " << cmd << ": error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
