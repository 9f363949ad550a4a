#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "msc/msc.hpp"

namespace msc::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// JSON configuration files. Top-level keys set global options; a nested
// object named after a subcommand sets that subcommand's options.

std::string scalar_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
  if (v.is_number_float()) {
    std::ostringstream s;
    s << std::setprecision(17) << v.get<double>();
    return s.str();
  }
  throw CLI::ConfigError("unsupported JSON value: " + v.dump());
}

class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    json root;
    try {
      root = json::parse(input);
    } catch (const json::parse_error& e) {
      throw CLI::ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!root.is_object()) throw CLI::ConfigError("config must be a JSON object");
    std::vector<CLI::ConfigItem> items;
    flatten(root, {}, items);
    return items;
  }

 private:
  static void flatten(const json& obj, const std::vector<std::string>& parents, std::vector<CLI::ConfigItem>& items) {
    for (const auto& [key, value] : obj.items()) {
      if (value.is_null()) continue;
      if (value.is_object()) {
        auto nested = parents;
        nested.push_back(key);
        flatten(value, nested, items);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar_text(v));
      } else {
        item.inputs.push_back(scalar_text(value));
      }
      items.push_back(std::move(item));
    }
  }
};

// ---------------------------------------------------------------------------
// Resolved options

struct Global {
  std::size_t threads = 1;
  std::string format;  // empty: infer from extension
};

struct TrainArgs {
  std::string features, val, out, history_dir, objective = "msc", aug = "jitter";
  double tau = 0.25, lambda = 1.0, lr = 1e-2, wd = 5e-5, sigma = 0.01;
  bool sigma_absolute = false;
  std::size_t epochs = 25, batch = 64, hidden = 0, snapshot_every = 5, diag_pairs = kDefaultSamplePairs, val_k = 2;
  std::uint64_t seed = 0, aug_seed = 0;
};

struct CompressArgs {
  std::string features, checkpoint, out;
  std::size_t kmeans_k = 0;
  std::uint64_t seed = 0;
  std::size_t max_iters = 100;
};

struct ScoreArgs {
  std::string features, checkpoint, gallery, out, out_dir;
  std::size_t k = 2;
};

struct DiagnoseArgs {
  std::string features, center_from, checkpoint, out_dir, frame = "origin";
  std::size_t bins = kDefaultBins, pairs = kDefaultSamplePairs, epoch = 0;
  std::uint64_t seed = 0;
};

struct GradCheckArgs {
  std::string objective = "msc", out_dir = ".";
  std::size_t trials = 20;
  double tol = 1e-4, tau = 0.25, lambda = 1.0, step = 1e-6;
  std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// Helpers

FileFormat format_of(const Global& g, const fs::path& path) {
  if (g.format == "csv") return FileFormat::Csv;
  if (g.format == "binary") return FileFormat::Binary;
  return format_for_path(path);
}

/// Inputs are recognised by content: binary files start with the MSCF magic.
FeatureSet load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[4] = {};
  in.read(magic, 4);
  const bool binary = in.gcount() == 4 && std::equal(magic, magic + 4, detail::kFeatureMagic);
  return load_feature_set(path, binary ? FileFormat::Binary : FileFormat::Csv);
}

fs::path parent_or_cwd(const fs::path& p) { return p.has_parent_path() ? p.parent_path() : fs::path("."); }

/// Outputs must not alias any input; output directories are created up front.
void prepare_outputs(const std::vector<std::string>& inputs, const std::vector<fs::path>& output_dirs,
                     const std::vector<fs::path>& output_files) {
  for (const auto& dir : output_dirs) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    require(!ec && fs::is_directory(dir), ErrorKind::IoError, "cannot create output directory " + dir.string());
  }
  for (const auto& file : output_files) {
    const fs::path dir = parent_or_cwd(file);
    std::error_code ec;
    fs::create_directories(dir, ec);
    require(!ec && fs::is_directory(dir), ErrorKind::IoError, "cannot create output directory " + dir.string());
    for (const auto& in : inputs) {
      if (in.empty() || !fs::exists(file)) continue;
      require(!fs::equivalent(file, in), ErrorKind::InvalidArgument,
              "output " + file.string() + " would overwrite input " + in);
    }
  }
}

AdapterParams load_adapter(const std::string& checkpoint, std::size_t d) {
  if (checkpoint.empty()) return AdapterParams::zeros(d, d);  // identity map
  AdapterParams p = load_checkpoint(checkpoint);
  require(p.d == d, ErrorKind::DimensionMismatch,
          "checkpoint dimension " + std::to_string(p.d) + " does not match features dimension " + std::to_string(d));
  return p;
}

fs::path sidecar_path(const fs::path& gallery) { return fs::path(gallery.string() + ".json"); }

Gallery load_gallery(const std::string& path) {
  const fs::path meta_path = sidecar_path(path);
  require(fs::exists(meta_path), ErrorKind::InvalidArgument,
          "gallery metadata " + meta_path.string() + " not found (galleries are written by `compress`)");
  json meta;
  try {
    std::ifstream in(meta_path);
    meta = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::ParseError, "gallery metadata " + meta_path.string() + ": " + e.what());
  }
  const std::string kind = meta.value("kind", std::string());
  require(kind == "full_train" || kind == "kmeans_centroids", ErrorKind::ParseError,
          "gallery metadata has unknown kind '" + kind + "'");
  const FeatureSet rows = load(path);
  if (kind == "full_train") return Gallery::from_features(rows.to_matrix());
  require(meta.contains("kmeans_k") && meta["kmeans_k"].is_number_unsigned(), ErrorKind::ParseError,
          "gallery metadata lacks kmeans_k");
  return Gallery::from_features(rows.to_matrix(), GalleryKind::KMeansCentroids, meta["kmeans_k"].get<std::size_t>());
}

/// Every option of `sub` with its resolved value: what was given on the
/// command line or in a config file, else the default.
json resolved_options(const CLI::App& sub) {
  json j = json::object();
  for (const CLI::Option* op : sub.get_options()) {
    const std::string name = op->get_single_name();
    if (name == "help" || name == "config" || name == "manifest") continue;
    if (op->count() > 0) {
      const auto& res = op->results();
      j[name] = res.size() == 1 ? json(res.front()) : json(res);
    } else if (!op->get_default_str().empty()) {
      j[name] = op->get_default_str();
    }
  }
  return j;
}

/// Written next to the outputs; loads back through `--config`.
void write_manifest(const CLI::App& app, const CLI::App& sub, const fs::path& path) {
  json j = resolved_options(app);
  j["command"] = sub.get_name();
  j[sub.get_name()] = resolved_options(sub);
  write_json(j, path);
}

json record_json(const EpochRecord& r) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return {{"epoch", r.epoch},
          {"loss_mean", r.loss_mean},
          {"uniformity_origin", r.uniformity_origin},
          {"uniformity_mean_shifted", opt(r.uniformity_shifted)},
          {"aug_similarity_origin", r.aug_similarity_origin},
          {"aug_similarity_mean_shifted", opt(r.aug_similarity_shifted)},
          {"val_auc", opt(r.val_auc)}};
}

// ---------------------------------------------------------------------------
// Subcommands

int run_train(const Global& g, const TrainArgs& a, const CLI::App& app, const CLI::App& sub, std::ostream& out,
              const std::string& manifest) {
  const fs::path ckpt(a.out);
  const fs::path hist_dir = a.history_dir.empty() ? parent_or_cwd(ckpt) : fs::path(a.history_dir);
  prepare_outputs({a.features, a.val}, {hist_dir}, {ckpt});

  TrainConfig cfg;
  cfg.loss.objective = parse_objective(a.objective);
  cfg.loss.tau = a.tau;
  cfg.loss.lambda = a.lambda;
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch;
  cfg.learning_rate = a.lr;
  cfg.weight_decay = a.wd;
  cfg.hidden = a.hidden;
  cfg.seed = a.seed;
  cfg.snapshot_every = a.snapshot_every;
  cfg.augmentation.mode = a.aug == "paired" ? AugmentationMode::PairedViews : AugmentationMode::GaussianJitter;
  cfg.augmentation.sigma = a.sigma;
  cfg.augmentation.relative_to_mean_norm = !a.sigma_absolute;
  cfg.augmentation.seed = a.aug_seed;
  cfg.diag_pairs = a.diag_pairs;
  cfg.val_k = a.val_k;
  cfg.threads = g.threads;
  cfg.validate();

  const FeatureSet train_fs = load(a.features);
  std::optional<FeatureSet> val_fs;
  if (!a.val.empty()) val_fs = load(a.val);

  const TrainResult result = train(train_fs, val_fs, cfg, [&](const EpochRecord& r) {
    out << "epoch " << r.epoch << " loss " << r.loss_mean << " uniformity " << r.uniformity_origin;
    if (r.val_auc) out << " val_auc " << *r.val_auc;
    out << '\n';
  });

  save_checkpoint(result.params, ckpt);
  for (const Snapshot& s : result.history.snapshots)
    save_checkpoint(s.params, hist_dir / (ckpt.stem().string() + ".epoch" + std::to_string(s.epoch) + ".msca"));
  write_history_curves(hist_dir, result.history);

  json records = json::array({record_json(result.history.initial)});
  for (const auto& r : result.history.records) records.push_back(record_json(r));
  const CollapseReport collapse = collapse_monitor(result.history);
  write_json(json{{"center", result.center.vector()},
              {"records", records},
              {"collapse_epoch", collapse.collapse_epoch ? json(*collapse.collapse_epoch) : json(nullptr)},
              {"collapse_reason", collapse.reason}},
             hist_dir / "history.json");
  write_manifest(app, sub, manifest.empty() ? hist_dir / "run_manifest.json" : fs::path(manifest));
  if (collapse.collapse_epoch)
    out << "warning: collapse detected at epoch " << *collapse.collapse_epoch << " (" << collapse.reason << ")\n";
  out << "checkpoint written to " << ckpt.string() << '\n';
  return 0;
}

int run_compress(const Global& g, const CompressArgs& a, const CLI::App& app, const CLI::App& sub, std::ostream& out,
                 const std::string& manifest) {
  const fs::path gallery_path(a.out);
  prepare_outputs({a.features, a.checkpoint}, {}, {gallery_path, sidecar_path(gallery_path)});
  const FeatureSet train_fs = load(a.features);
  require(train_fs.all_normal(), ErrorKind::InvariantViolation, "gallery source contains anomalous rows");
  const AdapterParams params = load_adapter(a.checkpoint, train_fs.d);
  const Matrix adapted = adapter_forward(train_fs.to_matrix(), params);

  Gallery gallery = a.kmeans_k == 0 ? Gallery::from_features(adapted)
                                    : kmeans_compress(adapted, a.kmeans_k, a.seed, a.max_iters).gallery;
  save_feature_set(FeatureSet::from_matrix(gallery.exemplars()), gallery_path, format_of(g, gallery_path));
  write_json(json{{"kind", std::string(gallery_kind_name(gallery.kind()))},
              {"kmeans_k", gallery.kmeans_k() ? json(*gallery.kmeans_k()) : json(nullptr)},
              {"size", gallery.size()},
              {"dim", gallery.dim()}},
             sidecar_path(gallery_path));
  write_manifest(app, sub, manifest.empty() ? parent_or_cwd(gallery_path) / "run_manifest.json" : fs::path(manifest));
  out << "gallery " << gallery_kind_name(gallery.kind()) << " with " << gallery.size() << " exemplars written to "
      << gallery_path.string() << '\n';
  return 0;
}

int run_score(const Global& g, const ScoreArgs& a, bool require_labels, const CLI::App& app, const CLI::App& sub,
              std::ostream& out, const std::string& manifest) {
  const fs::path out_dir(a.out_dir.empty() ? parent_or_cwd(a.out).string() : a.out_dir);
  const fs::path scores_path = a.out.empty() ? out_dir / "scores.csv" : fs::path(a.out);
  prepare_outputs({a.features, a.checkpoint, a.gallery}, {out_dir}, {scores_path});
  const FeatureSet test = load(a.features);
  if (require_labels) require(test.labels.has_value(), ErrorKind::InvalidArgument, "eval needs a labeled test set");
  const Gallery gallery = load_gallery(a.gallery);
  require(gallery.dim() == test.d, ErrorKind::DimensionMismatch, "gallery and features differ in dimension");
  const AdapterParams params = load_adapter(a.checkpoint, test.d);
  const ScoreReport report = evaluate(test, params, gallery, a.k, g.threads);

  write_scores_csv(report, scores_path);
  if (require_labels) write_json(summary_json(report), out_dir / "summary.json");
  write_manifest(app, sub, manifest.empty() ? out_dir / "run_manifest.json" : fs::path(manifest));
  if (report.roc_auc) out << "roc_auc " << std::setprecision(17) << *report.roc_auc << '\n';
  out << report.scores.size() << " scores written to " << scores_path.string() << '\n';
  return 0;
}

int run_diagnose(const DiagnoseArgs& a, const CLI::App& app, const CLI::App& sub, std::ostream& out,
                 const std::string& manifest) {
  const fs::path dir(a.out_dir);
  prepare_outputs({a.features, a.center_from, a.checkpoint}, {dir}, {});
  const Frame frame = a.frame == "origin" ? Frame::Origin : Frame::MeanShifted;
  const FeatureSet feats = load(a.features);
  const std::vector<Label> labels = feats.labels.value_or(std::vector<Label>(feats.n, Label::Normal));

  // The center always comes from the raw (pre-adapter) training features.
  Matrix center_src;
  if (a.center_from.empty()) {
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < feats.n; ++i)
      if (labels[i] == Label::Normal) rows.push_back(feats.to_matrix().row_vector(i));
    require(!rows.empty(), ErrorKind::EmptyTrainingSet, "no normal rows to compute the center from");
    center_src = Matrix::from_rows(rows);
  } else {
    const FeatureSet src = load(a.center_from);
    require(src.d == feats.d, ErrorKind::DimensionMismatch, "center source and features differ in dimension");
    center_src = src.to_matrix();
  }
  const Center c = compute_center(center_src);

  const AdapterParams params = load_adapter(a.checkpoint, feats.d);
  const Matrix adapted = adapter_forward(feats.to_matrix(), params);
  std::vector<std::vector<double>> normal_rows;
  for (std::size_t i = 0; i < feats.n; ++i)
    if (labels[i] == Label::Normal) normal_rows.push_back(adapted.row_vector(i));

  json summary = {{"frame", frame_name(frame)}, {"epoch", a.epoch}};
  if (normal_rows.size() >= 2) {
    const double u = uniformity(Matrix::from_rows(normal_rows), frame, c, a.pairs, a.seed);
    const std::vector<MetricPoint> pts{{a.epoch, u}};
    write_metric_csv(dir, "uniformity", frame, pts);
    summary["uniformity"] = u;
    out << "uniformity " << frame_name(frame) << ' ' << u << '\n';
  }
  if (feats.view_of) {
    std::vector<std::vector<double>> first, second;
    for (std::size_t i = 0; i < feats.n; ++i) {
      const std::size_t j = (*feats.view_of)[i];
      if (i < j) {
        first.push_back(adapted.row_vector(i));
        second.push_back(adapted.row_vector(j));
      }
    }
    if (!first.empty()) {
      const double s = augmentation_similarity(Matrix::from_rows(first), Matrix::from_rows(second), frame, c);
      const std::vector<MetricPoint> pts{{a.epoch, s}};
      write_metric_csv(dir, "aug_similarity", frame, pts);
      summary["aug_similarity"] = s;
      out << "aug_similarity " << frame_name(frame) << ' ' << s << '\n';
    }
  }
  write_json(histogram_json(confidence_stats(adapted, labels, a.bins)), dir / "diag_confidence.json");
  write_json(histogram_json(angular_histogram(adapted, c, frame, labels, a.bins)),
             dir / ("diag_angle_" + std::string(frame_name(frame)) + ".json"));
  write_json(summary, dir / "diag_summary.json");
  write_manifest(app, sub, manifest.empty() ? dir / "run_manifest.json" : fs::path(manifest));
  return 0;
}

int run_grad_check(const GradCheckArgs& a, const CLI::App& app, const CLI::App& sub, std::ostream& out,
                   const std::string& manifest) {
  const fs::path dir(a.out_dir);
  prepare_outputs({}, {dir}, {});
  LossConfig cfg;
  cfg.objective = parse_objective(a.objective);
  cfg.tau = a.tau;
  cfg.lambda = a.lambda;
  const GradCheckReport r = grad_check(cfg, a.trials, a.tol, a.seed, a.step);
  write_manifest(app, sub, manifest.empty() ? dir / "run_manifest.json" : fs::path(manifest));
  out << "objective " << a.objective << " trials " << r.trials << " max_rel_error " << std::setprecision(6)
      << r.max_rel_error << " tol " << r.tolerance << (r.passed ? " PASS" : " FAIL") << '\n';
  if (!r.passed)
    fail(ErrorKind::InvariantViolation, "gradient check failed: max relative error " + std::to_string(r.max_rel_error) +
                                            " >= tolerance " + std::to_string(a.tol));
  return 0;
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mean-shifted contrastive one-class classification on precomputed features", "msc"};
  app.config_formatter(std::make_shared<JsonConfig>());
  app.allow_config_extras(CLI::config_extras_mode::ignore);
  app.set_config("--config", "", "JSON config file; command-line flags take precedence");
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.fallthrough();  // global options may follow the subcommand

  Global g;
  app.add_option("--threads", g.threads, "Worker threads (results do not depend on it)")
      ->envname("MSC_THREADS")
      ->check(CLI::PositiveNumber);
  app.add_option("--format", g.format, "Format of written feature files; default infers from the extension (.csv or binary)")
      ->check(CLI::IsMember({"binary", "csv"}));

  const std::vector<std::string> objectives{"center", "ang-center", "contrastive", "msc", "msc+ang"};
  std::string manifest;
  // Checked after parsing so that config files can supply them.
  std::vector<std::pair<const CLI::App*, CLI::Option*>> mandatory;
  auto need = [&](CLI::App* sub, CLI::Option* opt) {
    opt->description(opt->get_description() + " (required)");
    mandatory.emplace_back(sub, opt);
    return opt;
  };
  auto add_manifest = [&](CLI::App* sub) {
    sub->add_option("--manifest", manifest, "Where to write run_manifest.json (default: next to the outputs)");
  };

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Fine-tune the adapter on normal training features");
  need(train_cmd, train_cmd->add_option("--features", ta.features, "Training features (normal only)"))->check(CLI::ExistingFile);
  train_cmd->add_option("--val", ta.val, "Labeled validation features for per-epoch AUC")->check(CLI::ExistingFile);
  need(train_cmd, train_cmd->add_option("--out", ta.out, "Checkpoint path"));
  train_cmd->add_option("--history-dir", ta.history_dir, "Directory for curves and snapshots (default: checkpoint dir)");
  train_cmd->add_option("--objective", ta.objective, "Training objective")->check(CLI::IsMember(objectives));
  train_cmd->add_option("--tau", ta.tau, "Contrastive temperature");
  train_cmd->add_option("--lambda", ta.lambda, "Angular term weight for msc+ang");
  train_cmd->add_option("--epochs", ta.epochs, "Training epochs");
  train_cmd->add_option("--batch", ta.batch, "Samples per batch (two views each)");
  train_cmd->add_option("--lr", ta.lr, "SGD learning rate");
  train_cmd->add_option("--wd", ta.wd, "Weight decay");
  train_cmd->add_option("--hidden", ta.hidden, "Adapter hidden width (0: feature dimension)");
  need(train_cmd, train_cmd->add_option("--seed", ta.seed, "Random seed"));
  train_cmd->add_option("--snapshot-every", ta.snapshot_every, "Checkpoint snapshot interval in epochs (0: last only)");
  train_cmd->add_option("--aug", ta.aug, "Second-view source")->check(CLI::IsMember({"jitter", "paired"}));
  train_cmd->add_option("--sigma", ta.sigma, "Jitter noise std");
  train_cmd->add_flag("--sigma-absolute", ta.sigma_absolute, "Do not scale sigma by the mean feature norm");
  train_cmd->add_option("--aug-seed", ta.aug_seed, "Seed of the augmentation noise stream");
  train_cmd->add_option("--diag-pairs", ta.diag_pairs, "Sampled pairs for the uniformity curves");
  train_cmd->add_option("--val-k", ta.val_k, "Neighbors for validation scoring");
  add_manifest(train_cmd);

  CompressArgs ca;
  auto* compress_cmd = app.add_subcommand("compress", "Build a scoring gallery, optionally k-means compressed");
  need(compress_cmd, compress_cmd->add_option("--features", ca.features, "Training features"))->check(CLI::ExistingFile);
  compress_cmd->add_option("--checkpoint", ca.checkpoint, "Adapter checkpoint (default: identity)")
      ->check(CLI::ExistingFile);
  compress_cmd->add_option("--kmeans-k", ca.kmeans_k, "Number of centroids (0: keep every training row)");
  compress_cmd->add_option("--seed", ca.seed, "k-means seed");
  compress_cmd->add_option("--max-iters", ca.max_iters, "k-means iteration cap");
  need(compress_cmd, compress_cmd->add_option("--out", ca.out, "Gallery path"));
  add_manifest(compress_cmd);

  ScoreArgs sa;
  auto add_scoring = [&](CLI::App* sub, const char* features_name) {
    need(sub, sub->add_option(features_name, sa.features, "Query features"))->check(CLI::ExistingFile);
    need(sub, sub->add_option("--gallery", sa.gallery, "Gallery written by compress"))->check(CLI::ExistingFile);
    sub->add_option("--checkpoint", sa.checkpoint, "Adapter checkpoint (default: identity)")->check(CLI::ExistingFile);
    sub->add_option("--k", sa.k, "Nearest neighbors");
    add_manifest(sub);
  };
  auto* eval_cmd = app.add_subcommand("eval", "Score a labeled test set and report ROC-AUC");
  add_scoring(eval_cmd, "--test");
  need(eval_cmd, eval_cmd->add_option("--out-dir", sa.out_dir, "Directory for scores.csv and summary.json"));
  auto* score_cmd = app.add_subcommand("score", "Score features without requiring labels");
  add_scoring(score_cmd, "--features");
  need(score_cmd, score_cmd->add_option("--out", sa.out, "Scores CSV path"));

  DiagnoseArgs da;
  auto* diagnose_cmd = app.add_subcommand("diagnose", "Uniformity, view similarity and histograms of a feature set");
  need(diagnose_cmd, diagnose_cmd->add_option("--features", da.features, "Features to analyse"))->check(CLI::ExistingFile);
  diagnose_cmd->add_option("--center-from", da.center_from, "Raw training features defining the center")
      ->check(CLI::ExistingFile);
  diagnose_cmd->add_option("--checkpoint", da.checkpoint, "Adapter checkpoint (default: identity)")
      ->check(CLI::ExistingFile);
  diagnose_cmd->add_option("--frame", da.frame, "Reference frame")->check(CLI::IsMember({"origin", "mean-shifted"}));
  diagnose_cmd->add_option("--bins", da.bins, "Histogram bins")->check(CLI::PositiveNumber);
  diagnose_cmd->add_option("--pairs", da.pairs, "Sampled pairs for uniformity")->check(CLI::PositiveNumber);
  diagnose_cmd->add_option("--seed", da.seed, "Pair sampling seed");
  diagnose_cmd->add_option("--epoch", da.epoch, "Epoch label for the CSV rows");
  need(diagnose_cmd, diagnose_cmd->add_option("--out-dir", da.out_dir, "Output directory"));
  add_manifest(diagnose_cmd);

  GradCheckArgs ga;
  auto* grad_cmd = app.add_subcommand("grad-check", "Compare analytic and finite-difference gradients");
  grad_cmd->add_option("--objective", ga.objective, "Objective")->check(CLI::IsMember(objectives));
  grad_cmd->add_option("--trials", ga.trials, "Random instances")->check(CLI::PositiveNumber);
  grad_cmd->add_option("--tol", ga.tol, "Maximum relative error");
  grad_cmd->add_option("--tau", ga.tau, "Contrastive temperature");
  grad_cmd->add_option("--lambda", ga.lambda, "Angular term weight");
  grad_cmd->add_option("--step", ga.step, "Finite-difference step");
  grad_cmd->add_option("--seed", ga.seed, "Seed");
  grad_cmd->add_option("--out-dir", ga.out_dir, "Directory for run_manifest.json");
  add_manifest(grad_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);  // --help
    err << "usage error: " << e.what() << '\n' << "run with --help for usage\n";
    return 2;
  }

  for (const auto& [sub, opt] : mandatory) {
    if (sub->parsed() && opt->count() == 0) {
      err << "usage error: " << opt->get_name() << " is required\n" << "run with --help for usage\n";
      return 2;
    }
  }

  try {
    if (train_cmd->parsed()) return run_train(g, ta, app, *train_cmd, out, manifest);
    if (compress_cmd->parsed()) return run_compress(g, ca, app, *compress_cmd, out, manifest);
    if (eval_cmd->parsed()) return run_score(g, sa, true, app, *eval_cmd, out, manifest);
    if (score_cmd->parsed()) return run_score(g, sa, false, app, *score_cmd, out, manifest);
    if (diagnose_cmd->parsed()) return run_diagnose(da, app, *diagnose_cmd, out, manifest);
    if (grad_cmd->parsed()) return run_grad_check(ga, app, *grad_cmd, out, manifest);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace msc::cli
