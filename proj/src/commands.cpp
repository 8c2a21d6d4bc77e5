#include "millie/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <thread>
#include <unordered_map>
#include <utility>

#include "millie/checkpoint.hpp"
#include "millie/dataio.hpp"
#include "millie/errors.hpp"
#include "millie/imageio.hpp"
#include "millie/metrics.hpp"
#include "millie/model.hpp"
#include "millie/report.hpp"
#include "millie/segmentation.hpp"
#include "millie/training.hpp"

namespace millie {

namespace fs = std::filesystem;

namespace {

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
}

std::string under(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).generic_string();
}

std::string fmt_prob(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << content;
  out.flush();
  if (!out) throw IoError("write to '" + path + "' failed");
}

int argmax_index(const Tensor& t) {
  int arg = 0;
  for (int i = 1; i < t.dim(0); ++i)
    if (t.data[i] > t.data[arg]) arg = i;
  return arg;
}

std::string quote_list(const std::vector<std::string>& items) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    out += items[i];
  }
  return out + "]";
}

Json confusion_json(const ConfusionMatrix& cm) {
  Json j;
  j["classes"] = cm.classes;
  Json rows = Json::array();
  for (std::size_t t = 0; t < cm.classes.size(); ++t) {
    Json row = Json::array();
    for (std::size_t p = 0; p < cm.classes.size(); ++p)
      row.push_back(cm.at(static_cast<int>(t), static_cast<int>(p)));
    rows.push_back(std::move(row));
  }
  j["counts"] = std::move(rows);
  j["accuracy"] = cm.accuracy();
  return j;
}

Json base_report(const char* command, const RunConfig& config) {
  Json report;
  report["command"] = command;
  report["tool_version"] = kToolVersion;
  report["config"] = effective_config(config);
  return report;
}

std::string prob_header(const std::vector<std::string>& classes) {
  std::string h;
  for (const auto& c : classes) h += ",prob_" + c;
  return h;
}

std::string prob_cells(const Tensor& probs) {
  std::string row;
  for (int c = 0; c < probs.dim(0); ++c) row += "," + fmt_prob(probs.data[c]);
  return row;
}

}  // namespace

Json cmd_segment(const SegmentArgs& args, const RunConfig& config, std::ostream& log) {
  const std::vector<SyntheticField> fields = load_fields(args.fields_path);
  ensure_dir(args.out_dir);
  ensure_dir(under(args.out_dir, "patches"));

  std::vector<Sample> samples;
  std::unordered_map<std::string, std::size_t> sample_index;
  std::set<std::string> class_set;
  int total_patches = 0;
  bool any_glyphs = false;
  std::int64_t tp = 0, fp = 0, fn = 0;

  for (const auto& field : fields) {
    class_set.insert(field.sample_label);
    auto it = sample_index.find(field.sample_id);
    if (it == sample_index.end()) {
      it = sample_index.emplace(field.sample_id, samples.size()).first;
      samples.push_back(Sample{field.sample_id, field.sample_label, {}});
    } else if (samples[it->second].label != field.sample_label) {
      throw DataError("sample '" + field.sample_id + "' is listed with labels '" +
                      samples[it->second].label + "' and '" + field.sample_label + "'");
    }
    Sample& sample = samples[it->second];

    const RgbImage img = load_image(field.field_path);
    const std::vector<PatchImage> patches = segment_field(img, config.seg, field.sample_id);
    log << field.field_path << "\t" << patches.size() << "\n";
    std::vector<std::pair<double, double>> predicted;
    for (const auto& patch : patches) {
      char name[64];
      std::snprintf(name, sizeof name, "%s_p%03zu.png", field.sample_id.c_str(),
                    sample.patch_paths.size());
      const std::string path = under(under(args.out_dir, "patches"), name);
      save_png(patch.image, path);
      sample.patch_paths.push_back(path);
      predicted.emplace_back(patch.centroid_row, patch.centroid_col);
      ++total_patches;
    }

    if (!field.glyphs.empty()) {
      any_glyphs = true;
      std::vector<std::pair<double, double>> truth;
      for (const auto& g : field.glyphs) truth.emplace_back(g.row, g.col);
      const MatchScore score =
          segmentation_score(predicted, truth, config.metrics.match_radius);
      tp += score.true_positives;
      fp += score.false_positives;
      fn += score.false_negatives;
    }
  }

  DatasetManifest manifest;
  manifest.classes.assign(class_set.begin(), class_set.end());
  for (auto& sample : samples) {
    if (sample.patch_paths.empty()) {
      log << "#warning: sample '" << sample.sample_id << "' produced no patches\n";
      continue;
    }
    manifest.samples.push_back(std::move(sample));
  }
  const bool wrote_manifest = !manifest.samples.empty();
  if (wrote_manifest) write_manifest(manifest, under(args.out_dir, "manifest.tsv"));

  Json report = base_report("segment", config);
  report["fields_listing"] = args.fields_path;
  report["fields"] = fields.size();
  report["samples"] = manifest.samples.size();
  report["total_patches"] = total_patches;
  if (any_glyphs) {
    Json match;
    match["match_radius"] = config.metrics.match_radius;
    match["true_positives"] = tp;
    match["false_positives"] = fp;
    match["false_negatives"] = fn;
    match["recall"] = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    match["precision"] =
        tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    report["matching"] = std::move(match);
  } else {
    report["matching"] = nullptr;
  }
  report["manifest"] = wrote_manifest ? Json("manifest.tsv") : Json(nullptr);
  write_report(report, under(args.out_dir, "report.json"));
  log << "segmented " << fields.size() << " fields into " << total_patches << " patches\n";
  return report;
}

Json cmd_train(const TrainArgs& args, const RunConfig& config, std::ostream& log) {
  const DatasetManifest manifest = load_manifest(args.manifest_path);
  ensure_dir(args.out_dir);

  std::ofstream train_log(under(args.out_dir, "training_log.tsv"), std::ios::binary);
  if (!train_log) throw IoError("cannot open '" + under(args.out_dir, "training_log.tsv") +
                                "' for writing");
  PatchCache cache;
  TrainedModel model =
      train(manifest.samples, manifest.classes, config.train, config.backbone, config.aug, cache,
            &train_log, config.head_width1, config.head_width2);
  train_log.flush();
  if (!train_log) throw IoError("write to training log failed");

  save_checkpoint(model, config.train.seed, under(args.out_dir, "checkpoint.mlck"));

  std::size_t patches = 0;
  for (const auto& s : manifest.samples) patches += s.patch_paths.size();

  Json report = base_report("train", config);
  report["manifest"] = args.manifest_path;
  report["classes"] = manifest.classes;
  report["samples"] = manifest.samples.size();
  report["patches"] = patches;
  report["epochs"] = model.history.size();
  report["stopping_reason"] = model.stopping_reason;
  if (model.history.empty()) {
    report["final"] = nullptr;
    report["best_val_loss"] = nullptr;
  } else {
    double best = model.history.front().val_loss;
    for (const auto& e : model.history) best = std::min(best, e.val_loss);
    const EpochStats& last = model.history.back();
    Json fin;
    fin["train_loss"] = last.train_loss;
    fin["val_loss"] = last.val_loss;
    fin["val_accuracy"] = last.val_accuracy;
    report["final"] = std::move(fin);
    report["best_val_loss"] = best;
  }
  report["checkpoint"] = "checkpoint.mlck";
  report["log"] = "training_log.tsv";
  write_report(report, under(args.out_dir, "report.json"));
  log << "trained " << model.history.size() << " epochs (" << model.stopping_reason << ") on "
      << manifest.samples.size() << " samples\n";
  return report;
}

namespace {

struct FoldOutcome {
  std::vector<int> test_indices;           // global sample indices, ascending
  std::vector<Tensor> probabilities;       // parallel to test_indices
  std::size_t epochs = 0;
  std::string stopping_reason;
  double best_val_loss = 0.0;
  double accuracy = 0.0;
  std::vector<std::pair<std::size_t, Tensor>> cell_scores;  // (cell index, probs)
};

}  // namespace

Json cmd_crossval(const CrossvalArgs& args, const RunConfig& config, std::ostream& log) {
  if (args.k < 2) throw ConfigError("crossval needs k >= 2, got " + std::to_string(args.k));
  if (args.jobs < 1) throw ConfigError("jobs must be positive, got " + std::to_string(args.jobs));

  const DatasetManifest manifest = load_manifest(args.manifest_path);
  CellAnnotationSet cells;
  const bool have_cells = !args.cells_path.empty();
  if (have_cells) {
    cells = load_cell_annotations(args.cells_path);
    if (cells.cell_classes.size() != manifest.classes.size())
      throw DataError("cell label space " + quote_list(cells.cell_classes) +
                      " does not pair with sample label space " + quote_list(manifest.classes) +
                      " (classes pair by position)");
  }
  ensure_dir(args.out_dir);

  std::vector<std::string> labels;
  labels.reserve(manifest.samples.size());
  for (const auto& s : manifest.samples) labels.push_back(s.label);
  const CvSplit split = kfold(labels, args.k, config.train.seed);

  // Cells grouped by owning sample so each fold scores exactly the cells of
  // its held-out samples.
  std::unordered_map<std::string, std::vector<std::size_t>> cells_by_sample;
  for (std::size_t i = 0; i < cells.items.size(); ++i)
    cells_by_sample[cells.items[i].sample_id].push_back(i);

  std::vector<FoldOutcome> outcomes(static_cast<std::size_t>(args.k));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(args.k));
  std::atomic<int> next_fold{0};

  auto run_fold = [&](int fold, PatchCache& cache) {
    std::vector<Sample> train_set;
    std::vector<int> test_indices;
    for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
      if (split.fold[i] == fold)
        test_indices.push_back(static_cast<int>(i));
      else
        train_set.push_back(manifest.samples[i]);
    }
    const std::string tag = "fold" + std::to_string(fold);
    std::ofstream fold_log(under(args.out_dir, tag + "_log.tsv"), std::ios::binary);
    if (!fold_log)
      throw IoError("cannot open '" + under(args.out_dir, tag + "_log.tsv") + "' for writing");
    TrainedModel model = train(train_set, manifest.classes, config.train, config.backbone,
                               config.aug, cache, &fold_log, config.head_width1,
                               config.head_width2);
    fold_log.flush();
    if (!fold_log) throw IoError("write to fold log failed");
    save_checkpoint(model, config.train.seed, under(args.out_dir, tag + ".mlck"));

    FoldOutcome& out = outcomes[static_cast<std::size_t>(fold)];
    out.test_indices = test_indices;
    out.epochs = model.history.size();
    out.stopping_reason = model.stopping_reason;
    if (!model.history.empty()) {
      out.best_val_loss = model.history.front().val_loss;
      for (const auto& e : model.history)
        out.best_val_loss = std::min(out.best_val_loss, e.val_loss);
    }

    int hits = 0;
    for (int idx : test_indices) {
      const Sample& sample = manifest.samples[static_cast<std::size_t>(idx)];
      Rng rng = Rng::derive(config.train.seed,
                            {fnv1a64("tta"), static_cast<std::uint64_t>(fold),
                             static_cast<std::uint64_t>(idx)});
      Tensor probs = evaluate_with_tta(model.params, sample, config.aug,
                                       config.train.tta_replicas, rng, cache);
      hits += manifest.classes[static_cast<std::size_t>(argmax_index(probs))] == sample.label;
      out.probabilities.push_back(std::move(probs));
    }
    out.accuracy = test_indices.empty() ? 0.0 : static_cast<double>(hits) / test_indices.size();

    for (int idx : test_indices) {
      auto it = cells_by_sample.find(manifest.samples[static_cast<std::size_t>(idx)].sample_id);
      if (it == cells_by_sample.end()) continue;
      for (std::size_t ci : it->second) {
        const PatchImage patch = load_patch(cells.items[ci].patch_path, cache);
        out.cell_scores.emplace_back(ci, score_cell(patch, model.params));
      }
    }
  };

  const int workers = std::min(args.jobs, args.k);
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      PatchCache cache;
      for (;;) {
        const int fold = next_fold.fetch_add(1);
        if (fold >= args.k) return;
        try {
          run_fold(fold, cache);
        } catch (...) {
          errors[static_cast<std::size_t>(fold)] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  // Merge in fold order.
  const std::size_t n = manifest.samples.size();
  std::vector<Tensor> probs_by_sample(n);
  std::vector<int> fold_by_sample(n, -1);
  std::vector<double> fold_accuracies;
  std::vector<std::vector<double>> fold_sample_auc(manifest.classes.size());
  Json folds = Json::array();
  for (int f = 0; f < args.k; ++f) {
    const FoldOutcome& out = outcomes[static_cast<std::size_t>(f)];
    fold_accuracies.push_back(out.accuracy);
    Json fj;
    fj["fold"] = f;
    fj["train_samples"] = n - out.test_indices.size();
    fj["test_samples"] = out.test_indices.size();
    fj["epochs"] = out.epochs;
    fj["stopping_reason"] = out.stopping_reason;
    fj["best_val_loss"] = out.best_val_loss;
    fj["accuracy"] = out.accuracy;
    Json auc_j;
    for (std::size_t c = 0; c < manifest.classes.size(); ++c) {
      std::vector<double> scores;
      std::vector<int> truth;
      for (std::size_t i = 0; i < out.test_indices.size(); ++i) {
        scores.push_back(out.probabilities[i].data[c]);
        truth.push_back(
            manifest.samples[static_cast<std::size_t>(out.test_indices[i])].label ==
                    manifest.classes[c]
                ? 1
                : 0);
      }
      try {
        const RocCurve roc = roc_auc(scores, truth);
        auc_j[manifest.classes[c]] = roc.auc;
        fold_sample_auc[c].push_back(roc.auc);
      } catch (const UndefinedMetricError&) {
        auc_j[manifest.classes[c]] = nullptr;
      }
    }
    fj["sample_auc"] = std::move(auc_j);
    folds.push_back(std::move(fj));
    for (std::size_t i = 0; i < out.test_indices.size(); ++i) {
      const auto idx = static_cast<std::size_t>(out.test_indices[i]);
      probs_by_sample[idx] = out.probabilities[i];
      fold_by_sample[idx] = f;
    }
  }

  // Pooled confusion over every sample's held-out prediction.
  std::vector<std::string> preds, truths;
  for (std::size_t i = 0; i < n; ++i) {
    preds.push_back(manifest.classes[static_cast<std::size_t>(argmax_index(probs_by_sample[i]))]);
    truths.push_back(manifest.samples[i].label);
  }
  const ConfusionMatrix pooled = confusion(preds, truths, manifest.classes);

  // sample_scores.csv in manifest order, independent of fold scheduling.
  std::string csv = "sample_id,label,fold,predicted" + prob_header(manifest.classes) + "\n";
  for (std::size_t i = 0; i < n; ++i) {
    csv += manifest.samples[i].sample_id + "," + manifest.samples[i].label + "," +
           std::to_string(fold_by_sample[i]) + "," + preds[i] + prob_cells(probs_by_sample[i]) +
           "\n";
  }
  write_file(under(args.out_dir, "sample_scores.csv"), csv);

  const Aggregate acc = aggregate_cv(fold_accuracies);

  Json report = base_report("crossval", config);
  report["manifest"] = args.manifest_path;
  report["cells"] = have_cells ? Json(args.cells_path) : Json(nullptr);
  report["k"] = args.k;
  report["classes"] = manifest.classes;
  report["samples"] = n;
  report["folds"] = std::move(folds);
  report["mean_sample_accuracy"] = acc.mean;
  report["accuracy_summary"] = format_aggregate(acc);
  Json auc_mean;
  for (std::size_t c = 0; c < manifest.classes.size(); ++c) {
    if (fold_sample_auc[c].empty())
      auc_mean[manifest.classes[c]] = nullptr;
    else
      auc_mean[manifest.classes[c]] = aggregate_cv(fold_sample_auc[c]).mean;
  }
  report["sample_auc_mean"] = std::move(auc_mean);
  report["pooled_confusion"] = confusion_json(pooled);

  if (have_cells) {
    // Each annotated cell is scored once, by the fold that held its sample out.
    std::vector<Tensor> cell_probs(cells.items.size());
    std::vector<bool> scored(cells.items.size(), false);
    for (int f = 0; f < args.k; ++f)
      for (const auto& [ci, probs] : outcomes[static_cast<std::size_t>(f)].cell_scores) {
        cell_probs[ci] = probs;
        scored[ci] = true;
      }
    std::size_t n_scored = 0;
    for (bool b : scored) n_scored += b;
    if (n_scored < cells.items.size())
      log << "#warning: " << cells.items.size() - n_scored
          << " cells reference samples outside the manifest and were not scored\n";

    Json cell_auc;
    Json roc_files;
    for (std::size_t c = 0; c < cells.cell_classes.size(); ++c) {
      std::vector<double> scores;
      std::vector<int> truth;
      for (std::size_t ci = 0; ci < cells.items.size(); ++ci) {
        if (!scored[ci]) continue;
        scores.push_back(cell_probs[ci].data[c]);
        truth.push_back(cells.items[ci].cell_label == cells.cell_classes[c] ? 1 : 0);
      }
      try {
        const RocCurve roc = roc_auc(scores, truth);
        const std::string file = "cell_roc_" + cells.cell_classes[c] + ".csv";
        write_roc_csv(roc, under(args.out_dir, file));
        cell_auc[cells.cell_classes[c]] = roc.auc;
        roc_files[cells.cell_classes[c]] = file;
      } catch (const UndefinedMetricError&) {
        cell_auc[cells.cell_classes[c]] = nullptr;
        roc_files[cells.cell_classes[c]] = nullptr;
      }
    }
    report["cells_scored"] = n_scored;
    report["cell_auc"] = std::move(cell_auc);
    report["cell_roc"] = std::move(roc_files);
  } else {
    report["cells_scored"] = nullptr;
    report["cell_auc"] = nullptr;
    report["cell_roc"] = nullptr;
  }
  report["sample_scores"] = "sample_scores.csv";
  write_report(report, under(args.out_dir, "report.json"));

  for (int f = 0; f < args.k; ++f) {
    const FoldOutcome& out = outcomes[static_cast<std::size_t>(f)];
    log << "fold " << f << ": " << out.epochs << " epochs (" << out.stopping_reason
        << "), accuracy " << fmt_prob(out.accuracy) << "\n";
  }
  log << "crossval mean accuracy " << format_aggregate(acc) << "\n";
  return report;
}

Json cmd_predict(const PredictArgs& args, const RunConfig& config, std::ostream& log) {
  CheckpointMeta meta;
  const ModelParams params = load_checkpoint(args.checkpoint_path, &meta);
  const DatasetManifest manifest = load_manifest(args.manifest_path);
  if (manifest.classes != meta.class_names)
    throw DataError("checkpoint label space " + quote_list(meta.class_names) +
                    " does not match manifest label space " + quote_list(manifest.classes));
  ensure_dir(args.out_dir);

  PatchCache cache;
  std::vector<std::string> preds, truths;
  std::string csv = "sample_id,label,predicted" + prob_header(manifest.classes) + "\n";
  for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
    const Sample& sample = manifest.samples[i];
    Rng rng =
        Rng::derive(config.train.seed, {fnv1a64("predict"), static_cast<std::uint64_t>(i)});
    const Tensor probs = evaluate_with_tta(params, sample, config.aug,
                                           config.train.tta_replicas, rng, cache);
    const std::string pred = manifest.classes[static_cast<std::size_t>(argmax_index(probs))];
    preds.push_back(pred);
    truths.push_back(sample.label);
    csv += sample.sample_id + "," + sample.label + "," + pred + prob_cells(probs) + "\n";
  }
  write_file(under(args.out_dir, "predictions.csv"), csv);

  const ConfusionMatrix cm = confusion(preds, truths, manifest.classes);
  Json report = base_report("predict", config);
  report["checkpoint"] = args.checkpoint_path;
  report["manifest"] = args.manifest_path;
  report["classes"] = manifest.classes;
  report["samples"] = manifest.samples.size();
  report["tta_replicas"] = config.train.tta_replicas;
  report["accuracy"] = cm.accuracy();
  report["confusion"] = confusion_json(cm);
  report["predictions"] = "predictions.csv";
  write_report(report, under(args.out_dir, "report.json"));
  log << "predicted " << manifest.samples.size() << " samples, accuracy "
      << fmt_prob(cm.accuracy()) << "\n";
  return report;
}

Json cmd_score_cells(const ScoreCellsArgs& args, const RunConfig& config, std::ostream& log) {
  CheckpointMeta meta;
  const ModelParams params = load_checkpoint(args.checkpoint_path, &meta);

  // Input is either an annotation file or a bare directory of patches; the
  // directory form yields scores only, with no truth-dependent metrics.
  CellAnnotationSet cells;
  const bool annotated = !fs::is_directory(args.cells_path);
  if (annotated) {
    cells = load_cell_annotations(args.cells_path);
    if (cells.cell_classes.size() != meta.class_names.size())
      throw DataError("cell label space " + quote_list(cells.cell_classes) +
                      " does not pair with checkpoint label space " +
                      quote_list(meta.class_names) + " (classes pair by position)");
  } else {
    cells.cell_classes = meta.class_names;
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(args.cells_path)) {
      if (!entry.is_regular_file()) continue;
      std::string ext = entry.path().extension().string();
      for (auto& ch : ext) ch = static_cast<char>(std::tolower(ch));
      if (ext == ".png" || ext == ".bmp") files.push_back(entry.path().generic_string());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("no patch images in directory '" + args.cells_path + "'");
    for (auto& f : files) cells.items.push_back(CellAnnotation{std::move(f), "", ""});
  }
  ensure_dir(args.out_dir);

  PatchCache cache;
  std::vector<Tensor> all_probs;
  std::vector<std::string> preds, truths;
  std::string csv = "patch,label,sample_id,predicted" + prob_header(cells.cell_classes) + "\n";
  for (const auto& item : cells.items) {
    const Tensor probs = score_cell(load_patch(item.patch_path, cache), params);
    const std::string pred = cells.cell_classes[static_cast<std::size_t>(argmax_index(probs))];
    preds.push_back(pred);
    truths.push_back(item.cell_label);
    csv += item.patch_path + "," + item.cell_label + "," + item.sample_id + "," + pred +
           prob_cells(probs) + "\n";
    all_probs.push_back(probs);
  }
  write_file(under(args.out_dir, "cell_scores.csv"), csv);

  Json report = base_report("score-cells", config);
  report["checkpoint"] = args.checkpoint_path;
  report["cells"] = args.cells_path;
  report["cell_classes"] = cells.cell_classes;
  report["items"] = cells.items.size();
  if (annotated) {
    const ConfusionMatrix cm = confusion(preds, truths, cells.cell_classes);
    Json auc_j;
    Json roc_files;
    for (std::size_t c = 0; c < cells.cell_classes.size(); ++c) {
      std::vector<double> scores;
      std::vector<int> truth;
      for (std::size_t i = 0; i < cells.items.size(); ++i) {
        scores.push_back(all_probs[i].data[c]);
        truth.push_back(cells.items[i].cell_label == cells.cell_classes[c] ? 1 : 0);
      }
      try {
        const RocCurve roc = roc_auc(scores, truth);
        const std::string file = "roc_" + cells.cell_classes[c] + ".csv";
        write_roc_csv(roc, under(args.out_dir, file));
        auc_j[cells.cell_classes[c]] = roc.auc;
        roc_files[cells.cell_classes[c]] = file;
      } catch (const UndefinedMetricError&) {
        auc_j[cells.cell_classes[c]] = nullptr;
        roc_files[cells.cell_classes[c]] = nullptr;
      }
    }
    report["accuracy"] = cm.accuracy();
    report["confusion"] = confusion_json(cm);
    report["auc"] = std::move(auc_j);
    report["roc"] = std::move(roc_files);
  } else {
    report["accuracy"] = nullptr;
    report["confusion"] = nullptr;
    report["auc"] = nullptr;
    report["roc"] = nullptr;
  }
  report["scores"] = "cell_scores.csv";
  write_report(report, under(args.out_dir, "report.json"));
  log << "scored " << cells.items.size() << " cells\n";
  return report;
}

Json cmd_pca(const PcaArgs& args, const RunConfig& config, std::ostream& log) {
  CheckpointMeta meta;
  const ModelParams params = load_checkpoint(args.checkpoint_path, &meta);
  const DatasetManifest manifest = load_manifest(args.manifest_path);
  const std::string layer_name = args.layer == "conv" ? "post-fusion-conv" : args.layer;
  const EmbeddingLayer layer = parse_embedding_layer(layer_name);
  ensure_dir(args.out_dir);

  std::unordered_map<std::string, std::string> cell_label_by_path;
  const bool have_cells = !args.cells_path.empty();
  if (have_cells) {
    const CellAnnotationSet cells = load_cell_annotations(args.cells_path);
    for (const auto& item : cells.items) cell_label_by_path[item.patch_path] = item.cell_label;
  }

  PatchCache cache;
  std::vector<std::vector<double>> vectors;
  std::vector<std::string> ids, point_labels;
  std::size_t skipped = 0;
  for (const auto& sample : manifest.samples) {
    for (const auto& path : sample.patch_paths) {
      std::string label = sample.label;
      if (have_cells) {
        auto it = cell_label_by_path.find(path);
        if (it == cell_label_by_path.end()) {
          ++skipped;
          continue;
        }
        label = it->second;
      }
      const Tensor emb = extract_embedding(load_patch(path, cache), params, layer);
      vectors.emplace_back(emb.data.begin(), emb.data.end());
      ids.push_back(path);
      point_labels.push_back(label);
    }
  }
  if (have_cells && skipped)
    log << "#warning: " << skipped << " patches have no cell annotation and were skipped\n";
  if (vectors.size() < 3)
    throw DataError("pca needs at least 3 patches, got " + std::to_string(vectors.size()));

  const PcaProjection pca = pca_project(vectors, config.metrics.pca_dims);
  write_pca_csv(pca, ids, point_labels, under(args.out_dir, "pca.csv"));
  write_pca_svg(pca, point_labels, under(args.out_dir, "pca.svg"));

  // Silhouette over the projected coordinates, labels in first-seen order.
  std::vector<std::string> label_space;
  std::vector<int> int_labels;
  for (const auto& l : point_labels) {
    auto it = std::find(label_space.begin(), label_space.end(), l);
    if (it == label_space.end()) {
      label_space.push_back(l);
      int_labels.push_back(static_cast<int>(label_space.size()) - 1);
    } else {
      int_labels.push_back(static_cast<int>(it - label_space.begin()));
    }
  }
  Json silhouette_j = nullptr;
  if (label_space.size() >= 2) {
    try {
      silhouette_j = silhouette(pca.coords, int_labels);
    } catch (const UndefinedMetricError&) {
      silhouette_j = nullptr;
    }
  }

  Json report = base_report("pca", config);
  report["checkpoint"] = args.checkpoint_path;
  report["manifest"] = args.manifest_path;
  report["cells"] = have_cells ? Json(args.cells_path) : Json(nullptr);
  report["layer"] = layer_name;
  report["points"] = vectors.size();
  report["dims"] = config.metrics.pca_dims;
  report["explained"] = pca.explained;
  report["silhouette"] = std::move(silhouette_j);
  report["labels"] = label_space;
  report["csv"] = "pca.csv";
  report["svg"] = "pca.svg";
  write_report(report, under(args.out_dir, "report.json"));
  log << "projected " << vectors.size() << " patches onto " << config.metrics.pca_dims
      << " axes\n";
  return report;
}

Json cmd_synth(const SynthArgs& args, const RunConfig& config, std::ostream& log) {
  const SyntheticDataset ds = generate_synthetic(config.synth, args.out_dir);
  std::size_t glyphs = 0;
  for (const auto& f : ds.fields) glyphs += f.glyphs.size();

  Json report = base_report("synth", config);
  report["classes"] = ds.manifest.classes;
  report["cell_classes"] = ds.cells.cell_classes;
  report["samples"] = ds.manifest.samples.size();
  report["fields"] = ds.fields.size();
  report["glyphs"] = glyphs;
  report["cells"] = ds.cells.items.size();
  report["manifest"] = "manifest.tsv";
  report["cells_listing"] = "cells.tsv";
  report["fields_listing"] = "fields.tsv";
  write_report(report, under(args.out_dir, "report.json"));
  log << "generated " << ds.manifest.samples.size() << " samples, " << ds.fields.size()
      << " fields, " << glyphs << " glyphs\n";
  return report;
}

}  // namespace millie
