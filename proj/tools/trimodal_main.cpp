// SPDX-License-Identifier: Apache-2.0
//
// Command-line pipeline: dataset preparation, joint training, downstream
// evaluation, and static reports. Exit codes: 0 success, 1 runtime
// failure, 2 usage error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "trimodal/checkpoint.hpp"
#include "trimodal/dataprep.hpp"
#include "trimodal/eval.hpp"
#include "trimodal/experiment.hpp"
#include "trimodal/procgen.hpp"
#include "trimodal/report.hpp"
#include "trimodal/retrieval.hpp"
#include "trimodal/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace trimodal;

namespace {

struct PrepArgs {
  std::string manifest, out;
  int64_t points = 2048, faces = 1024, oversample = 4;
  int views = 24, width = 64, height = 64;
  double radius = 2.5, fov = 56.0;
  uint64_t seed = 0;
};

int run_prep(const PrepArgs& a) {
  DatasetConfig cfg;
  cfg.points = a.points;
  cfg.faces = a.faces;
  cfg.oversample = a.oversample;
  cfg.num_views = a.views;
  cfg.width = a.width;
  cfg.height = a.height;
  cfg.camera_radius = a.radius;
  cfg.fov_deg = a.fov;
  cfg.seed = a.seed;
  BuildReport r = build_dataset(a.manifest, a.out, cfg);
  std::printf("prepared %lld objects (%lld failed), %llu bytes -> %s\n",
              static_cast<long long>(r.succeeded), static_cast<long long>(r.failed),
              static_cast<unsigned long long>(r.bytes), a.out.c_str());
  return 0;
}

struct TrainArgs {
  std::string data, out, config_path;
  bool paper_scale = false;
  bool resume = false;
};

int run_train(const TrainArgs& a) {
  TrainConfig cfg;
  if (!a.config_path.empty()) cfg = load_train_config_file(a.config_path);
  if (a.paper_scale) {
    TrainConfig paper = TrainConfig::paper_scale();
    cfg.batch_size = paper.batch_size;
    cfg.iterations = paper.iterations;
    cfg.lr_decay_interval = paper.lr_decay_interval;
    cfg.checkpoint_every = paper.checkpoint_every;
    cfg.encoder.width_scale = 1.0;
  }
  std::printf("training config: k=%lld iterations=%lld lr=%g\n",
              static_cast<long long>(cfg.batch_size), static_cast<long long>(cfg.iterations),
              cfg.base_lr);
  ArchiveReader data(a.data);
  FitResult res = fit(data, cfg, a.out, a.resume);
  std::printf("final loss: L_MP=%.6f L_MI=%.6f L_PI=%.6f L_II=%.6f total=%.6f\n",
              res.final_loss.mesh_point, res.final_loss.mesh_image, res.final_loss.point_image,
              res.final_loss.image_image, res.final_loss.total);
  std::printf("checkpoint: %s\n", res.final_checkpoint.c_str());
  return 0;
}

struct EvalArgs {
  std::string task, checkpoint, data, train_data, out, rankings;
  std::string modality = "point";
  std::string source = "point", target = "mesh";
  std::string seg_train, seg_test, mode = "frozen";
  int views = 1, shots = 5, rounds = 10;
  int64_t seg_iterations = 240;
  double fraction = 0.01, svm_c = 1.0;
  uint64_t seed = 0;
};

std::pair<uint64_t, uint64_t> checkpoint_identity(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  json meta = json::parse(ck.metadata_json);
  return {meta.value("config_hash", 0ULL), meta.value("seed", 0ULL)};
}

int run_eval(const EvalArgs& a) {
  if (a.task != "probe" && a.task != "fewshot" && a.task != "partseg" &&
      a.task != "retrieval")
    throw CLI::ValidationError("eval", "unknown task: " + a.task);
  auto [hash, ck_seed] = checkpoint_identity(a.checkpoint);
  TriModalModel model = load_model_checkpoint(a.checkpoint);

  json metrics, extras;
  if (a.task == "probe") {
    if (a.train_data.empty())
      throw CLI::ValidationError("eval", "probe needs --train-data for the classifier");
    ArchiveReader train(a.train_data), test(a.data);
    Modality m = modality_from_name(a.modality);
    FeatureTable train_t =
        extract_feature_table(train, model, m, a.views, ViewAggregate::mean, a.seed);
    FeatureTable test_t =
        extract_feature_table(test, model, m, a.views, ViewAggregate::mean, a.seed + 1);
    double acc = linear_probe(train_t, test_t, a.svm_c, a.seed);
    metrics = {{"accuracy", acc}};
    extras = {{"modality", a.modality}, {"views", a.views}};
  } else if (a.task == "fewshot") {
    if (a.train_data.empty())
      throw CLI::ValidationError("eval", "fewshot needs --train-data for the classifier");
    ArchiveReader train(a.train_data), test(a.data);
    Modality m = modality_from_name(a.modality);
    FeatureTable train_t =
        extract_feature_table(train, model, m, a.views, ViewAggregate::max, a.seed);
    FeatureTable test_t =
        extract_feature_table(test, model, m, a.views, ViewAggregate::max, a.seed + 1);
    FewShotResult fs = few_shot_probe(train_t, test_t, a.shots, a.rounds, a.seed, a.svm_c);
    metrics = {{"mean_accuracy", fs.mean_accuracy}, {"std_accuracy", fs.std_accuracy}};
    extras = {{"modality", a.modality}, {"shots", a.shots}, {"rounds", a.rounds},
              {"views", a.views}};
  } else if (a.task == "partseg") {
    if (a.seg_train.empty() || a.seg_test.empty())
      throw CLI::ValidationError("eval", "partseg needs --seg-train and --seg-test archives");
    auto train = read_segmentation_archive(a.seg_train);
    auto test = read_segmentation_archive(a.seg_test);
    SegTransferConfig cfg;
    cfg.label_fraction = a.fraction;
    cfg.mode = seg_mode_from_name(a.mode);
    cfg.iterations = a.seg_iterations;
    cfg.seed = a.seed;
    SegmentationMetrics m = part_segmentation(model, train, test, cfg);
    metrics = {{"overall_accuracy", m.overall_accuracy},
               {"class_miou", m.class_miou},
               {"instance_miou", m.instance_miou}};
    extras = {{"fraction", a.fraction}, {"mode", a.mode}};
  } else if (a.task == "retrieval") {
    ArchiveReader data(a.data);
    Modality src = modality_from_name(a.source);
    Modality dst = modality_from_name(a.target);
    bool keep = !a.rankings.empty();
    RetrievalResult r = evaluate_retrieval(data, model, src, dst, a.views, a.seed, keep);
    metrics = {{"map", r.map}, {"queries", r.queries}, {"skipped", r.skipped}};
    extras = {{"source", a.source}, {"target", a.target}, {"views", a.views}};
    if (keep) {
      RetrievalIndex gallery = build_retrieval_index(data, model, dst, a.views,
                                                     derive_seed(a.seed, "gallery-side"));
      export_rankings_jsonl(a.rankings, r, gallery);
      extras["rankings"] = a.rankings;
    }
  }

  write_result_json(a.out, a.task, hash, ck_seed, metrics.dump(), extras.dump());
  std::printf("%s", read_file_text(a.out).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"modal- and view-invariant 3D feature learning pipeline"};
  app.require_subcommand(1);

  PrepArgs prep;
  CLI::App* prep_cmd = app.add_subcommand("prep", "build a dataset archive from a manifest");
  prep_cmd->add_option("--manifest", prep.manifest, "JSONL manifest")->required();
  prep_cmd->add_option("--out", prep.out, "output archive directory")->required();
  prep_cmd->add_option("--points", prep.points, "points per cloud");
  prep_cmd->add_option("--faces", prep.faces, "face budget per mesh");
  prep_cmd->add_option("--views", prep.views, "rendered views per object");
  prep_cmd->add_option("--width", prep.width, "render width");
  prep_cmd->add_option("--height", prep.height, "render height");
  prep_cmd->add_option("--oversample", prep.oversample, "surface oversample factor");
  prep_cmd->add_option("--radius", prep.radius, "camera sphere radius");
  prep_cmd->add_option("--fov", prep.fov, "vertical field of view (degrees)");
  prep_cmd->add_option("--seed", prep.seed, "dataset seed");

  TrainArgs train;
  CLI::App* train_cmd = app.add_subcommand("train", "run the joint contrastive training loop");
  train_cmd->add_option("--data", train.data, "dataset archive")->required();
  train_cmd->add_option("--out", train.out, "run directory (metrics, checkpoints)")->required();
  train_cmd->add_option("--config", train.config_path, "training config JSON");
  train_cmd->add_flag("--paper-scale", train.paper_scale, "full-scale schedule (k=96, 160k iters)");
  train_cmd->add_flag("--resume", train.resume, "resume from the latest checkpoint");

  EvalArgs eval;
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a downstream task");
  eval_cmd->add_option("--task", eval.task, "probe | fewshot | partseg | retrieval")->required();
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "checkpoint file")->required();
  eval_cmd->add_option("--data", eval.data, "test archive");
  eval_cmd->add_option("--train-data", eval.train_data, "train archive (probe/fewshot)");
  eval_cmd->add_option("--out", eval.out, "results JSON path")->required();
  eval_cmd->add_option("--modality", eval.modality, "mesh | point | image");
  eval_cmd->add_option("--views", eval.views, "views per image feature");
  eval_cmd->add_option("--shots", eval.shots, "few-shot examples per class");
  eval_cmd->add_option("--rounds", eval.rounds, "few-shot rounds");
  eval_cmd->add_option("--source", eval.source, "retrieval query modality");
  eval_cmd->add_option("--target", eval.target, "retrieval gallery modality");
  eval_cmd->add_option("--rankings", eval.rankings, "export per-query rankings JSONL");
  eval_cmd->add_option("--seg-train", eval.seg_train, "segmentation train archive");
  eval_cmd->add_option("--seg-test", eval.seg_test, "segmentation test archive");
  eval_cmd->add_option("--fraction", eval.fraction, "labeled fraction per category");
  eval_cmd->add_option("--mode", eval.mode, "frozen | unfrozen | scratch");
  eval_cmd->add_option("--seg-iterations", eval.seg_iterations, "segmentation head steps");
  eval_cmd->add_option("--svm-c", eval.svm_c, "probe SVM C");
  eval_cmd->add_option("--seed", eval.seed, "evaluation seed");

  std::vector<std::string> report_from;
  std::string report_out, report_data;
  CLI::App* report_cmd = app.add_subcommand("report", "render a static HTML report");
  report_cmd->add_option("--from", report_from, "result JSON files")->required();
  report_cmd->add_option("--out", report_out, "output HTML path")->required();
  report_cmd->add_option("--data", report_data, "archive for thumbnails");

  std::string gen_out, gen_prefix = "toy";
  int gen_per_family = 20;
  uint64_t gen_seed = 0;
  CLI::App* gen_cmd = app.add_subcommand("gen-manifest", "write a procedural toy manifest");
  gen_cmd->add_option("--out", gen_out, "manifest path")->required();
  gen_cmd->add_option("--per-family", gen_per_family, "objects per shape family");
  gen_cmd->add_option("--seed", gen_seed, "generator seed");
  gen_cmd->add_option("--prefix", gen_prefix, "object id prefix");

  std::string seg_out;
  int seg_per_family = 100;
  int64_t seg_points = 256;
  uint64_t seg_seed = 0;
  CLI::App* seg_cmd = app.add_subcommand("gen-partseg", "build a toy part-segmentation archive");
  seg_cmd->add_option("--out", seg_out, "archive directory")->required();
  seg_cmd->add_option("--per-family", seg_per_family, "shapes per family");
  seg_cmd->add_option("--points", seg_points, "points per shape");
  seg_cmd->add_option("--seed", seg_seed, "generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    if (*prep_cmd) return run_prep(prep);
    if (*train_cmd) return run_train(train);
    if (*eval_cmd) return run_eval(eval);
    if (*report_cmd) {
      render_report(report_from, report_out, report_data);
      std::printf("wrote %s\n", report_out.c_str());
      return 0;
    }
    if (*gen_cmd) {
      write_toy_manifest(gen_out, gen_per_family, gen_seed, gen_prefix);
      std::printf("wrote %s\n", gen_out.c_str());
      return 0;
    }
    if (*seg_cmd) {
      build_toy_segmentation_archive(seg_out, seg_per_family, seg_points, seg_seed);
      std::printf("wrote %s\n", seg_out.c_str());
      return 0;
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
