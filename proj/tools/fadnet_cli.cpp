// fadnet command-line tool.
//
//   fadnet_cli gradcheck
//   fadnet_cli train --synthetic --seed 7 --out run
//   fadnet_cli infer --model run --data-dir run/data --out run/results
//   fadnet_cli eval --results run/results --labels run/data --metric ap3d --iou 0.7 --interp r40
//   fadnet_cli stats consistency --results run/results --labels run/data
//   fadnet_cli stats depth-rows --labels run/data
//   fadnet_cli remake-labels --in kitti/training --out kitti_remade
//
// Exit codes: 2 usage error, 1 runtime failure, 0 success.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "fadnet/checkpoint.hpp"
#include "fadnet/dataset.hpp"
#include "fadnet/decode.hpp"
#include "fadnet/errors.hpp"
#include "fadnet/gradcheck_sweep.hpp"
#include "fadnet/log.hpp"
#include "fadnet/metrics.hpp"
#include "fadnet/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace fadnet;

namespace {

const std::vector<std::string> kVariantNames = {"full", "baseline", "fa", "dh", "reversed"};

// Everything inference needs besides the weights.
struct RunInfo {
  ModelConfig model;
  std::vector<std::string> categories;
  DimensionTemplate dims;
  ImageNormalizer normalizer;
};

void write_run_info(const fs::path& path, const RunInfo& info) {
  json j;
  j["model"] = format_model_config(info.model);
  j["categories"] = info.categories;
  j["dims"] = info.dims.dims;
  j["normalizer"] = {{"mean", info.normalizer.mean}, {"stddev", info.normalizer.stddev}};
  std::ofstream(path) << j.dump(2) << '\n';
}

RunInfo read_run_info(const fs::path& path) {
  const json j = json::parse(read_text_file(path));
  RunInfo info;
  info.model = parse_model_config(j.at("model").get<std::string>());
  info.categories = j.at("categories").get<std::vector<std::string>>();
  info.dims.dims = j.at("dims").get<std::vector<std::array<double, 3>>>();
  info.normalizer.mean = j.at("normalizer").at("mean").get<std::array<double, 3>>();
  info.normalizer.stddev = j.at("normalizer").at("stddev").get<std::array<double, 3>>();
  return info;
}

std::set<std::string> read_id_list(const fs::path& path) {
  std::set<std::string> ids;
  std::istringstream in(read_text_file(path));
  for (std::string id; in >> id;) ids.insert(id);
  return ids;
}

// Result files per frame id, parsed from <dir>/<id>.txt.
std::map<std::string, std::vector<ObjectLabel>> read_results(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ParameterError("results directory not found: " + dir.string());
  std::map<std::string, std::vector<ObjectLabel>> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() != ".txt") continue;
    try {
      out[e.path().stem().string()] = parse_result_file(read_text_file(e.path()));
    } catch (const ParseError& err) {
      throw ParseError(e.path().string() + ": " + err.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

struct GradcheckArgs {
  std::uint64_t seed = 1;
  bool no_model = false;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  SweepOptions opt;
  opt.seed = a.seed;
  opt.include_model = !a.no_model;
  bool ok = true;
  gradcheck_sweep(opt, [&](const SweepResult& r) {
    ok = ok && r.passed();
    std::cout << (r.passed() ? "PASS " : "FAIL ") << r.name << ": max rel " << r.report.max_rel_error << " (tol "
              << r.tol << ", worst " << r.report.worst << ", " << r.seconds << " s)";
    for (const auto& e : r.report.evaluation_errors) std::cout << " error: " << e;
    std::cout << std::endl;
  });
  return ok ? 0 : 1;
}

struct TrainArgs {
  std::string config;
  std::string data_dir;
  std::string split_dir;
  bool synthetic = false;
  bool all_frames = false;
  std::size_t frames = 8;
  std::size_t objects = 3;
  std::uint64_t seed = 0;
  std::string variant = "full";
  std::string schedule = "desk";
  std::size_t passes = 1;
  std::string out = "run";
};

int cmd_train(const TrainArgs& a) {
  ModelConfig mc;
  if (!a.config.empty()) {
    mc = parse_model_config(read_text_file(a.config));
  } else if (a.synthetic) {
    mc.height = 64;
    mc.width = 128;
    mc.backbone_width = 32;
  }
  mc.seed = a.seed;
  mc = apply_variant(mc, parse_variant(a.variant));
  mc.validate();

  fs::create_directories(a.out);
  Dataset ds;
  if (a.synthetic) {
    SyntheticConfig sc;
    sc.height = mc.height;
    sc.width = mc.width;
    ds = synthetic_dataset(a.seed, a.frames, a.objects, sc);
    // Held-out frames from a different seed, written in KITTI layout.
    for (const auto& s : generate_synthetic(a.seed + 1000003, a.frames, a.objects, sc))
      save_kitti_frame(fs::path(a.out) / "data", s.frame);
  } else {
    const fs::path root = resolve_data_dir(a.data_dir.empty() ? std::nullopt : std::optional<fs::path>(a.data_dir));
    TargetConfig tcfg;
    tcfg.height = mc.height;
    tcfg.width = mc.width;
    auto loaded = load_frames(root, mc.height, mc.width, tcfg.categories);
    if (loaded.rendered > 0) log_warning(std::to_string(loaded.rendered) + " frames have no PNG; rendered from labels");
    if (!a.all_frames) {
      std::vector<std::string> ids;
      for (const auto& f : loaded.frames) ids.push_back(f.id);
      const Split split = split_3dop(ids, a.seed, a.split_dir);
      const std::set<std::string> train(split.train.begin(), split.train.end());
      std::vector<KittiFrame> frames;
      std::vector<Tensor> images;
      for (std::size_t i = 0; i < loaded.frames.size(); ++i) {
        if (!train.count(loaded.frames[i].id)) continue;
        frames.push_back(std::move(loaded.frames[i]));
        images.push_back(std::move(loaded.images[i]));
      }
      std::ofstream val(fs::path(a.out) / "val_ids.txt");
      for (const auto& id : split.val) val << id << '\n';
      loaded.frames = std::move(frames);
      loaded.images = std::move(images);
    }
    ds = make_dataset(std::move(loaded.frames), std::move(loaded.images), tcfg);
  }
  if (ds.size() == 0) throw ParameterError("no training frames");

  FadNet net(mc);
  TrainConfig tc;
  if (a.schedule == "desk") {
    tc.schedule = StageSchedule::desk(mc);
  } else if (a.schedule == "full") {
    tc.schedule = StageSchedule::full_scale(mc);
  } else {
    throw ParameterError("unknown schedule: " + a.schedule);
  }
  tc.passes_per_epoch = a.passes;
  tc.seed = a.seed;
  write_run_info(fs::path(a.out) / "run.json", {mc, ds.target_config.categories, ds.target_config.dims, ds.normalizer});

  Trainer tr(net, ds, tc);
  tr.set_checkpoint_path(fs::path(a.out) / "last_good");
  std::ofstream log_csv(fs::path(a.out) / "train_log.csv");
  log_csv << format_log_header() << '\n';
  std::cout << format_log_header() << std::endl;
  try {
    tr.run([&](const EpochLog& r) {
      log_csv << format_log_row(r) << std::endl;
      std::cout << format_log_row(r) << std::endl;
    });
  } catch (const DivergenceError& e) {
    save_checkpoint(fs::path(a.out) / "model", net.parameters());
    throw;
  }
  save_checkpoint(fs::path(a.out) / "model", net.parameters());
  std::cout << "wrote " << (fs::path(a.out) / "model").string() << " (" << net.parameter_count() << " parameters)"
            << std::endl;
  return 0;
}

struct InferArgs {
  std::string model;
  std::string data_dir;
  std::string ids;
  std::string out = "results";
  double threshold = 0.25;
  std::size_t topk = 100;
};

int cmd_infer(const InferArgs& a) {
  const RunInfo info = read_run_info(fs::path(a.model) / "run.json");
  FadNet net(info.model);
  net.load_parameters(load_checkpoint(fs::path(a.model) / "model"));
  const fs::path root = resolve_data_dir(a.data_dir.empty() ? std::nullopt : std::optional<fs::path>(a.data_dir));
  const auto loaded = load_frames(root, info.model.height, info.model.width, info.categories);
  // Original calibration, used to map 2D boxes back to the source resolution.
  std::map<std::string, CameraIntrinsics> source_K;
  for (const auto& f : load_kitti_dir(root)) source_K[f.id] = f.intrinsics;
  const std::optional<std::set<std::string>> keep =
      a.ids.empty() ? std::nullopt : std::optional(read_id_list(a.ids));

  fs::create_directories(a.out);
  std::size_t n = 0, dets_total = 0, dropped = 0;
  for (std::size_t i = 0; i < loaded.frames.size(); ++i) {
    const KittiFrame& f = loaded.frames[i];
    if (keep && !keep->count(f.id)) continue;
    Tape tape;
    tape.set_recording(false);
    const NetworkOutput out = net.forward(tape, info.normalizer.apply(loaded.images[i]));
    auto res = decode_detections(out, extract_keypoints(out.heatmap, a.threshold, a.topk), f.intrinsics, info.dims);
    const CameraIntrinsics& K0 = source_K.at(f.id);
    const double sx = K0.fx / f.intrinsics.fx, sy = K0.fy / f.intrinsics.fy;
    for (auto& d : res.detections) {
      d.box2d = Box2D::from_ltrb((d.box2d.left() - f.intrinsics.u0) * sx + K0.u0,
                                 (d.box2d.top() - f.intrinsics.v0) * sy + K0.v0,
                                 (d.box2d.right() - f.intrinsics.u0) * sx + K0.u0,
                                 (d.box2d.bottom() - f.intrinsics.v0) * sy + K0.v0);
    }
    write_text_file(fs::path(a.out) / (f.id + ".txt"), format_label_file(detections_to_labels(res.detections, info.categories)));
    ++n;
    dets_total += res.detections.size();
    dropped += res.dropped;
  }
  std::cout << "wrote " << n << " result files to " << a.out << " (" << dets_total << " detections, " << dropped
            << " degenerate decodes dropped)" << std::endl;
  return 0;
}

struct EvalArgs {
  std::string results;
  std::string labels;
  std::string metric = "ap3d";
  double iou = 0.7;
  std::string interp = "r40";
  std::string category = "Car";
  bool remade_gt = false;
};

int cmd_eval(const EvalArgs& a) {
  const std::vector<std::string> categories = {"Car", "Pedestrian", "Cyclist"};
  const int cat = category_index(categories, a.category);
  if (cat < 0) throw ParameterError("unknown category: " + a.category);
  const auto results = read_results(a.results);
  std::vector<EvalImage> images;
  for (const auto& f : load_kitti_dir(a.labels)) {
    EvalImage im;
    im.ground_truth = ground_truth_from_labels(f.objects, categories,
                                               a.remade_gt ? std::optional(f.intrinsics) : std::nullopt);
    if (auto it = results.find(f.id); it != results.end()) im.detections = labels_to_detections(it->second, categories);
    images.push_back(std::move(im));
  }
  if (images.empty()) throw ParameterError("no label files under " + a.labels);

  const std::map<std::string, MetricKind> kinds = {
      {"ap2d", MetricKind::box2d}, {"apbev", MetricKind::bev}, {"ap3d", MetricKind::box3d}, {"aos", MetricKind::aos}};
  EvalConfig cfg;
  cfg.metric = kinds.at(a.metric);
  cfg.iou_threshold = a.iou;
  cfg.interpolation = a.interp == "r11" ? Interpolation::r11 : Interpolation::r40;
  cfg.category = cat;
  const std::map<std::string, std::string> names = {
      {"ap2d", "AP2D"}, {"apbev", "APBEV"}, {"ap3d", "AP3D"}, {"aos", "AOS"}};
  const std::string label = names.at(a.metric) + "|" + (a.interp == "r11" ? "R11" : "R40");
  std::vector<ReportRow> rows;
  for (auto d : {Difficulty::easy, Difficulty::moderate, Difficulty::hard}) {
    cfg.difficulty = d;
    cfg.validate();
    const double v = cfg.metric == MetricKind::aos ? aos(images, cfg) : average_precision(images, cfg);
    rows.push_back({label, d, a.iou, v});
  }
  std::cout << format_report_csv(rows);
  return 0;
}

struct StatsArgs {
  std::string results;
  std::string labels;
  int bucket = 32;
};

int cmd_consistency(const StatsArgs& a) {
  const auto results = read_results(a.results);
  std::map<std::string, CameraIntrinsics> K;
  for (const auto& f : load_kitti_dir(a.labels)) K[f.id] = f.intrinsics;
  const std::vector<std::string> categories = {"Car", "Pedestrian", "Cyclist"};
  // Frames have their own calibration, so buckets are pooled across frames.
  std::vector<DepthBucketStat> pooled;
  std::vector<double> sums;
  for (const auto& [id, rows] : results) {
    const auto it = K.find(id);
    if (it == K.end()) throw ParameterError("no calibration for result frame " + id);
    const auto st = consistency_stat(labels_to_detections(rows, categories), it->second);
    if (pooled.empty()) {
      pooled = st;
      sums.assign(st.size(), 0.0);
      for (auto& b : pooled) b.count = 0;
    }
    for (std::size_t i = 0; i < st.size(); ++i) {
      pooled[i].count += st[i].count;
      if (st[i].mean_iou) sums[i] += *st[i].mean_iou * static_cast<double>(st[i].count);
    }
  }
  std::cout << "depth_lower,depth_upper,count,mean_iou\n";
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    std::cout << pooled[i].lower << ',' << (std::isinf(pooled[i].upper) ? std::string("inf") : std::to_string(pooled[i].upper))
              << ',' << pooled[i].count << ',';
    if (pooled[i].count > 0) std::cout << sums[i] / static_cast<double>(pooled[i].count);
    std::cout << '\n';
  }
  return 0;
}

int cmd_depth_rows(const StatsArgs& a) {
  std::vector<ObjectLabel> labels;
  for (const auto& f : load_kitti_dir(a.labels))
    for (const auto& o : f.objects)
      if (!o.dont_care()) labels.push_back(o);
  std::cout << "row_start,count,mean_depth\n";
  for (const auto& r : depth_row_stat(labels, a.bucket)) std::cout << r.row_start << ',' << r.count << ',' << r.mean_depth << '\n';
  return 0;
}

struct RemakeArgs {
  std::string in;
  std::string out;
};

int cmd_remake(const RemakeArgs& a) {
  std::size_t changed = 0, kept = 0;
  for (auto f : load_kitti_dir(a.in)) {
    for (auto& o : f.objects) {
      if (o.dont_care()) {
        ++kept;
        continue;
      }
      try {
        o.set_box2d(remake_label_2d(o.box3d(), f.intrinsics));
        ++changed;
      } catch (const GeometryError&) {
        ++kept;  // box behind the camera: the stored 2D box stays
      }
    }
    save_kitti_frame(a.out, f);
  }
  std::cout << "remade " << changed << " 2D boxes, kept " << kept << " as stored" << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FADNet monocular 3D detection tool"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "debug, info, warning, error or off")
      ->check(CLI::IsMember({"debug", "info", "warning", "error", "off"}));

  GradcheckArgs ga;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable module");
  gc->add_option("--seed", ga.seed);
  gc->add_flag("--no-model", ga.no_model, "Skip the full-model case");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--config", ta.config, "Model config file (key=value lines)")->check(CLI::ExistingFile);
  tr->add_option("--data-dir", ta.data_dir, "KITTI training root (default $FADNET_DATA_DIR)");
  tr->add_option("--split-dir", ta.split_dir, "Directory with train.txt / val.txt");
  tr->add_flag("--synthetic", ta.synthetic, "Train on generated toy frames");
  tr->add_flag("--all-frames", ta.all_frames, "Train on every frame instead of the train split");
  tr->add_option("--frames", ta.frames, "Synthetic frame count")->check(CLI::PositiveNumber);
  tr->add_option("--objects", ta.objects, "Objects per synthetic frame")->check(CLI::PositiveNumber);
  tr->add_option("--seed", ta.seed);
  tr->add_option("--variant", ta.variant)->check(CLI::IsMember(kVariantNames));
  tr->add_option("--schedule", ta.schedule)->check(CLI::IsMember({"desk", "full"}));
  tr->add_option("--passes", ta.passes, "Passes over the data per epoch")->check(CLI::PositiveNumber);
  tr->add_option("--out", ta.out, "Output directory");

  InferArgs ia;
  auto* in = app.add_subcommand("infer", "Write KITTI result files");
  in->add_option("--model", ia.model, "Training output directory")->required()->check(CLI::ExistingDirectory);
  in->add_option("--data-dir", ia.data_dir, "KITTI-layout root (default $FADNET_DATA_DIR)");
  in->add_option("--ids", ia.ids, "Only frames listed in this file")->check(CLI::ExistingFile);
  in->add_option("--out", ia.out, "Result directory");
  in->add_option("--threshold", ia.threshold);
  in->add_option("--topk", ia.topk);

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "KITTI-style AP / AOS, one CSV row per difficulty");
  ev->add_option("--results", ea.results)->required();
  ev->add_option("--labels", ea.labels, "KITTI-layout root with label_2 and calib")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--metric", ea.metric)->check(CLI::IsMember({"ap2d", "apbev", "ap3d", "aos"}));
  ev->add_option("--iou", ea.iou)->check(CLI::Range(0.0, 1.0));
  ev->add_option("--interp", ea.interp)->check(CLI::IsMember({"r11", "r40"}));
  ev->add_option("--category", ea.category)->check(CLI::IsMember({"Car", "Pedestrian", "Cyclist"}));
  ev->add_flag("--remade-gt", ea.remade_gt, "Use 2D boxes remade from the 3D labels");

  StatsArgs sa;
  auto* st = app.add_subcommand("stats", "Dataset and prediction statistics");
  st->require_subcommand(1);
  auto* cons = st->add_subcommand("consistency", "2D/3D consistency of results by depth");
  cons->add_option("--results", sa.results)->required();
  cons->add_option("--labels", sa.labels, "KITTI-layout root (for calibration)")->required()->check(CLI::ExistingDirectory);
  auto* rows = st->add_subcommand("depth-rows", "Mean label depth by image row");
  rows->add_option("--labels", sa.labels)->required()->check(CLI::ExistingDirectory);
  rows->add_option("--bucket", sa.bucket, "Row bucket height in pixels")->check(CLI::PositiveNumber);

  RemakeArgs ra;
  auto* rm = app.add_subcommand("remake-labels", "Replace 2D boxes with projections of the 3D boxes");
  rm->add_option("--in", ra.in)->required()->check(CLI::ExistingDirectory);
  rm->add_option("--out", ra.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  const std::map<std::string, LogLevel> levels = {{"debug", LogLevel::debug},
                                                  {"info", LogLevel::info},
                                                  {"warning", LogLevel::warning},
                                                  {"error", LogLevel::error},
                                                  {"off", LogLevel::off}};
  set_log_level(levels.at(log_level));

  try {
    if (gc->parsed()) return cmd_gradcheck(ga);
    if (tr->parsed()) {
      if (ta.synthetic && !ta.data_dir.empty()) {
        std::cerr << "train: --synthetic and --data-dir are exclusive\n";
        return 2;
      }
      return cmd_train(ta);
    }
    if (in->parsed()) return cmd_infer(ia);
    if (ev->parsed()) return cmd_eval(ea);
    if (cons->parsed()) return cmd_consistency(sa);
    if (rows->parsed()) return cmd_depth_rows(sa);
    if (rm->parsed()) return cmd_remake(ra);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
