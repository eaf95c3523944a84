// Copyright 2026 The geoseg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "CLI11.hpp"
#include "geoseg/data.hpp"
#include "geoseg/eval.hpp"
#include "geoseg/fusion.hpp"
#include "geoseg/pipeline.hpp"
#include "geoseg/rng.hpp"
#include "json.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace geoseg;

struct Options {
  std::string config_path, dataset, checkpoint, out;
  uint64_t seed = 0;
  int n = 10;
  std::string repr = "full";
  bool oracle = false;  // evaluate: score ground truth as detections
  std::string fuse_2d, fuse_25d, fuse_3d;
  std::string loss_log;

  SceneConfig scene = SceneConfig::with_size(256, 128);
  TrainConfig train;
  double box_score_floor = 0.05;
};

ReprMode parse_repr(const std::string& s) {
  if (s == "2d") return ReprMode::k2D;
  if (s == "2d+25d") return ReprMode::k2D25D;
  if (s == "2d+3d") return ReprMode::k2D3D;
  if (s == "full") return ReprMode::kFull;
  throw CLI::ValidationError("--repr must be one of 2d, 2d+25d, 2d+3d, full");
}

// Flat dotted-key JSON config; unknown keys are rejected.
void apply_config(const std::string& path, Options& opt) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config: " + path);
  json j;
  f >> j;
  std::map<std::string, std::function<void(const json&)>> setters = {
      {"seed", [&](const json& v) { opt.seed = v.get<uint64_t>(); }},
      {"repr", [&](const json& v) { opt.repr = v.get<std::string>(); }},
      {"data.width", [&](const json& v) {
         SceneConfig fresh = SceneConfig::with_size(v.get<int>(), opt.scene.height);
         opt.scene.width = fresh.width;
         opt.scene.rig = fresh.rig;
       }},
      {"data.height", [&](const json& v) { opt.scene.height = v.get<int>(); }},
      {"data.min_instances",
       [&](const json& v) { opt.scene.min_instances = v.get<int>(); }},
      {"data.max_instances",
       [&](const json& v) { opt.scene.max_instances = v.get<int>(); }},
      {"data.min_depth_m",
       [&](const json& v) { opt.scene.min_depth_m = v.get<double>(); }},
      {"data.max_depth_m",
       [&](const json& v) { opt.scene.max_depth_m = v.get<double>(); }},
      {"data.overlap_prob",
       [&](const json& v) { opt.scene.overlap_prob = v.get<double>(); }},
      {"data.focal_length_px",
       [&](const json& v) { opt.scene.rig.focal_length_px = v.get<double>(); }},
      {"data.baseline_m",
       [&](const json& v) { opt.scene.rig.baseline_m = v.get<double>(); }},
      {"train.epochs", [&](const json& v) { opt.train.epochs = v.get<int>(); }},
      {"train.learning_rate",
       [&](const json& v) { opt.train.learning_rate = v.get<double>(); }},
      {"train.momentum",
       [&](const json& v) { opt.train.momentum = v.get<double>(); }},
      {"train.proposal_jitter",
       [&](const json& v) { opt.train.proposal_jitter = v.get<double>(); }},
      {"train.negatives_per_image",
       [&](const json& v) { opt.train.negatives_per_image = v.get<int>(); }},
      {"train.copies_per_instance",
       [&](const json& v) { opt.train.copies_per_instance = v.get<int>(); }},
      {"train.continuity_on_all_masks",
       [&](const json& v) { opt.train.continuity_on_all_masks = v.get<bool>(); }},
      {"model.channels",
       [&](const json& v) { opt.train.model.channels = v.get<int>(); }},
      {"model.grid", [&](const json& v) { opt.train.model.grid = v.get<int>(); }},
      {"model.n_points",
       [&](const json& v) { opt.train.model.n_points = v.get<int>(); }},
      {"model.standardize_disparity",
       [&](const json& v) {
         opt.train.model.standardize_disparity = v.get<bool>();
       }},
      {"weights.box",
       [&](const json& v) { opt.train.weights.w_box = v.get<double>(); }},
      {"weights.cls",
       [&](const json& v) { opt.train.weights.w_cls = v.get<double>(); }},
      {"weights.mask2d",
       [&](const json& v) { opt.train.weights.w_2dmask = v.get<double>(); }},
      {"weights.mask25d",
       [&](const json& v) { opt.train.weights.w_25dmask = v.get<double>(); }},
      {"weights.mask3d",
       [&](const json& v) { opt.train.weights.w_3dmask = v.get<double>(); }},
      {"weights.cont",
       [&](const json& v) { opt.train.weights.w_cont = v.get<double>(); }},
      {"weights.corr",
       [&](const json& v) { opt.train.weights.w_corr = v.get<double>(); }},
      {"weights.miou",
       [&](const json& v) { opt.train.weights.w_miou = v.get<double>(); }},
      {"infer.box_score_floor",
       [&](const json& v) { opt.box_score_floor = v.get<double>(); }},
  };
  for (auto it = j.begin(); it != j.end(); ++it) {
    auto s = setters.find(it.key());
    if (s == setters.end())
      throw std::runtime_error("unknown config key: " + it.key());
    s->second(it.value());
  }
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw CLI::ValidationError(msg);
}

json report_json(const eval::EvalResult& r) {
  return json{{"AP", r.ap},       {"AP50", r.ap50},        {"AP75", r.ap75},
              {"AP_S", r.ap_s},   {"AP_L", r.ap_l},
              {"gt_small", r.gt_small}, {"gt_large", r.gt_large}};
}

ScoredMask read_scored_mask(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open mask file: " + path);
  json j;
  f >> j;
  auto rows = j.at("mask").get<std::vector<std::vector<double>>>();
  ScoredMask sm;
  sm.mask = ProbMask(static_cast<int>(rows.size()));
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.size())
      throw std::runtime_error("mask grid is not square: " + path);
    for (size_t k = 0; k < rows[i].size(); ++k)
      sm.mask.at(static_cast<int>(i), static_cast<int>(k)) = rows[i][k];
  }
  sm.score = j.at("score").get<double>();
  return sm;
}

void write_scored_mask(const std::string& path, const ScoredMask& sm) {
  json rows = json::array();
  for (int i = 0; i < sm.mask.grid; ++i) {
    json row = json::array();
    for (int k = 0; k < sm.mask.grid; ++k) row.push_back(sm.mask.at(i, k));
    rows.push_back(row);
  }
  std::ofstream f(path);
  f << json{{"mask", rows}, {"score", sm.score}}.dump(2) << "\n";
  if (!f) throw std::runtime_error("cannot write mask file: " + path);
}

struct EvalArtifacts {
  std::vector<eval::Detection> dets;
  std::vector<eval::GroundTruth> gts;
  int width = 0, height = 0;
};

EvalArtifacts run_inference(const std::vector<SceneRecord>& scenes,
                            const Model& model, const InferConfig& icfg) {
  EvalArtifacts art;
  art.width = scenes.front().image.width;
  art.height = scenes.front().image.height;
  for (const SceneRecord& s : scenes) {
    if (s.image.width != art.width || s.image.height != art.height)
      throw std::runtime_error("evaluation requires uniform image sizes");
    for (eval::Detection d : infer(s, model, icfg)) {
      d.id = static_cast<int>(art.dets.size());
      art.dets.push_back(std::move(d));
    }
    for (auto& g : scene_ground_truth(s)) art.gts.push_back(std::move(g));
  }
  return art;
}

EvalArtifacts oracle_detections(const std::vector<SceneRecord>& scenes) {
  EvalArtifacts art;
  art.width = scenes.front().image.width;
  art.height = scenes.front().image.height;
  for (const SceneRecord& s : scenes) {
    for (auto& g : scene_ground_truth(s)) {
      eval::Detection d;
      d.box = g.box;
      d.category = g.category;
      d.box_score = 1.0;
      d.mask_score = 1.0;
      d.image_id = g.image_id;
      d.id = static_cast<int>(art.dets.size());
      // Crop the image-frame gt mask to box resolution.
      int bw = std::max(1, static_cast<int>(std::lround(g.box.width())));
      int bh = std::max(1, static_cast<int>(std::lround(g.box.height())));
      d.mask.width = bw;
      d.mask.height = bh;
      d.mask.v.assign(static_cast<size_t>(bw) * bh, 0);
      for (int y = 0; y < bh; ++y)
        for (int x = 0; x < bw; ++x) {
          int iy = std::clamp(static_cast<int>(g.box.y0) + y, 0, art.height - 1);
          int ix = std::clamp(static_cast<int>(g.box.x0) + x, 0, art.width - 1);
          d.mask.v[static_cast<size_t>(y) * bw + x] =
              g.mask.at(iy, ix) ? 1 : 0;
        }
      art.dets.push_back(std::move(d));
      art.gts.push_back(std::move(g));
    }
  }
  return art;
}

// ---- plotting helpers (static PNG charts via OpenCV drawing) ----

void draw_curve(cv::Mat& canvas, const std::vector<double>& xs,
                const std::vector<double>& ys, double x_max, double y_max,
                const cv::Scalar& color) {
  const int W = canvas.cols, H = canvas.rows, margin = 40;
  cv::Point prev;
  for (size_t i = 0; i < xs.size(); ++i) {
    int px = margin + static_cast<int>((W - 2 * margin) *
                                       (x_max > 0 ? xs[i] / x_max : 0.0));
    int py = H - margin -
             static_cast<int>((H - 2 * margin) *
                              (y_max > 0 ? ys[i] / y_max : 0.0));
    cv::Point pt(px, py);
    if (i > 0) cv::line(canvas, prev, pt, color, 1, cv::LINE_AA);
    prev = pt;
  }
}

cv::Mat chart_canvas(const std::string& title) {
  cv::Mat canvas(480, 640, CV_8UC3, cv::Scalar(255, 255, 255));
  cv::rectangle(canvas, {40, 40}, {600, 440}, cv::Scalar(0, 0, 0));
  cv::putText(canvas, title, {40, 28}, cv::FONT_HERSHEY_SIMPLEX, 0.6,
              cv::Scalar(0, 0, 0), 1, cv::LINE_AA);
  return canvas;
}

void plot_loss_log(const std::string& log_path, const fs::path& out_dir) {
  std::ifstream f(log_path);
  if (!f) throw std::runtime_error("cannot open loss log: " + log_path);
  std::vector<json> rows;
  std::string line;
  while (std::getline(f, line))
    if (!line.empty()) rows.push_back(json::parse(line));
  if (rows.empty()) throw std::runtime_error("empty loss log");

  static const char* terms[] = {"total", "cls",  "box",  "mask2d", "mask25d",
                                "mask3d", "cont", "corr", "miou"};
  static const cv::Scalar colors[] = {
      {0, 0, 0},     {200, 0, 0},   {0, 150, 0},   {0, 0, 220}, {180, 120, 0},
      {120, 0, 180}, {0, 160, 160}, {90, 90, 200}, {60, 60, 60}};
  cv::Mat canvas = chart_canvas("training loss per epoch");
  double y_max = 0.0;
  for (const json& r : rows)
    for (const char* t : terms)
      y_max = std::max(y_max, r.value(t, 0.0));
  for (size_t t = 0; t < std::size(terms); ++t) {
    std::vector<double> xs, ys;
    for (size_t i = 0; i < rows.size(); ++i) {
      xs.push_back(static_cast<double>(i));
      ys.push_back(rows[i].value(terms[t], 0.0));
    }
    draw_curve(canvas, xs, ys, static_cast<double>(rows.size() - 1), y_max,
               colors[t]);
    cv::putText(canvas, terms[t], {610 - 90, 60 + 18 * static_cast<int>(t)},
                cv::FONT_HERSHEY_SIMPLEX, 0.45, colors[t], 1, cv::LINE_AA);
  }
  cv::imwrite((out_dir / "loss_curves.png").string(), canvas);
}

void plot_pr_curves(const EvalArtifacts& art, const fs::path& out_dir) {
  cv::Mat canvas = chart_canvas("precision-recall @ IoU 0.5 (mask)");
  static const cv::Scalar colors[] = {{200, 0, 0}, {0, 150, 0}, {0, 0, 220}};
  std::vector<int> flags = eval::match_and_score(art.dets, art.gts, 0.5,
                                                 art.width, art.height);
  std::vector<int> order(art.dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return eval::ranking_score(art.dets[a]) > eval::ranking_score(art.dets[b]);
  });
  for (int cat = 0; cat < kNumCategories; ++cat) {
    int n_pos = 0;
    for (const auto& g : art.gts)
      if (g.category == cat) ++n_pos;
    if (n_pos == 0) continue;
    int tp = 0, fp = 0;
    std::vector<double> recall{0.0}, precision{1.0};
    for (int di : order) {
      if (art.dets[di].category != cat) continue;
      flags[di] == 1 ? ++tp : ++fp;
      recall.push_back(static_cast<double>(tp) / n_pos);
      precision.push_back(static_cast<double>(tp) / (tp + fp));
    }
    draw_curve(canvas, recall, precision, 1.0, 1.0, colors[cat]);
    cv::putText(canvas, kCategoryNames[cat],
                {520, 60 + 18 * cat}, cv::FONT_HERSHEY_SIMPLEX, 0.45,
                colors[cat], 1, cv::LINE_AA);
  }
  cv::imwrite((out_dir / "pr_curves.png").string(), canvas);
}

void plot_overlays(const std::vector<SceneRecord>& scenes, const Model& model,
                   const InferConfig& icfg, const fs::path& out_dir,
                   int max_scenes) {
  static const cv::Scalar palette[] = {
      {60, 60, 230}, {60, 200, 60}, {230, 80, 60},  {40, 180, 230},
      {200, 60, 200}, {60, 220, 220}, {160, 100, 40}, {230, 200, 40}};
  int plotted = 0;
  for (const SceneRecord& s : scenes) {
    if (plotted >= max_scenes) break;
    cv::Mat img(s.image.height, s.image.width, CV_8UC3);
    for (int y = 0; y < s.image.height; ++y)
      for (int x = 0; x < s.image.width; ++x) {
        const uint8_t* px = s.image.px(y, x);
        img.at<cv::Vec3b>(y, x) = cv::Vec3b(px[2], px[1], px[0]);
      }
    std::vector<eval::Detection> dets = infer(s, model, icfg);
    for (size_t di = 0; di < dets.size(); ++di) {
      eval::BinMask pasted = eval::paste_mask(dets[di].mask, dets[di].box,
                                              s.image.width, s.image.height);
      cv::Mat m(s.image.height, s.image.width, CV_8UC1);
      for (int y = 0; y < s.image.height; ++y)
        for (int x = 0; x < s.image.width; ++x)
          m.at<uint8_t>(y, x) = pasted.at(y, x) ? 255 : 0;
      std::vector<std::vector<cv::Point>> contours;
      cv::findContours(m, contours, cv::RETR_EXTERNAL, cv::CHAIN_APPROX_SIMPLE);
      cv::drawContours(img, contours, -1, palette[di % std::size(palette)], 1);
    }
    char name[32];
    std::snprintf(name, sizeof(name), "overlay_%04d.png", s.id);
    cv::imwrite((out_dir / name).string(), img);
    ++plotted;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"geometry-aware instance segmentation toolkit"};
  app.require_subcommand(1);
  Options opt;
  opt.scene = SceneConfig::with_size(256, 128);

  uint64_t flag_seed = 0;
  std::string flag_repr;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path,
                    "JSON config (flat dotted keys)");
    sub->add_option("--seed", flag_seed, "rng seed");
    sub->add_option("--repr", flag_repr,
                    "representations: 2d, 2d+25d, 2d+3d, full");
  };

  CLI::App* gen = app.add_subcommand("generate-data", "render synthetic scenes");
  gen->add_option("--n", opt.n, "number of scenes");
  gen->add_option("--out", opt.out, "output dataset directory")->required();
  add_common(gen);

  CLI::App* tr = app.add_subcommand("train", "train a model");
  tr->add_option("--dataset", opt.dataset, "dataset directory")->required();
  tr->add_option("--out", opt.out, "output directory")->required();
  add_common(tr);

  CLI::App* ev = app.add_subcommand("evaluate", "COCO-style AP report");
  ev->add_option("--dataset", opt.dataset, "dataset directory")->required();
  ev->add_option("--checkpoint", opt.checkpoint, "model checkpoint");
  ev->add_option("--out", opt.out, "output directory")->required();
  ev->add_flag("--oracle", opt.oracle,
               "score ground truth as detections (metric self-check)");
  add_common(ev);

  CLI::App* pr = app.add_subcommand("predict", "write detections as JSON");
  pr->add_option("--dataset", opt.dataset, "dataset directory")->required();
  pr->add_option("--checkpoint", opt.checkpoint, "model checkpoint")
      ->required();
  pr->add_option("--out", opt.out, "output directory")->required();
  add_common(pr);

  CLI::App* fu = app.add_subcommand("fuse", "fuse three stored scored masks");
  fu->add_option("--m2d", opt.fuse_2d, "2D scored-mask JSON")->required();
  fu->add_option("--m25d", opt.fuse_25d, "2.5D scored-mask JSON")->required();
  fu->add_option("--m3d", opt.fuse_3d, "3D scored-mask JSON")->required();
  fu->add_option("--out", opt.out, "output mask JSON")->required();

  CLI::App* pl = app.add_subcommand("plot", "loss/PR curves + mask overlays");
  pl->add_option("--loss-log", opt.loss_log, "loss log (JSONL) to plot");
  pl->add_option("--dataset", opt.dataset, "dataset for PR curves/overlays");
  pl->add_option("--checkpoint", opt.checkpoint, "model checkpoint");
  pl->add_option("--out", opt.out, "output directory")->required();
  add_common(pl);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (!opt.config_path.empty()) apply_config(opt.config_path, opt);
    CLI::App* sub = app.get_subcommands().front();
    const CLI::Option* o = sub->get_option_no_throw("--seed");
    if (o && o->count()) opt.seed = flag_seed;
    o = sub->get_option_no_throw("--repr");
    if (o && o->count()) opt.repr = flag_repr;

    ReprMode repr = parse_repr(opt.repr);
    opt.train.repr = repr;
    opt.train.seed = opt.seed;
    InferConfig icfg;
    icfg.repr = repr;
    icfg.seed = mix_seed(opt.seed, 0xabcdef);
    icfg.box_score_floor = opt.box_score_floor;

    if (gen->parsed()) {
      std::vector<SceneRecord> scenes;
      for (int i = 0; i < opt.n; ++i) {
        SceneRecord s = generate_scene(opt.scene, mix_seed(opt.seed, i));
        s.id = i;
        scenes.push_back(std::move(s));
      }
      write_dataset(scenes, opt.out);
      std::cout << "wrote " << scenes.size() << " scenes to " << opt.out
                << "\n";
    } else if (tr->parsed()) {
      std::vector<SceneRecord> scenes = read_dataset(opt.dataset);
      TrainResult result = train(scenes, opt.train);
      fs::create_directories(opt.out);
      result.model.save((fs::path(opt.out) / "checkpoint.bin").string());
      std::ofstream log(fs::path(opt.out) / "loss_log.jsonl");
      for (size_t e = 0; e < result.epoch_log.size(); ++e) {
        const LossReport& r = result.epoch_log[e];
        log << json{{"epoch", e},       {"box", r.box},
                    {"cls", r.cls},     {"mask2d", r.mask2d},
                    {"mask25d", r.mask25d}, {"mask3d", r.mask3d},
                    {"cont", r.cont},   {"corr", r.corr},
                    {"miou", r.miou},   {"total", r.total}}
                   .dump()
            << "\n";
      }
      std::cout << "trained " << opt.train.epochs << " epochs; final total "
                << result.epoch_log.back().total << "\n";
    } else if (ev->parsed()) {
      std::vector<SceneRecord> scenes = read_dataset(opt.dataset);
      EvalArtifacts art;
      if (opt.oracle) {
        art = oracle_detections(scenes);
      } else {
        require(!opt.checkpoint.empty(),
                "--checkpoint required unless --oracle");
        Model model = Model::load(opt.checkpoint);
        art = run_inference(scenes, model, icfg);
      }
      eval::EvalResult mask_ap =
          eval::coco_ap(art.dets, art.gts, art.width, art.height, false);
      eval::EvalResult box_ap =
          eval::coco_ap(art.dets, art.gts, art.width, art.height, true);
      std::cout << eval::format_table(mask_ap, box_ap);
      fs::create_directories(opt.out);
      std::ofstream jf(fs::path(opt.out) / "eval.json");
      jf << json{{"mask", report_json(mask_ap)}, {"bbox", report_json(box_ap)}}
                .dump(2)
         << "\n";
    } else if (pr->parsed()) {
      std::vector<SceneRecord> scenes = read_dataset(opt.dataset);
      Model model = Model::load(opt.checkpoint);
      fs::create_directories(opt.out);
      json out = json::array();
      for (const SceneRecord& s : scenes) {
        for (const eval::Detection& d : infer(s, model, icfg)) {
          std::string mask_rows;
          for (int y = 0; y < d.mask.height; ++y) {
            for (int x = 0; x < d.mask.width; ++x)
              mask_rows += d.mask.at(y, x) ? '1' : '0';
            mask_rows += y + 1 < d.mask.height ? ";" : "";
          }
          out.push_back({{"scene", s.id},
                         {"category", d.category},
                         {"box", {d.box.x0, d.box.y0, d.box.x1, d.box.y1}},
                         {"box_score", d.box_score},
                         {"mask_score", d.mask_score},
                         {"mask_width", d.mask.width},
                         {"mask", mask_rows}});
        }
      }
      std::ofstream jf(fs::path(opt.out) / "detections.json");
      jf << out.dump(2) << "\n";
      std::cout << "wrote " << out.size() << " detections\n";
    } else if (fu->parsed()) {
      ScoredMask fused = fuse_all(read_scored_mask(opt.fuse_2d),
                                  read_scored_mask(opt.fuse_25d),
                                  read_scored_mask(opt.fuse_3d));
      write_scored_mask(opt.out, fused);
      std::cout << "fused score " << fused.score << "\n";
    } else if (pl->parsed()) {
      fs::create_directories(opt.out);
      if (!opt.loss_log.empty()) plot_loss_log(opt.loss_log, opt.out);
      if (!opt.dataset.empty() && !opt.checkpoint.empty()) {
        std::vector<SceneRecord> scenes = read_dataset(opt.dataset);
        Model model = Model::load(opt.checkpoint);
        EvalArtifacts art = run_inference(scenes, model, icfg);
        plot_pr_curves(art, opt.out);
        plot_overlays(scenes, model, icfg, opt.out, 8);
      }
      std::cout << "plots written to " << opt.out << "\n";
    }
  } catch (const CLI::Error& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
