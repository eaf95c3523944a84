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

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <opencv2/imgcodecs.hpp>

#include "geoseg/data.hpp"
#include "json.hpp"

namespace geoseg {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kFormatVersion = 1;
constexpr double kDisparityScale = 256.0;  // fixed point, 1/256 px

std::string scene_stem(int id) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d", id);
  return buf;
}

[[noreturn]] void fail(int scene_id, const std::string& what) {
  throw std::runtime_error("scene " + scene_stem(scene_id) + ": " + what);
}

void write_json(const fs::path& p, const json& j) {
  std::ofstream f(p);
  f << j.dump(2) << "\n";
  if (!f) throw std::runtime_error("failed to write " + p.string());
}

json read_json(const fs::path& p, int scene_id) {
  std::ifstream f(p);
  if (!f) fail(scene_id, "missing file " + p.filename().string());
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    fail(scene_id, "corrupt json " + p.filename().string() + ": " + e.what());
  }
  return j;
}

}  // namespace

void write_dataset(const std::vector<SceneRecord>& scenes,
                   const std::string& dir) {
  fs::create_directories(dir);
  json manifest;
  manifest["format_version"] = kFormatVersion;
  manifest["disparity_fixed_point"] = kDisparityScale;
  manifest["categories"] = json::array();
  for (const char* name : kCategoryNames) manifest["categories"].push_back(name);
  manifest["scenes"] = json::array();

  for (const SceneRecord& s : scenes) {
    const int w = s.image.width, h = s.image.height;
    std::string stem = scene_stem(s.id);
    manifest["scenes"].push_back(s.id);

    cv::Mat rgb(h, w, CV_8UC3);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const uint8_t* px = s.image.px(y, x);
        rgb.at<cv::Vec3b>(y, x) = cv::Vec3b(px[2], px[1], px[0]);  // BGR file
      }
    cv::Mat disp(h, w, CV_16UC1);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        size_t q = static_cast<size_t>(y) * w + x;
        uint16_t v = 0;
        if (s.disparity.valid[q]) {
          double fx = std::round(s.disparity.values[q] * kDisparityScale);
          v = static_cast<uint16_t>(std::clamp(fx, 1.0, 65535.0));
        }
        disp.at<uint16_t>(y, x) = v;
      }
    cv::Mat inst(h, w, CV_8UC1);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        inst.at<uint8_t>(y, x) = s.instance_map[static_cast<size_t>(y) * w + x];

    if (!cv::imwrite((fs::path(dir) / (stem + "_rgb.png")).string(), rgb) ||
        !cv::imwrite((fs::path(dir) / (stem + "_disp.png")).string(), disp) ||
        !cv::imwrite((fs::path(dir) / (stem + "_inst.png")).string(), inst))
      fail(s.id, "png write failed");

    json meta;
    meta["id"] = s.id;
    meta["width"] = w;
    meta["height"] = h;
    meta["rig"] = {{"focal_length_px", s.rig.focal_length_px},
                   {"baseline_m", s.rig.baseline_m}};
    meta["instances"] = json::array();
    for (const InstanceGt& gt : s.instances)
      meta["instances"].push_back(
          {{"category", gt.category},
           {"box", {gt.box.x0, gt.box.y0, gt.box.x1, gt.box.y1}},
           {"depth_m", gt.depth_m}});
    write_json(fs::path(dir) / (stem + "_meta.json"), meta);
  }
  write_json(fs::path(dir) / "manifest.json", manifest);
}

std::vector<SceneRecord> read_dataset(const std::string& dir) {
  json manifest = read_json(fs::path(dir) / "manifest.json", -1);
  if (manifest.value("format_version", -1) != kFormatVersion)
    throw std::runtime_error("unsupported dataset format version");

  std::vector<SceneRecord> scenes;
  for (int id : manifest.at("scenes").get<std::vector<int>>()) {
    std::string stem = scene_stem(id);
    json meta = read_json(fs::path(dir) / (stem + "_meta.json"), id);

    SceneRecord s;
    s.id = id;
    const int w = meta.at("width").get<int>();
    const int h = meta.at("height").get<int>();
    s.rig.focal_length_px = meta.at("rig").at("focal_length_px").get<double>();
    s.rig.baseline_m = meta.at("rig").at("baseline_m").get<double>();
    for (const json& j : meta.at("instances")) {
      InstanceGt gt;
      gt.category = j.at("category").get<int>();
      auto b = j.at("box").get<std::vector<double>>();
      gt.box = RoiBox{b.at(0), b.at(1), b.at(2), b.at(3)};
      gt.depth_m = j.at("depth_m").get<double>();
      s.instances.push_back(gt);
    }

    cv::Mat rgb = cv::imread((fs::path(dir) / (stem + "_rgb.png")).string(),
                             cv::IMREAD_COLOR);
    cv::Mat disp = cv::imread((fs::path(dir) / (stem + "_disp.png")).string(),
                              cv::IMREAD_UNCHANGED);
    cv::Mat inst = cv::imread((fs::path(dir) / (stem + "_inst.png")).string(),
                              cv::IMREAD_GRAYSCALE);
    if (rgb.empty() || rgb.cols != w || rgb.rows != h)
      fail(id, "missing or corrupt rgb png");
    if (disp.empty() || disp.type() != CV_16UC1 || disp.cols != w ||
        disp.rows != h)
      fail(id, "missing or corrupt disparity png");
    if (inst.empty() || inst.cols != w || inst.rows != h)
      fail(id, "missing or corrupt instance png");

    s.image.width = w;
    s.image.height = h;
    s.image.rgb.resize(static_cast<size_t>(w) * h * 3);
    s.disparity.width = w;
    s.disparity.height = h;
    s.disparity.values.resize(static_cast<size_t>(w) * h);
    s.disparity.valid.resize(static_cast<size_t>(w) * h);
    s.instance_map.resize(static_cast<size_t>(w) * h);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        size_t q = static_cast<size_t>(y) * w + x;
        cv::Vec3b bgr = rgb.at<cv::Vec3b>(y, x);
        uint8_t* px = s.image.px(y, x);
        px[0] = bgr[2];
        px[1] = bgr[1];
        px[2] = bgr[0];
        uint16_t d = disp.at<uint16_t>(y, x);
        s.disparity.values[q] = d / kDisparityScale;
        s.disparity.valid[q] = d > 0 ? 1 : 0;
        s.instance_map[q] = inst.at<uint8_t>(y, x);
      }
    scenes.push_back(std::move(s));
  }
  return scenes;
}

}  // namespace geoseg
