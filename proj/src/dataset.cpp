#include "histmap/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "histmap/error.hpp"
#include "histmap/image_io.hpp"

namespace histmap {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  if (!in) fail(ErrorKind::io, "cannot open " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out || !(out << text)) fail(ErrorKind::io, "cannot write " + p.string());
}

json parse_json(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::schema, origin + ": JSON syntax error at byte " + std::to_string(e.byte));
  }
}

std::vector<std::string> string_list(const json& doc, const std::string& key, const std::string& origin,
                                     bool required) {
  std::vector<std::string> out;
  if (!doc.contains(key)) {
    if (required) fail(ErrorKind::schema, origin + ": " + key + ": missing");
    return out;
  }
  const auto& a = doc[key];
  if (!a.is_array()) fail(ErrorKind::schema, origin + ": " + key + ": expected an array of strings");
  for (size_t i = 0; i < a.size(); ++i) {
    if (!a[i].is_string())
      fail(ErrorKind::schema, origin + ": " + key + "[" + std::to_string(i) + "]: expected a string");
    out.push_back(a[i].get<std::string>());
  }
  return out;
}

std::string frame_name(const char* stem, size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%04zu.png", stem, i);
  return buf;
}

}  // namespace

VideoManifest parse_video_manifest(const std::string& text, const std::string& origin) {
  const json doc = parse_json(text, origin);
  if (!doc.is_object()) fail(ErrorKind::schema, origin + ": expected a JSON object");
  VideoManifest m;
  m.frames = string_list(doc, "frames", origin, true);
  if (m.frames.empty()) fail(ErrorKind::schema, origin + ": frames: must not be empty");
  m.masks = string_list(doc, "masks", origin, false);
  if (!m.masks.empty() && m.masks.size() != m.frames.size())
    fail(ErrorKind::schema, origin + ": masks: expected " + std::to_string(m.frames.size()) + " entries, got " +
                                std::to_string(m.masks.size()));
  if (doc.contains("years")) {
    const auto& y = doc["years"];
    if (!y.is_array()) fail(ErrorKind::schema, origin + ": years: expected an array of integers");
    for (size_t i = 0; i < y.size(); ++i) {
      if (!y[i].is_number_integer())
        fail(ErrorKind::schema, origin + ": years[" + std::to_string(i) + "]: expected an integer");
      m.years.push_back(y[i].get<int>());
    }
    if (!m.years.empty() && m.years.size() != m.frames.size())
      fail(ErrorKind::schema, origin + ": years: expected one per frame");
  }
  const std::string order = doc.value("order", std::string("chronological"));
  if (order == "chronological")
    m.order = FrameOrder::chronological;
  else if (order == "latest_first")
    m.order = FrameOrder::latest_first;
  else
    fail(ErrorKind::schema, origin + ": order: expected \"chronological\" or \"latest_first\", got \"" + order + "\"");
  m.flags = string_list(doc, "flags", origin, false);
  return m;
}

std::string dump_video_manifest(const VideoManifest& m) {
  json doc;
  doc["frames"] = m.frames;
  doc["masks"] = m.masks;
  if (!m.years.empty()) doc["years"] = m.years;
  doc["order"] = m.order == FrameOrder::chronological ? "chronological" : "latest_first";
  doc["flags"] = m.flags;
  return doc.dump(2) + "\n";
}

VideoData load_video(const fs::path& dir) {
  VideoData v;
  v.name = dir.filename().string();
  const fs::path mp = dir / "manifest.json";
  if (!fs::exists(mp)) fail(ErrorKind::io, "missing " + mp.string());
  v.manifest = parse_video_manifest(read_text(mp), mp.string());
  for (const auto& f : v.manifest.frames) v.frames.push_back(load_grid(dir / f));
  for (const auto& f : v.manifest.masks) v.masks.push_back(load_mask(dir / f));
  for (size_t i = 0; i < v.frames.size(); ++i) {
    if (!v.frames[i].same_shape(v.frames[0]))
      fail(ErrorKind::format, mp.string() + ": frame " + std::to_string(i) + " differs in size from frame 0");
    if (!v.masks.empty() && !v.masks[i].same_shape(v.frames[i]))
      fail(ErrorKind::format, mp.string() + ": mask " + std::to_string(i) + " differs in size from its frame");
  }
  return v;
}

void save_video(const fs::path& dir, std::span<const AnnotatedFrame> frames, FrameOrder order,
                const std::vector<std::string>& flags, const std::vector<int>& years) {
  require(!frames.empty(), "save_video: no frames");
  fs::create_directories(dir);
  VideoManifest m;
  m.order = order;
  m.flags = flags;
  m.years = years;
  for (size_t i = 0; i < frames.size(); ++i) {
    m.frames.push_back(frame_name("frame", i));
    m.masks.push_back(frame_name("mask", i));
    save_grid(dir / m.frames.back(), frames[i].grid);
    save_mask(dir / m.masks.back(), frames[i].mask);
  }
  write_text(dir / "manifest.json", dump_video_manifest(m));
}

std::vector<fs::path> list_videos(const fs::path& dataset) {
  if (!fs::is_directory(dataset)) fail(ErrorKind::io, "not a directory: " + dataset.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dataset))
    if (e.is_directory() && fs::exists(e.path() / "manifest.json")) out.push_back(e.path());
  if (out.empty()) fail(ErrorKind::invalid_argument, "no video directories in " + dataset.string());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<size_t> processing_order(size_t n_frames, FrameOrder stored) {
  std::vector<size_t> idx(n_frames);
  for (size_t i = 0; i < n_frames; ++i) idx[i] = stored == FrameOrder::chronological ? n_frames - 1 - i : i;
  return idx;
}

VideoSample to_sample(const VideoData& v) {
  VideoSample s;
  for (size_t i : processing_order(v.frames.size(), v.manifest.order)) {
    s.frames.push_back(v.frames[i]);
    if (!v.masks.empty()) s.masks.push_back(v.masks[i]);
  }
  return s;
}

void save_predictions(const fs::path& dir, const PredictedVideo& v) {
  fs::create_directories(dir);
  json objs = json::array();
  for (size_t o = 0; o < v.objects.size(); ++o) {
    const auto& obj = v.objects[o];
    require(obj.masks.size() == v.n_frames, "save_predictions: one mask per frame required");
    json names = json::array();
    for (size_t t = 0; t < obj.masks.size(); ++t) {
      char buf[48];
      std::snprintf(buf, sizeof buf, "obj_%05u_%04zu.png", static_cast<unsigned>(obj.id), t);
      const auto& m = obj.masks[t];
      RasterGrid g(m.height(), m.width());
      for (size_t i = 0; i < m.size(); ++i) g[i] = m[i] ? 255 : 0;
      save_grid(dir / buf, g);
      names.push_back(buf);
    }
    json entry = {{"id", obj.id}, {"masks", names}};
    if (o < v.confidences.size()) entry["confidences"] = v.confidences[o];
    objs.push_back(entry);
  }
  json doc = {{"frames", v.n_frames}, {"objects", objs}, {"flags", v.flags}};
  write_text(dir / "predictions.json", doc.dump(2) + "\n");
}

PredictedVideo load_predictions(const fs::path& dir) {
  const fs::path mp = dir / "predictions.json";
  if (!fs::exists(mp)) fail(ErrorKind::io, "missing " + mp.string());
  const json doc = parse_json(read_text(mp), mp.string());
  const std::string o = mp.string();
  if (!doc.is_object() || !doc.contains("frames") || !doc["frames"].is_number_unsigned())
    fail(ErrorKind::schema, o + ": frames: expected a non-negative integer");
  if (!doc.contains("objects") || !doc["objects"].is_array())
    fail(ErrorKind::schema, o + ": objects: expected an array");
  PredictedVideo v;
  v.name = dir.filename().string();
  v.n_frames = doc["frames"].get<size_t>();
  v.flags = string_list(doc, "flags", o, false);
  const auto& arr = doc["objects"];
  for (size_t i = 0; i < arr.size(); ++i) {
    const std::string where = o + ": objects[" + std::to_string(i) + "]";
    const auto& e = arr[i];
    if (!e.is_object() || !e.contains("id") || !e["id"].is_number_integer())
      fail(ErrorKind::schema, where + ".id: expected an integer");
    LinkedInstance inst;
    inst.id = static_cast<Label>(e["id"].get<int>());
    const auto names = string_list(e, "masks", where, true);
    if (names.size() != v.n_frames) fail(ErrorKind::schema, where + ".masks: expected one per frame");
    for (const auto& n : names) {
      const RasterGrid g = load_grid(dir / n);
      BinaryMask m(g.height(), g.width());
      for (size_t k = 0; k < g.size(); ++k) m[k] = g[k] ? 1 : 0;
      inst.masks.push_back(std::move(m));
    }
    v.objects.push_back(std::move(inst));
    std::vector<double> conf;
    if (e.contains("confidences") && e["confidences"].is_array())
      for (const auto& c : e["confidences"]) conf.push_back(c.get<double>());
    v.confidences.push_back(std::move(conf));
  }
  return v;
}

}  // namespace histmap
