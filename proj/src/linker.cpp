#include "histmap/linker.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "histmap/rng.hpp"

namespace histmap {

using json = nlohmann::json;

std::vector<LinkedInstance> link_instances(std::span<const InstanceMask> frames, double tau) {
  std::vector<LinkedInstance> tracks;
  if (frames.empty()) return tracks;
  const int h = frames[0].height(), w = frames[0].width();
  for (const auto& f : frames) require(f.same_shape(h, w), "link_instances: frames not dimension-aligned");
  const BinaryMask empty(h, w);

  auto start_track = [&](size_t t, BinaryMask m) {
    LinkedInstance tr{static_cast<Label>(tracks.size() + 1), {}};
    tr.masks.assign(frames.size(), empty);
    tr.masks[t] = std::move(m);
    tracks.push_back(std::move(tr));
  };

  for (Label l : inventory(frames[0])) start_track(0, select_label(frames[0], l));

  for (size_t t = 1; t < frames.size(); ++t) {
    struct Claim {
      Label label;
      BinaryMask mask;
      size_t track = SIZE_MAX;
      double iou = 0;
    };
    std::vector<Claim> claims;
    for (Label l : inventory(frames[t])) {
      Claim c{l, select_label(frames[t], l)};
      for (size_t k = 0; k < tracks.size(); ++k) {
        if (count(tracks[k].masks[t - 1]) == 0) continue;
        const double v = binary_iou(c.mask, tracks[k].masks[t - 1]);
        if (v >= tau && (c.track == SIZE_MAX || v > c.iou)) {
          c.track = k;
          c.iou = v;
        }
      }
      claims.push_back(std::move(c));
    }
    // resolve contested tracks: highest IoU first, then smaller label
    std::vector<size_t> order(claims.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return claims[a].iou > claims[b].iou; });
    std::vector<bool> taken(tracks.size(), false);
    std::vector<size_t> orphans;
    for (size_t i : order) {
      auto& c = claims[i];
      if (c.track != SIZE_MAX && !taken[c.track]) {
        taken[c.track] = true;
        tracks[c.track].masks[t] = std::move(c.mask);
      } else {
        orphans.push_back(i);
      }
    }
    std::sort(orphans.begin(), orphans.end());
    for (size_t i : orphans) start_track(t, std::move(claims[i].mask));
  }
  return tracks;
}

std::vector<ObjectPrompt> oracle_prompts(const InstanceMask& gt) {
  std::map<Label, Box> boxes;
  for (int y = 0; y < gt.height(); ++y)
    for (int x = 0; x < gt.width(); ++x) {
      const Label l = gt.at(x, y);
      if (!l) continue;
      auto [it, fresh] = boxes.try_emplace(l, Box{x, y, x + 1, y + 1});
      if (!fresh) {
        Box& b = it->second;
        b.x0 = std::min(b.x0, x);
        b.y0 = std::min(b.y0, y);
        b.x1 = std::max(b.x1, x + 1);
        b.y1 = std::max(b.y1, y + 1);
      }
    }
  std::vector<ObjectPrompt> out;
  for (const auto& [l, b] : boxes) out.push_back({l, b});
  return out;
}

std::vector<ObjectPrompt> jitter_prompts(std::span<const ObjectPrompt> prompts, int height, int width, double sigma,
                                         uint64_t seed) {
  require(sigma >= 0, "jitter sigma must be >= 0");
  Rng rng(seed);
  std::vector<ObjectPrompt> out;
  for (const auto& p : prompts) {
    auto jit = [&](int v, int hi) {
      const double noise = sigma > 0 ? std::round(sigma * rng.normal()) : 0.0;
      return std::clamp(v + static_cast<int>(noise), 0, hi);
    };
    Box b;
    b.x0 = jit(p.box.x0, width);
    b.y0 = jit(p.box.y0, height);
    b.x1 = jit(p.box.x1, width);
    b.y1 = jit(p.box.y1, height);
    if (!b.degenerate()) out.push_back({p.id, b});
  }
  return out;
}

std::vector<ObjectPrompt> provide_prompts(const InstanceMask& gt, const PromptProvider& provider) {
  switch (provider.mode) {
    case PromptMode::oracle:
      return oracle_prompts(gt);
    case PromptMode::jittered_oracle:
      return jitter_prompts(oracle_prompts(gt), gt.height(), gt.width(), provider.sigma, provider.seed);
    case PromptMode::from_file:
      return load_prompts(provider.file);
  }
  return {};
}

std::vector<ObjectPrompt> parse_prompts(const std::string& text, const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    // locate the byte offset as line:column
    size_t line = 1, col = 1;
    for (size_t i = 0; i < std::min(e.byte == 0 ? 0 : e.byte - 1, text.size()); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    std::string context;
    std::istringstream lines(text);
    for (size_t i = 0; i < line && std::getline(lines, context); ++i) {
    }
    fail(ErrorKind::schema, origin + ":" + std::to_string(line) + ":" + std::to_string(col) +
                                ": JSON syntax error near `" + context + "`");
  }
  auto bad = [&](const std::string& where, const std::string& why) {
    fail(ErrorKind::schema, origin + ": " + where + ": " + why);
  };
  if (!doc.is_object() || !doc.contains("prompts") || !doc["prompts"].is_array())
    bad("<root>", "expected an object with a \"prompts\" array");
  std::vector<ObjectPrompt> out;
  const auto& arr = doc["prompts"];
  for (size_t i = 0; i < arr.size(); ++i) {
    const std::string where = "prompts[" + std::to_string(i) + "]";
    const auto& p = arr[i];
    if (!p.is_object()) bad(where, "expected an object");
    if (!p.contains("id") || !p["id"].is_number_integer()) bad(where + ".id", "expected an integer");
    const auto id = p["id"].get<int64_t>();
    if (id < 1 || id > 65535) bad(where + ".id", "must be in 1..65535");
    if (!p.contains("box") || !p["box"].is_array() || p["box"].size() != 4) bad(where + ".box", "expected 4 integers");
    int c[4];
    for (int k = 0; k < 4; ++k) {
      if (!p["box"][k].is_number_integer()) bad(where + ".box", "expected 4 integers");
      c[k] = p["box"][k].get<int>();
    }
    Box b{c[0], c[1], c[2], c[3]};
    if (b.degenerate() || b.x0 < 0 || b.y0 < 0) bad(where + ".box", "need 0 <= x0 < x1 and 0 <= y0 < y1");
    out.push_back({static_cast<Label>(id), b});
  }
  return out;
}

std::vector<ObjectPrompt> load_prompts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open prompt file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_prompts(ss.str(), path.string());
}

std::string dump_prompts(std::span<const ObjectPrompt> prompts) {
  json arr = json::array();
  for (const auto& p : prompts) arr.push_back({{"id", p.id}, {"box", {p.box.x0, p.box.y0, p.box.x1, p.box.y1}}});
  return json{{"prompts", arr}}.dump(2) + "\n";
}

}  // namespace histmap
