#include "histmap/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "histmap/error.hpp"

namespace histmap {

namespace {

struct Field {
  const char* type;
  std::function<bool(const std::string&)> set;  // false on a malformed value
  std::function<std::string()> get;
  bool allow_empty = false;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
bool parse_number(const std::string& v, T& out) {
  const char* end = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(v.data(), end, out);
  return ec == std::errc() && ptr == end;
}

std::string fmt_real(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

template <typename T>
Field integer(T& ref) {
  return {"integer", [&ref](const std::string& v) { return parse_number(v, ref); },
          [&ref] { return std::to_string(ref); }};
}

Field size_field(size_t& ref) {
  return {"non-negative integer", [&ref](const std::string& v) { return parse_number(v, ref); },
          [&ref] { return std::to_string(ref); }};
}

Field real(double& ref) {
  return {"real number", [&ref](const std::string& v) { return parse_number(v, ref); },
          [&ref] { return fmt_real(ref); }};
}

Field boolean(bool& ref) {
  return {"boolean (true/false)",
          [&ref](const std::string& v) {
            if (v == "true" || v == "1") ref = true;
            else if (v == "false" || v == "0") ref = false;
            else return false;
            return true;
          },
          [&ref] { return std::string(ref ? "true" : "false"); }};
}

template <typename E>
Field choice(E& ref, std::vector<std::pair<std::string, E>> options, const char* type) {
  return {type,
          [&ref, options](const std::string& v) {
            for (const auto& [name, e] : options)
              if (name == v) {
                ref = e;
                return true;
              }
            return false;
          },
          [&ref, options] {
            for (const auto& [name, e] : options)
              if (e == ref) return name;
            return std::string("?");
          }};
}

std::map<std::string, Field> schema(Settings& s) {
  std::map<std::string, Field> f;
  f.emplace("seed", integer(s.seed));
  f.emplace("map_size", integer(s.map_size));
  f.emplace("n_maps", integer(s.n_maps));
  f.emplace("n_buildings", integer(s.n_buildings));
  f.emplace("rect_min", integer(s.synth.rect_size.lo));
  f.emplace("rect_max", integer(s.synth.rect_size.hi));
  f.emplace("shift_range", integer(s.synth.shift_range));
  f.emplace("appear_min", integer(s.synth.appear_count.lo));
  f.emplace("appear_max", integer(s.synth.appear_count.hi));
  f.emplace("disappear_min", integer(s.synth.disappear_count.lo));
  f.emplace("disappear_max", integer(s.synth.disappear_count.hi));
  f.emplace("merge_min", integer(s.synth.merge_count.lo));
  f.emplace("merge_max", integer(s.synth.merge_count.hi));
  f.emplace("max_dilate_iters", integer(s.synth.max_dilate_iters));

  f.emplace("input_size", integer(s.model.input_size));
  f.emplace("patch", integer(s.model.patch));
  f.emplace("d_model", integer(s.model.d_model));
  f.emplace("n_enc_blocks", integer(s.model.n_enc_blocks));
  f.emplace("n_mem_blocks", integer(s.model.n_mem_blocks));
  f.emplace("n_dec_blocks", integer(s.model.n_dec_blocks));
  f.emplace("n_heads", integer(s.model.n_heads));
  f.emplace("lora_rank", integer(s.model.lora_rank));
  f.emplace("ffn_mult", integer(s.model.ffn_mult));
  f.emplace("mask_channels", integer(s.model.mask_channels));
  f.emplace("n_query_tokens", integer(s.model.n_query_tokens));
  f.emplace("use_memory", boolean(s.model.use_memory));

  f.emplace("mode", choice(s.train.mode, {{"video", TaskMode::video}, {"tileset", TaskMode::tileset}},
                           "one of video, tileset"));
  f.emplace("epochs", integer(s.train.epochs));
  f.emplace("lr", real(s.train.lr));
  f.emplace("weight_decay", real(s.train.weight_decay));
  f.emplace("beta1", real(s.train.beta1));
  f.emplace("beta2", real(s.train.beta2));
  f.emplace("adam_eps", real(s.train.eps));
  f.emplace("frames_per_sample", size_field(s.train.frames_per_sample));
  f.emplace("stream_len", size_field(s.train.stream_len));
  f.emplace("keep_best", boolean(s.train.keep_best));
  f.emplace("val_every", integer(s.train.val_every));
  f.emplace("val_count", integer(s.val_count));

  f.emplace("bank_capacity", size_field(s.train.bank.capacity));
  f.emplace("retrieve_k", size_field(s.train.bank.retrieve_k));
  f.emplace("conf_threshold", real(s.train.bank.conf_threshold));
  f.emplace("retrieval", choice(s.train.bank.tileset_mode,
                                {{"weighted_sample", RetrieveMode::weighted_sample},
                                 {"top_k", RetrieveMode::top_k},
                                 {"recent_k", RetrieveMode::recent_k}},
                                "one of weighted_sample, top_k, recent_k"));

  f.emplace("prompt_mode", choice(s.prompts.mode,
                                  {{"oracle", PromptMode::oracle},
                                   {"jittered_oracle", PromptMode::jittered_oracle},
                                   {"from_file", PromptMode::from_file}},
                                  "one of oracle, jittered_oracle, from_file"));
  f.emplace("prompt_sigma", real(s.prompts.sigma));
  f.emplace("prompt_file", Field{"path",
                                 [&s](const std::string& v) {
                                   s.prompts.file = v;
                                   return true;
                                 },
                                 [&s] { return s.prompts.file.string(); }, true});
  return f;
}

}  // namespace

void Settings::validate(const std::string& origin) const {
  auto check = [&](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      fail(ErrorKind::schema, origin + ": " + e.what());
    }
  };
  check([&] {
    require(map_size >= 1, "map_size must be >= 1");
    require(n_maps >= 1, "n_maps must be >= 1");
    require(n_buildings >= 0, "n_buildings must be >= 0");
    require(val_count >= -1, "val_count must be >= -1");
    require(prompts.sigma >= 0, "prompt_sigma must be >= 0");
  });
  check([&] { synth.validate(); });
  check([&] { model.validate(); });
  check([&] { train.validate(); });
}

Settings parse_settings(const std::string& text, const std::string& origin, Settings base) {
  Settings s = std::move(base);
  auto fields = schema(s);
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorKind::schema, where + ": expected `key = value`, got `" + line + "`");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    const auto it = fields.find(key);
    if (it == fields.end()) fail(ErrorKind::schema, where + ": unknown key '" + key + "'");
    if (!seen.insert(key).second) fail(ErrorKind::schema, where + ": duplicate key '" + key + "'");
    if ((value.empty() && !it->second.allow_empty) || !it->second.set(value))
      fail(ErrorKind::schema,
           where + ": key '" + key + "': expected " + it->second.type + ", got '" + value + "'");
  }
  s.validate(origin);
  return s;
}

Settings load_settings(const std::filesystem::path& path, Settings base) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open config: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_settings(ss.str(), path.string(), std::move(base));
}

std::string dump_settings(const Settings& s) {
  Settings copy = s;
  std::string out;
  for (const auto& [key, f] : schema(copy)) out += key + " = " + f.get() + "\n";
  return out;
}

}  // namespace histmap
