#include "histmap/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "histmap/error.hpp"

namespace histmap {

using json = nlohmann::json;

namespace {

constexpr char kMagic[8] = {'H', 'M', 'A', 'P', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in, const std::string& what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) fail(ErrorKind::format, "checkpoint truncated in " + what);
  return v;
}

}  // namespace

json config_to_json(const ModelConfig& c) {
  return {{"input_size", c.input_size},   {"patch", c.patch},
          {"d_model", c.d_model},         {"n_enc_blocks", c.n_enc_blocks},
          {"n_mem_blocks", c.n_mem_blocks}, {"n_dec_blocks", c.n_dec_blocks},
          {"n_heads", c.n_heads},         {"lora_rank", c.lora_rank},
          {"ffn_mult", c.ffn_mult},       {"mask_channels", c.mask_channels},
          {"n_query_tokens", c.n_query_tokens}, {"use_memory", c.use_memory},
          {"init_seed", c.init_seed}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  try {
    c.input_size = j.at("input_size").get<int>();
    c.patch = j.at("patch").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.n_enc_blocks = j.at("n_enc_blocks").get<int>();
    c.n_mem_blocks = j.at("n_mem_blocks").get<int>();
    c.n_dec_blocks = j.at("n_dec_blocks").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.lora_rank = j.at("lora_rank").get<int>();
    c.ffn_mult = j.at("ffn_mult").get<int>();
    c.mask_channels = j.at("mask_channels").get<int>();
    c.n_query_tokens = j.at("n_query_tokens").get<int>();
    c.use_memory = j.at("use_memory").get<bool>();
    c.init_seed = j.at("init_seed").get<uint64_t>();
  } catch (const json::exception& e) {
    fail(ErrorKind::schema, std::string("checkpoint config: ") + e.what());
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& p, const json& meta) {
  json header;
  header["config"] = config_to_json(p.config());
  json frozen = json::array(), trainable = json::array(), tensors = json::array();
  for (const auto& t : p.tensors()) {
    (t.trainable ? trainable : frozen).push_back(t.name);
    tensors.push_back(
        {{"name", t.name}, {"rows", t.value.rows()}, {"cols", t.value.cols()}, {"trainable", t.trainable},
         {"family", t.family}});
  }
  header["census"] = {{"frozen", frozen}, {"trainable", trainable}};
  header["tensors"] = tensors;
  header["meta"] = meta.is_null() ? json::object() : meta;
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write checkpoint: " + path.string());
  out.write(kMagic, sizeof kMagic);
  put<uint32_t>(out, kCheckpointVersion);
  put<uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : p.tensors())
    out.write(reinterpret_cast<const char*>(t.value.data()), static_cast<std::streamsize>(t.value.size() * 8));
  if (!out) fail(ErrorKind::io, "failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open checkpoint: " + path.string());
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    fail(ErrorKind::format, path.string() + ": not a checkpoint (bad magic)");
  const auto version = get<uint32_t>(in, "version");
  if (version != kCheckpointVersion)
    fail(ErrorKind::format, path.string() + ": unsupported checkpoint version " + std::to_string(version));
  const auto n = get<uint64_t>(in, "header length");
  if (n > (1u << 26)) fail(ErrorKind::format, path.string() + ": implausible header length");
  std::string text(n, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(n))) fail(ErrorKind::format, "checkpoint truncated in header");

  json header;
  try {
    header = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::format, path.string() + ": corrupt checkpoint header: " + e.what());
  }
  if (!header.contains("config") || !header.contains("tensors") || !header["tensors"].is_array())
    fail(ErrorKind::schema, path.string() + ": checkpoint header lacks config or tensors");

  Checkpoint ck;
  ck.params = std::make_unique<ModelParams>(config_from_json(header["config"]));
  auto& tensors = ck.params->tensors();
  const auto& list = header["tensors"];
  if (list.size() != tensors.size())
    fail(ErrorKind::schema, path.string() + ": tensor count " + std::to_string(list.size()) + " does not match model (" +
                                std::to_string(tensors.size()) + ")");
  size_t i = 0;
  for (auto& t : tensors) {
    const auto& d = list[i++];
    try {
      if (d.at("name").get<std::string>() != t.name || d.at("rows").get<long>() != t.value.rows() ||
          d.at("cols").get<long>() != t.value.cols() || d.at("trainable").get<bool>() != t.trainable)
        fail(ErrorKind::schema, path.string() + ": tensor " + std::to_string(i - 1) + " does not match " + t.name);
    } catch (const json::exception& e) {
      fail(ErrorKind::schema, path.string() + ": tensor entry " + std::to_string(i - 1) + ": " + e.what());
    }
    if (!in.read(reinterpret_cast<char*>(t.value.data()), static_cast<std::streamsize>(t.value.size() * 8)))
      fail(ErrorKind::format, path.string() + ": checkpoint truncated in tensor " + t.name);
  }
  if (in.peek() != std::char_traits<char>::eof()) fail(ErrorKind::format, path.string() + ": trailing bytes");
  ck.meta = header.value("meta", json::object());
  return ck;
}

}  // namespace histmap
