#include "asrkit/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "asrkit/error.hpp"
#include "json.hpp"

namespace asrkit {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'A', 'S', 'R', 'C'};

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is, const std::string& what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw FormatError("checkpoint: truncated " + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_tensor(std::ostream& os, const std::string& name, const Mat<float>& m) {
  put_u32(os, static_cast<std::uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u32(os, static_cast<std::uint32_t>(m.rows()));
  put_u32(os, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, m.data() + i, 4);
    put_u32(os, bits);
  }
}

std::string prefix_name(const std::string& dialect, std::size_t layer, const char* kv) {
  return "prefix." + dialect + ".layer" + std::to_string(layer) + "." + kv;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  ckpt.config.validate();
  if (ckpt.vocab.size() != static_cast<std::size_t>(ckpt.config.vocab_size))
    throw ValidationError("checkpoint: vocabulary size does not match config");
  json header;
  header["model"] = json::parse(ckpt.config.to_json());
  header["symbols"] = ckpt.vocab.symbols();
  header["prefix_length"] = ckpt.prefix_length;
  std::vector<std::string> dialects;
  for (const auto& [d, kv] : ckpt.prefixes) {
    if (kv.length() != ckpt.prefix_length || kv.num_layers() != static_cast<std::size_t>(ckpt.config.n_layers))
      throw ValidationError("checkpoint: prefix for dialect " + d + " does not match prefix_length/n_layers");
    dialects.push_back(d);
  }
  header["dialects"] = dialects;
  const std::string text = header.dump();

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw Error("checkpoint: cannot write " + tmp.string());
    os.write(kMagic, 4);
    put_u32(os, static_cast<std::uint32_t>(text.size()));
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    std::uint32_t n = 0;
    ckpt.params.visit([&](const std::string&, const Mat<float>&) { ++n; });
    if (ckpt.prefix_length > 0) n += static_cast<std::uint32_t>(2 * ckpt.prefixes.size() * ckpt.config.n_layers);
    put_u32(os, n);
    ckpt.params.visit([&](const std::string& name, const Mat<float>& m) { put_tensor(os, name, m); });
    if (ckpt.prefix_length > 0)
      for (const auto& [d, kv] : ckpt.prefixes)
        for (std::size_t l = 0; l < kv.num_layers(); ++l) {
          put_tensor(os, prefix_name(d, l, "k"), kv.keys[l]);
          put_tensor(os, prefix_name(d, l, "v"), kv.values[l]);
        }
    os.flush();
    if (!os) {
      std::filesystem::remove(tmp);
      throw Error("checkpoint: write failed for " + path.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("checkpoint: cannot open " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("checkpoint: bad magic in " + path.string());
  const std::uint32_t hlen = get_u32(is, "header length");
  std::string text(hlen, '\0');
  if (!is.read(text.data(), hlen)) throw FormatError("checkpoint: truncated header");

  Checkpoint ck;
  json header;
  try {
    header = json::parse(text);
    ck.config = ModelConfig::from_json(header.at("model").dump());
    ck.vocab = CharVocab(header.at("symbols").get<std::vector<std::string>>());
    ck.prefix_length = header.at("prefix_length").get<std::size_t>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: bad header: ") + e.what());
  }
  if (ck.vocab.size() != static_cast<std::size_t>(ck.config.vocab_size))
    throw ValidationError("checkpoint: config vocab_size " + std::to_string(ck.config.vocab_size) +
                          " disagrees with stored symbol table of size " + std::to_string(ck.vocab.size()));

  ck.params = ModelParams<float>::zeros(ck.config);
  std::map<std::string, Mat<float>*> slots;
  ck.params.visit([&](const std::string& name, Mat<float>& m) { slots[name] = &m; });
  for (const auto& d : header.at("dialects").get<std::vector<std::string>>()) {
    PrefixKV<float>& kv = ck.prefixes[d];
    kv.keys.assign(static_cast<std::size_t>(ck.config.n_layers),
                   Mat<float>::Zero(static_cast<Eigen::Index>(ck.prefix_length), ck.config.d_model));
    kv.values = kv.keys;
    if (ck.prefix_length == 0) continue;
    for (std::size_t l = 0; l < kv.keys.size(); ++l) {
      slots[prefix_name(d, l, "k")] = &kv.keys[l];
      slots[prefix_name(d, l, "v")] = &kv.values[l];
    }
  }

  const std::uint32_t n = get_u32(is, "tensor count");
  if (n != slots.size())
    throw ValidationError("checkpoint: " + std::to_string(n) + " tensors stored, config expects " +
                          std::to_string(slots.size()));
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint32_t nlen = get_u32(is, "tensor name");
    std::string name(nlen, '\0');
    if (!is.read(name.data(), nlen)) throw FormatError("checkpoint: truncated tensor name");
    auto it = slots.find(name);
    if (it == slots.end()) throw ValidationError("checkpoint: unexpected tensor " + name);
    Mat<float>& m = *it->second;
    const std::uint32_t rows = get_u32(is, name), cols = get_u32(is, name);
    if (rows != m.rows() || cols != m.cols())
      throw ValidationError("checkpoint: tensor " + name + " is " + std::to_string(rows) + "x" + std::to_string(cols) +
                            ", config expects " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    for (Eigen::Index k = 0; k < m.size(); ++k) {
      std::uint32_t bits = get_u32(is, name);
      std::memcpy(m.data() + k, &bits, 4);
    }
    slots.erase(it);
  }
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError("checkpoint: trailing bytes");
  return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
  Checkpoint ck = load_checkpoint(path);
  const ModelConfig& c = ck.config;
  if (c.feature_dim != expected.feature_dim || c.d_model != expected.d_model || c.n_layers != expected.n_layers ||
      c.n_heads != expected.n_heads || c.ffn_dim != expected.ffn_dim || c.vocab_size != expected.vocab_size)
    throw ValidationError("checkpoint: stored architecture " + c.to_json() + " is incompatible with " +
                          expected.to_json());
  return ck;
}

}  // namespace asrkit
