#include "samct/checkpoint.hpp"

#include "samct/errors.hpp"

#include <openssl/evp.h>

#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace samct::checkpoint {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'S', 'A', 'M', 'C', 'T', 'C', 'K', 'P'};
constexpr uint32_t kVersion = 1;

std::string dtype_name(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat: return "f32";
    case torch::kDouble: return "f64";
    case torch::kLong: return "i64";
    case torch::kUInt8: return "u8";
    default: throw std::invalid_argument(std::string("checkpoint: unsupported dtype ") + c10::toString(t));
  }
}

torch::ScalarType parse_dtype(const std::string& s) {
  if (s == "f32") return torch::kFloat;
  if (s == "f64") return torch::kDouble;
  if (s == "i64") return torch::kLong;
  if (s == "u8") return torch::kUInt8;
  throw DataError("checkpoint: unknown dtype '" + s + "'");
}

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) { EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr); }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;
  void update(const void* data, size_t n) { EVP_DigestUpdate(ctx_, data, n); }
  void update(const std::string& s) { update(s.data(), s.size()); }
  std::string hex() {
    unsigned char out[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_, out, &len);
    std::ostringstream os;
    for (unsigned i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(out[i]);
    return os.str();
  }

 private:
  EVP_MD_CTX* ctx_;
};

void hash_tensor(Sha256& h, const torch::Tensor& t) {
  auto c = t.detach().cpu().contiguous();
  h.update(dtype_name(c.scalar_type()));
  h.update(c10::str(c.sizes()));
  h.update(c.data_ptr(), c.nbytes());
}

NamedTensors sorted(NamedTensors v) {
  std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  return v;
}

}  // namespace

std::string sha256_hex(const void* data, size_t size) {
  Sha256 h;
  h.update(data, size);
  return h.hex();
}

std::string tensor_digest(const torch::Tensor& t) {
  Sha256 h;
  hash_tensor(h, t);
  return h.hex();
}

std::string group_digest(const NamedTensors& tensors) {
  Sha256 h;
  for (const auto& [name, t] : sorted(tensors)) {
    h.update(name);
    hash_tensor(h, t);
  }
  return h.hex();
}

std::map<std::string, std::string> parameter_digests(const NamedTensors& tensors) {
  std::map<std::string, std::string> out;
  for (const auto& [name, t] : tensors) out[name] = tensor_digest(t);
  return out;
}

void save(const fs::path& path, const Checkpoint& ckpt) {
  json header;
  header["metadata"] = ckpt.metadata;
  header["groups"] = json::object();
  std::vector<torch::Tensor> blobs;
  uint64_t offset = 0;
  for (const auto& [group, tensors] : ckpt.groups) {
    json g;
    g["sha256"] = group_digest(tensors);
    g["tensors"] = json::array();
    for (const auto& [name, t] : sorted(tensors)) {
      auto c = t.detach().cpu().contiguous();
      g["tensors"].push_back(
          {{"name", name}, {"shape", c.sizes().vec()}, {"dtype", dtype_name(c.scalar_type())}, {"offset", offset}, {"nbytes", c.nbytes()}});
      offset += c.nbytes();
      blobs.push_back(c);
    }
    header["groups"][group] = g;
  }
  const std::string text = header.dump();
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("checkpoint: cannot write " + path.string());
  const uint64_t header_len = text.size();
  os.write(kMagic, sizeof kMagic);
  os.write(reinterpret_cast<const char*>(&kVersion), sizeof kVersion);
  os.write(reinterpret_cast<const char*>(&header_len), sizeof header_len);
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& b : blobs) os.write(static_cast<const char*>(b.data_ptr()), static_cast<std::streamsize>(b.nbytes()));
  if (!os) throw DataError("checkpoint: write failed for " + path.string());
}

Checkpoint load(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("checkpoint: cannot open " + path.string());
  char magic[8];
  uint32_t version = 0;
  uint64_t header_len = 0;
  is.read(magic, sizeof magic);
  is.read(reinterpret_cast<char*>(&version), sizeof version);
  is.read(reinterpret_cast<char*>(&header_len), sizeof header_len);
  if (!is || std::memcmp(magic, kMagic, sizeof magic) != 0) throw DataError("checkpoint: " + path.string() + " is not a samct checkpoint");
  if (version != kVersion) throw DataError("checkpoint: unsupported version " + std::to_string(version));
  std::string text(header_len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(header_len));
  if (!is) throw DataError("checkpoint: truncated header in " + path.string());
  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError("checkpoint: bad header in " + path.string() + ": " + e.what());
  }
  const auto data_start = is.tellg();
  Checkpoint ckpt;
  ckpt.metadata = header.value("metadata", json::object());
  for (const auto& [group, g] : header.at("groups").items()) {
    NamedTensors tensors;
    for (const auto& t : g.at("tensors")) {
      auto shape = t.at("shape").get<std::vector<int64_t>>();
      auto tensor = torch::empty(shape, torch::TensorOptions().dtype(parse_dtype(t.at("dtype").get<std::string>())));
      const auto nbytes = t.at("nbytes").get<uint64_t>();
      if (nbytes != tensor.nbytes()) throw DataError("checkpoint: size mismatch for " + t.at("name").get<std::string>());
      is.seekg(data_start + static_cast<std::streamoff>(t.at("offset").get<uint64_t>()));
      is.read(static_cast<char*>(tensor.data_ptr()), static_cast<std::streamsize>(nbytes));
      if (!is) throw DataError("checkpoint: truncated data for " + t.at("name").get<std::string>());
      tensors.emplace_back(t.at("name").get<std::string>(), tensor);
    }
    if (group_digest(tensors) != g.at("sha256").get<std::string>()) throw DataError("checkpoint: digest mismatch in group '" + group + "'");
    ckpt.groups[group] = std::move(tensors);
  }
  return ckpt;
}

void save_model(const fs::path& path, SamCtImpl& model, json metadata) {
  Checkpoint ckpt;
  ckpt.metadata = std::move(metadata);
  ckpt.metadata["kind"] = "samct.model";
  ckpt.metadata["model"] = model.config;
  ckpt.metadata["switches"] = model.switches;
  ckpt.groups = model.groups();
  save(path, ckpt);
}

void load_groups(SamCtImpl& model, const Checkpoint& ckpt, const std::vector<std::string>& names) {
  auto dst = model.groups();
  torch::NoGradGuard no_grad;
  for (const auto& name : names) {
    auto src_it = ckpt.groups.find(name);
    if (src_it == ckpt.groups.end()) throw DataError("checkpoint: group '" + name + "' missing");
    auto& targets = dst.at(name);
    if (src_it->second.size() != targets.size())
      throw DataError("checkpoint: group '" + name + "' holds " + std::to_string(src_it->second.size()) + " tensors, model expects " +
                      std::to_string(targets.size()));
    std::map<std::string, torch::Tensor> by_name(src_it->second.begin(), src_it->second.end());
    for (auto& [key, t] : targets) {
      auto it = by_name.find(key);
      if (it == by_name.end()) throw DataError("checkpoint: tensor '" + key + "' missing from group '" + name + "'");
      if (it->second.sizes() != t.sizes())
        throw DataError("checkpoint: '" + key + "' has shape " + c10::str(it->second.sizes()) + ", model expects " + c10::str(t.sizes()));
      t.copy_(it->second);
    }
  }
}

SamCt load_model(const fs::path& path) {
  auto ckpt = load(path);
  if (ckpt.metadata.value("kind", "") != "samct.model") throw DataError("checkpoint: " + path.string() + " is not a model checkpoint");
  ModelConfig config = ckpt.metadata.at("model").get<ModelConfig>();
  AblationSwitches switches = ckpt.metadata.at("switches").get<AblationSwitches>();
  SamCt model(config, switches);
  std::vector<std::string> names;
  for (const auto& [g, _] : model->groups()) names.push_back(g);
  load_groups(*model, ckpt, names);
  return model;
}

namespace {

json dims_json(const prompt::IndicatorDims& d) {
  return {{"dim", d.dim}, {"hidden", d.hidden}, {"scale_channels", std::vector<int64_t>(d.scale_channels.begin(), d.scale_channels.end())}};
}

}  // namespace

void save_indicator(const fs::path& path, prompt::TaskIndicatorImpl& indicator, const ModelConfig& main_config, json metadata) {
  if (!(prompt::IndicatorDims::from_config(main_config) == indicator.dims))
    throw InvariantError("save_indicator: indicator dimensions do not match the main model");
  Checkpoint ckpt;
  ckpt.metadata = std::move(metadata);
  ckpt.metadata["kind"] = "samct.indicator";
  ckpt.metadata["task_id"] = indicator.task_id;
  ckpt.metadata["dims"] = dims_json(indicator.dims);
  NamedTensors tensors;
  for (const auto& p : indicator.named_parameters(true)) tensors.emplace_back(p.key(), p.value());
  ckpt.groups["task_indicator"] = tensors;
  save(path, ckpt);
}

prompt::TaskIndicator load_indicator(const fs::path& path, const ModelConfig& main_config, json* metadata) {
  auto ckpt = load(path);
  if (ckpt.metadata.value("kind", "") != "samct.indicator") throw DataError("checkpoint: " + path.string() + " is not an indicator checkpoint");
  const auto expected = prompt::IndicatorDims::from_config(main_config);
  if (ckpt.metadata.at("dims") != dims_json(expected))
    throw DataError("indicator " + path.string() + " has dimensions " + ckpt.metadata.at("dims").dump() + ", main model expects " +
                    dims_json(expected).dump());
  prompt::TaskIndicator ind(expected, ckpt.metadata.at("task_id").get<std::string>());
  std::map<std::string, torch::Tensor> by_name(ckpt.groups.at("task_indicator").begin(), ckpt.groups.at("task_indicator").end());
  torch::NoGradGuard no_grad;
  for (auto& p : ind->named_parameters(true)) {
    auto it = by_name.find(p.key());
    if (it == by_name.end() || it->second.sizes() != p.value().sizes()) throw DataError("indicator: tensor '" + p.key() + "' missing or misshapen");
    p.value().copy_(it->second);
  }
  if (by_name.size() != ind->named_parameters(true).size()) throw DataError("indicator: unexpected extra tensors");
  if (metadata) *metadata = ckpt.metadata;
  return ind;
}

}  // namespace samct::checkpoint
