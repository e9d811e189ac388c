#include "samct/model.hpp"

#include "samct/errors.hpp"

#include <algorithm>
#include <sstream>

namespace samct {

void AblationSwitches::validate() const {
  if (cross_branch && !cnn_branch) throw ConfigError("switches: cbi requires cnn");
}

AblationSwitches AblationSwitches::parse(const std::string& text) {
  AblationSwitches s{false, false, false};
  if (text == "all") return {};
  if (text.empty() || text == "none") return s;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "cnn")
      s.cnn_branch = true;
    else if (item == "cbi")
      s.cross_branch = true;
    else if (item == "adapter")
      s.adapters = true;
    else
      throw ConfigError("switches: unknown component '" + item + "' (expected cnn, cbi, adapter)");
  }
  s.validate();
  return s;
}

std::string AblationSwitches::to_string() const {
  std::vector<std::string> on;
  if (cnn_branch) on.push_back("cnn");
  if (cross_branch) on.push_back("cbi");
  if (adapters) on.push_back("adapter");
  if (on.empty()) return "none";
  std::string out = on[0];
  for (size_t i = 1; i < on.size(); ++i) out += "," + on[i];
  return out;
}

void to_json(nlohmann::json& j, const AblationSwitches& s) {
  j = {{"cnn_branch", s.cnn_branch}, {"cross_branch", s.cross_branch}, {"adapters", s.adapters}};
}

void from_json(const nlohmann::json& j, AblationSwitches& s) {
  AblationSwitches d;
  s.cnn_branch = j.value("cnn_branch", d.cnn_branch);
  s.cross_branch = j.value("cross_branch", d.cross_branch);
  s.adapters = j.value("adapters", d.adapters);
  s.validate();
}

namespace {

bool starts_with(const std::string& s, const std::string& p) { return s.rfind(p, 0) == 0; }

}  // namespace

std::string group_of(const std::string& name) {
  if (starts_with(name, "vit.")) {
    if (name.find(".adapter.") != std::string::npos) return "adapters";
    if (starts_with(name, "vit.neck.")) return "neck";
    return "frozen_backbone";
  }
  if (starts_with(name, "cnn.fusion_proj.")) return "fusion";
  if (starts_with(name, "cnn.")) return "cnn_encoder";
  if (starts_with(name, "interactions.")) return "interaction";
  if (starts_with(name, "decoder.")) return "decoder";
  if (starts_with(name, "prompt_encoder.")) return "prompt_encoder";
  throw InvariantError("parameter '" + name + "' belongs to no checkpoint group");
}

ImageFeatures ImageFeatures::select(const torch::Tensor& index) const {
  ImageFeatures out;
  out.vit = vit.index_select(0, index);
  if (cnn.defined()) {
    out.cnn.f16 = cnn.f16.index_select(0, index);
    out.cnn.f32 = cnn.f32.index_select(0, index);
    out.cnn.f64 = cnn.f64.index_select(0, index);
    out.cnn.f128 = cnn.f128.index_select(0, index);
    out.cnn.f256 = cnn.f256.index_select(0, index);
    out.cnn.full_res32 = cnn.full_res32.index_select(0, index);
  }
  for (const auto& [b, t] : taps) out.taps[b] = t.index_select(0, index);
  return out;
}

SamCtImpl::SamCtImpl(const ModelConfig& cfg, const AblationSwitches& sw) : config(cfg), switches(sw) {
  config.validate();
  switches.validate();
  vit = register_module("vit", vit::ViTEncoder(config, switches.adapters));
  if (switches.cnn_branch) cnn = register_module("cnn", cnn::UNetEncoder(config));
  if (switches.cross_branch) {
    interactions = torch::nn::ModuleList();
    for (const auto& site : config.interaction_sites) {
      interaction::CrossBranch cb(config.embed_dim, cnn::channels_at_step(config.cnn_channels, site.cnn_step()));
      cb->detach_cnn_input = !config.cnn_grad_through_vit;
      interactions->push_back(cb);
    }
    register_module("interactions", interactions);
  }
  prompt_encoder = register_module("prompt_encoder", prompt::PromptEncoder(config.neck_dim, config.input_size, config.grid_side()));
  decoder = register_module("decoder", decoder::MaskDecoder(config));
}

torch::Tensor SamCtImpl::preprocess(const std::vector<const Image8*>& images) const {
  const int s = config.input_size;
  auto out = torch::empty({static_cast<int64_t>(images.size()), 1, s, s});
  auto acc = out.accessor<float, 4>();
  for (size_t i = 0; i < images.size(); ++i) {
    const auto& im = *images[i];
    if (im.height != s || im.width != s)
      throw std::invalid_argument("preprocess: image is " + std::to_string(im.height) + "x" + std::to_string(im.width) + ", model expects " +
                                  std::to_string(s) + "x" + std::to_string(s));
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) acc[i][0][y][x] = (static_cast<float>(im(y, x)) / 255.0f - 0.5f) / 0.25f;
  }
  return out.expand({-1, 3, -1, -1}).contiguous();
}

ImageFeatures SamCtImpl::encode(const torch::Tensor& images) {
  ImageFeatures f;
  if (!switches.cnn_branch) {
    f.vit = vit->encode(images).embedding;
    return f;
  }
  auto state = cnn->begin(images);
  if (!switches.cross_branch) {
    auto r = vit->encode(images);
    f.vit = r.embedding;
    f.taps = r.taps;
    f.cnn = cnn->finish(state);
    return f;
  }
  std::map<int, size_t> site_of_block;
  std::set<int> hooked;
  for (size_t i = 0; i < config.interaction_sites.size(); ++i) {
    site_of_block[config.interaction_sites[i].block] = i;
    hooked.insert(config.interaction_sites[i].block);
  }
  auto hook = [&](int block, const torch::Tensor& tokens) {
    const size_t i = site_of_block.at(block);
    const int step = config.interaction_sites[i].cnn_step();
    auto& f_cnn = cnn->advance(state, step);
    auto [new_cnn, new_trans] = interactions[i]->as<interaction::CrossBranch>()->forward(f_cnn, tokens);
    state.maps[static_cast<size_t>(step)] = new_cnn;
    return new_trans;
  };
  auto r = vit->encode(images, hooked, hook);
  f.vit = r.embedding;
  f.taps = r.taps;
  f.cnn = cnn->finish(state);
  return f;
}

decoder::DecodeOutput SamCtImpl::decode(const ImageFeatures& features, const prompt::PromptBundle& bundle) {
  return decoder->forward(features.vit, prompt_encoder->image_pe(), bundle, features.cnn.defined() ? features.cnn.full_res32 : torch::Tensor());
}

torch::Tensor SamCtImpl::segment(const ImageFeatures& features, const std::vector<prompt::PromptSet>& prompts) {
  const int64_t n = features.batch();
  if (static_cast<int64_t>(prompts.size()) != n) throw std::invalid_argument("segment: one prompt set per image required");
  std::map<std::string, std::vector<int64_t>> by_layout;
  for (int64_t i = 0; i < n; ++i) by_layout[prompts[static_cast<size_t>(i)].layout()].push_back(i);
  if (by_layout.size() == 1) return decode(features, prompt_encoder->encode(prompts)).logits;
  torch::Tensor out;
  for (const auto& [layout, idx] : by_layout) {
    std::vector<prompt::PromptSet> sub;
    for (auto i : idx) sub.push_back(prompts[static_cast<size_t>(i)]);
    auto index = torch::tensor(idx, torch::kLong);
    auto logits = decode(features.select(index), prompt_encoder->encode(sub)).logits;
    if (!out.defined()) out = torch::zeros({n, 1, logits.size(2), logits.size(3)}, logits.options());
    out = out.index_copy(0, index, logits);
  }
  return out;
}

std::map<std::string, NamedTensors> SamCtImpl::groups() {
  std::map<std::string, NamedTensors> g;
  for (const auto& name : kFrozenGroups) g[name];
  for (const auto& name : kTrainableGroups) g[name];
  for (const auto& p : named_parameters(true)) g[group_of(p.key())].emplace_back(p.key(), p.value());
  for (const auto& b : named_buffers(true)) g[group_of(b.key())].emplace_back(b.key(), b.value());
  return g;
}

NamedTensors SamCtImpl::group(const std::string& name) {
  auto g = groups();
  auto it = g.find(name);
  if (it == g.end()) throw std::invalid_argument("unknown parameter group '" + name + "'");
  return it->second;
}

void SamCtImpl::apply_freeze() {
  for (auto& p : named_parameters(true)) {
    const auto grp = group_of(p.key());
    const bool trainable = std::find(kTrainableGroups.begin(), kTrainableGroups.end(), grp) != kTrainableGroups.end();
    p.value().set_requires_grad(trainable);
  }
}

std::vector<torch::Tensor> SamCtImpl::trainable_parameters() {
  std::vector<torch::Tensor> out;
  for (auto& p : named_parameters(true)) {
    const auto grp = group_of(p.key());
    if (std::find(kTrainableGroups.begin(), kTrainableGroups.end(), grp) != kTrainableGroups.end()) out.push_back(p.value());
  }
  return out;
}

int64_t SamCtImpl::parameter_count(const std::string& name) {
  int64_t n = 0;
  for (auto& p : named_parameters(true))
    if (group_of(p.key()) == name) n += p.value().numel();
  return n;
}

void SamCtImpl::copy_groups_from(SamCtImpl& source, const std::vector<std::string>& groups_to_copy) {
  auto src = source.groups();
  auto dst = groups();
  torch::NoGradGuard no_grad;
  for (const auto& name : groups_to_copy) {
    auto& a = src.at(name);
    auto& b = dst.at(name);
    if (a.size() != b.size())
      throw InvariantError("copy_groups_from: group '" + name + "' has " + std::to_string(a.size()) + " tensors in the source and " +
                           std::to_string(b.size()) + " in the target");
    std::map<std::string, torch::Tensor> by_name(a.begin(), a.end());
    for (auto& [key, t] : b) {
      auto it = by_name.find(key);
      if (it == by_name.end()) throw InvariantError("copy_groups_from: '" + key + "' missing from the source");
      if (it->second.sizes() != t.sizes())
        throw InvariantError("copy_groups_from: '" + key + "' is " + c10::str(it->second.sizes()) + " in the source, " + c10::str(t.sizes()) +
                             " in the target");
      t.copy_(it->second);
    }
  }
}

}  // namespace samct
