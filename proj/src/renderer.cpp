#include "nsim/renderer.hpp"

namespace nsim {

ComposeResult compose_final(const std::vector<Tensor>& mask_logits, const std::vector<Tensor>& contents) {
  if (mask_logits.empty() || mask_logits.size() != contents.size()) {
    throw ShapeError("compose_final: need one mask logit per content image");
  }
  const Shape& cs = contents[0].shape();
  for (size_t k = 0; k < contents.size(); ++k) {
    const Shape& ms = mask_logits[k].shape();
    if (contents[k].shape() != cs || ms.size() != 4 || ms[1] != 1 || ms[0] != cs[0] || ms[2] != cs[2] ||
        ms[3] != cs[3]) {
      throw ShapeError("compose_final: component " + std::to_string(k) + " has mask " + shape_str(ms) +
                       " and content " + shape_str(contents[k].shape()) + ", expected content " + shape_str(cs));
    }
  }
  ComposeResult r;
  r.masks = softmax(concat(mask_logits, 1), 1);
  const int64_t k = static_cast<int64_t>(contents.size());
  for (int64_t i = 0; i < k; ++i) {
    const Tensor term = mul(slice(r.masks, 1, i, 1), contents[static_cast<size_t>(i)]);
    r.frame = i == 0 ? term : add(r.frame, term);
  }
  return r;
}

Tensor spade_normalize(const Tensor& sketch, const Tensor& context, const Conv2d& gamma, const Conv2d& beta) {
  const Tensor normalized = normalize(sketch, NormKind::kInstance);
  const Tensor ctx = resize_nearest(context, sketch.dim(2), sketch.dim(3));
  return add(mul(normalized, add_scalar(gamma(ctx), 1.0f)), beta(ctx));
}

namespace {

Tensor run_transposed(const std::vector<ConvTranspose2d>& layers, Tensor x, bool activate_last) {
  for (size_t i = 0; i < layers.size(); ++i) {
    x = layers[i](x);
    if (activate_last || i + 1 < layers.size()) x = leaky_relu(x);
  }
  return x;
}

Tensor centre_crop(const Tensor& x, int64_t size) {
  const int64_t h = x.dim(2);
  if (h == size) return x;
  if (h < size) throw ShapeError("renderer output " + shape_str(x.shape()) + " smaller than frame size");
  const int64_t off = (h - size) / 2;
  return slice(slice(x, 2, off, size), 3, off, size);
}

template <typename Layer>
void visit_layer(Layer& layer, const std::function<void(const std::string&, Tensor&)>& fn) {
  fn(layer.name + ".weight", layer.weight);
  if (layer.bias.defined()) fn(layer.name + ".bias", layer.bias);
}

}  // namespace

SimpleRenderer::SimpleRenderer(const ModelConfig& config, const Rng& root) : config_(config), arch_(config.arch()) {
  seed = Linear("render.seed", config.hidden_dim,
                static_cast<int64_t>(arch_.simple_seed_channels) * arch_.simple_seed_size * arch_.simple_seed_size, root);
  int64_t channels = arch_.simple_seed_channels;
  int64_t size = arch_.simple_seed_size;
  for (size_t i = 0; i < arch_.simple_decoder.size(); ++i) {
    decoder.emplace_back("render.decoder" + std::to_string(i), channels, arch_.simple_decoder[i], root);
    channels = arch_.simple_decoder[i].out;
    size = decoder.back().out_size(size);
  }
  if (channels != 3 || size < config.image_size) {
    throw ContractError("simple renderer tables produce " + std::to_string(size) + "px frames, need " +
                        std::to_string(config.image_size));
  }
}

Tensor SimpleRenderer::render(const Tensor& h) const {
  Tensor x = leaky_relu(seed(h));
  x = reshape(x, {h.dim(0), arch_.simple_seed_channels, arch_.simple_seed_size, arch_.simple_seed_size});
  return tanh(centre_crop(run_transposed(decoder, x, false), config_.image_size));
}

void SimpleRenderer::visit(const std::function<void(const std::string&, Tensor&)>& fn) {
  visit_layer(seed, fn);
  for (auto& l : decoder) visit_layer(l, fn);
}

void SimpleRenderer::collect(TensorList& params) const {
  seed.collect(params);
  for (const auto& l : decoder) l.collect(params);
}

DisentangledRenderer::DisentangledRenderer(const ModelConfig& config, const Rng& root)
    : config_(config), arch_(config.arch()) {
  const char* names[2] = {"render.static", "render.dynamic"};
  const int64_t inputs[2] = {config.memory_d, config.hidden_dim};
  for (int k = 0; k < 2; ++k) {
    Component& c = parts[k];
    const std::string p = names[k];
    c.seed = Linear(p + ".seed", inputs[k],
                    static_cast<int64_t>(arch_.seed_channels) * arch_.seed_size * arch_.seed_size, root);
    int64_t ch = arch_.seed_channels;
    for (size_t i = 0; i < arch_.attribute_decoder.size(); ++i) {
      c.attribute.emplace_back(p + ".attribute" + std::to_string(i), ch, arch_.attribute_decoder[i], root);
      ch = arch_.attribute_decoder[i].out;
    }
    if (ch != arch_.type_dim + 1) throw ContractError("attribute decoder must end with type_dim + 1 channels");
    c.type = Linear(p + ".type", inputs[k], arch_.type_dim, root);
    ch = arch_.type_dim;
    for (size_t i = 0; i < arch_.sketch_decoder.size(); ++i) {
      c.sketch.emplace_back(p + ".sketch" + std::to_string(i), ch, arch_.sketch_decoder[i], root);
      ch = arch_.sketch_decoder[i].out;
    }
    const int sk = arch_.sketch_decoder.back().out;
    c.spade_gamma = Conv2d(p + ".spade_gamma", arch_.type_dim, {sk, 3, 1, 1}, root);
    c.spade_beta = Conv2d(p + ".spade_beta", arch_.type_dim, {sk, 3, 1, 1}, root);
    for (size_t i = 0; i < arch_.content_decoder.size(); ++i) {
      c.content.emplace_back(p + ".content" + std::to_string(i), ch, arch_.content_decoder[i], root);
      ch = arch_.content_decoder[i].out;
    }
    c.mask_head = Conv2d(p + ".mask_head", ch, {1, arch_.final_kernel, 1, arch_.final_padding}, root);
    c.content_head = Conv2d(p + ".content_head", ch, {3, arch_.final_kernel, 1, arch_.final_padding}, root);
  }
}

RenderOutput DisentangledRenderer::render(const Tensor& m, const Tensor& h, const Tensor& static_override) const {
  const Tensor inputs[2] = {m, h};
  const int64_t b = h.dim(0);
  RenderOutput out;
  out.parts.resize(2);

  Tensor object_logits[2];
  for (int k = 0; k < 2; ++k) {
    const Component& c = parts[k];
    Tensor x = leaky_relu(c.seed(inputs[k]));
    x = reshape(x, {b, arch_.seed_channels, arch_.seed_size, arch_.seed_size});
    x = run_transposed(c.attribute, x, false);
    const auto ao = split(x, 1, {arch_.type_dim, 1});
    out.parts[static_cast<size_t>(k)].attribute = ao[0];
    object_logits[k] = ao[1];
    out.parts[static_cast<size_t>(k)].type = leaky_relu(c.type(inputs[k]));
  }
  if (config_.attention == ObjectAttention::kSoftmax) {
    const Tensor att = softmax(concat({object_logits[0], object_logits[1]}, 1), 1);
    out.parts[0].object = slice(att, 1, 0, 1);
    out.parts[1].object = slice(att, 1, 1, 1);
  } else {
    out.parts[0].object = sigmoid(object_logits[0]);
    out.parts[1].object = sigmoid(object_logits[1]);
  }

  std::vector<Tensor> mask_logits;
  std::vector<Tensor> contents;
  for (int k = 0; k < 2; ++k) {
    const Component& c = parts[k];
    ComponentPacket& p = out.parts[static_cast<size_t>(k)];
    const Tensor v = reshape(p.type, {b, arch_.type_dim, 1, 1});
    p.sketch = run_transposed(c.sketch, mul(v, p.object), false);
    Tensor y = spade_normalize(p.sketch, mul(p.object, p.attribute), c.spade_gamma, c.spade_beta);
    y = run_transposed(c.content, y, true);
    p.mask_logit = c.mask_head(y);
    p.content = tanh(c.content_head(y));
    mask_logits.push_back(p.mask_logit);
    contents.push_back(k == kStatic && static_override.defined() ? static_override : p.content);
  }
  const ComposeResult composed = compose_final(mask_logits, contents);
  out.frame = composed.frame;
  out.masks = composed.masks;
  return out;
}

Tensor DisentangledRenderer::render_component_alone(int k, const Tensor& c) const {
  if (k != kStatic && k != kDynamic) throw ContractError("render_component_alone: component must be 0 or 1");
  const int64_t b = c.dim(0);
  if (k == kStatic) return render(c, Tensor::zeros({b, config_.hidden_dim})).parts[0].content;
  return render(Tensor::zeros({b, config_.memory_d}), c).parts[1].content;
}

DisentangledRenderer DisentangledRenderer::frozen() const {
  DisentangledRenderer copy = *this;
  copy.visit([](const std::string&, Tensor& t) { t = t.detach(); });
  return copy;
}

void DisentangledRenderer::visit(const std::function<void(const std::string&, Tensor&)>& fn) {
  for (auto& c : parts) {
    visit_layer(c.seed, fn);
    for (auto& l : c.attribute) visit_layer(l, fn);
    visit_layer(c.type, fn);
    for (auto& l : c.sketch) visit_layer(l, fn);
    visit_layer(c.spade_gamma, fn);
    visit_layer(c.spade_beta, fn);
    for (auto& l : c.content) visit_layer(l, fn);
    visit_layer(c.mask_head, fn);
    visit_layer(c.content_head, fn);
  }
}

void DisentangledRenderer::collect(TensorList& params) const {
  auto* self = const_cast<DisentangledRenderer*>(this);
  self->visit([&](const std::string& name, Tensor& t) { params.push_back({name, t}); });
}

}  // namespace nsim
