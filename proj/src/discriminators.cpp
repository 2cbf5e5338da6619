#include "nsim/discriminators.hpp"

namespace nsim {

int sample_negative_action(int action, int action_count, Rng& rng) {
  if (action_count < 2) throw ContractError("negative action sampling needs at least two actions");
  if (action < 0 || action >= action_count) throw ContractError("negative action sampling: action out of range");
  const int r = rng.uniform_int(action_count - 1);
  return r >= action ? r + 1 : r;
}

namespace {

Tensor conv_bn_act(const Discriminators::ConvBn& l, const Tensor& x, BnMode mode) {
  return leaky_relu(l.bn(l.conv(x), mode));
}

Tensor conv3d_bn_act(const Discriminators::Conv3dBn& l, const Tensor& x, BnMode mode) {
  return leaky_relu(l.bn(l.conv(x), mode));
}

int64_t conv_out(int64_t in, int k, int s, int p) { return (in + 2 * p - k) / s + 1; }

}  // namespace

Discriminators::Discriminators(const ModelConfig& config, const Rng& root) : config_(config), arch_(config.arch()) {
  int64_t ch = config.image_channels;
  int64_t size = config.image_size;
  for (size_t i = 0; i < arch_.disc_encoder.size(); ++i) {
    const ConvSpec& s = arch_.disc_encoder[i];
    const std::string n = "disc.encoder" + std::to_string(i);
    encoder.push_back({Conv2d(n, ch, s, root), BatchNorm(n + ".bn", s.out)});
    ch = s.out;
    size = conv_out(size, s.kernel, s.stride, s.padding);
  }
  feature_channels_ = ch;
  feature_size_ = size;

  patch_mid = {Conv2d("disc.patch0", ch, arch_.patch_head[0], root), BatchNorm("disc.patch0.bn", arch_.patch_head[0].out)};
  patch_out = Conv2d("disc.patch1", arch_.patch_head[0].out, arch_.patch_head[1], root);
  full_mid = {Conv2d("disc.full0", ch, arch_.full_head[0], root), BatchNorm("disc.full0.bn", arch_.full_head[0].out)};
  full_out = Conv2d("disc.full1", arch_.full_head[0].out, arch_.full_head[1], root);
  {
    int64_t fs = conv_out(size, arch_.full_head[0].kernel, arch_.full_head[0].stride, arch_.full_head[0].padding);
    fs = conv_out(fs, arch_.full_head[1].kernel, arch_.full_head[1].stride, arch_.full_head[1].padding);
    if (fs != 1) throw ContractError("full-frame head must reduce features to a single logit");
  }

  const int dim = arch_.action_dim;
  action_embed = Linear("disc.action_embed", config.action_count, dim, root);
  merge = {Conv2d("disc.merge", 2 * ch, {dim, arch_.merge_kernel, 1, 0}, root), BatchNorm("disc.merge.bn", dim)};
  if (conv_out(size, arch_.merge_kernel, 1, 0) != 1) throw ContractError("merge conv must reduce features to 1x1");
  pair_hidden = Linear("disc.pair_hidden", 2 * dim, dim, root);
  pair_bn = BatchNorm("disc.pair_bn", dim);
  pair_out = Linear("disc.pair_out", dim, 1, root);
  psi_out = Linear("disc.psi", dim, config.action_count, root);
  phi_out = Linear("disc.phi", dim, config.z_dim, root);

  int64_t tch = ch;
  for (size_t i = 0; i < arch_.temporal_trunk.size(); ++i) {
    const Conv3dSpec& s = arch_.temporal_trunk[i];
    const std::string n = "disc.temporal" + std::to_string(i);
    temporal_trunk.push_back({Conv3d(n, tch, s, root), BatchNorm(n + ".bn", s.out)});
    tch = s.out;
  }
  for (int l = 0; l < config.temporal_levels; ++l) {
    const TemporalLevelSpec& spec = arch_.temporal_levels[static_cast<size_t>(l)];
    const std::string n = "disc.level" + std::to_string(l + 1);
    if (spec.has_down) {
      temporal_down.push_back({Conv3d(n + ".down", tch, spec.down, root), BatchNorm(n + ".down.bn", spec.down.out)});
      tch = spec.down.out;
    }
    temporal_heads.emplace_back(n + ".head", tch, spec.head, root);
  }
}

Tensor Discriminators::encode_shared(const Tensor& frames, BnMode mode) const {
  if (frames.rank() != 4 || frames.dim(1) != config_.image_channels || frames.dim(2) != config_.image_size ||
      frames.dim(3) != config_.image_size) {
    throw ShapeError("encode_shared: unexpected frame batch " + shape_str(frames.shape()));
  }
  Tensor x = frames;
  for (const ConvBn& l : encoder) x = conv_bn_act(l, x, mode);
  return x;
}

SingleFrameLogits Discriminators::judge_single_frame(const Tensor& features, BnMode mode) const {
  SingleFrameLogits out;
  out.patch = patch_out(conv_bn_act(patch_mid, features, mode));
  out.full = reshape(full_out(conv_bn_act(full_mid, features, mode)), {features.dim(0), 1});
  return out;
}

Tensor Discriminators::pair_features(const Tensor& feat_t, const Tensor& feat_t1, const Tensor& action_embedding,
                                     BnMode mode) const {
  const int64_t b = feat_t.dim(0);
  const Tensor merged = reshape(conv_bn_act(merge, concat({feat_t, feat_t1}, 1), mode), {b, arch_.action_dim});
  return leaky_relu(pair_bn(pair_hidden(concat({merged, action_embedding}, 1)), mode));
}

Tensor Discriminators::judge_action_pair(const Tensor& feat_t, const Tensor& feat_t1, std::span<const int> actions,
                                         BnMode mode) const {
  const Tensor emb = action_embed(one_hot(actions, config_.action_count));
  return pair_out(pair_features(feat_t, feat_t1, emb, mode));
}

ActionAux Discriminators::judge_aux(const Tensor& feat_t, const Tensor& feat_t1, BnMode mode) const {
  const Tensor h = pair_features(feat_t, feat_t1, Tensor::zeros({feat_t.dim(0), arch_.action_dim}), mode);
  return {psi_out(h), phi_out(h)};
}

std::vector<Tensor> Discriminators::judge_temporal(const Tensor& features, int64_t batch, int64_t length,
                                                   BnMode mode) const {
  if (length < temporal_min_length()) {
    throw ContractError("judge_temporal: sequence of " + std::to_string(length) + " frames is shorter than the " +
                        std::to_string(temporal_min_length()) + " needed for " + std::to_string(levels()) + " levels");
  }
  if (features.dim(0) != batch * length) throw ShapeError("judge_temporal: feature count differs from batch*length");
  const int64_t c = features.dim(1), s = features.dim(2);
  Tensor x = permute(reshape(features, {batch, length, c, s, s}), {0, 2, 1, 3, 4});
  for (const Conv3dBn& l : temporal_trunk) x = conv3d_bn_act(l, x, mode);
  std::vector<Tensor> logits;
  size_t down = 0;
  for (int l = 0; l < levels(); ++l) {
    if (arch_.temporal_levels[static_cast<size_t>(l)].has_down) x = conv3d_bn_act(temporal_down[down++], x, mode);
    logits.push_back(reshape(temporal_heads[static_cast<size_t>(l)](x), {batch, -1}));
  }
  return logits;
}

int64_t Discriminators::temporal_min_length() const {
  for (int64_t t = 1; t < 4096; ++t) {
    int64_t cur = t;
    bool ok = true;
    for (const Conv3dSpec& s : arch_.temporal_trunk) {
      if (cur + 2 * s.padding_t < s.kernel_t) ok = false;
      cur = conv_out(cur, s.kernel_t, s.stride_t, s.padding_t);
    }
    for (int l = 0; ok && l < levels(); ++l) {
      const TemporalLevelSpec& spec = arch_.temporal_levels[static_cast<size_t>(l)];
      if (spec.has_down) {
        if (cur + 2 * spec.down.padding_t < spec.down.kernel_t) {
          ok = false;
          break;
        }
        cur = conv_out(cur, spec.down.kernel_t, spec.down.stride_t, spec.down.padding_t);
      }
      if (cur + 2 * spec.head.padding_t < spec.head.kernel_t) ok = false;
    }
    if (ok) return t;
  }
  throw ContractError("temporal pyramid never produces logits");
}

std::vector<int64_t> Discriminators::temporal_receptive_fields() const {
  int64_t rf = 1, jump = 1;
  for (const Conv3dSpec& s : arch_.temporal_trunk) {
    rf += (s.kernel_t - 1) * jump;
    jump *= s.stride_t;
  }
  std::vector<int64_t> out;
  for (int l = 0; l < levels(); ++l) {
    const TemporalLevelSpec& spec = arch_.temporal_levels[static_cast<size_t>(l)];
    if (spec.has_down) {
      rf += (spec.down.kernel_t - 1) * jump;
      jump *= spec.down.stride_t;
    }
    out.push_back(rf + (spec.head.kernel_t - 1) * jump);
  }
  return out;
}

void Discriminators::collect(TensorList& params) const {
  for (const ConvBn& l : encoder) {
    l.conv.collect(params);
    l.bn.collect(params);
  }
  patch_mid.conv.collect(params);
  patch_mid.bn.collect(params);
  patch_out.collect(params);
  full_mid.conv.collect(params);
  full_mid.bn.collect(params);
  full_out.collect(params);
  action_embed.collect(params);
  merge.conv.collect(params);
  merge.bn.collect(params);
  pair_hidden.collect(params);
  pair_bn.collect(params);
  pair_out.collect(params);
  psi_out.collect(params);
  phi_out.collect(params);
  for (const Conv3dBn& l : temporal_trunk) {
    l.conv.collect(params);
    l.bn.collect(params);
  }
  for (const Conv3dBn& l : temporal_down) {
    l.conv.collect(params);
    l.bn.collect(params);
  }
  for (const Conv3d& h : temporal_heads) h.collect(params);
}

void Discriminators::collect_buffers(TensorList& buffers) const {
  for (const ConvBn& l : encoder) l.bn.collect_buffers(buffers);
  patch_mid.bn.collect_buffers(buffers);
  full_mid.bn.collect_buffers(buffers);
  merge.bn.collect_buffers(buffers);
  pair_bn.collect_buffers(buffers);
  for (const Conv3dBn& l : temporal_trunk) l.bn.collect_buffers(buffers);
  for (const Conv3dBn& l : temporal_down) l.bn.collect_buffers(buffers);
}

}  // namespace nsim
