#pragma once

#include <functional>
#include <vector>

#include "nsim/config.hpp"
#include "nsim/nn.hpp"

namespace nsim {

/// Raised when an operation needs the disentangled renderer but the model uses the simple one.
class UnsupportedConfigError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Intermediate maps of one renderer component.
struct ComponentPacket {
  Tensor attribute;   // A^k [B, D1, H1, H1]
  Tensor object;      // O^k after sigmoid/softmax attention [B, 1, H1, H1]
  Tensor type;        // v^k [B, D1]
  Tensor sketch;      // R^k [B, D2, H2, H2]
  Tensor mask_logit;  // [B, 1, S, S]
  Tensor content;     // X^k [B, 3, S, S]
};

struct ComposeResult {
  Tensor frame;  // [B, 3, S, S]
  Tensor masks;  // eta [B, K, S, S], softmax over K
};

/// eta = softmax over components of the mask logits; frame = sum_k eta^k * X^k.
ComposeResult compose_final(const std::vector<Tensor>& mask_logits, const std::vector<Tensor>& contents);

/// instance_norm(R) * (1 + gamma(ctx)) + beta(ctx), ctx resized to R with nearest sampling.
Tensor spade_normalize(const Tensor& sketch, const Tensor& context, const Conv2d& gamma, const Conv2d& beta);

struct RenderOutput {
  Tensor frame;
  Tensor masks;                       // undefined for the simple renderer
  std::vector<ComponentPacket> parts;  // static (memory) first, then dynamic (hidden state)
};

/// Linear -> transposed-conv decoder from h, centre-cropped to the frame size.
class SimpleRenderer {
 public:
  SimpleRenderer(const ModelConfig& config, const Rng& root);
  Tensor render(const Tensor& h) const;
  void visit(const std::function<void(const std::string&, Tensor&)>& fn);
  void collect(TensorList& params) const;

  Linear seed;
  std::vector<ConvTranspose2d> decoder;

 private:
  ModelConfig config_;
  ArchSpec arch_;
};

/// Static/dynamic component renderer composed through per-pixel fine masks.
class DisentangledRenderer {
 public:
  static constexpr int kStatic = 0;
  static constexpr int kDynamic = 1;

  DisentangledRenderer(const ModelConfig& config, const Rng& root);

  /// c = {m, h}. When `static_override` is defined it replaces X^static before composition.
  RenderOutput render(const Tensor& m, const Tensor& h, const Tensor& static_override = Tensor()) const;
  /// X^k with the other component's input set to zero.
  Tensor render_component_alone(int k, const Tensor& c) const;

  /// Copy whose parameters are detached views of this renderer's parameters.
  DisentangledRenderer frozen() const;

  void visit(const std::function<void(const std::string&, Tensor&)>& fn);
  void collect(TensorList& params) const;

  struct Component {
    Linear seed;
    std::vector<ConvTranspose2d> attribute;
    Linear type;
    std::vector<ConvTranspose2d> sketch;
    Conv2d spade_gamma;
    Conv2d spade_beta;
    std::vector<ConvTranspose2d> content;
    Conv2d mask_head;
    Conv2d content_head;
  };
  Component parts[2];

 private:
  ModelConfig config_;
  ArchSpec arch_;
};

}  // namespace nsim
