// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "semmix/attention.hpp"
#include "semmix/nn/layers.hpp"
#include "semmix/prompt.hpp"

namespace semmix {

/// Architecture descriptor. Three resolutions (image, /2, /4); cross-attention
/// sits at the middle (/4) block and the /2 decoder block.
struct UNetConfig {
  int in_channels = 1;
  int image_size = 32;
  std::array<int, 3> widths{32, 64, 128};
  int groups = 8;
  int time_dim = 128;
  int token_dim = 64;
  int attention_dim = 64;
  int vocab_size = 0;  // 0 means taken from the training data

  nlohmann::json to_json() const;
  static UNetConfig from_json(const nlohmann::json& doc);
  void validate() const;
  friend bool operator==(const UNetConfig&, const UNetConfig&) = default;
};

/// Tiny configuration used by gradient checks (well under 10k parameters).
UNetConfig tiny_unet_config(int vocab_size);

namespace nn {

template <typename T>
class ResBlock {
 public:
  struct Cache {
    typename GroupNorm<T>::Cache gn1;
    Tensor<T> pre_act1;
    typename Conv2d<T>::Cache conv1;
    typename Linear<T>::Cache temb;
    typename GroupNorm<T>::Cache gn2;
    Tensor<T> pre_act2;
    typename Conv2d<T>::Cache conv2;
    typename Conv2d<T>::Cache skip;
  };

  ResBlock() = default;
  ResBlock(const std::string& name, int cin, int cout, int time_dim, int groups);

  /// `temb_act` is the already activated step embedding (batch x time_dim).
  Tensor<T> forward(const Tensor<T>& x, const Mat<T>& temb_act, Cache* cache) const;
  /// Returns dx and accumulates the step-embedding gradient into `d_temb_act`.
  Tensor<T> backward(const Tensor<T>& dy, const Cache& cache, Mat<T>& d_temb_act);

  void init(InitRng& rng);
  void collect(ParameterList<T>& out);

 private:
  int cin_ = 0;
  int cout_ = 0;
  GroupNorm<T> gn1_;
  Conv2d<T> conv1_;
  Linear<T> temb_proj_;
  GroupNorm<T> gn2_;
  Conv2d<T> conv2_;
  bool has_skip_ = false;
  Conv2d<T> skip_;
};

/// Single-head image-to-text cross-attention with a residual connection.
/// Per-token scales multiply the post-softmax attention columns.
template <typename T>
class CrossAttention {
 public:
  struct Cache {
    typename GroupNorm<T>::Cache norm;
    typename Linear<T>::Cache q;
    typename Linear<T>::Cache k;
    typename Linear<T>::Cache v;
    typename Linear<T>::Cache out;
    Mat<T> queries;                   // rows x d
    Mat<T> keys;                      // stacked tokens x d
    Mat<T> values;                    // stacked tokens x d
    std::vector<Mat<T>> attention;    // per sample: HW x L, before scaling
    std::vector<std::vector<double>> scales;
  };

  CrossAttention() = default;
  CrossAttention(const std::string& name, int channels, int token_dim, int attention_dim, int groups);

  /// `tokens[b]` is the embedded prompt of sample b (L_b x token_dim).
  Tensor<T> forward(const Tensor<T>& x, const std::vector<Mat<T>>& tokens,
                    const std::vector<std::vector<double>>& scales, int layer_index,
                    Cache* cache, AttentionCapture* capture) const;
  /// Returns dx; per-sample token-embedding gradients are added to `d_tokens`.
  Tensor<T> backward(const Tensor<T>& dy, const std::vector<Mat<T>>& tokens,
                     const Cache& cache, std::vector<Mat<T>>& d_tokens);

  void init(InitRng& rng);
  void collect(ParameterList<T>& out);

 private:
  int channels_ = 0;
  int attention_dim_ = 0;
  GroupNorm<T> norm_;
  Linear<T> to_q_;
  Linear<T> to_k_;
  Linear<T> to_v_;
  Linear<T> to_out_;
};

}  // namespace nn

/// Everything the backward pass needs from one forward call.
template <typename T>
struct UNetTape;

/// Conditional noise-prediction U-Net.
template <typename T>
class UNet {
 public:
  explicit UNet(const UNetConfig& config);

  const UNetConfig& config() const { return config_; }

  /// x: (in_channels, batch, size, size). `steps` and `prompts` have one
  /// entry per sample. Pass a tape to enable backward().
  nn::Tensor<T> forward(const nn::Tensor<T>& x, const std::vector<double>& steps,
                        std::span<const Prompt> prompts, UNetTape<T>* tape = nullptr,
                        AttentionCapture* capture = nullptr) const;

  /// Accumulates parameter gradients for d(loss)/d(output).
  void backward(const nn::Tensor<T>& d_out, UNetTape<T>& tape);

  void init(std::uint64_t seed);
  nn::ParameterList<T>& parameters() { return params_; }
  std::vector<const nn::Parameter<T>*> parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();

  UNet(const UNet&) = delete;
  UNet& operator=(const UNet&) = delete;

 private:
  UNetConfig config_;
  nn::Embedding<T> token_embedding_;
  nn::Linear<T> time_fc1_;
  nn::Linear<T> time_fc2_;
  nn::Conv2d<T> in_conv_;
  nn::ResBlock<T> down0_;
  nn::ResBlock<T> down1_;
  nn::ResBlock<T> mid_a_;
  nn::CrossAttention<T> mid_attn_;
  nn::ResBlock<T> mid_b_;
  nn::ResBlock<T> up1_;
  nn::CrossAttention<T> up1_attn_;
  nn::ResBlock<T> up0_;
  nn::GroupNorm<T> out_norm_;
  nn::Conv2d<T> out_conv_;
  nn::ParameterList<T> params_;
};

template <typename T>
struct UNetTape {
  std::vector<std::vector<int>> token_ids;
  std::vector<nn::Mat<T>> tokens;
  std::vector<std::vector<double>> scales;
  nn::Mat<T> time_sin;
  typename nn::Linear<T>::Cache time_fc1;
  nn::Mat<T> time_pre_act;
  typename nn::Linear<T>::Cache time_fc2;
  nn::Mat<T> temb;
  typename nn::Conv2d<T>::Cache in_conv;
  typename nn::ResBlock<T>::Cache down0;
  typename nn::ResBlock<T>::Cache down1;
  typename nn::ResBlock<T>::Cache mid_a;
  typename nn::CrossAttention<T>::Cache mid_attn;
  typename nn::ResBlock<T>::Cache mid_b;
  typename nn::ResBlock<T>::Cache up1;
  typename nn::CrossAttention<T>::Cache up1_attn;
  typename nn::ResBlock<T>::Cache up0;
  typename nn::GroupNorm<T>::Cache out_norm;
  nn::Tensor<T> out_pre_act;
  typename nn::Conv2d<T>::Cache out_conv;
  int skip0_channels = 0;
  int skip1_channels = 0;
};

}  // namespace semmix
