// Copyright 2026 The semmix Authors
// SPDX-License-Identifier: Apache-2.0

#include "semmix/unet.hpp"

#include <cmath>

#include "semmix/error.hpp"

namespace semmix {

nlohmann::json UNetConfig::to_json() const {
  return {{"in_channels", in_channels},   {"image_size", image_size},
          {"widths", widths},             {"groups", groups},
          {"time_dim", time_dim},         {"token_dim", token_dim},
          {"attention_dim", attention_dim}, {"vocab_size", vocab_size},
          {"attention_levels", {"mid", "up1"}}};
}

UNetConfig UNetConfig::from_json(const nlohmann::json& doc) {
  UNetConfig c;
  try {
    c.in_channels = doc.at("in_channels").get<int>();
    c.image_size = doc.at("image_size").get<int>();
    c.widths = doc.at("widths").get<std::array<int, 3>>();
    c.groups = doc.at("groups").get<int>();
    c.time_dim = doc.at("time_dim").get<int>();
    c.token_dim = doc.at("token_dim").get<int>();
    c.attention_dim = doc.at("attention_dim").get<int>();
    c.vocab_size = doc.at("vocab_size").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw_invalid(std::string("bad architecture descriptor: ") + e.what());
  }
  c.validate();
  return c;
}

void UNetConfig::validate() const {
  if (in_channels < 1 || image_size < 4 || image_size % 4 != 0) {
    throw_invalid("architecture: image size must be a positive multiple of 4");
  }
  for (int w : widths) {
    if (w < 1 || w % groups != 0) throw_invalid("architecture: widths must be divisible by groups");
  }
  if (time_dim < 2 || time_dim % 2 != 0) throw_invalid("architecture: time_dim must be even");
  if (token_dim < 1 || attention_dim < 1) throw_invalid("architecture: bad attention sizes");
  if (vocab_size != 0 && vocab_size < 4) throw_invalid("architecture: vocabulary too small");
}

UNetConfig tiny_unet_config(int vocab_size) {
  UNetConfig c;
  c.image_size = 8;
  c.widths = {4, 4, 8};
  c.groups = 2;
  c.time_dim = 8;
  c.token_dim = 4;
  c.attention_dim = 4;
  c.vocab_size = vocab_size;
  return c;
}

namespace nn {

// ---------------------------------------------------------------- ResBlock

template <typename T>
ResBlock<T>::ResBlock(const std::string& name, int cin, int cout, int time_dim, int groups)
    : cin_(cin), cout_(cout),
      gn1_(name + ".norm1", cin, groups),
      conv1_(name + ".conv1", cin, cout, 3),
      temb_proj_(name + ".temb", time_dim, cout),
      gn2_(name + ".norm2", cout, groups),
      conv2_(name + ".conv2", cout, cout, 3),
      has_skip_(cin != cout) {
  if (has_skip_) skip_ = Conv2d<T>(name + ".skip", cin, cout, 1);
}

template <typename T>
void ResBlock<T>::init(InitRng& rng) {
  gn1_.init();
  conv1_.init(rng);
  temb_proj_.init(rng);
  gn2_.init();
  conv2_.init(rng, /*zero=*/true);
  if (has_skip_) skip_.init(rng);
}

template <typename T>
void ResBlock<T>::collect(ParameterList<T>& out) {
  gn1_.collect(out);
  conv1_.collect(out);
  temb_proj_.collect(out);
  gn2_.collect(out);
  conv2_.collect(out);
  if (has_skip_) skip_.collect(out);
}

template <typename T>
Tensor<T> ResBlock<T>::forward(const Tensor<T>& x, const Mat<T>& temb_act, Cache* cache) const {
  Tensor<T> h = gn1_.forward(x, cache ? &cache->gn1 : nullptr);
  Tensor<T> a = silu(h);
  if (cache) cache->pre_act1 = std::move(h);
  Tensor<T> c1 = conv1_.forward(a, cache ? &cache->conv1 : nullptr);
  add_channel_bias(c1, temb_proj_.forward(temb_act, cache ? &cache->temb : nullptr));
  Tensor<T> h2 = gn2_.forward(c1, cache ? &cache->gn2 : nullptr);
  Tensor<T> a2 = silu(h2);
  if (cache) cache->pre_act2 = std::move(h2);
  Tensor<T> out = conv2_.forward(a2, cache ? &cache->conv2 : nullptr);
  if (has_skip_) {
    out.mat() += skip_.forward(x, cache ? &cache->skip : nullptr).mat();
  } else {
    out.mat() += x.mat();
  }
  return out;
}

template <typename T>
Tensor<T> ResBlock<T>::backward(const Tensor<T>& dy, const Cache& cache, Mat<T>& d_temb_act) {
  Tensor<T> d = conv2_.backward(dy, cache.conv2);
  d = silu_backward(d, cache.pre_act2);
  d = gn2_.backward(d, cache.gn2);
  d_temb_act += temb_proj_.backward(channel_bias_grad(d), cache.temb);
  d = conv1_.backward(d, cache.conv1);
  d = silu_backward(d, cache.pre_act1);
  d = gn1_.backward(d, cache.gn1);
  if (has_skip_) {
    d.mat() += skip_.backward(dy, cache.skip).mat();
  } else {
    d.mat() += dy.mat();
  }
  return d;
}

// ---------------------------------------------------------------- CrossAttention

template <typename T>
CrossAttention<T>::CrossAttention(const std::string& name, int channels, int token_dim,
                                  int attention_dim, int groups)
    : channels_(channels), attention_dim_(attention_dim),
      norm_(name + ".norm", channels, groups),
      to_q_(name + ".to_q", channels, attention_dim),
      to_k_(name + ".to_k", token_dim, attention_dim),
      to_v_(name + ".to_v", token_dim, attention_dim),
      to_out_(name + ".to_out", attention_dim, channels) {}

template <typename T>
void CrossAttention<T>::init(InitRng& rng) {
  norm_.init();
  to_q_.init(rng);
  to_k_.init(rng);
  to_v_.init(rng);
  to_out_.init(rng, /*zero=*/true);
}

template <typename T>
void CrossAttention<T>::collect(ParameterList<T>& out) {
  norm_.collect(out);
  to_q_.collect(out);
  to_k_.collect(out);
  to_v_.collect(out);
  to_out_.collect(out);
}

namespace {

template <typename T>
Mat<T> stack_rows(const std::vector<Mat<T>>& parts, std::vector<Eigen::Index>& offsets) {
  Eigen::Index total = 0;
  offsets.clear();
  for (const auto& p : parts) {
    offsets.push_back(total);
    total += p.rows();
  }
  Mat<T> out(total, parts.empty() ? 0 : parts.front().cols());
  for (std::size_t i = 0; i < parts.size(); ++i) out.middleRows(offsets[i], parts[i].rows()) = parts[i];
  return out;
}

template <typename T>
void softmax_rows(Mat<T>& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const T peak = m.row(r).maxCoeff();
    m.row(r) = (m.row(r).array() - peak).exp();
    m.row(r) /= m.row(r).sum();
  }
}

}  // namespace

template <typename T>
Tensor<T> CrossAttention<T>::forward(const Tensor<T>& x, const std::vector<Mat<T>>& tokens,
                                     const std::vector<std::vector<double>>& scales,
                                     int layer_index, Cache* cache,
                                     AttentionCapture* capture) const {
  const auto plane = static_cast<Eigen::Index>(x.plane());
  const T inv_sqrt_d = static_cast<T>(1.0 / std::sqrt(static_cast<double>(attention_dim_)));
  const Tensor<T> hn = norm_.forward(x, cache ? &cache->norm : nullptr);
  const Mat<T> queries = to_q_.forward(Mat<T>(hn.mat()), cache ? &cache->q : nullptr);
  std::vector<Eigen::Index> offsets;
  const Mat<T> stacked = stack_rows(tokens, offsets);
  const Mat<T> keys = to_k_.forward(stacked, cache ? &cache->k : nullptr);
  Mat<T> values = to_v_.forward(stacked, cache ? &cache->v : nullptr);
  if (capture) {
    for (int pos : capture->masked_values) {
      for (int b = 0; b < x.batch; ++b) {
        if (pos < 0 || pos >= tokens[static_cast<std::size_t>(b)].rows()) {
          throw_invalid("masked value position outside the prompt");
        }
        values.row(offsets[static_cast<std::size_t>(b)] + pos).setZero();
      }
    }
  }

  Mat<T> mixed(queries.rows(), attention_dim_);
  if (cache) {
    cache->attention.assign(static_cast<std::size_t>(x.batch), Mat<T>());
    cache->scales = scales;
  }
  for (int b = 0; b < x.batch; ++b) {
    const auto len = tokens[static_cast<std::size_t>(b)].rows();
    const auto off = offsets[static_cast<std::size_t>(b)];
    Mat<T> attn = (queries.middleRows(b * plane, plane) * keys.middleRows(off, len).transpose()) * inv_sqrt_d;
    softmax_rows(attn);
    Mat<T> weighted = attn;
    scale_attention_columns(weighted, scales[static_cast<std::size_t>(b)]);
    mixed.middleRows(b * plane, plane).noalias() = weighted * values.middleRows(off, len);
    if (capture) {
      capture->raw.resize(static_cast<std::size_t>(x.batch));
      capture->weighted.resize(static_cast<std::size_t>(x.batch));
      capture->raw[static_cast<std::size_t>(b)].push_back({layer_index, attn.template cast<double>()});
      capture->weighted[static_cast<std::size_t>(b)].push_back({layer_index, weighted.template cast<double>()});
    }
    if (cache) cache->attention[static_cast<std::size_t>(b)] = std::move(attn);
  }
  const Mat<T> projected = to_out_.forward(mixed, cache ? &cache->out : nullptr);
  Tensor<T> y = x;
  y.mat() += projected;
  if (cache) {
    cache->queries = queries;
    cache->keys = keys;
    cache->values = values;
  }
  return y;
}

template <typename T>
Tensor<T> CrossAttention<T>::backward(const Tensor<T>& dy, const std::vector<Mat<T>>& tokens,
                                      const Cache& cache, std::vector<Mat<T>>& d_tokens) {
  const auto plane = static_cast<Eigen::Index>(dy.plane());
  const T inv_sqrt_d = static_cast<T>(1.0 / std::sqrt(static_cast<double>(attention_dim_)));
  const Mat<T> d_mixed = to_out_.backward(Mat<T>(dy.mat()), cache.out);

  Mat<T> d_queries = Mat<T>::Zero(cache.queries.rows(), attention_dim_);
  Mat<T> d_keys = Mat<T>::Zero(cache.keys.rows(), attention_dim_);
  Mat<T> d_values = Mat<T>::Zero(cache.values.rows(), attention_dim_);
  Eigen::Index off = 0;
  for (int b = 0; b < dy.batch; ++b) {
    const auto bi = static_cast<std::size_t>(b);
    const auto len = tokens[bi].rows();
    const Mat<T>& attn = cache.attention[bi];
    Mat<T> weighted = attn;
    scale_attention_columns(weighted, cache.scales[bi]);
    const auto d_out_b = d_mixed.middleRows(b * plane, plane);
    const auto values_b = cache.values.middleRows(off, len);
    Mat<T> d_attn = d_out_b * values_b.transpose();
    d_values.middleRows(off, len).noalias() += weighted.transpose() * d_out_b;
    scale_attention_columns(d_attn, cache.scales[bi]);
    // softmax backward: dS = A * (dA - rowsum(dA * A))
    const Eigen::Matrix<T, Eigen::Dynamic, 1> inner = (d_attn.array() * attn.array()).rowwise().sum();
    Mat<T> d_scores = (attn.array() * (d_attn.colwise() - inner).array()).matrix() * inv_sqrt_d;
    d_queries.middleRows(b * plane, plane).noalias() += d_scores * cache.keys.middleRows(off, len);
    d_keys.middleRows(off, len).noalias() += d_scores.transpose() * cache.queries.middleRows(b * plane, plane);
    off += len;
  }
  const Mat<T> d_stacked = to_k_.backward(d_keys, cache.k) + to_v_.backward(d_values, cache.v);
  off = 0;
  for (std::size_t b = 0; b < tokens.size(); ++b) {
    d_tokens[b] += d_stacked.middleRows(off, tokens[b].rows());
    off += tokens[b].rows();
  }
  Tensor<T> d_norm(dy.channels, dy.batch, dy.height, dy.width);
  d_norm.mat() = to_q_.backward(d_queries, cache.q);
  Tensor<T> dx = norm_.backward(d_norm, cache.norm);
  dx.mat() += dy.mat();
  return dx;
}

}  // namespace nn

// ---------------------------------------------------------------- UNet

template <typename T>
UNet<T>::UNet(const UNetConfig& config) : config_(config) {
  config_.validate();
  if (config_.vocab_size == 0) throw_invalid("architecture: vocabulary size not set");
  const auto [w0, w1, w2] = config_.widths;
  const int g = config_.groups;
  const int td = config_.time_dim;
  token_embedding_ = nn::Embedding<T>("tokens", config_.vocab_size, config_.token_dim);
  time_fc1_ = nn::Linear<T>("time.fc1", td, td);
  time_fc2_ = nn::Linear<T>("time.fc2", td, td);
  in_conv_ = nn::Conv2d<T>("in_conv", config_.in_channels, w0, 3);
  down0_ = nn::ResBlock<T>("down0", w0, w0, td, g);
  down1_ = nn::ResBlock<T>("down1", w0, w1, td, g);
  mid_a_ = nn::ResBlock<T>("mid.a", w1, w2, td, g);
  mid_attn_ = nn::CrossAttention<T>("mid.attn", w2, config_.token_dim, config_.attention_dim, g);
  mid_b_ = nn::ResBlock<T>("mid.b", w2, w2, td, g);
  up1_ = nn::ResBlock<T>("up1", w2 + w1, w1, td, g);
  up1_attn_ = nn::CrossAttention<T>("up1.attn", w1, config_.token_dim, config_.attention_dim, g);
  up0_ = nn::ResBlock<T>("up0", w1 + w0, w0, td, g);
  out_norm_ = nn::GroupNorm<T>("out.norm", w0, g);
  out_conv_ = nn::Conv2d<T>("out.conv", w0, config_.in_channels, 3);

  token_embedding_.collect(params_);
  time_fc1_.collect(params_);
  time_fc2_.collect(params_);
  in_conv_.collect(params_);
  down0_.collect(params_);
  down1_.collect(params_);
  mid_a_.collect(params_);
  mid_attn_.collect(params_);
  mid_b_.collect(params_);
  up1_.collect(params_);
  up1_attn_.collect(params_);
  up0_.collect(params_);
  out_norm_.collect(params_);
  out_conv_.collect(params_);
}

template <typename T>
void UNet<T>::init(std::uint64_t seed) {
  nn::InitRng rng(seed);
  token_embedding_.init(rng);
  time_fc1_.init(rng);
  time_fc2_.init(rng);
  in_conv_.init(rng);
  down0_.init(rng);
  down1_.init(rng);
  mid_a_.init(rng);
  mid_attn_.init(rng);
  mid_b_.init(rng);
  up1_.init(rng);
  up1_attn_.init(rng);
  up0_.init(rng);
  out_norm_.init();
  out_conv_.init(rng, /*zero=*/true);
}

template <typename T>
std::vector<const nn::Parameter<T>*> UNet<T>::parameters() const {
  return {params_.begin(), params_.end()};
}

template <typename T>
std::size_t UNet<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto* p : params_) n += p->size();
  return n;
}

template <typename T>
void UNet<T>::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

template <typename T>
nn::Tensor<T> UNet<T>::forward(const nn::Tensor<T>& x, const std::vector<double>& steps,
                               std::span<const Prompt> prompts, UNetTape<T>* tape,
                               AttentionCapture* capture) const {
  const int n = x.batch;
  if (x.channels != config_.in_channels || x.height != config_.image_size ||
      x.width != config_.image_size) {
    throw_invalid("UNet: input shape does not match the architecture");
  }
  if (steps.size() != static_cast<std::size_t>(n) || prompts.size() != static_cast<std::size_t>(n)) {
    throw_invalid("UNet: need one step and one prompt per sample");
  }

  std::vector<nn::Mat<T>> tokens(static_cast<std::size_t>(n));
  std::vector<std::vector<double>> scales(static_cast<std::size_t>(n));
  std::vector<std::vector<int>> ids(static_cast<std::size_t>(n));
  for (std::size_t b = 0; b < tokens.size(); ++b) {
    ids[b].assign(prompts[b].tokens.begin(), prompts[b].tokens.end());
    tokens[b] = token_embedding_.lookup(ids[b]);
    scales[b] = prompts[b].scales;
  }

  UNetTape<T>* tp = tape;
  nn::Mat<T> time_sin = nn::timestep_embedding<T>(steps, config_.time_dim);
  nn::Mat<T> t1 = time_fc1_.forward(time_sin, tp ? &tp->time_fc1 : nullptr);
  nn::Mat<T> temb = time_fc2_.forward(nn::silu(t1), tp ? &tp->time_fc2 : nullptr);
  const nn::Mat<T> temb_act = nn::silu(temb);

  nn::Tensor<T> h0 = in_conv_.forward(x, tp ? &tp->in_conv : nullptr);
  nn::Tensor<T> skip0 = down0_.forward(h0, temb_act, tp ? &tp->down0 : nullptr);
  nn::Tensor<T> skip1 = down1_.forward(nn::avg_pool2(skip0), temb_act, tp ? &tp->down1 : nullptr);
  nn::Tensor<T> m = mid_a_.forward(nn::avg_pool2(skip1), temb_act, tp ? &tp->mid_a : nullptr);
  m = mid_attn_.forward(m, tokens, scales, 0, tp ? &tp->mid_attn : nullptr, capture);
  m = mid_b_.forward(m, temb_act, tp ? &tp->mid_b : nullptr);
  nn::Tensor<T> u1 = up1_.forward(nn::concat_channels(nn::upsample2(m), skip1), temb_act,
                                  tp ? &tp->up1 : nullptr);
  u1 = up1_attn_.forward(u1, tokens, scales, 1, tp ? &tp->up1_attn : nullptr, capture);
  nn::Tensor<T> u0 = up0_.forward(nn::concat_channels(nn::upsample2(u1), skip0), temb_act,
                                  tp ? &tp->up0 : nullptr);
  nn::Tensor<T> o = out_norm_.forward(u0, tp ? &tp->out_norm : nullptr);
  nn::Tensor<T> out = out_conv_.forward(nn::silu(o), tp ? &tp->out_conv : nullptr);

  if (tp) {
    tp->token_ids = std::move(ids);
    tp->tokens = std::move(tokens);
    tp->scales = std::move(scales);
    tp->time_sin = std::move(time_sin);
    tp->time_pre_act = std::move(t1);
    tp->temb = std::move(temb);
    tp->out_pre_act = std::move(o);
    tp->skip0_channels = skip0.channels;
    tp->skip1_channels = skip1.channels;
  }
  return out;
}

template <typename T>
void UNet<T>::backward(const nn::Tensor<T>& d_out, UNetTape<T>& tape) {
  const int n = d_out.batch;
  nn::Mat<T> d_temb_act = nn::Mat<T>::Zero(n, config_.time_dim);
  std::vector<nn::Mat<T>> d_tokens;
  for (const auto& t : tape.tokens) d_tokens.push_back(nn::Mat<T>::Zero(t.rows(), t.cols()));

  nn::Tensor<T> d = out_conv_.backward(d_out, tape.out_conv);
  d = nn::silu_backward(d, tape.out_pre_act);
  d = out_norm_.backward(d, tape.out_norm);
  d = up0_.backward(d, tape.up0, d_temb_act);
  const int w1 = config_.widths[1];
  const int w2 = config_.widths[2];
  auto [d_up0, d_skip0] = nn::split_channels(d, w1);
  d = nn::upsample2_backward(d_up0);
  d = up1_attn_.backward(d, tape.tokens, tape.up1_attn, d_tokens);
  d = up1_.backward(d, tape.up1, d_temb_act);
  auto [d_up1, d_skip1] = nn::split_channels(d, w2);
  d = nn::upsample2_backward(d_up1);
  d = mid_b_.backward(d, tape.mid_b, d_temb_act);
  d = mid_attn_.backward(d, tape.tokens, tape.mid_attn, d_tokens);
  d = mid_a_.backward(d, tape.mid_a, d_temb_act);
  d = nn::avg_pool2_backward(d);
  d.mat() += d_skip1.mat();
  d = down1_.backward(d, tape.down1, d_temb_act);
  d = nn::avg_pool2_backward(d);
  d.mat() += d_skip0.mat();
  d = down0_.backward(d, tape.down0, d_temb_act);
  in_conv_.backward(d, tape.in_conv);

  const nn::Mat<T> d_temb = nn::silu_backward(d_temb_act, tape.temb);
  const nn::Mat<T> d_t1_act = time_fc2_.backward(d_temb, tape.time_fc2);
  time_fc1_.backward(nn::silu_backward(d_t1_act, tape.time_pre_act), tape.time_fc1);
  for (std::size_t b = 0; b < d_tokens.size(); ++b) {
    token_embedding_.accumulate(tape.token_ids[b], d_tokens[b]);
  }
}

template class UNet<float>;
template class UNet<double>;
template class nn::ResBlock<float>;
template class nn::ResBlock<double>;
template class nn::CrossAttention<float>;
template class nn::CrossAttention<double>;

}  // namespace semmix
