#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "e3/ops.hpp"
#include "e3/parameters.hpp"
#include "e3/text.hpp"

namespace e3 {

struct encoder_config {
  std::size_t vocab_size = 0;
  std::size_t d_model = 128;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t feedforward = 256;
  double dropout = 0.4;
  std::size_t max_position = 512;
  std::size_t segments = 16;

  void validate() const {
    if (vocab_size == 0) throw std::invalid_argument("encoder: vocab_size must be positive");
    if (d_model == 0 || heads == 0 || d_model % heads != 0)
      throw std::invalid_argument("encoder: d_model must be a positive multiple of heads");
    if (layers == 0 || feedforward == 0 || max_position == 0 || segments == 0)
      throw std::invalid_argument("encoder: sizes must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("encoder: dropout must be in [0,1)");
  }
};

inline nlohmann::json to_json(const encoder_config& c) {
  return {{"vocab_size", c.vocab_size}, {"d_model", c.d_model},         {"layers", c.layers},
          {"heads", c.heads},           {"feedforward", c.feedforward}, {"dropout", c.dropout},
          {"max_position", c.max_position}, {"segments", c.segments}};
}

inline encoder_config encoder_config_from_json(const nlohmann::json& j) {
  encoder_config c;
  c.vocab_size = j.at("vocab_size");
  c.d_model = j.at("d_model");
  c.layers = j.at("layers");
  c.heads = j.at("heads");
  c.feedforward = j.at("feedforward");
  c.dropout = j.at("dropout");
  c.max_position = j.at("max_position");
  c.segments = j.at("segments");
  return c;
}

/// Token + position + segment embeddings followed by post-norm transformer
/// layers. Produces one d_model row per input token.
template <class T = float>
class encoder {
 public:
  encoder(const encoder_config& config, rng_t& rng, const std::string& prefix = "encoder/")
      : config_(config) {
    config_.validate();
    const std::size_t d = config_.d_model;
    tok_ = uniform_parameter<T>({config_.vocab_size, d}, 0.1, rng);
    pos_ = uniform_parameter<T>({config_.max_position, d}, 0.1, rng);
    seg_ = uniform_parameter<T>({config_.segments, d}, 0.1, rng);
    ln_g_ = basic_tensor<T>::filled({d}, T(1), true);
    ln_b_ = basic_tensor<T>::zeros({d}, true);
    params_.add(prefix + "token_embedding", tok_);
    params_.add(prefix + "position_embedding", pos_);
    params_.add(prefix + "segment_embedding", seg_);
    params_.add(prefix + "embedding_norm/gain", ln_g_);
    params_.add(prefix + "embedding_norm/shift", ln_b_);
    for (std::size_t l = 0; l < config_.layers; ++l) {
      layer ly;
      ly.wq = linear_weight<T>(d, d, rng);
      ly.wk = linear_weight<T>(d, d, rng);
      ly.wv = linear_weight<T>(d, d, rng);
      ly.wo = linear_weight<T>(d, d, rng);
      ly.bq = basic_tensor<T>::zeros({d}, true);
      ly.bk = basic_tensor<T>::zeros({d}, true);
      ly.bv = basic_tensor<T>::zeros({d}, true);
      ly.bo = basic_tensor<T>::zeros({d}, true);
      ly.ln1_g = basic_tensor<T>::filled({d}, T(1), true);
      ly.ln1_b = basic_tensor<T>::zeros({d}, true);
      ly.w1 = linear_weight<T>(d, config_.feedforward, rng);
      ly.b1 = basic_tensor<T>::zeros({config_.feedforward}, true);
      ly.w2 = linear_weight<T>(config_.feedforward, d, rng);
      ly.b2 = basic_tensor<T>::zeros({d}, true);
      ly.ln2_g = basic_tensor<T>::filled({d}, T(1), true);
      ly.ln2_b = basic_tensor<T>::zeros({d}, true);
      const std::string p = prefix + "layer" + std::to_string(l) + "/";
      params_.add(p + "attention/wq", ly.wq);
      params_.add(p + "attention/bq", ly.bq);
      params_.add(p + "attention/wk", ly.wk);
      params_.add(p + "attention/bk", ly.bk);
      params_.add(p + "attention/wv", ly.wv);
      params_.add(p + "attention/bv", ly.bv);
      params_.add(p + "attention/wo", ly.wo);
      params_.add(p + "attention/bo", ly.bo);
      params_.add(p + "attention_norm/gain", ly.ln1_g);
      params_.add(p + "attention_norm/shift", ly.ln1_b);
      params_.add(p + "ffn/w1", ly.w1);
      params_.add(p + "ffn/b1", ly.b1);
      params_.add(p + "ffn/w2", ly.w2);
      params_.add(p + "ffn/b2", ly.b2);
      params_.add(p + "ffn_norm/gain", ly.ln2_g);
      params_.add(p + "ffn_norm/shift", ly.ln2_b);
      layers_.push_back(std::move(ly));
    }
  }

  const encoder_config& config() const { return config_; }
  parameter_set<T>& parameters() { return params_; }
  const parameter_set<T>& parameters() const { return params_; }

  /// U for the given ids. When `attention` is non-null it receives the
  /// [n,n] attention matrix of every layer and head, layer-major.
  basic_tensor<T> encode(std::span<const int> token_ids, std::span<const int> segment_ids,
                         std::span<const int> position_ids, bool train, rng_t& rng,
                         std::vector<basic_tensor<T>>* attention = nullptr) const {
    const std::size_t n = token_ids.size();
    if (n == 0) throw input_error("encoder: empty input");
    if (segment_ids.size() != n || position_ids.size() != n)
      throw input_error("encoder: id lists differ in length");
    if (n > config_.max_position)
      throw input_error("encoder: input of " + std::to_string(n) + " tokens exceeds maximum of " +
                        std::to_string(config_.max_position));
    std::vector<int> seg(segment_ids.begin(), segment_ids.end());
    for (auto& s : seg) s = std::min<int>(s, static_cast<int>(config_.segments) - 1);

    auto x = add(add(embedding(tok_, token_ids), embedding(pos_, position_ids)),
                 embedding(seg_, std::span<const int>(seg)));
    x = dropout(layer_norm(x, ln_g_, ln_b_), config_.dropout, train, rng);
    for (const auto& ly : layers_) x = apply_layer(ly, x, train, rng, attention);
    return dropout(x, config_.dropout, train, rng);
  }

  basic_tensor<T> encode(const assembled_input& input, bool train, rng_t& rng,
                         std::vector<basic_tensor<T>>* attention = nullptr) const {
    return encode(input.token_ids, input.segment_ids, input.position_ids, train, rng, attention);
  }

 private:
  struct layer {
    basic_tensor<T> wq, wk, wv, wo, bq, bk, bv, bo;
    basic_tensor<T> ln1_g, ln1_b;
    basic_tensor<T> w1, b1, w2, b2;
    basic_tensor<T> ln2_g, ln2_b;
  };

  basic_tensor<T> apply_layer(const layer& ly, const basic_tensor<T>& x, bool train, rng_t& rng,
                              std::vector<basic_tensor<T>>* attention) const {
    const std::size_t dh = config_.d_model / config_.heads;
    const T inv_sqrt = T(1) / static_cast<T>(std::sqrt(static_cast<double>(dh)));
    auto q = add_bias(matmul(x, ly.wq), ly.bq);
    auto k = add_bias(matmul(x, ly.wk), ly.bk);
    auto v = add_bias(matmul(x, ly.wv), ly.bv);
    std::vector<basic_tensor<T>> heads;
    heads.reserve(config_.heads);
    for (std::size_t h = 0; h < config_.heads; ++h) {
      auto qh = slice_cols(q, h * dh, dh);
      auto kh = slice_cols(k, h * dh, dh);
      auto vh = slice_cols(v, h * dh, dh);
      auto weights = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt), 1);
      if (attention) attention->push_back(weights);
      heads.push_back(matmul(dropout(weights, config_.dropout, train, rng), vh));
    }
    auto attended = add_bias(matmul(concat(heads, 1), ly.wo), ly.bo);
    auto h1 = layer_norm(add(x, dropout(attended, config_.dropout, train, rng)), ly.ln1_g, ly.ln1_b);
    auto ff = add_bias(matmul(gelu(add_bias(matmul(h1, ly.w1), ly.b1)), ly.w2), ly.b2);
    return layer_norm(add(h1, dropout(ff, config_.dropout, train, rng)), ly.ln2_g, ly.ln2_b);
  }

  encoder_config config_;
  parameter_set<T> params_;
  basic_tensor<T> tok_, pos_, seg_, ln_g_, ln_b_;
  std::vector<layer> layers_;
};

}  // namespace e3
