#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include <json.hpp>

namespace gedlab {

enum class HeadType { final_layer, avgl, mhmla };

std::string_view head_type_name(HeadType type);
HeadType parse_head_type(std::string_view name);

// Architecture hyperparameters. Defaults are the desk-scale configuration;
// vocab_size is filled in from the corpus vocabulary.
struct ModelConfig {
  std::size_t n_layers = 4;
  std::size_t hidden = 64;
  std::size_t self_attn_heads = 4;
  std::size_t ffn_dim = 128;
  std::size_t layer_attn_heads = 4;
  std::size_t key_dim = 0;  // 0 selects hidden / layer_attn_heads
  std::size_t vocab_size = 0;
  std::size_t max_len = 32;
  double dropout = 0.3;
  double attn_dropout = 0.3;
  HeadType head_type = HeadType::mhmla;
  std::size_t n_classes = 2;

  std::size_t head_width() const { return hidden / layer_attn_heads; }
  std::size_t resolved_key_dim() const { return key_dim ? key_dim : head_width(); }
  // Throws ConfigError naming the first violated invariant.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

// Optimizer and schedule. Defaults follow the fine-tuning recipe for a
// pretrained encoder; desk() is the from-scratch toy setting.
struct TrainConfig {
  double learning_rate = 5e-5;
  std::size_t batch_size = 32;
  std::size_t epochs = 5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;

  static TrainConfig desk();
  void validate() const;

  bool operator==(const TrainConfig&) const = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

// Hex digest identifying a model configuration.
std::string config_fingerprint(const ModelConfig& c);

}  // namespace gedlab
