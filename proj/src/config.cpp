#include "gedlab/config.hpp"

#include "gedlab/errors.hpp"
#include "gedlab/hash.hpp"

namespace gedlab {

std::string_view head_type_name(HeadType type) {
  switch (type) {
    case HeadType::final_layer: return "final";
    case HeadType::avgl: return "avgl";
    case HeadType::mhmla: return "mhmla";
  }
  return "?";
}

HeadType parse_head_type(std::string_view name) {
  if (name == "final") return HeadType::final_layer;
  if (name == "avgl") return HeadType::avgl;
  if (name == "mhmla") return HeadType::mhmla;
  throw ConfigError("unknown head type '" + std::string(name) + "' (expected final, avgl or mhmla)");
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("model config: " + what); };
  if (n_layers < 1) fail("n_layers must be >= 1");
  if (hidden < 1) fail("hidden must be >= 1");
  if (self_attn_heads < 1 || hidden % self_attn_heads != 0) {
    fail("hidden " + std::to_string(hidden) + " not divisible by self_attn_heads " +
         std::to_string(self_attn_heads));
  }
  if (layer_attn_heads < 1 || hidden % layer_attn_heads != 0) {
    fail("hidden " + std::to_string(hidden) + " not divisible by layer_attn_heads " +
         std::to_string(layer_attn_heads));
  }
  if (ffn_dim < 1) fail("ffn_dim must be >= 1");
  if (max_len < 1) fail("max_len must be >= 1");
  if (vocab_size < 4) fail("vocab_size must be >= 4 (reserved ids)");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (!(attn_dropout >= 0.0 && attn_dropout < 1.0)) fail("attn_dropout must lie in [0, 1)");
  if (n_classes < 2) fail("n_classes must be >= 2");
}

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.learning_rate = 1e-3;
  c.batch_size = 16;
  c.epochs = 10;
  return c;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("train config: learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("train config: adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("train config: adam_eps must be > 0");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"n_layers", c.n_layers},
                     {"hidden", c.hidden},
                     {"self_attn_heads", c.self_attn_heads},
                     {"ffn_dim", c.ffn_dim},
                     {"layer_attn_heads", c.layer_attn_heads},
                     {"key_dim", c.resolved_key_dim()},
                     {"vocab_size", c.vocab_size},
                     {"max_len", c.max_len},
                     {"dropout", c.dropout},
                     {"attn_dropout", c.attn_dropout},
                     {"head_type", std::string(head_type_name(c.head_type))},
                     {"n_classes", c.n_classes}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.n_layers = j.value("n_layers", c.n_layers);
  c.hidden = j.value("hidden", c.hidden);
  c.self_attn_heads = j.value("self_attn_heads", c.self_attn_heads);
  c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
  c.layer_attn_heads = j.value("layer_attn_heads", c.layer_attn_heads);
  c.key_dim = j.value("key_dim", c.key_dim);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.max_len = j.value("max_len", c.max_len);
  c.dropout = j.value("dropout", c.dropout);
  c.attn_dropout = j.value("attn_dropout", c.attn_dropout);
  if (j.contains("head_type")) c.head_type = parse_head_type(j.at("head_type").get<std::string>());
  c.n_classes = j.value("n_classes", c.n_classes);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},
                     {"epochs", c.epochs},               {"beta1", c.beta1},
                     {"beta2", c.beta2},                 {"adam_eps", c.adam_eps},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.seed = j.value("seed", c.seed);
}

std::string config_fingerprint(const ModelConfig& c) {
  return sha256_hex(nlohmann::json(c).dump()).substr(0, 16);
}

}  // namespace gedlab
