#include "gedlab/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "gedlab/errors.hpp"

namespace gedlab {

namespace {

constexpr std::size_t kMagicLen = sizeof(kCheckpointMagic) - 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const std::string& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  }
  return v;
}

void put_f32(std::string& out, double value) {
  put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(value)));
}

double get_f32(const std::string& in, std::size_t at) {
  return static_cast<double>(std::bit_cast<float>(get_u32(in, at)));
}

[[noreturn]] void fail(CheckpointError::Kind kind, const std::string& what) {
  throw CheckpointError(kind, what);
}

}  // namespace

std::string serialize_checkpoint(Model& model, const SubwordVocab& vocab) {
  nlohmann::json manifest = nlohmann::json::array();
  std::string payload;
  for (const auto& p : model.parameters()) {
    manifest.push_back({{"name", p.name}, {"shape", p.tensor->shape}, {"offset", payload.size()}});
    for (double v : p.tensor->data) put_f32(payload, v);
  }
  nlohmann::json header{{"config", model.config()},
                        {"manifest", manifest},
                        {"payload_bytes", payload.size()},
                        {"vocab", vocab.pieces()}};
  const std::string header_text = header.dump();
  std::string out(kCheckpointMagic, kMagicLen);
  put_u32(out, static_cast<std::uint32_t>(header_text.size()));
  out += header_text;
  out += payload;
  return out;
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  using Kind = CheckpointError::Kind;
  if (bytes.size() < kMagicLen || bytes.compare(0, kMagicLen, kCheckpointMagic) != 0) {
    fail(Kind::not_a_checkpoint, "not a checkpoint (bad magic)");
  }
  if (bytes.size() < kMagicLen + 4) fail(Kind::corruption, "checkpoint truncated in header");
  const std::size_t header_len = get_u32(bytes, kMagicLen);
  const std::size_t payload_start = kMagicLen + 4 + header_len;
  if (payload_start > bytes.size()) fail(Kind::corruption, "checkpoint truncated in header");

  nlohmann::json header;
  ModelConfig config;
  std::vector<std::string> pieces;
  std::size_t payload_bytes = 0;
  try {
    header = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(kMagicLen + 4),
                                   bytes.begin() + static_cast<std::ptrdiff_t>(payload_start));
    config = header.at("config").get<ModelConfig>();
    pieces = header.at("vocab").get<std::vector<std::string>>();
    payload_bytes = header.at("payload_bytes").get<std::size_t>();
    header.at("manifest").get<nlohmann::json::array_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(Kind::corruption, std::string("checkpoint header unreadable: ") + e.what());
  }
  if (bytes.size() - payload_start != payload_bytes) {
    fail(Kind::corruption, "checkpoint payload is " + std::to_string(bytes.size() - payload_start) +
                               " bytes, header declares " + std::to_string(payload_bytes));
  }

  Model model = [&] {
    try {
      return Model(config);
    } catch (const ConfigError& e) {
      fail(Kind::version, std::string("checkpoint config rejected: ") + e.what());
    }
  }();
  auto params = model.parameters();
  const auto& manifest = header.at("manifest");
  if (manifest.size() != params.size()) {
    fail(Kind::version, "checkpoint lists " + std::to_string(manifest.size()) +
                            " parameters, config implies " + std::to_string(params.size()));
  }
  std::set<std::string> seen;
  std::size_t expected_offset = 0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& entry = manifest[k];
    std::string name;
    Shape shape;
    std::size_t offset = 0;
    try {
      name = entry.at("name").get<std::string>();
      shape = entry.at("shape").get<Shape>();
      offset = entry.at("offset").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
      fail(Kind::corruption, std::string("checkpoint manifest unreadable: ") + e.what());
    }
    if (!seen.insert(name).second) fail(Kind::corruption, "parameter " + name + " listed twice");
    Tensor& t = *params[k].tensor;
    if (name != params[k].name || shape != t.shape) {
      fail(Kind::version, "checkpoint entry " + name + " " + shape_str(shape) +
                              " does not match expected " + params[k].name + " " +
                              shape_str(t.shape));
    }
    if (offset != expected_offset || offset + 4 * t.numel() > payload_bytes) {
      fail(Kind::corruption, "parameter " + name + " has an invalid payload offset");
    }
    for (std::size_t i = 0; i < t.numel(); ++i) {
      t.data[i] = get_f32(bytes, payload_start + offset + 4 * i);
    }
    expected_offset = offset + 4 * t.numel();
  }
  if (expected_offset != payload_bytes) fail(Kind::corruption, "checkpoint payload has trailing bytes");

  if (pieces.size() < SubwordVocab::kReserved) fail(Kind::corruption, "checkpoint vocabulary too small");
  SubwordVocab vocab(std::vector<std::string>(pieces.begin() + SubwordVocab::kReserved, pieces.end()));
  if (vocab.pieces() != pieces) fail(Kind::corruption, "checkpoint vocabulary is not canonical");
  if (vocab.size() != model.config().vocab_size) {
    fail(Kind::version, "checkpoint vocabulary size disagrees with config");
  }
  return {std::move(model), std::move(vocab)};
}

void save_checkpoint(Model& model, const SubwordVocab& vocab, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(model, vocab);
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw CheckpointError(CheckpointError::Kind::io, "cannot open " + path.string() + " for writing");
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(CheckpointError::Kind::io, "write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw CheckpointError(CheckpointError::Kind::io, "cannot open " + path.string() + " for reading");
  }
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

}  // namespace gedlab
