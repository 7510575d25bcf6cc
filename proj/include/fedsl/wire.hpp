#pragma once

#include "fedsl/nn.hpp"
#include "fedsl/types.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace fedsl {

// All integers and floats little-endian. Weights and activations are f32 on
// the wire; training arithmetic stays f64 in process.

enum class MsgType : std::uint16_t {
  kSmashedData = 1,
  kActivationGrads = 2,
  kModelUpload = 3,
  kModelBroadcast = 4,
};

struct MessageHeader {
  std::uint32_t round = 0;
  std::uint16_t client_id = 0;
  std::uint16_t msg_type = 0;
};

constexpr std::size_t kHeaderBytes = 8;

using ByteBuffer = std::vector<std::uint8_t>;

// header + u32 kept_count + indices (u32) + rows (f32 row-major) + labels (u16)
struct SmashedWire {
  MessageHeader header;
  std::vector<std::uint32_t> kept_row_indices;
  MatrixF kept_rows;
  std::vector<std::uint16_t> labels;  // one per kept row
};

// header + u32 kept_count + indices (u32) + rows (f32 row-major)
struct ActGradsWire {
  MessageHeader header;
  std::vector<std::uint32_t> kept_row_indices;
  MatrixF rows;
};

// header + per-layer { u32 rows, u32 cols, f32 weights row-major, f32 biases }
struct ModelWire {
  MessageHeader header;
  std::vector<MatrixF> weights;
  std::vector<VectorF> biases;
};

ByteBuffer encode_smashed(const SmashedWire& msg);
SmashedWire decode_smashed(std::span<const std::uint8_t> bytes);

ByteBuffer encode_act_grads(const ActGradsWire& msg);
ActGradsWire decode_act_grads(std::span<const std::uint8_t> bytes);

ByteBuffer encode_model(const ModelWire& msg);
ModelWire decode_model(std::span<const std::uint8_t> bytes, std::size_t layer_count);

ModelWire model_to_wire(const MessageHeader& header, const std::vector<DenseLayer>& layers);

// Accounting figure for a smashed-data uplink: header(8) + kept_count(4) +
// 4 bytes per index + 4 bytes per activation value. Label bytes (2 per kept
// row) ride in the serialized message but are not part of this figure.
std::uint64_t smashed_payload_bytes(std::uint64_t kept_count, std::uint64_t feature_dim);

// Downlink activation-gradient accounting; identical layout minus labels.
std::uint64_t act_grads_payload_bytes(std::uint64_t kept_count, std::uint64_t feature_dim);

// Full serialized size of a model message for the given layer shapes.
std::uint64_t model_message_bytes(const std::vector<DenseLayer>& layers);

}  // namespace fedsl
