#include "fedsl/wire.hpp"

#include "fedsl/errors.hpp"

#include <bit>
#include <cstring>

namespace fedsl {

namespace {

void put_u16(ByteBuffer& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(ByteBuffer& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f32(ByteBuffer& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint16_t u16() {
    check(2);
    std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_]) |
                      static_cast<std::uint16_t>(bytes_[pos_ + 1]) << 8;
    pos_ += 2;
    return v;
  }

  std::uint32_t u32() {
    check(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  float f32() { return std::bit_cast<float>(u32()); }

  void expect_end() const {
    if (pos_ != bytes_.size()) throw ProtocolError("trailing bytes in message");
  }

 private:
  void check(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw ProtocolError("message truncated");
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void put_header(ByteBuffer& out, const MessageHeader& h) {
  put_u32(out, h.round);
  put_u16(out, h.client_id);
  put_u16(out, h.msg_type);
}

MessageHeader read_header(Reader& r) {
  MessageHeader h;
  h.round = r.u32();
  h.client_id = r.u16();
  h.msg_type = r.u16();
  return h;
}

void put_f32_matrix(ByteBuffer& out, const MatrixF& m) {
  for (Index i = 0; i < m.size(); ++i) put_f32(out, m.data()[i]);  // row-major
}

MatrixF read_f32_matrix(Reader& r, Index rows, Index cols) {
  MatrixF m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = r.f32();
  return m;
}

}  // namespace

ByteBuffer encode_smashed(const SmashedWire& msg) {
  const auto kept = static_cast<std::uint32_t>(msg.kept_row_indices.size());
  if (static_cast<Index>(kept) != msg.kept_rows.rows() || kept != msg.labels.size()) {
    throw ProtocolError("encode_smashed: kept rows, indices and labels disagree");
  }
  ByteBuffer out;
  put_header(out, msg.header);
  put_u32(out, kept);
  for (std::uint32_t idx : msg.kept_row_indices) put_u32(out, idx);
  put_f32_matrix(out, msg.kept_rows);
  for (std::uint16_t label : msg.labels) put_u16(out, label);
  return out;
}

SmashedWire decode_smashed(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  SmashedWire msg;
  msg.header = read_header(r);
  const std::uint32_t kept = r.u32();
  msg.kept_row_indices.resize(kept);
  for (auto& idx : msg.kept_row_indices) idx = r.u32();
  // Feature dim is whatever remains after indices and labels.
  const std::size_t consumed = kHeaderBytes + 4 + 4ull * kept;
  if (bytes.size() < consumed + 2ull * kept) throw ProtocolError("smashed message truncated");
  const std::size_t row_bytes = bytes.size() - consumed - 2ull * kept;
  if (kept == 0) {
    if (row_bytes != 0) throw ProtocolError("smashed message with no rows has payload");
    msg.kept_rows.resize(0, 0);
    return msg;
  }
  if (row_bytes % (4ull * kept) != 0) throw ProtocolError("smashed row area misaligned");
  const auto dim = static_cast<Index>(row_bytes / (4ull * kept));
  msg.kept_rows = read_f32_matrix(r, static_cast<Index>(kept), dim);
  msg.labels.resize(kept);
  for (auto& label : msg.labels) label = r.u16();
  r.expect_end();
  return msg;
}

ByteBuffer encode_act_grads(const ActGradsWire& msg) {
  const auto kept = static_cast<std::uint32_t>(msg.kept_row_indices.size());
  if (static_cast<Index>(kept) != msg.rows.rows()) {
    throw ProtocolError("encode_act_grads: rows and indices disagree");
  }
  ByteBuffer out;
  put_header(out, msg.header);
  put_u32(out, kept);
  for (std::uint32_t idx : msg.kept_row_indices) put_u32(out, idx);
  put_f32_matrix(out, msg.rows);
  return out;
}

ActGradsWire decode_act_grads(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  ActGradsWire msg;
  msg.header = read_header(r);
  const std::uint32_t kept = r.u32();
  msg.kept_row_indices.resize(kept);
  for (auto& idx : msg.kept_row_indices) idx = r.u32();
  const std::size_t consumed = kHeaderBytes + 4 + 4ull * kept;
  if (bytes.size() < consumed) throw ProtocolError("act-grads message truncated");
  const std::size_t row_bytes = bytes.size() - consumed;
  if (kept == 0) {
    if (row_bytes != 0) throw ProtocolError("act-grads message with no rows has payload");
    msg.rows.resize(0, 0);
    return msg;
  }
  if (row_bytes % (4ull * kept) != 0) throw ProtocolError("act-grads row area misaligned");
  const auto dim = static_cast<Index>(row_bytes / (4ull * kept));
  msg.rows = read_f32_matrix(r, static_cast<Index>(kept), dim);
  r.expect_end();
  return msg;
}

ByteBuffer encode_model(const ModelWire& msg) {
  if (msg.weights.size() != msg.biases.size()) {
    throw ProtocolError("encode_model: weights and biases disagree");
  }
  ByteBuffer out;
  put_header(out, msg.header);
  for (std::size_t l = 0; l < msg.weights.size(); ++l) {
    const MatrixF& w = msg.weights[l];
    if (msg.biases[l].size() != w.rows()) {
      throw ProtocolError("encode_model: bias length mismatch");
    }
    put_u32(out, static_cast<std::uint32_t>(w.rows()));
    put_u32(out, static_cast<std::uint32_t>(w.cols()));
    put_f32_matrix(out, w);
    for (Index i = 0; i < msg.biases[l].size(); ++i) put_f32(out, msg.biases[l](i));
  }
  return out;
}

ModelWire decode_model(std::span<const std::uint8_t> bytes, std::size_t layer_count) {
  Reader r(bytes);
  ModelWire msg;
  msg.header = read_header(r);
  msg.weights.reserve(layer_count);
  msg.biases.reserve(layer_count);
  for (std::size_t l = 0; l < layer_count; ++l) {
    const auto rows = static_cast<Index>(r.u32());
    const auto cols = static_cast<Index>(r.u32());
    msg.weights.push_back(read_f32_matrix(r, rows, cols));
    VectorF bias(rows);
    for (Index i = 0; i < rows; ++i) bias(i) = r.f32();
    msg.biases.push_back(std::move(bias));
  }
  r.expect_end();
  return msg;
}

ModelWire model_to_wire(const MessageHeader& header, const std::vector<DenseLayer>& layers) {
  ModelWire msg;
  msg.header = header;
  msg.weights.reserve(layers.size());
  msg.biases.reserve(layers.size());
  for (const DenseLayer& layer : layers) {
    msg.weights.push_back(layer.weights.cast<float>());
    msg.biases.push_back(layer.bias.cast<float>());
  }
  return msg;
}

std::uint64_t smashed_payload_bytes(std::uint64_t kept_count, std::uint64_t feature_dim) {
  return kHeaderBytes + 4 + 4 * kept_count + 4 * kept_count * feature_dim;
}

std::uint64_t act_grads_payload_bytes(std::uint64_t kept_count, std::uint64_t feature_dim) {
  return kHeaderBytes + 4 + 4 * kept_count + 4 * kept_count * feature_dim;
}

std::uint64_t model_message_bytes(const std::vector<DenseLayer>& layers) {
  std::uint64_t bytes = kHeaderBytes;
  for (const DenseLayer& layer : layers) {
    const auto rows = static_cast<std::uint64_t>(layer.weights.rows());
    const auto cols = static_cast<std::uint64_t>(layer.weights.cols());
    bytes += 8 + 4 * rows * cols + 4 * rows;
  }
  return bytes;
}

}  // namespace fedsl
