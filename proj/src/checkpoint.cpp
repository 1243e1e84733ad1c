// Copyright 2026 The hashfield Authors
// SPDX-License-Identifier: Apache-2.0
#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "hashfield/io.hpp"

namespace hashfield {

namespace {

constexpr std::uint16_t kCheckpointVersion = 1;
constexpr std::array<char, 4> kMagic{'L', 'A', 'G', 'H'};

std::uint32_t crc32(const std::uint8_t* data, size_t n, std::uint32_t crc = 0) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  crc = ~crc;
  for (size_t i = 0; i < n; ++i) crc = table[(crc ^ data[i]) & 0xff] ^ (crc >> 8);
  return ~crc;
}

struct Writer {
  std::vector<std::uint8_t> bytes;

  void u16(std::uint16_t v) {
    bytes.push_back(std::uint8_t(v & 0xff));
    bytes.push_back(std::uint8_t(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(std::uint8_t((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(std::uint8_t((v >> (8 * i)) & 0xff));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void raw(const void* p, size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes.insert(bytes.end(), b, b + n);
  }
};

struct Reader {
  const std::uint8_t* p;
  size_t left;

  void need(size_t n) const {
    if (left < n) throw std::runtime_error("checkpoint truncated");
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = std::uint16_t(p[0]) | std::uint16_t(p[1]) << 8;
    p += 2;
    left -= 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(p[i]) << (8 * i);
    p += 4;
    left -= 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(p[i]) << (8 * i);
    p += 8;
    left -= 8;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
};

}  // namespace

void save_checkpoint(const std::string& path, const RunConfig& cfg,
                     const ParameterStore<float>& params, const TrainState<float>& state) {
  Writer w;
  w.raw(kMagic.data(), kMagic.size());
  w.u16(kCheckpointVersion);
  const std::string cfg_json = run_config_to_json_text(cfg);
  w.u32(std::uint32_t(cfg_json.size()));
  w.raw(cfg_json.data(), cfg_json.size());
  w.u64(std::uint64_t(params.values.size()));
  for (Eigen::Index i = 0; i < params.values.size(); ++i) w.f32(params.values[i]);
  w.u64(std::uint64_t(state.step));
  w.u64(state.rng_state);
  for (Eigen::Index i = 0; i < state.m.size(); ++i) w.f32(state.m[i]);
  for (Eigen::Index i = 0; i < state.v.size(); ++i) w.f32(state.v[i]);
  w.u32(crc32(w.bytes.data(), w.bytes.size()));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(w.bytes.data()), std::streamsize(w.bytes.size()));
  if (!out) throw std::runtime_error("short write: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (bytes.size() < kMagic.size() + 2 + 4)
    throw std::runtime_error("checkpoint truncated: " + path);

  const std::uint32_t stored_crc =
      std::uint32_t(bytes[bytes.size() - 4]) | std::uint32_t(bytes[bytes.size() - 3]) << 8 |
      std::uint32_t(bytes[bytes.size() - 2]) << 16 | std::uint32_t(bytes[bytes.size() - 1]) << 24;
  if (crc32(bytes.data(), bytes.size() - 4) != stored_crc)
    throw std::runtime_error("checkpoint checksum mismatch: " + path);

  Reader r{bytes.data(), bytes.size() - 4};
  r.need(4);
  if (std::memcmp(r.p, kMagic.data(), 4) != 0)
    throw std::runtime_error("not a checkpoint file (bad magic): " + path);
  r.p += 4;
  r.left -= 4;
  const std::uint16_t version = r.u16();
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint version mismatch: have " + std::to_string(version) +
                             ", expected " + std::to_string(kCheckpointVersion));

  Checkpoint ck;
  const std::uint32_t json_len = r.u32();
  r.need(json_len);
  ck.config = run_config_from_json_text(std::string(reinterpret_cast<const char*>(r.p), json_len));
  r.p += json_len;
  r.left -= json_len;
  ck.config.validate();

  ck.params.layout = make_layout(ck.config.field);
  const std::uint64_t count = r.u64();
  if (std::int64_t(count) != ck.params.layout.total)
    throw std::runtime_error("checkpoint parameter count does not match its config");
  ck.params.values.resize(Eigen::Index(count));
  for (std::uint64_t i = 0; i < count; ++i) ck.params.values[Eigen::Index(i)] = r.f32();

  ck.state = make_train_state<float>(ck.params.layout);
  ck.state.step = std::int64_t(r.u64());
  ck.state.rng_state = r.u64();
  ck.state.lr = ck.config.optim.lr;
  ck.state.lr_gaussian = ck.config.optim.lr_gaussian;
  ck.state.beta1 = ck.config.optim.beta1;
  ck.state.beta2 = ck.config.optim.beta2;
  ck.state.epsilon = ck.config.optim.epsilon;
  for (Eigen::Index i = 0; i < ck.state.m.size(); ++i) ck.state.m[i] = r.f32();
  for (Eigen::Index i = 0; i < ck.state.v.size(); ++i) ck.state.v[i] = r.f32();
  return ck;
}

}  // namespace hashfield
