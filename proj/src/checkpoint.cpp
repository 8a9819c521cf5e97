#include "roomgen/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace roomgen {

namespace {

// All integers little-endian; this code assumes a little-endian host.
static_assert(std::endian::native == std::endian::little, "checkpoint codec assumes a little-endian host");

void put_u32(std::vector<unsigned char>& out, uint32_t v) {
  const auto* p = reinterpret_cast<const unsigned char*>(&v);
  out.insert(out.end(), p, p + 4);
}

void put_u64(std::vector<unsigned char>& out, uint64_t v) {
  const auto* p = reinterpret_cast<const unsigned char*>(&v);
  out.insert(out.end(), p, p + 8);
}

void put_bytes(std::vector<unsigned char>& out, const void* data, size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  out.insert(out.end(), p, p + n);
}

void begin_section(std::vector<unsigned char>& out, const char* name, uint64_t payload_len) {
  const uint32_t len = static_cast<uint32_t>(std::strlen(name));
  put_u32(out, len);
  put_bytes(out, name, len);
  put_u64(out, payload_len);
}

struct Reader {
  const std::vector<unsigned char>& bytes;
  size_t pos = 0;

  void need(size_t n, const char* what) const {
    if (pos + n > bytes.size()) throw CheckpointCorrupt(std::string("checkpoint truncated reading ") + what);
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v;
    std::memcpy(&v, bytes.data() + pos, 4);
    pos += 4;
    return v;
  }
  uint64_t u64(const char* what) {
    need(8, what);
    uint64_t v;
    std::memcpy(&v, bytes.data() + pos, 8);
    pos += 8;
    return v;
  }
  std::string str(size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
    pos += n;
    return s;
  }
  void floats(std::vector<float>& out, size_t n, const char* what) {
    need(n * 4, what);
    out.resize(n);
    std::memcpy(out.data(), bytes.data() + pos, n * 4);
    pos += n * 4;
  }

  // Enters the named section and returns its payload length.
  uint64_t section(const char* name) {
    const uint32_t len = u32("section name length");
    if (len > 64) throw CheckpointCorrupt("checkpoint section name length is implausible");
    const std::string got = str(len, "section name");
    if (got != name)
      throw CheckpointCorrupt("checkpoint section order violation: expected '" + std::string(name) + "', found '" +
                              got + "'");
    const uint64_t payload = u64("section payload length");
    if (pos + payload > bytes.size())
      throw CheckpointCorrupt("checkpoint section '" + std::string(name) + "' overruns the file");
    return payload;
  }
};

}  // namespace

std::vector<unsigned char> encode_checkpoint(const Checkpoint& ck) {
  std::vector<unsigned char> out;
  out.reserve(64 + ck.config_text.size() + 4 * (ck.params.size() + ck.frozen.size() + 2 * ck.adam_m.size()));
  put_bytes(out, Checkpoint::kMagic, 8);
  put_u32(out, Checkpoint::kVersion);

  begin_section(out, "config", ck.config_text.size());
  put_bytes(out, ck.config_text.data(), ck.config_text.size());

  begin_section(out, "cursor", 4 + 8 + 8);
  put_u32(out, ck.next_stage);
  put_u64(out, ck.next_iter);
  put_u64(out, ck.global_iter);

  begin_section(out, "params", 8 + 4 * ck.params.size());
  put_u64(out, ck.params.size());
  put_bytes(out, ck.params.data(), 4 * ck.params.size());

  begin_section(out, "frozen", 8 + 4 * ck.frozen.size());
  put_u64(out, ck.frozen.size());
  put_bytes(out, ck.frozen.data(), 4 * ck.frozen.size());

  if (ck.adam_m.size() != ck.adam_v.size()) throw Error("adam moment buffers disagree in size");
  begin_section(out, "adam", 8 + 8 * ck.adam_m.size() + 8);
  put_u64(out, ck.adam_m.size());
  put_bytes(out, ck.adam_m.data(), 4 * ck.adam_m.size());
  put_bytes(out, ck.adam_v.data(), 4 * ck.adam_v.size());
  put_u64(out, ck.adam_step);

  begin_section(out, "rng", 8 + 8 * 8);
  put_u64(out, 8);
  for (uint64_t w : ck.sampler_rng) put_u64(out, w);
  for (uint64_t w : ck.step_rng) put_u64(out, w);

  begin_section(out, "meta", 4 + 4 + ck.prompt_meta.size() + 4 + ck.negative_prompt_meta.size());
  put_u32(out, 2);
  put_u32(out, static_cast<uint32_t>(ck.prompt_meta.size()));
  put_bytes(out, ck.prompt_meta.data(), ck.prompt_meta.size());
  put_u32(out, static_cast<uint32_t>(ck.negative_prompt_meta.size()));
  put_bytes(out, ck.negative_prompt_meta.data(), ck.negative_prompt_meta.size());

  return out;
}

Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes) {
  Reader r{bytes};
  const std::string magic = r.str(8, "magic");
  if (magic != Checkpoint::kMagic) throw CheckpointCorrupt("checkpoint magic mismatch");
  const uint32_t version = r.u32("version");
  if (version != Checkpoint::kVersion)
    throw CheckpointCorrupt("unsupported checkpoint version " + std::to_string(version));

  Checkpoint ck;
  {
    const uint64_t n = r.section("config");
    ck.config_text = r.str(n, "config text");
  }
  {
    const uint64_t n = r.section("cursor");
    if (n != 20) throw CheckpointCorrupt("cursor section has a wrong length");
    ck.next_stage = r.u32("cursor stage");
    ck.next_iter = r.u64("cursor iteration");
    ck.global_iter = r.u64("cursor global iteration");
    if (ck.next_stage < 1 || ck.next_stage > 4) throw CheckpointCorrupt("cursor stage out of range");
  }
  {
    const uint64_t n = r.section("params");
    const uint64_t count = r.u64("params count");
    if (n != 8 + 4 * count) throw CheckpointCorrupt("params section length disagrees with its count");
    r.floats(ck.params, count, "params");
  }
  {
    const uint64_t n = r.section("frozen");
    const uint64_t count = r.u64("frozen count");
    if (n != 8 + 4 * count) throw CheckpointCorrupt("frozen section length disagrees with its count");
    r.floats(ck.frozen, count, "frozen params");
  }
  {
    const uint64_t n = r.section("adam");
    const uint64_t count = r.u64("adam count");
    if (n != 16 + 8 * count) throw CheckpointCorrupt("adam section length disagrees with its count");
    r.floats(ck.adam_m, count, "adam first moments");
    r.floats(ck.adam_v, count, "adam second moments");
    ck.adam_step = r.u64("adam step");
  }
  {
    const uint64_t n = r.section("rng");
    const uint64_t words = r.u64("rng word count");
    if (words != 8 || n != 8 + 8 * words) throw CheckpointCorrupt("rng section must hold exactly 8 words");
    for (auto& w : ck.sampler_rng) w = r.u64("sampler rng word");
    for (auto& w : ck.step_rng) w = r.u64("step rng word");
  }
  {
    r.section("meta");
    const uint32_t entries = r.u32("meta entry count");
    if (entries != 2) throw CheckpointCorrupt("meta section must hold exactly 2 entries");
    const uint32_t n1 = r.u32("prompt length");
    ck.prompt_meta = r.str(n1, "prompt");
    const uint32_t n2 = r.u32("negative prompt length");
    ck.negative_prompt_meta = r.str(n2, "negative prompt");
  }
  if (r.pos != bytes.size()) throw CheckpointCorrupt("checkpoint has trailing bytes");
  return ck;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(ck);
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open checkpoint file for writing: " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("checkpoint write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointCorrupt("cannot open checkpoint file: " + path.string());
  std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return decode_checkpoint(bytes);
}

}  // namespace roomgen
