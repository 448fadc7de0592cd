// SPDX-License-Identifier: Apache-2.0
#include "stutter/audio.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "stutter/error.hpp"

namespace stutter {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t position() const { return pos_; }

  void need(std::size_t n) const {
    if (remaining() < n) {
      throw Error(ErrorCode::MalformedHeader, "unexpected end of file");
    }
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = bytes_[pos_] | (bytes_[pos_ + 1] << 8);
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | bytes_[pos_ + i];
    pos_ += 4;
    return v;
  }
  std::string tag() {
    need(4);
    std::string t(reinterpret_cast<const char*>(bytes_.data() + pos_), 4);
    pos_ += 4;
    return t;
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

struct FormatChunk {
  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t block_align = 0;
  std::uint16_t bits = 0;
};

FormatChunk read_format(std::span<const std::uint8_t> body) {
  if (body.size() < 16) throw Error(ErrorCode::MalformedHeader, "fmt chunk too short");
  ByteReader r(body);
  FormatChunk f;
  f.format = r.u16();
  f.channels = r.u16();
  f.sample_rate = r.u32();
  r.u32();  // byte rate
  f.block_align = r.u16();
  f.bits = r.u16();
  if (f.format == kFormatExtensible) {
    if (body.size() < 40) throw Error(ErrorCode::MalformedHeader, "extensible fmt chunk too short");
    r.skip(2 + 2 + 4);  // cbSize, valid bits, channel mask
    f.format = r.u16();  // first two bytes of the subformat GUID
  }
  return f;
}

double decode_sample(const std::uint8_t* p, const FormatChunk& f) {
  if (f.format == kFormatFloat) {
    std::uint32_t raw = p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
    float v;
    std::memcpy(&v, &raw, sizeof v);
    return static_cast<double>(v);
  }
  switch (f.bits) {
    case 8:
      return (static_cast<int>(p[0]) - 128) / 128.0;
    case 16: {
      auto v = static_cast<std::int16_t>(p[0] | (p[1] << 8));
      return v / 32768.0;
    }
    case 24: {
      std::int32_t v = p[0] | (p[1] << 8) | (p[2] << 16);
      if (v & 0x800000) v -= 0x1000000;
      return v / 8388608.0;
    }
    case 32: {
      std::uint32_t raw = p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
      return static_cast<std::int32_t>(raw) / 2147483648.0;
    }
  }
  return 0.0;
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(v & 0xFF);
  out.push_back(v >> 8);
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xFF);
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

std::optional<int> parse_label(const std::string& field, std::size_t line) {
  if (field == "NA" || field.empty()) return std::nullopt;
  if (field == "0") return 0;
  if (field == "1") return 1;
  throw Error(ErrorCode::InvalidArgument,
              "manifest line " + std::to_string(line) + ": label must be 0, 1 or NA, got '" + field + "'");
}

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

}  // namespace

AudioClip parse_wav(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.remaining() < 12) throw Error(ErrorCode::MalformedHeader, "file shorter than RIFF header");
  if (r.tag() != "RIFF") throw Error(ErrorCode::MalformedHeader, "missing RIFF magic");
  r.u32();  // riff size; some writers get it wrong, so chunk walking is bounded by the buffer
  if (r.tag() != "WAVE") throw Error(ErrorCode::MalformedHeader, "missing WAVE form type");

  std::optional<FormatChunk> fmt;
  std::optional<std::span<const std::uint8_t>> data;
  while (r.remaining() >= 8 && !(fmt && data)) {
    std::string id = r.tag();
    std::uint32_t size = r.u32();
    if (size > r.remaining()) {
      if (id == "data" && fmt) {
        // Truncated streams commonly carry an oversized data length.
        size = static_cast<std::uint32_t>(r.remaining());
      } else {
        throw Error(ErrorCode::MalformedHeader, "chunk '" + id + "' overruns file");
      }
    }
    auto body = r.take(size);
    if (size % 2 == 1 && r.remaining() > 0) r.skip(1);
    if (id == "fmt ") {
      fmt = read_format(body);
    } else if (id == "data") {
      data = body;
    }
  }
  if (!fmt) throw Error(ErrorCode::MalformedHeader, "no fmt chunk");
  if (!data) throw Error(ErrorCode::MalformedHeader, "no data chunk");

  const FormatChunk& f = *fmt;
  if (f.format != kFormatPcm && f.format != kFormatFloat) {
    throw Error(ErrorCode::UnsupportedEncoding, "format tag " + std::to_string(f.format));
  }
  const bool bits_ok = f.format == kFormatFloat ? f.bits == 32
                                                : (f.bits == 8 || f.bits == 16 || f.bits == 24 || f.bits == 32);
  if (!bits_ok) throw Error(ErrorCode::UnsupportedEncoding, std::to_string(f.bits) + "-bit samples");
  if (f.channels != 1 && f.channels != 2) {
    throw Error(ErrorCode::UnsupportedEncoding, std::to_string(f.channels) + " channels");
  }
  if (f.sample_rate == 0) throw Error(ErrorCode::MalformedHeader, "sample rate is zero");
  const std::size_t bytes_per_sample = f.bits / 8;
  const std::size_t frame_bytes = bytes_per_sample * f.channels;
  if (f.block_align != frame_bytes) throw Error(ErrorCode::MalformedHeader, "block align mismatch");

  AudioClip clip;
  clip.sample_rate = static_cast<int>(f.sample_rate);
  const std::size_t frames = data->size() / frame_bytes;
  clip.samples.resize(frames);
  const std::uint8_t* p = data->data();
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < f.channels; ++c) {
      acc += decode_sample(p + i * frame_bytes + c * bytes_per_sample, f);
    }
    double v = acc / f.channels;
    if (std::isnan(v)) throw Error(ErrorCode::MalformedHeader, "NaN sample");
    clip.samples[i] = std::clamp(v, -1.0, 1.0);
  }
  return clip;
}

std::vector<std::uint8_t> write_wav(const AudioClip& clip) {
  if (clip.sample_rate <= 0) throw Error(ErrorCode::InvalidArgument, "sample rate must be positive");
  const auto data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, kFormatPcm);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  put_tag(out, "data");
  put_u32(out, data_bytes);
  for (double s : clip.samples) {
    // std::round is half-away-from-zero.
    double scaled = std::round(s * 32768.0);
    auto v = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
    put_u16(out, static_cast<std::uint16_t>(v));
  }
  return out;
}

AudioClip read_wav_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_wav(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void write_wav_file(const std::filesystem::path& path, const AudioClip& clip) {
  auto bytes = write_wav(clip);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoFailure, "short write to " + path.string());
}

AudioClip resample(const AudioClip& clip, int target_rate) {
  if (target_rate <= 0) throw Error(ErrorCode::InvalidArgument, "target rate must be positive");
  if (target_rate == clip.sample_rate) return clip;

  const std::size_t n = clip.samples.size();
  AudioClip out;
  out.sample_rate = target_rate;
  const auto n_out = static_cast<std::size_t>(
      std::llround(static_cast<double>(n) * target_rate / clip.sample_rate));
  out.samples.resize(n_out);
  if (n == 0) return out;
  const double step = static_cast<double>(clip.sample_rate) / target_rate;
  for (std::size_t i = 0; i < n_out; ++i) {
    double pos = i * step;
    auto lo = static_cast<std::size_t>(pos);
    if (lo >= n - 1) {
      out.samples[i] = clip.samples[n - 1];
      continue;
    }
    double frac = pos - static_cast<double>(lo);
    out.samples[i] = clip.samples[lo] + frac * (clip.samples[lo + 1] - clip.samples[lo]);
  }
  return out;
}

std::vector<Segment> segment(const AudioClip& clip) {
  if (clip.sample_rate <= 0) throw Error(ErrorCode::InvalidArgument, "sample rate must be positive");
  const auto width = static_cast<std::size_t>(clip.sample_rate);
  std::vector<Segment> out;
  for (std::size_t start = 0; start < clip.samples.size(); start += width) {
    std::size_t len = std::min(width, clip.samples.size() - start);
    if (2 * len < width) break;
    Segment s;
    s.sample_rate = clip.sample_rate;
    s.origin_offset = start;
    s.valid_length = len;
    s.samples.assign(width, 0.0);
    std::copy_n(clip.samples.begin() + static_cast<std::ptrdiff_t>(start), len, s.samples.begin());
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open manifest " + manifest.string());
  std::string line;
  if (!std::getline(in, line) || trim(line) != "path,label_prolongation,label_repetition") {
    throw Error(ErrorCode::InvalidArgument,
                "manifest header must be 'path,label_prolongation,label_repetition'");
  }
  const auto base = manifest.parent_path();
  std::vector<ManifestEntry> entries;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(trim(field));
    if (line.back() == ',') fields.emplace_back();
    if (fields.size() != 3) {
      throw Error(ErrorCode::InvalidArgument,
                  "manifest line " + std::to_string(line_no) + ": expected 3 fields");
    }
    ManifestEntry e;
    e.path = fields[0];
    if (e.path.is_relative()) e.path = base / e.path;
    e.label_prolongation = parse_label(fields[1], line_no);
    e.label_repetition = parse_label(fields[2], line_no);
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_manifest(const std::filesystem::path& manifest, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(manifest, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write manifest " + manifest.string());
  auto label = [](const std::optional<int>& l) { return l ? std::to_string(*l) : std::string("NA"); };
  out << "path,label_prolongation,label_repetition\n";
  for (const auto& e : entries) {
    out << e.path.generic_string() << ',' << label(e.label_prolongation) << ','
        << label(e.label_repetition) << '\n';
  }
  if (!out) throw Error(ErrorCode::IoFailure, "short write to " + manifest.string());
}

}  // namespace stutter
