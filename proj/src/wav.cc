#include "tfmask/wav.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "tfmask/error.h"

namespace tfmask {

static_assert(std::endian::native == std::endian::little,
              "WAV I/O assumes a little-endian host");

void Waveform::Validate() const {
  if (sample_rate <= 0) throw DataError("sample rate must be positive");
  for (double s : samples) {
    if (!std::isfinite(s)) throw DataError("waveform contains non-finite samples");
  }
}

void MultichannelWaveform::Validate() const {
  if (channels.empty()) throw DataError("waveform has no channels");
  for (const auto& ch : channels) {
    ch.Validate();
    if (ch.size() != channels.front().size())
      throw DataError("channels differ in length");
    if (ch.sample_rate != channels.front().sample_rate)
      throw DataError("channels differ in sample rate");
  }
}

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T ReadLe(const std::uint8_t* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

template <typename T>
void AppendLe(std::vector<std::uint8_t>& out, T v) {
  std::uint8_t buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

}  // namespace

MultichannelWaveform ReadWav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (data.size() < 12 || std::memcmp(data.data(), "RIFF", 4) != 0 ||
      std::memcmp(data.data() + 8, "WAVE", 4) != 0)
    throw DataError(path + ": not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const std::uint8_t* payload = nullptr;
  std::size_t payload_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= data.size()) {
    const std::uint8_t* chunk = data.data() + pos;
    std::uint32_t size = ReadLe<std::uint32_t>(chunk + 4);
    std::size_t body = pos + 8;
    std::size_t avail = std::min<std::size_t>(size, data.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (avail < 16) throw DataError(path + ": truncated fmt chunk");
      format = ReadLe<std::uint16_t>(chunk + 8);
      channels = ReadLe<std::uint16_t>(chunk + 10);
      rate = ReadLe<std::uint32_t>(chunk + 12);
      bits = ReadLe<std::uint16_t>(chunk + 22);
      if (format == kFormatExtensible) {
        if (avail < 26) throw DataError(path + ": truncated extensible fmt");
        format = ReadLe<std::uint16_t>(chunk + 8 + 24);
      }
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      payload = data.data() + body;
      payload_size = avail;
    }
    pos = body + size + (size & 1u);
  }
  if (channels == 0 || rate == 0) throw DataError(path + ": missing fmt chunk");
  if (payload == nullptr) throw DataError(path + ": missing data chunk");

  std::size_t bytes = bits / 8;
  bool pcm16 = format == kFormatPcm && bits == 16;
  bool f32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !f32)
    throw DataError(path + ": unsupported encoding (need PCM16 or float32)");

  std::size_t frames = payload_size / (bytes * channels);
  MultichannelWaveform out;
  out.channels.resize(channels);
  for (auto& ch : out.channels) {
    ch.sample_rate = static_cast<int>(rate);
    ch.samples.resize(frames);
  }
  for (std::size_t i = 0; i < frames; ++i) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::uint8_t* p = payload + (i * channels + c) * bytes;
      out.channels[c].samples[i] =
          pcm16 ? ReadLe<std::int16_t>(p) / 32768.0
                : static_cast<double>(ReadLe<float>(p));
    }
  }
  return out;
}

void WriteWav(const std::string& path, const MultichannelWaveform& wave,
              WavEncoding encoding) {
  wave.Validate();
  const std::uint16_t channels = static_cast<std::uint16_t>(wave.num_channels());
  const std::uint16_t bits = encoding == WavEncoding::kPcm16 ? 16 : 32;
  const std::uint16_t block = channels * (bits / 8);
  const std::size_t frames = wave.num_samples();
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(frames * block);
  const std::uint32_t rate = static_cast<std::uint32_t>(wave.sample_rate());

  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  auto tag = [&out](const char* t) { out.insert(out.end(), t, t + 4); };
  tag("RIFF");
  AppendLe<std::uint32_t>(out, 36 + data_bytes);
  tag("WAVE");
  tag("fmt ");
  AppendLe<std::uint32_t>(out, 16);
  AppendLe<std::uint16_t>(out, encoding == WavEncoding::kPcm16 ? kFormatPcm
                                                               : kFormatFloat);
  AppendLe<std::uint16_t>(out, channels);
  AppendLe<std::uint32_t>(out, rate);
  AppendLe<std::uint32_t>(out, rate * block);
  AppendLe<std::uint16_t>(out, block);
  AppendLe<std::uint16_t>(out, bits);
  tag("data");
  AppendLe<std::uint32_t>(out, data_bytes);
  for (std::size_t i = 0; i < frames; ++i) {
    for (const auto& ch : wave.channels) {
      double s = ch.samples[i];
      if (encoding == WavEncoding::kPcm16) {
        double scaled = std::round(std::clamp(s, -1.0, 1.0) * 32768.0);
        AppendLe<std::int16_t>(
            out, static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0)));
      } else {
        AppendLe<float>(out, static_cast<float>(s));
      }
    }
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path);
  f.write(reinterpret_cast<const char*>(out.data()),
          static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("write failed: " + path);
}

void WriteWav(const std::string& path, const Waveform& wave,
              WavEncoding encoding) {
  MultichannelWaveform mc;
  mc.channels.push_back(wave);
  WriteWav(path, mc, encoding);
}

}  // namespace tfmask
