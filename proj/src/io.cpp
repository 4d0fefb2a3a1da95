// SPDX-License-Identifier: Apache-2.0
#include "dp3df/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace dp3df {

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// ---------------------------------------------------------------------------
// PPM

namespace {

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(static_cast<double>(v), 0.0, 1.0) * 255.0));
}

}  // namespace

std::vector<std::uint8_t> encode_ppm(const Tensor& frame) {
  require(frame.rank() == 3 && frame.dim(2) == 3, "ppm: frame must be [H,W,3], got " + shape_string(frame.shape()));
  const std::string header = "P6\n" + std::to_string(frame.dim(1)) + " " + std::to_string(frame.dim(0)) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + frame.size());
  for (float v : frame.values()) out.push_back(to_byte(v));
  return out;
}

Tensor decode_ppm(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&]() -> std::size_t {
    skip_space();
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) throw FormatError("ppm: malformed header");
    std::size_t v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) v = v * 10 + (bytes[pos++] - '0');
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw FormatError("ppm: not a binary P6 file");
  pos = 2;
  const std::size_t w = read_int(), h = read_int(), maxval = read_int();
  if (maxval != 255) throw FormatError("ppm: only 8-bit (maxval 255) files are supported");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("ppm: malformed header");
  ++pos;
  if (bytes.size() - pos < w * h * 3) throw FormatError("ppm: truncated pixel data");
  Tensor frame({h, w, 3});
  for (std::size_t i = 0; i < frame.size(); ++i) frame[i] = static_cast<float>(bytes[pos + i]) / 255.0f;
  return frame;
}

void write_ppm(const std::filesystem::path& path, const Tensor& frame) { write_file_bytes(path, encode_ppm(frame)); }

Tensor read_ppm(const std::filesystem::path& path) { return decode_ppm(read_file_bytes(path)); }

Tensor quantize_8bit(const Tensor& frame) {
  Tensor out(frame.shape());
  for (std::size_t i = 0; i < frame.size(); ++i) out[i] = static_cast<float>(to_byte(frame[i])) / 255.0f;
  return out;
}

// ---------------------------------------------------------------------------
// Tensor container

namespace {

constexpr char kMagic[4] = {'D', 'P', 'T', '1'};

template <class U>
void put_le(std::vector<std::uint8_t>& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  template <class U>
  U get(const std::string& what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(U);
    return v;
  }

  const std::uint8_t* take(std::size_t n, const std::string& what) {
    need(n, what);
    const std::uint8_t* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const std::string& what) {
    if (bytes_.size() - pos_ < n) throw FormatError("container: truncated " + what);
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_container(const TensorMap& sections) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(sections.size()));
  for (const auto& [name, t] : sections) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put_le<std::uint64_t>(out, d);
    for (float v : t.values()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

TensorMap decode_container(const std::vector<std::uint8_t>& bytes) {
  Reader in(bytes);
  const std::uint8_t* magic = in.take(4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("container: bad magic (expected DPT1)");
  const std::uint32_t count = in.get<std::uint32_t>("section count");
  TensorMap out;
  for (std::uint32_t s = 0; s < count; ++s) {
    const std::string where = "section " + std::to_string(s);
    const std::uint32_t len = in.get<std::uint32_t>(where + " name length");
    const std::uint8_t* np = in.take(len, where + " name");
    const std::string name(reinterpret_cast<const char*>(np), len);
    const std::string label = "section '" + name + "'";
    const std::uint32_t rank = in.get<std::uint32_t>(label + " rank");
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(in.get<std::uint64_t>(label + " dims"));
    const std::size_t n = shape_size(shape);
    if (n > bytes.size()) throw FormatError("container: truncated " + label + " payload");
    std::vector<float> data(n);
    const std::uint8_t* payload = in.take(n * 4, label + " payload");
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t bits = 0;
      for (std::size_t k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(payload[i * 4 + k]) << (8 * k);
      data[i] = std::bit_cast<float>(bits);
    }
    if (!out.emplace(name, Tensor(std::move(shape), std::move(data))).second)
      throw FormatError("container: duplicate " + label);
  }
  if (!in.done()) throw FormatError("container: trailing bytes after last section");
  return out;
}

void write_container(const std::filesystem::path& path, const TensorMap& sections) {
  write_file_bytes(path, encode_container(sections));
}

TensorMap read_container(const std::filesystem::path& path) { return decode_container(read_file_bytes(path)); }

// ---------------------------------------------------------------------------
// key = value config

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

ConfigMap parse_config(const std::string& text) {
  ConfigMap out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw FormatError("config line " + std::to_string(lineno) + ": empty key");
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

ConfigMap read_config(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return parse_config(std::string(bytes.begin(), bytes.end()));
}

std::string format_config(const ConfigMap& config) {
  std::string out;
  for (const auto& [k, v] : config) out += k + " = " + v + "\n";
  return out;
}

void write_config(const std::filesystem::path& path, const ConfigMap& config) {
  const std::string text = format_config(config);
  write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

}  // namespace dp3df
