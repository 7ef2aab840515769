#include "ppgfp/container.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ppgfp/error.hpp"

namespace ppgfp {

namespace {

constexpr std::string_view kMagic = "PPGFP-CONTAINER";

template <typename T>
void append_le(std::string& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>(bits & 0xffu));
    bits >>= 8;
  }
}

template <typename T>
T read_le(const char* p) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  U bits = 0;
  for (std::size_t i = sizeof(U); i-- > 0;) {
    bits = (bits << 8) | static_cast<unsigned char>(p[i]);
  }
  return std::bit_cast<T>(bits);
}

const char* dtype_tag(DType t) { return t == DType::F64 ? "f64" : "f32"; }
std::size_t dtype_width(DType t) { return t == DType::F64 ? 8 : 4; }

Shape parse_shape(const std::string& s) {
  Shape shape;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const auto next = s.find('x', pos);
    const auto tok = s.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
    if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos) {
      fail(ErrorKind::Io, "container: bad shape '" + s + "'");
    }
    shape.push_back(std::stoull(tok));
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  return shape;
}

}  // namespace

std::string encode_container(std::span<const NamedTensor> tensors) {
  std::ostringstream header;
  header << kMagic << " 1 " << tensors.size() << '\n';
  std::string payload;
  for (const auto& t : tensors) {
    if (t.name.empty() || t.name.find_first_of(" \t\r\n") != std::string::npos) {
      fail(ErrorKind::Io, "container: tensor names must be non-empty and contain no whitespace");
    }
    header << t.name << ' ' << dtype_tag(t.dtype) << ' ' << shape_string(t.tensor.shape()) << ' '
           << payload.size() << '\n';
    for (double v : t.tensor.data()) {
      if (t.dtype == DType::F64) {
        append_le<double>(payload, v);
      } else {
        append_le<float>(payload, static_cast<float>(v));
      }
    }
  }
  header << "end\n";
  return header.str() + payload;
}

std::vector<NamedTensor> decode_container(std::string_view bytes) {
  auto next_line = [&bytes, pos = std::size_t{0}]() mutable -> std::pair<std::string, std::size_t> {
    const auto nl = bytes.find('\n', pos);
    if (nl == std::string_view::npos) fail(ErrorKind::Io, "container: truncated header");
    std::string line(bytes.substr(pos, nl - pos));
    pos = nl + 1;
    return {line, pos};
  };

  auto [first, after_first] = next_line();
  std::istringstream fs(first);
  std::string magic;
  int version = 0;
  std::size_t count = 0;
  if (!(fs >> magic >> version >> count) || magic != kMagic) fail(ErrorKind::Io, "container: bad magic line");
  if (version != 1) fail(ErrorKind::Io, "container: unsupported version " + std::to_string(version));

  struct Entry {
    std::string name;
    DType dtype;
    Shape shape;
    std::size_t offset;
  };
  std::vector<Entry> entries;
  std::size_t payload_start = after_first;
  for (std::size_t i = 0; i < count; ++i) {
    auto [line, after] = next_line();
    payload_start = after;
    std::istringstream ls(line);
    std::string name, tag, shape;
    std::size_t offset = 0;
    if (!(ls >> name >> tag >> shape >> offset)) fail(ErrorKind::Io, "container: malformed entry '" + line + "'");
    DType dt;
    if (tag == "f64") {
      dt = DType::F64;
    } else if (tag == "f32") {
      dt = DType::F32;
    } else {
      fail(ErrorKind::Io, "container: unknown dtype tag '" + tag + "'");
    }
    entries.push_back({name, dt, parse_shape(shape), offset});
  }
  auto [terminator, after_end] = next_line();
  if (terminator != "end") fail(ErrorKind::Io, "container: missing end marker");
  payload_start = after_end;

  const std::string_view payload = bytes.substr(payload_start);
  std::vector<NamedTensor> out;
  for (const auto& e : entries) {
    const auto n = shape_size(e.shape);
    const auto w = dtype_width(e.dtype);
    if (e.offset + n * w > payload.size()) fail(ErrorKind::Io, "container: payload truncated for " + e.name);
    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i) {
      const char* p = payload.data() + e.offset + i * w;
      data[i] = e.dtype == DType::F64 ? read_le<double>(p) : static_cast<double>(read_le<float>(p));
    }
    out.push_back({e.name, Tensor(e.shape, std::move(data)), e.dtype});
  }
  return out;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) fail(ErrorKind::Io, "cannot open " + tmp.string() + " for writing");
    os.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!os) fail(ErrorKind::Io, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::Io, "rename to " + path.string() + " failed: " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_container(const std::filesystem::path& path, std::span<const NamedTensor> tensors) {
  write_file_atomic(path, encode_container(tensors));
}

std::vector<NamedTensor> read_container(const std::filesystem::path& path) {
  return decode_container(read_file(path));
}

const NamedTensor& find_tensor(std::span<const NamedTensor> tensors, std::string_view name) {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  fail(ErrorKind::Io, "container: no tensor named '" + std::string(name) + "'");
}

}  // namespace ppgfp
