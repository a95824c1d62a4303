#include "cmcd/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace cmcd {

namespace {

constexpr char kMagic[9] = "CMCDPK01";
constexpr std::size_t kPrefix = 16;

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  }
  return v;
}

template <typename T>
void put_array(std::string& out, const std::vector<T>& v) {
  static_assert(sizeof(T) == 8);
  for (const T& x : v) put_u64(out, std::bit_cast<std::uint64_t>(x));
}

template <typename T>
std::vector<T> get_array(const char* p, std::size_t n) {
  std::vector<T> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = std::bit_cast<T>(get_u64(p + 8 * i));
  return v;
}

}  // namespace

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void Container::add(const std::string& name, const Matrix& m) {
  if (contains(name)) throw FormatError("duplicate array '" + name + "'");
  arrays_.push_back({name, {m.rows, m.cols}, false, m.data, {}});
}

void Container::add(const std::string& name, const std::vector<double>& v) {
  if (contains(name)) throw FormatError("duplicate array '" + name + "'");
  arrays_.push_back({name, {v.size()}, false, v, {}});
}

void Container::add_labels(const std::string& name, const std::vector<int>& labels) {
  if (contains(name)) throw FormatError("duplicate array '" + name + "'");
  PackedArray a{name, {labels.size()}, true, {}, {}};
  a.i64.assign(labels.begin(), labels.end());
  arrays_.push_back(std::move(a));
}

bool Container::contains(const std::string& name) const {
  for (const auto& a : arrays_) {
    if (a.name == name) return true;
  }
  return false;
}

const PackedArray& Container::find(const std::string& name) const {
  for (const auto& a : arrays_) {
    if (a.name == name) return a;
  }
  throw FormatError("missing array section '" + name + "'");
}

Matrix Container::matrix(const std::string& name) const {
  const auto& a = find(name);
  if (a.is_integer || a.shape.size() != 2) {
    throw DimensionError("array '" + name + "' is not a 2-d float matrix");
  }
  return Matrix(a.shape[0], a.shape[1], a.f64);
}

std::vector<double> Container::vector(const std::string& name) const {
  const auto& a = find(name);
  if (a.is_integer || a.shape.size() != 1) {
    throw DimensionError("array '" + name + "' is not a 1-d float vector");
  }
  return a.f64;
}

std::vector<int> Container::labels(const std::string& name) const {
  const auto& a = find(name);
  if (!a.is_integer || a.shape.size() != 1) {
    throw DimensionError("array '" + name + "' is not a 1-d integer vector");
  }
  return {a.i64.begin(), a.i64.end()};
}

std::string Container::to_bytes() const {
  nlohmann::json header;
  header["format"] = "cmcd-pack";
  header["version"] = 1;
  header["kind"] = kind_;
  header["meta"] = meta_;
  auto arrays = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& a : arrays_) {
    const std::uint64_t bytes = 8ull * shape_numel(a.shape);
    arrays.push_back({{"name", a.name},
                      {"dtype", a.is_integer ? "i64" : "f64"},
                      {"shape", a.shape},
                      {"offset", offset},
                      {"bytes", bytes}});
    offset += bytes;
  }
  header["arrays"] = arrays;
  const std::string text = header.dump(1);

  std::string out(kMagic, 8);
  put_u64(out, text.size());
  out += text;
  for (const auto& a : arrays_) {
    if (a.is_integer) {
      put_array(out, a.i64);
    } else {
      put_array(out, a.f64);
    }
  }
  return out;
}

Container Container::from_bytes(const std::string& bytes) {
  if (bytes.size() < kPrefix) throw FormatError("truncated in section 'prefix'");
  if (std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw FormatError("bad magic in section 'prefix': not a cmcd container");
  }
  const std::uint64_t hlen = get_u64(bytes.data() + 8);
  if (hlen > bytes.size() - kPrefix) throw FormatError("truncated in section 'header'");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + kPrefix,
                                   bytes.begin() + kPrefix + static_cast<long>(hlen));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed section 'header': ") + e.what());
  }

  Container c;
  std::size_t data_start = kPrefix + hlen;
  try {
    if (header.at("format") != "cmcd-pack") throw FormatError("section 'header': wrong format tag");
    if (header.at("version") != 1) throw FormatError("section 'header': unsupported version");
    c.kind_ = header.at("kind").get<std::string>();
    c.meta_ = header.at("meta");
    for (const auto& e : header.at("arrays")) {
      PackedArray a;
      a.name = e.at("name").get<std::string>();
      const std::string section = "arrays/" + a.name;
      const auto dtype = e.at("dtype").get<std::string>();
      if (dtype != "f64" && dtype != "i64") {
        throw FormatError("section '" + section + "': unknown dtype " + dtype);
      }
      a.is_integer = dtype == "i64";
      a.shape = e.at("shape").get<Shape>();
      const auto offset = e.at("offset").get<std::uint64_t>();
      const auto nbytes = e.at("bytes").get<std::uint64_t>();
      const std::size_t n = shape_numel(a.shape);
      if (nbytes != 8ull * n) {
        throw DimensionError("section '" + section + "': declared shape holds " +
                             std::to_string(n) + " elements but payload is " +
                             std::to_string(nbytes) + " bytes");
      }
      if (offset > bytes.size() - data_start ||
          nbytes > bytes.size() - data_start - offset) {
        throw FormatError("truncated in section '" + section + "'");
      }
      const char* p = bytes.data() + data_start + offset;
      if (a.is_integer) {
        a.i64 = get_array<std::int64_t>(p, n);
      } else {
        a.f64 = get_array<double>(p, n);
      }
      c.arrays_.push_back(std::move(a));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed section 'header': ") + e.what());
  }
  return c;
}

void Container::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  const std::string bytes = to_bytes();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for '" + path.string() + "'");
}

Container Container::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_bytes(ss.str());
}

}  // namespace cmcd
