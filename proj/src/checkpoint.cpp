#include "epicode/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "epicode/error.hpp"

namespace epicode {

namespace {

using json = nlohmann::json;

constexpr std::size_t kHeaderAlign = 8;

void put_u64_le(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64_le(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

void put_f32_le(std::uint8_t* p, float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) p[i] = static_cast<std::uint8_t>(bits >> (8 * i));
}

float get_f32_le(const std::uint8_t* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

bool all_finite(const Tensor& t) {
  return std::all_of(t.data.begin(), t.data.end(),
                     [](float x) { return std::isfinite(x); });
}

}  // namespace

Tensor Tensor::zeros(std::vector<std::int64_t> shape) {
  const auto n = std::accumulate(shape.begin(), shape.end(), std::int64_t{1},
                                 std::multiplies<>());
  return Tensor(std::move(shape), std::vector<float>(static_cast<std::size_t>(n), 0.0f));
}

std::int64_t Tensor::numel() const {
  return std::accumulate(shape.begin(), shape.end(), std::int64_t{1},
                         std::multiplies<>());
}

std::string shape_string(const std::vector<std::int64_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::string CompatReport::render() const {
  std::ostringstream os;
  for (const auto& n : missing_in_a) os << "missing in a: " << n << '\n';
  for (const auto& n : missing_in_b) os << "missing in b: " << n << '\n';
  for (const auto& m : shape_mismatches)
    os << "shape mismatch: " << m.name << ' ' << shape_string(m.shape_a)
       << " vs " << shape_string(m.shape_b) << '\n';
  return os.str();
}

void validate(const TensorMap& map) {
  if (map.empty()) throw DataError("empty tensor map");
  for (const auto& [name, t] : map) {
    if (name.empty()) throw DataError("empty tensor name");
    for (auto d : t.shape)
      if (d <= 0) throw DataError("non-positive dimension in tensor '" + name + "'");
    if (static_cast<std::int64_t>(t.data.size()) != t.numel())
      throw DataError("size mismatch in tensor '" + name + "': shape " +
                      shape_string(t.shape) + " with " +
                      std::to_string(t.data.size()) + " values");
    if (!all_finite(t)) throw DataError("non-finite tensor '" + name + "'");
  }
}

CompatReport check_compat(const TensorMap& a, const TensorMap& b) {
  CompatReport report;
  for (const auto& [name, ta] : a) {
    auto it = b.find(name);
    if (it == b.end()) {
      report.missing_in_b.push_back(name);
    } else if (ta.shape != it->second.shape) {
      report.shape_mismatches.push_back({name, ta.shape, it->second.shape});
    }
  }
  for (const auto& [name, tb] : b)
    if (!a.contains(name)) report.missing_in_a.push_back(name);
  return report;
}

void require_compat(const TensorMap& a, const TensorMap& b) {
  const auto report = check_compat(a, b);
  if (!report.empty())
    throw DataError("incompatible tensor maps:\n" + report.render());
}

std::vector<std::uint8_t> serialize(const TensorMap& map) {
  validate(map);
  json header = json::object();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : map) {
    const std::uint64_t bytes = 4 * t.data.size();
    header[name] = {{"dtype", "F32"},
                    {"shape", t.shape},
                    {"data_offsets", {offset, offset + bytes}}};
    offset += bytes;
  }
  std::string text = header.dump();
  text.append((kHeaderAlign - text.size() % kHeaderAlign) % kHeaderAlign, ' ');

  std::vector<std::uint8_t> out;
  out.reserve(8 + text.size() + offset);
  put_u64_le(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  const std::size_t data_start = out.size();
  out.resize(data_start + offset);
  std::uint8_t* p = out.data() + data_start;
  for (const auto& [name, t] : map)
    for (float v : t.data) {
      put_f32_le(p, v);
      p += 4;
    }
  return out;
}

TensorMap deserialize(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8) throw DataError("truncated: file shorter than header length field");
  const std::uint64_t header_len = get_u64_le(bytes.data());
  if (header_len > bytes.size() - 8)
    throw DataError("truncated: header length " + std::to_string(header_len) +
                    " exceeds file size");

  std::set<std::string> seen;
  std::string duplicate;
  json::parser_callback_t on_event = [&](int depth, json::parse_event_t event,
                                         json& parsed) {
    if (depth == 1 && event == json::parse_event_t::key) {
      auto key = parsed.get<std::string>();
      if (!seen.insert(key).second && duplicate.empty()) duplicate = key;
    }
    return true;
  };
  const auto* first = reinterpret_cast<const char*>(bytes.data() + 8);
  json header;
  try {
    header = json::parse(first, first + header_len, on_event);
  } catch (const json::exception& e) {
    throw DataError(std::string("bad header: ") + e.what());
  }
  if (!duplicate.empty()) throw DataError("duplicate tensor name '" + duplicate + "'");
  if (!header.is_object()) throw DataError("bad header: not a JSON object");

  const std::uint8_t* data = bytes.data() + 8 + header_len;
  const std::uint64_t data_len = bytes.size() - 8 - header_len;

  TensorMap map;
  for (const auto& [name, info] : header.items()) {
    if (name == "__metadata__") continue;
    if (!info.is_object() || !info.contains("dtype") || !info.contains("shape") ||
        !info.contains("data_offsets"))
      throw DataError("bad header: incomplete entry for '" + name + "'");
    if (info["dtype"] != "F32")
      throw DataError("unsupported element type '" + info["dtype"].dump() +
                      "' for tensor '" + name + "'");
    Tensor t;
    std::vector<std::uint64_t> offsets;
    try {
      t.shape = info["shape"].get<std::vector<std::int64_t>>();
      offsets = info["data_offsets"].get<std::vector<std::uint64_t>>();
    } catch (const json::exception& e) {
      throw DataError("bad header: " + std::string(e.what()));
    }
    for (auto d : t.shape)
      if (d <= 0) throw DataError("bad header: non-positive dimension in '" + name + "'");
    if (offsets.size() != 2 || offsets[0] > offsets[1])
      throw DataError("bad header: invalid data_offsets for '" + name + "'");
    const std::uint64_t n = static_cast<std::uint64_t>(t.numel());
    if (offsets[1] - offsets[0] != 4 * n)
      throw DataError("size mismatch: tensor '" + name + "' has shape " +
                      shape_string(t.shape) + " but " +
                      std::to_string((offsets[1] - offsets[0]) / 4.0) + " values");
    if (offsets[1] > data_len)
      throw DataError("truncated: data for tensor '" + name + "' extends past end of file");
    t.data.resize(n);
    for (std::uint64_t i = 0; i < n; ++i) t.data[i] = get_f32_le(data + offsets[0] + 4 * i);
    map.emplace(name, std::move(t));
  }
  validate(map);
  return map;
}

void save(const TensorMap& map, const std::filesystem::path& path) {
  const auto bytes = serialize(map);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

TensorMap load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace epicode
