#include "dtk/weights_io.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <regex>
#include <set>

namespace dtk {

static_assert(std::endian::native == std::endian::little, "NTL1 I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'N', 'T', 'L', '1'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  std::vector<std::uint8_t>& buffer() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  void need(std::size_t n, const char* what) const {
    if (size_ - pos_ < n) {
      throw FormatError("NTL1 truncated at offset " + std::to_string(pos_) + " while reading " +
                        what + " (" + std::to_string(n) + " bytes needed, " +
                        std::to_string(size_ - pos_) + " left)");
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return data_[pos_++];
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v;
    std::memcpy(&v, data_ + pos_, 4);
    pos_ += 4;
    return v;
  }
  void copy(void* dst, std::size_t n, const char* what) {
    need(n, what);
    std::memcpy(dst, data_ + pos_, n);
    pos_ += n;
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t size) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (size > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    size -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> encode_ntl(const NamedTensorList& entries) {
  std::set<std::string> seen;
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    if (!seen.insert(e.name).second) throw FormatError("duplicate NTL1 entry name '" + e.name + "'");
    if (e.tensor.rank() > 255) throw FormatError("entry '" + e.name + "' has rank above 255");
    w.u32(static_cast<std::uint32_t>(e.name.size()));
    w.bytes(e.name.data(), e.name.size());
    w.u8(static_cast<std::uint8_t>(e.tensor.rank()));
    for (Index extent : e.tensor.shape()) {
      if (extent > 0xffffffffLL) throw FormatError("entry '" + e.name + "' extent exceeds u32");
      w.u32(static_cast<std::uint32_t>(extent));
    }
    w.bytes(e.tensor.data(), static_cast<std::size_t>(e.tensor.size()) * sizeof(float));
  }
  const std::uint32_t crc = crc32_of(w.buffer().data(), w.buffer().size());
  w.u32(crc);
  return std::move(w.buffer());
}

NamedTensorList decode_ntl(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 12) {
    throw FormatError("NTL1 truncated at offset " + std::to_string(bytes.size()) +
                      ": file shorter than the 12-byte minimum");
  }
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("bad NTL1 magic at offset 0");
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body, 4);

  Reader r(bytes.data(), body);
  r.u32("magic");
  const std::uint32_t count = r.u32("entry count");
  NamedTensorList entries;
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t entry_offset = r.pos();
    const std::uint32_t name_len = r.u32("name length");
    std::string name(name_len, '\0');
    r.copy(name.data(), name_len, "name");
    const std::uint8_t rank = r.u8("rank");
    Shape shape(rank);
    for (auto& extent : shape) extent = r.u32("extent");
    const Index n = shape_product(shape);
    r.need(static_cast<std::size_t>(n) * sizeof(float), "tensor data");
    Tensorf t(shape);
    r.copy(t.data(), static_cast<std::size_t>(n) * sizeof(float), "tensor data");
    if (!seen.insert(name).second) {
      throw FormatError("duplicate NTL1 entry name '" + name + "' at offset " +
                        std::to_string(entry_offset));
    }
    entries.push_back({std::move(name), std::move(t)});
  }
  if (r.pos() != body) {
    throw FormatError("NTL1 has " + std::to_string(body - r.pos()) +
                      " unexpected bytes at offset " + std::to_string(r.pos()));
  }
  const std::uint32_t actual = crc32_of(bytes.data(), body);
  if (actual != stored) {
    throw FormatError("NTL1 checksum mismatch at offset " + std::to_string(body));
  }
  return entries;
}

void write_ntl(const std::filesystem::path& path, const NamedTensorList& entries) {
  const auto bytes = encode_ntl(entries);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("failed writing '" + path.string() + "'");
}

NamedTensorList read_ntl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open NTL1 file '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_ntl(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.detail());
  }
}

template <typename Scalar>
LoadReport load_into(ModelGraph<Scalar>& graph, const NamedTensorList& entries,
                     const LoadOptions& options) {
  static const std::regex branch_name(R"((block\d+_conv\d+)_br\d+)");

  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& e : entries) by_name[e.name] = &e;

  struct Assignment {
    Tensor<Scalar>* target;
    const Tensorf* source;
  };
  std::vector<Assignment> plan;
  std::set<std::string> used;
  LoadReport report;

  for (const auto& layer : graph.layers()) {
    if (!layer.has_params()) continue;
    if (options.conv_only && layer.kind != LayerKind::conv) continue;
    std::string base = layer.name;
    std::smatch m;
    if (options.map_branches && !by_name.count(base + ".weights") &&
        std::regex_match(layer.name, m, branch_name)) {
      base = m[1];
    }
    Parameter<Scalar>& p = graph.param(layer.name);
    bool complete = true;
    for (const auto& [part, target] :
         {std::pair<const char*, Tensor<Scalar>*>{"weights", &p.weights}, {"bias", &p.bias}}) {
      const std::string key = base + "." + part;
      const auto it = by_name.find(key);
      if (it == by_name.end()) {
        report.missing.push_back(layer.name + "." + part);
        complete = false;
        continue;
      }
      if (it->second->tensor.shape() != target->shape()) {
        throw MappingError("entry '" + key + "' has shape " +
                           shape_string(it->second->tensor.shape()) + " but '" + layer.name + "." +
                           part + "' needs " + shape_string(target->shape()));
      }
      plan.push_back({target, &it->second->tensor});
      used.insert(key);
    }
    if (complete) report.loaded.push_back(layer.name);
  }
  for (const auto& e : entries) {
    if (!used.count(e.name)) report.extra.push_back(e.name);
  }
  if (options.strict && !report.missing.empty()) {
    std::string list;
    for (const auto& name : report.missing) list += (list.empty() ? "" : ", ") + name;
    throw MappingError("missing parameters: " + list);
  }
  for (const auto& a : plan) a.target->vec() = a.source->vec().template cast<Scalar>();
  return report;
}

template <typename Scalar>
NamedTensorList graph_entries(const ModelGraph<Scalar>& graph) {
  NamedTensorList entries;
  for (const auto& name : graph.parameter_names()) {
    entries.push_back({name, graph.tensor(name).template cast<float>()});
  }
  return entries;
}

template LoadReport load_into(ModelGraph<float>&, const NamedTensorList&, const LoadOptions&);
template LoadReport load_into(ModelGraph<double>&, const NamedTensorList&, const LoadOptions&);
template NamedTensorList graph_entries(const ModelGraph<float>&);
template NamedTensorList graph_entries(const ModelGraph<double>&);

}  // namespace dtk
