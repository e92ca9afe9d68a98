#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "dtk/vgg.hpp"
#include "dtk/weights_io.hpp"
#include "oracles.hpp"

using namespace dtk;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("dtk_test_" + name);
}

NamedTensorList sample_entries() {
  Rng rng(1);
  return {{"block1_conv1.weights", testing::random_tensor<float>({64, 3, 3, 3}, rng)},
          {"block1_conv1.bias", testing::random_tensor<float>({64}, rng)},
          {"adam.t", Tensorf::full({}, 3.0f)}};
}

bool same(const NamedTensorList& a, const NamedTensorList& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || !(a[i].tensor == b[i].tensor)) return false;
  }
  return true;
}

ArchConfig small_basic() {
  ArchConfig c = table1_catalog(10).front().config;
  c.width_divisor = 16;
  return c;
}

ArchConfig small_proposed() {
  ArchConfig c = table1_catalog(10)[3].config;
  c.width_divisor = 16;
  return c;
}

}  // namespace

TEST_CASE("golden byte layout") {
  const NamedTensorList entries{{"ab", Tensorf::from_values({2}, {1.0f, -2.0f})}};
  const auto bytes = encode_ntl(entries);
  const std::vector<std::uint8_t> body{'N', 'T', 'L', '1', 1, 0, 0, 0,  // magic, count
                                       2, 0, 0, 0, 'a', 'b',            // name
                                       1, 2, 0, 0, 0,                   // rank, extent
                                       0x00, 0x00, 0x80, 0x3f,          // 1.0f
                                       0x00, 0x00, 0x00, 0xc0};         // -2.0f
  REQUIRE(bytes.size() == body.size() + 4);
  CHECK(std::equal(body.begin(), body.end(), bytes.begin()));
  const std::uint32_t crc = crc32_of(body.data(), body.size());
  CHECK(std::memcmp(bytes.data() + body.size(), &crc, 4) == 0);
  // Standard CRC-32 check value.
  const std::string check = "123456789";
  CHECK(crc32_of(reinterpret_cast<const std::uint8_t*>(check.data()), check.size()) == 0xCBF43926u);
}

TEST_CASE("round trip is bit-exact and reproducible") {
  const auto entries = sample_entries();
  const auto path = temp_file("roundtrip.ntl");
  write_ntl(path, entries);
  CHECK(same(read_ntl(path), entries));
  CHECK(encode_ntl(entries) == encode_ntl(entries));

  const auto empty = encode_ntl({});
  CHECK(empty.size() == 12);
  CHECK(decode_ntl(empty).empty());
}

TEST_CASE("property: random entry lists round trip") {
  Rng rng(77);
  for (int trial = 0; trial < 25; ++trial) {
    NamedTensorList entries;
    const auto count = rng.below(5);
    for (std::uint64_t i = 0; i < count; ++i) {
      Shape shape(rng.below(4));
      for (auto& e : shape) e = static_cast<Index>(rng.below(4));
      entries.push_back({"t" + std::to_string(i), testing::random_tensor<float>(shape, rng, -1e30, 1e30)});
    }
    CHECK(same(decode_ntl(encode_ntl(entries)), entries));
  }
}

TEST_CASE("corruption is reported as a format error") {
  const auto bytes = encode_ntl(sample_entries());
  for (std::size_t cut : {std::size_t{0}, std::size_t{7}, std::size_t{40}, bytes.size() / 2,
                          bytes.size() - 1}) {
    CAPTURE(cut);
    std::vector<std::uint8_t> truncated(bytes.begin(), bytes.begin() + static_cast<long>(cut));
    CHECK_THROWS_AS(decode_ntl(truncated), FormatError);
  }
  auto flipped = bytes;
  flipped[100] ^= 0x01;
  CHECK_THROWS_WITH_AS(decode_ntl(flipped), doctest::Contains("checksum"), FormatError);
  auto magic = bytes;
  magic[3] = '2';
  CHECK_THROWS_WITH_AS(decode_ntl(magic), doctest::Contains("magic"), FormatError);

  const NamedTensorList dup{{"x", Tensorf::ones({1})}, {"x", Tensorf::ones({1})}};
  CHECK_THROWS_AS(encode_ntl(dup), FormatError);

  std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + 60);
  try {
    decode_ntl(cut);
    FAIL("expected format error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("offset") != std::string::npos);
  }
  CHECK_THROWS_AS(read_ntl(temp_file("does_not_exist.ntl")), FormatError);
}

TEST_CASE("strict load of a full file into the basic model") {
  const auto source = build_vgg<float>(small_basic(), {1});
  auto target = build_vgg<float>(small_basic(), {2});
  const auto report = load_into(target, graph_entries(source), LoadOptions{});
  CHECK(report.loaded.size() == 16);
  CHECK(report.missing.empty());
  CHECK(report.extra.empty());
  for (const auto& name : target.parameter_names()) CHECK(target.tensor(name) == source.tensor(name));

  Index loaded_size = 0;
  for (const auto& e : graph_entries(source)) loaded_size += e.tensor.size();
  CHECK(loaded_size == target.param_count());
}

TEST_CASE("lenient branch mapping duplicates block 5") {
  const auto source = build_vgg<float>(small_basic(), {1});
  auto target = build_vgg<float>(small_proposed(), {2});
  auto entries = graph_entries(source);
  entries.erase(std::remove_if(entries.begin(), entries.end(),
                               [](const NamedTensor& e) { return e.name.rfind("fc", 0) == 0; }),
                entries.end());

  LoadOptions strict;
  strict.map_branches = true;
  CHECK_THROWS_AS(load_into(target, entries, strict), MappingError);

  LoadOptions lenient;
  lenient.strict = false;
  lenient.map_branches = true;
  const auto report = load_into(target, entries, lenient);
  CHECK(report.loaded.size() == 16);
  CHECK(report.missing.size() == 6);
  for (int j = 1; j <= 3; ++j) {
    const std::string base = "block5_conv" + std::to_string(j);
    CHECK(target.tensor(base + "_br1.weights") == source.tensor(base + ".weights"));
    CHECK(target.tensor(base + "_br2.weights") == source.tensor(base + ".weights"));
  }
}

TEST_CASE("load is atomic on shape mismatch") {
  auto target = build_vgg<float>(small_basic(), {2});
  const auto before = graph_entries(target);
  auto entries = graph_entries(build_vgg<float>(small_basic(), {1}));
  entries.back().tensor = Tensorf::zeros({3});
  CHECK_THROWS_WITH_AS(load_into(target, entries, LoadOptions{}), doctest::Contains("[3]"),
                       MappingError);
  CHECK(same(graph_entries(target), before));
}
