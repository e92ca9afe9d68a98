#pragma once

// Temporary directories and synthetic files in the CIFAR binary layouts.

#include <unistd.h>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace dtk::testing {

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag)
      : path(std::filesystem::temp_directory_path() / ("dtk_" + tag + "_" + std::to_string(::getpid()))) {
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

inline void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// A whole file of records where record r has label r mod classes and a constant pixel value.
inline std::vector<std::uint8_t> synthetic_file(int records, int label_bytes, int classes, int offset) {
  const std::size_t rec = static_cast<std::size_t>(label_bytes + 3072);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(records) * rec);
  for (int r = 0; r < records; ++r) {
    std::uint8_t* p = bytes.data() + static_cast<std::size_t>(r) * rec;
    const int label = (r + offset) % classes;
    if (label_bytes == 2) p[0] = static_cast<std::uint8_t>(label / 5);
    p[label_bytes - 1] = static_cast<std::uint8_t>(label);
    std::fill(p + label_bytes, p + rec, static_cast<std::uint8_t>((r + offset) % 251));
  }
  return bytes;
}

inline void write_cifar10_dir(const std::filesystem::path& dir) {
  for (int i = 1; i <= 5; ++i) {
    write_bytes(dir / ("data_batch_" + std::to_string(i) + ".bin"),
                synthetic_file(10000, 1, 10, (i - 1) * 10000));
  }
  write_bytes(dir / "test_batch.bin", synthetic_file(10000, 1, 10, 7));
}

}  // namespace dtk::testing
