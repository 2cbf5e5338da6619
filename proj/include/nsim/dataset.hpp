#pragma once

#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <vector>

#include "nsim/env.hpp"
#include "nsim/io.hpp"

namespace nsim {

/// Dataset content that cannot serve the requested training configuration.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr uint32_t kDatasetVersion = 1;

struct DatasetHeader {
  int height = 0;
  int width = 0;
  int channels = 3;
  int action_count = kActionCount;
  std::vector<int> counterparts{kCounterparts.begin(), kCounterparts.end()};
  uint64_t episode_count = 0;
};

void write_dataset(std::ostream& os, const std::vector<Episode>& episodes);
void write_dataset(const std::filesystem::path& path, const std::vector<Episode>& episodes);

/// Streams episodes one at a time; validates each before returning it.
class DatasetReader {
 public:
  explicit DatasetReader(std::istream& is);
  const DatasetHeader& header() const { return header_; }
  /// False once `episode_count` episodes have been returned.
  bool next(Episode& out);

 private:
  BinaryReader reader_;
  DatasetHeader header_;
  uint64_t returned_ = 0;
};

/// Reads the whole file; on any error nothing is returned.
std::vector<Episode> read_dataset(std::istream& is);
std::vector<Episode> read_dataset(const std::filesystem::path& path);

}  // namespace nsim
