#pragma once

// Line-delimited record store shared by memories, scene splits and depth maps.
//
//   raap-store<TAB>1<TAB>d_emb=<n><TAB>payload=decimal
//   1<TAB>entry<TAB>id<TAB>task<TAB>H<TAB>W<TAB>C<TAB>pixels<TAB>embedding<TAB>cx cy<TAB>dx dy
//   1<TAB>depth<TAB>id<TAB>H<TAB>W<TAB>fx fy cx cy<TAB>depths
//   1<TAB>empty
//
// Numeric lists are space separated shortest round-trip decimals, so values
// survive a save/load cycle bitwise. Pixels are written pixel-major
// (y, x, channel). Every line, including the last, ends with a newline; a
// missing final newline is reported as truncation.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "raap/lifting.hpp"
#include "raap/memory.hpp"

namespace raap {

inline constexpr int kStoreVersion = 1;

struct DepthRecord {
  std::string id;
  DepthMap<double> depth;
  Intrinsics<double> intrinsics;
};

struct StoreContents {
  Eigen::Index embedding_dim = 0;
  std::vector<MemoryEntry> entries;
  std::vector<DepthRecord> depths;
};

void write_store(std::ostream& out, const StoreContents& contents);
/// Throws ParseError (with line number) on malformed input and SchemaError on
/// embedding sizes that disagree with the header.
StoreContents read_store(std::istream& in);

void write_store_file(const std::filesystem::path& path, const StoreContents& contents);
StoreContents read_store_file(const std::filesystem::path& path);

/// Shortest decimal that parses back to exactly `v`.
std::string format_double(double v);
/// Parses a complete decimal token; throws std::invalid_argument otherwise.
double parse_double(std::string_view token);

}  // namespace raap
