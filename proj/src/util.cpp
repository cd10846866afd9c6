#include <cstdlib>
#include <fstream>
#include <iterator>
#include <string>
#include <thread>

#include "ndgi/bytes.hpp"
#include "ndgi/error.hpp"
#include "ndgi/parallel.hpp"

namespace ndgi {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid argument";
    case ErrorCode::kIo: return "i/o error";
    case ErrorCode::kMalformedHeader: return "malformed header";
    case ErrorCode::kDimensionMismatch: return "dimension mismatch";
    case ErrorCode::kNonFinitePixel: return "non-finite pixel";
    case ErrorCode::kEmptyMask: return "empty mask";
    case ErrorCode::kOutOfRange: return "out of range";
    case ErrorCode::kNotDivisible: return "not divisible";
    case ErrorCode::kWidthMismatch: return "width mismatch";
    case ErrorCode::kNonFiniteLoss: return "non-finite loss";
    case ErrorCode::kCorruptPayload: return "corrupt payload";
    case ErrorCode::kVersionMismatch: return "version mismatch";
    case ErrorCode::kSizeMismatch: return "size mismatch";
    case ErrorCode::kUnknownTile: return "unknown tile";
    case ErrorCode::kNotResident: return "tile not resident";
    case ErrorCode::kMissingTileModel: return "missing tile model";
  }
  return "unknown error";
}

int resolve_threads(int requested) {
  if (const char* env = std::getenv("NDGI_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

namespace detail {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot create " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path);
}

}  // namespace detail
}  // namespace ndgi
