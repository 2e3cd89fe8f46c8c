#include "geoflow/gft_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "geoflow/errors.hpp"

namespace geoflow {

static_assert(std::endian::native == std::endian::little,
              "GFT I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'G', 'F', 'T', '1'};
constexpr std::size_t kHeaderBytes = 8;
constexpr std::size_t kMaxRank = 8;

[[noreturn]] void fail(const std::string& field, const std::string& detail) {
  throw FormatError("GFT " + field + ": " + detail);
}

}  // namespace

std::vector<char> encode_tensor(const TensorGrid& grid) {
  if (grid.rank() < 1 || grid.rank() > kMaxRank) fail("rank", "must be in 1..8");
  const std::size_t payload = grid.size() * grid.element_bytes();
  std::vector<char> out(kHeaderBytes + 8 * grid.rank() + payload, 0);
  std::memcpy(out.data(), kMagic, 4);
  out[4] = static_cast<char>(grid.dtype());
  out[5] = static_cast<char>(grid.rank());
  char* cursor = out.data() + kHeaderBytes;
  for (auto d : grid.dims()) {
    const auto v = static_cast<std::uint64_t>(d);
    std::memcpy(cursor, &v, 8);
    cursor += 8;
  }
  std::memcpy(cursor, grid.raw_data(), payload);
  return out;
}

TensorGrid decode_tensor(const std::vector<char>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    fail("magic", "expected \"GFT1\"");
  }
  if (bytes.size() < kHeaderBytes) fail("rank", "header truncated");
  const auto code = static_cast<std::uint8_t>(bytes[4]);
  if (code < 1 || code > 3) fail("dtype", "unknown code " + std::to_string(code));
  const auto dtype = static_cast<DType>(code);
  const auto rank = static_cast<std::uint8_t>(bytes[5]);
  if (rank < 1 || rank > kMaxRank) fail("rank", "must be in 1..8, got " + std::to_string(rank));
  if (bytes[6] != 0 || bytes[7] != 0) fail("reserved", "bytes 6-7 must be zero");
  if (bytes.size() < kHeaderBytes + 8 * rank) fail("dims", "truncated dims block");

  std::vector<std::size_t> dims(rank);
  std::uint64_t count = 1;
  const std::uint64_t elem = code == 1 ? 4 : code == 2 ? 8 : 1;
  for (std::size_t i = 0; i < rank; ++i) {
    std::uint64_t d = 0;
    std::memcpy(&d, bytes.data() + kHeaderBytes + 8 * i, 8);
    if (d == 0) fail("dims", "zero-sized dimension " + std::to_string(i));
    if (count > std::numeric_limits<std::uint64_t>::max() / elem / d) {
      fail("dims", "element count overflows");
    }
    count *= d;
    dims[i] = static_cast<std::size_t>(d);
  }
  const std::size_t offset = kHeaderBytes + 8 * rank;
  const std::uint64_t expected = count * elem;
  if (bytes.size() - offset != expected) {
    fail("payload length", "expected " + std::to_string(expected) + " bytes, found " +
                               std::to_string(bytes.size() - offset));
  }
  TensorGrid grid(dtype, std::move(dims));
  std::memcpy(grid.raw_data(), bytes.data() + offset, expected);
  return grid;
}

void save_tensor(const TensorGrid& grid, const std::filesystem::path& path) {
  check_finite(grid, path.string());
  const auto bytes = encode_tensor(grid);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("write failed: " + path.string());
}

TensorGrid load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open: " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  try {
    auto grid = decode_tensor(bytes);
    check_finite(grid, path.string());
    return grid;
  } catch (const FormatError& e) {
    throw FormatError(std::string(e.what()) + " (" + path.string() + ")");
  }
}

}  // namespace geoflow
