#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "manetl/config.hpp"
#include "manetl/train.hpp"

namespace manetl {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout, little-endian throughout:
//   "MNTLCKPT" | u32 version | config echo | u64 epoch | rng state |
//   tensor table | optimizer state | "MNTLEND!"
// Strings are u32 length + bytes. A tensor is name, u8 kind (0 parameter,
// 1 buffer), u32 rank, u64 extents, then raw IEEE-754 binary32 values.
std::vector<std::uint8_t> save_checkpoint(Session& session, const RunSpec& spec);

struct LoadedCheckpoint {
    RunSpec spec;
    std::unique_ptr<Session> session;
};

// Parses the whole file before building anything, so a failure leaves no
// partial state. The version is checked before any tensor is read. Errors
// are FormatError naming the failing section.
LoadedCheckpoint load_checkpoint(std::span<const std::uint8_t> bytes);

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

}  // namespace manetl
