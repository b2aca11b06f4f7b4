#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdnet/adam.hpp"
#include "cdnet/discriminator.hpp"
#include "cdnet/network.hpp"

namespace cdnet {

// File layout (all integers little-endian):
//   "CDN1" | u32 version | u32 entry count
//   per entry: u16 name length | name (UTF-8) | u8 rank | rank x u32 dims |
//              prod(dims) x f32
inline constexpr char kCheckpointMagic[4] = {'C', 'D', 'N', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CheckpointEntry {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;
};

void write_checkpoint_entries(const std::string& path, const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> read_checkpoint_entries(const std::string& path);

/// Bytes on disk for the given entries.
std::size_t checkpoint_size(const std::vector<CheckpointEntry>& entries);

struct TrainingState {
  Adam* generator_optimizer = nullptr;
  Discriminator* discriminator = nullptr;
  Adam* discriminator_optimizer = nullptr;
};

/// Architecture, every parameter and buffer of `net`, and whatever optimizer
/// and discriminator state is supplied.
std::vector<CheckpointEntry> checkpoint_entries(Network& net, const TrainingState& state = {});

void save_checkpoint(const std::string& path, Network& net, const TrainingState& state = {});

struct LoadedCheckpoint {
  Network network;
  std::optional<Adam> generator_optimizer;
  std::optional<Discriminator> discriminator;
  std::optional<Adam> discriminator_optimizer;
};

/// Rebuilds the network from the stored architecture and restores every
/// entry. Unknown or missing names are rejected.
LoadedCheckpoint load_checkpoint(const std::string& path, AdamConfig generator_config = {},
                                 AdamConfig discriminator_config = {});

/// Restores named parameters / buffers from entries into existing
/// references; throws on a missing, unknown or mis-sized entry.
void restore_values(const std::vector<CheckpointEntry>& entries, std::vector<ParamRef> params,
                    std::vector<BufferRef> buffers);

}  // namespace cdnet
