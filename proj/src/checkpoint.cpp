#include "cdnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <set>

#include <fmt/format.h>

namespace cdnet {

namespace {

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& path) : bytes_(bytes), path_(path) {}

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError(fmt::format("checkpoint '{}' truncated while reading {} at offset {}",
                                        path_, what, pos_));
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = static_cast<std::uint8_t>(bytes_[pos_]) |
                      static_cast<std::uint16_t>(static_cast<std::uint8_t>(bytes_[pos_ + 1]) << 8);
    pos_ += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }
  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  [[nodiscard]] bool done() const { return pos_ == bytes_.size(); }
  [[nodiscard]] std::size_t position() const { return pos_; }

 private:
  const std::string& bytes_;
  const std::string& path_;
  std::size_t pos_ = 0;
};

std::size_t element_count(const std::vector<std::uint32_t>& dims) {
  std::size_t n = 1;
  for (std::uint32_t d : dims) n *= d;
  return n;
}

CheckpointEntry make_entry(std::string name, std::vector<std::uint32_t> dims,
                           std::span<const float> values) {
  return {std::move(name), std::move(dims), std::vector<float>(values.begin(), values.end())};
}

void append_optimizer(std::vector<CheckpointEntry>& out, const std::string& prefix, Adam& opt,
                      const std::vector<ParamRef>& params) {
  const float step = static_cast<float>(opt.steps());
  out.push_back(make_entry(prefix + ".step", {1}, std::span<const float>(&step, 1)));
  auto& m = opt.first_moments();
  auto& v = opt.second_moments();
  if (m.empty()) return;
  if (m.size() != params.size()) {
    throw CheckpointError(fmt::format("optimizer '{}' tracks {} tensors, model has {}", prefix,
                                      m.size(), params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    out.push_back(make_entry(prefix + ".m." + params[i].name, params[i].dims, m[i]));
    out.push_back(make_entry(prefix + ".v." + params[i].name, params[i].dims, v[i]));
  }
}

// Entries indexed by name; every lookup marks the entry consumed so leftovers
// can be reported as unknown.
class EntryTable {
 public:
  explicit EntryTable(const std::vector<CheckpointEntry>& entries) {
    for (const CheckpointEntry& e : entries) {
      if (!by_name_.emplace(e.name, &e).second) {
        throw CheckpointError(fmt::format("duplicate checkpoint entry '{}'", e.name));
      }
    }
  }
  const CheckpointEntry* find(const std::string& name) {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) return nullptr;
    used_.insert(name);
    return it->second;
  }
  const CheckpointEntry& require(const std::string& name) {
    const CheckpointEntry* e = find(name);
    if (e == nullptr) throw CheckpointError(fmt::format("checkpoint is missing '{}'", name));
    return *e;
  }
  void copy_into(const std::string& name, std::span<float> dst) {
    const CheckpointEntry& e = require(name);
    if (e.values.size() != dst.size()) {
      throw CheckpointError(fmt::format("checkpoint entry '{}' has {} values, expected {}", name,
                                        e.values.size(), dst.size()));
    }
    std::copy(e.values.begin(), e.values.end(), dst.begin());
  }
  void reject_unused() const {
    for (const auto& [name, entry] : by_name_) {
      if (!used_.contains(name)) {
        throw CheckpointError(fmt::format("unknown checkpoint entry '{}'", name));
      }
    }
  }
  [[nodiscard]] std::vector<std::string> names_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& [name, entry] : by_name_) {
      if (name.rfind(prefix, 0) == 0) out.push_back(name);
    }
    return out;
  }
  [[nodiscard]] bool has_prefix(const std::string& prefix) const {
    return !names_with_prefix(prefix).empty();
  }

 private:
  std::map<std::string, const CheckpointEntry*> by_name_;
  std::set<std::string> used_;
};

Adam restore_optimizer(EntryTable& table, const std::string& prefix, AdamConfig config,
                       const std::vector<ParamRef>& params) {
  Adam opt(config);
  const CheckpointEntry& step = table.require(prefix + ".step");
  if (step.values.size() != 1) throw CheckpointError(prefix + ".step must hold one value");
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
  if (table.find(prefix + ".m." + params.front().name) != nullptr) {
    for (const ParamRef& p : params) {
      const CheckpointEntry& em = table.require(prefix + ".m." + p.name);
      const CheckpointEntry& ev = table.require(prefix + ".v." + p.name);
      if (em.values.size() != p.value.size() || ev.values.size() != p.value.size()) {
        throw CheckpointError(fmt::format("optimizer moments for '{}' have the wrong size", p.name));
      }
      m.push_back(em.values);
      v.push_back(ev.values);
    }
  }
  opt.restore(static_cast<std::uint64_t>(step.values[0]), std::move(m), std::move(v));
  return opt;
}

}  // namespace

std::size_t checkpoint_size(const std::vector<CheckpointEntry>& entries) {
  std::size_t total = 12;
  for (const CheckpointEntry& e : entries) {
    total += 2 + e.name.size() + 1 + 4 * e.dims.size() + 4 * e.values.size();
  }
  return total;
}

void write_checkpoint_entries(const std::string& path, const std::vector<CheckpointEntry>& entries) {
  std::string out;
  out.reserve(checkpoint_size(entries));
  out.append(kCheckpointMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(entries.size()));
  for (const CheckpointEntry& e : entries) {
    if (e.name.size() > 0xffff) throw CheckpointError("checkpoint entry name too long");
    if (e.dims.size() > 0xff) throw CheckpointError("checkpoint entry rank too large");
    if (element_count(e.dims) != e.values.size()) {
      throw CheckpointError(fmt::format("entry '{}': dims disagree with value count", e.name));
    }
    put_u16(out, static_cast<std::uint16_t>(e.name.size()));
    out += e.name;
    out.push_back(static_cast<char>(e.dims.size()));
    for (std::uint32_t d : e.dims) put_u32(out, d);
    for (float f : e.values) put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw CheckpointError(fmt::format("cannot open '{}' for writing", path));
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw CheckpointError(fmt::format("failed writing '{}'", path));
}

std::vector<CheckpointEntry> read_checkpoint_entries(const std::string& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw CheckpointError(fmt::format("cannot open checkpoint '{}'", path));
  const std::string bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
  Reader r(bytes, path);
  const std::string magic = r.bytes(4, "magic");
  if (std::memcmp(magic.data(), kCheckpointMagic, 4) != 0) {
    throw CheckpointError(fmt::format("'{}' is not a checkpoint (bad magic)", path));
  }
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError(fmt::format("checkpoint '{}' has version {}, expected {}", path, version,
                                      kCheckpointVersion));
  }
  const std::uint32_t count = r.u32("entry count");
  std::vector<CheckpointEntry> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    const std::uint16_t len = r.u16("name length");
    e.name = r.bytes(len, "name");
    const std::uint8_t rank = r.u8("rank");
    for (std::uint8_t d = 0; d < rank; ++d) e.dims.push_back(r.u32("dims"));
    const std::size_t n = element_count(e.dims);
    r.need(4 * n, "values");
    e.values.resize(n);
    for (std::size_t k = 0; k < n; ++k) e.values[k] = std::bit_cast<float>(r.u32("values"));
    entries.push_back(std::move(e));
  }
  if (!r.done()) {
    throw CheckpointError(fmt::format("checkpoint '{}' has trailing bytes after offset {}", path,
                                      r.position()));
  }
  return entries;
}

std::vector<CheckpointEntry> checkpoint_entries(Network& net, const TrainingState& state) {
  std::vector<CheckpointEntry> out;
  for (const BlockSpec& b : net.spec()) {
    std::vector<float> rows;
    for (const LayerSpec& l : b.layers) {
      rows.insert(rows.end(), {static_cast<float>(static_cast<int>(b.kind)),
                               static_cast<float>(l.kernel), static_cast<float>(l.channels),
                               static_cast<float>(l.stride)});
    }
    out.push_back(make_entry("arch.block." + b.name,
                             {static_cast<std::uint32_t>(b.layers.size()), 4}, rows));
  }
  const float options[2] = {net.options().gate == GateActivation::sigmoid ? 0.0f : 1.0f,
                            net.options().slope};
  out.push_back(make_entry("arch.options", {2}, options));

  const std::vector<ParamRef> params = net.parameters();
  for (const ParamRef& p : params) out.push_back(make_entry(p.name, p.dims, p.value));
  for (const BufferRef& b : net.buffers()) out.push_back(make_entry(b.name, b.dims, b.value));
  if (state.generator_optimizer != nullptr) {
    append_optimizer(out, "opt.G", *state.generator_optimizer, params);
  }
  if (state.discriminator != nullptr) {
    const std::vector<ParamRef> dparams = state.discriminator->parameters();
    std::vector<float> channels;
    for (std::size_t i = 0; i + 2 < dparams.size(); i += 2) {
      channels.push_back(static_cast<float>(dparams[i].dims[0]));
    }
    out.push_back(make_entry("D.channels", {static_cast<std::uint32_t>(channels.size())},
                             channels));
    for (const ParamRef& p : dparams) out.push_back(make_entry(p.name, p.dims, p.value));
    for (const BufferRef& b : state.discriminator->buffers()) {
      out.push_back(make_entry(b.name, b.dims, b.value));
    }
    if (state.discriminator_optimizer != nullptr) {
      append_optimizer(out, "opt.D", *state.discriminator_optimizer, dparams);
    }
  }
  return out;
}

void save_checkpoint(const std::string& path, Network& net, const TrainingState& state) {
  write_checkpoint_entries(path, checkpoint_entries(net, state));
}

void restore_values(const std::vector<CheckpointEntry>& entries, std::vector<ParamRef> params,
                    std::vector<BufferRef> buffers) {
  EntryTable table(entries);
  for (const ParamRef& p : params) table.copy_into(p.name, p.value);
  for (const BufferRef& b : buffers) table.copy_into(b.name, b.value);
  table.reject_unused();
}

LoadedCheckpoint load_checkpoint(const std::string& path, AdamConfig generator_config,
                                 AdamConfig discriminator_config) {
  const std::vector<CheckpointEntry> entries = read_checkpoint_entries(path);
  EntryTable table(entries);

  // Block order is the file order of the arch.block.* entries.
  std::vector<BlockSpec> spec;
  for (const CheckpointEntry& e : entries) {
    if (e.name.rfind("arch.block.", 0) != 0) continue;
    table.find(e.name);
    if (e.dims.size() != 2 || e.dims[1] != 4) {
      throw CheckpointError(fmt::format("malformed architecture entry '{}'", e.name));
    }
    BlockSpec b;
    b.name = e.name.substr(11);
    for (std::uint32_t r = 0; r < e.dims[0]; ++r) {
      const float* row = e.values.data() + 4 * r;
      const int kind = static_cast<int>(row[0]);
      if (kind < 0 || kind > 2) throw CheckpointError("unknown block kind in checkpoint");
      b.kind = static_cast<BlockKind>(kind);
      b.layers.push_back({static_cast<int>(row[1]), static_cast<std::size_t>(row[2]),
                          static_cast<int>(row[3])});
    }
    spec.push_back(std::move(b));
  }
  if (spec.empty()) throw CheckpointError(fmt::format("checkpoint '{}' has no architecture", path));
  const CheckpointEntry& opts = table.require("arch.options");
  if (opts.values.size() != 2) throw CheckpointError("malformed arch.options entry");
  NetworkOptions options;
  options.gate = opts.values[0] == 0.0f ? GateActivation::sigmoid : GateActivation::identity;
  options.slope = opts.values[1];

  LoadedCheckpoint loaded{Network::build(spec, options), std::nullopt, std::nullopt,
                          std::nullopt};
  const std::vector<ParamRef> params = loaded.network.parameters();
  for (const ParamRef& p : params) table.copy_into(p.name, p.value);
  for (const BufferRef& b : loaded.network.buffers()) table.copy_into(b.name, b.value);

  if (table.find("opt.G.step") != nullptr) {
    loaded.generator_optimizer = restore_optimizer(table, "opt.G", generator_config, params);
  }
  if (const CheckpointEntry* ch = table.find("D.channels")) {
    DiscriminatorConfig cfg;
    cfg.channels.clear();
    for (float c : ch->values) cfg.channels.push_back(static_cast<std::size_t>(c));
    loaded.discriminator.emplace(cfg);
    const std::vector<ParamRef> dparams = loaded.discriminator->parameters();
    for (const ParamRef& p : dparams) table.copy_into(p.name, p.value);
    for (const BufferRef& b : loaded.discriminator->buffers()) table.copy_into(b.name, b.value);
    if (table.find("opt.D.step") != nullptr) {
      loaded.discriminator_optimizer =
          restore_optimizer(table, "opt.D", discriminator_config, dparams);
    }
  }
  table.reject_unused();
  return loaded;
}

}  // namespace cdnet
