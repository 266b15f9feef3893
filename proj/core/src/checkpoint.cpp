#include "docnmt/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "docnmt/errors.hpp"

namespace docnmt {

namespace {

std::uint64_t to_little(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  std::uint64_t out = 0;
  for (int i = 0; i < 8; ++i) out |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
  return out;
}

void write_doubles(std::ostream& out, std::span<const double> vals) {
  for (double d : vals) {
    const std::uint64_t bits = to_little(std::bit_cast<std::uint64_t>(d));
    char buf[8];
    std::memcpy(buf, &bits, 8);
    out.write(buf, 8);
  }
}

std::string read_line(std::istream& in, const std::filesystem::path& path) {
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": truncated checkpoint manifest");
  return line;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Config& config, const ParamSet& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  const auto& cfg = config.values();
  out << "docnmt-checkpoint " << kCheckpointVersion << '\n';
  out << "config " << cfg.size() << '\n';
  for (const auto& [k, v] : cfg) out << k << " = " << v << '\n';
  out << "tensors " << params.size() << '\n';
  std::size_t offset = 0;
  for (const auto& e : params.entries()) {
    out << e.name << ' ' << e.value.rank();
    for (auto d : e.value.shape()) out << ' ' << d;
    out << ' ' << offset << '\n';
    offset += e.value.size() * sizeof(double);
  }
  out << "data " << offset << '\n';
  for (const auto& e : params.entries()) write_doubles(out, e.value.values());
  if (!out) throw DataError("failed while writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  Checkpoint ck;
  {
    std::istringstream header(read_line(in, path));
    std::string magic;
    int version = 0;
    header >> magic >> version;
    if (magic != "docnmt-checkpoint") throw DataError(path.string() + ": not a checkpoint file");
    if (version != kCheckpointVersion) throw DataError(path.string() + ": unsupported checkpoint version");
  }
  auto counted = [&](const std::string& tag) {
    std::istringstream is(read_line(in, path));
    std::string t;
    std::size_t n = 0;
    if (!(is >> t >> n) || t != tag) throw DataError(path.string() + ": expected '" + tag + "' section");
    return n;
  };
  const std::size_t n_cfg = counted("config");
  std::string cfg_text;
  for (std::size_t i = 0; i < n_cfg; ++i) cfg_text += read_line(in, path) + '\n';
  ck.config = Config::parse(cfg_text, path.string());

  struct Entry {
    std::string name;
    Shape shape;
    std::size_t offset;
  };
  std::vector<Entry> entries;
  const std::size_t n_tensors = counted("tensors");
  for (std::size_t i = 0; i < n_tensors; ++i) {
    std::istringstream is(read_line(in, path));
    Entry e;
    std::size_t rank = 0;
    if (!(is >> e.name >> rank) || rank == 0) throw DataError(path.string() + ": bad tensor entry");
    e.shape.resize(rank);
    for (auto& d : e.shape) is >> d;
    if (!(is >> e.offset)) throw DataError(path.string() + ": bad tensor entry for " + e.name);
    entries.push_back(std::move(e));
  }
  const std::size_t n_bytes = counted("data");
  std::vector<char> blob(n_bytes);
  in.read(blob.data(), static_cast<std::streamsize>(n_bytes));
  if (static_cast<std::size_t>(in.gcount()) != n_bytes) throw DataError(path.string() + ": truncated data block");

  for (const auto& e : entries) {
    const std::size_t count = shape_size(e.shape);
    if (e.offset + count * 8 > n_bytes) throw DataError(path.string() + ": tensor " + e.name + " exceeds data block");
    std::vector<double> vals(count);
    for (std::size_t j = 0; j < count; ++j) {
      std::uint64_t bits = 0;
      std::memcpy(&bits, blob.data() + e.offset + 8 * j, 8);
      vals[j] = std::bit_cast<double>(to_little(bits));
    }
    ck.tensors.emplace_back(e.name, Tensor(e.shape, std::move(vals)));
  }
  return ck;
}

void apply_checkpoint(const Checkpoint& ckpt, ParamSet& params, bool strict, const std::string& prefix) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : ckpt.tensors) by_name[name] = &t;
  // Everything is checked before anything is copied, so a rejected
  // checkpoint leaves the parameters untouched.
  std::vector<std::pair<ParamId, const Tensor*>> copies;
  for (ParamId id : params.ids()) {
    const auto& name = params.name(id);
    if (!prefix.empty() && name.rfind(prefix, 0) != 0) continue;
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      if (strict) throw DataError("checkpoint is missing tensor " + name);
      continue;
    }
    if (it->second->shape() != params.value(id).shape()) {
      throw DataError("checkpoint tensor " + name + " has shape " + shape_str(it->second->shape()) + ", expected " +
                      shape_str(params.value(id).shape()));
    }
    copies.emplace_back(id, it->second);
  }
  for (const auto& [id, t] : copies) params.value(id) = *t;
}

}  // namespace docnmt
