#include "emotalk/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "emotalk/config.hpp"
#include "emotalk/error.hpp"

namespace emotalk {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoints are stored little-endian");

constexpr char kMagic[8] = {'E', 'M', 'O', 'T', 'A', 'L', 'K', '\0'};

struct ArrayRef {
  std::string name;
  std::string role;
  const Matrix* value;
  bool frozen;
};

void write_file(const std::filesystem::path& path, const nlohmann::json& manifest_base,
                const std::vector<ArrayRef>& arrays) {
  nlohmann::json manifest = manifest_base;
  nlohmann::json entries = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const ArrayRef& a : arrays) {
    entries.push_back({{"name", a.name},
                       {"role", a.role},
                       {"rows", a.value->rows()},
                       {"cols", a.value->cols()},
                       {"frozen", a.frozen},
                       {"offset", offset}});
    offset += static_cast<std::uint64_t>(a.value->size()) * sizeof(double);
  }
  manifest["arrays"] = std::move(entries);
  const std::string text = manifest.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    const std::uint32_t version = kCheckpointVersion;
    const std::uint64_t length = text.size();
    out.write(kMagic, sizeof kMagic);
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    out.write(reinterpret_cast<const char*>(&length), sizeof length);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const ArrayRef& a : arrays) {
      out.write(reinterpret_cast<const char*>(a.value->data()),
                static_cast<std::streamsize>(a.value->size() * sizeof(double)));
    }
    if (!out) throw IoError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

std::vector<ArrayRef> parameter_arrays(const ModelParams& params) {
  std::vector<ArrayRef> out;
  visit(params, [&](const std::string& name, const ad::Parameter& p) {
    out.push_back({name, "param", &p.value, p.frozen});
  });
  return out;
}

struct RawCheckpoint {
  nlohmann::json manifest;
  std::string payload;
};

RawCheckpoint read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t length = 0;
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw FormatError(path.string() + " is not a checkpoint");
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  if (!in || version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  in.read(reinterpret_cast<char*>(&length), sizeof length);
  if (!in || length > (1ULL << 32)) throw FormatError("corrupt checkpoint manifest length");
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (!in) throw FormatError("truncated checkpoint manifest");
  RawCheckpoint raw;
  try {
    raw.manifest = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("corrupt checkpoint manifest: ") + e.what());
  }
  raw.payload.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  return raw;
}

// Copies the array called (role, name) into `dst`, checking its shape.
class ArrayTable {
 public:
  explicit ArrayTable(const RawCheckpoint& raw) : raw_(raw) {
    if (!raw.manifest.contains("arrays") || !raw.manifest["arrays"].is_array()) {
      throw FormatError("checkpoint manifest has no array list");
    }
    for (const auto& e : raw.manifest["arrays"]) {
      entries_[{e.at("role").get<std::string>(), e.at("name").get<std::string>()}] = &e;
    }
  }

  bool has_role(const std::string& role) const {
    for (const auto& [key, e] : entries_) {
      if (key.first == role) return true;
    }
    return false;
  }

  bool fill(const std::string& role, const std::string& name, Matrix& dst) const {
    const auto it = entries_.find({role, name});
    if (it == entries_.end()) throw FormatError("checkpoint lacks array " + role + ":" + name);
    const auto& e = *it->second;
    const auto rows = e.at("rows").get<Index>(), cols = e.at("cols").get<Index>();
    if (rows != dst.rows() || cols != dst.cols()) throw FormatError("checkpoint array " + name + " has the wrong shape");
    const auto offset = e.at("offset").get<std::uint64_t>();
    const std::uint64_t bytes = static_cast<std::uint64_t>(rows * cols) * sizeof(double);
    if (offset + bytes > raw_.payload.size()) throw FormatError("checkpoint array " + name + " is truncated");
    std::memcpy(dst.data(), raw_.payload.data() + offset, bytes);
    return e.at("frozen").get<bool>();
  }

 private:
  const RawCheckpoint& raw_;
  std::map<std::pair<std::string, std::string>, const nlohmann::json*> entries_;
};

LoadedModel restore_model(const RawCheckpoint& raw, const ArrayTable& table) {
  LoadedModel m;
  try {
    m.config = raw.manifest.at("model_config").get<ModelConfig>();
    m.step = raw.manifest.at("step").get<long long>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("corrupt checkpoint manifest: ") + e.what());
  }
  m.params = init_model(m.config);
  visit(m.params, [&](const std::string& name, ad::Parameter& p) {
    p.frozen = table.fill("param", name, p.value);
    p.zero_grad();
  });
  return m;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config, const ModelParams& params,
                     long long step) {
  nlohmann::json manifest{{"model_config", config}, {"step", step}};
  write_file(path, manifest, parameter_arrays(params));
}

void save_checkpoint(const std::filesystem::path& path, const TrainState& state) {
  std::ostringstream rng;
  rng << state.rng;
  nlohmann::json manifest{{"model_config", state.model_config}, {"step", state.step}, {"rng", rng.str()}};
  std::vector<ArrayRef> arrays = parameter_arrays(state.params);
  const std::size_t n = arrays.size();
  if (state.adam_m.size() != n || state.adam_v.size() != n) throw AlignmentError("optimizer state size mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    arrays.push_back({arrays[i].name, "adam_m", &state.adam_m[i], arrays[i].frozen});
    arrays.push_back({arrays[i].name, "adam_v", &state.adam_v[i], arrays[i].frozen});
  }
  write_file(path, manifest, arrays);
}

LoadedModel load_model(const std::filesystem::path& path) {
  const RawCheckpoint raw = read_file(path);
  return restore_model(raw, ArrayTable(raw));
}

TrainState load_train_state(const std::filesystem::path& path) {
  const RawCheckpoint raw = read_file(path);
  const ArrayTable table(raw);
  if (!table.has_role("adam_m") || !raw.manifest.contains("rng")) {
    throw FormatError("checkpoint " + path.string() + " holds no optimizer state");
  }
  LoadedModel m = restore_model(raw, table);
  TrainState s;
  s.model_config = m.config;
  s.params = std::move(m.params);
  s.step = m.step;
  visit(s.params, [&](const std::string& name, const ad::Parameter& p) {
    Matrix mm(p.value.rows(), p.value.cols()), vv(p.value.rows(), p.value.cols());
    table.fill("adam_m", name, mm);
    table.fill("adam_v", name, vv);
    s.adam_m.push_back(std::move(mm));
    s.adam_v.push_back(std::move(vv));
  });
  std::istringstream rng(raw.manifest["rng"].get<std::string>());
  rng >> s.rng;
  if (!rng) throw FormatError("corrupt sampler state in checkpoint");
  return s;
}

}  // namespace emotalk
