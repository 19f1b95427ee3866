#include "adet/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>

#include "adet/error.hpp"

namespace adet {

namespace {

constexpr char kMagic[8] = {'A', 'D', 'E', 'T', 'W', 'T', 'S', '1'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::filesystem::path& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  require(static_cast<bool>(in), ErrorKind::kIo, "truncated weights file " + path.string());
  return v;
}

}  // namespace

void write_weights(const std::filesystem::path& path, const ParamRefs& params) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::kIo, "cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const Param* p : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
    out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p->value.rows()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p->value.cols()));
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(p->value.size() * sizeof(double)));
  }
  require(static_cast<bool>(out), ErrorKind::kIo, "failed writing " + path.string());
}

void read_weights(const std::filesystem::path& path, const ParamRefs& params, bool allow_extra) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::kIo, "cannot read " + path.string());
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  require(in && std::memcmp(magic, kMagic, sizeof(kMagic)) == 0, ErrorKind::kIo,
          "not a weights file: " + path.string());

  std::map<std::string, Param*> by_name;
  for (Param* p : params) by_name[p->name] = p;
  std::size_t loaded = 0;
  const auto count = get<std::uint32_t>(in, path);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get<std::uint32_t>(in, path);
    std::string name(len, '\0');
    in.read(name.data(), len);
    const auto rows = get<std::uint32_t>(in, path);
    const auto cols = get<std::uint32_t>(in, path);
    Eigen::MatrixXd value(rows, cols);
    in.read(reinterpret_cast<char*>(value.data()), static_cast<std::streamsize>(value.size() * sizeof(double)));
    require(static_cast<bool>(in), ErrorKind::kIo, "truncated weights file " + path.string());
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      require(allow_extra, ErrorKind::kContract, "unexpected tensor '" + name + "' in " + path.string());
      continue;
    }
    require(it->second->value.rows() == value.rows() && it->second->value.cols() == value.cols(),
            ErrorKind::kContract, "shape mismatch for tensor '" + name + "'");
    it->second->value = std::move(value);
    ++loaded;
  }
  require(loaded == params.size(), ErrorKind::kContract, "weights file " + path.string() + " is missing tensors");
}

void save_checkpoint(const std::filesystem::path& dir, Model& model, const RunConfig& config, int iteration) {
  std::filesystem::create_directories(dir);
  write_weights(dir / "weights.bin", model.parameters());
  save_run_config(dir / "config.json", config);
  write_json_file(dir / "checkpoint.json", nlohmann::json{{"format_version", kCheckpointFormatVersion},
                                                          {"iteration", iteration},
                                                          {"categories", config.detector.categories},
                                                          {"has_adaptation_heads", model.heads.has_value()}});
  std::ofstream(dir / "iteration") << iteration << '\n';
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir, bool with_adaptation_heads) {
  require(std::filesystem::is_directory(dir), ErrorKind::kIo, "checkpoint directory not found: " + dir.string());
  const auto meta = read_json_file(dir / "checkpoint.json");
  const int version = meta.at("format_version").get<int>();
  require(version == kCheckpointFormatVersion, ErrorKind::kConfiguration,
          "unsupported checkpoint format version " + std::to_string(version));
  const bool has_heads = meta.at("has_adaptation_heads").get<bool>();
  require(!with_adaptation_heads || has_heads, ErrorKind::kContract, "checkpoint has no adaptation heads");

  LoadedCheckpoint ck;
  ck.config = load_run_config(dir / "config.json");
  ck.iteration = meta.at("iteration").get<int>();
  TrainConfig tcfg = ck.config.train;
  tcfg.source_only = !with_adaptation_heads;
  ck.model = Model::create(ck.config.detector, tcfg, ck.config.seed);
  read_weights(dir / "weights.bin", ck.model.parameters(), /*allow_extra=*/true);
  return ck;
}

}  // namespace adet
