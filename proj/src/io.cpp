#include "freqlens/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>

#ifndef FREQLENS_GIT_DESCRIBE
#define FREQLENS_GIT_DESCRIBE "unknown"
#endif
#ifndef FREQLENS_VERSION
#define FREQLENS_VERSION "0.0.0"
#endif

namespace freqlens {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

std::string tool_version() { return std::string(FREQLENS_VERSION) + "+" + FREQLENS_GIT_DESCRIBE; }

uint64_t fnv1a64(std::string_view bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

nlohmann::json Provenance::to_json() const {
  return {{"config_hash", config_hash}, {"seed", seed}, {"version", version}};
}

void write_sidecar(const std::filesystem::path& artifact, const Provenance& prov, const nlohmann::json& extra) {
  auto j = prov.to_json();
  j["artifact"] = artifact.filename().string();
  if (!extra.is_null()) j["extra"] = extra;
  std::ofstream out(artifact.string() + ".prov.json");
  if (!out) throw std::runtime_error("cannot write sidecar for " + artifact.string());
  out << j.dump(2) << "\n";
}

// ---- checkpoints ----

nlohmann::json spec_to_json(const LayerSpec& s) {
  nlohmann::json j{{"kind", to_string(s.kind)}, {"in", s.in_channels}, {"out", s.out_channels}, {"kernel", s.kernel},
                   {"stride", s.stride},        {"pad", s.pad},        {"bias", s.bias},        {"quant_bits", s.quant_bits},
                   {"fat", s.fat}};
  if (!s.body.empty()) {
    j["body"] = nlohmann::json::array();
    for (const auto& b : s.body) j["body"].push_back(spec_to_json(b));
  }
  return j;
}

LayerSpec spec_from_json(const nlohmann::json& j) {
  LayerSpec s;
  s.kind = layer_kind_from_string(j.at("kind").get<std::string>());
  s.in_channels = j.at("in").get<int64_t>();
  s.out_channels = j.at("out").get<int64_t>();
  s.kernel = j.at("kernel").get<int>();
  s.stride = j.at("stride").get<int>();
  s.pad = j.at("pad").get<int>();
  s.bias = j.at("bias").get<bool>();
  s.quant_bits = j.at("quant_bits").get<int>();
  s.fat = j.at("fat").get<bool>();
  if (j.contains("body")) {
    for (const auto& b : j.at("body")) s.body.push_back(spec_from_json(b));
  }
  return s;
}

namespace {

constexpr char kMagic[4] = {'F', 'Q', 'L', '1'};

struct Header {
  nlohmann::json doc;
  std::streamoff payload = 0;
};

Header read_header(std::ifstream& in, const std::filesystem::path& path) {
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
    throw CheckpointError(path.string() + ": bad magic (not an FQL1 checkpoint)");
  }
  uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  const auto size = static_cast<uint64_t>(std::filesystem::file_size(path));
  if (!in || len > size) throw CheckpointError(path.string() + ": truncated metadata header");
  std::string text(static_cast<size_t>(len), '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw CheckpointError(path.string() + ": truncated metadata");
  Header h;
  try {
    h.doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path.string() + ": malformed metadata: " + e.what());
  }
  h.payload = in.tellg();
  return h;
}

}  // namespace

void save_checkpoint(const Network& net, const std::filesystem::path& path, const nlohmann::json& meta) {
  nlohmann::json doc;
  doc["format"] = "FQL1";
  doc["input"] = {net.in_channels(), net.height(), net.width()};
  doc["layers"] = nlohmann::json::array();
  for (const auto& s : net.specs()) doc["layers"].push_back(spec_to_json(s));
  doc["tensors"] = nlohmann::json::array();
  const auto state = net.state();
  for (const auto& nt : state) doc["tensors"].push_back({{"name", nt.name}, {"shape", nt.tensor.shape()}});
  doc["meta"] = meta.is_null() ? nlohmann::json::object() : meta;
  const std::string text = doc.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open " + path.string() + " for writing");
  out.write(kMagic, 4);
  const uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& nt : state) {
    auto d = nt.tensor.data();
    out.write(reinterpret_cast<const char*>(d.data()), static_cast<std::streamsize>(d.size() * sizeof(float)));
  }
  if (!out) throw CheckpointError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  Header h = read_header(in, path);
  std::vector<LayerSpec> specs;
  int64_t c = 0, hh = 0, w = 0;
  try {
    for (const auto& l : h.doc.at("layers")) specs.push_back(spec_from_json(l));
    c = h.doc.at("input").at(0).get<int64_t>();
    hh = h.doc.at("input").at(1).get<int64_t>();
    w = h.doc.at("input").at(2).get<int64_t>();
  } catch (const std::exception& e) {
    throw CheckpointError(path.string() + ": invalid layer metadata: " + e.what());
  }
  Checkpoint ck{Network(std::move(specs), c, hh, w, 0), h.doc.value("meta", nlohmann::json::object())};
  auto state = ck.net.state();
  const auto& tensors = h.doc.at("tensors");
  if (tensors.size() != state.size()) {
    throw CheckpointError(path.string() + ": tensor count mismatch: file has " + std::to_string(tensors.size()) +
                          ", architecture needs " + std::to_string(state.size()));
  }
  for (size_t i = 0; i < state.size(); ++i) {
    const auto name = tensors[i].at("name").get<std::string>();
    const auto shape = tensors[i].at("shape").get<Shape>();
    if (name != state[i].name || shape != state[i].tensor.shape()) {
      throw CheckpointError(path.string() + ": shape mismatch at tensor " + std::to_string(i) + ": file " + name +
                            shape_str(shape) + ", architecture " + state[i].name + shape_str(state[i].tensor.shape()));
    }
    auto d = state[i].tensor.data();
    in.read(reinterpret_cast<char*>(d.data()), static_cast<std::streamsize>(d.size() * sizeof(float)));
    if (!in) throw CheckpointError(path.string() + ": truncated tensor data at " + name);
  }
  in.peek();
  if (!in.eof()) throw CheckpointError(path.string() + ": trailing bytes after tensor data");
  ck.net.train(false);
  return ck;
}

nlohmann::json inspect_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  auto h = read_header(in, path);
  h.doc["file_bytes"] = std::filesystem::file_size(path);
  return h.doc;
}

// ---- tables and images ----

std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  auto line = [&out](const std::vector<std::string>& cells) {
    for (size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
    out << "\n";
  };
  line(header);
  for (const auto& r : rows) line(r);
}

void write_run_report_csv(const RunReport& report, const std::filesystem::path& path) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& e : report.epochs) {
    rows.push_back({std::to_string(e.epoch), fmt_double(e.train_loss), fmt_double(e.clean_acc), fmt_double(e.adv_acc),
                    fmt_double(e.ratio), fmt_double(e.lr), e.aborted ? "1" : "0"});
  }
  write_csv(path, {"epoch", "train_loss", "clean_acc", "adv_acc", "ratio", "lr", "aborted"}, rows);
}

void write_eval_csv(const std::vector<EvalRow>& rows, const std::filesystem::path& path) {
  std::vector<std::string> header, cells;
  for (const auto& r : rows) {
    header.push_back(r.label);
    cells.push_back(fmt_double(100.0 * r.accuracy));
  }
  write_csv(path, header, {cells});
}

void write_ratio_csv(const RunReport& report, const std::filesystem::path& path) {
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"0", fmt_double(report.initial_ratio)});
  for (const auto& e : report.epochs) rows.push_back({std::to_string(e.epoch), fmt_double(e.ratio)});
  write_csv(path, {"epoch", "R"}, rows);
}

void write_cka_csv(const CkaMatrix& m, const std::filesystem::path& path) {
  std::vector<std::string> header{"layer"};
  header.insert(header.end(), m.layers.begin(), m.layers.end());
  std::vector<std::vector<std::string>> rows;
  for (int64_t i = 0; i < m.size(); ++i) {
    std::vector<std::string> r{m.layers[i]};
    for (int64_t j = 0; j < m.size(); ++j) r.push_back(fmt_double(m.at(i, j)));
    rows.push_back(std::move(r));
  }
  write_csv(path, header, rows);
}

void write_spectrum_csv(const SpectrumMap& m, const std::filesystem::path& path) {
  std::vector<std::vector<std::string>> rows;
  for (int64_t i = 0; i < m.height; ++i)
    for (int64_t j = 0; j < m.width; ++j)
      rows.push_back({std::to_string(i), std::to_string(j), fmt_double(m.values[i * m.width + j])});
  write_csv(path, {"row", "col", "value"}, rows);
}

void write_pgm16(const std::filesystem::path& path, int64_t height, int64_t width, std::span<const double> values) {
  if (static_cast<int64_t>(values.size()) != height * width) throw std::invalid_argument("pgm: size mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << width << " " << height << "\n65535\n";
  for (double v : values) {
    const auto q = static_cast<uint16_t>(std::lround(std::clamp(std::isfinite(v) ? v : 0.0, 0.0, 1.0) * 65535.0));
    const char bytes[2] = {static_cast<char>(q >> 8), static_cast<char>(q & 0xff)};
    out.write(bytes, 2);
  }
}

std::vector<double> read_pgm16(const std::filesystem::path& path, int64_t& height, int64_t& width) {
  std::ifstream in(path, std::ios::binary);
  std::string magic;
  int maxval = 0;
  in >> magic >> width >> height >> maxval;
  if (!in || magic != "P5" || maxval != 65535) throw std::runtime_error(path.string() + ": not a 16-bit P5 graymap");
  in.get();
  std::vector<double> out(static_cast<size_t>(height * width));
  for (auto& v : out) {
    unsigned char b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    v = static_cast<double>((b[0] << 8) | b[1]) / 65535.0;
  }
  if (!in) throw std::runtime_error(path.string() + ": truncated graymap");
  return out;
}

}  // namespace freqlens
