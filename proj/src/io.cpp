#include "emotalk/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "emotalk/config.hpp"
#include "emotalk/error.hpp"

namespace emotalk::io {

namespace {

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, mode | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw IoError("cannot read " + path.string());
  return in;
}

void finish(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

template <class T>
void put_le(std::string& buf, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) buf.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
}

template <class T>
T get_le(const std::string& buf, std::size_t at) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[at + i])) << (8 * i);
  return static_cast<T>(v);
}

std::string read_all(const fs::path& path) {
  std::ifstream in = open_in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

double parse_double(std::string_view text, const fs::path& path) {
  const std::string t = trim(text);
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (t.empty() || end != t.c_str() + t.size()) throw FormatError("bad number '" + t + "' in " + path.string());
  return v;
}

int parse_int(std::string_view text, const fs::path& path) {
  const std::string t = trim(text);
  int v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || ptr != t.data() + t.size()) {
    throw FormatError("bad integer '" + t + "' in " + path.string());
  }
  return v;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_wav(const fs::path& path, const AudioClip& clip) {
  if (clip.sample_rate != kSampleRate) throw RangeError("WAV output must be 16 kHz");
  const auto n = static_cast<std::uint32_t>(clip.samples.size());
  std::string buf;
  buf.reserve(44 + 2 * n);
  buf += "RIFF";
  put_le<std::uint32_t>(buf, 36 + 2 * n);
  buf += "WAVEfmt ";
  put_le<std::uint32_t>(buf, 16);
  put_le<std::uint16_t>(buf, 1);  // PCM
  put_le<std::uint16_t>(buf, 1);  // mono
  put_le<std::uint32_t>(buf, kSampleRate);
  put_le<std::uint32_t>(buf, kSampleRate * 2);
  put_le<std::uint16_t>(buf, 2);
  put_le<std::uint16_t>(buf, 16);
  buf += "data";
  put_le<std::uint32_t>(buf, 2 * n);
  for (double s : clip.samples) {
    if (!std::isfinite(s)) throw NumericError("cannot write non-finite audio samples");
    const double q = std::round(std::clamp(s, -1.0, 1.0) * 32767.0);
    put_le<std::uint16_t>(buf, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  std::ofstream out = open_out(path, std::ios::binary);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  finish(out, path);
}

AudioClip read_wav(const fs::path& path) {
  const std::string buf = read_all(path);
  if (buf.size() < 12 || buf.compare(0, 4, "RIFF") != 0 || buf.compare(8, 4, "WAVE") != 0) {
    throw FormatError(path.string() + " is not a RIFF/WAVE file");
  }
  bool have_fmt = false;
  AudioClip clip;
  std::size_t at = 12;
  while (at + 8 <= buf.size()) {
    const std::string id = buf.substr(at, 4);
    const auto size = get_le<std::uint32_t>(buf, at + 4);
    const std::size_t body = at + 8;
    if (body + size > buf.size()) throw FormatError("truncated chunk '" + id + "' in " + path.string());
    if (id == "fmt ") {
      if (size < 16) throw FormatError("short fmt chunk in " + path.string());
      const auto format = get_le<std::uint16_t>(buf, body);
      const auto channels = get_le<std::uint16_t>(buf, body + 2);
      const auto rate = get_le<std::uint32_t>(buf, body + 4);
      const auto bits = get_le<std::uint16_t>(buf, body + 14);
      if (format != 1 || channels != 1 || bits != 16) throw FormatError(path.string() + " is not mono PCM16");
      if (rate != static_cast<std::uint32_t>(kSampleRate)) throw FormatError(path.string() + " is not sampled at 16 kHz");
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw FormatError("data chunk before fmt chunk in " + path.string());
      clip.samples.resize(size / 2);
      for (std::size_t i = 0; i < clip.samples.size(); ++i) {
        clip.samples[i] = static_cast<std::int16_t>(get_le<std::uint16_t>(buf, body + 2 * i)) / 32768.0;
      }
      return clip;
    }
    at = body + size + (size & 1);
  }
  throw FormatError(path.string() + " has no data chunk");
}

void write_csv(const fs::path& path, const BlendshapeSequence& seq) {
  if (seq.coeffs.cols() != kNumBlendshapes) throw AlignmentError("blendshape CSV needs 52 columns");
  std::ostringstream os;
  os << "# fps=" << format_double(seq.fps) << '\n';
  const auto& names = channel_names();
  for (int c = 0; c < kNumBlendshapes; ++c) os << (c ? "," : "") << names[c];
  os << '\n';
  for (Index t = 0; t < seq.frames(); ++t) {
    for (int c = 0; c < kNumBlendshapes; ++c) os << (c ? "," : "") << format_double(seq.coeffs(t, c));
    os << '\n';
  }
  std::ofstream out = open_out(path);
  out << os.str();
  finish(out, path);
}

BlendshapeSequence read_csv(const fs::path& path) {
  std::ifstream in = open_in(path);
  BlendshapeSequence seq;
  bool have_header = false;
  std::vector<double> values;
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line);
    if (t.empty()) continue;
    if (t[0] == '#') {
      const auto pos = t.find("fps=");
      if (pos != std::string::npos) seq.fps = parse_double(std::string_view(t).substr(pos + 4), path);
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(t);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(trim(cell));
    if (cells.size() != static_cast<std::size_t>(kNumBlendshapes)) {
      throw FormatError("expected 52 columns in " + path.string() + ", got " + std::to_string(cells.size()));
    }
    if (!have_header) {
      const auto& names = channel_names();
      for (int c = 0; c < kNumBlendshapes; ++c) {
        if (cells[c] != names[c]) throw FormatError("unexpected channel '" + cells[c] + "' in " + path.string());
      }
      have_header = true;
      continue;
    }
    for (const std::string& cell : cells) values.push_back(parse_double(cell, path));
  }
  if (!have_header) throw FormatError(path.string() + " has no header row");
  if (!(seq.fps > 0.0)) throw FormatError("non-positive fps in " + path.string());
  const Index frames = static_cast<Index>(values.size()) / kNumBlendshapes;
  seq.coeffs = Eigen::Map<const Matrix>(values.data(), frames, kNumBlendshapes);
  return seq;
}

void write_mask(const fs::path& path, const std::vector<int>& indices) {
  std::ofstream out = open_out(path);
  for (int i : indices) out << i << '\n';
  finish(out, path);
}

std::vector<int> read_mask(const fs::path& path) {
  std::ifstream in = open_in(path);
  std::vector<int> out;
  std::string line;
  while (std::getline(in, line)) {
    const std::string t = trim(line.substr(0, line.find('#')));
    if (t.empty()) continue;
    const int v = parse_int(t, path);
    if (v < 0) throw FormatError("negative index in " + path.string());
    out.push_back(v);
  }
  return out;
}

void write_obj(const fs::path& path, const Matrix& vertices, const std::vector<std::array<int, 3>>& faces) {
  if (vertices.cols() != 3) throw AlignmentError("OBJ vertices must be V x 3");
  std::ostringstream os;
  for (Index v = 0; v < vertices.rows(); ++v) {
    os << "v " << format_double(vertices(v, 0)) << ' ' << format_double(vertices(v, 1)) << ' '
       << format_double(vertices(v, 2)) << '\n';
  }
  for (const auto& f : faces) os << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  std::ofstream out = open_out(path);
  out << os.str();
  finish(out, path);
}

ObjMesh read_obj(const fs::path& path) {
  std::ifstream in = open_in(path);
  std::vector<double> coords;
  ObjMesh mesh;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      std::string x, y, z;
      if (!(ls >> x >> y >> z)) throw FormatError("short vertex line in " + path.string());
      coords.push_back(parse_double(x, path));
      coords.push_back(parse_double(y, path));
      coords.push_back(parse_double(z, path));
    } else if (tag == "f") {
      std::vector<int> idx;
      for (std::string tok; ls >> tok;) idx.push_back(parse_int(tok.substr(0, tok.find('/')), path) - 1);
      if (idx.size() < 3) throw FormatError("face with fewer than 3 vertices in " + path.string());
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) mesh.faces.push_back({idx[0], idx[k], idx[k + 1]});
    }
  }
  mesh.vertices = Eigen::Map<const Matrix>(coords.data(), static_cast<Index>(coords.size() / 3), 3);
  for (const auto& f : mesh.faces) {
    for (int i : f) {
      if (i < 0 || i >= mesh.vertices.rows()) throw FormatError("face index out of range in " + path.string());
    }
  }
  return mesh;
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::string file_fnv1a_hex(const fs::path& path) { return fnv1a_hex(read_all(path)); }

std::string sample_id(const Sample& s) {
  std::ostringstream os;
  os << 'c' << s.audio.content_id << "_e" << s.audio.emotion_id << "_l" << s.audio.level << "_s" << s.audio.speaker_id
     << "_t" << s.take;
  return os.str();
}

fs::path write_dataset(const fs::path& dir, const Dataset& dataset, const DatasetSpec& spec) {
  nlohmann::ordered_json clips = nlohmann::ordered_json::array();
  for (const Sample& s : dataset.samples) {
    const std::string id = sample_id(s);
    const fs::path wav = fs::path("clips") / (id + ".wav");
    const fs::path csv = fs::path("clips") / (id + ".csv");
    write_wav(dir / wav, s.audio);
    write_csv(dir / csv, s.truth);
    clips.push_back({{"id", id},
                     {"content", s.audio.content_id},
                     {"emotion", s.audio.emotion_id},
                     {"level", s.audio.level},
                     {"speaker", s.audio.speaker_id},
                     {"take", s.take},
                     {"split", split_name(s.split)},
                     {"wav", wav.generic_string()},
                     {"csv", csv.generic_string()},
                     {"wav_fnv1a", file_fnv1a_hex(dir / wav)},
                     {"csv_fnv1a", file_fnv1a_hex(dir / csv)}});
  }
  write_mask(dir / "lip_channels.txt", channels_in_region(ChannelRegion::kLip));
  write_mask(dir / "brow_eye_channels.txt", channels_in_region(ChannelRegion::kBrowEye));
  write_mask(dir / "other_channels.txt", channels_in_region(ChannelRegion::kOther));

  nlohmann::ordered_json manifest;
  manifest["spec"] = nlohmann::json(spec);
  manifest["clips"] = std::move(clips);
  const fs::path path = dir / "manifest.json";
  std::ofstream out = open_out(path);
  out << manifest.dump(2) << '\n';
  finish(out, path);
  return path;
}

Dataset read_dataset(const fs::path& dir) {
  std::ifstream in = open_in(dir / "manifest.json");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("dataset manifest is not valid JSON: " + std::string(e.what()));
  }
  Dataset ds;
  try {
    ds.grid = manifest.at("spec").get<DatasetSpec>().grid;
    for (const auto& c : manifest.at("clips")) {
      Sample s;
      s.audio = read_wav(dir / c.at("wav").get<std::string>());
      s.audio.content_id = c.at("content").get<int>();
      s.audio.emotion_id = c.at("emotion").get<int>();
      s.audio.level = c.at("level").get<int>();
      s.audio.speaker_id = c.at("speaker").get<int>();
      s.take = c.at("take").get<int>();
      s.split = parse_split(c.at("split").get<std::string>());
      s.truth = read_csv(dir / c.at("csv").get<std::string>());
      s.truth.tag = FactorTag{s.audio.content_id, s.audio.emotion_id, s.audio.level, s.audio.speaker_id};
      ds.samples.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed dataset manifest: " + std::string(e.what()));
  }
  return ds;
}

void write_rig(const fs::path& dir, const RigTemplateSet& rig) {
  rig.validate();
  write_obj(dir / "neutral.obj", rig.neutral, rig.faces);
  const auto& names = channel_names();
  for (int i = 0; i < kNumBlendshapes; ++i) {
    std::ostringstream name;
    name << std::setw(2) << std::setfill('0') << i << '_' << names[i] << ".obj";
    write_obj(dir / "templates" / name.str(), rig.templates[i], rig.faces);
  }
  write_mask(dir / "lip_vertices.txt", rig.lip_vertices);
  write_mask(dir / "eye_forehead_vertices.txt", rig.eye_forehead_vertices);
}

RigTemplateSet read_rig(const fs::path& dir) {
  RigTemplateSet rig;
  ObjMesh neutral = read_obj(dir / "neutral.obj");
  rig.neutral = std::move(neutral.vertices);
  rig.faces = std::move(neutral.faces);
  const auto& names = channel_names();
  for (int i = 0; i < kNumBlendshapes; ++i) {
    std::ostringstream name;
    name << std::setw(2) << std::setfill('0') << i << '_' << names[i] << ".obj";
    rig.templates.push_back(read_obj(dir / "templates" / name.str()).vertices);
  }
  rig.lip_vertices = read_mask(dir / "lip_vertices.txt");
  rig.eye_forehead_vertices = read_mask(dir / "eye_forehead_vertices.txt");
  rig.validate();
  return rig;
}

}  // namespace emotalk::io
