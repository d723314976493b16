#pragma once

// File formats: 16 kHz mono PCM16 WAV, blendshape CSV, index mask files,
// Wavefront OBJ, and the on-disk layout of datasets and rigs.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "emotalk/data_model.hpp"
#include "emotalk/rig_metrics.hpp"

namespace emotalk::io {

namespace fs = std::filesystem;

/// Samples are clamped to [-1, 1] and quantized to 16 bits.
void write_wav(const fs::path& path, const AudioClip& clip);
/// Labels of the returned clip are left at 0.
AudioClip read_wav(const fs::path& path);

/// `# fps=<fps>` line, a header of the 52 channel names, one row per frame.
void write_csv(const fs::path& path, const BlendshapeSequence& seq);
BlendshapeSequence read_csv(const fs::path& path);

/// One non-negative index per line; blank lines and `#` comments ignored.
void write_mask(const fs::path& path, const std::vector<int>& indices);
std::vector<int> read_mask(const fs::path& path);

void write_obj(const fs::path& path, const Matrix& vertices, const std::vector<std::array<int, 3>>& faces);
struct ObjMesh {
  Matrix vertices;  // V x 3
  std::vector<std::array<int, 3>> faces;
};
/// Polygons are fan-triangulated; texture/normal indices are ignored.
ObjMesh read_obj(const fs::path& path);

/// FNV-1a of a byte string, as 16 hex digits.
std::string fnv1a_hex(std::string_view bytes);
std::string file_fnv1a_hex(const fs::path& path);

/// clips/<id>.wav and clips/<id>.csv per sample, channel masks, and a
/// manifest.json with the generator spec, labels, splits and file hashes.
/// Returns the manifest path.
fs::path write_dataset(const fs::path& dir, const Dataset& dataset, const DatasetSpec& spec);
/// Reads a directory written by write_dataset; audio comes back quantized.
Dataset read_dataset(const fs::path& dir);

/// neutral.obj, templates/NN_<channel>.obj, lip_vertices.txt and
/// eye_forehead_vertices.txt.
void write_rig(const fs::path& dir, const RigTemplateSet& rig);
RigTemplateSet read_rig(const fs::path& dir);

std::string sample_id(const Sample& s);

}  // namespace emotalk::io
