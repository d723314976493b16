#pragma once

// Blendshape rig: a neutral mesh plus one template mesh per coefficient,
// region masks, and the vertex-error metrics used for evaluation. Geometry is
// stored in meters; metrics are reported in millimeters.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "emotalk/data_model.hpp"

namespace emotalk {

struct RigTemplateSet {
  Matrix neutral;                  // V x 3
  std::vector<Matrix> templates;   // 52 of V x 3
  std::vector<int> lip_vertices;
  std::vector<int> eye_forehead_vertices;
  std::vector<std::array<int, 3>> faces;  // 0-based triangle list

  Index vertex_count() const { return neutral.rows(); }
  /// Shared topology, 52 templates, in-range masks and faces.
  void validate() const;
};

/// One V x 3 mesh per frame.
struct VertexSequence {
  std::vector<Matrix> frames;

  Index frame_count() const { return static_cast<Index>(frames.size()); }
};

enum class BlendMode {
  kDelta,    // neutral + sum_i b_i (V_i - neutral)
  kLiteral,  // sum_i b_i V_i
};

Matrix blend(const RigTemplateSet& rig, std::span<const double> coeffs, BlendMode mode = BlendMode::kDelta);
VertexSequence blend_sequence(const RigTemplateSet& rig, const BlendshapeSequence& seq,
                              BlendMode mode = BlendMode::kDelta);

/// Mean over frames of the largest per-vertex distance inside `mask`, in mm.
double lve(const VertexSequence& pred, const VertexSequence& gt, std::span<const int> lip_mask);
double eve(const VertexSequence& pred, const VertexSequence& gt, std::span<const int> eye_forehead_mask);
/// Mean over frames and masked vertices of the per-vertex distance, in mm.
double lip_avg_error(const VertexSequence& pred, const VertexSequence& gt, std::span<const int> lip_mask);

/// Smooth face-like grid of `vertex_count` vertices. Template i moves only
/// vertices of the region its channel belongs to. Masks depend on
/// `vertex_count` alone; template geometry also depends on `seed`.
RigTemplateSet make_synthetic_rig(Index vertex_count, std::uint64_t seed);

/// Vertices outside both the lip and eye/forehead masks.
std::vector<int> other_region_vertices(const RigTemplateSet& rig);

}  // namespace emotalk
