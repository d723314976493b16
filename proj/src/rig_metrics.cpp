#include "emotalk/rig_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "emotalk/error.hpp"

namespace emotalk {

namespace {

constexpr double kMillimetersPerMeter = 1000.0;

void check_mask(std::span<const int> mask, Index vertex_count) {
  if (mask.empty()) throw ConfigError("vertex mask is empty");
  for (int v : mask) {
    if (v < 0 || v >= vertex_count) throw ConfigError("vertex mask references a vertex outside the mesh");
  }
}

void check_sequences(const VertexSequence& pred, const VertexSequence& gt) {
  if (pred.frame_count() != gt.frame_count()) throw AlignmentError("vertex sequences differ in frame count");
  if (gt.frames.empty()) throw LengthError("vertex sequences are empty");
  for (std::size_t t = 0; t < gt.frames.size(); ++t) {
    if (pred.frames[t].rows() != gt.frames[t].rows() || pred.frames[t].cols() != 3 || gt.frames[t].cols() != 3) {
      throw AlignmentError("vertex sequences differ in vertex count");
    }
  }
}

// Per-frame max (or mean) distance over the mask, averaged over frames.
template <class Reduce>
double masked_error(const VertexSequence& pred, const VertexSequence& gt, std::span<const int> mask, Reduce reduce) {
  check_sequences(pred, gt);
  check_mask(mask, gt.frames.front().rows());
  double total = 0.0;
  for (std::size_t t = 0; t < gt.frames.size(); ++t) {
    total += reduce(pred.frames[t], gt.frames[t]);
  }
  return kMillimetersPerMeter * total / static_cast<double>(gt.frames.size());
}

}  // namespace

void RigTemplateSet::validate() const {
  const Index v = vertex_count();
  if (v < 1 || neutral.cols() != 3) throw ConfigError("neutral mesh must be a non-empty V x 3 array");
  if (templates.size() != static_cast<std::size_t>(kNumBlendshapes)) throw ConfigError("rig needs 52 templates");
  for (const Matrix& t : templates) {
    if (t.rows() != v || t.cols() != 3) throw ConfigError("template topology differs from the neutral mesh");
  }
  check_mask(lip_vertices, v);
  check_mask(eye_forehead_vertices, v);
  for (const auto& f : faces) {
    for (int idx : f) {
      if (idx < 0 || idx >= v) throw ConfigError("face references a vertex outside the mesh");
    }
  }
}

Matrix blend(const RigTemplateSet& rig, std::span<const double> coeffs, BlendMode mode) {
  if (coeffs.size() != static_cast<std::size_t>(kNumBlendshapes)) throw AlignmentError("blend needs 52 coefficients");
  if (rig.templates.size() != static_cast<std::size_t>(kNumBlendshapes)) throw ConfigError("rig needs 52 templates");
  for (double c : coeffs) {
    if (!std::isfinite(c)) throw NumericError("blend coefficients must be finite");
  }
  Matrix out = mode == BlendMode::kDelta ? rig.neutral : Matrix::Zero(rig.neutral.rows(), 3);
  for (int i = 0; i < kNumBlendshapes; ++i) {
    const double b = coeffs[i];
    if (b == 0.0) continue;
    if (mode == BlendMode::kDelta) {
      out += b * (rig.templates[i] - rig.neutral);
    } else {
      out += b * rig.templates[i];
    }
  }
  return out;
}

VertexSequence blend_sequence(const RigTemplateSet& rig, const BlendshapeSequence& seq, BlendMode mode) {
  if (seq.coeffs.cols() != kNumBlendshapes) throw AlignmentError("blend needs 52 coefficients per frame");
  VertexSequence out;
  out.frames.reserve(static_cast<std::size_t>(seq.frames()));
  for (Index t = 0; t < seq.frames(); ++t) {
    const RowVector row = seq.coeffs.row(t);
    out.frames.push_back(blend(rig, std::span<const double>(row.data(), row.size()), mode));
  }
  return out;
}

double lve(const VertexSequence& pred, const VertexSequence& gt, std::span<const int> lip_mask) {
  return masked_error(pred, gt, lip_mask, [&](const Matrix& p, const Matrix& g) {
    double worst = 0.0;
    for (int v : lip_mask) worst = std::max(worst, (p.row(v) - g.row(v)).norm());
    return worst;
  });
}

double eve(const VertexSequence& pred, const VertexSequence& gt, std::span<const int> eye_forehead_mask) {
  return lve(pred, gt, eye_forehead_mask);
}

double lip_avg_error(const VertexSequence& pred, const VertexSequence& gt, std::span<const int> lip_mask) {
  return masked_error(pred, gt, lip_mask, [&](const Matrix& p, const Matrix& g) {
    double sum = 0.0;
    for (int v : lip_mask) sum += (p.row(v) - g.row(v)).norm();
    return sum / static_cast<double>(lip_mask.size());
  });
}

std::vector<int> other_region_vertices(const RigTemplateSet& rig) {
  std::vector<bool> taken(static_cast<std::size_t>(rig.vertex_count()), false);
  for (int v : rig.lip_vertices) taken[v] = true;
  for (int v : rig.eye_forehead_vertices) taken[v] = true;
  std::vector<int> out;
  for (int v = 0; v < rig.vertex_count(); ++v) {
    if (!taken[v]) out.push_back(v);
  }
  return out;
}

RigTemplateSet make_synthetic_rig(Index vertex_count, std::uint64_t seed) {
  if (vertex_count < 25) throw ConfigError("synthetic rig needs at least 25 vertices");
  const auto width = static_cast<Index>(std::ceil(std::sqrt(static_cast<double>(vertex_count))));
  const Index height = (vertex_count + width - 1) / width;

  RigTemplateSet rig;
  rig.neutral.resize(vertex_count, 3);
  for (Index k = 0; k < vertex_count; ++k) {
    const double u = static_cast<double>(k % width) / static_cast<double>(width - 1);
    const double v = static_cast<double>(k / width) / static_cast<double>(height - 1);
    const double du = u - 0.5, dv = v - 0.5;
    rig.neutral(k, 0) = 0.16 * du;
    rig.neutral(k, 1) = -0.22 * dv;
    rig.neutral(k, 2) = 0.05 * (1.0 - 2.0 * (du * du + dv * dv));
    // Upper band: eyes and forehead; lower centre: mouth.
    if (v < 0.4) {
      rig.eye_forehead_vertices.push_back(static_cast<int>(k));
    } else if (v > 0.62 && std::abs(du) < 0.3) {
      rig.lip_vertices.push_back(static_cast<int>(k));
    }
  }
  for (Index r = 0; r + 1 < height; ++r) {
    for (Index c = 0; c + 1 < width; ++c) {
      const Index a = r * width + c, b = a + 1, d = a + width, e = d + 1;
      if (e >= vertex_count) continue;
      rig.faces.push_back({static_cast<int>(a), static_cast<int>(d), static_cast<int>(b)});
      rig.faces.push_back({static_cast<int>(b), static_cast<int>(d), static_cast<int>(e)});
    }
  }
  const std::vector<int> other = other_region_vertices(rig);
  if (rig.lip_vertices.empty() || rig.eye_forehead_vertices.empty() || other.empty()) {
    throw ConfigError("synthetic rig too small to populate every region");
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  rig.templates.reserve(kNumBlendshapes);
  for (int i = 0; i < kNumBlendshapes; ++i) {
    const ChannelRegion region = region_of_channel(i);
    const std::vector<int>& support = region == ChannelRegion::kLip       ? rig.lip_vertices
                                      : region == ChannelRegion::kBrowEye ? rig.eye_forehead_vertices
                                                                          : other;
    const int centre = support[static_cast<std::size_t>(unit(rng) * static_cast<double>(support.size()))];
    const double radius = 0.03 + 0.02 * unit(rng);
    const double amplitude = 0.004 + 0.008 * unit(rng);
    Eigen::RowVector3d dir(unit(rng) - 0.5, unit(rng) - 0.5, 0.5 + unit(rng));
    dir.normalize();
    Matrix tpl = rig.neutral;
    for (int k : support) {
      const double s = (rig.neutral.row(k) - rig.neutral.row(centre)).norm() / radius;
      if (s >= 1.0) continue;
      const double w = (1.0 - s * s) * (1.0 - s * s);
      tpl.row(k) += amplitude * w * dir;
    }
    rig.templates.push_back(std::move(tpl));
  }
  return rig;
}

}  // namespace emotalk
