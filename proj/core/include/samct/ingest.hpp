#pragma once

#include "samct/grid.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace samct::ingest {

/// HU interval that is clamped and linearly mapped onto [0, 255].
struct DensityWindow {
  double lower = 0.0;
  double upper = 255.0;
  std::string name = "custom";

  static DensityWindow bone() { return {-400.0, 1100.0, "bone"}; }
  static DensityWindow tissue() { return {-200.0, 300.0, "tissue"}; }
  static DensityWindow lung() { return {-1300.0, 300.0, "lung"}; }
  static DensityWindow hemorrhage() { return {-20.0, 100.0, "hemorrhage"}; }
  static DensityWindow identity() { return {0.0, 255.0, "identity"}; }

  /// Accepts a preset name or an explicit "L,U" pair.
  static DensityWindow parse(const std::string& spec);

  bool operator==(const DensityWindow&) const = default;
};

/// round-half-up((clamp(v, lower, upper) - lower) * 255 / (upper - lower)).
std::uint8_t window_value(double hu, const DensityWindow& window);
std::vector<std::uint8_t> window_and_rescale(std::span<const float> volume, const DensityWindow& window);

/// 3D scalar volume stored row-major as (axis0, axis1, axis2), nominally
/// (z, y, x).
struct Volume {
  std::array<int64_t, 3> shape{0, 0, 0};
  std::vector<float> data;

  size_t voxel_count() const { return static_cast<size_t>(shape[0] * shape[1] * shape[2]); }
  float at(int64_t i, int64_t j, int64_t k) const { return data[static_cast<size_t>((i * shape[1] + j) * shape[2] + k)]; }
};

enum class Plane { kAxial, kCoronal, kSagittal };

/// Maps anatomical planes onto array axes. Defaults follow (z, y, x) storage.
struct AxisConvention {
  int axial = 0;
  int coronal = 1;
  int sagittal = 2;
  int axis_for(Plane plane) const;
};

Plane parse_plane(const std::string& name);

/// Slices along `axis` in index order. Throws DataError on an empty volume.
std::vector<Grid<float>> slice_volume(const Volume& volume, int axis);
std::vector<Grid<float>> slice_volume(const Volume& volume, Plane plane, const AxisConvention& axes = {});
/// Inverse of slice_volume.
Volume restack(const std::vector<Grid<float>>& slices, int axis);

enum class Split { kTrain, kVal, kTest };
std::string to_string(Split s);
Split parse_split(const std::string& s);

struct SampleRecord {
  std::string image_path;
  std::optional<std::string> mask_path;
  std::string object_id;
  bool has_foreground = false;
  Split split = Split::kTrain;
  /// Source volume or case; records sharing a group always share a split.
  std::string group;
  int slice_index = -1;

  bool operator==(const SampleRecord&) const = default;
};

/// Coarse label -> finer labels that replace it when both are present on the
/// same image.
struct ScreeningPolicy {
  std::map<std::string, std::vector<std::string>> refinements;
  /// Throws ConfigError if a label is both kept (as a refinement) and dropped.
  void validate() const;
};

/// Drops coarse annotations superseded by their fine counterparts on the same
/// image and removes duplicate (image_path, object_id) pairs. Order of the
/// surviving records is preserved.
std::vector<SampleRecord> screen_masks(const std::vector<SampleRecord>& records, const ScreeningPolicy& policy);

struct SplitRatios {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;
  static SplitRatios parse(const std::string& csv);
};

struct Manifest {
  static constexpr int kSchemaVersion = 1;

  std::vector<SampleRecord> records;
  std::uint64_t seed = 0;
  std::map<std::string, DensityWindow> window_used;
  std::string provenance;

  /// Line-delimited JSON: a header line followed by one line per record.
  std::string serialize() const;
  static Manifest parse(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static Manifest load(const std::filesystem::path& path);

  std::vector<SampleRecord> select(Split split) const;
};

/// Splits by group (or by record when group is empty). val and test receive
/// floor(units * ratio); train gets the remainder. Deterministic in `seed`.
Manifest split_dataset(std::vector<SampleRecord> records, const SplitRatios& ratios, std::uint64_t seed);

// ---------------------------------------------------------------------------
// File formats

/// NIfTI-1 (.nii or .nii.gz). Scaling slope/intercept applied.
Volume read_nifti(const std::filesystem::path& path);
void write_nifti(const std::filesystem::path& path, const Volume& volume);
/// NumPy .npy, C order, little-endian u1/i2/i4/f4/f8.
Volume read_npy(const std::filesystem::path& path);
void write_npy(const std::filesystem::path& path, const Volume& volume);
Volume read_volume(const std::filesystem::path& path);

Image8 read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image8& image);
/// Binary masks are stored as 0/255 rasters.
Mask read_mask_png(const std::filesystem::path& path);
void write_mask_png(const std::filesystem::path& path, const Mask& mask);

// ---------------------------------------------------------------------------
// Directory ingestion

struct IngestOptions {
  std::filesystem::path input;
  std::filesystem::path output;
  DensityWindow default_window = DensityWindow::tissue();
  Plane plane = Plane::kCoronal;
  AxisConvention axes;
  std::uint64_t seed = 0;
  SplitRatios ratios;
};

/// Reads `input/dataset.json`, `input/images/*` and `input/labels/*`, writes
/// rasters under `output/images`, `output/masks` and `output/manifest.jsonl`.
Manifest run_ingest(const IngestOptions& options);

}  // namespace samct::ingest
