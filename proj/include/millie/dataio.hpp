#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "millie/errors.hpp"
#include "millie/image.hpp"

namespace millie {

inline constexpr const char* kToolVersion = "0.1.0";

// One bag: a sample-level label plus the ordered patch files backing it.
struct Sample {
  std::string sample_id;
  std::string label;
  std::vector<std::string> patch_paths;
};

struct DatasetManifest {
  std::vector<std::string> classes;  // declared label space, order preserved
  std::vector<Sample> samples;
  std::string note;
};

struct CellAnnotation {
  std::string patch_path;
  std::string cell_label;
  std::string sample_id;  // links a cell back to its bag for held-out splits
};

struct CellAnnotationSet {
  std::vector<std::string> cell_classes;
  std::vector<CellAnnotation> items;
};

// Line-oriented tab-separated manifest ("#millie-manifest v1"). Relative
// patch paths are resolved against the manifest's directory on load.
DatasetManifest load_manifest(const std::string& path);
void write_manifest(const DatasetManifest& manifest, const std::string& path);

CellAnnotationSet load_cell_annotations(const std::string& path);
void write_cell_annotations(const CellAnnotationSet& cells, const std::string& path);

// Folder conventions: "per-class-dirs" (root/<label>/<sample>/*.png),
// "all-idb" (root/Im<NNN>_<0|1>.png, one file per sample, suffix = label),
// "bone-marrow" (root/<label>/<sample>_<idx>.png, flat per-class files
// grouped into samples by the prefix before the last underscore).
// Non-fatal oddities (empty class dir, skipped file) land in *warnings.
DatasetManifest ingest_folder(const std::string& root, const std::string& convention,
                              std::vector<std::string>* warnings = nullptr);

// Decoded-image cache so bags touch the disk once per patch file.
class PatchCache {
 public:
  const RgbImage& get(const std::string& path);
  std::size_t size() const { return cache_.size(); }

 private:
  std::unordered_map<std::string, RgbImage> cache_;
};

PatchImage load_patch(const std::string& path, PatchCache& cache);

struct SyntheticConfig {
  int samples_per_class = 30;
  int fields_per_sample = 1;
  int glyphs_per_field = 40;
  double witness_fraction = 0.3;
  double noise_level = 1.5;  // background byte-noise sigma
  int field_side = 768;
  std::uint64_t seed = 1;

  void validate() const;
};

struct GlyphRecord {
  double row = 0.0;
  double col = 0.0;
  std::string cell_label;
};

struct SyntheticField {
  std::string field_path;
  std::string sample_id;
  std::string sample_label;
  std::vector<GlyphRecord> glyphs;
};

struct SyntheticDataset {
  DatasetManifest manifest;  // references the generator's ground-truth crops
  CellAnnotationSet cells;
  std::vector<SyntheticField> fields;
};

inline const std::vector<std::string> kSyntheticSampleClasses = {"healthy", "class-a", "class-b"};
inline const std::vector<std::string> kSyntheticCellClasses = {"normal", "class-a", "class-b"};

// Renders fields plus ground-truth patch crops under out_dir and writes
// manifest.tsv, cells.tsv, and fields.tsv alongside them.
SyntheticDataset generate_synthetic(const SyntheticConfig& config, const std::string& out_dir);

// Field listing ("#millie-fields v1") for segmentation input.
std::vector<SyntheticField> load_fields(const std::string& path);
void write_fields(const std::vector<SyntheticField>& fields, const std::string& path);

}  // namespace millie
