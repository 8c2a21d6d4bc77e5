#include "millie/dataio.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_set>

#include "millie/imageio.hpp"

namespace fs = std::filesystem;

namespace millie {

namespace {

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed for '" + path + "'");
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("write failed for '" + path + "'");
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string cur;
  for (char c : text) {
    if (c == '\n') {
      if (!cur.empty() && cur.back() == '\r') cur.pop_back();
      lines.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) {
    if (cur.back() == '\r') cur.pop_back();
    lines.push_back(cur);
  }
  return lines;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == '\t') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

void check_token(const std::string& value, const std::string& what) {
  if (value.empty()) throw ConfigError(what + " must not be empty");
  for (char c : value)
    if (c == '\t' || c == '\n' || c == '\r')
      throw ConfigError(what + " '" + value + "' contains a tab or newline");
}

// Manifests store paths relative to their own directory when possible, so a
// dataset folder can be moved as a unit.
std::string relativize(const std::string& path, const fs::path& base) {
  const fs::path p = fs::absolute(path).lexically_normal();
  const fs::path rel = p.lexically_relative(fs::absolute(base).lexically_normal());
  if (rel.empty() || *rel.begin() == "..") return p.generic_string();
  return rel.generic_string();
}

std::string resolve(const std::string& path, const fs::path& base) {
  fs::path p(path);
  if (p.is_absolute()) return p.lexically_normal().generic_string();
  return (base / p).lexically_normal().generic_string();
}

struct ViolationList {
  std::vector<std::string> items;

  void add(std::string msg) { items.push_back(std::move(msg)); }

  void raise_if_any(const std::string& path, const std::string& kind) const {
    if (items.empty()) return;
    std::string msg = kind + " '" + path + "' has " + std::to_string(items.size()) +
                      (items.size() == 1 ? " violation:" : " violations:");
    for (const auto& v : items) msg += "\n  - " + v;
    throw DataError(msg);
  }
};

bool has_image_ext(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".bmp";
}

std::vector<fs::path> sorted_children(const fs::path& dir, bool dirs_only) {
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (dirs_only ? entry.is_directory() : entry.is_regular_file()) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void warn(std::vector<std::string>* warnings, std::string msg) {
  if (warnings != nullptr) warnings->push_back(std::move(msg));
}

}  // namespace

DatasetManifest load_manifest(const std::string& path) {
  const std::vector<std::string> lines = split_lines(read_text(path));
  if (lines.empty() || lines[0] != "#millie-manifest v1")
    throw DataError("'" + path + "' is not a millie manifest: expected '#millie-manifest v1' on line 1");
  const fs::path base = fs::path(path).parent_path();

  DatasetManifest m;
  ViolationList bad;
  std::unordered_set<std::string> class_set;
  std::unordered_set<std::string> id_set;
  bool saw_classes = false;

  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    const std::string& line = lines[ln];
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.rfind("#note ", 0) == 0) {
        if (!m.note.empty()) m.note += '\n';
        m.note += line.substr(6);
      }
      continue;
    }
    const std::vector<std::string> f = split_tabs(line);
    if (f[0] == "classes") {
      if (saw_classes) {
        bad.add("line " + std::to_string(ln + 1) + ": repeated classes record");
        continue;
      }
      saw_classes = true;
      if (f.size() < 2) bad.add("line " + std::to_string(ln + 1) + ": classes record is empty");
      for (std::size_t i = 1; i < f.size(); ++i) {
        if (f[i].empty()) {
          bad.add("line " + std::to_string(ln + 1) + ": empty class name");
          continue;
        }
        if (!class_set.insert(f[i]).second)
          bad.add("line " + std::to_string(ln + 1) + ": duplicate class '" + f[i] + "'");
        else
          m.classes.push_back(f[i]);
      }
    } else if (f[0] == "sample") {
      if (f.size() < 4) {
        bad.add("line " + std::to_string(ln + 1) +
                ": sample record needs id, label, and at least one patch file");
        continue;
      }
      Sample s;
      s.sample_id = f[1];
      s.label = f[2];
      if (s.sample_id.empty())
        bad.add("line " + std::to_string(ln + 1) + ": empty sample id");
      else if (!id_set.insert(s.sample_id).second)
        bad.add("line " + std::to_string(ln + 1) + ": duplicate sample id '" + s.sample_id + "'");
      if (saw_classes && class_set.find(s.label) == class_set.end())
        bad.add("sample '" + s.sample_id + "': label '" + s.label +
                "' is not in the declared classes");
      for (std::size_t i = 3; i < f.size(); ++i) {
        if (f[i].empty()) {
          bad.add("sample '" + s.sample_id + "': empty patch path");
          continue;
        }
        const std::string full = resolve(f[i], base);
        if (!fs::exists(full))
          bad.add("sample '" + s.sample_id + "': missing file '" + full + "'");
        s.patch_paths.push_back(full);
      }
      m.samples.push_back(std::move(s));
    } else {
      bad.add("line " + std::to_string(ln + 1) + ": unknown record '" + f[0] + "'");
    }
  }
  if (!saw_classes) bad.add("missing classes record");
  bad.raise_if_any(path, "manifest");
  return m;
}

void write_manifest(const DatasetManifest& manifest, const std::string& path) {
  const fs::path base = fs::path(path).parent_path();
  std::ostringstream out;
  out << "#millie-manifest v1\n";
  if (!manifest.note.empty()) {
    for (const auto& line : split_lines(manifest.note)) out << "#note " << line << "\n";
  }
  out << "classes";
  if (manifest.classes.empty()) throw ConfigError("manifest has no classes");
  for (const auto& c : manifest.classes) {
    check_token(c, "class name");
    out << '\t' << c;
  }
  out << '\n';
  for (const auto& s : manifest.samples) {
    check_token(s.sample_id, "sample id");
    check_token(s.label, "sample label");
    out << "sample\t" << s.sample_id << '\t' << s.label;
    for (const auto& p : s.patch_paths) {
      check_token(p, "patch path");
      out << '\t' << relativize(p, base);
    }
    out << '\n';
  }
  write_text(path, out.str());
}

CellAnnotationSet load_cell_annotations(const std::string& path) {
  const std::vector<std::string> lines = split_lines(read_text(path));
  if (lines.empty() || lines[0] != "#millie-cells v1")
    throw DataError("'" + path + "' is not a millie cell list: expected '#millie-cells v1' on line 1");
  const fs::path base = fs::path(path).parent_path();

  CellAnnotationSet set;
  ViolationList bad;
  std::unordered_set<std::string> class_set;
  bool saw_classes = false;

  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    const std::string& line = lines[ln];
    if (line.empty() || line[0] == '#') continue;
    const std::vector<std::string> f = split_tabs(line);
    if (f[0] == "cell-classes") {
      if (saw_classes) {
        bad.add("line " + std::to_string(ln + 1) + ": repeated cell-classes record");
        continue;
      }
      saw_classes = true;
      for (std::size_t i = 1; i < f.size(); ++i) {
        if (f[i].empty() || !class_set.insert(f[i]).second)
          bad.add("line " + std::to_string(ln + 1) + ": empty or duplicate cell class");
        else
          set.cell_classes.push_back(f[i]);
      }
    } else if (f[0] == "cell") {
      if (f.size() != 4) {
        bad.add("line " + std::to_string(ln + 1) +
                ": cell record needs path, label, and sample id");
        continue;
      }
      CellAnnotation a;
      a.patch_path = resolve(f[1], base);
      a.cell_label = f[2];
      a.sample_id = f[3];
      if (!fs::exists(a.patch_path))
        bad.add("line " + std::to_string(ln + 1) + ": missing file '" + a.patch_path + "'");
      if (saw_classes && class_set.find(a.cell_label) == class_set.end())
        bad.add("line " + std::to_string(ln + 1) + ": cell label '" + a.cell_label +
                "' is not in the declared cell classes");
      set.items.push_back(std::move(a));
    } else {
      bad.add("line " + std::to_string(ln + 1) + ": unknown record '" + f[0] + "'");
    }
  }
  if (!saw_classes) bad.add("missing cell-classes record");
  bad.raise_if_any(path, "cell list");
  return set;
}

void write_cell_annotations(const CellAnnotationSet& cells, const std::string& path) {
  const fs::path base = fs::path(path).parent_path();
  std::ostringstream out;
  out << "#millie-cells v1\n";
  if (cells.cell_classes.empty()) throw ConfigError("cell list has no cell classes");
  out << "cell-classes";
  for (const auto& c : cells.cell_classes) {
    check_token(c, "cell class");
    out << '\t' << c;
  }
  out << '\n';
  for (const auto& a : cells.items) {
    check_token(a.patch_path, "cell patch path");
    check_token(a.cell_label, "cell label");
    check_token(a.sample_id, "cell sample id");
    out << "cell\t" << relativize(a.patch_path, base) << '\t' << a.cell_label << '\t'
        << a.sample_id << '\n';
  }
  write_text(path, out.str());
}

DatasetManifest ingest_folder(const std::string& root, const std::string& convention,
                              std::vector<std::string>* warnings) {
  if (!fs::is_directory(root)) throw IoError("ingest root '" + root + "' is not a directory");
  DatasetManifest m;
  m.note = convention + " ingest of " + fs::path(root).lexically_normal().generic_string();

  if (convention == "per-class-dirs" || convention == "bone-marrow") {
    std::unordered_set<std::string> id_set;
    for (const fs::path& class_dir : sorted_children(root, true)) {
      const std::string label = class_dir.filename().string();
      std::vector<Sample> class_samples;
      if (convention == "per-class-dirs") {
        for (const fs::path& sample_dir : sorted_children(class_dir, true)) {
          Sample s;
          s.sample_id = sample_dir.filename().string();
          s.label = label;
          for (const fs::path& file : sorted_children(sample_dir, false)) {
            if (has_image_ext(file))
              s.patch_paths.push_back(file.lexically_normal().generic_string());
            else
              warn(warnings, "skipping non-image file '" + file.generic_string() + "'");
          }
          if (s.patch_paths.empty())
            warn(warnings, "sample dir '" + sample_dir.generic_string() + "' has no images");
          else
            class_samples.push_back(std::move(s));
        }
      } else {
        // flat files grouped by the stem prefix before the last underscore
        std::map<std::string, Sample> groups;
        for (const fs::path& file : sorted_children(class_dir, false)) {
          if (!has_image_ext(file)) {
            warn(warnings, "skipping non-image file '" + file.generic_string() + "'");
            continue;
          }
          const std::string stem = file.stem().string();
          const std::size_t us = stem.rfind('_');
          const std::string id = us == std::string::npos ? stem : stem.substr(0, us);
          Sample& s = groups[id];
          s.sample_id = id;
          s.label = label;
          s.patch_paths.push_back(file.lexically_normal().generic_string());
        }
        for (auto& [id, s] : groups) class_samples.push_back(std::move(s));
      }
      if (class_samples.empty()) {
        warn(warnings, "class dir '" + class_dir.generic_string() + "' contributed no samples");
        continue;
      }
      m.classes.push_back(label);
      for (auto& s : class_samples) {
        if (!id_set.insert(s.sample_id).second)
          throw DataError("duplicate sample id '" + s.sample_id + "' across class directories");
        m.samples.push_back(std::move(s));
      }
    }
  } else if (convention == "all-idb") {
    m.classes = {"normal", "all"};
    for (const fs::path& file : sorted_children(root, false)) {
      if (!has_image_ext(file)) {
        warn(warnings, "skipping non-image file '" + file.generic_string() + "'");
        continue;
      }
      const std::string stem = file.stem().string();
      // expect <name>_<0|1>; the digit is the sample-level label
      const std::size_t us = stem.rfind('_');
      if (us == std::string::npos || us + 2 != stem.size() ||
          (stem[us + 1] != '0' && stem[us + 1] != '1')) {
        warn(warnings, "skipping file without _0/_1 label suffix: '" + file.generic_string() + "'");
        continue;
      }
      Sample s;
      s.sample_id = stem;
      s.label = stem[us + 1] == '1' ? "all" : "normal";
      s.patch_paths.push_back(file.lexically_normal().generic_string());
      m.samples.push_back(std::move(s));
    }
  } else {
    throw ConfigError("unknown ingest convention '" + convention +
                      "' (expected per-class-dirs, all-idb, or bone-marrow)");
  }

  if (m.samples.empty()) throw DataError("no samples found under '" + root + "'");
  return m;
}

const RgbImage& PatchCache::get(const std::string& path) {
  auto it = cache_.find(path);
  if (it != cache_.end()) return it->second;
  return cache_.emplace(path, load_image(path)).first->second;
}

PatchImage load_patch(const std::string& path, PatchCache& cache) {
  PatchImage p;
  p.image = cache.get(path);
  if (p.image.width != kPatchSide || p.image.height != kPatchSide)
    throw DimensionError("patch file '" + path + "' is " + std::to_string(p.image.width) + "x" +
                         std::to_string(p.image.height) + ", expected " +
                         std::to_string(kPatchSide) + "x" + std::to_string(kPatchSide));
  p.source_id = path;
  p.centroid_row = (kPatchSide - 1) / 2.0;
  p.centroid_col = (kPatchSide - 1) / 2.0;
  return p;
}

std::vector<SyntheticField> load_fields(const std::string& path) {
  const std::vector<std::string> lines = split_lines(read_text(path));
  if (lines.empty() || lines[0] != "#millie-fields v1")
    throw DataError("'" + path + "' is not a millie field list: expected '#millie-fields v1' on line 1");
  const fs::path base = fs::path(path).parent_path();

  std::vector<SyntheticField> fields;
  ViolationList bad;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    const std::string& line = lines[ln];
    if (line.empty() || line[0] == '#') continue;
    const std::vector<std::string> f = split_tabs(line);
    if (f[0] == "field") {
      if (f.size() != 4) {
        bad.add("line " + std::to_string(ln + 1) +
                ": field record needs path, sample id, and label");
        continue;
      }
      SyntheticField rec;
      rec.field_path = resolve(f[1], base);
      rec.sample_id = f[2];
      rec.sample_label = f[3];
      if (!fs::exists(rec.field_path))
        bad.add("line " + std::to_string(ln + 1) + ": missing file '" + rec.field_path + "'");
      fields.push_back(std::move(rec));
    } else if (f[0] == "glyph") {
      if (f.size() != 5) {
        bad.add("line " + std::to_string(ln + 1) +
                ": glyph record needs field path, row, col, and label");
        continue;
      }
      const std::string full = resolve(f[1], base);
      auto it = std::find_if(fields.begin(), fields.end(),
                             [&](const SyntheticField& r) { return r.field_path == full; });
      if (it == fields.end()) {
        bad.add("line " + std::to_string(ln + 1) + ": glyph references unknown field '" + full +
                "'");
        continue;
      }
      GlyphRecord g;
      try {
        g.row = std::stod(f[2]);
        g.col = std::stod(f[3]);
      } catch (const std::exception&) {
        bad.add("line " + std::to_string(ln + 1) + ": non-numeric glyph coordinates");
        continue;
      }
      g.cell_label = f[4];
      it->glyphs.push_back(std::move(g));
    } else {
      bad.add("line " + std::to_string(ln + 1) + ": unknown record '" + f[0] + "'");
    }
  }
  bad.raise_if_any(path, "field list");
  return fields;
}

void write_fields(const std::vector<SyntheticField>& fields, const std::string& path) {
  const fs::path base = fs::path(path).parent_path();
  std::ostringstream out;
  out << "#millie-fields v1\n";
  char buf[64];
  for (const auto& rec : fields) {
    check_token(rec.field_path, "field path");
    check_token(rec.sample_id, "field sample id");
    check_token(rec.sample_label, "field label");
    const std::string rel = relativize(rec.field_path, base);
    out << "field\t" << rel << '\t' << rec.sample_id << '\t' << rec.sample_label << '\n';
    for (const auto& g : rec.glyphs) {
      check_token(g.cell_label, "glyph label");
      std::snprintf(buf, sizeof buf, "%.2f\t%.2f", g.row, g.col);
      out << "glyph\t" << rel << '\t' << buf << '\t' << g.cell_label << '\n';
    }
  }
  write_text(path, out.str());
}

}  // namespace millie
