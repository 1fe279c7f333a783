#include "glandseg/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "glandseg/image_io.hpp"
#include "glandseg/morphology.hpp"

namespace glandseg {

namespace {

std::string trim(std::string s) {
  auto not_space = [](unsigned char ch) { return !std::isspace(ch); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return s;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool is_image_extension(const fs::path& p) {
  const auto ext = lower(p.extension().string());
  return ext == ".bmp" || ext == ".png" || ext == ".tif" || ext == ".tiff" || ext == ".jpg" || ext == ".jpeg";
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// "train_12" -> ("train_", 12); ids without a numeric tail sort after.
std::pair<std::string, long> natural_key(const std::string& id) {
  std::size_t i = id.size();
  while (i > 0 && std::isdigit(static_cast<unsigned char>(id[i - 1]))) --i;
  if (i == id.size()) return {id, std::numeric_limits<long>::max()};
  return {id.substr(0, i), std::stol(id.substr(i))};
}

}  // namespace

const char* to_string(Grade g) { return g == Grade::Benign ? "benign" : "malignant"; }

const char* to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::TestA: return "testA";
    case Split::TestB: return "testB";
  }
  return "?";
}

Grade grade_from_string(const std::string& s) {
  const auto v = lower(trim(s));
  if (v == "benign") return Grade::Benign;
  if (v == "malignant") return Grade::Malignant;
  throw std::invalid_argument("unknown grade '" + s + "' (expected benign or malignant)");
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "testA") return Split::TestA;
  if (s == "testB") return Split::TestB;
  throw std::invalid_argument("unknown split '" + s + "' (expected train, testA or testB)");
}

Split split_of_id(const std::string& id) {
  if (id.rfind("train", 0) == 0) return Split::Train;
  if (id.rfind("testA", 0) == 0) return Split::TestA;
  if (id.rfind("testB", 0) == 0) return Split::TestB;
  throw std::invalid_argument("image id '" + id + "' does not name a split (train/testA/testB prefix)");
}

std::map<std::string, Grade> read_grade_table(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open grade table '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("grade table '" + path.string() + "' is empty");
  const auto header = split_csv_line(line);
  std::size_t grade_col = 1;
  for (std::size_t i = 1; i < header.size(); ++i) {
    if (lower(header[i]).rfind("grade", 0) == 0) {
      grade_col = i;
      break;
    }
  }
  std::map<std::string, Grade> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() <= grade_col) {
      throw std::runtime_error("grade table line " + std::to_string(line_no) + " has too few columns");
    }
    out[fields[0]] = grade_from_string(fields[grade_col]);
  }
  return out;
}

std::vector<ImageRecord> load_glas_dataset(const fs::path& root, const LoadOptions& opts) {
  if (!fs::is_directory(root)) throw std::runtime_error("data root '" + root.string() + "' is not a directory");

  std::map<std::string, fs::path> images, annotations;
  fs::path grade_table;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    const auto& p = entry.path();
    const auto name = lower(p.filename().string());
    if (name == "grade.csv" || name == "grades.csv") {
      grade_table = p;
      continue;
    }
    if (!is_image_extension(p)) continue;
    const auto stem = p.stem().string();
    if (ends_with(stem, "_anno")) {
      annotations[stem.substr(0, stem.size() - 5)] = p;
    } else {
      images[stem] = p;
    }
  }
  if (images.empty()) throw std::runtime_error("no records found under '" + root.string() + "'");
  if (grade_table.empty()) throw std::runtime_error("no grade table (Grade.csv) under '" + root.string() + "'");
  const auto grades = read_grade_table(grade_table);

  std::vector<ImageRecord> records;
  for (const auto& [id, image_path] : images) {
    const Split split = split_of_id(id);
    if (opts.only_split && *opts.only_split != split) continue;
    const auto anno = annotations.find(id);
    if (anno == annotations.end()) throw std::runtime_error("missing annotation for image '" + id + "'");
    const auto grade = grades.find(id);
    if (grade == grades.end()) throw std::runtime_error("no grade entry for image '" + id + "'");

    ImageRecord rec;
    rec.id = id;
    rec.split = split;
    rec.grade = grade->second;
    rec.image = io::read_rgb(image_path);
    rec.annotation = io::read_labels(anno->second);
    if (rec.image.rows() != rec.annotation.rows() || rec.image.cols() != rec.annotation.cols()) {
      throw std::runtime_error("image and annotation sizes differ for '" + id + "'");
    }
    if (rec.image.rows() < opts.min_side || rec.image.cols() < opts.min_side) {
      throw std::runtime_error("image '" + id + "' is smaller than " + std::to_string(opts.min_side) + " px");
    }
    records.push_back(std::move(rec));
  }
  if (records.empty()) throw std::runtime_error("no records found under '" + root.string() + "'");
  std::sort(records.begin(), records.end(), [](const ImageRecord& a, const ImageRecord& b) {
    if (a.split != b.split) return a.split < b.split;
    return natural_key(a.id) < natural_key(b.id);
  });
  return records;
}

std::vector<ImageRecord> filter_split(const std::vector<ImageRecord>& records, Split split) {
  std::vector<ImageRecord> out;
  for (const auto& r : records)
    if (r.split == split) out.push_back(r);
  return out;
}

std::array<Offset, 4> corner_offsets(int rows, int cols, int patch) {
  if (patch <= 0) throw std::invalid_argument("patch size must be positive");
  if (rows < patch || cols < patch) {
    throw std::invalid_argument("image " + std::to_string(rows) + "x" + std::to_string(cols) +
                                " is smaller than patch " + std::to_string(patch));
  }
  return {Offset{0, 0}, Offset{0, cols - patch}, Offset{rows - patch, 0}, Offset{rows - patch, cols - patch}};
}

std::array<PatchCrop, 4> extract_corner_patches(const ImageRecord& record, int patch) {
  const auto offsets = corner_offsets(record.image.rows(), record.image.cols(), patch);
  std::array<PatchCrop, 4> out;
  for (std::size_t i = 0; i < 4; ++i) {
    out[i].source_id = record.id;
    out[i].grade = record.grade;
    out[i].offset = offsets[i];
    out[i].image = crop(record.image, offsets[i], patch, patch);
    out[i].annotation = InstanceMask(crop(record.annotation.labels, offsets[i], patch, patch));
  }
  return out;
}

ClassWeights balanced_class_weights(std::int64_t foreground_px, std::int64_t total_px) {
  const std::int64_t background_px = total_px - foreground_px;
  if (foreground_px <= 0 || background_px <= 0) return {};
  const double n = static_cast<double>(total_px);
  return {n / (2.0 * background_px), n / (2.0 * foreground_px)};
}

FloatRaster compute_weight_map(const InstanceMask& gland, double w0, double sigma, ClassWeights weights) {
  if (!(sigma > 0.0)) throw std::invalid_argument("compute_weight_map: sigma must be positive");
  constexpr double inf = std::numeric_limits<double>::infinity();
  const int rows = gland.rows(), cols = gland.cols();
  Raster<double> d1(rows, cols, inf), d2(rows, cols, inf);

  const auto areas = label_areas(gland);
  for (std::size_t label = 1; label < areas.size(); ++label) {
    if (areas[label] == 0) continue;
    const auto dt = squared_distance_transform(object_mask(gland, static_cast<std::int32_t>(label)));
    for (std::size_t i = 0; i < dt.size(); ++i) {
      const double d = dt.values()[i];
      double& a = d1.values()[i];
      double& b = d2.values()[i];
      if (d < a) {
        b = a;
        a = d;
      } else if (d < b) {
        b = d;
      }
    }
  }

  FloatRaster out(rows, cols);
  const double denom = 2.0 * sigma * sigma;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double wc = gland.labels.values()[i] > 0 ? weights.foreground : weights.background;
    double border = 0.0;
    if (d2.values()[i] != inf) {
      const double s = std::sqrt(d1.values()[i]) + std::sqrt(d2.values()[i]);
      border = w0 * std::exp(-(s * s) / denom);
    }
    out.values()[i] = static_cast<float>(wc + border);
  }
  return out;
}

BinaryMask derive_contour_mask(const InstanceMask& gland, int dilate_radius, int erode_radius) {
  if (dilate_radius < 1 || erode_radius < 1) throw std::invalid_argument("contour radii must be >= 1");
  BinaryMask out(gland.rows(), gland.cols(), 0);
  const auto areas = label_areas(gland);
  for (std::size_t label = 1; label < areas.size(); ++label) {
    if (areas[label] == 0) continue;
    const auto obj = object_mask(gland, static_cast<std::int32_t>(label));
    const auto grown = dilate(obj, dilate_radius);
    const auto shrunk = erode(obj, erode_radius);
    for (std::size_t i = 0; i < out.size(); ++i)
      if (grown.values()[i] && !shrunk.values()[i]) out.values()[i] = 1;
  }
  return out;
}

PatchSample make_patch_sample(const PatchCrop& crop, const PatchOptions& opts, ClassWeights weights) {
  PatchSample s;
  s.image = crop.image;
  s.gland_mask = crop.annotation.foreground();
  s.contour_mask = derive_contour_mask(crop.annotation, opts.dilate_radius, opts.erode_radius);
  s.weight_map = compute_weight_map(crop.annotation, opts.w0, opts.sigma, weights);
  s.grade = crop.grade;
  s.source_id = crop.source_id;
  s.offset = crop.offset;
  s.rotation_quarter_turns = 0;
  return s;
}

namespace {

PatchSample rotated(const PatchSample& s, int k) {
  PatchSample out;
  out.image = rotate_quarter_turns(s.image, k);
  out.gland_mask = rotate_quarter_turns(s.gland_mask, k);
  out.contour_mask = rotate_quarter_turns(s.contour_mask, k);
  out.weight_map = rotate_quarter_turns(s.weight_map, k);
  out.grade = s.grade;
  out.source_id = s.source_id;
  out.offset = s.offset;
  out.rotation_quarter_turns = (s.rotation_quarter_turns + k) % 4;
  return out;
}

}  // namespace

std::array<PatchSample, 4> augment_rotations(const PatchSample& sample) {
  if (sample.image.rows() != sample.image.cols()) throw std::invalid_argument("augment_rotations: patch is not square");
  return {rotated(sample, 0), rotated(sample, 1), rotated(sample, 2), rotated(sample, 3)};
}

ClassWeights class_weights_for(const std::vector<ImageRecord>& records, const PatchOptions& opts) {
  if (opts.class_weights) return *opts.class_weights;
  std::int64_t fg = 0, total = 0;
  for (const auto& r : records) {
    for (auto v : r.annotation.labels) fg += v > 0 ? 1 : 0;
    total += static_cast<std::int64_t>(r.annotation.labels.size());
  }
  return balanced_class_weights(fg, total);
}

std::string patch_key(const std::string& source_id, Offset offset) {
  return source_id + "_r" + std::to_string(offset.row) + "_c" + std::to_string(offset.col);
}

std::string patch_key(const PatchManifestEntry& e) { return patch_key(e.source_id, e.offset); }

std::vector<PatchManifestEntry> write_patch_set(const fs::path& dir, const std::vector<ImageRecord>& records,
                                                const PatchOptions& opts) {
  fs::create_directories(dir);
  const ClassWeights weights = class_weights_for(records, opts);
  std::vector<PatchManifestEntry> entries;
  for (const auto& rec : records) {
    for (const auto& crop : extract_corner_patches(rec, opts.patch)) {
      const auto sample = make_patch_sample(crop, opts, weights);
      const auto key = patch_key(crop.source_id, crop.offset);
      PatchManifestEntry e;
      e.source_id = crop.source_id;
      e.grade = crop.grade;
      e.offset = crop.offset;
      e.image_path = key + "_image.png";
      e.gland_path = key + "_gland.png";
      e.contour_path = key + "_contour.png";
      e.weight_path = key + "_weight.tiff";
      io::write_rgb(dir / e.image_path, sample.image);
      io::write_binary(dir / e.gland_path, sample.gland_mask);
      io::write_binary(dir / e.contour_path, sample.contour_mask);
      io::write_float(dir / e.weight_path, sample.weight_map);
      for (int k = 0; k < 4; ++k) {
        e.rotation = k;
        entries.push_back(e);
      }
    }
  }
  write_patch_manifest(dir / "manifest.csv", entries);
  return entries;
}

void write_patch_manifest(const fs::path& path, const std::vector<PatchManifestEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest '" + path.string() + "'");
  out << "source_id,grade,row,col,rotation,image,gland,contour,weight\n";
  for (const auto& e : entries) {
    out << e.source_id << ',' << to_string(e.grade) << ',' << e.offset.row << ',' << e.offset.col << ',' << e.rotation
        << ',' << e.image_path << ',' << e.gland_path << ',' << e.contour_path << ',' << e.weight_path << '\n';
  }
}

std::vector<PatchManifestEntry> read_patch_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open patch manifest '" + path.string() + "'");
  std::string line;
  std::getline(in, line);
  std::vector<PatchManifestEntry> out;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 9) throw std::runtime_error("malformed manifest row: " + line);
    PatchManifestEntry e;
    e.source_id = f[0];
    e.grade = grade_from_string(f[1]);
    e.offset = {std::stoi(f[2]), std::stoi(f[3])};
    e.rotation = std::stoi(f[4]);
    if (e.rotation < 0 || e.rotation > 3) throw std::runtime_error("manifest rotation out of range: " + line);
    e.image_path = f[5];
    e.gland_path = f[6];
    e.contour_path = f[7];
    e.weight_path = f[8];
    out.push_back(std::move(e));
  }
  return out;
}

PatchSample load_patch_sample(const fs::path& dir, const PatchManifestEntry& entry) {
  PatchSample s;
  s.image = io::read_rgb(dir / entry.image_path);
  s.gland_mask = io::read_binary(dir / entry.gland_path);
  s.contour_mask = io::read_binary(dir / entry.contour_path);
  s.weight_map = io::read_float(dir / entry.weight_path);
  s.grade = entry.grade;
  s.source_id = entry.source_id;
  s.offset = entry.offset;
  return entry.rotation == 0 ? s : rotated(s, entry.rotation);
}

}  // namespace glandseg
