#include "glandseg/weights.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>

#include "glandseg/nn_blocks.hpp"

namespace glandseg::weights {

using nlohmann::json;

namespace {

constexpr const char* kManifest = "manifest.json";
constexpr const char* kBlob = "weights.bin";

std::string dtype_name(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return "float32";
    case torch::kFloat64: return "float64";
    case torch::kInt64: return "int64";
    case torch::kInt32: return "int32";
    case torch::kUInt8: return "uint8";
    default: throw std::invalid_argument(std::string("weights: unsupported dtype ") + c10::toString(t));
  }
}

torch::ScalarType dtype_from_name(const std::string& s) {
  if (s == "float32") return torch::kFloat32;
  if (s == "float64") return torch::kFloat64;
  if (s == "int64") return torch::kInt64;
  if (s == "int32") return torch::kInt32;
  if (s == "uint8") return torch::kUInt8;
  throw std::runtime_error("weights: unknown dtype '" + s + "'");
}

std::string shape_string(const std::vector<std::int64_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ']';
  return os.str();
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

bool is_square(std::int64_t n) {
  const auto r = static_cast<std::int64_t>(std::llround(std::sqrt(static_cast<double>(n))));
  return r * r == n;
}

// Resample a [1, N, D] position table to the target's token count when both
// describe square grids with the same class-token layout.
std::optional<torch::Tensor> try_resize_positions(const torch::Tensor& src, const torch::Tensor& dst) {
  if (src.dim() != 3 || dst.dim() != 3 || src.size(0) != 1 || dst.size(0) != 1 || src.size(2) != dst.size(2))
    return std::nullopt;
  for (const bool cls : {false, true}) {
    const auto off = cls ? 1 : 0;
    const auto ns = src.size(1) - off, nd = dst.size(1) - off;
    if (ns > 0 && nd > 0 && is_square(ns) && is_square(nd)) {
      const auto g = static_cast<std::int64_t>(std::llround(std::sqrt(static_cast<double>(nd))));
      return nn::resize_position_table(src.to(dst.dtype()), g, cls);
    }
  }
  return std::nullopt;
}

}  // namespace

NamedTensors state_of(const torch::nn::Module& module) {
  NamedTensors out;
  for (const auto& p : module.named_parameters(true)) out.emplace(p.key(), p.value());
  for (const auto& b : module.named_buffers(true)) out.emplace(b.key(), b.value());
  return out;
}

void save(const fs::path& dir, const NamedTensors& tensors, const json& metadata) {
  fs::create_directories(dir);
  std::ofstream blob(dir / kBlob, std::ios::binary);
  if (!blob) throw std::runtime_error("weights: cannot write " + (dir / kBlob).string());
  json entries = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, tensor] : tensors) {
    auto t = tensor.detach().to(torch::kCPU).contiguous();
    const auto nbytes = static_cast<std::uint64_t>(t.numel() * t.element_size());
    blob.write(static_cast<const char*>(t.data_ptr()), static_cast<std::streamsize>(nbytes));
    entries.push_back({{"name", name},
                       {"shape", t.sizes().vec()},
                       {"dtype", dtype_name(t.scalar_type())},
                       {"blob", kBlob},
                       {"offset", offset},
                       {"nbytes", nbytes}});
    offset += nbytes;
  }
  if (!blob) throw std::runtime_error("weights: write failed for " + (dir / kBlob).string());
  std::ofstream man(dir / kManifest);
  man << json{{"format", "glandseg-weights/1"}, {"metadata", metadata}, {"tensors", entries}}.dump(2) << '\n';
  if (!man) throw std::runtime_error("weights: cannot write " + (dir / kManifest).string());
}

void save(const fs::path& dir, const torch::nn::Module& module, const json& metadata) {
  save(dir, state_of(module), metadata);
}

bool exists(const fs::path& dir) { return fs::exists(dir / kManifest); }

static json read_manifest_json(const fs::path& dir) {
  std::ifstream in(dir / kManifest);
  if (!in) throw std::runtime_error("weights: no manifest at " + (dir / kManifest).string());
  return json::parse(in);
}

json load_metadata(const fs::path& dir) { return read_manifest_json(dir).value("metadata", json::object()); }

Manifest load(const fs::path& dir) {
  const auto doc = read_manifest_json(dir);
  Manifest m;
  m.metadata = doc.value("metadata", json::object());
  std::map<std::string, std::vector<char>> blobs;
  for (const auto& e : doc.at("tensors")) {
    const auto blob_name = e.at("blob").get<std::string>();
    auto it = blobs.find(blob_name);
    if (it == blobs.end()) {
      std::ifstream in(dir / blob_name, std::ios::binary);
      if (!in) throw std::runtime_error("weights: missing blob " + (dir / blob_name).string());
      it = blobs.emplace(blob_name, std::vector<char>(std::istreambuf_iterator<char>(in), {})).first;
    }
    const auto shape = e.at("shape").get<std::vector<std::int64_t>>();
    const auto dtype = dtype_from_name(e.at("dtype").get<std::string>());
    const auto offset = e.at("offset").get<std::uint64_t>();
    const auto nbytes = e.at("nbytes").get<std::uint64_t>();
    auto t = torch::empty(shape, torch::TensorOptions().dtype(dtype));
    const auto name = e.at("name").get<std::string>();
    if (static_cast<std::uint64_t>(t.numel() * t.element_size()) != nbytes || offset + nbytes > it->second.size())
      throw std::runtime_error("weights: corrupt entry '" + name + "'");
    std::memcpy(t.data_ptr(), it->second.data() + offset, nbytes);
    m.tensors.emplace(name, std::move(t));
  }
  return m;
}

std::string LoadReport::summary() const {
  std::ostringstream os;
  os << loaded.size() << " loaded, " << resized.size() << " resized, " << missing.size() << " missing, "
     << unexpected.size() << " unexpected, " << mismatched.size() << " mismatched";
  for (const auto& n : missing) os << "\n  missing: " << n;
  for (const auto& n : unexpected) os << "\n  unexpected: " << n;
  for (const auto& m : mismatched)
    os << "\n  mismatched: " << m.name << " expected " << shape_string(m.expected) << " found " << shape_string(m.found);
  return os.str();
}

LoadReport apply(torch::nn::Module& module, const NamedTensors& source, Mode mode, const std::vector<PrefixRule>& rules) {
  auto target = state_of(module);
  LoadReport report;
  std::set<std::string> consumed;
  std::vector<std::pair<torch::Tensor, torch::Tensor>> copies;

  auto source_name_for = [&](const std::string& name) -> std::string {
    for (const auto& r : rules)
      if (name.rfind(r.to, 0) == 0) return r.from + name.substr(r.to.size());
    return name;
  };

  for (const auto& [name, dst] : target) {
    const auto src_name = source_name_for(name);
    const auto it = source.find(src_name);
    if (it == source.end()) {
      report.missing.push_back(name);
      continue;
    }
    consumed.insert(src_name);
    const auto& src = it->second;
    if (src.sizes() == dst.sizes()) {
      copies.emplace_back(dst, src);
      report.loaded.push_back(name);
      continue;
    }
    if (ends_with(name, "pos_embed")) {
      if (auto r = try_resize_positions(src, dst)) {
        copies.emplace_back(dst, *r);
        report.resized.push_back(name);
        continue;
      }
    }
    report.mismatched.push_back({name, dst.sizes().vec(), src.sizes().vec()});
  }
  for (const auto& [name, _] : source)
    if (!consumed.count(name)) report.unexpected.push_back(name);

  if (mode == Mode::Strict && !report.complete())
    throw std::runtime_error("weights: strict load failed: " + report.summary());

  torch::NoGradGuard guard;
  for (auto& [dst, src] : copies) dst.copy_(src.to(dst.dtype()));
  return report;
}

std::uint64_t checksum(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kCPU).contiguous();
  const auto* bytes = static_cast<const unsigned char*>(c.data_ptr());
  std::uint64_t h = 1469598103934665603ULL;
  for (std::int64_t i = 0; i < c.numel() * c.element_size(); ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t checksum(const NamedTensors& tensors) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& [name, t] : tensors) {
    for (const char ch : name) {
      h ^= static_cast<unsigned char>(ch);
      h *= 1099511628211ULL;
    }
    h ^= checksum(t);
    h *= 1099511628211ULL;
  }
  return h;
}

NamedTensors snapshot(const torch::nn::Module& module) {
  NamedTensors out;
  for (const auto& [name, t] : state_of(module)) out.emplace(name, t.detach().clone());
  return out;
}

bool bitwise_equal(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.sizes() != b.sizes() || a.scalar_type() != b.scalar_type()) return false;
  auto x = a.detach().to(torch::kCPU).contiguous(), y = b.detach().to(torch::kCPU).contiguous();
  return std::memcmp(x.data_ptr(), y.data_ptr(), static_cast<std::size_t>(x.numel() * x.element_size())) == 0;
}

}  // namespace glandseg::weights
