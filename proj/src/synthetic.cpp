#include "glandseg/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include "glandseg/image_io.hpp"
#include "glandseg/morphology.hpp"

namespace glandseg::synthetic {

namespace {

struct Ellipse {
  double cr, cc, a, b, theta;

  bool contains(int r, int c) const {
    const double dr = r - cr, dc = c - cc;
    const double u = dc * std::cos(theta) + dr * std::sin(theta);
    const double v = -dc * std::sin(theta) + dr * std::cos(theta);
    return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
  }
};

std::uint8_t clamp_u8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace

GeneratedImage generate_image(const SynthSpec& spec, Grade grade, std::uint64_t seed) {
  if (spec.canvas <= 0 || spec.glands_min < 0 || spec.glands_max < spec.glands_min || spec.axis_min <= 0 ||
      spec.axis_max < spec.axis_min) {
    throw std::invalid_argument("invalid synthetic spec");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int n = spec.canvas;

  GeneratedImage out;
  out.grade = grade;
  out.annotation = InstanceMask(n, n);
  BinaryMask blocked(n, n, 0);
  std::vector<Ellipse> glands;

  const int count = std::uniform_int_distribution<int>(spec.glands_min, spec.glands_max)(rng);
  for (int k = 0; k < count; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < spec.max_attempts && !placed; ++attempt) {
      Ellipse e;
      e.a = spec.axis_min + unit(rng) * (spec.axis_max - spec.axis_min);
      e.b = spec.axis_min + unit(rng) * (spec.axis_max - spec.axis_min);
      e.theta = unit(rng) * std::numbers::pi;
      const double reach = std::max(e.a, e.b) + 1.0;
      if (2.0 * reach >= n) continue;
      e.cr = reach + unit(rng) * (n - 2.0 * reach);
      e.cc = reach + unit(rng) * (n - 2.0 * reach);

      const int r0 = std::max(0, static_cast<int>(e.cr - reach)), r1 = std::min(n - 1, static_cast<int>(e.cr + reach));
      const int c0 = std::max(0, static_cast<int>(e.cc - reach)), c1 = std::min(n - 1, static_cast<int>(e.cc + reach));
      bool clash = false;
      for (int r = r0; r <= r1 && !clash; ++r)
        for (int c = c0; c <= c1 && !clash; ++c)
          if (e.contains(r, c) && blocked(r, c)) clash = true;
      if (clash) continue;

      BinaryMask body(n, n, 0);
      for (int r = r0; r <= r1; ++r)
        for (int c = c0; c <= c1; ++c)
          if (e.contains(r, c)) {
            body(r, c) = 1;
            out.annotation.labels(r, c) = k + 1;
          }
      const auto halo = dilate(body, spec.min_gap);
      for (std::size_t i = 0; i < halo.size(); ++i)
        if (halo.values()[i]) blocked.values()[i] = 1;
      glands.push_back(e);
      placed = true;
    }
    if (!placed) {
      throw std::runtime_error("synthetic: could not place gland " + std::to_string(k + 1) + " of " +
                               std::to_string(count) + " after " + std::to_string(spec.max_attempts) + " attempts");
    }
  }

  // Rim = gland pixels within 5 px of the gland edge.
  const auto core = erode(out.annotation.foreground(), 5);
  const double phase_r = unit(rng) * 2.0 * std::numbers::pi;
  const double phase_c = unit(rng) * 2.0 * std::numbers::pi;
  std::uniform_real_distribution<double> noise(-1.0, 1.0);

  out.image = RgbImage(n, n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      double rgb[3];
      double texture = 0.0;
      if (out.annotation.labels(r, c) == 0) {
        rgb[0] = 232, rgb[1] = 182, rgb[2] = 205;
        texture = spec.background_noise * noise(rng);
      } else {
        const auto& g = glands[static_cast<std::size_t>(out.annotation.labels(r, c) - 1)];
        Ellipse lumen = g;
        lumen.a *= spec.benign_lumen;
        lumen.b *= spec.benign_lumen;
        if (grade == Grade::Benign && spec.benign_lumen > 0.0 && lumen.contains(r, c)) {
          rgb[0] = 244, rgb[1] = 232, rgb[2] = 240;
        } else if (core(r, c)) {
          rgb[0] = 160, rgb[1] = 100, rgb[2] = 180;
        } else {
          rgb[0] = 100, rgb[1] = 45, rgb[2] = 125;
        }
        if (grade == Grade::Benign) {
          const double w = 2.0 * std::numbers::pi / spec.benign_period;
          texture = spec.benign_amplitude * std::sin(w * r + phase_r) * std::sin(w * c + phase_c);
        } else {
          texture = spec.malignant_amplitude * noise(rng);
        }
      }
      for (int ch = 0; ch < 3; ++ch) out.image.at(r, c, ch) = clamp_u8(rgb[ch] + texture);
    }
  }
  return out;
}

void generate(const SynthSpec& spec, const std::filesystem::path& root) {
  std::filesystem::create_directories(root);
  std::ofstream grades(root / "Grade.csv");
  if (!grades) throw std::runtime_error("cannot write grade table under '" + root.string() + "'");
  grades << "name,grade\n";

  const std::pair<const char*, int> splits[] = {
      {"train", spec.train_count}, {"testA", spec.test_a_count}, {"testB", spec.test_b_count}};
  std::uint64_t serial = 0;
  for (const auto& [prefix, count] : splits) {
    for (int i = 1; i <= count; ++i) {
      const Grade grade = (i % 2 == 1) ? Grade::Benign : Grade::Malignant;
      std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                        static_cast<std::uint32_t>(serial++)};
      std::array<std::uint32_t, 2> words{};
      seq.generate(words.begin(), words.end());
      const std::uint64_t image_seed = (std::uint64_t{words[0]} << 32) | words[1];
      const auto img = generate_image(spec, grade, image_seed);
      const std::string id = std::string(prefix) + "_" + std::to_string(i);
      io::write_rgb(root / (id + ".png"), img.image);
      io::write_labels(root / (id + "_anno.png"), img.annotation);
      grades << id << ',' << to_string(grade) << '\n';
    }
  }
}

}  // namespace glandseg::synthetic
