#include "cubefocus/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "cubefocus/parallel.hpp"
#include "cubefocus/rng.hpp"

namespace cubefocus {

namespace {

constexpr double kGlyphAmplitude = 1.0;
constexpr double kDistractorAmplitude = 0.5;
constexpr std::size_t kGlyphCells = 4;  // glyphs are 4 x 4 grids of +-1 blocks

std::uint64_t split_tag(const std::string& split) {
  if (split == "train") return 1;
  if (split == "val") return 2;
  if (split == "test") return 3;
  throw std::invalid_argument("unknown split '" + split + "'");
}

double gaussian(Rng& rng) {
  // Box-Muller; u1 in (0, 1] keeps the log finite.
  const double u1 = 1.0 - uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<int> block_pattern(Rng& rng) {
  std::vector<int> cells(kGlyphCells * kGlyphCells);
  for (int& c : cells) c = (rng() & 1) ? 1 : -1;
  return cells;
}

Tensor render_pattern(const std::vector<int>& cells, std::size_t g) {
  Tensor t(Shape{g, g});
  const std::size_t block = g / kGlyphCells;
  for (std::size_t i = 0; i < g; ++i)
    for (std::size_t j = 0; j < g; ++j)
      t[i * g + j] = cells[(i / block) * kGlyphCells + j / block];
  return t;
}

// Pastes `pattern` (g x g) scaled by `amplitude` over frames [t0, t0 + len),
// moving by (vh, vw) pixels per frame.
void paste(Tensor& video, const Tensor& pattern, double amplitude, std::size_t top, std::size_t left,
           std::size_t t0, std::size_t len, int vh, int vw) {
  const std::size_t g = pattern.shape[0];
  for (std::size_t f = 0; f < len; ++f) {
    const auto dh = static_cast<std::ptrdiff_t>(top) + vh * static_cast<std::ptrdiff_t>(f);
    const auto dw = static_cast<std::ptrdiff_t>(left) + vw * static_cast<std::ptrdiff_t>(f);
    for (std::size_t i = 0; i < g; ++i)
      for (std::size_t j = 0; j < g; ++j)
        video.at(static_cast<std::size_t>(dh) + i, static_cast<std::size_t>(dw) + j, t0 + f, 0) =
            amplitude * pattern[i * g + j];
  }
}

}  // namespace

void SynthConfig::validate() const {
  if (glyph == 0 || glyph > std::min(height, width)) {
    throw ConfigError("glyph size " + std::to_string(glyph) + " must be in [1, min(height, width)]");
  }
  if (glyph % kGlyphCells != 0) throw ConfigError("glyph size must be a multiple of 4");
  if (window == 0 || window > frames) throw ConfigError("window must be in [1, frames]");
  if (classes < 2) throw ConfigError("need at least two classes");
  if (!(noise >= 0.0)) throw ConfigError("noise level must be nonnegative");
}

SynthConfig SynthConfig::from_config(const Config& cfg, std::uint64_t seed) {
  SynthConfig s;
  s.height = cfg.get_size("height");
  s.width = cfg.get_size("width");
  s.frames = cfg.get_size("frames");
  s.glyph = cfg.get_size("glyph");
  s.classes = cfg.get_size("classes");
  s.trajectory = cfg.get_choice("trajectory", {"static", "drift"}) == "drift" ? Trajectory::drift
                                                                              : Trajectory::stationary;
  s.window = cfg.get_size("window");
  s.noise = cfg.get_double("noise");
  s.distractors = cfg.get_size("distractors");
  s.seed = seed;
  s.validate();
  return s;
}

SplitSizes SplitSizes::from_config(const Config& cfg) {
  SplitSizes s{cfg.get_size("train_size"), cfg.get_size("val_size"), cfg.get_size("test_size")};
  if (s.train == 0 || s.val == 0 || s.test == 0) throw ConfigError("split sizes must be positive");
  return s;
}

std::vector<Tensor> class_glyphs(const SynthConfig& cfg) {
  Rng rng(derive_seed({cfg.seed, 0x61797068ULL}));
  std::vector<std::vector<int>> patterns;
  while (patterns.size() < cfg.classes) {
    auto candidate = block_pattern(rng);
    bool distinct = true;
    for (const auto& p : patterns) {
      std::size_t diff = 0;
      for (std::size_t i = 0; i < p.size(); ++i) diff += p[i] != candidate[i];
      if (diff < 4) distinct = false;
    }
    if (distinct) patterns.push_back(std::move(candidate));
  }
  std::vector<Tensor> glyphs;
  for (const auto& p : patterns) glyphs.push_back(render_pattern(p, cfg.glyph));
  return glyphs;
}

AnnotatedSample make_sample(const SynthConfig& cfg, const std::vector<Tensor>& glyphs,
                            const std::string& split, std::size_t index) {
  Rng rng(derive_seed({cfg.seed, split_tag(split), index}));
  AnnotatedSample s;
  s.id = index;
  s.label = index % cfg.classes;
  s.video = Tensor(cfg.video_shape());

  for (double& v : s.video.data) v = cfg.noise * gaussian(rng);

  const std::size_t g = cfg.glyph;
  for (std::size_t d = 0; d < cfg.distractors; ++d) {
    const Tensor pattern = render_pattern(block_pattern(rng), g);
    const auto top = uniform_int(rng, 0, cfg.height - g);
    const auto left = uniform_int(rng, 0, cfg.width - g);
    const auto t0 = uniform_int(rng, 0, cfg.frames - cfg.window);
    paste(s.video, pattern, kDistractorAmplitude, top, left, t0, cfg.window, 0, 0);
  }

  int vh = 0;
  int vw = 0;
  if (cfg.trajectory == Trajectory::drift) {
    vh = static_cast<int>(uniform_int(rng, 0, 2)) - 1;
    vw = static_cast<int>(uniform_int(rng, 0, 2)) - 1;
    if (g + cfg.window - 1 > std::min(cfg.height, cfg.width)) vh = vw = 0;
  }
  const std::size_t travel = cfg.window - 1;
  const std::size_t ext_h = g + (vh ? travel : 0);
  const std::size_t ext_w = g + (vw ? travel : 0);
  // Top-left of the swept box; the glyph starts at the end it moves away from.
  const auto box_top = uniform_int(rng, 0, cfg.height - ext_h);
  const auto box_left = uniform_int(rng, 0, cfg.width - ext_w);
  const auto t0 = uniform_int(rng, 0, cfg.frames - cfg.window);
  const std::size_t top = vh < 0 ? box_top + travel : box_top;
  const std::size_t left = vw < 0 ? box_left + travel : box_left;
  paste(s.video, glyphs.at(s.label), kGlyphAmplitude, top, left, t0, cfg.window, vh, vw);

  s.truth.size = CubeSize{ext_h, ext_w, cfg.window};
  s.truth.center = {box_top + ext_h / 2.0, box_left + ext_w / 2.0, t0 + cfg.window / 2.0};
  return s;
}

Dataset generate_split(const SynthConfig& cfg, const std::string& split, std::size_t count) {
  cfg.validate();
  const auto glyphs = class_glyphs(cfg);
  Dataset out(count);
  parallel_for(count, [&](std::size_t i) { out[i] = make_sample(cfg, glyphs, split, i); });
  return out;
}

DatasetSplits generate(const SynthConfig& cfg, const SplitSizes& sizes) {
  return {generate_split(cfg, "train", sizes.train), generate_split(cfg, "val", sizes.val),
          generate_split(cfg, "test", sizes.test)};
}

double policy_iou(const CubeSpec& a, const CubeSpec& b) {
  double inter = 1.0;
  for (std::size_t ax = 0; ax < 3; ++ax) {
    const double lo = std::max(a.center[ax] - a.size[ax] / 2.0, b.center[ax] - b.size[ax] / 2.0);
    const double hi = std::min(a.center[ax] + a.size[ax] / 2.0, b.center[ax] + b.size[ax] / 2.0);
    inter *= std::max(0.0, hi - lo);
  }
  const double uni = static_cast<double>(a.size.volume()) + static_cast<double>(b.size.volume()) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

namespace {

std::string sample_file(std::size_t id) {
  std::ostringstream os;
  os << std::setw(6) << std::setfill('0') << id << ".atsr";
  return os.str();
}

}  // namespace

void write_dataset(const std::filesystem::path& dir, const DatasetSplits& splits) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.csv");
  if (!manifest) throw std::runtime_error("cannot write " + (dir / "manifest.csv").string());
  manifest << "sample_id,label,center_h,center_w,center_t,size_h,size_w,size_t,split\n";
  manifest << std::setprecision(17);
  const std::pair<const char*, const Dataset*> parts[] = {
      {"train", &splits.train}, {"val", &splits.val}, {"test", &splits.test}};
  for (const auto& [name, data] : parts) {
    std::filesystem::create_directories(dir / name);
    for (const auto& s : *data) {
      save_tensor(dir / name / sample_file(s.id), s.video);
      manifest << s.id << ',' << s.label << ',' << s.truth.center[0] << ',' << s.truth.center[1] << ','
               << s.truth.center[2] << ',' << s.truth.size.h << ',' << s.truth.size.w << ','
               << s.truth.size.t << ',' << name << '\n';
    }
  }
}

Dataset read_split(const std::filesystem::path& dir, const std::string& split) {
  split_tag(split);
  std::ifstream manifest(dir / "manifest.csv");
  if (!manifest) throw std::runtime_error("dataset manifest missing: " + (dir / "manifest.csv").string());
  std::string line;
  std::getline(manifest, line);
  Dataset out;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 9) throw std::runtime_error("malformed manifest row: " + line);
    if (f[8] != split) continue;
    AnnotatedSample s;
    s.id = std::stoull(f[0]);
    s.label = std::stoull(f[1]);
    s.truth.center = {std::stod(f[2]), std::stod(f[3]), std::stod(f[4])};
    s.truth.size = CubeSize{std::stoull(f[5]), std::stoull(f[6]), std::stoull(f[7])};
    out.push_back(std::move(s));
  }
  parallel_for(out.size(), [&](std::size_t i) {
    out[i].video = load_tensor(dir / split / sample_file(out[i].id));
  });
  return out;
}

}  // namespace cubefocus
