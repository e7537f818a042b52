#include "cubefocus/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>

#include "cubefocus/rng.hpp"

namespace cubefocus {

GradientMode gradient_mode_from_string(std::string_view s) {
  if (s == "pixelgrad") return GradientMode::pixelgrad;
  if (s == "featuregrad") return GradientMode::featuregrad;
  throw ConfigError("unknown gradient mode '" + std::string(s) + "' (pixelgrad|featuregrad)");
}

PolicyKind policy_kind_from_string(std::string_view s) {
  if (s == "learned") return PolicyKind::learned;
  if (s == "random") return PolicyKind::random;
  if (s == "random_spatial") return PolicyKind::random_spatial;
  if (s == "random_temporal") return PolicyKind::random_temporal;
  throw ConfigError("unknown policy '" + std::string(s) +
                    "' (learned|random|random_spatial|random_temporal)");
}

std::string_view to_string(GradientMode m) {
  return m == GradientMode::pixelgrad ? "pixelgrad" : "featuregrad";
}

std::string_view to_string(PolicyKind p) {
  switch (p) {
    case PolicyKind::learned: return "learned";
    case PolicyKind::random: return "random";
    case PolicyKind::random_spatial: return "random_spatial";
    case PolicyKind::random_temporal: return "random_temporal";
  }
  return "learned";
}

// ---------------------------------------------------------------------------
// Architecture

Architecture Architecture::from_config(const Config& cfg) {
  Architecture a;
  a.video = {cfg.get_size("height"), cfg.get_size("width"), cfg.get_size("frames"), 1};
  a.cube = CubeSize{cfg.get_size("cube_h"), cfg.get_size("cube_w"), cfg.get_size("cube_t")};
  a.max_cubes = cfg.get_size("max_cubes");
  a.classes = cfg.get_size("classes");
  a.global_width = cfg.get_size("global_width");
  a.local_width = cfg.get_size("local_width");
  a.policy_hidden = cfg.get_size("policy_hidden");
  a.validate();
  return a;
}

std::vector<ConvLayerSpec> Architecture::global_layers() const {
  const std::size_t w = global_width;
  return {
      {{4, 4, 2}, {4, 4, 2}, w},
      {{2, 2, 2}, {2, 2, 2}, 2 * w},
  };
}

std::vector<ConvLayerSpec> Architecture::local_layers() const {
  const std::size_t w = local_width;
  // Single-frame cubes keep a temporal stride of 1 throughout.
  const std::size_t kt = cube.t % 2 == 0 ? 2 : 1;
  return {
      {{2, 2, 1}, {2, 2, 1}, w},
      {{2, 2, kt}, {2, 2, kt}, 2 * w},
      {{2, 2, 1}, {2, 2, 1}, 4 * w},
      {{1, 1, 1}, {1, 1, 1}, 4 * w},
  };
}

Stride3 Architecture::local_stride() const {
  Stride3 s{1, 1, 1};
  for (const auto& l : local_layers())
    for (std::size_t a = 0; a < 3; ++a) s[a] *= l.stride[a];
  return s;
}

Shape Architecture::glance_input_shape() const { return {video[0] / 2, video[1] / 2, video[2], video[3]}; }

Shape Architecture::encoder_output_shape(const std::vector<ConvLayerSpec>& layers, Shape input) const {
  for (const auto& l : layers) {
    input = conv3d_output_shape(input, {l.kernel[0], l.kernel[1], l.kernel[2], input[3], l.out_channels},
                                l.stride);
  }
  return input;
}

Shape Architecture::global_feature_shape() const {
  return encoder_output_shape(global_layers(), glance_input_shape());
}

void Architecture::validate() const {
  if (video.size() != 4 || video[3] != 1) throw ConfigError("videos must be H x W x T x 1");
  if (video[0] % 16 || video[1] % 16) throw ConfigError("height and width must be multiples of 16");
  if (video[2] % 4) throw ConfigError("frames must be a multiple of 4");
  if (max_cubes == 0) throw ConfigError("max_cubes must be positive");
  if (classes < 2) throw ConfigError("need at least two classes");
  if (global_width == 0 || local_width == 0 || policy_hidden == 0) {
    throw ConfigError("layer widths must be positive");
  }
  const Stride3 s = local_stride();
  for (std::size_t a = 0; a < 3; ++a) {
    if (cube[a] == 0 || cube[a] % s[a]) {
      throw ConfigError("cube extent " + std::to_string(cube[a]) + " on axis " + std::to_string(a) +
                        " must be a positive multiple of the local encoder stride " +
                        std::to_string(s[a]));
    }
    const std::size_t grow = interpolated_axes(cube)[a] ? s[a] : 0;
    if (cube[a] + grow > video[a]) {
      throw ConfigError("cube extent " + std::to_string(cube[a]) + " plus encoder stride exceeds video axis " +
                        std::to_string(a));
    }
  }
}

namespace {

LayerDesc conv_desc(const std::string& name, const Shape& input, const ConvLayerSpec& l) {
  LayerDesc d;
  d.name = name;
  d.kind = LayerKind::conv3d;
  d.input = input;
  d.kernels = {l.kernel[0], l.kernel[1], l.kernel[2], input[3], l.out_channels};
  d.stride = l.stride;
  return d;
}

LayerDesc linear_desc(const std::string& name, std::size_t in, std::size_t out) {
  LayerDesc d;
  d.name = name;
  d.kind = LayerKind::linear;
  d.in_features = in;
  d.out_features = out;
  return d;
}

void add_encoder(CostLedger& ledger, const std::string& component, const std::string& prefix,
                 const std::vector<ConvLayerSpec>& layers, Shape input) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerDesc d = conv_desc(prefix + std::to_string(i + 1), input, layers[i]);
    ledger.add(component, d);
    input = conv3d_output_shape(d.input, d.kernels, d.stride);
  }
}

}  // namespace

CostLedger Architecture::ledger() const {
  CostLedger ledger;
  add_encoder(ledger, "global", "conv", global_layers(), glance_input_shape());
  const std::size_t flat = shape_volume(global_feature_shape());
  ledger.add("policy", linear_desc("hidden", flat, policy_hidden));
  ledger.add("policy", linear_desc("centers", policy_hidden, 3 * max_cubes));
  add_encoder(ledger, "local", "conv", local_layers(), {cube.h, cube.w, cube.t, video[3]});
  ledger.add("classifier", linear_desc("head", local_channels() + global_channels(), classes));
  return ledger;
}

Madds Architecture::local_cost_on(const Shape& input) const {
  CostLedger ledger;
  add_encoder(ledger, "local", "conv", local_layers(), input);
  return ledger.total("local");
}

Madds Architecture::glance_cost() const {
  const CostLedger l = ledger();
  return l.total("global") + l.total("classifier");
}
Madds Architecture::policy_cost() const { return ledger().total("policy"); }
Madds Architecture::local_cube_cost() const { return ledger().total("local"); }
Madds Architecture::classifier_cost() const { return ledger().total("classifier"); }

// ---------------------------------------------------------------------------
// Parameters

std::size_t ParameterSet::index(std::string_view name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return i;
  throw std::out_of_range("no parameter named '" + std::string(name) + "'");
}

std::size_t ParameterSet::scalar_count(ParamGroup group) const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < values.size(); ++i)
    if (groups[i] == group) n += values[i].size();
  return n;
}

namespace {

void add_param(ParameterSet& p, std::string name, ParamGroup group, Tensor t) {
  p.names.push_back(std::move(name));
  p.groups.push_back(group);
  p.values.push_back(std::move(t));
}

Tensor he_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (double& v : t.data) v = (2.0 * uniform01(rng) - 1.0) * bound;
  return t;
}

ParameterSet layout(const Architecture& a, Rng* rng) {
  ParameterSet p;
  auto init = [&](Shape shape, std::size_t fan_in) {
    return rng ? he_uniform(std::move(shape), fan_in, *rng) : Tensor(std::move(shape));
  };
  auto encoder = [&](const std::string& prefix, ParamGroup group, const std::vector<ConvLayerSpec>& layers,
                     std::size_t cin) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      const std::size_t fan_in = l.kernel[0] * l.kernel[1] * l.kernel[2] * cin;
      add_param(p, prefix + std::to_string(i + 1) + ".kernel", group,
                init({l.kernel[0], l.kernel[1], l.kernel[2], cin, l.out_channels}, fan_in));
      add_param(p, prefix + std::to_string(i + 1) + ".bias", group, Tensor(Shape{l.out_channels}));
      cin = l.out_channels;
    }
  };
  encoder("global.conv", ParamGroup::global, a.global_layers(), a.video[3]);

  const std::size_t flat = shape_volume(a.global_feature_shape());
  add_param(p, "policy.hidden.weight", ParamGroup::policy, init({a.policy_hidden, flat}, flat));
  add_param(p, "policy.hidden.bias", ParamGroup::policy, Tensor(Shape{a.policy_hidden}));
  Tensor centers_w({3 * a.max_cubes, a.policy_hidden});
  if (rng) {
    // Small enough that every cube starts near the video centre, but not
    // symmetric across cubes.
    for (double& v : centers_w.data) v = (2.0 * uniform01(*rng) - 1.0) * 1e-2;
  }
  add_param(p, "policy.centers.weight", ParamGroup::policy, std::move(centers_w));
  add_param(p, "policy.centers.bias", ParamGroup::policy, Tensor(Shape{3 * a.max_cubes}));

  encoder("local.conv", ParamGroup::local, a.local_layers(), a.video[3]);

  add_param(p, "classifier.weight", ParamGroup::classifier,
            Tensor(Shape{a.classes, a.local_channels() + a.global_channels()}));
  add_param(p, "classifier.bias", ParamGroup::classifier, Tensor(Shape{a.classes}));
  return p;
}

}  // namespace

Model::Model(Architecture arch, std::uint64_t seed) : arch_(std::move(arch)) {
  arch_.validate();
  Rng rng(derive_seed({seed, 0x696e6974ULL}));
  params_ = layout(arch_, &rng);
}

Model::Model(Architecture arch, ParameterSet params) : arch_(std::move(arch)), params_(std::move(params)) {
  arch_.validate();
  const ParameterSet expected = layout(arch_, nullptr);
  if (params_.names != expected.names) throw std::invalid_argument("parameter names do not match architecture");
  for (std::size_t i = 0; i < expected.values.size(); ++i) {
    require_shape(params_.values[i], expected.values[i].shape, params_.names[i].c_str());
  }
  params_.groups = expected.groups;
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("truncated checkpoint");
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::string get_string(std::istream& in) {
  const std::uint32_t n = get_u32(in);
  std::string s(n, '\0');
  if (!in.read(s.data(), n)) throw std::runtime_error("truncated checkpoint");
  return s;
}

}  // namespace

void Model::save(const std::filesystem::path& path, const Config& config) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write("ACKP", 4);
  put_u32(out, 1);
  const std::string text = config.to_string();
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  put_u32(out, static_cast<std::uint32_t>(params_.names.size()));
  for (std::size_t i = 0; i < params_.names.size(); ++i) {
    put_u32(out, static_cast<std::uint32_t>(params_.names[i].size()));
    out.write(params_.names[i].data(), static_cast<std::streamsize>(params_.names[i].size()));
    write_tensor(out, params_.values[i]);
  }
}

Model::Loaded Model::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != "ACKP") {
    throw std::runtime_error(path.string() + " is not a checkpoint");
  }
  if (get_u32(in) != 1) throw std::runtime_error("unsupported checkpoint version");
  Config config = Config::parse(get_string(in));
  const std::uint32_t count = get_u32(in);
  ParameterSet params;
  for (std::uint32_t i = 0; i < count; ++i) {
    params.names.push_back(get_string(in));
    params.values.push_back(read_tensor(in));
  }
  Architecture arch = Architecture::from_config(config);
  return Loaded{Model(std::move(arch), std::move(params)), std::move(config)};
}

// ---------------------------------------------------------------------------
// Forward pass

Tensor downscale_for_glance(const Tensor& video) {
  const auto& s = video.shape;
  Tensor out(Shape{s[0] / 2, s[1] / 2, s[2], s[3]});
  for (std::size_t h = 0; h < out.shape[0]; ++h)
    for (std::size_t w = 0; w < out.shape[1]; ++w)
      for (std::size_t t = 0; t < s[2]; ++t)
        for (std::size_t c = 0; c < s[3]; ++c) {
          out.at(h, w, t, c) = 0.25 * (video.at(2 * h, 2 * w, t, c) + video.at(2 * h + 1, 2 * w, t, c) +
                                       video.at(2 * h, 2 * w + 1, t, c) + video.at(2 * h + 1, 2 * w + 1, t, c));
        }
  return out;
}

Coord3 random_center(const CubeSize& cube, const Shape& video, std::uint64_t stream, std::size_t cube_index) {
  Rng rng(derive_seed({stream, 0x72616e64ULL, cube_index}));
  Coord3 c{};
  for (std::size_t a = 0; a < 3; ++a) {
    const auto origin = uniform_int(rng, 0, video[a] - cube[a]);
    c[a] = static_cast<double>(origin) + cube[a] / 2.0;
  }
  return c;
}

namespace {

struct Bound {
  std::vector<ad::Var> vars;
  std::size_t global_begin = 0, policy_begin = 0, local_begin = 0, classifier_begin = 0;
};

Bound bind(ad::Graph& g, const Model& m, bool with_grads, const std::array<bool, 4>& trainable) {
  Bound b;
  const auto& p = m.params();
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    const bool grad = with_grads && trainable[static_cast<std::size_t>(p.groups[i])];
    b.vars.push_back(grad ? g.parameter(p.values[i]) : g.constant_ref(p.values[i]));
  }
  b.global_begin = p.index("global.conv1.kernel");
  b.policy_begin = p.index("policy.hidden.weight");
  b.local_begin = p.index("local.conv1.kernel");
  b.classifier_begin = p.index("classifier.weight");
  return b;
}

ad::Var run_encoder(ad::Graph& g, ad::Var x, const std::vector<ConvLayerSpec>& layers,
                    const std::vector<ad::Var>& vars, std::size_t first) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = ad::conv3d(g, x, vars[first + 2 * i], layers[i].stride);
    x = ad::relu(g, ad::bias_add(g, x, vars[first + 2 * i + 1]));
  }
  return x;
}

// Policy logits -> centres inside the valid range: lo + (hi - lo) * sigmoid(u).
ad::Var policy_centers(ad::Graph& g, const Architecture& a, ad::Var global_features, const Bound& b) {
  const std::size_t flat = g.value(global_features).size();
  ad::Var x = ad::reshape(g, global_features, Shape{flat});
  x = ad::relu(g, ad::linear(g, x, b.vars[b.policy_begin], b.vars[b.policy_begin + 1]));
  ad::Var u = ad::linear(g, x, b.vars[b.policy_begin + 2], b.vars[b.policy_begin + 3]);
  const Coord3 lo = center_lower_bound(a.cube);
  const Coord3 hi = center_upper_bound(a.cube, a.video);
  Tensor factor(Shape{3 * a.max_cubes});
  Tensor shift(Shape{3 * a.max_cubes});
  for (std::size_t k = 0; k < a.max_cubes; ++k)
    for (std::size_t ax = 0; ax < 3; ++ax) {
      factor[3 * k + ax] = hi[ax] - lo[ax];
      shift[3 * k + ax] = lo[ax];
    }
  return ad::affine(g, ad::sigmoid(g, u), factor, shift);
}

ad::Var classifier_logits(ad::Graph& g, ad::Var local_acc, ad::Var global_pooled, const Bound& b) {
  const ad::Var parts[] = {local_acc, global_pooled};
  return ad::linear(g, ad::concat(g, parts), b.vars[b.classifier_begin], b.vars[b.classifier_begin + 1]);
}

std::array<bool, 3> random_axes(PolicyKind p) {
  switch (p) {
    case PolicyKind::learned: return {false, false, false};
    case PolicyKind::random: return {true, true, true};
    case PolicyKind::random_spatial: return {true, true, false};
    case PolicyKind::random_temporal: return {false, false, true};
  }
  return {false, false, false};
}

}  // namespace

ForwardResult forward(ad::Graph& g, const Model& model, const Tensor& video, const ForwardOptions& opt,
                      std::optional<std::size_t> label) {
  const Architecture& a = model.arch();
  require_shape(video, a.video, "forward video");
  const bool train = opt.path == ForwardOptions::Path::train;
  const Bound b = bind(g, model, train, opt.trainable);

  ForwardResult r;
  r.param_vars = b.vars;

  ad::Var x = g.constant(downscale_for_glance(video));
  r.global_features = run_encoder(g, x, a.global_layers(), b.vars, b.global_begin);
  const ad::Var pooled_global = ad::global_average_pool(g, r.global_features);
  ad::Var acc = g.constant(Tensor(Shape{a.local_channels()}));
  r.logits.push_back(classifier_logits(g, acc, pooled_global, b));

  const auto rand_axes = random_axes(opt.policy);
  const bool fully_random = opt.policy == PolicyKind::random;
  ad::Var centers;
  if (!fully_random) centers = policy_centers(g, a, r.global_features, b);

  const Stride3 stride = a.local_stride();
  const Coord3 cell{static_cast<double>(stride[0]), static_cast<double>(stride[1]),
                    static_cast<double>(stride[2])};

  for (std::size_t k = 0; k < a.max_cubes; ++k) {
    ad::Var center;
    if (fully_random) {
      const Coord3 rc = random_center(a.cube, a.video, opt.random_stream, k);
      center = g.constant(Tensor::vector({rc[0], rc[1], rc[2]}));
    } else {
      center = ad::slice(g, centers, 3 * k, 3);
      if (rand_axes[0] || rand_axes[2]) {
        const Coord3 rc = random_center(a.cube, a.video, opt.random_stream, k);
        Tensor keep(Shape{3});
        Tensor fixed(Shape{3});
        for (std::size_t ax = 0; ax < 3; ++ax) {
          keep[ax] = rand_axes[ax] ? 0.0 : 1.0;
          fixed[ax] = rand_axes[ax] ? rc[ax] : 0.0;
        }
        center = ad::affine(g, center, keep, fixed);
      }
    }
    const Tensor& cv = g.value(center);
    const CubeSpec spec{{cv[0], cv[1], cv[2]}, a.cube};
    r.cubes.push_back(spec);

    ad::Var features;
    if (!train || fully_random) {
      ad::Var cube = g.constant(crop_direct(video, spec));
      features = run_encoder(g, cube, a.local_layers(), b.vars, b.local_begin);
    } else if (opt.mode == GradientMode::pixelgrad) {
      ad::Var cube = crop_cube_pixelgrad(g, video, center, a.cube);
      features = run_encoder(g, cube, a.local_layers(), b.vars, b.local_begin);
    } else {
      ad::Var enlarged = g.constant(crop_enlarged_cube(video, spec, stride, opt.anchor_shift));
      ad::Var big = run_encoder(g, enlarged, a.local_layers(), b.vars, b.local_begin);
      const Shape target = a.encoder_output_shape(a.local_layers(), {a.cube.h, a.cube.w, a.cube.t, a.video[3]});
      FeatureOffsetGrid grid;
      grid.target = {target[0], target[1], target[2]};
      grid.shift = opt.offset_shift;
      grid.interpolate = interpolated_axes(a.cube);
      features = feature_center_interp(g, big, center, grid, cell);
    }
    acc = ad::maximum(g, acc, ad::global_average_pool(g, features));
    r.logits.push_back(classifier_logits(g, acc, pooled_global, b));
  }

  if (label) {
    ad::Var total = ad::softmax_cross_entropy(g, r.logits[0], *label);
    for (std::size_t t = 1; t < r.logits.size(); ++t) {
      total = ad::add(g, total, ad::softmax_cross_entropy(g, r.logits[t], *label));
    }
    r.loss = total;
  }
  return r;
}

ad::Var training_loss(ad::Graph& g, const Model& model, const Tensor& video, std::size_t label,
                      GradientMode mode) {
  ForwardOptions opt;
  opt.path = ForwardOptions::Path::train;
  opt.mode = mode;
  return forward(g, model, video, opt, label).loss;
}

// ---------------------------------------------------------------------------
// Stepwise inference

GlanceResult glance(const Model& model, const Tensor& video) {
  const Architecture& a = model.arch();
  require_shape(video, a.video, "glance video");
  ad::Graph g;
  const Bound b = bind(g, model, false, {});
  ad::Var feats = run_encoder(g, g.constant(downscale_for_glance(video)), a.global_layers(), b.vars, b.global_begin);
  ad::Var acc = g.constant(Tensor(Shape{a.local_channels()}));
  ad::Var logits = classifier_logits(g, acc, ad::global_average_pool(g, feats), b);
  return {g.value(feats), ad::softmax(g.value(logits))};
}

std::vector<CubeSpec> plan_cubes(const Model& model, const Tensor& global_features) {
  const Architecture& a = model.arch();
  require_shape(global_features, a.global_feature_shape(), "plan_cubes features");
  ad::Graph g;
  const Bound b = bind(g, model, false, {});
  const Tensor& c = g.value(policy_centers(g, a, g.constant_ref(global_features), b));
  std::vector<CubeSpec> specs;
  for (std::size_t k = 0; k < a.max_cubes; ++k) specs.push_back({{c[3 * k], c[3 * k + 1], c[3 * k + 2]}, a.cube});
  return specs;
}

InferenceSession::InferenceSession(const Model& model, const Tensor& video, PolicyKind policy,
                                   std::uint64_t random_stream)
    : model_(model), video_(video), policy_(policy), random_stream_(random_stream) {
  require_shape(video, model.arch().video, "inference video");
}

Tensor InferenceSession::classify(const std::vector<double>& pooled_local) const {
  const auto& p = model_.params();
  const Tensor& w = p.get("classifier.weight");
  const Tensor& bias = p.get("classifier.bias");
  Tensor features(Shape{w.shape[1]});
  std::copy(pooled_local.begin(), pooled_local.end(), features.data.begin());
  std::copy(pooled_global_.data.begin(), pooled_global_.data.end(),
            features.data.begin() + static_cast<std::ptrdiff_t>(pooled_local.size()));
  Tensor logits;
  kernels::linear_forward(features, w, bias, logits);
  return ad::softmax(logits);
}

const GlanceResult& InferenceSession::glance() {
  if (glance_) throw std::logic_error("glance already ran");
  glance_ = cubefocus::glance(model_, video_);
  const Tensor& f = glance_->global_features;
  const std::size_t c = f.shape[3];
  pooled_global_ = Tensor(Shape{c});
  for (std::size_t i = 0; i < f.size(); ++i) pooled_global_[i % c] += f[i];
  for (double& v : pooled_global_.data) v /= static_cast<double>(f.size() / c);
  accumulated_.assign(model_.arch().local_channels(), 0.0);
  trace_.probs.push_back(glance_->p0);
  trace_.cumulative_cost.push_back(model_.arch().glance_cost());
  next_step_ = 1;
  return *glance_;
}

const std::vector<CubeSpec>& InferenceSession::plan_cubes() {
  if (!glance_) throw std::logic_error("plan_cubes requires glance first");
  if (planned_) return trace_.cube_specs;
  const Architecture& a = model_.arch();
  if (policy_ == PolicyKind::random) {
    for (std::size_t k = 0; k < a.max_cubes; ++k) {
      trace_.cube_specs.push_back({random_center(a.cube, a.video, random_stream_, k), a.cube});
    }
  } else {
    trace_.cube_specs = cubefocus::plan_cubes(model_, glance_->global_features);
    const auto axes = random_axes(policy_);
    for (std::size_t k = 0; k < a.max_cubes; ++k) {
      const Coord3 rc = random_center(a.cube, a.video, random_stream_, k);
      for (std::size_t ax = 0; ax < 3; ++ax)
        if (axes[ax]) trace_.cube_specs[k].center[ax] = rc[ax];
    }
  }
  planned_ = true;
  return trace_.cube_specs;
}

const Tensor& InferenceSession::step(std::size_t t) {
  const Architecture& a = model_.arch();
  if (!glance_ || t != next_step_ || t > a.max_cubes) {
    throw std::logic_error("out-of-order inference step " + std::to_string(t) + " (expected " +
                           std::to_string(next_step_) + ")");
  }
  if (!planned_) plan_cubes();
  const CubeSpec& spec = trace_.cube_specs[t - 1];

  ad::Graph g;
  const Bound b = bind(g, model_, false, {});
  ad::Var feats = run_encoder(g, g.constant(crop_direct(video_, spec)), a.local_layers(), b.vars, b.local_begin);
  const Tensor& pooled = g.value(ad::global_average_pool(g, feats));
  for (std::size_t i = 0; i < accumulated_.size(); ++i) accumulated_[i] = std::max(accumulated_[i], pooled[i]);
  trace_.probs.push_back(classify(accumulated_));

  Madds cost = trace_.cumulative_cost.back() + a.classifier_cost();
  if (t == 1 && policy_ != PolicyKind::random) cost += a.policy_cost();
  cost += cube_cost(spec, a.video, processed_frames_, a.local_cube_cost());
  for (std::size_t f : cube_frames(spec, a.video)) processed_frames_.insert(f);
  trace_.cumulative_cost.push_back(cost);
  ++next_step_;
  return trace_.probs.back();
}

const PredictionTrace& InferenceSession::run() {
  if (!glance_) glance();
  if (!planned_) plan_cubes();
  while (next_step_ <= model_.arch().max_cubes) step(next_step_);
  return trace_;
}

}  // namespace cubefocus
