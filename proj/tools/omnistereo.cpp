// omnistereo: command line front end for the multi-cylinder stereo library.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "omnistereo/io/attention_io.hpp"
#include "omnistereo/io/colormap.hpp"
#include "omnistereo/io/pfm.hpp"
#include "omnistereo/io/png.hpp"
#include "omnistereo/io/rig_config.hpp"
#include "omnistereo/omnistereo.hpp"

namespace fs = std::filesystem;
using namespace omnistereo;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitFormat = 3;
constexpr int kExitDomain = 4;
constexpr int kExitOther = 1;

/// Bad flag values or combinations that CLI11 cannot check on its own.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

int g_workers = 1;

std::string extension(const std::string& path) {
  std::string e = fs::path(path).extension().string();
  for (auto& ch : e) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return e;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

void print_kv(const std::string& key, double v) { std::cout << key << "=" << fmt(v) << "\n"; }

Projection parse_projection(const std::string& s) {
  const auto p = projection_from_string(s);
  if (!p) throw UsageError("unknown projection '" + s + "'");
  return *p;
}

Interpolation parse_interp(const std::string& s) { return s == "nearest" ? Interpolation::Nearest : Interpolation::Bilinear; }

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

Panorama read_raster(const std::string& path, Projection projection) {
  const std::string ext = extension(path);
  if (ext == ".pfm") return io::panorama_from_pfm(io::read_pfm(path), projection);
  if (ext == ".png") return io::panorama_from_png(io::read_png(path), projection);
  throw UsageError("unsupported raster extension for '" + path + "' (use .pfm or .png)");
}

template <typename Map>
Map read_map(const std::string& path, Projection projection) {
  Panorama p = read_raster(path, projection);
  if (p.channels != 1) throw FormatError(path + ": expected a single-channel map", 0);
  return from_panorama<Map>(p);
}

/// PFM keeps values bit-exact; PNG stores 16-bit codes over the valid value range.
void write_raster(const std::string& path, const Panorama& p) {
  const std::string ext = extension(path);
  if (ext == ".pfm") {
    io::write_pfm(path, io::to_pfm(p));
  } else if (ext == ".png") {
    const auto [lo, hi] = io::value_range(p);
    io::write_png(path, io::png_from_panorama(p, 16, lo, hi));
  } else {
    throw UsageError("unsupported raster extension for '" + path + "' (use .pfm or .png)");
  }
}

template <typename Tag>
void write_map(const std::string& path, const ScalarMap<Tag>& m) {
  write_raster(path, to_panorama(m));
}

/// Rotation from "roll,pitch,yaw" in degrees about x, y and z: Rz * Ry * Rx.
Mat3 parse_rotation(const std::string& s) {
  const auto parts = split(s, ',');
  if (parts.size() != 3) throw UsageError("--rot expects roll,pitch,yaw in degrees");
  double a[3];
  for (int k = 0; k < 3; ++k) {
    try {
      std::size_t used = 0;
      a[k] = std::stod(parts[static_cast<std::size_t>(k)], &used);
      if (used != parts[static_cast<std::size_t>(k)].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw UsageError("--rot: bad angle '" + parts[static_cast<std::size_t>(k)] + "'");
    }
  }
  const double deg = kPi / 180.0;
  return rotation_z(a[2] * deg) * rotation_y(a[1] * deg) * rotation_x(a[0] * deg);
}

/// Output size for a conversion: explicit flags win, otherwise keep the
/// length of the 360 degree axis of the input.
PanoramaGeometry conversion_geometry(const PanoramaGeometry& in, Projection to, int width, int height) {
  int full = 0;
  switch (in.projection) {
    case Projection::ERP:
      full = in.width;
      break;
    case Projection::Cassini:
    case Projection::Cylindrical:
      full = in.height;
      break;
    case Projection::Perspective:
      full = 4 * std::max(in.width, in.height);
      break;
  }
  PanoramaGeometry g{to, 0, 0};
  if (to == in.projection) {
    g.width = in.width;
    g.height = in.height;
  } else if (to == Projection::ERP) {
    g.width = full;
    g.height = full / 2;
  } else if (to == Projection::Perspective) {
    g.width = g.height = full / 4;
  } else {
    g.width = full / 2;
    g.height = full;
  }
  if (width > 0) g.width = width;
  if (height > 0) g.height = height;
  check_geometry(g);
  return g;
}

void write_pose(const std::string& path, const Pose& p) { io::write_json(path, io::pose_to_json(p)); }

std::vector<Panorama> load_rig_images(const io::RigConfig& rig) {
  std::vector<Panorama> panos;
  for (const auto& c : rig.cameras) {
    if (c.image.empty()) throw UsageError("rig camera '" + c.id + "' has no image");
    Panorama p = read_raster(c.image, rig.geometry.projection);
    if (p.width() != rig.geometry.width || p.height() != rig.geometry.height)
      throw DomainError("image of camera '" + c.id + "' does not match the rig geometry");
    panos.push_back(std::move(p));
  }
  return panos;
}

Rig to_rig(const io::RigConfig& cfg) {
  Rig rig;
  for (const auto& c : cfg.cameras) rig.cameras.push_back(c.pose);
  rig.reference = cfg.reference_index();
  return rig;
}

std::vector<std::uint8_t> read_mask(const std::string& path, const PanoramaGeometry& g) {
  const Panorama m = read_raster(path, g.projection);
  if (m.width() != g.width || m.height() != g.height) throw DomainError("mask size does not match the maps");
  std::vector<std::uint8_t> out(m.pixel_count());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = (m.valid.empty() || m.valid[i]) && m.data[i * m.channels] != 0.0f ? 1 : 0;
  return out;
}

void print_report(const MetricReport& r, const std::string& prefix = "") {
  std::cout << prefix << "kind=" << (r.kind == MetricKind::Depth ? "depth" : "disparity") << "\n";
  for (const auto& [k, v] : r.entries()) print_kv(prefix + k, v);
}

nlohmann::json report_json(const MetricReport& r) {
  nlohmann::json j = nlohmann::json::object();
  j["kind"] = r.kind == MetricKind::Depth ? "depth" : "disparity";
  for (const auto& [k, v] : r.entries()) j[k] = v;
  return j;
}

// ---------------------------------------------------------------------------
// Commands

struct ConvertArgs {
  std::string in, out, from = "erp", to, rot, interp = "bilinear";
  int width = 0, height = 0;
};

void cmd_convert(const ConvertArgs& a) {
  const Panorama src = read_raster(a.in, parse_projection(a.from));
  const PanoramaGeometry g = conversion_geometry(src.geometry, parse_projection(a.to), a.width, a.height);
  const Mat3 rot = a.rot.empty() ? Mat3::Identity() : parse_rotation(a.rot);
  write_raster(a.out, reproject_panorama(src, g, rot, parse_interp(a.interp), g_workers));
}

struct RectifyArgs {
  std::string rig, pair, out_dir, interp = "bilinear";
  int width = 256, height = 512;
};

void cmd_rectify(const RectifyArgs& a) {
  const auto cfg = io::read_rig(a.rig);
  const auto ids = split(a.pair, ',');
  if (ids.size() != 2) throw UsageError("--pair expects two camera ids, e.g. cam0,cam1");
  const int li = cfg.index_of(ids[0]);
  const int ri = cfg.index_of(ids[1]);
  if (li == ri) throw DomainError("rectify: a camera cannot pair with itself");
  const auto& cl = cfg.cameras[static_cast<std::size_t>(li)];
  const auto& cr = cfg.cameras[static_cast<std::size_t>(ri)];
  for (const auto* c : {&cl, &cr})
    if (c->image.empty()) throw UsageError("rig camera '" + c->id + "' has no image");
  const Panorama pl = read_raster(cl.image, cfg.geometry.projection);
  const Panorama pr = read_raster(cr.image, cfg.geometry.projection);
  const PanoramaGeometry g{Projection::Cylindrical, a.width, a.height};
  check_geometry(g);
  const RectifiedPair pair = rectify_pair(cl.pose, cr.pose, pl, pr, g, parse_interp(a.interp), g_workers);
  fs::create_directories(a.out_dir);
  const fs::path dir(a.out_dir);
  write_raster((dir / "left.pfm").string(), pair.left);
  write_raster((dir / "right.pfm").string(), pair.right);
  write_pose((dir / "pose_left.json").string(), pair.pose_left);
  write_pose((dir / "pose_right.json").string(), pair.pose_right);
  nlohmann::json meta = {{"left", cl.id},
                         {"right", cr.id},
                         {"baseline", pair.baseline},
                         {"width", g.width},
                         {"height", g.height},
                         {"pose_left", io::pose_to_json(pair.pose_left)},
                         {"pose_right", io::pose_to_json(pair.pose_right)}};
  io::write_json((dir / "pair.json").string(), meta);
  print_kv("baseline", pair.baseline);
}

struct GtConvertArgs {
  std::string gt, out;
  double baseline = 0.0;
  int width = 0, height = 0;
};

void cmd_gt_convert(const GtConvertArgs& a) {
  const auto gt = read_map<DisparityMap>(a.gt, Projection::Cassini);
  const PanoramaGeometry g{Projection::Cylindrical, a.width > 0 ? a.width : gt.width(),
                           a.height > 0 ? a.height : gt.height()};
  check_geometry(g);
  write_map(a.out, convert_gt_disparity(gt, a.baseline, g, g_workers));
}

struct MatchArgs {
  std::string left, right, out_disp = "disp.pfm", out_conf = "conf.pfm", cost = "census", attn = "off", attn_params,
                                    depth_out;
  double baseline = 0.0, temperature = 0.5;
  int max_disp = 64, window = 7, aggregation = 5;
  std::optional<double> lr_check;
};

void cmd_match(const MatchArgs& a) {
  if (!(a.baseline > 0.0)) throw DomainError("match: baseline must be positive");
  RectifiedPair pair;
  pair.left = read_raster(a.left, Projection::Cylindrical);
  pair.right = read_raster(a.right, Projection::Cylindrical);
  pair.baseline = a.baseline;
  MatchParams m;
  m.max_disparity = a.max_disp;
  m.cost = {a.cost == "sad" ? CostKind::SAD : CostKind::Census, a.window};
  m.aggregation_window = a.aggregation;
  m.temperature = a.temperature;
  m.attention = a.attn == "on";
  if (!a.attn_params.empty()) {
    if (!m.attention) throw UsageError("--attn-params needs --attn on");
    m.attention_params = io::read_attention_params(a.attn_params);
  }
  m.consistency_tolerance = a.lr_check;
  m.workers = g_workers;
  const MatchResult r = match_pair(pair, m);
  write_map(a.out_disp, r.disparity);
  write_map(a.out_conf, r.confidence);
  if (!a.depth_out.empty())
    write_map(a.depth_out, cylindrical_disparity_to_cassini_depth(r.disparity, a.baseline,
                                                                  matching_cassini_geometry(pair.left.geometry),
                                                                  g_workers));
  print_kv("valid", static_cast<double>(r.disparity.valid_count()));
}

struct ToDepthArgs {
  std::string disp, out, projection = "cylindrical";
  double baseline = 0.0;
  int width = 0, height = 0;
};

void cmd_to_depth(const ToDepthArgs& a) {
  if (a.projection == "spherical") {
    if (a.width > 0 || a.height > 0) throw UsageError("--width/--height only apply to cylindrical input");
    const auto d = read_map<DisparityMap>(a.disp, Projection::Cassini);
    write_map(a.out, angular_disparity_to_depth(d, a.baseline, g_workers));
    return;
  }
  const auto d = read_map<DisparityMap>(a.disp, Projection::Cylindrical);
  PanoramaGeometry g = matching_cassini_geometry(d.geometry);
  if (a.width > 0) g.width = a.width;
  if (a.height > 0) g.height = a.height;
  check_geometry(g);
  write_map(a.out, cylindrical_disparity_to_cassini_depth(d, a.baseline, g, g_workers));
}

struct ReprojectArgs {
  std::string depth, src_pose, ref_pose, out, conf, out_conf;
};

void cmd_reproject_depth(const ReprojectArgs& a) {
  if (a.out_conf.empty() != a.conf.empty()) throw UsageError("--conf and --out-conf go together");
  const auto depth = read_map<DepthMap>(a.depth, Projection::Cassini);
  std::optional<ConfidenceMap> conf;
  if (!a.conf.empty()) conf = read_map<ConfidenceMap>(a.conf, Projection::Cassini);
  AlignOptions opt;
  opt.workers = g_workers;
  const AlignedDepth r = align_depth_to_reference(depth, io::read_pose(a.src_pose), io::read_pose(a.ref_pose),
                                                  conf ? &*conf : nullptr, opt);
  write_map(a.out, r.depth);
  if (!a.out_conf.empty()) write_map(a.out_conf, r.confidence);
  print_kv("valid", static_cast<double>(r.depth.valid_count()));
}

struct FuseArgs {
  std::string inputs, out, out_conf;
  std::optional<double> consensus;
  bool fill = false;
};

void cmd_fuse(const FuseArgs& a) {
  const auto paths = split(a.inputs, ',');
  if (paths.empty() || paths.size() % 2 != 0) throw UsageError("--inputs expects depth,confidence pairs");
  std::vector<std::pair<DepthMap, ConfidenceMap>> views;
  for (std::size_t k = 0; k < paths.size(); k += 2)
    views.emplace_back(read_map<DepthMap>(paths[k], Projection::Cassini),
                       read_map<ConfidenceMap>(paths[k + 1], Projection::Cassini));
  if (a.consensus) reject_inconsistent_views(views, *a.consensus);
  FusedDepth f = fuse_depths(views);
  if (a.fill) fill_small_holes(f.depth, f.confidence, HoleFillOptions{});
  write_map(a.out, f.depth);
  if (!a.out_conf.empty()) write_map(a.out_conf, f.confidence);
  print_kv("valid", static_cast<double>(f.depth.valid_count()));
}

struct EvalArgs {
  std::string pred, gt, mask, kind = "depth", json_out;
  std::optional<double> band_fov_deg;
};

void cmd_eval(const EvalArgs& a) {
  const Projection proj = Projection::Cassini;
  std::vector<std::uint8_t> mask;
  MetricReport r;
  auto build_mask = [&](const PanoramaGeometry& g) {
    if (!a.mask.empty()) mask = read_mask(a.mask, g);
    if (a.band_fov_deg) {
      const auto band = central_band_mask(g, *a.band_fov_deg * kPi / 180.0);
      if (mask.empty()) mask = band;
      else
        for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = mask[i] && band[i];
    }
  };
  if (a.kind == "disparity") {
    const auto pred = read_map<DisparityMap>(a.pred, proj);
    const auto gt = read_map<DisparityMap>(a.gt, proj);
    build_mask(pred.geometry);
    r = disparity_metrics(pred, gt, mask.empty() ? nullptr : &mask);
  } else {
    const auto pred = read_map<DepthMap>(a.pred, proj);
    const auto gt = read_map<DepthMap>(a.gt, proj);
    build_mask(pred.geometry);
    r = depth_metrics(pred, gt, mask.empty() ? nullptr : &mask);
  }
  print_report(r);
  if (!a.json_out.empty()) io::write_json(a.json_out, report_json(r));
}

struct AttnArgs {
  std::string tensor, params, out;
  int channels = 0;
  bool oracle = false;
  double oracle_tolerance = 1e-9;
};

void cmd_attn(const AttnArgs& a) {
  const auto p = io::read_attention_params(a.params);
  const int channels = a.channels > 0 ? a.channels : p.channels;
  const auto x = io::tensor_from_pfm(io::read_pfm(a.tensor), channels);
  AttentionCounters counters;
  const auto y = circular_axial_attention(x, p, g_workers, &counters);
  io::write_pfm(a.out, io::tensor_to_pfm(y));
  print_kv("multiplies", static_cast<double>(counters.multiplies));
  print_kv("exps", static_cast<double>(counters.exps));
  if (a.oracle) {
    const auto ref = circular_axial_attention_direct(x, p);
    double worst = 0.0;
    for (std::size_t i = 0; i < y.data.size(); ++i) worst = std::max(worst, std::abs(y.data[i] - ref.data[i]));
    print_kv("oracle_max_abs_diff", worst);
    if (!(worst <= a.oracle_tolerance))
      throw DomainError("attn: kernel differs from the direct evaluation by " + fmt(worst));
  }
}

struct AttnInitArgs {
  std::string out;
  int channels = 4, heads = 1, span = 8;
  std::uint64_t seed = 1;
  double scale = 0.5;
  bool no_residual = false;
};

void cmd_attn_init(const AttnInitArgs& a) {
  io::write_attention_params(
      a.out, random_attention_params<double>(a.channels, a.heads, a.span, a.seed, a.scale, !a.no_residual));
}

struct VizArgs {
  std::string in, out, cmap = "turbo";
  std::optional<double> lo, hi;
};

void cmd_viz(const VizArgs& a) {
  const Panorama p = read_raster(a.in, Projection::Cassini);
  auto [lo, hi] = io::value_range(p);
  if (a.lo) lo = *a.lo;
  if (a.hi) hi = *a.hi;
  const auto cmap = io::colormap_from_string(a.cmap);
  if (!cmap) throw UsageError("unknown colormap '" + a.cmap + "'");
  io::write_png(a.out, io::colorize(p, *cmap, lo, hi));
}

struct RenderArgs {
  std::string rig, out_dir;
  std::uint64_t seed = 7;
  int supersample = 3, gt_width = 256, gt_height = 512;
};

/// Renders the analytic scene from every rig camera and writes the reference
/// camera's ground-truth Cassini depth, plus a copy of the rig pointing at the images.
void cmd_render(const RenderArgs& a) {
  auto cfg = io::read_rig(a.rig);
  const auto scene = AnalyticScene::standard(a.seed);
  fs::create_directories(a.out_dir);
  const fs::path dir(a.out_dir);
  for (auto& c : cfg.cameras) {
    c.image = c.id + ".pfm";
    write_raster((dir / c.image).string(), render_panorama(scene, c.pose, cfg.geometry, a.supersample, g_workers));
  }
  const PanoramaGeometry gt_geom{Projection::Cassini, a.gt_width, a.gt_height};
  check_geometry(gt_geom);
  const auto& ref = cfg.cameras[static_cast<std::size_t>(cfg.reference_index())];
  write_map((dir / "gt_depth.pfm").string(), render_depth(scene, ref.pose, gt_geom, g_workers));
  io::write_json((dir / "rig.json").string(), io::rig_to_json(cfg));
}

struct PipelineArgs {
  std::string rig, out, out_conf, erp_out, gt, json_out;
  int width = 256, height = 512, max_disp = 128;
  std::optional<double> band_fov_deg;
  bool no_fill = false;
};

void cmd_pipeline(const PipelineArgs& a) {
  const auto cfg = io::read_rig(a.rig);
  const auto panos = load_rig_images(cfg);
  PipelineParams pp;
  pp.cylinder = {Projection::Cylindrical, a.width, a.height};
  check_geometry(pp.cylinder);
  pp.match.max_disparity = a.max_disp;
  pp.workers = g_workers;
  if (a.no_fill) pp.hole_fill.reset();
  if (!a.erp_out.empty()) pp.erp_output = PanoramaGeometry{Projection::ERP, 2 * a.height, a.height};
  std::optional<DepthMap> gt;
  std::vector<std::uint8_t> mask;
  if (!a.gt.empty()) {
    gt = read_map<DepthMap>(a.gt, Projection::Cassini);
    if (a.band_fov_deg) mask = central_band_mask(gt->geometry, *a.band_fov_deg * kPi / 180.0);
  }
  const PipelineResult r = run_pipeline(to_rig(cfg), panos, pp, gt ? &*gt : nullptr, mask.empty() ? nullptr : &mask);
  write_map(a.out, r.depth);
  if (!a.out_conf.empty()) write_map(a.out_conf, r.confidence);
  if (r.erp_depth) write_map(a.erp_out, *r.erp_depth);
  for (const auto& pr : r.pairs) {
    const std::string key = "pair." + cfg.cameras[static_cast<std::size_t>(pr.left)].id + "-" +
                            cfg.cameras[static_cast<std::size_t>(pr.right)].id + ".";
    print_kv(key + "baseline", pr.baseline);
    print_kv(key + "matched", static_cast<double>(pr.matched_pixels));
    print_kv(key + "aligned", static_cast<double>(pr.aligned_pixels));
  }
  print_kv("fused_valid", static_cast<double>(r.depth.valid_count()));
  if (r.metrics) {
    print_report(*r.metrics, "metric.");
    if (!a.json_out.empty()) io::write_json(a.json_out, report_json(*r.metrics));
  }
}

int fail(const char* kind, const std::string& msg, int code) {
  std::cerr << "omnistereo: error[" << kind << "]: " << msg << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-cylinder panoramic stereo depth tools"};
  app.require_subcommand(1);
  app.fallthrough();
  std::optional<int> threads;
  app.add_option("--threads", threads, "Worker threads (default: OMNISTEREO_THREADS or 1)")
      ->check(CLI::PositiveNumber);

  const auto projections = CLI::IsMember({"cassini", "erp", "cylindrical", "perspective"});
  const auto interps = CLI::IsMember({"nearest", "bilinear"});
  std::map<CLI::App*, std::function<void()>> actions;

  ConvertArgs convert;
  auto* c = app.add_subcommand("convert", "Reproject a panorama to another projection");
  c->add_option("--in", convert.in, "Input raster (.pfm or .png)")->required();
  c->add_option("--out", convert.out, "Output raster")->required();
  c->add_option("--from", convert.from, "Input projection")->check(projections)->capture_default_str();
  c->add_option("--to", convert.to, "Output projection")->required()->check(projections);
  c->add_option("--rot", convert.rot, "Rotation roll,pitch,yaw in degrees (destination to source)");
  c->add_option("--interp", convert.interp, "Interpolation")->check(interps)->capture_default_str();
  c->add_option("--width", convert.width, "Output width")->check(CLI::PositiveNumber);
  c->add_option("--height", convert.height, "Output height")->check(CLI::PositiveNumber);
  actions[c] = [&] { cmd_convert(convert); };

  RectifyArgs rectify;
  c = app.add_subcommand("rectify", "Resample a camera pair into rectified cylinders");
  c->add_option("--rig", rectify.rig, "Rig JSON")->required();
  c->add_option("--pair", rectify.pair, "Camera ids A,B")->required();
  c->add_option("--out-dir", rectify.out_dir, "Output directory")->required();
  c->add_option("--width", rectify.width, "Cylinder width")->check(CLI::PositiveNumber)->capture_default_str();
  c->add_option("--height", rectify.height, "Cylinder height")->check(CLI::PositiveNumber)->capture_default_str();
  c->add_option("--interp", rectify.interp, "Interpolation")->check(interps)->capture_default_str();
  actions[c] = [&] { cmd_rectify(rectify); };

  GtConvertArgs gtc;
  c = app.add_subcommand("gt-convert", "Convert Cassini angular disparity to cylindrical pixel disparity");
  c->add_option("--gt", gtc.gt, "Angular disparity in radians (Cassini)")->required();
  c->add_option("--baseline", gtc.baseline, "Baseline in meters")->required();
  c->add_option("--out", gtc.out, "Output disparity")->required();
  c->add_option("--width", gtc.width, "Cylinder width")->check(CLI::PositiveNumber);
  c->add_option("--height", gtc.height, "Cylinder height")->check(CLI::PositiveNumber);
  actions[c] = [&] { cmd_gt_convert(gtc); };

  MatchArgs match;
  c = app.add_subcommand("match", "Match a rectified cylindrical pair");
  c->add_option("--left", match.left, "Left cylinder")->required();
  c->add_option("--right", match.right, "Right cylinder")->required();
  c->add_option("--baseline", match.baseline, "Baseline in meters")->required();
  c->add_option("--max-disp", match.max_disp, "Disparity hypotheses")->capture_default_str();
  c->add_option("--cost", match.cost, "Matching cost")->check(CLI::IsMember({"census", "sad"}))->capture_default_str();
  c->add_option("--window", match.window, "Cost window (odd)")->capture_default_str();
  c->add_option("--aggregation", match.aggregation, "Box aggregation window, 1 disables")->capture_default_str();
  c->add_option("--temperature", match.temperature, "Softmax temperature")->capture_default_str();
  c->add_option("--attn", match.attn, "Circular attention features")->check(CLI::IsMember({"on", "off"}))
      ->capture_default_str();
  c->add_option("--attn-params", match.attn_params, "Attention parameter file");
  c->add_option("--lr-check", match.lr_check, "Left-right consistency tolerance in pixels");
  c->add_option("--out-disp", match.out_disp, "Disparity output")->capture_default_str();
  c->add_option("--out-conf", match.out_conf, "Confidence output")->capture_default_str();
  c->add_option("--depth-out", match.depth_out, "Also write Cassini depth");
  actions[c] = [&] { cmd_match(match); };

  ToDepthArgs todepth;
  c = app.add_subcommand("to-depth", "Convert disparity to Cassini depth");
  c->add_option("--disp", todepth.disp, "Disparity map")->required();
  c->add_option("--baseline", todepth.baseline, "Baseline in meters")->required();
  c->add_option("--projection", todepth.projection, "Disparity kind")
      ->check(CLI::IsMember({"cylindrical", "spherical"}))
      ->capture_default_str();
  c->add_option("--out", todepth.out, "Depth output")->required();
  c->add_option("--width", todepth.width, "Output width")->check(CLI::PositiveNumber);
  c->add_option("--height", todepth.height, "Output height")->check(CLI::PositiveNumber);
  actions[c] = [&] { cmd_to_depth(todepth); };

  ReprojectArgs reproj;
  c = app.add_subcommand("reproject-depth", "Warp a Cassini depth map into another camera frame");
  c->add_option("--depth", reproj.depth, "Cassini depth")->required();
  c->add_option("--src-pose", reproj.src_pose, "Pose JSON of the depth map's frame")->required();
  c->add_option("--ref-pose", reproj.ref_pose, "Pose JSON of the target frame")->required();
  c->add_option("--out", reproj.out, "Aligned depth")->required();
  c->add_option("--conf", reproj.conf, "Confidence to carry along");
  c->add_option("--out-conf", reproj.out_conf, "Aligned confidence");
  actions[c] = [&] { cmd_reproject_depth(reproj); };

  FuseArgs fuse;
  c = app.add_subcommand("fuse", "Confidence-weighted fusion of aligned depth maps");
  c->add_option("--inputs", fuse.inputs, "depth1,conf1,depth2,conf2,...")->required();
  c->add_option("--out", fuse.out, "Fused depth")->required();
  c->add_option("--out-conf", fuse.out_conf, "Fused confidence");
  c->add_option("--consensus", fuse.consensus, "Drop views farther than this relative amount from the median");
  c->add_flag("--fill-holes", fuse.fill, "Fill small holes whose neighbors agree");
  actions[c] = [&] { cmd_fuse(fuse); };

  EvalArgs eval;
  c = app.add_subcommand("eval", "Compare a predicted map with ground truth");
  c->add_option("--pred", eval.pred, "Prediction")->required();
  c->add_option("--gt", eval.gt, "Ground truth")->required();
  c->add_option("--mask", eval.mask, "Mask raster, nonzero pixels are evaluated");
  c->add_option("--kind", eval.kind, "Map kind")->check(CLI::IsMember({"disparity", "depth"}))->capture_default_str();
  c->add_option("--band-fov", eval.band_fov_deg, "Restrict to the central band of this width in degrees");
  c->add_option("--json", eval.json_out, "Also write the report as JSON");
  actions[c] = [&] { cmd_eval(eval); };

  AttnArgs attn;
  c = app.add_subcommand("attn", "Run circular attention on a feature tensor");
  c->add_option("--tensor", attn.tensor, "Tensor PFM, width = w * channels")->required();
  c->add_option("--params", attn.params, "Attention parameter file")->required();
  c->add_option("--out", attn.out, "Output tensor")->required();
  c->add_option("--channels", attn.channels, "Channels (default: from the parameters)");
  c->add_flag("--oracle", attn.oracle, "Compare with the direct evaluation and report the difference");
  c->add_option("--oracle-tolerance", attn.oracle_tolerance, "Largest accepted difference")->capture_default_str();
  actions[c] = [&] { cmd_attn(attn); };

  AttnInitArgs attn_init;
  c = app.add_subcommand("attn-init", "Write seeded random attention parameters");
  c->add_option("--out", attn_init.out, "Parameter file")->required();
  c->add_option("--channels", attn_init.channels)->capture_default_str();
  c->add_option("--heads", attn_init.heads)->capture_default_str();
  c->add_option("--span", attn_init.span)->capture_default_str();
  c->add_option("--seed", attn_init.seed)->capture_default_str();
  c->add_option("--scale", attn_init.scale)->capture_default_str();
  c->add_flag("--no-residual", attn_init.no_residual, "Drop the residual connection");
  actions[c] = [&] { cmd_attn_init(attn_init); };

  VizArgs viz;
  c = app.add_subcommand("viz", "Colormap a single-channel map to PNG");
  c->add_option("--in", viz.in, "Input map")->required();
  c->add_option("--out", viz.out, "PNG output")->required();
  c->add_option("--cmap", viz.cmap, "turbo or gray")->capture_default_str();
  c->add_option("--min", viz.lo, "Value mapped to the low end");
  c->add_option("--max", viz.hi, "Value mapped to the high end");
  actions[c] = [&] { cmd_viz(viz); };

  RenderArgs render;
  c = app.add_subcommand("render", "Render the analytic test scene for every rig camera");
  c->add_option("--rig", render.rig, "Rig JSON")->required();
  c->add_option("--out-dir", render.out_dir, "Output directory")->required();
  c->add_option("--seed", render.seed, "Texture seed")->capture_default_str();
  c->add_option("--supersample", render.supersample)->check(CLI::PositiveNumber)->capture_default_str();
  c->add_option("--gt-width", render.gt_width)->check(CLI::PositiveNumber)->capture_default_str();
  c->add_option("--gt-height", render.gt_height)->check(CLI::PositiveNumber)->capture_default_str();
  actions[c] = [&] { cmd_render(render); };

  PipelineArgs pipeline;
  c = app.add_subcommand("pipeline", "Rectify, match, convert, align and fuse every camera pair");
  c->add_option("--rig", pipeline.rig, "Rig JSON with images")->required();
  c->add_option("--out", pipeline.out, "Fused Cassini depth")->required();
  c->add_option("--out-conf", pipeline.out_conf, "Fused confidence");
  c->add_option("--erp-out", pipeline.erp_out, "Also write the fused depth as ERP");
  c->add_option("--gt", pipeline.gt, "Ground-truth Cassini depth for metrics");
  c->add_option("--band-fov", pipeline.band_fov_deg, "Evaluate only the central band, degrees");
  c->add_option("--json", pipeline.json_out, "Write metrics as JSON");
  c->add_option("--width", pipeline.width, "Cylinder width")->check(CLI::PositiveNumber)->capture_default_str();
  c->add_option("--height", pipeline.height, "Cylinder height")->check(CLI::PositiveNumber)->capture_default_str();
  c->add_option("--max-disp", pipeline.max_disp, "Disparity hypotheses")->capture_default_str();
  c->add_flag("--no-fill", pipeline.no_fill, "Skip filling small holes");
  actions[c] = [&] { cmd_pipeline(pipeline); };

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), kExitUsage);
  }

  g_workers = threads ? *threads : threads_from_env(1);
  try {
    for (auto& [sub, run] : actions)
      if (sub->parsed()) run();
    std::cout.flush();
    return 0;
  } catch (const UsageError& e) {
    return fail("usage", e.what(), kExitUsage);
  } catch (const FormatError& e) {
    return fail("format", e.what(), kExitFormat);
  } catch (const DomainError& e) {
    return fail("domain", e.what(), kExitDomain);
  } catch (const Error& e) {
    return fail("io", e.what(), kExitFormat);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), kExitOther);
  }
}
