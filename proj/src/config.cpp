#include "roomgen/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>

namespace roomgen {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigInvalid("config key '" + key + "' expects a number, got '" + value + "'");
  }
}

int64_t parse_int(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    const long long v = std::stoll(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigInvalid("config key '" + key + "' expects an integer, got '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true") return true;
  if (value == "false") return false;
  throw ConfigInvalid("config key '" + key + "' expects true or false, got '" + value + "'");
}

std::vector<double> parse_doubles(const std::string& key, const std::string& value, size_t n) {
  std::vector<double> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(key, item));
  if (out.size() != n)
    throw ConfigInvalid("config key '" + key + "' expects " + std::to_string(n) + " comma-separated numbers");
  return out;
}

std::string join_doubles(std::initializer_list<double> vs) {
  std::string s;
  for (double v : vs) {
    if (!s.empty()) s += ',';
    s += fmt_double(v);
  }
  return s;
}

struct Handler {
  std::function<void(PipelineConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

Handler dbl(double PipelineConfig::* member) {
  return {[member](PipelineConfig& c, const std::string& k, const std::string& v) { c.*member = parse_double(k, v); },
          [member](const PipelineConfig& c) { return fmt_double(c.*member); }};
}

Handler integer(int PipelineConfig::* member) {
  return {[member](PipelineConfig& c, const std::string& k, const std::string& v) {
            c.*member = static_cast<int>(parse_int(k, v));
          },
          [member](const PipelineConfig& c) { return std::to_string(c.*member); }};
}

Handler u64(uint64_t PipelineConfig::* member) {
  return {[member](PipelineConfig& c, const std::string& k, const std::string& v) {
            c.*member = static_cast<uint64_t>(parse_int(k, v));
          },
          [member](const PipelineConfig& c) { return std::to_string(c.*member); }};
}

Handler text(std::string PipelineConfig::* member) {
  return {[member](PipelineConfig& c, const std::string&, const std::string& v) { c.*member = v; },
          [member](const PipelineConfig& c) { return c.*member; }};
}

Handler stage_dbl(StageConfig PipelineConfig::* stage, double StageConfig::* member) {
  return {[stage, member](PipelineConfig& c, const std::string& k, const std::string& v) {
            c.*stage.*member = parse_double(k, v);
          },
          [stage, member](const PipelineConfig& c) { return fmt_double(c.*stage.*member); }};
}

Handler stage_deg(StageConfig PipelineConfig::* stage, double StageConfig::* member) {
  constexpr double kDeg = std::numbers::pi / 180.0;
  return {[stage, member](PipelineConfig& c, const std::string& k, const std::string& v) {
            c.*stage.*member = parse_double(k, v) * kDeg;
          },
          [stage, member](const PipelineConfig& c) { return fmt_double(c.*stage.*member / kDeg); }};
}

Handler stage_int(StageConfig PipelineConfig::* stage, int StageConfig::* member) {
  return {[stage, member](PipelineConfig& c, const std::string& k, const std::string& v) {
            c.*stage.*member = static_cast<int>(parse_int(k, v));
          },
          [stage, member](const PipelineConfig& c) { return std::to_string(c.*stage.*member); }};
}

Handler stage_pair(StageConfig PipelineConfig::* stage, std::pair<double, double> StageConfig::* member) {
  return {[stage, member](PipelineConfig& c, const std::string& k, const std::string& v) {
            const auto xs = parse_doubles(k, v, 2);
            c.*stage.*member = {xs[0], xs[1]};
          },
          [stage, member](const PipelineConfig& c) {
            const auto& p = c.*stage.*member;
            return join_doubles({p.first, p.second});
          }};
}

Handler stage_anneal(StageConfig PipelineConfig::* stage) {
  return {[stage](PipelineConfig& c, const std::string& k, const std::string& v) {
            if (v == "linear")
              (c.*stage).anneal_mode = AnnealMode::kLinear;
            else if (v == "step")
              (c.*stage).anneal_mode = AnnealMode::kStep;
            else
              throw ConfigInvalid("config key '" + k + "' expects linear or step, got '" + v + "'");
          },
          [stage](const PipelineConfig& c) {
            return (c.*stage).anneal_mode == AnnealMode::kLinear ? "linear" : "step";
          }};
}

const std::map<std::string, Handler>& registry() {
  static const std::map<std::string, Handler> reg = [] {
    std::map<std::string, Handler> r;
    r["seed"] = u64(&PipelineConfig::seed);

    r["room.half_extent"] = {[](PipelineConfig& c, const std::string& k, const std::string& v) {
                               c.room.half_extent = parse_double(k, v);
                             },
                             [](const PipelineConfig& c) { return fmt_double(c.room.half_extent); }};
    r["room.pattern_amplitude"] = {[](PipelineConfig& c, const std::string& k, const std::string& v) {
                                     c.room.pattern_amplitude = parse_double(k, v);
                                   },
                                   [](const PipelineConfig& c) { return fmt_double(c.room.pattern_amplitude); }};
    r["room.pattern_frequency"] = {[](PipelineConfig& c, const std::string& k, const std::string& v) {
                                     c.room.pattern_frequency = parse_double(k, v);
                                   },
                                   [](const PipelineConfig& c) { return fmt_double(c.room.pattern_frequency); }};
    r["room.analytic"] = {[](PipelineConfig& c, const std::string& k, const std::string& v) {
                            c.room.analytic = parse_bool(k, v);
                          },
                          [](const PipelineConfig& c) { return c.room.analytic ? "true" : "false"; }};
    r["room.wall_colors"] = {[](PipelineConfig& c, const std::string& k, const std::string& v) {
                               const auto xs = parse_doubles(k, v, 18);
                               for (int w = 0; w < 6; ++w)
                                 for (int ch = 0; ch < 3; ++ch) c.room.wall_colors[w][ch] = xs[w * 3 + ch];
                             },
                             [](const PipelineConfig& c) {
                               std::string s;
                               for (int w = 0; w < 6; ++w)
                                 for (int ch = 0; ch < 3; ++ch) {
                                   if (!s.empty()) s += ',';
                                   s += fmt_double(c.room.wall_colors[w][ch]);
                                 }
                               return s;
                             }};

    r["camera.half_fov_deg"] = dbl(&PipelineConfig::camera_half_fov_deg);

    r["field.levels"] = integer(&PipelineConfig::field_levels);
    r["field.table_size"] = integer(&PipelineConfig::field_table_size);
    r["field.feature_dim"] = integer(&PipelineConfig::field_feature_dim);
    r["field.base_resolution"] = integer(&PipelineConfig::field_base_resolution);
    r["field.max_resolution"] = integer(&PipelineConfig::field_max_resolution);
    r["field.hidden_units"] = integer(&PipelineConfig::field_hidden_units);
    r["field.bounds_margin"] = dbl(&PipelineConfig::field_bounds_margin);
    r["field.density_bias_init"] = dbl(&PipelineConfig::field_density_bias_init);

    r["render.n_samples"] = integer(&PipelineConfig::n_samples);
    r["render.near"] = dbl(&PipelineConfig::near);
    r["render.far"] = dbl(&PipelineConfig::far);
    r["render.train_resolution"] = integer(&PipelineConfig::train_resolution);
    r["render.export_resolution"] = integer(&PipelineConfig::export_resolution);
    r["render.background"] = {[](PipelineConfig& c, const std::string& k, const std::string& v) {
                                const auto xs = parse_doubles(k, v, 3);
                                c.background = {xs[0], xs[1], xs[2]};
                              },
                              [](const PipelineConfig& c) {
                                return join_doubles({c.background[0], c.background[1], c.background[2]});
                              }};
    r["render.random_train_background"] = {[](PipelineConfig& c, const std::string& k, const std::string& v) {
                                              c.random_train_background = parse_bool(k, v);
                                            },
                                            [](const PipelineConfig& c) {
                                              return c.random_train_background ? "true" : "false";
                                            }};
    r["render.termination_eps"] = dbl(&PipelineConfig::termination_eps);

    const auto add_stage = [&r](const std::string& prefix, StageConfig PipelineConfig::* stage, bool radius,
                                bool pitch) {
      r[prefix + ".iterations"] = stage_int(stage, &StageConfig::iterations);
      r[prefix + ".views"] = stage_int(stage, &StageConfig::views_per_iteration);
      if (radius) {
        r[prefix + ".position_radius"] = stage_dbl(stage, &StageConfig::position_radius);
        r[prefix + ".min_position_radius"] = stage_dbl(stage, &StageConfig::min_position_radius);
      }
      if (pitch) r[prefix + ".pitch_range_deg"] = stage_deg(stage, &StageConfig::pitch_range);
      r[prefix + ".t_max"] = stage_pair(stage, &StageConfig::t_max_schedule);
      r[prefix + ".t_min"] = stage_pair(stage, &StageConfig::t_min_schedule);
      r[prefix + ".anneal"] = stage_anneal(stage);
      r[prefix + ".anneal_split"] = stage_dbl(stage, &StageConfig::anneal_split);
    };
    add_stage("stage1", &PipelineConfig::stage1, false, true);
    add_stage("stage2", &PipelineConfig::stage2, true, false);
    add_stage("stage3", &PipelineConfig::stage3, true, true);

    r["optimizer.lr_grid"] = {[](PipelineConfig& c, const std::string& k, const std::string& v) {
                                c.adam.lr_grid = parse_double(k, v);
                              },
                              [](const PipelineConfig& c) { return fmt_double(c.adam.lr_grid); }};
    r["optimizer.lr_decoder"] = {[](PipelineConfig& c, const std::string& k, const std::string& v) {
                                   c.adam.lr_decoder = parse_double(k, v);
                                 },
                                 [](const PipelineConfig& c) { return fmt_double(c.adam.lr_decoder); }};
    r["optimizer.beta1"] = {[](PipelineConfig& c, const std::string& k, const std::string& v) {
                              c.adam.beta1 = parse_double(k, v);
                            },
                            [](const PipelineConfig& c) { return fmt_double(c.adam.beta1); }};
    r["optimizer.beta2"] = {[](PipelineConfig& c, const std::string& k, const std::string& v) {
                              c.adam.beta2 = parse_double(k, v);
                            },
                            [](const PipelineConfig& c) { return fmt_double(c.adam.beta2); }};
    r["optimizer.eps"] = {[](PipelineConfig& c, const std::string& k, const std::string& v) {
                            c.adam.eps = parse_double(k, v);
                          },
                          [](const PipelineConfig& c) { return fmt_double(c.adam.eps); }};
    r["optimizer.omega"] = {[](PipelineConfig& c, const std::string& k, const std::string& v) {
                              if (v == "one")
                                c.omega_mode = OmegaMode::kConstantOne;
                              else if (v == "sigma_sq")
                                c.omega_mode = OmegaMode::kSigmaSquared;
                              else
                                throw ConfigInvalid("config key '" + k + "' expects one or sigma_sq, got '" + v + "'");
                            },
                            [](const PipelineConfig& c) {
                              return c.omega_mode == OmegaMode::kConstantOne ? "one" : "sigma_sq";
                            }};

    r["prior.kind"] = {[](PipelineConfig& c, const std::string& k, const std::string& v) {
                         if (v == "oracle")
                           c.provider_kind = ProviderKind::kOracle;
                         else if (v == "caa")
                           c.provider_kind = ProviderKind::kCaa;
                         else if (v == "composite")
                           c.provider_kind = ProviderKind::kComposite;
                         else
                           throw ConfigInvalid("config key '" + k + "' expects oracle, caa or composite, got '" + v +
                                               "'");
                       },
                       [](const PipelineConfig& c) {
                         switch (c.provider_kind) {
                           case ProviderKind::kOracle: return "oracle";
                           case ProviderKind::kCaa: return "caa";
                           case ProviderKind::kComposite: return "composite";
                         }
                         return "oracle";
                       }};
    r["prior.oracle_weight"] = dbl(&PipelineConfig::oracle_weight);
    r["prior.caa_weight"] = dbl(&PipelineConfig::caa_weight);
    r["prior.caa_grid"] = integer(&PipelineConfig::caa_grid);
    r["prior.caa_radius"] = integer(&PipelineConfig::caa_radius);
    r["prior.guidance_scale"] = dbl(&PipelineConfig::guidance_scale);
    r["prior.prompt"] = text(&PipelineConfig::prompt);
    r["prior.negative_prompt"] = text(&PipelineConfig::negative_prompt);

    r["pose_transform.margin"] = dbl(&PipelineConfig::pt_margin);
    r["pose_transform.depth_resolution"] = integer(&PipelineConfig::pt_depth_resolution);
    r["pose_transform.opacity_threshold"] = dbl(&PipelineConfig::pt_opacity_threshold);
    r["pose_transform.min_opaque_fraction"] = dbl(&PipelineConfig::pt_min_opaque_fraction);

    r["eval.seed"] = u64(&PipelineConfig::eval_seed);
    r["eval.n_poses"] = integer(&PipelineConfig::eval_n_poses);
    r["eval.n_pairs"] = integer(&PipelineConfig::eval_n_pairs);
    r["eval.resolution"] = integer(&PipelineConfig::eval_resolution);
    r["eval.pair_max_yaw_gap_deg"] = dbl(&PipelineConfig::eval_pair_max_yaw_gap_deg);

    r["export.checkpoint_every"] = integer(&PipelineConfig::checkpoint_every);
    r["export.turntable_frames"] = integer(&PipelineConfig::turntable_frames);

    r["run.stages"] = text(&PipelineConfig::run_stages);
    r["run.pose_transform"] = {[](PipelineConfig& c, const std::string& k, const std::string& v) {
                                 c.run_pose_transform = parse_bool(k, v);
                               },
                               [](const PipelineConfig& c) { return c.run_pose_transform ? "true" : "false"; }};
    return r;
  }();
  return reg;
}

std::string trim(const std::string& s) {
  const size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

double PipelineConfig::resolved_far() const {
  if (far > 0.0) return far;
  const double rmax = std::max(stage2.position_radius, stage3.position_radius);
  return std::sqrt(3.0) * (room.half_extent + rmax) + 0.05;
}

Intrinsics PipelineConfig::train_intrinsics() const {
  return {camera_half_fov_deg * std::numbers::pi / 180.0, train_resolution, train_resolution};
}

Intrinsics PipelineConfig::export_intrinsics() const {
  return {camera_half_fov_deg * std::numbers::pi / 180.0, export_resolution, export_resolution};
}

FieldConfig PipelineConfig::field_config() const {
  FieldConfig fc;
  fc.levels = field_levels;
  fc.table_size = field_table_size;
  fc.feature_dim = field_feature_dim;
  fc.base_resolution = field_base_resolution;
  fc.max_resolution = field_max_resolution;
  fc.hidden_units = field_hidden_units;
  const double b = room.half_extent + field_bounds_margin;
  fc.bounds_min = Vector3d(-b, -b, -b);
  fc.bounds_max = Vector3d(b, b, b);
  fc.density_bias_init = field_density_bias_init;
  return fc;
}

const StageConfig& PipelineConfig::stage(int id) const {
  switch (id) {
    case 1: return stage1;
    case 2: return stage2;
    case 3: return stage3;
  }
  throw Error("stage id out of range");
}

PipelineConfig parse_config_text(const std::string& text) {
  PipelineConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigInvalid("config line " + std::to_string(line_no) + " is not key=value: '" + stripped + "'");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    const auto it = registry().find(key);
    if (it == registry().end()) throw ConfigInvalid("unknown config key: '" + key + "'");
    it->second.set(cfg, key, value);
  }
  return cfg;
}

PipelineConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigInvalid("cannot open config file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string serialize_config(const PipelineConfig& cfg) {
  std::string out;
  for (const auto& [key, handler] : registry()) {
    out += key;
    out += '=';
    out += handler.get(cfg);
    out += '\n';
  }
  return out;
}

void validate_config(const PipelineConfig& cfg) {
  if (!(cfg.room.half_extent > 0.0)) throw ConfigInvalid("room.half_extent must be positive");
  if (cfg.room.pattern_amplitude < 0.0 || cfg.room.pattern_amplitude > 1.0)
    throw ConfigInvalid("room.pattern_amplitude must lie in [0, 1]");
  if (!(cfg.camera_half_fov_deg > 0.0 && cfg.camera_half_fov_deg < 90.0))
    throw ConfigInvalid("camera.half_fov_deg must lie strictly between 0 and 90");

  if (cfg.n_samples < 2) throw ConfigInvalid("render.n_samples must be at least 2");
  if (!(cfg.near > 0.0)) throw ConfigInvalid("render.near must be positive");
  if (!(cfg.near < cfg.resolved_far())) throw ConfigInvalid("render.near must be smaller than render.far");
  if (cfg.train_resolution < 4 || cfg.export_resolution < 4)
    throw ConfigInvalid("render resolutions must be at least 4");
  for (double b : cfg.background)
    if (b < 0.0 || b > 1.0) throw ConfigInvalid("render.background components must lie in [0, 1]");

  const auto check_stage = [&](const StageConfig& s, const std::string& name, bool has_radius) {
    if (s.iterations < 0) throw ConfigInvalid(name + ".iterations must be non-negative");
    if (s.views_per_iteration < 1) throw ConfigInvalid(name + ".views must be at least 1");
    if (s.anneal_split < 0.0 || s.anneal_split > 1.0)
      throw ConfigInvalid(name + ".anneal_split must lie in [0, 1]");
    const auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in01(s.t_max_schedule.first) || !in01(s.t_max_schedule.second) || !in01(s.t_min_schedule.first) ||
        !in01(s.t_min_schedule.second))
      throw ConfigInvalid(name + " timestep endpoints must lie in [0, 1]");
    if (!(s.t_min_schedule.first < s.t_max_schedule.first) || !(s.t_min_schedule.second < s.t_max_schedule.second))
      throw ConfigInvalid(name + ".t_min must stay strictly below " + name + ".t_max across the schedule");
    if (has_radius) {
      if (!(s.position_radius < cfg.room.half_extent))
        throw ConfigInvalid(name + ".position_radius must be smaller than room.half_extent");
      if (!(s.position_radius > 0.0)) throw ConfigInvalid(name + ".position_radius must be positive");
      if (!(s.min_position_radius >= 0.0 && s.min_position_radius < s.position_radius))
        throw ConfigInvalid(name + ".min_position_radius must lie in [0, position_radius)");
    }
  };
  check_stage(cfg.stage1, "stage1", false);
  check_stage(cfg.stage2, "stage2", true);
  check_stage(cfg.stage3, "stage3", true);
  if (cfg.stage3.views_per_iteration < 2) throw ConfigInvalid("stage3.views must be at least 2");

  if (cfg.run_stages.empty() || cfg.run_stages.size() > 3)
    throw ConfigInvalid("run.stages must name between one and three stages");
  char prev = '0';
  for (char c : cfg.run_stages) {
    if (c < '1' || c > '3' || c <= prev)
      throw ConfigInvalid("run.stages must be an ordered subset of 123 (stage order violation)");
    prev = c;
  }
  if (cfg.run_stages[0] != '1') throw ConfigInvalid("run.stages must start with stage 1");

  try {
    RadianceField::zeros(cfg.field_config());  // field constructor validates ranges
  } catch (const Error& e) {
    throw ConfigInvalid(std::string("field configuration rejected: ") + e.what());
  }
  if (cfg.field_bounds_margin < 0.0) throw ConfigInvalid("field.bounds_margin must be non-negative");

  if (cfg.provider_kind != ProviderKind::kOracle) {
    if (cfg.caa_grid < 2) throw ConfigInvalid("prior.caa_grid must be at least 2");
    if (cfg.caa_radius < 0) throw ConfigInvalid("prior.caa_radius must be non-negative");
    if (cfg.train_resolution % cfg.caa_grid != 0)
      throw ConfigInvalid("render.train_resolution must be a multiple of prior.caa_grid");
  }
  if ((cfg.provider_kind == ProviderKind::kOracle || cfg.provider_kind == ProviderKind::kComposite) &&
      !cfg.room.analytic)
    throw ConfigInvalid("prior.kind uses the oracle room but room.analytic is false");

  if (cfg.pt_margin < 0.0) throw ConfigInvalid("pose_transform.margin must be non-negative");
  if (cfg.pt_depth_resolution < 4) throw ConfigInvalid("pose_transform.depth_resolution must be at least 4");
  if (!(cfg.pt_opacity_threshold > 0.0 && cfg.pt_opacity_threshold <= 1.0))
    throw ConfigInvalid("pose_transform.opacity_threshold must lie in (0, 1]");
  if (!(cfg.pt_min_opaque_fraction >= 0.0 && cfg.pt_min_opaque_fraction <= 1.0))
    throw ConfigInvalid("pose_transform.min_opaque_fraction must lie in [0, 1]");

  if (cfg.eval_n_poses < 1) throw ConfigInvalid("eval.n_poses must be at least 1");
  if (cfg.eval_n_pairs < 0) throw ConfigInvalid("eval.n_pairs must be non-negative");
  if (cfg.eval_resolution < 4) throw ConfigInvalid("eval.resolution must be at least 4");
  if (cfg.checkpoint_every < 0) throw ConfigInvalid("export.checkpoint_every must be non-negative");
  if (cfg.turntable_frames < 0) throw ConfigInvalid("export.turntable_frames must be non-negative");

  for (int id = 1; id <= 3; ++id) {
    const StageConfig& s = cfg.stage(id);
    if (s.iterations == 0) continue;
    StageConfig probe = s;
    probe.stage_id = id;
    try {
      timestep_bounds(probe, 0);
      timestep_bounds(probe, std::max(0, s.iterations - 1));
    } catch (const ScheduleCrossing& e) {
      throw ConfigInvalid("stage" + std::to_string(id) + " timestep schedule crosses: " + e.what());
    }
  }
}

}  // namespace roomgen
