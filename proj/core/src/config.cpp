// SPDX-License-Identifier: Apache-2.0
#include "degs/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace degs {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& v) {
  double out = 0.0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw std::invalid_argument("expected a number");
  return out;
}

long long to_int(const std::string& v) {
  long long out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw std::invalid_argument("expected an integer");
  return out;
}

std::size_t to_size(const std::string& v) {
  const long long n = to_int(v);
  if (n < 0) throw std::invalid_argument("expected a non-negative integer");
  return static_cast<std::size_t>(n);
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument("expected a boolean");
}

Vec3 to_vec3(const std::string& v) {
  Vec3 out;
  std::stringstream ss(v);
  std::string item;
  int k = 0;
  while (std::getline(ss, item, ',')) {
    if (k == 3) throw std::invalid_argument("expected three comma-separated numbers");
    out[k++] = to_double(trim(item));
  }
  if (k != 3) throw std::invalid_argument("expected three comma-separated numbers");
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

void add_densify(std::map<std::string, Setter>& m, const std::string& prefix,
                 DensifyConfig TrainingConfig::*member) {
  auto d = [member](RunConfig& c) -> DensifyConfig& { return c.training.*member; };
  m[prefix + ".enabled"] = [d](RunConfig& c, const std::string& v) { d(c).enabled = to_bool(v); };
  m[prefix + ".grad_threshold"] = [d](RunConfig& c, const std::string& v) { d(c).grad_threshold = to_double(v); };
  m[prefix + ".interval"] = [d](RunConfig& c, const std::string& v) { d(c).interval = static_cast<int>(to_int(v)); };
  m[prefix + ".start"] = [d](RunConfig& c, const std::string& v) { d(c).start_iteration = static_cast<int>(to_int(v)); };
  m[prefix + ".stop"] = [d](RunConfig& c, const std::string& v) { d(c).stop_iteration = static_cast<int>(to_int(v)); };
  m[prefix + ".percent_dense"] = [d](RunConfig& c, const std::string& v) { d(c).percent_dense = to_double(v); };
  m[prefix + ".min_opacity"] = [d](RunConfig& c, const std::string& v) { d(c).min_opacity = to_double(v); };
  m[prefix + ".max_world_size"] = [d](RunConfig& c, const std::string& v) { d(c).max_world_size = to_double(v); };
  m[prefix + ".max_primitives"] = [d](RunConfig& c, const std::string& v) { d(c).max_primitives = to_size(v); };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> m;
    m["seed"] = [](RunConfig& c, const std::string& v) { c.seed = static_cast<std::uint64_t>(to_size(v)); };
    m["dataset"] = [](RunConfig& c, const std::string& v) { c.dataset = v; };
    m["out"] = [](RunConfig& c, const std::string& v) { c.out = v; };
    m["face_splats"] = [](RunConfig& c, const std::string& v) { c.training.face_splats = to_size(v); };
    m["mouth_splats"] = [](RunConfig& c, const std::string& v) { c.training.mouth_splats = to_size(v); };
    m["embedding_dim"] = [](RunConfig& c, const std::string& v) { c.training.embedding_dim = to_size(v); };
    m["color_dim"] = [](RunConfig& c, const std::string& v) { c.training.color_dim = to_size(v); };
    m["initial_opacity"] = [](RunConfig& c, const std::string& v) { c.training.initial_opacity = to_double(v); };
    m["bounds_lo"] = [](RunConfig& c, const std::string& v) { c.training.bounds.lo = to_vec3(v); };
    m["bounds_hi"] = [](RunConfig& c, const std::string& v) { c.training.bounds.hi = to_vec3(v); };
    m["encoder.levels"] = [](RunConfig& c, const std::string& v) { c.training.encoder.levels = static_cast<int>(to_int(v)); };
    m["encoder.log2_table_size"] = [](RunConfig& c, const std::string& v) { c.training.encoder.log2_table_size = static_cast<int>(to_int(v)); };
    m["encoder.features"] = [](RunConfig& c, const std::string& v) { c.training.encoder.features = static_cast<int>(to_int(v)); };
    m["encoder.min_resolution"] = [](RunConfig& c, const std::string& v) { c.training.encoder.min_resolution = static_cast<int>(to_int(v)); };
    m["encoder.max_resolution"] = [](RunConfig& c, const std::string& v) { c.training.encoder.max_resolution = static_cast<int>(to_int(v)); };
    m["mlp.hidden_width"] = [](RunConfig& c, const std::string& v) { c.training.mlp.hidden_width = static_cast<int>(to_int(v)); };
    m["mlp.hidden_layers"] = [](RunConfig& c, const std::string& v) { c.training.mlp.hidden_layers = static_cast<int>(to_int(v)); };
    m["loss.lambda"] = [](RunConfig& c, const std::string& v) { c.training.weights.lambda = to_double(v); };
    m["loss.beta"] = [](RunConfig& c, const std::string& v) { c.training.weights.beta = to_double(v); };
    m["loss.gamma"] = [](RunConfig& c, const std::string& v) { c.training.weights.gamma = to_double(v); };
    m["lr.position"] = [](RunConfig& c, const std::string& v) { c.training.lr.position = to_double(v); };
    m["lr.position_final_ratio"] = [](RunConfig& c, const std::string& v) { c.training.lr.position_final_ratio = to_double(v); };
    m["lr.scale"] = [](RunConfig& c, const std::string& v) { c.training.lr.scale = to_double(v); };
    m["lr.rotation"] = [](RunConfig& c, const std::string& v) { c.training.lr.rotation = to_double(v); };
    m["lr.opacity"] = [](RunConfig& c, const std::string& v) { c.training.lr.opacity = to_double(v); };
    m["lr.color"] = [](RunConfig& c, const std::string& v) { c.training.lr.color = to_double(v); };
    m["lr.field"] = [](RunConfig& c, const std::string& v) { c.training.lr.field = to_double(v); };
    m["lr.field_weight_decay"] = [](RunConfig& c, const std::string& v) { c.training.lr.field_weight_decay = to_double(v); };
    m["dilation_radius"] = [](RunConfig& c, const std::string& v) { c.training.dilation_radius = static_cast<int>(to_int(v)); };
    m["iterations.static"] = [](RunConfig& c, const std::string& v) { c.training.iterations[0] = static_cast<int>(to_int(v)); };
    m["iterations.motion"] = [](RunConfig& c, const std::string& v) { c.training.iterations[1] = static_cast<int>(to_int(v)); };
    m["iterations.finetune"] = [](RunConfig& c, const std::string& v) { c.training.iterations[2] = static_cast<int>(to_int(v)); };
    m["eval_interval"] = [](RunConfig& c, const std::string& v) { c.training.eval_interval = static_cast<int>(to_int(v)); };
    m["log_wall_time"] = [](RunConfig& c, const std::string& v) { c.training.log_wall_time = to_bool(v); };
    m["motion_updates_cloud"] = [](RunConfig& c, const std::string& v) { c.training.motion_updates_cloud = to_bool(v); };
    add_densify(m, "densify", &TrainingConfig::static_densify);
    add_densify(m, "motion_densify", &TrainingConfig::motion_densify);
    return m;
  }();
  return table;
}

std::string fmt(double v) {
  char b[64];
  std::snprintf(b, sizeof b, "%.17g", v);
  return b;
}

std::string fmt3(const Vec3& v) { return fmt(v[0]) + "," + fmt(v[1]) + "," + fmt(v[2]); }

}  // namespace

RunConfig parse_run_config(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::configuration, "line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) {
      throw Error(ErrorKind::configuration, "line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    try {
      it->second(base, value);
    } catch (const std::invalid_argument& e) {
      throw Error(ErrorKind::configuration, "line " + std::to_string(line_no) + ": " + key + ": " + e.what() +
                                                ", got '" + value + "'");
    }
  }
  base.training.validate();
  return base;
}

RunConfig load_run_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::configuration, "cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_run_config(ss.str(), std::move(base));
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

std::string format_run_config(const RunConfig& c) {
  const TrainingConfig& t = c.training;
  std::ostringstream o;
  o << "seed = " << c.seed << "\n";
  if (!c.dataset.empty()) o << "dataset = " << c.dataset.string() << "\n";
  if (!c.out.empty()) o << "out = " << c.out.string() << "\n";
  o << "face_splats = " << t.face_splats << "\n"
    << "mouth_splats = " << t.mouth_splats << "\n"
    << "embedding_dim = " << t.embedding_dim << "\n"
    << "color_dim = " << t.color_dim << "\n"
    << "initial_opacity = " << fmt(t.initial_opacity) << "\n"
    << "bounds_lo = " << fmt3(t.bounds.lo) << "\n"
    << "bounds_hi = " << fmt3(t.bounds.hi) << "\n"
    << "encoder.levels = " << t.encoder.levels << "\n"
    << "encoder.log2_table_size = " << t.encoder.log2_table_size << "\n"
    << "encoder.features = " << t.encoder.features << "\n"
    << "encoder.min_resolution = " << t.encoder.min_resolution << "\n"
    << "encoder.max_resolution = " << t.encoder.max_resolution << "\n"
    << "mlp.hidden_width = " << t.mlp.hidden_width << "\n"
    << "mlp.hidden_layers = " << t.mlp.hidden_layers << "\n"
    << "loss.lambda = " << fmt(t.weights.lambda) << "\n"
    << "loss.beta = " << fmt(t.weights.beta) << "\n"
    << "loss.gamma = " << fmt(t.weights.gamma) << "\n"
    << "lr.position = " << fmt(t.lr.position) << "\n"
    << "lr.position_final_ratio = " << fmt(t.lr.position_final_ratio) << "\n"
    << "lr.scale = " << fmt(t.lr.scale) << "\n"
    << "lr.rotation = " << fmt(t.lr.rotation) << "\n"
    << "lr.opacity = " << fmt(t.lr.opacity) << "\n"
    << "lr.color = " << fmt(t.lr.color) << "\n"
    << "lr.field = " << fmt(t.lr.field) << "\n"
    << "lr.field_weight_decay = " << fmt(t.lr.field_weight_decay) << "\n"
    << "dilation_radius = " << t.dilation_radius << "\n"
    << "iterations.static = " << t.iterations[0] << "\n"
    << "iterations.motion = " << t.iterations[1] << "\n"
    << "iterations.finetune = " << t.iterations[2] << "\n"
    << "eval_interval = " << t.eval_interval << "\n"
    << "log_wall_time = " << (t.log_wall_time ? "true" : "false") << "\n"
    << "motion_updates_cloud = " << (t.motion_updates_cloud ? "true" : "false") << "\n";
  for (const auto& [prefix, d] : {std::pair<const char*, const DensifyConfig*>{"densify", &t.static_densify},
                                  {"motion_densify", &t.motion_densify}}) {
    o << prefix << ".enabled = " << (d->enabled ? "true" : "false") << "\n"
      << prefix << ".grad_threshold = " << fmt(d->grad_threshold) << "\n"
      << prefix << ".interval = " << d->interval << "\n"
      << prefix << ".start = " << d->start_iteration << "\n"
      << prefix << ".stop = " << d->stop_iteration << "\n"
      << prefix << ".percent_dense = " << fmt(d->percent_dense) << "\n"
      << prefix << ".min_opacity = " << fmt(d->min_opacity) << "\n"
      << prefix << ".max_world_size = " << fmt(d->max_world_size) << "\n"
      << prefix << ".max_primitives = " << d->max_primitives << "\n";
  }
  return o.str();
}

}  // namespace degs
