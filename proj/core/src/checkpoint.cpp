// SPDX-License-Identifier: Apache-2.0
#include "degs/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace degs {
namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

class Writer {
 public:
  template <typename T>
  void put(T v) {
    char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    buf_.append(b, sizeof(T));
  }
  void put_f64s(const double* v, std::size_t n) {
    buf_.append(reinterpret_cast<const char*>(v), n * sizeof(double));
  }
  void put_string(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    buf_ += s;
  }
  std::string& bytes() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(const char* data, std::size_t size) : p_(data), end_(data + size) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, p_, sizeof(T));
    p_ += sizeof(T);
    return v;
  }
  void get_f64s(double* v, std::size_t n) {
    if (n > remaining() / sizeof(double)) truncated();
    std::memcpy(v, p_, n * sizeof(double));
    p_ += n * sizeof(double);
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s(p_, n);
    p_ += n;
    return s;
  }
  void skip(std::size_t n) {
    need(n);
    p_ += n;
  }
  std::size_t remaining() const { return static_cast<std::size_t>(end_ - p_); }
  bool done() const { return p_ == end_; }

 private:
  void need(std::size_t n) const {
    if (n > remaining()) truncated();
  }
  [[noreturn]] static void truncated() {
    throw Error(ErrorKind::format, "checkpoint is truncated");
  }
  const char* p_;
  const char* end_;
};

void put_section(Writer& out, const char tag[4], const std::string& payload) {
  out.bytes().append(tag, 4);
  out.put<std::uint64_t>(payload.size());
  out.bytes() += payload;
}

void put_aabb(Writer& w, const Aabb& b) {
  w.put_f64s(b.lo.data(), 3);
  w.put_f64s(b.hi.data(), 3);
}

Aabb get_aabb(Reader& r) {
  Aabb b;
  r.get_f64s(b.lo.data(), 3);
  r.get_f64s(b.hi.data(), 3);
  return b;
}

std::string encode_meta(const TrainingState& s) {
  Writer w;
  w.put<std::uint64_t>(s.seed);
  for (int v : {s.layout.audio, s.layout.id, s.layout.shape, s.layout.expression, s.layout.eye, s.layout.jaw}) {
    w.put<std::int32_t>(v);
  }
  w.put<double>(s.scene_extent);
  for (bool c : s.completed) w.put<std::uint8_t>(c ? 1 : 0);
  for (auto n : s.iterations_done) w.put<std::uint64_t>(n);
  return w.bytes();
}

std::string encode_cloud(const PrimitiveCloud& c) {
  Writer w;
  w.put<std::uint8_t>(static_cast<std::uint8_t>(c.branch()));
  w.put<std::uint64_t>(c.size());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.embedding_dim()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.color_dim()));
  put_aabb(w, c.bounds());
  const auto& p = c.params();
  for (std::size_t i = 0; i < c.size(); ++i) {
    w.put_f64s(&p.mu[3 * i], 3);
    w.put_f64s(&p.raw_scale[3 * i], 3);
    w.put_f64s(&p.raw_rotation[4 * i], 4);
    w.put_f64s(&p.raw_opacity[i], 1);
    w.put_f64s(c.color(i), c.color_dim());
    w.put_f64s(c.embedding(i), c.embedding_dim());
  }
  return w.bytes();
}

std::string encode_field(Branch b, const DeformField& f) {
  Writer w;
  w.put<std::uint8_t>(static_cast<std::uint8_t>(b));
  const auto& e = f.config().encoder;
  for (int v : {e.levels, e.log2_table_size, e.features, e.min_resolution, e.max_resolution}) {
    w.put<std::int32_t>(v);
  }
  put_aabb(w, f.encoder().bounds());
  const auto& l = f.layout();
  for (int v : {l.embedding_dim, l.audio_dim, l.expression_dim, f.config().mlp.hidden_width,
                f.config().mlp.hidden_layers}) {
    w.put<std::int32_t>(v);
  }
  const auto& t = f.encoder().tables();
  w.put<std::uint64_t>(t.size());
  w.put_f64s(t.data(), t.size());
  const auto& layers = f.mlp().layers();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(layers.size()));
  for (const auto& layer : layers) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(layer.weight.rows()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(layer.weight.cols()));
    w.put_f64s(layer.weight.data(), static_cast<std::size_t>(layer.weight.size()));
    w.put_f64s(layer.bias.data(), static_cast<std::size_t>(layer.bias.size()));
  }
  return w.bytes();
}

std::string encode_optimizer(Branch b, const AdamOptimizer& opt) {
  Writer w;
  w.put<std::uint8_t>(static_cast<std::uint8_t>(b));
  w.put<std::uint64_t>(opt.skipped_steps());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(opt.groups().size()));
  for (const auto& [name, g] : opt.groups()) {
    w.put_string(name);
    w.put<double>(g.config.learning_rate);
    w.put<double>(g.config.epsilon);
    w.put<double>(g.config.weight_decay);
    w.put<std::uint64_t>(g.step);
    w.put<std::uint64_t>(g.m.size());
    w.put_f64s(g.m.data(), g.m.size());
    w.put_f64s(g.v.data(), g.v.size());
  }
  return w.bytes();
}

Branch get_branch(Reader& r) {
  const auto b = r.get<std::uint8_t>();
  if (b > 1) throw Error(ErrorKind::format, "checkpoint names unknown branch " + std::to_string(b));
  return static_cast<Branch>(b);
}

PrimitiveCloud decode_cloud(Reader& r, Branch& branch) {
  branch = get_branch(r);
  const auto n = r.get<std::uint64_t>();
  const auto d = r.get<std::uint32_t>();
  const auto z = r.get<std::uint32_t>();
  const Aabb bounds = get_aabb(r);
  if (z != 3 && z != 12) throw Error(ErrorKind::format, "checkpoint color width " + std::to_string(z) + " is invalid");
  const std::size_t row = 11 + z + d;
  if (n > r.remaining() / (row * sizeof(double))) throw Error(ErrorKind::format, "checkpoint is truncated");
  PrimitiveCloud cloud(branch, bounds, d, z);
  auto& p = cloud.params();
  p.resize(n, z, d);
  for (std::size_t i = 0; i < n; ++i) {
    r.get_f64s(&p.mu[3 * i], 3);
    r.get_f64s(&p.raw_scale[3 * i], 3);
    r.get_f64s(&p.raw_rotation[4 * i], 4);
    r.get_f64s(&p.raw_opacity[i], 1);
    r.get_f64s(&p.color[z * i], z);
    r.get_f64s(p.embedding.data() + d * i, d);
  }
  return cloud;
}

DeformField decode_field(Reader& r, Branch& branch) {
  branch = get_branch(r);
  FieldConfig fc;
  fc.encoder.levels = r.get<std::int32_t>();
  fc.encoder.log2_table_size = r.get<std::int32_t>();
  fc.encoder.features = r.get<std::int32_t>();
  fc.encoder.min_resolution = r.get<std::int32_t>();
  fc.encoder.max_resolution = r.get<std::int32_t>();
  const Aabb bounds = get_aabb(r);
  fc.layout.embedding_dim = r.get<std::int32_t>();
  fc.layout.audio_dim = r.get<std::int32_t>();
  fc.layout.expression_dim = r.get<std::int32_t>();
  fc.mlp.hidden_width = r.get<std::int32_t>();
  fc.mlp.hidden_layers = r.get<std::int32_t>();
  try {
    fc.encoder.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::format, std::string("checkpoint encoder settings: ") + e.what());
  }
  if (fc.mlp.hidden_width < 1 || fc.mlp.hidden_layers < 0 || fc.mlp.hidden_width > 1 << 16 ||
      fc.mlp.hidden_layers > 64 || fc.layout.embedding_dim < 0 || fc.layout.audio_dim < 0 ||
      fc.layout.expression_dim < 0) {
    throw Error(ErrorKind::format, "checkpoint field layout is invalid");
  }
  DeformField field(fc, bounds, 0);
  auto& tables = field.encoder().tables();
  const auto tn = r.get<std::uint64_t>();
  if (tn != tables.size()) throw Error(ErrorKind::format, "checkpoint encoder table size mismatch");
  r.get_f64s(tables.data(), tables.size());
  auto& layers = field.mlp().layers();
  const auto ln = r.get<std::uint32_t>();
  if (ln != layers.size()) throw Error(ErrorKind::format, "checkpoint MLP depth mismatch");
  for (auto& layer : layers) {
    const auto rows = r.get<std::uint32_t>();
    const auto cols = r.get<std::uint32_t>();
    if (rows != layer.weight.rows() || cols != layer.weight.cols()) {
      throw Error(ErrorKind::format, "checkpoint MLP layer shape mismatch");
    }
    r.get_f64s(layer.weight.data(), static_cast<std::size_t>(layer.weight.size()));
    r.get_f64s(layer.bias.data(), static_cast<std::size_t>(layer.bias.size()));
  }
  return field;
}

AdamOptimizer decode_optimizer(Reader& r, Branch& branch) {
  branch = get_branch(r);
  AdamOptimizer opt;
  opt.set_skipped_steps(r.get<std::uint64_t>());
  const auto groups = r.get<std::uint32_t>();
  for (std::uint32_t k = 0; k < groups; ++k) {
    const std::string name = r.get_string();
    AdamGroup g;
    g.config.learning_rate = r.get<double>();
    g.config.epsilon = r.get<double>();
    g.config.weight_decay = r.get<double>();
    g.step = r.get<std::uint64_t>();
    const auto n = r.get<std::uint64_t>();
    if (n > r.remaining() / (2 * sizeof(double))) throw Error(ErrorKind::format, "checkpoint is truncated");
    g.m.resize(n);
    g.v.resize(n);
    r.get_f64s(g.m.data(), n);
    r.get_f64s(g.v.data(), n);
    opt.groups()[name] = std::move(g);
  }
  return opt;
}

}  // namespace

std::string encode_checkpoint(const TrainingState& s) {
  Writer out;
  out.bytes() = "DEGS";
  out.put<std::uint32_t>(kCheckpointVersion);
  out.put<std::uint32_t>(7);
  put_section(out, "META", encode_meta(s));
  for (Branch b : {Branch::face, Branch::mouth}) {
    const BranchState& bs = s.branch(b);
    put_section(out, "CLUD", encode_cloud(bs.cloud));
    put_section(out, "FELD", encode_field(b, bs.field));
    put_section(out, "OPTM", encode_optimizer(b, bs.optimizer));
  }
  return out.bytes();
}

TrainingState decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 4 || bytes.compare(0, 4, "DEGS") != 0) {
    throw Error(ErrorKind::format, "not a DEGS checkpoint (bad magic)");
  }
  Reader r(bytes.data() + 4, bytes.size() - 4);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw Error(ErrorKind::format, "checkpoint version " + std::to_string(version) +
                                       " is not supported (expected " +
                                       std::to_string(kCheckpointVersion) + ")");
  }
  const auto sections = r.get<std::uint32_t>();
  TrainingState s;
  std::array<bool, 2> have_cloud{}, have_field{}, have_opt{};
  bool have_meta = false;
  for (std::uint32_t k = 0; k < sections; ++k) {
    const std::string tag{r.get<char>(), r.get<char>(), r.get<char>(), r.get<char>()};
    const auto len = r.get<std::uint64_t>();
    if (len > r.remaining()) throw Error(ErrorKind::format, "checkpoint is truncated");
    const char* start = bytes.data() + (bytes.size() - r.remaining());
    Reader sec(start, len);
    Branch b = Branch::face;
    if (tag == "META") {
      s.seed = sec.get<std::uint64_t>();
      s.layout.audio = sec.get<std::int32_t>();
      s.layout.id = sec.get<std::int32_t>();
      s.layout.shape = sec.get<std::int32_t>();
      s.layout.expression = sec.get<std::int32_t>();
      s.layout.eye = sec.get<std::int32_t>();
      s.layout.jaw = sec.get<std::int32_t>();
      s.scene_extent = sec.get<double>();
      for (auto& c : s.completed) c = sec.get<std::uint8_t>() != 0;
      for (auto& n : s.iterations_done) n = sec.get<std::uint64_t>();
      have_meta = true;
    } else if (tag == "CLUD") {
      PrimitiveCloud c = decode_cloud(sec, b);
      s.branch(b).cloud = std::move(c);
      have_cloud[static_cast<std::size_t>(b)] = true;
    } else if (tag == "FELD") {
      DeformField f = decode_field(sec, b);
      s.branch(b).field = std::move(f);
      have_field[static_cast<std::size_t>(b)] = true;
    } else if (tag == "OPTM") {
      AdamOptimizer o = decode_optimizer(sec, b);
      s.branch(b).optimizer = std::move(o);
      have_opt[static_cast<std::size_t>(b)] = true;
    }
    if (tag == "META" || tag == "CLUD" || tag == "FELD" || tag == "OPTM") {
      if (!sec.done()) throw Error(ErrorKind::format, "checkpoint section " + tag + " has trailing bytes");
    }
    r.skip(len);  // unknown tags are ignored
  }
  if (!r.done()) throw Error(ErrorKind::format, "checkpoint has trailing bytes");
  if (!have_meta || !have_cloud[0] || !have_cloud[1] || !have_field[0] || !have_field[1] ||
      !have_opt[0] || !have_opt[1]) {
    throw Error(ErrorKind::format, "checkpoint is missing required sections");
  }
  for (Branch b : {Branch::face, Branch::mouth}) {
    const BranchState& bs = s.branch(b);
    const int d = bs.field.layout().embedding_dim;
    if (static_cast<int>(bs.cloud.embedding_dim()) != d) {
      throw Error(ErrorKind::dimension_mismatch,
                  std::string(to_string(b)) + " cloud has d=" + std::to_string(bs.cloud.embedding_dim()) +
                      " but its field expects d=" + std::to_string(d));
    }
  }
  return s;
}

void save_checkpoint(const TrainingState& state, const fs::path& path) {
  const std::string bytes = encode_checkpoint(state);
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw Error(ErrorKind::io, "failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

TrainingState load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

void check_compatible(const TrainingState& state, const TrainingConfig& config) {
  for (Branch b : {Branch::face, Branch::mouth}) {
    const auto& c = state.branch(b).cloud;
    if (c.embedding_dim() != config.embedding_dim) {
      throw Error(ErrorKind::dimension_mismatch,
                  "checkpoint " + std::string(to_string(b)) + " cloud has d=" + std::to_string(c.embedding_dim()) +
                      ", config requires d=" + std::to_string(config.embedding_dim));
    }
    if (c.color_dim() != config.color_dim) {
      throw Error(ErrorKind::dimension_mismatch,
                  "checkpoint " + std::string(to_string(b)) + " cloud has Z=" + std::to_string(c.color_dim()) +
                      ", config requires Z=" + std::to_string(config.color_dim));
    }
  }
}

std::string describe_checkpoint(const TrainingState& s) {
  std::ostringstream o;
  o << "format: DEGS version " << kCheckpointVersion << "\n";
  o << "seed: " << s.seed << "\n";
  o << "layout: audio=" << s.layout.audio << " id=" << s.layout.id << " shape=" << s.layout.shape
    << " expression=" << s.layout.expression << " eye=" << s.layout.eye << " jaw=" << s.layout.jaw << "\n";
  o << "scene_extent: " << s.scene_extent << "\n";
  for (std::size_t k = 0; k < 3; ++k) {
    o << "stage " << to_string(static_cast<Stage>(k)) << ": "
      << (s.completed[k] ? "completed" : "pending") << ", iterations=" << s.iterations_done[k] << "\n";
  }
  for (Branch b : {Branch::face, Branch::mouth}) {
    const BranchState& bs = s.branch(b);
    const auto& e = bs.field.config().encoder;
    const auto& l = bs.field.layout();
    o << to_string(b) << ".cloud: count=" << bs.cloud.size() << " d=" << bs.cloud.embedding_dim()
      << " Z=" << bs.cloud.color_dim() << "\n";
    o << to_string(b) << ".encoder: levels=" << e.levels << " log2_table_size=" << e.log2_table_size
      << " features=" << e.features << " min_res=" << e.min_resolution << " max_res=" << e.max_resolution << "\n";
    o << to_string(b) << ".mlp: input=" << bs.field.mlp().input_width() << " hidden="
      << bs.field.config().mlp.hidden_width << "x" << bs.field.config().mlp.hidden_layers
      << " output=" << bs.field.mlp().output_width() << " (embedding=" << l.embedding_dim
      << " audio=" << l.audio_dim << " expression=" << l.expression_dim << ")\n";
    o << to_string(b) << ".optimizer: groups=" << bs.optimizer.groups().size()
      << " skipped_steps=" << bs.optimizer.skipped_steps() << "\n";
    for (const auto& [name, g] : bs.optimizer.groups()) {
      o << "  " << name << ": size=" << g.m.size() << " step=" << g.step << "\n";
    }
  }
  return o.str();
}

}  // namespace degs
