// SPDX-License-Identifier: Apache-2.0
#include "degs/conditioning.hpp"

#include "degs/image_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace degs {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string frame_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06d.png", i);
  return buf;
}

constexpr const char* kMaskKinds[4] = {"face", "mouth", "hair", "jaw"};

Mask& mask_slot(FrameMasks& m, int k) {
  switch (k) {
    case 0: return m.face;
    case 1: return m.mouth;
    case 2: return m.hair;
    default: return m.jaw;
  }
}

const Mask& mask_slot(const FrameMasks& m, int k) {
  return mask_slot(const_cast<FrameMasks&>(m), k);
}

json layout_to_json(const ConditioningLayout& l) {
  return {{"audio", l.audio}, {"id", l.id},   {"shape", l.shape},
          {"expression", l.expression}, {"eye", l.eye}, {"jaw", l.jaw}};
}

json camera_to_json(const Camera& c) {
  json rot = json::array(), trans = json::array();
  for (int r = 0; r < 3; ++r) {
    for (int k = 0; k < 3; ++k) rot.push_back(c.rotation(r, k));
    trans.push_back(c.translation[r]);
  }
  return {{"fx", c.fx},         {"fy", c.fy},       {"cx", c.cx},   {"cy", c.cy},
          {"width", c.width},   {"height", c.height}, {"near", c.near}, {"far", c.far},
          {"rotation", rot},    {"translation", trans}};
}

Camera camera_from_json(const json& j) {
  Camera c;
  c.fx = j.at("fx").get<double>();
  c.fy = j.at("fy").get<double>();
  c.cx = j.at("cx").get<double>();
  c.cy = j.at("cy").get<double>();
  c.width = j.at("width").get<int>();
  c.height = j.at("height").get<int>();
  c.near = j.at("near").get<double>();
  c.far = j.at("far").get<double>();
  const auto& rot = j.at("rotation");
  const auto& trans = j.at("translation");
  if (rot.size() != 9 || trans.size() != 3) throw std::runtime_error("camera pose arrays have wrong length");
  for (int r = 0; r < 3; ++r) {
    for (int k = 0; k < 3; ++k) c.rotation(r, k) = rot.at(3 * r + k).get<double>();
    c.translation[r] = trans.at(r).get<double>();
  }
  return c;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("missing " + p.filename().string());
  return json::parse(in);
}

void write_text_atomic(const fs::path& p, const std::string& text) {
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(ErrorKind::io, "cannot write " + p.string());
    out << text;
    if (!out) throw Error(ErrorKind::io, "failed writing " + p.string());
  }
  fs::rename(tmp, p);
}

}  // namespace

void ConditioningLayout::validate() const {
  if (audio < 0 || id < 0 || shape < 0 || expression < 0 || eye < 0 || jaw < 0) {
    throw Error(ErrorKind::configuration, "conditioning widths must be non-negative");
  }
}

std::vector<double> ConditioningFrame::expression_features() const {
  std::vector<double> out;
  out.reserve(psi_id.size() + psi_shape.size() + psi_expression.size() + psi_eye.size());
  out.insert(out.end(), psi_id.begin(), psi_id.end());
  out.insert(out.end(), psi_shape.begin(), psi_shape.end());
  out.insert(out.end(), psi_expression.begin(), psi_expression.end());
  out.insert(out.end(), psi_eye.begin(), psi_eye.end());
  return out;
}

void ConditioningFrame::check_layout(const ConditioningLayout& layout) const {
  auto check = [&](const std::vector<double>& v, int width, const char* name) {
    if (static_cast<int>(v.size()) != width) {
      throw Error(ErrorKind::dimension_mismatch,
                  std::string(name) + " has width " + std::to_string(v.size()) + ", layout expects " +
                      std::to_string(width));
    }
    for (double x : v) {
      if (!std::isfinite(x)) throw Error(ErrorKind::invalid_input, std::string(name) + " is not finite");
    }
  };
  check(audio, layout.audio, "audio");
  check(psi_id, layout.id, "psi_id");
  check(psi_shape, layout.shape, "psi_shape");
  check(psi_expression, layout.expression, "psi_expression");
  check(psi_eye, layout.eye, "psi_eye");
  check(psi_jaw, layout.jaw, "psi_jaw");
}

ConditioningFrame ConditioningFrame::zeros(const ConditioningLayout& layout, const Camera& camera,
                                           int frame_index) {
  ConditioningFrame f;
  f.audio.assign(static_cast<std::size_t>(layout.audio), 0.0);
  f.psi_id.assign(static_cast<std::size_t>(layout.id), 0.0);
  f.psi_shape.assign(static_cast<std::size_t>(layout.shape), 0.0);
  f.psi_expression.assign(static_cast<std::size_t>(layout.expression), 0.0);
  f.psi_eye.assign(static_cast<std::size_t>(layout.eye), 0.0);
  f.psi_jaw.assign(static_cast<std::size_t>(layout.jaw), 0.0);
  f.camera = camera;
  f.frame_index = frame_index;
  return f;
}

void quantize_16bit(Image& image) {
  for (double& v : image.pixels) v = static_cast<double>(std::lround(std::clamp(v, 0.0, 1.0) * 65535.0)) / 65535.0;
}

void write_sequence(const Dataset& dataset, const fs::path& root) {
  const auto& m = dataset.manifest;
  m.layout.validate();
  if (static_cast<int>(dataset.frames.size()) != m.frame_count) {
    throw Error(ErrorKind::invalid_input, "manifest frame count does not match frames");
  }
  fs::create_directories(root / "frames");
  for (const char* kind : kMaskKinds) fs::create_directories(root / "masks" / kind);

  json manifest = {{"format_version", m.format_version},
                   {"width", m.width},
                   {"height", m.height},
                   {"frame_count", m.frame_count},
                   {"layout", layout_to_json(m.layout)}};
  write_text_atomic(root / "manifest.json", manifest.dump(2) + "\n");

  std::string coeffs;
  json cameras = json::array();
  std::vector<float> audio;
  for (std::size_t i = 0; i < dataset.frames.size(); ++i) {
    const FrameRecord& rec = dataset.frames[i];
    const ConditioningFrame& c = rec.conditioning;
    c.check_layout(m.layout);
    write_png(root / "frames" / frame_name(static_cast<int>(i)), rec.image, 16);
    for (int k = 0; k < 4; ++k) {
      write_png(root / "masks" / kMaskKinds[k] / frame_name(static_cast<int>(i)),
                mask_slot(rec.masks, k), 8);
    }
    json line = {{"frame", i},
                 {"psi_id", c.psi_id},
                 {"psi_shape", c.psi_shape},
                 {"psi_expression", c.psi_expression},
                 {"psi_eye", c.psi_eye},
                 {"psi_jaw", c.psi_jaw}};
    coeffs += line.dump() + "\n";
    cameras.push_back(camera_to_json(c.camera));
    for (double a : c.audio) audio.push_back(static_cast<float>(a));
  }
  write_text_atomic(root / "coeffs.jsonl", coeffs);
  write_text_atomic(root / "cameras.json", cameras.dump(2) + "\n");
  std::string bytes(audio.size() * sizeof(float), '\0');
  for (std::size_t i = 0; i < audio.size(); ++i) {
    std::uint32_t u;
    std::memcpy(&u, &audio[i], 4);
    for (int b = 0; b < 4; ++b) bytes[4 * i + b] = static_cast<char>((u >> (8 * b)) & 0xff);
  }
  write_text_atomic(root / "audio_feats.bin", bytes);
}

Dataset load_sequence(const fs::path& root) {
  std::vector<std::string> problems;
  Dataset ds;
  auto fail = [&]() {
    std::string msg = "invalid dataset " + root.string() + ":";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw Error(ErrorKind::load, msg);
  };
  if (!fs::is_directory(root)) {
    problems.push_back("not a directory");
    fail();
  }

  try {
    const json j = read_json(root / "manifest.json");
    ds.manifest.format_version = j.at("format_version").get<int>();
    ds.manifest.width = j.at("width").get<int>();
    ds.manifest.height = j.at("height").get<int>();
    ds.manifest.frame_count = j.at("frame_count").get<int>();
    const json& l = j.at("layout");
    ds.manifest.layout.audio = l.at("audio").get<int>();
    ds.manifest.layout.id = l.at("id").get<int>();
    ds.manifest.layout.shape = l.at("shape").get<int>();
    ds.manifest.layout.expression = l.at("expression").get<int>();
    ds.manifest.layout.eye = l.at("eye").get<int>();
    ds.manifest.layout.jaw = l.at("jaw").get<int>();
    ds.manifest.layout.validate();
  } catch (const std::exception& e) {
    problems.push_back(std::string("manifest.json: ") + e.what());
    fail();
  }
  const auto& m = ds.manifest;
  if (m.format_version != 1) {
    problems.push_back("manifest.json: unsupported format_version " + std::to_string(m.format_version));
  }
  if (m.frame_count < 1 || m.width < 1 || m.height < 1) {
    problems.push_back("manifest.json: frame_count, width and height must be positive");
  }
  if (!problems.empty()) fail();

  const auto n = static_cast<std::size_t>(m.frame_count);
  ds.frames.resize(n);

  // Coefficients.
  {
    std::ifstream in(root / "coeffs.jsonl");
    if (!in) {
      problems.push_back("missing coeffs.jsonl");
    } else {
      std::string line;
      std::size_t row = 0;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (row >= n) {
          problems.push_back("coeffs.jsonl: more records than frame_count");
          break;
        }
        try {
          const json j = json::parse(line);
          auto& c = ds.frames[row].conditioning;
          const int idx = j.at("frame").get<int>();
          if (idx != static_cast<int>(row)) {
            problems.push_back("coeffs.jsonl: record " + std::to_string(row) + " has frame " + std::to_string(idx));
          }
          c.frame_index = static_cast<int>(row);
          c.psi_id = j.at("psi_id").get<std::vector<double>>();
          c.psi_shape = j.at("psi_shape").get<std::vector<double>>();
          c.psi_expression = j.at("psi_expression").get<std::vector<double>>();
          c.psi_eye = j.at("psi_eye").get<std::vector<double>>();
          c.psi_jaw = j.at("psi_jaw").get<std::vector<double>>();
        } catch (const std::exception& e) {
          problems.push_back("coeffs.jsonl record " + std::to_string(row) + ": " + e.what());
        }
        ++row;
      }
      if (row < n) {
        problems.push_back("coeffs.jsonl: " + std::to_string(row) + " records, expected " + std::to_string(n));
      }
    }
  }

  // Cameras.
  try {
    const json cams = read_json(root / "cameras.json");
    if (!cams.is_array() || cams.size() != n) {
      problems.push_back("cameras.json: expected an array of " + std::to_string(n) + " cameras");
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        try {
          ds.frames[i].conditioning.camera = camera_from_json(cams[i]);
          ds.frames[i].conditioning.camera.validate();
        } catch (const std::exception& e) {
          problems.push_back("cameras.json entry " + std::to_string(i) + ": " + e.what());
        }
      }
    }
  } catch (const std::exception& e) {
    problems.push_back(std::string("cameras.json: ") + e.what());
  }

  // Audio features.
  {
    std::ifstream in(root / "audio_feats.bin", std::ios::binary);
    if (!in) {
      problems.push_back("missing audio_feats.bin");
    } else {
      std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      const std::size_t expect = n * static_cast<std::size_t>(m.layout.audio) * 4;
      if (bytes.size() != expect) {
        problems.push_back("audio_feats.bin: " + std::to_string(bytes.size()) + " bytes, expected " +
                           std::to_string(expect));
      } else {
        const auto w = static_cast<std::size_t>(m.layout.audio);
        for (std::size_t i = 0; i < n; ++i) {
          auto& a = ds.frames[i].conditioning.audio;
          a.resize(w);
          for (std::size_t k = 0; k < w; ++k) {
            std::uint32_t u = 0;
            for (int b = 0; b < 4; ++b) {
              u |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[4 * (i * w + k) + b])) << (8 * b);
            }
            float f;
            std::memcpy(&f, &u, 4);
            a[k] = f;
          }
        }
      }
    }
  }

  // Images and masks.
  for (std::size_t i = 0; i < n; ++i) {
    const std::string name = frame_name(static_cast<int>(i));
    auto& rec = ds.frames[i];
    const fs::path fp = root / "frames" / name;
    if (!fs::exists(fp)) {
      problems.push_back("frame " + std::to_string(i) + ": missing frames/" + name);
    } else {
      try {
        rec.image = read_png(fp);
        if (rec.image.channels != 3) problems.push_back("frame " + std::to_string(i) + ": image is not RGB");
        if (rec.image.width != m.width || rec.image.height != m.height) {
          problems.push_back("frame " + std::to_string(i) + ": image resolution " + std::to_string(rec.image.width) +
                             "x" + std::to_string(rec.image.height) + " differs from manifest");
        }
      } catch (const std::exception& e) {
        problems.push_back("frame " + std::to_string(i) + ": " + e.what());
      }
    }
    for (int k = 0; k < 4; ++k) {
      const fs::path mp = root / "masks" / kMaskKinds[k] / name;
      if (!fs::exists(mp)) {
        problems.push_back("frame " + std::to_string(i) + ": missing " + kMaskKinds[k] + " mask");
        continue;
      }
      try {
        Mask& mk = mask_slot(rec.masks, k);
        mk = read_mask_png(mp);
        if (mk.width != m.width || mk.height != m.height) {
          problems.push_back("frame " + std::to_string(i) + ": " + kMaskKinds[k] +
                             " mask resolution differs from manifest");
        }
      } catch (const std::exception& e) {
        problems.push_back("frame " + std::to_string(i) + " " + kMaskKinds[k] + " mask: " + e.what());
      }
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    try {
      ds.frames[i].conditioning.check_layout(m.layout);
    } catch (const Error& e) {
      problems.push_back("frame " + std::to_string(i) + ": " + e.what());
    }
  }
  if (!problems.empty()) fail();
  return ds;
}

}  // namespace degs
