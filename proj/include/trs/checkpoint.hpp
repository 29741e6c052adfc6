#pragma once

#include <cstring>
#include <fstream>
#include <map>

#include "trs/nerf_field.hpp"

namespace trs {

// Checkpoint container: little-endian binary with named sections.
//
//   magic   "TRSCKPT1"                        8 bytes
//   u32     section count
//   per section:
//     u32   name length, then the name bytes
//     u64   payload length, then the payload
//
// Payload layouts (all little-endian):
//   "triplane":  i32 R, i32 C, f64 extent, u8 dtype (0 = f32), then the three
//                planes in XY, XZ, YZ order, row-major, f32.
//   "field":     i32 trunk layers, i32 feature_dim, i32 width, f64
//                density_bias, then per linear layer (trunk in order, density
//                head, color head): weights row-major f32, then biases f32.
//   "upsampler": i32 factor, i32 c_in, i32 c_out, weights f32, biases f32.

namespace detail {

struct BlobWriter {
  std::string data;

  template <typename T>
  void put(T v) {
    data.append(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void put_f32_array(const std::vector<Real>& v) {
    for (Real x : v) put<float>(float(x));
  }
};

struct BlobReader {
  const std::string& data;
  std::size_t pos = 0;

  template <typename T>
  T get() {
    if (pos + sizeof(T) > data.size()) throw std::runtime_error("checkpoint: truncated section");
    T v;
    std::memcpy(&v, data.data() + pos, sizeof v);
    pos += sizeof v;
    return v;
  }
  void get_f32_array(std::vector<Real>& v) {
    for (auto& x : v) x = get<float>();
  }
};

}  // namespace detail

class Checkpoint {
 public:
  void set(const std::string& name, std::string payload) { sections_[name] = std::move(payload); }
  bool has(const std::string& name) const { return sections_.count(name) > 0; }
  const std::string& get(const std::string& name) const {
    auto it = sections_.find(name);
    if (it == sections_.end()) throw std::runtime_error("checkpoint: missing section " + name);
    return it->second;
  }
  std::vector<std::string> section_names() const {
    std::vector<std::string> names;
    for (const auto& [k, v] : sections_) names.push_back(k);
    return names;
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out.write("TRSCKPT1", 8);
    std::uint32_t n = std::uint32_t(sections_.size());
    out.write(reinterpret_cast<const char*>(&n), 4);
    for (const auto& [name, payload] : sections_) {
      std::uint32_t len = std::uint32_t(name.size());
      out.write(reinterpret_cast<const char*>(&len), 4);
      out.write(name.data(), len);
      std::uint64_t plen = payload.size();
      out.write(reinterpret_cast<const char*>(&plen), 8);
      out.write(payload.data(), std::streamsize(payload.size()));
    }
    if (!out) throw std::runtime_error("write failed: " + path);
  }

  static Checkpoint load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, "TRSCKPT1", 8) != 0)
      throw std::runtime_error(path + ": not a checkpoint file");
    std::uint32_t n;
    in.read(reinterpret_cast<char*>(&n), 4);
    Checkpoint ck;
    for (std::uint32_t i = 0; i < n; ++i) {
      std::uint32_t len;
      in.read(reinterpret_cast<char*>(&len), 4);
      std::string name(len, '\0');
      in.read(name.data(), len);
      std::uint64_t plen;
      in.read(reinterpret_cast<char*>(&plen), 8);
      std::string payload(plen, '\0');
      in.read(payload.data(), std::streamsize(plen));
      if (!in) throw std::runtime_error(path + ": truncated checkpoint");
      ck.sections_[name] = std::move(payload);
    }
    return ck;
  }

 private:
  std::map<std::string, std::string> sections_;
};

inline std::string serialize_triplane(const Triplane& tp) {
  detail::BlobWriter w;
  w.put<std::int32_t>(tp.resolution);
  w.put<std::int32_t>(tp.channels);
  w.put<double>(tp.extent);
  w.put<std::uint8_t>(0);  // f32
  for (const auto& plane : tp.planes) w.put_f32_array(plane);
  return std::move(w.data);
}

inline Triplane deserialize_triplane(const std::string& blob) {
  detail::BlobReader r{blob};
  std::int32_t R = r.get<std::int32_t>();
  std::int32_t C = r.get<std::int32_t>();
  double extent = r.get<double>();
  std::uint8_t dtype = r.get<std::uint8_t>();
  if (dtype != 0) throw std::runtime_error("checkpoint: unsupported triplane dtype");
  Triplane tp(R, C, extent);
  for (auto& plane : tp.planes) r.get_f32_array(plane);
  return tp;
}

inline std::string serialize_field(const FieldParams& f) {
  detail::BlobWriter w;
  w.put<std::int32_t>(std::int32_t(f.trunk.size()));
  w.put<std::int32_t>(f.feature_dim());
  w.put<std::int32_t>(f.width());
  w.put<double>(f.density_bias);
  auto layer = [&](const LinearLayer& l) {
    w.put_f32_array(l.weight);
    w.put_f32_array(l.bias);
  };
  for (const auto& l : f.trunk) layer(l);
  layer(f.density_head);
  layer(f.color_head);
  return std::move(w.data);
}

inline FieldParams deserialize_field(const std::string& blob) {
  detail::BlobReader r{blob};
  std::int32_t layers = r.get<std::int32_t>();
  std::int32_t feature_dim = r.get<std::int32_t>();
  std::int32_t width = r.get<std::int32_t>();
  FieldParams f(feature_dim, width, layers);
  f.density_bias = r.get<double>();
  auto layer = [&](LinearLayer& l) {
    r.get_f32_array(l.weight);
    r.get_f32_array(l.bias);
  };
  for (auto& l : f.trunk) layer(l);
  layer(f.density_head);
  layer(f.color_head);
  return f;
}

inline std::string serialize_upsampler(const UpsamplerParams& u) {
  detail::BlobWriter w;
  w.put<std::int32_t>(u.factor);
  w.put<std::int32_t>(u.channels_in);
  w.put<std::int32_t>(u.channels_out);
  w.put_f32_array(u.weight);
  w.put_f32_array(u.bias);
  return std::move(w.data);
}

inline UpsamplerParams deserialize_upsampler(const std::string& blob) {
  detail::BlobReader r{blob};
  std::int32_t f = r.get<std::int32_t>();
  std::int32_t cin = r.get<std::int32_t>();
  std::int32_t cout = r.get<std::int32_t>();
  UpsamplerParams u(f, cin, cout);
  r.get_f32_array(u.weight);
  r.get_f32_array(u.bias);
  return u;
}

}  // namespace trs
