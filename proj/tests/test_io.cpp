#include <doctest.h>

#include <cstdio>

#include "trs/checkpoint.hpp"
#include "trs/png_io.hpp"

using namespace trs;

namespace {

std::string temp_path(const char* name) {
  return std::string("/tmp/trs_io_test_") + name;
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("checkpoint container round-trips named sections") {
  Checkpoint ck;
  ck.set("alpha", std::string("payload-one"));
  ck.set("beta", std::string("\x00\x01\x02with\x00nulls", 13));
  std::string path = temp_path("container.ckpt");
  ck.save(path);
  Checkpoint back = Checkpoint::load(path);
  CHECK(back.has("alpha"));
  CHECK(back.has("beta"));
  CHECK(!back.has("gamma"));
  CHECK(back.get("alpha") == "payload-one");
  CHECK(back.get("beta") == std::string("\x00\x01\x02with\x00nulls", 13));
  CHECK(back.section_names() == std::vector<std::string>{"alpha", "beta"});
  CHECK_THROWS_AS(back.get("gamma"), std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("checkpoint save is deterministic byte for byte") {
  Checkpoint ck;
  ck.set("z", "last");
  ck.set("a", "first");
  std::string p1 = temp_path("det1.ckpt"), p2 = temp_path("det2.ckpt");
  ck.save(p1);
  ck.save(p2);
  CHECK(file_bytes(p1) == file_bytes(p2));
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("corrupt and truncated checkpoints are rejected") {
  std::string path = temp_path("bad.ckpt");
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOTACKPTxxxx";
  }
  CHECK_THROWS_AS(Checkpoint::load(path), std::runtime_error);
  {
    std::ofstream out(path, std::ios::binary);
    out << "TRSCKPT1";
    std::uint32_t n = 1;
    out.write(reinterpret_cast<const char*>(&n), 4);
    std::uint32_t len = 4;
    out.write(reinterpret_cast<const char*>(&len), 4);
    out << "name";
    std::uint64_t plen = 1000;  // promises more bytes than exist
    out.write(reinterpret_cast<const char*>(&plen), 8);
    out << "tiny";
  }
  CHECK_THROWS_AS(Checkpoint::load(path), std::runtime_error);
  CHECK_THROWS_AS(Checkpoint::load(temp_path("missing.ckpt")), std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("triplane serialization round-trips within f32 precision") {
  Rng rng(3);
  Triplane tp(16, 8, 0.87);
  for (auto& plane : tp.planes)
    for (auto& x : plane) x = rng.normal();
  Triplane back = deserialize_triplane(serialize_triplane(tp));
  CHECK(back.resolution == 16);
  CHECK(back.channels == 8);
  CHECK(back.extent == tp.extent);
  for (int pl = 0; pl < 3; ++pl)
    for (std::size_t i = 0; i < tp.planes[pl].size(); ++i)
      CHECK(back.planes[pl][i] == doctest::Approx(tp.planes[pl][i]).epsilon(1e-6));
  // Values already representable in f32 survive exactly.
  for (auto& plane : tp.planes)
    for (auto& x : plane) x = Real(float(x));
  Triplane exact = deserialize_triplane(serialize_triplane(tp));
  CHECK(exact.planes == tp.planes);
}

TEST_CASE("field serialization round-trips shape and values") {
  Rng rng(5);
  FieldParams f(12, 24, 5);
  f.init_random(rng);
  f.density_bias = -1.0;
  FieldParams back = deserialize_field(serialize_field(f));
  CHECK(back.trunk.size() == f.trunk.size());
  CHECK(back.feature_dim() == 12);
  CHECK(back.width() == 24);
  CHECK(back.density_bias == -1.0);
  for (std::size_t l = 0; l < f.trunk.size(); ++l)
    for (std::size_t i = 0; i < f.trunk[l].weight.size(); ++i)
      CHECK(back.trunk[l].weight[i] == doctest::Approx(f.trunk[l].weight[i]).epsilon(1e-6));
  for (std::size_t i = 0; i < f.color_head.weight.size(); ++i)
    CHECK(back.color_head.weight[i] == doctest::Approx(f.color_head.weight[i]).epsilon(1e-6));
}

TEST_CASE("upsampler serialization round-trips") {
  Rng rng(7);
  UpsamplerParams u(2, 8, 5);
  u.init_random(rng);
  UpsamplerParams back = deserialize_upsampler(serialize_upsampler(u));
  CHECK(back.factor == 2);
  CHECK(back.channels_in == 8);
  CHECK(back.channels_out == 5);
  for (std::size_t i = 0; i < u.weight.size(); ++i)
    CHECK(back.weight[i] == doctest::Approx(u.weight[i]).epsilon(1e-6));
}

TEST_CASE("full model checkpoint: save, load, identical inference within f32") {
  Rng rng(11);
  Triplane tp(8, 4);
  for (auto& plane : tp.planes)
    for (auto& x : plane) x = Real(float(rng.normal()));
  FieldParams f(12, 16, 2);
  f.init_random(rng);
  // Force exactly representable parameters so reload is bitwise-equivalent.
  auto quantize = [](LinearLayer& l) {
    for (auto& w : l.weight) w = Real(float(w));
    for (auto& b : l.bias) b = Real(float(b));
  };
  for (auto& l : f.trunk) quantize(l);
  quantize(f.density_head);
  quantize(f.color_head);

  Checkpoint ck;
  ck.set("triplane", serialize_triplane(tp));
  ck.set("field", serialize_field(f));
  std::string path = temp_path("model.ckpt");
  ck.save(path);

  Checkpoint loaded = Checkpoint::load(path);
  Triplane tp2 = deserialize_triplane(loaded.get("triplane"));
  FieldParams f2 = deserialize_field(loaded.get("field"));
  for (int i = 0; i < 50; ++i) {
    Vec3 p{rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8)};
    FieldSample a = field_at_point(f, tp, p);
    FieldSample b = field_at_point(f2, tp2, p);
    CHECK(a.sigma == b.sigma);
    CHECK(a.rgb == b.rgb);
  }
  std::remove(path.c_str());
}

TEST_CASE("rgb png round-trips to 8-bit precision") {
  Rng rng(13);
  RenderOutput img(33, 17);
  for (auto& p : img.rgb) p = {rng.uniform(), rng.uniform(), rng.uniform()};
  std::string path = temp_path("rgb.png");
  write_rgb_png(path, img);
  RenderOutput back = read_rgb_png(path);
  REQUIRE(back.width == 33);
  REQUIRE(back.height == 17);
  for (std::size_t i = 0; i < img.rgb.size(); ++i)
    for (int c = 0; c < 3; ++c)
      CHECK(std::abs(back.rgb[i][c] - img.rgb[i][c]) <= 0.5 / 255 + 1e-9);
  std::remove(path.c_str());
}

TEST_CASE("gray png round-trips and out-of-range values clamp") {
  RenderOutput img(8, 8);
  for (std::size_t i = 0; i < img.mask.size(); ++i) img.mask[i] = (Real(i) - 10) / 40.0;
  std::string path = temp_path("mask.png");
  write_mask_png(path, img);
  PngImage back = read_png(path);
  REQUIRE(back.channels == 1);
  for (std::size_t i = 0; i < img.mask.size(); ++i)
    CHECK(back.pixels[i] == (unsigned char)std::lround(clamp01(img.mask[i]) * 255.0));
  std::remove(path.c_str());
}

TEST_CASE("png encoding is a pure function of the pixels") {
  Rng rng(17);
  RenderOutput img(16, 16);
  for (auto& p : img.rgb) p = {rng.uniform(), rng.uniform(), rng.uniform()};
  std::string p1 = temp_path("pure1.png"), p2 = temp_path("pure2.png");
  write_rgb_png(p1, img);
  write_rgb_png(p2, img);
  CHECK(file_bytes(p1) == file_bytes(p2));
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("png reader rejects garbage and bad buffer sizes are caught") {
  std::string path = temp_path("garbage.png");
  {
    std::ofstream out(path, std::ios::binary);
    out << "certainly not a png";
  }
  CHECK_THROWS_AS(read_png(path), std::runtime_error);
  std::remove(path.c_str());
  std::vector<unsigned char> px(10);
  CHECK_THROWS_AS(write_png(temp_path("bad.png"), px, 4, 4, 3), std::invalid_argument);
  CHECK_THROWS_AS(write_png(temp_path("bad.png"), px, 5, 2, 2), std::invalid_argument);
}
