#include "doctest.h"
#include "oracles.hpp"
#include "vdforge/image_io.hpp"

using namespace vdforge;

namespace {

const std::filesystem::path kData = VDFORGE_TEST_DATA;

Image checker(int w, int h) {
  Image img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = static_cast<std::uint8_t>(((x / 3 + y / 2) % 2) * 200 + c * 20);
  return img;
}

}  // namespace

TEST_CASE("png write/read round-trips pixels") {
  oracle::TempDir dir("io");
  const auto img = checker(33, 21);
  write_png(dir / "a.png", img);
  CHECK(read_png(dir / "a.png") == img);
  CHECK(read_image(dir / "a.png") == img);
}

TEST_CASE("png bytes depend only on pixels and level") {
  oracle::TempDir dir("io");
  const auto img = checker(40, 40);
  write_png(dir / "a.png", img, 6);
  write_png(dir / "b.png", img, 6);
  CHECK(oracle::slurp(dir / "a.png") == oracle::slurp(dir / "b.png"));
}

TEST_CASE("palette and gray+alpha pngs decode to rgb") {
  const auto pal = read_png(kData / "quadrants_palette.png");
  REQUIRE(pal.width == 8);
  CHECK(int(pal.at(7, 7, 0)) == 240);
  CHECK(int(pal.at(0, 0, 0)) == 200);
  CHECK(int(pal.at(0, 0, 1)) == 30);
  const auto la = read_png(kData / "quadrants_la.png");
  // Pillow's L conversion of (200,30,30): 0.299*200 + 0.587*30 + 0.114*30 = 80.83.
  CHECK(int(la.at(0, 0, 0)) == 81);
  CHECK(la.at(0, 0, 0) == la.at(0, 0, 2));
}

TEST_CASE("jpeg decodes close to the source colors") {
  const auto img = read_image(kData / "quadrants.jpg");
  REQUIRE(img.width == 8);
  REQUIRE(img.height == 8);
  auto near = [](int a, int b) { return std::abs(a - b) <= 3; };
  CHECK(near(img.at(1, 1, 0), 200));
  CHECK(near(img.at(1, 1, 1), 30));
  CHECK(near(img.at(6, 1, 1), 200));
  CHECK(near(img.at(1, 6, 2), 200));
  CHECK(near(img.at(6, 6, 0), 240));
}

TEST_CASE("decoding garbage fails cleanly") {
  oracle::TempDir dir("io");
  oracle::spit(dir / "x.png", "\x89PNG\r\n\x1a\nnot really");
  CHECK_THROWS_AS(read_png(dir / "x.png"), Error);
  oracle::spit(dir / "y.jpg", "\xFF\xD8\xFF garbage");
  CHECK_THROWS_AS(read_jpeg(dir / "y.jpg"), Error);
  oracle::spit(dir / "z.bin", "hello");
  CHECK_THROWS_AS(read_image(dir / "z.bin"), Error);
  CHECK_THROWS_AS(read_image(dir / "missing.png"), Error);
}

TEST_CASE("degraded files are named after the view label") {
  CHECK(degraded_image_path("/a/b/pic.jpg", ViewSpec::resolution(0.1)) == "/a/b/pic__res:0.1.png");
  CHECK(degraded_image_path("x.png", ViewSpec::hq()) == "x.png");
}

TEST_CASE("materialize_view writes once and reuses the file") {
  oracle::TempDir dir("io");
  const auto img = checker(50, 30);
  write_png(dir / "src.png", img);
  const auto view = ViewSpec::resolution(0.2);
  const auto p = materialize_view(dir / "src.png", view);
  CHECK(p == dir / "src__res:0.2.png");
  CHECK(read_png(p) == degrade_resolution(img, 0.2));
  const auto t1 = std::filesystem::last_write_time(p);
  CHECK(materialize_view(dir / "src.png", view) == p);
  CHECK(std::filesystem::last_write_time(p) == t1);
  CHECK(materialize_view(dir / "src.png", ViewSpec::hq()) == dir / "src.png");
}
