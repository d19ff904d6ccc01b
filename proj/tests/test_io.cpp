#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <limits>
#include <random>

#include <unistd.h>

#include "omnistereo/io/attention_io.hpp"
#include "omnistereo/io/colormap.hpp"
#include "omnistereo/io/pfm.hpp"
#include "omnistereo/io/png.hpp"
#include "omnistereo/io/rig_config.hpp"

using namespace omnistereo;
using namespace omnistereo::io;
namespace fs = std::filesystem;

namespace {

PfmImage sample_pfm(int w, int h, int c) {
  PfmImage img{w, h, c, {}};
  for (int k = 0; k < w * h * c; ++k) img.data.push_back(0.25f * k - 1.5f);
  return img;
}

bool bitwise_equal(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

fs::path temp_dir() {
  const fs::path d = fs::temp_directory_path() / ("omnistereo_test_io_" + std::to_string(::getpid()));
  fs::create_directories(d);
  return d;
}

const char* kRigJson = R"({
  "schema_version": 1,
  "layout": "test",
  "reference": "b",
  "geometry": {"projection": "erp", "width": 64, "height": 32},
  "cameras": [
    {"id": "a", "translation": [0, 0, 0]},
    {"id": "b", "translation": [1, 0, 0], "quaternion": [0.7071067811865476, 0, 0.7071067811865476, 0]},
    {"id": "c", "translation": [0, 1, 0], "rotation": [[1, 0, 0], [0, 1, 0], [0, 0, 1]], "image": "c.png"}
  ]
})";

}  // namespace

TEST(Pfm, RoundTripBitwise) {
  for (int c : {1, 3}) {
    PfmImage img = sample_pfm(3, 2, c);
    img.data[1] = std::numeric_limits<float>::denorm_min();
    img.data[2] = -0.0f;
    img.data[3] = std::numeric_limits<float>::infinity();
    const auto back = parse_pfm(serialize_pfm(img));
    EXPECT_EQ(back.width, 3);
    EXPECT_EQ(back.height, 2);
    EXPECT_EQ(back.channels, c);
    EXPECT_TRUE(bitwise_equal(back.data, img.data));
  }
}

TEST(Pfm, BothEndiannessesReadBack) {
  const PfmImage img = sample_pfm(4, 3, 1);
  const std::string le = serialize_pfm(img, true);
  const std::string be = serialize_pfm(img, false);
  EXPECT_NE(le, be);
  EXPECT_NE(le.find("-1.0"), std::string::npos);
  EXPECT_TRUE(bitwise_equal(parse_pfm(le).data, img.data));
  EXPECT_TRUE(bitwise_equal(parse_pfm(be).data, img.data));
}

TEST(Pfm, RowsStoredBottomToTop) {
  const PfmImage img{1, 2, 1, {1.0f, 2.0f}};  // top row 1, bottom row 2
  const std::string bytes = serialize_pfm(img, true);
  float first = 0.0f;
  std::memcpy(&first, bytes.data() + bytes.size() - 8, 4);
  EXPECT_EQ(first, 2.0f);
}

TEST(Pfm, MalformedInputsAreFormatErrors) {
  const std::string good = serialize_pfm(sample_pfm(3, 2, 1));
  EXPECT_THROW(parse_pfm(good.substr(0, good.size() - 1)), FormatError);
  EXPECT_THROW(parse_pfm(good + "x"), FormatError);
  EXPECT_THROW(parse_pfm("P6\n3 2\n255\n"), FormatError);
  EXPECT_THROW(parse_pfm("Pf\n-3 2\n-1\n"), FormatError);
  EXPECT_THROW(parse_pfm("Pf\n3 2\nabc\n"), FormatError);
  EXPECT_THROW(parse_pfm(""), FormatError);
  try {
    parse_pfm(good.substr(0, good.size() - 5));
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_GT(e.offset(), 0u);
  }
}

TEST(Pfm, InvalidPixelsRoundTripAsInfinity) {
  auto m = DisparityMap::filled({Projection::Cylindrical, 3, 2}, 4.0f);
  m.valid[4] = 0;
  const auto back = map_from_pfm<DisparityMap>(parse_pfm(serialize_pfm(to_pfm(m))), Projection::Cylindrical);
  EXPECT_EQ(back.valid, m.valid);
  EXPECT_EQ(back.at(0, 0), 4.0f);
  EXPECT_THROW(map_from_pfm<DisparityMap>(sample_pfm(2, 2, 3), Projection::Cassini), FormatError);
}

TEST(Pfm, FileRoundTripAndMissingFile) {
  const fs::path p = temp_dir() / "x.pfm";
  const PfmImage img = sample_pfm(5, 4, 3);
  write_pfm(p.string(), img);
  EXPECT_TRUE(bitwise_equal(read_pfm(p.string()).data, img.data));
  EXPECT_THROW(read_pfm((temp_dir() / "missing.pfm").string()), Error);
}

TEST(Png, SixteenBitRoundTripWithRange) {
  auto pano = Panorama::zeros({Projection::ERP, 7, 5}, 1);
  for (std::size_t k = 0; k < pano.data.size(); ++k) pano.data[k] = 2.0f + 0.37f * static_cast<float>(k);
  const auto [lo, hi] = value_range(pano);
  const auto png = decode_png(encode_png(png_from_panorama(pano, 16, lo, hi)));
  EXPECT_EQ(png.bit_depth, 16);
  ASSERT_TRUE(png.range_min && png.range_max);
  EXPECT_EQ(*png.range_min, lo);
  EXPECT_EQ(*png.range_max, hi);
  const auto back = panorama_from_png(png, Projection::ERP);
  for (std::size_t k = 0; k < pano.data.size(); ++k) EXPECT_NEAR(back.data[k], pano.data[k], (hi - lo) / 65535.0);
}

TEST(Png, EightBitRgbWithoutRange) {
  PngImage img;
  img.width = 2;
  img.height = 1;
  img.channels = 3;
  img.bit_depth = 8;
  img.samples = {0, 51, 255, 255, 102, 0};
  const auto back = decode_png(encode_png(img));
  EXPECT_EQ(back.samples, img.samples);
  EXPECT_FALSE(back.range_min.has_value());
  const auto pano = panorama_from_png(back, Projection::ERP);
  EXPECT_FLOAT_EQ(pano.at(0, 0, 1), 0.2f);
  EXPECT_FLOAT_EQ(pano.at(0, 1, 0), 1.0f);
}

TEST(Png, CorruptDataIsFormatError) {
  EXPECT_THROW(decode_png("not a png"), FormatError);
  PngImage img;
  img.width = 4;
  img.height = 4;
  img.samples.assign(16, 9);
  const std::string bytes = encode_png(img);
  EXPECT_THROW(decode_png(bytes.substr(0, bytes.size() / 2)), FormatError);
}

TEST(Colormap, TurboEndpointsAndInvalidBlack) {
  auto pano = Panorama::zeros({Projection::ERP, 3, 1}, 1);
  pano.data = {0.0f, 0.5f, 1.0f};
  pano.ensure_mask();
  pano.valid[1] = 0;
  const auto img = colorize(pano, Colormap::Turbo, 0.0, 1.0);
  EXPECT_EQ(img.channels, 3);
  EXPECT_EQ(img.samples[3], 0);
  EXPECT_EQ(img.samples[4], 0);
  EXPECT_EQ(img.samples[5], 0);
  EXPECT_NE(img.samples[0] + img.samples[1] + img.samples[2], 0);
  EXPECT_TRUE(colormap_from_string("turbo").has_value());
  EXPECT_FALSE(colormap_from_string("nope").has_value());
}

TEST(Rig, ParsesAllPoseForms) {
  const auto rig = rig_from_json(nlohmann::json::parse(kRigJson));
  EXPECT_EQ(rig.cameras.size(), 3u);
  EXPECT_EQ(rig.reference_index(), 1);
  EXPECT_EQ(rig.geometry.projection, Projection::ERP);
  EXPECT_EQ(rig.geometry.width, 64);
  // 90 degrees about y maps z to x.
  EXPECT_NEAR((rig.cameras[1].pose.rotation * Vec3(0, 0, 1) - Vec3(1, 0, 0)).norm(), 0.0, 1e-12);
  EXPECT_EQ(rig.cameras[2].image, "c.png");
  const auto again = rig_from_json(rig_to_json(rig));
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_TRUE(again.cameras[k].pose.rotation.isApprox(rig.cameras[k].pose.rotation, 1e-15));
    EXPECT_EQ(again.cameras[k].pose.translation, rig.cameras[k].pose.translation);
  }
}

TEST(Rig, SchemaViolations) {
  auto j = nlohmann::json::parse(kRigJson);
  auto bad = j;
  bad["schema_version"] = 2;
  EXPECT_THROW(rig_from_json(bad), FormatError);
  bad = j;
  bad.erase("schema_version");
  EXPECT_THROW(rig_from_json(bad), FormatError);
  bad = j;
  bad["cameras"].erase(2);
  EXPECT_THROW(rig_from_json(bad), DomainError);
  bad = j;
  bad["cameras"][2]["id"] = "a";
  EXPECT_THROW(rig_from_json(bad), DomainError);
  bad = j;
  bad["reference"] = "z";
  EXPECT_THROW(rig_from_json(bad), DomainError);
  bad = j;
  bad["cameras"][0]["translation"] = {1, 2};
  EXPECT_THROW(rig_from_json(bad), FormatError);
  bad = j;
  bad["cameras"][2]["rotation"] = {{2, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  EXPECT_THROW(rig_from_json(bad), DomainError);
  bad = j;
  bad["geometry"]["projection"] = "fisheye";
  EXPECT_THROW(rig_from_json(bad), FormatError);
  EXPECT_THROW(parse_json_text("{\"a\": ", "x"), FormatError);
}

TEST(Rig, ReadResolvesRelativeImagesAndBundledRigsLoad) {
  const fs::path dir = temp_dir() / "rig";
  fs::create_directories(dir);
  write_file((dir / "rig.json").string(), kRigJson);
  const auto rig = read_rig((dir / "rig.json").string());
  EXPECT_EQ(fs::path(rig.cameras[2].image), dir / "c.png");
  for (const char* name : {"analytic_square.json", "deep360_square.json", "3d60_triangle.json"}) {
    const auto r = read_rig(std::string(OMNISTEREO_DATA_DIR) + "/rigs/" + name);
    EXPECT_GE(r.cameras.size(), 3u) << name;
  }
}

TEST(AttentionParamsIo, RoundTripAndCorruption) {
  const auto p = random_attention_params<double>(4, 2, 5, 9, 0.3, false);
  const std::string bytes = serialize_attention_params(p);
  const auto q = parse_attention_params(bytes);
  EXPECT_EQ(q.channels, 4);
  EXPECT_EQ(q.heads, 2);
  EXPECT_EQ(q.span, 5);
  EXPECT_FALSE(q.residual);
  EXPECT_EQ(serialize_attention_params(q), bytes);
  EXPECT_THROW(parse_attention_params(bytes.substr(0, bytes.size() - 8)), FormatError);
  EXPECT_THROW(parse_attention_params("XXXX" + bytes.substr(4)), FormatError);
  std::string bad_heads = bytes;
  bad_heads[12] = 3;  // heads = 3 does not divide 4 channels
  EXPECT_THROW(parse_attention_params(bad_heads), FormatError);
}

TEST(AttentionParamsIo, TensorPfmLayout) {
  auto x = FeatureMap<double>::zeros(2, 3, 2);
  for (std::size_t k = 0; k < x.data.size(); ++k) x.data[k] = 0.5 * static_cast<double>(k);
  const auto img = tensor_to_pfm(x);
  EXPECT_EQ(img.width, 6);
  EXPECT_EQ(img.height, 2);
  const auto back = tensor_from_pfm(parse_pfm(serialize_pfm(img)), 2);
  EXPECT_EQ(back.data, x.data);
  EXPECT_THROW(tensor_from_pfm(img, 4), DomainError);
}
