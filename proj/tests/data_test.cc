// Copyright 2026 The APS Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "aps/augment.h"
#include "aps/data.h"
#include "aps/image.h"

namespace aps {
namespace {

namespace fs = std::filesystem;

fs::path temp_file(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "aps_data_test";
  fs::create_directories(dir);
  return dir / name;
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream f(p, std::ios::binary);
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
}

Image gradient_image(int w, int h) {
  Image img(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      img.at(x, y, 0) = static_cast<float>(x) / w;
      img.at(x, y, 1) = static_cast<float>(y) / h;
      img.at(x, y, 2) = static_cast<float>((x * 7 + y * 3) % 11) / 11.0f;
    }
  }
  return img;
}

TEST(Cifar, SingleBlackRecord) {
  const auto p = temp_file("zero.bin");
  write_bytes(p, std::vector<unsigned char>(kCifarRecordBytes, 0));
  const auto recs = load_cifar(p.string());
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].label, 0);
  EXPECT_EQ(recs[0].pixels.width, 32);
  for (float v : recs[0].pixels.pixels) EXPECT_EQ(v, 0.0f);
}

TEST(Cifar, RedPlaneFixture) {
  // Label 7, R plane all 255, G and B planes 0.
  std::vector<unsigned char> rec(kCifarRecordBytes, 0);
  rec[0] = 7;
  for (int i = 0; i < 1024; ++i) rec[static_cast<std::size_t>(1 + i)] = 255;
  const auto p = temp_file("red.bin");
  write_bytes(p, rec);
  const auto recs = load_cifar(p.string());
  ASSERT_EQ(recs.size(), 1u);
  EXPECT_EQ(recs[0].label, 7);
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      EXPECT_EQ(recs[0].pixels.at(x, y, 0), 1.0f);
      EXPECT_EQ(recs[0].pixels.at(x, y, 1), 0.0f);
      EXPECT_EQ(recs[0].pixels.at(x, y, 2), 0.0f);
    }
  }
}

TEST(Cifar, PlaneLayoutIsRowMajor) {
  std::vector<unsigned char> rec(kCifarRecordBytes, 0);
  rec[1 + 1024 + 2 * 32 + 5] = 51;  // G plane, row 2, column 5
  const auto p = temp_file("one_pixel.bin");
  write_bytes(p, rec);
  const auto recs = load_cifar(p.string());
  EXPECT_FLOAT_EQ(recs[0].pixels.at(5, 2, 1), 51.0f / 255.0f);
  EXPECT_EQ(recs[0].pixels.at(2, 5, 1), 0.0f);
}

TEST(Cifar, TruncatedAndBadLabel) {
  const auto p = temp_file("short.bin");
  write_bytes(p, std::vector<unsigned char>(kCifarRecordBytes + 10, 0));
  EXPECT_THROW(load_cifar(p.string()), std::runtime_error);
  std::vector<unsigned char> rec(kCifarRecordBytes, 0);
  rec[0] = 10;
  write_bytes(p, rec);
  try {
    load_cifar(p.string());
    FAIL() << "expected a label error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("label"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_cifar(temp_file("missing.bin").string() + "x"), std::runtime_error);
}

TEST(Cifar, SaveLoadRoundTrip) {
  auto recs = synth_dataset({3, 2, 32, 5});
  // Quantise so the byte round trip is exact.
  for (auto& r : recs) {
    for (float& v : r.pixels.pixels) v = std::round(v * 255.0f) / 255.0f;
  }
  const auto p = temp_file("roundtrip.bin");
  save_cifar(p.string(), recs);
  EXPECT_EQ(fs::file_size(p), recs.size() * kCifarRecordBytes);
  const auto back = load_cifar(p.string());
  ASSERT_EQ(back.size(), recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(back[i].label, recs[i].label);
    for (std::size_t k = 0; k < recs[i].pixels.pixels.size(); ++k) {
      EXPECT_NEAR(back[i].pixels.pixels[k], recs[i].pixels.pixels[k], 1e-6);
    }
  }
}

TEST(Synth, DeterministicAndValidated) {
  const auto a = synth_dataset({4, 3, 32, 9});
  const auto b = synth_dataset({4, 3, 32, 9});
  ASSERT_EQ(a.size(), 12u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].pixels, b[i].pixels);
    EXPECT_EQ(a[i].label, b[i].label);
    for (float v : a[i].pixels.pixels) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
  }
  EXPECT_NE(synth_dataset({4, 3, 32, 10})[0].pixels, a[0].pixels);
  EXPECT_THROW(synth_dataset({0, 2, 32, 0}), std::invalid_argument);
}

TEST(Synth, NearestCentroidBeatsChance) {
  const auto train = synth_dataset({40, 2, 32, 1});
  const auto test = synth_dataset({40, 2, 32, 2});
  std::vector<std::vector<double>> centroid(2, std::vector<double>(32 * 32 * 3, 0.0));
  std::vector<int> count(2, 0);
  for (const auto& r : train) {
    ++count[static_cast<std::size_t>(r.label)];
    for (std::size_t k = 0; k < r.pixels.pixels.size(); ++k) {
      centroid[static_cast<std::size_t>(r.label)][k] += r.pixels.pixels[k];
    }
  }
  for (int c = 0; c < 2; ++c) {
    for (double& v : centroid[static_cast<std::size_t>(c)]) v /= count[static_cast<std::size_t>(c)];
  }
  int correct = 0;
  for (const auto& r : test) {
    double best = 1e300;
    int label = -1;
    for (int c = 0; c < 2; ++c) {
      double d = 0;
      for (std::size_t k = 0; k < r.pixels.pixels.size(); ++k) {
        const double e = r.pixels.pixels[k] - centroid[static_cast<std::size_t>(c)][k];
        d += e * e;
      }
      if (d < best) {
        best = d;
        label = c;
      }
    }
    correct += label == r.label;
  }
  // Chance is 40/80; require well beyond 3 binomial sigma (~13).
  EXPECT_GT(correct, 40 + 14);
}

TEST(Synth, ManifestRoundTrip) {
  const auto p = temp_file("manifest.txt");
  const SynthSpec spec{12, 3, 16, 77};
  write_synth_manifest(p.string(), spec);
  const SynthSpec back = read_synth_manifest(p.string());
  EXPECT_EQ(back.per_class, 12);
  EXPECT_EQ(back.classes, 3);
  EXPECT_EQ(back.image_size, 16);
  EXPECT_EQ(back.seed, 77u);
  {
    std::ofstream f(p, std::ios::app);
    f << "colour 3\n";
  }
  EXPECT_THROW(read_synth_manifest(p.string()), std::runtime_error);
}

TEST(Augment, CifarPresetValues) {
  const AugmentParams p = AugmentParams::cifar();
  EXPECT_EQ(p.crop.area_min, 0.15);
  EXPECT_EQ(p.crop.area_max, 1.0);
  EXPECT_EQ(p.crop.ratio_min, 3.0 / 4.0);
  EXPECT_EQ(p.crop.ratio_max, 4.0 / 3.0);
  EXPECT_EQ(p.flip_prob, 0.5);
  EXPECT_EQ(p.jitter_prob, 0.8);
  EXPECT_EQ(p.brightness, 0.4);
  EXPECT_EQ(p.contrast, 0.4);
  EXPECT_EQ(p.saturation, 0.4);
  EXPECT_EQ(p.hue, 0.1);
  EXPECT_EQ(p.grayscale_prob, 0.2);
  EXPECT_EQ(p.blur_prob, 0.0);
  EXPECT_EQ(p.solarize_prob, 0.0);
  EXPECT_EQ(AugmentParams::imagenet_view1().saturation, 0.2);
}

TEST(Augment, IdentityConfiguration) {
  const Image img = gradient_image(32, 32);
  Rng rng(1);
  const AugmentedView v = augment(img, AugmentParams::identity(32), rng, 4);
  EXPECT_EQ(v.crop.rect, (Rect{0, 0, 32, 32}));
  EXPECT_FALSE(v.crop.flip);
  EXPECT_EQ(v.crop.source_id, 4u);
  EXPECT_EQ(v.pixels, img);
}

TEST(Augment, FlipAlwaysMirrors) {
  const Image img = gradient_image(32, 32);
  AugmentParams p = AugmentParams::identity(32);
  p.flip_prob = 1.0;
  Rng rng(2);
  const AugmentedView v = augment(img, p, rng);
  EXPECT_TRUE(v.crop.flip);
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      for (int c = 0; c < 3; ++c) EXPECT_EQ(v.pixels.at(x, y, c), img.at(31 - x, y, c));
    }
  }
}

TEST(Augment, GrayscaleEqualisesChannels) {
  const Image img = gradient_image(16, 16);
  AugmentParams p = AugmentParams::identity(16);
  p.grayscale_prob = 1.0;
  Rng rng(3);
  const AugmentedView v = augment(img, p, rng);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      EXPECT_EQ(v.pixels.at(x, y, 0), v.pixels.at(x, y, 1));
      EXPECT_EQ(v.pixels.at(x, y, 1), v.pixels.at(x, y, 2));
    }
  }
}

TEST(Augment, ColorNeverChangesGeometry) {
  const Image img = gradient_image(40, 40);
  AugmentParams plain = AugmentParams::cifar(32);
  plain.jitter_prob = 0.0;
  plain.grayscale_prob = 0.0;
  AugmentParams colored = AugmentParams::cifar(32);
  colored.jitter_prob = 1.0;
  colored.grayscale_prob = 1.0;
  colored.solarize_prob = 1.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng a(s), b(s);
    const auto va = augment(img, plain, a);
    const auto vb = augment(img, colored, b);
    EXPECT_EQ(va.crop.rect, vb.crop.rect);
    EXPECT_EQ(va.crop.flip, vb.crop.flip);
  }
}

TEST(Augment, CropsStayInsideImageAndAreDeterministic) {
  const Image img = gradient_image(48, 40);
  const AugmentParams p = AugmentParams::cifar(32);
  for (std::uint64_t s = 0; s < 50; ++s) {
    Rng a(s), b(s);
    const auto va = augment(img, p, a);
    const auto vb = augment(img, p, b);
    EXPECT_EQ(va.pixels, vb.pixels);
    EXPECT_NO_THROW(va.crop.validate());
    const double area = va.crop.rect.area() / (48.0 * 40.0);
    EXPECT_GE(area, 0.15 - 1e-9);
    EXPECT_LE(area, 1.0 + 1e-9);
    for (double u : {0.5, 10.5, 31.5}) {
      for (double v : {0.5, 20.5, 31.5}) {
        const Point q = va.crop.view_to_image({u, v});
        EXPECT_GE(q.x, 0.0);
        EXPECT_LE(q.x, 48.0);
        EXPECT_GE(q.y, 0.0);
        EXPECT_LE(q.y, 40.0);
      }
    }
    for (float x : va.pixels.pixels) {
      EXPECT_GE(x, 0.0f);
      EXPECT_LE(x, 1.0f);
    }
  }
}

TEST(Augment, DegenerateCropFallsBack) {
  const Image img = gradient_image(2, 2);
  AugmentParams p = AugmentParams::cifar(4);
  p.crop.area_min = 0.01;
  p.crop.area_max = 0.02;
  Rng rng(5);
  const auto v = augment(img, p, rng);
  EXPECT_GE(v.crop.rect.width(), 1.0);
  EXPECT_GE(v.crop.rect.height(), 1.0);
}

TEST(Ppm, RoundTripAndMagic) {
  Image img(5, 3);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    img.pixels[i] = static_cast<float>(i % 256) / 255.0f;
  }
  const auto p = temp_file("img.ppm");
  write_ppm(p.string(), img);
  std::ifstream f(p, std::ios::binary);
  char magic[2];
  f.read(magic, 2);
  EXPECT_EQ(std::string(magic, 2), "P6");
  const Image back = read_ppm(p.string());
  EXPECT_EQ(back.width, 5);
  EXPECT_EQ(back.height, 3);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    EXPECT_NEAR(back.pixels[i], img.pixels[i], 1e-6);
  }
  EXPECT_THROW(read_ppm(temp_file("nope.ppm").string()), std::runtime_error);
}

}  // namespace
}  // namespace aps
