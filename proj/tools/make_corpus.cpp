// Regenerates the bundled synthetic corpus (data/corpus): 100 RGB images,
// 64x64, smooth gradients with one high-frequency "hard" quadrant planted in
// the first 25 images at strictly decreasing amplitude. The planted patches
// dominate any linear-reconstruction difficulty score, giving the distill
// tests a corpus with known hardness structure.
#include <cstdio>
#include <filesystem>
#include <string>

#include "prunekit/image.hpp"
#include "prunekit/rng.hpp"

int main(int argc, char** argv) {
  const std::string out_dir = argc > 1 ? argv[1] : "data/corpus";
  std::filesystem::create_directories(out_dir);

  prunekit::Rng rng(20240);
  for (int i = 0; i < 100; ++i) {
    prunekit::Image img = prunekit::make_image(64, 64, 3);
    const double base[3] = {40.0 + rng.uniform() * 120.0,
                            40.0 + rng.uniform() * 120.0,
                            40.0 + rng.uniform() * 120.0};
    const bool vertical = rng.uniform() < 0.5;
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        const double t = (vertical ? y : x) / 63.0;
        for (int c = 0; c < 3; ++c) {
          const double v = base[c] + 60.0 * t;
          img.at(y, x, c) = static_cast<std::uint8_t>(
              v < 0 ? 0 : (v > 255 ? 255 : v + 0.5));
        }
      }

    if (i < 25) {
      const int quadrant = i % 4;
      const int y0 = (quadrant / 2) * 32;
      const int x0 = (quadrant % 2) * 32;
      const double amplitude = 140.0 - 4.0 * i;  // strictly decreasing hardness
      for (int y = y0; y < y0 + 32; ++y)
        for (int x = x0; x < x0 + 32; ++x)
          for (int c = 0; c < 3; ++c) {
            const double v = img.at(y, x, c) + amplitude * (rng.uniform() - 0.5);
            img.at(y, x, c) = static_cast<std::uint8_t>(
                v < 0 ? 0 : (v > 255 ? 255 : v + 0.5));
          }
    }

    char name[32];
    std::snprintf(name, sizeof name, "img_%03d.png", i);
    prunekit::write_png(out_dir + "/" + name, img);
  }
  std::printf("wrote 100 images to %s\n", out_dir.c_str());
  return 0;
}
