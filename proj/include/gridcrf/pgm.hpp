#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace gridcrf {

struct PgmImage {
    int width = 0;
    int height = 0;
    int maxval = 255;
    std::vector<int> pixels; // row-major
};

// P5 (binary) writer for grayscale payloads, maxval <= 255.
void write_pgm_p5(const std::filesystem::path& path, const PgmImage& img);

// P2 (ASCII) writer, used for label maps (pixel value = label index).
void write_pgm_p2(const std::filesystem::path& path, const PgmImage& img);

// Reads P2 or P5. Header: magic, whitespace-separated width/height/maxval
// ('#' comments allowed), one whitespace byte, payload.
PgmImage read_pgm(const std::filesystem::path& path);

// round(255*v) of values in [0,1], clamped.
PgmImage to_gray(const std::vector<double>& values, int width, int height);

} // namespace gridcrf
