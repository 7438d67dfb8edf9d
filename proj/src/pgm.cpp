#include "gridcrf/pgm.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

namespace gridcrf {

namespace {

void check_image(const PgmImage& img) {
    if (img.width < 1 || img.height < 1)
        throw std::invalid_argument("pgm: empty image");
    if (img.maxval < 1 || img.maxval > 65535)
        throw std::invalid_argument("pgm: maxval out of range");
    if (img.pixels.size() != static_cast<size_t>(img.width) * static_cast<size_t>(img.height))
        throw std::invalid_argument("pgm: pixel count mismatch");
    for (int v : img.pixels)
        if (v < 0 || v > img.maxval) throw std::invalid_argument("pgm: pixel out of range");
}

// Skips whitespace and '#' comment lines, then reads one unsigned integer.
int read_header_int(std::istream& in) {
    int c = in.get();
    for (;;) {
        while (c != EOF && std::isspace(c)) c = in.get();
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
            continue;
        }
        break;
    }
    if (c == EOF || !std::isdigit(c)) throw std::runtime_error("pgm: malformed header");
    int value = 0;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        c = in.get();
    }
    if (c != EOF) in.unget();
    return value;
}

} // namespace

void write_pgm_p5(const std::filesystem::path& path, const PgmImage& img) {
    check_image(img);
    if (img.maxval > 255) throw std::invalid_argument("pgm: P5 writer supports maxval <= 255");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << "P5\n" << img.width << ' ' << img.height << '\n' << img.maxval << '\n';
    std::vector<unsigned char> bytes(img.pixels.size());
    for (size_t i = 0; i < bytes.size(); ++i)
        bytes[i] = static_cast<unsigned char>(img.pixels[i]);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_pgm_p2(const std::filesystem::path& path, const PgmImage& img) {
    check_image(img);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << "P2\n" << img.width << ' ' << img.height << '\n' << img.maxval << '\n';
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            if (c) out << ' ';
            out << img.pixels[static_cast<size_t>(r) * img.width + c];
        }
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

PgmImage read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    char m0 = 0, m1 = 0;
    in.get(m0);
    in.get(m1);
    if (m0 != 'P' || (m1 != '2' && m1 != '5')) throw std::runtime_error("pgm: bad magic");
    PgmImage img;
    img.width = read_header_int(in);
    img.height = read_header_int(in);
    img.maxval = read_header_int(in);
    img.pixels.resize(static_cast<size_t>(img.width) * static_cast<size_t>(img.height));
    if (m1 == '5') {
        in.get(); // the single whitespace byte after maxval
        if (img.maxval > 255) throw std::runtime_error("pgm: 16-bit P5 not supported");
        std::vector<unsigned char> bytes(img.pixels.size());
        in.read(reinterpret_cast<char*>(bytes.data()),
                static_cast<std::streamsize>(bytes.size()));
        if (!in) throw std::runtime_error("pgm: truncated payload");
        for (size_t i = 0; i < bytes.size(); ++i) img.pixels[i] = bytes[i];
    } else {
        for (int& v : img.pixels) v = read_header_int(in);
    }
    check_image(img);
    return img;
}

PgmImage to_gray(const std::vector<double>& values, int width, int height) {
    PgmImage img;
    img.width = width;
    img.height = height;
    img.maxval = 255;
    img.pixels.resize(values.size());
    for (size_t i = 0; i < values.size(); ++i) {
        const double v = std::clamp(values[i], 0.0, 1.0);
        img.pixels[i] = static_cast<int>(std::lround(255.0 * v));
    }
    return img;
}

} // namespace gridcrf
