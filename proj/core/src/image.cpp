#include "spikefuse/image.hpp"

#include <cstdio>

#include <png.h>

#include "spikefuse/audio.hpp"  // resize_bilinear

namespace spikefuse {

namespace {

struct FileCloser {
    std::FILE* f;
    ~FileCloser() {
        if (f) std::fclose(f);
    }
};

}  // namespace

Image load_png(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    check(f != nullptr, "cannot open PNG file '", path, "'");
    FileCloser closer{f};

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    check(png != nullptr, "libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        fail("libpng info init failed");
    }
    std::vector<png_bytep> rows;
    Image img;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail("corrupt PNG file '", path, "'");
    }
    png_init_io(png, f);
    png_read_info(png, info);

    // normalize any input layout to 8-bit RGB
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);

    img.height = png_get_image_height(png, info);
    img.width = png_get_image_width(png, info);
    check(img.height > 0 && img.width > 0, "empty PNG '", path, "'");
    check(png_get_rowbytes(png, info) == img.width * 3, "unexpected PNG row layout in '", path,
          "'");
    img.rgb.resize(img.height * img.width * 3);
    rows.resize(img.height);
    for (std::size_t y = 0; y < img.height; ++y) rows[y] = img.rgb.data() + y * img.width * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void save_png(const std::string& path, const Image& img) {
    check(img.rgb.size() == img.height * img.width * 3, "image buffer size mismatch");
    std::FILE* f = std::fopen(path.c_str(), "wb");
    check(f != nullptr, "cannot write PNG file '", path, "'");
    FileCloser closer{f};

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    check(png != nullptr, "libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        fail("libpng info init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail("PNG write failed for '", path, "'");
    }
    png_init_io(png, f);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
                 static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(img.height);
    std::vector<unsigned char> buf = img.rgb;
    for (std::size_t y = 0; y < img.height; ++y) rows[y] = buf.data() + y * img.width * 3;
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image load_ppm(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    check(f != nullptr, "cannot open PPM file '", path, "'");
    FileCloser closer{f};
    char magic[3] = {0};
    unsigned w = 0, h = 0, maxv = 0;
    check(std::fscanf(f, "%2s %u %u %u", magic, &w, &h, &maxv) == 4 &&
              std::string(magic) == "P6" && maxv == 255,
          "'", path, "' is not an 8-bit P6 PPM");
    std::fgetc(f);  // single whitespace after header
    Image img;
    img.height = h;
    img.width = w;
    img.rgb.resize(std::size_t(h) * w * 3);
    check(std::fread(img.rgb.data(), 1, img.rgb.size(), f) == img.rgb.size(),
          "truncated PPM '", path, "'");
    return img;
}

void save_ppm(const std::string& path, const Image& img) {
    check(img.rgb.size() == img.height * img.width * 3, "image buffer size mismatch");
    std::FILE* f = std::fopen(path.c_str(), "wb");
    check(f != nullptr, "cannot write PPM file '", path, "'");
    FileCloser closer{f};
    std::fprintf(f, "P6\n%zu %zu\n255\n", img.width, img.height);
    check(std::fwrite(img.rgb.data(), 1, img.rgb.size(), f) == img.rgb.size(),
          "write failed for '", path, "'");
}

std::vector<double> image_to_planes(const Image& img, std::size_t hw) {
    check(img.height > 0 && img.width > 0, "empty image");
    std::vector<double> out(3 * hw * hw);
    std::vector<double> plane(img.height * img.width);
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < img.height * img.width; ++i)
            plane[i] = img.rgb[i * 3 + c] / 255.0;
        std::vector<double> resized = resize_bilinear(plane, img.height, img.width, hw, hw);
        std::copy(resized.begin(), resized.end(), out.begin() + c * hw * hw);
    }
    return out;
}

}  // namespace spikefuse
