#include "barkid/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "barkid/error.hpp"

namespace barkid {
namespace {

std::string lower_ext(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

std::vector<uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open image " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Image decode_png(const std::vector<uint8_t>& bytes, const std::filesystem::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
    throw Error(ErrorCode::kFormat, "invalid PNG " + path.string() + ": " + png.message);
  }
  const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
  png.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const uint32_t channels = color ? 3 : 1;
  std::vector<uint8_t> data(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, data.data(), 0, nullptr)) {
    png_image_free(&png);
    throw Error(ErrorCode::kFormat, "failed to decode PNG " + path.string());
  }
  return Image(png.width, png.height, channels, std::move(data));
}

// Skips whitespace and '#' comments in a netpbm header.
int read_pnm_int(std::istream& in) {
  while (true) {
    const int c = in.peek();
    if (c == '#') {
      std::string ignored;
      std::getline(in, ignored);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int v = -1;
  in >> v;
  return v;
}

Image decode_pnm(const std::vector<uint8_t>& bytes, const std::filesystem::path& path) {
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  std::string magic;
  in >> magic;
  const uint32_t channels = magic == "P5" ? 1 : 3;
  const int w = read_pnm_int(in);
  const int h = read_pnm_int(in);
  const int maxval = read_pnm_int(in);
  if (w <= 0 || h <= 0 || maxval != 255) {
    throw Error(ErrorCode::kFormat, "unsupported netpbm header in " + path.string());
  }
  in.get();
  const size_t n = static_cast<size_t>(w) * h * channels;
  std::vector<uint8_t> data(n);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(in.gcount()) != n) {
    throw Error(ErrorCode::kFormat, "truncated netpbm data in " + path.string());
  }
  return Image(static_cast<uint32_t>(w), static_cast<uint32_t>(h), channels, std::move(data));
}

}  // namespace

Image read_image(const std::filesystem::path& path) {
  const std::vector<uint8_t> bytes = slurp(path);
  if (bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0) {
    return decode_png(bytes, path);
  }
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6')) {
    return decode_pnm(bytes, path);
  }
  throw Error(ErrorCode::kFormat, "unsupported image format: " + path.string());
}

void write_image(const Image& img, const std::filesystem::path& path) {
  const std::string ext = lower_ext(path);
  if (ext == ".png") {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    png.width = img.width();
    png.height = img.height();
    png.format = img.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&png, path.string().c_str(), 0, img.data().data(), 0,
                                 nullptr)) {
      throw Error(ErrorCode::kIo, "cannot write PNG " + path.string() + ": " + png.message);
    }
    return;
  }
  if (ext == ".pgm" || ext == ".ppm") {
    const bool want_color = ext == ".ppm";
    if (want_color != (img.channels() == 3)) {
      throw Error(ErrorCode::kFormat, "channel count does not match " + ext);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
    out << (want_color ? "P6" : "P5") << '\n'
        << img.width() << ' ' << img.height() << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.data().data()),
              static_cast<std::streamsize>(img.data().size()));
    return;
  }
  throw Error(ErrorCode::kFormat, "unsupported image extension: " + path.string());
}

}  // namespace barkid
