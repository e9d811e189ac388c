#include "samct/errors.hpp"
#include "samct/ingest.hpp"

#include <png.h>
#include <zlib.h>

#include <cstring>
#include <fstream>
#include <regex>

namespace samct::ingest {
namespace fs = std::filesystem;

namespace {

std::vector<char> read_all_gz(const fs::path& path) {
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (!f) throw DataError("cannot open " + path.string());
  std::vector<char> out;
  char buf[1 << 16];
  int n;
  while ((n = gzread(f, buf, sizeof(buf))) > 0) out.insert(out.end(), buf, buf + n);
  const bool failed = n < 0;
  gzclose(f);
  if (failed) throw DataError("read error in " + path.string());
  return out;
}

template <class T>
T load_le(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

template <class Src>
void convert(const char* src, size_t count, std::vector<float>& dst) {
  dst.resize(count);
  for (size_t i = 0; i < count; ++i) dst[i] = static_cast<float>(load_le<Src>(src + i * sizeof(Src)));
}

bool convert_typed(const std::string& code, const char* src, size_t count, std::vector<float>& dst) {
  if (code == "u1") convert<std::uint8_t>(src, count, dst);
  else if (code == "i1") convert<std::int8_t>(src, count, dst);
  else if (code == "i2") convert<std::int16_t>(src, count, dst);
  else if (code == "u2") convert<std::uint16_t>(src, count, dst);
  else if (code == "i4") convert<std::int32_t>(src, count, dst);
  else if (code == "f4") convert<float>(src, count, dst);
  else if (code == "f8") convert<double>(src, count, dst);
  else return false;
  return true;
}

size_t code_size(const std::string& code) { return static_cast<size_t>(code[1] - '0'); }

}  // namespace

Volume read_nifti(const fs::path& path) {
  const auto bytes = read_all_gz(path);
  if (bytes.size() < 352) throw DataError("nifti: truncated header in " + path.string());
  if (load_le<std::int32_t>(bytes.data()) != 348) throw DataError("nifti: not a little-endian NIfTI-1 file: " + path.string());
  if (std::memcmp(bytes.data() + 344, "n+1", 3) != 0) throw DataError("nifti: only single-file .nii is supported: " + path.string());
  const char* h = bytes.data();
  const auto ndim = load_le<std::int16_t>(h + 40);
  if (ndim < 2 || ndim > 4) throw DataError("nifti: unsupported dimensionality " + std::to_string(ndim));
  const int64_t nx = load_le<std::int16_t>(h + 42);
  const int64_t ny = load_le<std::int16_t>(h + 44);
  const int64_t nz = ndim >= 3 ? load_le<std::int16_t>(h + 46) : 1;
  if (ndim == 4 && load_le<std::int16_t>(h + 48) > 1) throw DataError("nifti: 4D series are not supported");
  const auto datatype = load_le<std::int16_t>(h + 70);
  const auto vox_offset = static_cast<size_t>(load_le<float>(h + 108));
  const float slope = load_le<float>(h + 112);
  const float inter = load_le<float>(h + 116);

  std::string code;
  switch (datatype) {
    case 2: code = "u1"; break;
    case 4: code = "i2"; break;
    case 8: code = "i4"; break;
    case 16: code = "f4"; break;
    case 64: code = "f8"; break;
    case 256: code = "i1"; break;
    case 512: code = "u2"; break;
    default: throw DataError("nifti: unsupported datatype " + std::to_string(datatype));
  }
  Volume v;
  v.shape = {nz, ny, nx};
  const size_t count = v.voxel_count();
  if (bytes.size() < vox_offset + count * code_size(code)) throw DataError("nifti: truncated voxel data in " + path.string());
  convert_typed(code, bytes.data() + vox_offset, count, v.data);
  if (slope != 0.0f && (slope != 1.0f || inter != 0.0f))
    for (auto& x : v.data) x = x * slope + inter;
  return v;
}

void write_nifti(const fs::path& path, const Volume& volume) {
  std::vector<char> hdr(352, 0);
  auto put = [&](size_t off, auto value) { std::memcpy(hdr.data() + off, &value, sizeof(value)); };
  put(0, std::int32_t{348});
  put(40, std::int16_t{3});
  put(42, static_cast<std::int16_t>(volume.shape[2]));
  put(44, static_cast<std::int16_t>(volume.shape[1]));
  put(46, static_cast<std::int16_t>(volume.shape[0]));
  put(48, std::int16_t{1});
  put(50, std::int16_t{1});
  put(52, std::int16_t{1});
  put(54, std::int16_t{1});
  put(70, std::int16_t{16});
  put(72, std::int16_t{32});
  for (int i = 0; i < 4; ++i) put(76 + 4 * i, 1.0f);
  put(108, 352.0f);
  put(112, 1.0f);
  std::memcpy(hdr.data() + 344, "n+1\0", 4);
  const bool gz = path.string().ends_with(".gz");
  gzFile f = gzopen(path.string().c_str(), gz ? "wb6" : "wbT");
  if (!f) throw DataError("nifti: cannot write " + path.string());
  gzwrite(f, hdr.data(), static_cast<unsigned>(hdr.size()));
  gzwrite(f, volume.data.data(), static_cast<unsigned>(volume.data.size() * sizeof(float)));
  gzclose(f);
}

Volume read_npy(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("npy: cannot open " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 10 || std::memcmp(bytes.data(), "\x93NUMPY", 6) != 0) throw DataError("npy: bad magic in " + path.string());
  const int major = static_cast<unsigned char>(bytes[6]);
  size_t header_len = 0;
  size_t header_start = 0;
  if (major == 1) {
    header_len = load_le<std::uint16_t>(bytes.data() + 8);
    header_start = 10;
  } else {
    header_len = load_le<std::uint32_t>(bytes.data() + 8);
    header_start = 12;
  }
  if (bytes.size() < header_start + header_len) throw DataError("npy: truncated header in " + path.string());
  const std::string header(bytes.data() + header_start, header_len);

  std::smatch m;
  if (!std::regex_search(header, m, std::regex(R"('descr'\s*:\s*'([<|>=])([a-z]\d)')"))) throw DataError("npy: missing descr");
  if (m[1] == ">") throw DataError("npy: big-endian arrays are not supported");
  const std::string code = m[2];
  if (std::regex_search(header, m, std::regex(R"('fortran_order'\s*:\s*True)"))) throw DataError("npy: fortran order is not supported");
  if (!std::regex_search(header, m, std::regex(R"('shape'\s*:\s*\(([^)]*)\))"))) throw DataError("npy: missing shape");
  std::vector<int64_t> dims;
  const std::string shape_str = m[1];
  std::regex num(R"(\d+)");
  for (auto it = std::sregex_iterator(shape_str.begin(), shape_str.end(), num); it != std::sregex_iterator(); ++it)
    dims.push_back(std::stoll(it->str()));
  if (dims.size() == 2) dims.insert(dims.begin(), 1);
  if (dims.size() != 3) throw DataError("npy: expected a 2D or 3D array in " + path.string());

  Volume v;
  v.shape = {dims[0], dims[1], dims[2]};
  const size_t count = v.voxel_count();
  const size_t offset = header_start + header_len;
  if (code.size() != 2 || bytes.size() < offset + count * code_size(code)) throw DataError("npy: truncated data in " + path.string());
  if (!convert_typed(code, bytes.data() + offset, count, v.data)) throw DataError("npy: unsupported dtype " + code);
  return v;
}

void write_npy(const fs::path& path, const Volume& volume) {
  std::string header = "{'descr': '<f4', 'fortran_order': False, 'shape': (" + std::to_string(volume.shape[0]) + ", " +
                       std::to_string(volume.shape[1]) + ", " + std::to_string(volume.shape[2]) + "), }";
  const size_t total = 10 + header.size() + 1;
  header.append((64 - total % 64) % 64, ' ');
  header.push_back('\n');
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("npy: cannot write " + path.string());
  out.write("\x93NUMPY\x01\x00", 8);
  const auto len = static_cast<std::uint16_t>(header.size());
  out.write(reinterpret_cast<const char*>(&len), 2);
  out << header;
  out.write(reinterpret_cast<const char*>(volume.data.data()), static_cast<std::streamsize>(volume.data.size() * sizeof(float)));
}

Volume read_volume(const fs::path& path) {
  const auto name = path.filename().string();
  if (name.ends_with(".npy")) return read_npy(path);
  if (name.ends_with(".nii") || name.ends_with(".nii.gz")) return read_nifti(path);
  throw DataError("unsupported volume format: " + path.string());
}

Image8 read_png(const fs::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str()))
    throw DataError("png: cannot read " + path.string() + ": " + image.message);
  image.format = PNG_FORMAT_GRAY;
  Image8 out(static_cast<int>(image.height), static_cast<int>(image.width));
  if (!png_image_finish_read(&image, nullptr, out.data.data(), 0, nullptr)) {
    png_image_free(&image);
    throw DataError("png: decode failed for " + path.string() + ": " + image.message);
  }
  return out;
}

void write_png(const fs::path& path, const Image8& img) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, img.data.data(), 0, nullptr))
    throw DataError("png: cannot write " + path.string() + ": " + image.message);
}

Mask read_mask_png(const fs::path& path) {
  Mask m = read_png(path);
  for (auto& v : m.data) v = v >= 128 ? 1 : 0;
  return m;
}

void write_mask_png(const fs::path& path, const Mask& mask) {
  Image8 img = mask;
  for (auto& v : img.data) v = v ? 255 : 0;
  write_png(path, img);
}

}  // namespace samct::ingest
