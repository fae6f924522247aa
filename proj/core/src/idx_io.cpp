#include "fact/idx_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <vector>

#include "fact/errors.hpp"

namespace fact {

namespace {

uint32_t read_be32(std::ifstream& in, const std::string& path, size_t offset) {
  unsigned char buf[4];
  if (!in.read(reinterpret_cast<char*>(buf), 4)) {
    throw FormatError(path + ": truncated at byte offset " + std::to_string(offset));
  }
  return (uint32_t(buf[0]) << 24) | (uint32_t(buf[1]) << 16) | (uint32_t(buf[2]) << 8) |
         uint32_t(buf[3]);
}

void write_be32(std::ofstream& out, uint32_t v) {
  unsigned char buf[4] = {static_cast<unsigned char>(v >> 24),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(buf), 4);
}

std::vector<unsigned char> read_payload(std::ifstream& in, const std::string& path,
                                        size_t count, size_t header_bytes) {
  std::vector<unsigned char> data(count);
  if (count > 0 && !in.read(reinterpret_cast<char*>(data.data()),
                            static_cast<std::streamsize>(count))) {
    size_t got = static_cast<size_t>(in.gcount());
    throw FormatError(path + ": truncated payload at byte offset " +
                      std::to_string(header_bytes + got) + " (expected " +
                      std::to_string(header_bytes + count) + " bytes)");
  }
  return data;
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw FormatError(images_path + ": cannot open");
  uint32_t magic = read_be32(img, images_path, 0);
  if (magic != kIdxImageMagic) {
    throw FormatError(images_path + ": bad magic, expected 0x00000803");
  }
  uint32_t count = read_be32(img, images_path, 4);
  uint32_t rows = read_be32(img, images_path, 8);
  uint32_t cols = read_be32(img, images_path, 12);
  size_t pixels = size_t(count) * rows * cols;
  std::vector<unsigned char> raw = read_payload(img, images_path, pixels, 16);

  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw FormatError(labels_path + ": cannot open");
  uint32_t lmagic = read_be32(lab, labels_path, 0);
  if (lmagic != kIdxLabelMagic) {
    throw FormatError(labels_path + ": bad magic, expected 0x00000801");
  }
  uint32_t lcount = read_be32(lab, labels_path, 4);
  if (lcount != count) {
    throw FormatError("idx: image count " + std::to_string(count) +
                      " != label count " + std::to_string(lcount));
  }
  std::vector<unsigned char> lraw = read_payload(lab, labels_path, lcount, 8);

  if (count == 0) throw FormatError(images_path + ": empty image file");

  Tensor features({count, size_t(rows) * cols});
  for (size_t i = 0; i < pixels; ++i) features[i] = raw[i] / 255.0;
  std::vector<int> labels(lraw.begin(), lraw.end());
  int num_classes = 0;
  for (int y : labels) num_classes = std::max(num_classes, y + 1);

  Dataset ds{std::move(features), std::move(labels), images_path, num_classes};
  ds.validate();
  return ds;
}

void save_idx(const Dataset& ds, const std::string& images_path,
              const std::string& labels_path, size_t rows, size_t cols) {
  ds.validate();
  if (!ds.labeled()) throw InputError("save_idx: requires labels");
  if (rows * cols != ds.dim()) {
    throw InputError("save_idx: rows*cols " + std::to_string(rows * cols) +
                     " != feature dim " + std::to_string(ds.dim()));
  }
  std::ofstream img(images_path, std::ios::binary);
  if (!img) throw IoError("save_idx: cannot open " + images_path);
  write_be32(img, kIdxImageMagic);
  write_be32(img, static_cast<uint32_t>(ds.size()));
  write_be32(img, static_cast<uint32_t>(rows));
  write_be32(img, static_cast<uint32_t>(cols));
  for (size_t i = 0; i < ds.features.size(); ++i) {
    double v = std::clamp(ds.features[i], 0.0, 1.0);
    unsigned char byte = static_cast<unsigned char>(std::lround(v * 255.0));
    img.put(static_cast<char>(byte));
  }
  if (!img) throw IoError("save_idx: write failed for " + images_path);

  std::ofstream lab(labels_path, std::ios::binary);
  if (!lab) throw IoError("save_idx: cannot open " + labels_path);
  write_be32(lab, kIdxLabelMagic);
  write_be32(lab, static_cast<uint32_t>(ds.size()));
  for (int y : ds.labels) lab.put(static_cast<char>(static_cast<unsigned char>(y)));
  if (!lab) throw IoError("save_idx: write failed for " + labels_path);
}

}  // namespace fact
