// Copyright 2026 The LGD Authors.
// SPDX-License-Identifier: Apache-2.0

#include "lgd/dataio.hpp"

#include <zlib.h>

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <system_error>

#include "lgd/json_util.hpp"

namespace lgd {

namespace fs = std::filesystem;

namespace {

constexpr std::array<std::uint8_t, 4> kMagic = {'L', 'G', 'D', 'E'};

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(v);
  for (std::size_t k = 0; k < sizeof(T); ++k) {
    out.push_back(static_cast<std::uint8_t>(u & 0xffu));
    u = static_cast<U>(u >> 8);
  }
}

template <typename T>
T get_le(std::span<const std::uint8_t> bytes, std::size_t offset) {
  using U = std::make_unsigned_t<T>;
  U u = 0;
  for (std::size_t k = 0; k < sizeof(T); ++k) {
    u = static_cast<U>(u | (static_cast<U>(bytes[offset + k]) << (8 * k)));
  }
  return static_cast<T>(u);
}

std::size_t dtype_size(Dtype d) { return d == Dtype::kF32 ? 4 : 8; }

fs::path temp_sibling(const fs::path& path) {
  fs::path tmp = path;
  tmp += ".tmp";
  return tmp;
}

std::string trim_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong c = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks to stay within range.
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto n = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
    c = ::crc32(c, bytes.data() + off, n);
    off += n;
  }
  return static_cast<std::uint32_t>(c);
}

std::vector<std::uint8_t> encode_embeddings(const Matrix<double>& m, Dtype dtype) {
  if (m.rows() < 1 || m.cols() < 1) {
    throw ShapeError("encode_embeddings: empty matrix " + shape_str(m));
  }
  if (!m.allFinite()) throw InputError("encode_embeddings: non-finite entry");
  std::vector<std::uint8_t> out;
  out.reserve(kEmbeddingHeaderBytes + m.size() * dtype_size(dtype) + 4);
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  put_le<std::uint16_t>(out, kEmbeddingFormatVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
  out.push_back(static_cast<std::uint8_t>(dtype));
  const std::size_t payload_start = out.size();
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (dtype == Dtype::kF32) {
        put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(m(i, j))));
      } else {
        put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(m(i, j)));
      }
    }
  }
  const auto c = crc32(std::span(out).subspan(payload_start));
  put_le<std::uint32_t>(out, c);
  return out;
}

Matrix<double> decode_embeddings(std::span<const std::uint8_t> bytes, const std::string& origin) {
  if (bytes.size() < kEmbeddingHeaderBytes) {
    throw TruncatedFileError(origin + ": truncated header (" + std::to_string(bytes.size()) +
                             " bytes)");
  }
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw BadMagicError(origin + ": not an LGDE embedding file (bad magic)");
  }
  const auto version = get_le<std::uint16_t>(bytes, 4);
  if (version != kEmbeddingFormatVersion) {
    throw UnsupportedVersionError(origin + ": unsupported format version " +
                                  std::to_string(version));
  }
  const auto rows = get_le<std::uint32_t>(bytes, 6);
  const auto cols = get_le<std::uint32_t>(bytes, 10);
  const auto code = bytes[14];
  if (code > static_cast<std::uint8_t>(Dtype::kF64)) {
    throw UnsupportedDtypeError(origin + ": unsupported dtype code " + std::to_string(code));
  }
  if (rows == 0 || cols == 0) throw FormatError(origin + ": zero-sized matrix");
  const auto dtype = static_cast<Dtype>(code);
  const std::size_t payload = static_cast<std::size_t>(rows) * cols * dtype_size(dtype);
  if (bytes.size() < kEmbeddingHeaderBytes + payload + 4) {
    throw TruncatedFileError(origin + ": truncated payload (expected " +
                             std::to_string(kEmbeddingHeaderBytes + payload + 4) + " bytes, got " +
                             std::to_string(bytes.size()) + ")");
  }
  if (bytes.size() > kEmbeddingHeaderBytes + payload + 4) {
    throw FormatError(origin + ": trailing bytes after checksum");
  }
  const auto body = bytes.subspan(kEmbeddingHeaderBytes, payload);
  const auto stored = get_le<std::uint32_t>(bytes, kEmbeddingHeaderBytes + payload);
  if (crc32(body) != stored) throw CrcMismatchError(origin + ": payload CRC mismatch");
  Matrix<double> m(rows, cols);
  std::size_t off = 0;
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (dtype == Dtype::kF32) {
        m(i, j) = std::bit_cast<float>(get_le<std::uint32_t>(body, off));
        off += 4;
      } else {
        m(i, j) = std::bit_cast<double>(get_le<std::uint64_t>(body, off));
        off += 8;
      }
    }
  }
  return m;
}

std::vector<std::uint8_t> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for '" + path.string() + "'");
  return bytes;
}

void write_file_atomic(const fs::path& path, std::span<const std::uint8_t> bytes) {
  const fs::path tmp = temp_sibling(path);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename '" + tmp.string() + "' to '" + path.string() + "': " +
                        ec.message());
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string read_text(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

void write_embeddings(const fs::path& path, const Matrix<double>& m, Dtype dtype) {
  const auto bytes = encode_embeddings(m, dtype);
  write_file_atomic(path, bytes);
}

Matrix<double> read_embeddings(const fs::path& path) {
  const auto bytes = read_file_bytes(path);
  return decode_embeddings(bytes, path.string());
}

std::vector<std::string> read_names(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    line = trim_cr(line);
    if (line.empty()) continue;
    names.push_back(line);
  }
  return names;
}

void write_names(const fs::path& path, const std::vector<std::string>& names) {
  std::string text;
  for (const auto& n : names) {
    if (n.empty() || n.find('\n') != std::string::npos) {
      throw InputError("write_names: invalid category name");
    }
    text += n + "\n";
  }
  write_text_atomic(path, text);
}

std::vector<Index> read_labels(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::vector<Index> labels;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim_cr(line);
    if (line.empty()) continue;
    long long v = -1;
    const auto [ptr, ec] = std::from_chars(line.data(), line.data() + line.size(), v);
    if (ec != std::errc() || ptr != line.data() + line.size() || v < 0) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": bad label '" + line + "'");
    }
    labels.push_back(static_cast<Index>(v));
  }
  return labels;
}

void write_labels(const fs::path& path, const std::vector<Index>& labels) {
  std::string text;
  for (Index l : labels) text += std::to_string(l) + "\n";
  write_text_atomic(path, text);
}

TextualSemanticsBank load_tsb(const fs::path& embeddings_path, const fs::path& names_path,
                              std::vector<std::string>* warnings) {
  Matrix<double> rows = read_embeddings(embeddings_path);
  auto names = read_names(names_path);
  if (static_cast<Index>(names.size()) != rows.rows()) {
    throw InputError("load_tsb: " + std::to_string(names.size()) + " names in '" +
                     names_path.string() + "' but " + std::to_string(rows.rows()) +
                     " embedding rows in '" + embeddings_path.string() + "'");
  }
  for (Index i = 0; i < rows.rows(); ++i) {
    const double n = rows.row(i).norm();
    if (n < kZeroNormThreshold) {
      throw InputError("load_tsb: anchor row " + std::to_string(i) + " ('" + names[i] +
                       "') has zero norm");
    }
    if (warnings && std::abs(n - 1.0) > 1e-3) {
      warnings->push_back("anchor '" + names[i] + "' has norm " + format_double(n) +
                          "; normalized on load");
    }
    rows.row(i) /= n;
  }
  return TextualSemanticsBank(rows.transpose(), std::move(names), embeddings_path.string());
}

void save_tsb(const fs::path& embeddings_path, const fs::path& names_path,
              const TextualSemanticsBank& tsb) {
  write_embeddings(embeddings_path, tsb.anchors().transpose());
  write_names(names_path, tsb.category_names());
}

namespace {

fs::path with_ext(fs::path stem, const char* ext) {
  stem += ext;
  return stem;
}

fs::path strip_ext(const fs::path& p) {
  if (p.extension() == ".json" || p.extension() == ".lgde") {
    fs::path s = p;
    s.replace_extension();
    return s;
  }
  return p;
}

}  // namespace

void save_vsb(const fs::path& stem, const VisualSemanticsBank& vsb,
              const std::vector<std::string>& names, Dtype dtype) {
  if (static_cast<Index>(names.size()) != vsb.num_categories()) {
    throw InputError("save_vsb: name count does not match bank size");
  }
  const fs::path emb = with_ext(stem, ".lgde");
  write_embeddings(emb, vsb.anchors().transpose(), dtype);
  nlohmann::json side = {{"format_version", kBankFormatVersion},
                         {"kind", "visual_semantics_bank"},
                         {"embeddings", emb.filename().string()},
                         {"category_names", names},
                         {"initialized", vsb.initialized()},
                         {"momentum", vsb.momentum()}};
  write_text_atomic(with_ext(stem, ".json"), side.dump(2) + "\n");
}

VsbCheckpoint load_vsb(const fs::path& path) {
  const fs::path stem = strip_ext(path);
  const fs::path side_path = with_ext(stem, ".json");
  nlohmann::json side;
  try {
    side = nlohmann::json::parse(read_text(side_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(side_path.string() + ": " + e.what());
  }
  json_util::ObjectReader r(side, side_path.string());
  int version = 0;
  std::string kind, emb_name;
  std::vector<std::string> names;
  std::vector<bool> initialized;
  double momentum = 0;
  r.require("format_version", version);
  r.require("kind", kind);
  r.require("embeddings", emb_name);
  r.require("category_names", names);
  r.require("initialized", initialized);
  r.require("momentum", momentum);
  r.finish();
  if (version != kBankFormatVersion) {
    throw UnsupportedVersionError(side_path.string() + ": unsupported bank format version " +
                                  std::to_string(version));
  }
  if (kind != "visual_semantics_bank") {
    throw FormatError(side_path.string() + ": not a visual semantics bank ('" + kind + "')");
  }
  Matrix<double> rows = read_embeddings(side_path.parent_path() / emb_name);
  if (rows.rows() != static_cast<Index>(names.size()) ||
      rows.rows() != static_cast<Index>(initialized.size())) {
    throw FormatError(side_path.string() + ": sidecar does not match embedding rows");
  }
  return {VisualSemanticsBank(rows.transpose(), std::move(initialized), momentum), std::move(names)};
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  (void)ec;
  return std::string(buf.data(), ptr);
}

std::string metrics_csv_header() {
  return "step,epoch,lr,loss_total,loss_visual,loss_textual,vsb_initialized_count,zeroshot_acc";
}

std::string metrics_csv_line(const MetricsRow& r) {
  std::string s = std::to_string(r.step) + "," + format_double(r.epoch) + "," +
                  format_double(r.lr) + "," + format_double(r.loss_total) + "," +
                  format_double(r.loss_visual) + "," + format_double(r.loss_textual) + "," +
                  std::to_string(r.vsb_initialized_count) + ",";
  if (r.zeroshot_acc) s += format_double(*r.zeroshot_acc);
  return s;
}

nlohmann::json metrics_json(const MetricsRow& r) {
  nlohmann::json j = {{"step", r.step},
                      {"epoch", r.epoch},
                      {"lr", r.lr},
                      {"loss_total", r.loss_total},
                      {"loss_visual", r.loss_visual},
                      {"loss_textual", r.loss_textual},
                      {"vsb_initialized_count", r.vsb_initialized_count}};
  if (r.zeroshot_acc) j["zeroshot_acc"] = *r.zeroshot_acc;
  if (!r.components.empty()) {
    nlohmann::json c = nlohmann::json::object();
    for (const auto& [k, v] : r.components) c[k] = v;
    j["components"] = c;
  }
  return j;
}

}  // namespace lgd
