// Copyright 2026 The LGD Authors.
// SPDX-License-Identifier: Apache-2.0

// On-disk formats.
//
// Embedding file (all integers little-endian, no padding):
//   "LGDE" | version u16 | rows u32 | cols u32 | dtype u8 | payload | crc32 u32
// dtype 0 is IEEE-754 binary32 (the interchange format for embeddings and
// banks); dtype 1 is binary64, used only for optimizer-exact checkpoints.
// The CRC-32 (ISO-HDLC polynomial, as in zlib) covers the payload bytes.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "lgd/banks.hpp"

namespace lgd {

inline constexpr std::uint16_t kEmbeddingFormatVersion = 1;
inline constexpr std::size_t kEmbeddingHeaderBytes = 4 + 2 + 4 + 4 + 1;
inline constexpr int kBankFormatVersion = 1;

enum class Dtype : std::uint8_t { kF32 = 0, kF64 = 1 };

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_embeddings(const Matrix<double>& m, Dtype dtype = Dtype::kF32);
Matrix<double> decode_embeddings(std::span<const std::uint8_t> bytes,
                                 const std::string& origin = "<memory>");

/// Writes via a temporary file and an atomic rename. Rejects non-finite entries.
void write_embeddings(const std::filesystem::path& path, const Matrix<double>& m,
                      Dtype dtype = Dtype::kF32);
Matrix<double> read_embeddings(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

/// UTF-8 names manifest: one category name per line, order-significant.
std::vector<std::string> read_names(const std::filesystem::path& path);
void write_names(const std::filesystem::path& path, const std::vector<std::string>& names);

/// Labels file: one non-negative integer per line.
std::vector<Index> read_labels(const std::filesystem::path& path);
void write_labels(const std::filesystem::path& path, const std::vector<Index>& labels);

/// Text anchors from an embedding file (one anchor per row) and a names
/// manifest. Rows are normalized; a warning is appended for every row whose
/// norm deviates from 1 by more than 1e-3.
TextualSemanticsBank load_tsb(const std::filesystem::path& embeddings_path,
                              const std::filesystem::path& names_path,
                              std::vector<std::string>* warnings = nullptr);
void save_tsb(const std::filesystem::path& embeddings_path,
              const std::filesystem::path& names_path, const TextualSemanticsBank& tsb);

struct VsbCheckpoint {
  VisualSemanticsBank vsb;
  std::vector<std::string> category_names;
};

/// Writes <stem>.lgde (anchors, one row per category) and <stem>.json.
void save_vsb(const std::filesystem::path& stem, const VisualSemanticsBank& vsb,
              const std::vector<std::string>& names, Dtype dtype = Dtype::kF32);
/// Accepts either the sidecar path or the stem.
VsbCheckpoint load_vsb(const std::filesystem::path& path);

/// Shortest decimal that round-trips a double; used in every text output.
std::string format_double(double v);

struct MetricsRow {
  long step = 0;
  double epoch = 0;
  double lr = 0;
  double loss_total = 0;
  double loss_visual = 0;
  double loss_textual = 0;
  Index vsb_initialized_count = 0;
  std::optional<double> zeroshot_acc;
  std::vector<std::pair<std::string, double>> components;
};

std::string metrics_csv_header();
std::string metrics_csv_line(const MetricsRow& row);
nlohmann::json metrics_json(const MetricsRow& row);

}  // namespace lgd
