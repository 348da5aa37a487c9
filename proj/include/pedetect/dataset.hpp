#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pedetect/digest.hpp"
#include "pedetect/error.hpp"
#include "pedetect/matrix.hpp"

namespace pedetect {

/// Labeled feature rows with per-row identity and provenance.
///
/// Invariant: features.rows() == labels.size() == sha256.size() ==
/// source_tag.size(). Labels are -1 (unlabeled), 0 (benign) or 1 (malicious).
struct DatasetStore {
  Matrix features;
  std::vector<std::int8_t> labels;
  std::vector<Sha256> sha256;
  std::vector<std::string> source_tag;

  std::size_t n_rows() const { return labels.size(); }
  std::size_t n_dims() const { return features.cols(); }

  void append(std::span<const float> row, std::int8_t label, const Sha256& id, std::string tag);

  /// Throws DataError if the parallel arrays disagree or a label is invalid.
  void validate() const;

  DatasetStore take_rows(std::span<const std::size_t> indices) const;

  /// Hash of the sorted set of row identities.
  std::string fingerprint() const;

  friend bool operator==(const DatasetStore&, const DatasetStore&) = default;
};

// ---------------------------------------------------------------------------
// FVS1 binary format

inline constexpr std::uint32_t kFvsVersion = 1;

enum class FormatError { bad_magic, version_mismatch, truncated, checksum };

/// Raised by load/decode; `kind()` distinguishes the failure.
class DatasetFormatError : public DataError {
 public:
  DatasetFormatError(FormatError kind, const std::string& what) : DataError(what), kind_(kind) {}
  FormatError kind() const noexcept { return kind_; }

 private:
  FormatError kind_;
};

/// Layout: "FVS1", u32 version, u64 n_rows, u32 n_dims, i8 labels[n_rows],
/// u8 sha256[n_rows][32], source tags as (u16 length, bytes)[n_rows],
/// f32 features[n_rows][n_dims] row-major, u32 CRC-32 of everything before it.
/// All integers little-endian.
std::vector<std::uint8_t> encode_fvs(const DatasetStore& store);
DatasetStore decode_fvs(std::span<const std::uint8_t> bytes);

void save(const DatasetStore& store, const std::string& path);
DatasetStore load(const std::string& path);

// ---------------------------------------------------------------------------
// JSONL interchange: one {"sha256", "label", "features"[, "source"]} per line.

/// Serializes one record.
std::string jsonl_record(const Sha256& sha, int label, std::span<const float> features,
                         const std::string& source = {});

/// Parses a JSONL document. Records without a "source" field get
/// `default_source`. Throws DataError naming the line on malformed input.
DatasetStore read_jsonl(std::istream& in, const std::string& default_source);
DatasetStore read_jsonl_file(const std::string& path, const std::string& default_source);

// ---------------------------------------------------------------------------
// Unification

struct UnifyReport {
  std::size_t input_rows = 0;
  std::size_t output_rows = 0;
  std::size_t duplicates = 0;       // rows dropped because their sha256 was seen before
  std::size_t label_conflicts = 0;  // of those, how many disagreed on the label
  std::size_t unlabeled_dropped = 0;
};

struct UnifyResult {
  DatasetStore store;
  UnifyReport report;
};

/// Concatenates stores in order, keeping the first occurrence of every
/// sha256 and dropping unlabeled (-1) rows. Throws DataError when the stores
/// disagree on dimensionality.
UnifyResult unify(std::span<const DatasetStore> stores,
                  std::span<const std::string> names = {});

// ---------------------------------------------------------------------------
// Splitting

enum class Partition : std::uint8_t { train_a, train_b, validation, test };

std::string_view to_string(Partition p);
Partition partition_from_string(std::string_view s);

struct SplitParams {
  std::uint64_t seed = 0;
  double val_fraction = 0.1;
  double test_fraction = 0.1;
  bool stratify = true;

  friend bool operator==(const SplitParams&, const SplitParams&) = default;
};

struct SplitPlan {
  SplitParams params;
  std::string data_fingerprint;  // DatasetStore::fingerprint() of the split store
  std::vector<Partition> assignment;

  std::vector<std::size_t> rows_of(Partition p) const;
  friend bool operator==(const SplitPlan&, const SplitPlan&) = default;
};

/// Carves test and validation first, then halves what is left into the two
/// training partitions. With `stratify`, every partition's class counts stay
/// within one row of the global proportions.
SplitPlan split(const DatasetStore& store, const SplitParams& params);

std::string split_plan_to_json(const SplitPlan& plan);
SplitPlan split_plan_from_json(const std::string& text);

}  // namespace pedetect
