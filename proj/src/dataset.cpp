#include "pedetect/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <unordered_map>

#include "json.hpp"

#include "pedetect/binary_io.hpp"
#include "pedetect/rng.hpp"

namespace pedetect {

using nlohmann::json;

namespace {

constexpr char kFvsMagic[4] = {'F', 'V', 'S', '1'};

struct Sha256Hash {
  std::size_t operator()(const Sha256& s) const noexcept {
    std::size_t h;
    std::memcpy(&h, s.data(), sizeof h);
    return h;
  }
};

void append_float(std::string& out, float v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

}  // namespace

void DatasetStore::append(std::span<const float> row, std::int8_t label, const Sha256& id,
                          std::string tag) {
  if (n_rows() > 0 && row.size() != n_dims()) {
    throw DataError("row has " + std::to_string(row.size()) + " features, store has " +
                    std::to_string(n_dims()));
  }
  features.append_row(row);
  labels.push_back(label);
  sha256.push_back(id);
  source_tag.push_back(std::move(tag));
}

void DatasetStore::validate() const {
  const std::size_t n = labels.size();
  if (features.rows() != n || sha256.size() != n || source_tag.size() != n) {
    throw DataError("dataset arrays disagree on row count");
  }
  for (auto l : labels) {
    if (l < -1 || l > 1) throw DataError("label out of range: " + std::to_string(l));
  }
}

DatasetStore DatasetStore::take_rows(std::span<const std::size_t> indices) const {
  DatasetStore out;
  out.features = features.take_rows(indices);
  out.labels.reserve(indices.size());
  out.sha256.reserve(indices.size());
  out.source_tag.reserve(indices.size());
  for (auto i : indices) {
    out.labels.push_back(labels[i]);
    out.sha256.push_back(sha256[i]);
    out.source_tag.push_back(source_tag[i]);
  }
  return out;
}

std::string DatasetStore::fingerprint() const {
  std::vector<Sha256> ids = sha256;
  std::sort(ids.begin(), ids.end());
  Sha256Builder b;
  b.update("dataset-v1");
  const std::uint64_t dims = n_dims();
  b.update_pod(dims);
  for (const auto& id : ids) b.update(id);
  return b.hex();
}

std::vector<std::uint8_t> encode_fvs(const DatasetStore& store) {
  store.validate();
  ByteWriter w;
  w.put_bytes(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(kFvsMagic), 4));
  w.put<std::uint32_t>(kFvsVersion);
  w.put<std::uint64_t>(store.n_rows());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(store.n_dims()));
  w.put_array<std::int8_t>(store.labels);
  for (const auto& id : store.sha256) w.put_bytes(id);
  for (const auto& tag : store.source_tag) {
    if (tag.size() > 0xFFFF) throw DataError("source tag longer than 65535 bytes");
    w.put<std::uint16_t>(static_cast<std::uint16_t>(tag.size()));
    w.put_string(tag);
  }
  w.put_array<float>(store.features.data());
  w.put<std::uint32_t>(crc32(w.bytes()));
  return std::move(w.bytes());
}

DatasetStore decode_fvs(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kFvsMagic, 4) != 0) {
    throw DatasetFormatError(FormatError::bad_magic, "not an FVS1 file (bad magic)");
  }
  const auto truncated = [&](std::size_t expected) {
    return DatasetFormatError(FormatError::truncated,
                              "truncated FVS1 payload: expected " + std::to_string(expected) +
                                  " bytes, got " + std::to_string(bytes.size()));
  };
  constexpr std::size_t kHeader = 4 + 4 + 8 + 4;
  if (bytes.size() < kHeader) throw truncated(kHeader);

  ByteReader r(bytes, "FVS1");
  r.get_bytes(4);
  const auto version = r.get<std::uint32_t>();
  if (version != kFvsVersion) {
    throw DatasetFormatError(FormatError::version_mismatch,
                             "FVS1 version " + std::to_string(version) + " unsupported (expected " +
                                 std::to_string(kFvsVersion) + ")");
  }
  const auto n_rows = r.get<std::uint64_t>();
  const auto n_dims = r.get<std::uint32_t>();

  // Size checks before allocating, so absurd headers fail cheaply. Tag lengths
  // are only known once read, so the exact expected size comes after them.
  const std::uint64_t fixed = std::uint64_t{kHeader} + n_rows * (1 + 32 + 2) +
                              n_rows * std::uint64_t{n_dims} * 4 + 4;
  if (n_rows > bytes.size() || kHeader + n_rows * 35 > bytes.size()) throw truncated(fixed);

  DatasetStore s;
  s.labels.resize(n_rows);
  r.get_array<std::int8_t>(s.labels);
  s.sha256.resize(n_rows);
  for (auto& id : s.sha256) {
    auto raw = r.get_bytes(32);
    std::copy(raw.begin(), raw.end(), id.begin());
  }
  s.source_tag.reserve(n_rows);
  std::uint64_t tag_bytes = 0;
  for (std::uint64_t i = 0; i < n_rows; ++i) {
    if (r.remaining() < 2) throw truncated(fixed + tag_bytes);
    const auto len = r.get<std::uint16_t>();
    tag_bytes += len;
    if (r.remaining() < len) throw truncated(fixed + tag_bytes);
    s.source_tag.push_back(r.get_string(len));
  }
  const std::uint64_t expected = fixed + tag_bytes;
  if (bytes.size() < expected) throw truncated(expected);
  std::vector<float> values(n_rows * std::uint64_t{n_dims});
  r.get_array<float>(values);
  s.features = Matrix(n_rows, n_dims, std::move(values));
  const auto payload = r.position();
  const auto stored_crc = r.get<std::uint32_t>();
  if (crc32(bytes.first(payload)) != stored_crc) {
    throw DatasetFormatError(FormatError::checksum, "FVS1 checksum mismatch");
  }
  if (r.remaining() != 0) {
    throw DatasetFormatError(FormatError::checksum,
                             "FVS1 has " + std::to_string(r.remaining()) + " trailing bytes");
  }
  s.validate();
  return s;
}

void save(const DatasetStore& store, const std::string& path) {
  write_file_atomic(path, encode_fvs(store));
}

DatasetStore load(const std::string& path) {
  try {
    return decode_fvs(read_file_bytes(path));
  } catch (const DatasetFormatError& e) {
    throw DatasetFormatError(e.kind(), path + ": " + e.what());
  }
}

std::string jsonl_record(const Sha256& sha, int label, std::span<const float> features,
                         const std::string& source) {
  std::string out = "{\"sha256\": \"" + to_hex(sha) + "\", \"label\": " + std::to_string(label);
  if (!source.empty()) out += ", \"source\": " + json(source).dump();
  out += ", \"features\": [";
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (i) out += ", ";
    append_float(out, features[i]);
  }
  out += "]}";
  return out;
}

DatasetStore read_jsonl(std::istream& in, const std::string& default_source) {
  DatasetStore store;
  std::string line;
  std::size_t line_no = 0;
  std::vector<float> row;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = "line " + std::to_string(line_no) + ": ";
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(where + "invalid JSON: " + e.what());
    }
    if (!rec.is_object() || !rec.contains("sha256") || !rec.contains("label") ||
        !rec.contains("features")) {
      throw DataError(where + "record needs sha256, label and features");
    }
    const auto& feats = rec["features"];
    if (!feats.is_array()) throw DataError(where + "features must be an array");
    row.clear();
    for (const auto& v : feats) {
      if (!v.is_number()) throw DataError(where + "non-numeric feature value");
      const double d = v.get<double>();
      if (!std::isfinite(d)) throw DataError(where + "non-finite feature value");
      row.push_back(static_cast<float>(d));
    }
    if (!rec["label"].is_number_integer()) throw DataError(where + "label must be an integer");
    const int label = rec["label"].get<int>();
    if (label < -1 || label > 1) throw DataError(where + "label must be -1, 0 or 1");
    if (store.n_rows() > 0 && row.size() != store.n_dims()) {
      throw DataError(where + "expected " + std::to_string(store.n_dims()) + " features, got " +
                      std::to_string(row.size()));
    }
    std::string source = default_source;
    if (rec.contains("source") && rec["source"].is_string()) source = rec["source"].get<std::string>();
    Sha256 id;
    try {
      id = sha256_from_hex(rec["sha256"].get<std::string>());
    } catch (const json::exception&) {
      throw DataError(where + "sha256 must be a string");
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    }
    store.append(row, static_cast<std::int8_t>(label), id, std::move(source));
  }
  return store;
}

DatasetStore read_jsonl_file(const std::string& path, const std::string& default_source) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  try {
    return read_jsonl(in, default_source);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

UnifyResult unify(std::span<const DatasetStore> stores, std::span<const std::string> names) {
  const auto name_of = [&](std::size_t i) {
    return i < names.size() ? names[i] : "store #" + std::to_string(i);
  };
  UnifyResult out;
  std::unordered_map<Sha256, std::int8_t, Sha256Hash> seen;
  std::optional<std::size_t> reference;
  for (std::size_t s = 0; s < stores.size(); ++s) {
    const auto& in = stores[s];
    in.validate();
    if (in.n_dims() == 0 && in.n_rows() == 0) continue;
    if (!reference) {
      reference = s;
      out.store.features = Matrix(0, in.n_dims());
    } else if (in.n_dims() != stores[*reference].n_dims()) {
      throw DataError("dimension mismatch: " + name_of(s) + " has " + std::to_string(in.n_dims()) +
                      " features, " + name_of(*reference) + " has " +
                      std::to_string(stores[*reference].n_dims()));
    }
    out.report.input_rows += in.n_rows();
    for (std::size_t i = 0; i < in.n_rows(); ++i) {
      if (in.labels[i] == -1) {
        ++out.report.unlabeled_dropped;
        continue;
      }
      auto [it, inserted] = seen.emplace(in.sha256[i], in.labels[i]);
      if (!inserted) {
        ++out.report.duplicates;
        if (it->second != in.labels[i]) ++out.report.label_conflicts;
        continue;
      }
      out.store.append(in.features.row(i), in.labels[i], in.sha256[i], in.source_tag[i]);
    }
  }
  out.report.output_rows = out.store.n_rows();
  return out;
}

std::string_view to_string(Partition p) {
  switch (p) {
    case Partition::train_a: return "train_A";
    case Partition::train_b: return "train_B";
    case Partition::validation: return "validation";
    case Partition::test: return "test";
  }
  return "?";
}

Partition partition_from_string(std::string_view s) {
  if (s == "train_A") return Partition::train_a;
  if (s == "train_B") return Partition::train_b;
  if (s == "validation") return Partition::validation;
  if (s == "test") return Partition::test;
  throw DataError("unknown partition '" + std::string(s) + "'");
}

std::vector<std::size_t> SplitPlan::rows_of(Partition p) const {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] == p) rows.push_back(i);
  }
  return rows;
}

SplitPlan split(const DatasetStore& store, const SplitParams& params) {
  const auto in_unit = [](double f) { return f > 0.0 && f < 1.0; };
  if (!in_unit(params.val_fraction) || !in_unit(params.test_fraction) ||
      params.val_fraction + params.test_fraction >= 1.0) {
    throw ConfigError("split fractions must lie in (0, 1) and sum to less than 1");
  }
  const std::size_t n = store.n_rows();
  const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * params.test_fraction));
  const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * params.val_fraction));
  if (n_test + n_val > n) throw ConfigError("split fractions leave no training rows");

  Rng rng(params.seed);
  std::vector<std::size_t> order;
  order.reserve(n);
  if (!params.stratify) {
    order.resize(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span(order));
  } else {
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < n; ++i) by_class[store.labels[i]].push_back(i);
    for (auto& [label, rows] : by_class) {
      if (rows.size() < 4) {
        throw DataError("class " + std::to_string(label) + " has " + std::to_string(rows.size()) +
                        " rows; stratified splitting needs at least one per partition");
      }
      rng.shuffle(std::span(rows));
    }
    // Spread each class evenly along the ordering: element i of a class with
    // m rows sits at position (i + 0.5) / m. Any contiguous run of the merged
    // order then holds each class within one row of its global share.
    struct Slot {
      double key;
      int label;
      std::size_t row;
    };
    std::vector<Slot> slots;
    slots.reserve(n);
    for (const auto& [label, rows] : by_class) {
      for (std::size_t i = 0; i < rows.size(); ++i) {
        slots.push_back({(static_cast<double>(i) + 0.5) / static_cast<double>(rows.size()), label, rows[i]});
      }
    }
    std::sort(slots.begin(), slots.end(), [](const Slot& a, const Slot& b) {
      return a.key != b.key ? a.key < b.key : a.label < b.label;
    });
    for (const auto& s : slots) order.push_back(s.row);
  }

  SplitPlan plan;
  plan.params = params;
  plan.data_fingerprint = store.fingerprint();
  plan.assignment.assign(n, Partition::train_a);
  const std::size_t rest = n - n_test - n_val;
  const std::size_t n_a = (rest + 1) / 2;
  for (std::size_t i = 0; i < n; ++i) {
    Partition p;
    if (i < n_test) {
      p = Partition::test;
    } else if (i < n_test + n_val) {
      p = Partition::validation;
    } else if (i < n_test + n_val + n_a) {
      p = Partition::train_a;
    } else {
      p = Partition::train_b;
    }
    plan.assignment[order[i]] = p;
  }
  return plan;
}

std::string split_plan_to_json(const SplitPlan& plan) {
  std::string assignment;
  assignment.reserve(plan.assignment.size());
  for (auto p : plan.assignment) assignment.push_back("ABVT"[static_cast<int>(p)]);
  json j = {
      {"format", "split-plan-v1"},
      {"seed", plan.params.seed},
      {"val_fraction", plan.params.val_fraction},
      {"test_fraction", plan.params.test_fraction},
      {"stratify", plan.params.stratify},
      {"data_fingerprint", plan.data_fingerprint},
      {"counts",
       {{"train_A", plan.rows_of(Partition::train_a).size()},
        {"train_B", plan.rows_of(Partition::train_b).size()},
        {"validation", plan.rows_of(Partition::validation).size()},
        {"test", plan.rows_of(Partition::test).size()}}},
      {"assignment", assignment},
  };
  return j.dump(2) + "\n";
}

SplitPlan split_plan_from_json(const std::string& text) {
  try {
    const auto j = json::parse(text);
    SplitPlan plan;
    plan.params.seed = j.at("seed").get<std::uint64_t>();
    plan.params.val_fraction = j.at("val_fraction").get<double>();
    plan.params.test_fraction = j.at("test_fraction").get<double>();
    plan.params.stratify = j.at("stratify").get<bool>();
    plan.data_fingerprint = j.value("data_fingerprint", std::string());
    for (char c : j.at("assignment").get<std::string>()) {
      switch (c) {
        case 'A': plan.assignment.push_back(Partition::train_a); break;
        case 'B': plan.assignment.push_back(Partition::train_b); break;
        case 'V': plan.assignment.push_back(Partition::validation); break;
        case 'T': plan.assignment.push_back(Partition::test); break;
        default: throw DataError(std::string("bad partition code '") + c + "'");
      }
    }
    return plan;
  } catch (const json::exception& e) {
    throw DataError(std::string("invalid split plan: ") + e.what());
  }
}

}  // namespace pedetect
