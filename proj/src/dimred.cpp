#include "pedetect/dimred.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "pedetect/binary_io.hpp"
#include "pedetect/digest.hpp"
#include "pedetect/error.hpp"

namespace pedetect {

using nlohmann::json;

namespace {

constexpr char kPcaMagic[4] = {'R', 'D', 'C', 'R'};
constexpr std::uint32_t kReducerVersion = 1;
constexpr std::size_t kXgbfsMinRows = 50;

void check_dims(std::size_t got, std::size_t want) {
  if (got != want) {
    throw DataError("input has " + std::to_string(got) + " features, reducer expects " +
                    std::to_string(want));
  }
}

void orient(std::span<double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (std::abs(v[i]) > std::abs(v[best])) best = i;
  }
  if (v[best] < 0.0) {
    for (auto& c : v) c = -c;
  }
}

json lineage_json(const Reducer& r) {
  return {{"format", "reducer"},
          {"version", kReducerVersion},
          {"method", std::string(to_string(r.method))},
          {"k", r.k()},
          {"n_dims", r.n_dims()},
          {"scaler_fingerprint", r.scaler_fingerprint},
          {"fitted_on", r.fitted_on}};
}

}  // namespace

PcaProjection fit_pca(const Matrix& x, std::size_t k) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  if (k == 0 || k > d) {
    throw DataError("PCA: k=" + std::to_string(k) + " must lie in [1, " + std::to_string(d) + "]");
  }
  if (n < k) {
    throw DataError("PCA: " + std::to_string(n) + " rows cannot support k=" + std::to_string(k));
  }
  if (n < 2) throw DataError("PCA needs at least two rows");

  PcaProjection p;
  p.n_dims = d;
  p.mean.assign(d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = x.row(r);
    for (std::size_t c = 0; c < d; ++c) p.mean[c] += row[c];
  }
  for (auto& m : p.mean) m /= static_cast<double>(n);

  std::vector<std::size_t> active;
  std::vector<std::size_t> constant;
  for (std::size_t c = 0; c < d; ++c) {
    bool varies = false;
    const float first = x(0, c);
    for (std::size_t r = 1; r < n && !varies; ++r) varies = x(r, c) != first;
    (varies ? active : constant).push_back(c);
  }

  const auto a = static_cast<Eigen::Index>(active.size());
  Eigen::MatrixXd centered(static_cast<Eigen::Index>(n), a);
  for (std::size_t r = 0; r < n; ++r) {
    for (Eigen::Index j = 0; j < a; ++j) {
      const std::size_t c = active[static_cast<std::size_t>(j)];
      centered(static_cast<Eigen::Index>(r), j) = static_cast<double>(x(r, c)) - p.mean[c];
    }
  }
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(a, a);
  cov.selfadjointView<Eigen::Lower>().rankUpdate(centered.transpose(),
                                                 1.0 / static_cast<double>(n - 1));
  centered.resize(0, 0);
  cov.triangularView<Eigen::StrictlyUpper>() = cov.transpose();

  p.components.assign(k * d, 0.0);
  p.explained_variance.assign(k, 0.0);
  std::size_t filled = 0;
  if (a > 0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw DataError("PCA: eigendecomposition failed");
    const auto& values = solver.eigenvalues();  // ascending
    const auto& vectors = solver.eigenvectors();
    const std::size_t take = std::min<std::size_t>(k, active.size());
    for (; filled < take; ++filled) {
      const Eigen::Index col = a - 1 - static_cast<Eigen::Index>(filled);
      std::span<double> comp(p.components.data() + filled * d, d);
      for (Eigen::Index j = 0; j < a; ++j) comp[active[static_cast<std::size_t>(j)]] = vectors(j, col);
      orient(comp);
      p.explained_variance[filled] = std::max(0.0, values(col));
    }
  }
  for (std::size_t i = 0; filled < k; ++i, ++filled) {
    p.components[filled * d + constant[i]] = 1.0;
  }
  return p;
}

PcaProjection truncate(const PcaProjection& p, std::size_t k) {
  if (k == 0 || k > p.k()) {
    throw ConfigError("cannot truncate a " + std::to_string(p.k()) + "-component PCA to " +
                      std::to_string(k));
  }
  PcaProjection out;
  out.n_dims = p.n_dims;
  out.mean = p.mean;
  out.components.assign(p.components.begin(), p.components.begin() + k * p.n_dims);
  out.explained_variance.assign(p.explained_variance.begin(), p.explained_variance.begin() + k);
  return out;
}

std::vector<double> project(const PcaProjection& p, std::span<const float> x) {
  check_dims(x.size(), p.n_dims);
  std::vector<double> centered(p.n_dims);
  for (std::size_t c = 0; c < p.n_dims; ++c) centered[c] = static_cast<double>(x[c]) - p.mean[c];
  std::vector<double> out(p.k(), 0.0);
  for (std::size_t i = 0; i < p.k(); ++i) {
    const auto comp = p.component(i);
    double s = 0.0;
    for (std::size_t c = 0; c < p.n_dims; ++c) s += comp[c] * centered[c];
    out[i] = s;
  }
  return out;
}

Matrix project(const PcaProjection& p, const Matrix& x) {
  if (x.rows() == 0) return Matrix(0, p.k());
  check_dims(x.cols(), p.n_dims);
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const auto n = static_cast<Eigen::Index>(x.rows());
  const auto d = static_cast<Eigen::Index>(p.n_dims);
  const auto k = static_cast<Eigen::Index>(p.k());
  const Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
      xf(x.data().data(), n, d);
  const Eigen::Map<const Eigen::RowVectorXd> mean(p.mean.data(), d);
  const Eigen::Map<const RowMajor> comps(p.components.data(), k, d);
  const RowMajor centered = xf.cast<double>().rowwise() - mean;
  const RowMajor y = centered * comps.transpose();
  Matrix out(x.rows(), p.k());
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < k; ++c) out(r, c) = static_cast<float>(y(r, c));
  }
  return out;
}

XgbfsConfig default_xgbfs_config() {
  XgbfsConfig cfg;
  cfg.hp.n_trees = 200;
  cfg.hp.max_depth = 6;
  cfg.hp.learning_rate = 0.1;
  cfg.hp.max_bins = 255;
  cfg.hp.growth = Growth::depthwise;
  // Without column sampling an exact duplicate of the best column never wins a
  // tie, so its gain would stay zero.
  cfg.hp.feature_subsample = 0.8;
  cfg.seed = 42;
  return cfg;
}

std::vector<double> xgbfs_gains(const Matrix& x, std::span<const std::int8_t> y,
                                const XgbfsConfig& cfg) {
  if (x.rows() < kXgbfsMinRows) {
    throw DataError("feature selection needs at least " + std::to_string(kXgbfsMinRows) +
                    " rows, got " + std::to_string(x.rows()));
  }
  return train(x, y, Variant::gbdt, cfg.hp, cfg.seed).feature_gains();
}

FeatureMask mask_from_gains(std::span<const double> gains, std::size_t k) {
  if (k == 0 || k > gains.size()) {
    throw DataError("cannot select " + std::to_string(k) + " of " +
                    std::to_string(gains.size()) + " features");
  }
  std::vector<std::uint32_t> order(gains.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return gains[a] > gains[b]; });
  order.resize(k);
  std::sort(order.begin(), order.end());
  FeatureMask m;
  m.n_dims = gains.size();
  m.indices = order;
  for (const auto i : order) m.gains.push_back(gains[i]);
  return m;
}

FeatureMask fit_xgbfs(const Matrix& x, std::span<const std::int8_t> y, std::size_t k,
                      const XgbfsConfig& cfg) {
  return mask_from_gains(xgbfs_gains(x, y, cfg), k);
}

std::vector<float> select(const FeatureMask& m, std::span<const float> x) {
  check_dims(x.size(), m.n_dims);
  std::vector<float> out(m.k());
  for (std::size_t i = 0; i < m.k(); ++i) out[i] = x[m.indices[i]];
  return out;
}

Matrix select(const FeatureMask& m, const Matrix& x) {
  if (x.rows() == 0) return Matrix(0, m.k());
  check_dims(x.cols(), m.n_dims);
  Matrix out(x.rows(), m.k());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto src = x.row(r);
    auto dst = out.row(r);
    for (std::size_t i = 0; i < m.k(); ++i) dst[i] = src[m.indices[i]];
  }
  return out;
}

std::string_view to_string(ReductionMethod m) { return m == ReductionMethod::pca ? "pca" : "xgbfs"; }

ReductionMethod reduction_from_string(std::string_view s) {
  if (s == "pca") return ReductionMethod::pca;
  if (s == "xgbfs") return ReductionMethod::xgbfs;
  throw ConfigError("unknown reduction method '" + std::string(s) + "' (expected pca or xgbfs)");
}

std::size_t Reducer::k() const {
  return std::visit([](const auto& p) { return p.k(); }, params);
}

std::size_t Reducer::n_dims() const {
  return std::visit([](const auto& p) { return p.n_dims; }, params);
}

Matrix Reducer::apply(const Matrix& x) const {
  if (const auto* m = std::get_if<FeatureMask>(&params)) return select(*m, x);
  return project(std::get<PcaProjection>(params), x);
}

std::vector<float> Reducer::apply_row(std::span<const float> x) const {
  if (const auto* m = std::get_if<FeatureMask>(&params)) return select(*m, x);
  const auto v = project(std::get<PcaProjection>(params), x);
  return {v.begin(), v.end()};
}

std::string Reducer::fingerprint() const { return sha256_hex(encode_reducer(*this)); }

std::vector<std::uint8_t> encode_reducer(const Reducer& r) {
  json header = lineage_json(r);
  if (const auto* m = std::get_if<FeatureMask>(&r.params)) {
    header["indices"] = m->indices;
    header["gains"] = m->gains;
    const std::string text = header.dump(1) + "\n";
    return {text.begin(), text.end()};
  }
  const auto& p = std::get<PcaProjection>(r.params);
  const std::string text = header.dump();
  ByteWriter w;
  w.put_string(std::string_view(kPcaMagic, 4));
  w.put(static_cast<std::uint32_t>(text.size()));
  w.put_string(text);
  w.put_array<double>(p.mean);
  w.put_array<double>(p.components);
  w.put_array<double>(p.explained_variance);
  return std::move(w.bytes());
}

Reducer decode_reducer(std::span<const std::uint8_t> bytes) {
  const bool binary = bytes.size() >= 4 && std::equal(kPcaMagic, kPcaMagic + 4, bytes.begin());
  ByteReader reader(bytes, "reducer");
  json header;
  try {
    if (binary) {
      reader.get_bytes(4);
      const auto len = reader.get<std::uint32_t>();
      header = json::parse(reader.get_string(len));
    } else {
      header = json::parse(bytes.begin(), bytes.end());
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("reducer: malformed header: ") + e.what());
  }

  Reducer r;
  std::size_t k = 0;
  std::size_t d = 0;
  try {
    if (header.at("format") != "reducer") throw DataError("reducer: not a reducer artifact");
    if (header.at("version").get<std::uint32_t>() != kReducerVersion) {
      throw DataError("reducer: unsupported version");
    }
    r.method = reduction_from_string(header.at("method").get<std::string>());
    r.scaler_fingerprint = header.at("scaler_fingerprint").get<std::string>();
    r.fitted_on = header.at("fitted_on").get<std::string>();
    k = header.at("k").get<std::size_t>();
    d = header.at("n_dims").get<std::size_t>();
    if (!binary) {
      FeatureMask m;
      m.n_dims = d;
      m.indices = header.at("indices").get<std::vector<std::uint32_t>>();
      m.gains = header.at("gains").get<std::vector<double>>();
      if (m.indices.size() != k || m.gains.size() != k) throw DataError("reducer: mask length mismatch");
      for (std::size_t i = 0; i < k; ++i) {
        if (m.indices[i] >= d || (i > 0 && m.indices[i] <= m.indices[i - 1])) {
          throw DataError("reducer: mask indices must be strictly increasing and below n_dims");
        }
      }
      r.params = std::move(m);
      return r;
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("reducer: malformed header: ") + e.what());
  }
  if (r.method != ReductionMethod::pca) throw DataError("reducer: binary payload for a mask");
  if (d == 0 || k == 0 || k > d) throw DataError("reducer: bad PCA shape");
  PcaProjection p;
  p.n_dims = d;
  p.mean.resize(d);
  p.components.resize(k * d);
  p.explained_variance.resize(k);
  reader.get_array<double>(p.mean);
  reader.get_array<double>(p.components);
  reader.get_array<double>(p.explained_variance);
  if (reader.remaining() != 0) throw DataError("reducer: trailing bytes");
  r.params = std::move(p);
  return r;
}

std::string reducer_file_name(ReductionMethod m) {
  return m == ReductionMethod::pca ? "reducer.bin" : "reducer.json";
}

}  // namespace pedetect
