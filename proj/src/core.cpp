#include "dlpt/core.hpp"

#include "dlpt/error.hpp"
#include "dlpt/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <system_error>

namespace dlpt {

Design Design::uniform(std::vector<double> levels, double t_max) {
  Design d;
  const auto m = levels.size();
  d.levels = std::move(levels);
  d.probs.assign(m, m == 0 ? 0.0 : 1.0 / static_cast<double>(m));
  d.t_max = t_max;
  return d;
}

void Design::validate() const {
  if (levels.empty()) throw InvalidInput("design has no levels");
  if (levels.size() != probs.size()) throw InvalidInput("design levels and probs differ in length");
  if (!(std::isfinite(t_max) && t_max > 0.0)) throw InvalidInput("design t_max must be positive");
  double total = 0.0;
  for (std::size_t j = 0; j < levels.size(); ++j) {
    if (!std::isfinite(levels[j]) || levels[j] < 0.0 || levels[j] > t_max + kLevelTolerance)
      throw InvalidInput("design level outside [0, t_max]");
    if (j > 0 && !(levels[j] > levels[j - 1])) throw InvalidInput("design levels must be strictly increasing");
    if (!(probs[j] > 0.0)) throw InvalidInput("design probabilities must be positive");
    total += probs[j];
  }
  if (std::abs(total - 1.0) > 1e-12) throw InvalidInput("design probabilities must sum to 1");
}

std::optional<std::size_t> Design::level_index(double t) const noexcept {
  for (std::size_t j = 0; j < levels.size(); ++j)
    if (std::abs(levels[j] - t) <= kLevelTolerance) return j;
  return std::nullopt;
}

Design Design::without_level(std::size_t j) const {
  if (j >= levels.size()) throw InvalidInput("level index out of range");
  if (levels.size() < 2) throw InvalidInput("cannot drop the only level");
  Design out;
  out.t_max = t_max;
  const double kept = 1.0 - probs[j];
  for (std::size_t k = 0; k < levels.size(); ++k) {
    if (k == j) continue;
    out.levels.push_back(levels[k]);
    out.probs.push_back(probs[k] / kept);
  }
  // Re-normalize exactly so validate() holds after rounding.
  const double total = std::accumulate(out.probs.begin(), out.probs.end(), 0.0);
  for (auto& p : out.probs) p /= total;
  return out;
}

Design Design::rescaled() const {
  Design out = *this;
  for (auto& l : out.levels) l /= t_max;
  out.t_max = 1.0;
  return out;
}

Dataset::Dataset(Eigen::MatrixXd x, Eigen::VectorXd t, Eigen::VectorXd y, Design design)
    : x_(std::move(x)), t_(std::move(t)), y_(std::move(y)), design_(std::move(design)) {
  design_.validate();
  const auto n = static_cast<std::size_t>(t_.size());
  if (static_cast<std::size_t>(y_.size()) != n || static_cast<std::size_t>(x_.cols()) != n)
    throw InvalidInput("dataset columns differ in length");
  if (!x_.allFinite()) throw InvalidInput("covariates must be finite");
  arm_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = design_.level_index(t_[i]);
    if (!j) throw InvalidInput("sample " + std::to_string(i) + " has a treatment that is not a design level");
    if (!(y_[i] >= 0.0 && y_[i] <= 1.0)) throw InvalidInput("outcome outside [0, 1]");
    arm_[i] = static_cast<std::uint32_t>(*j);
    t_[i] = design_.levels[*j];
  }
}

Sample Dataset::sample(std::size_t i) const { return Sample{x_.col(static_cast<Eigen::Index>(i)), t_[i], y_[i]}; }

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Eigen::MatrixXd x(x_.rows(), static_cast<Eigen::Index>(indices.size()));
  Eigen::VectorXd t(static_cast<Eigen::Index>(indices.size()));
  Eigen::VectorXd y(static_cast<Eigen::Index>(indices.size()));
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(indices[k]);
    if (indices[k] >= size()) throw InvalidInput("subset index out of range");
    x.col(static_cast<Eigen::Index>(k)) = x_.col(i);
    t[static_cast<Eigen::Index>(k)] = t_[i];
    y[static_cast<Eigen::Index>(k)] = y_[i];
  }
  return Dataset(std::move(x), std::move(t), std::move(y), design_);
}

Dataset Dataset::with_design(Design design) const { return Dataset(x_, t_, y_, std::move(design)); }

Eigen::VectorXd poly_features(double t, int K) {
  if (!std::isfinite(t)) throw InvalidInput("treatment must be finite");
  if (K < 0) throw InvalidInput("polynomial degree must be nonnegative");
  Eigen::VectorXd v(K + 1);
  double p = 1.0;
  for (int k = 0; k <= K; ++k) {
    v[k] = p;
    p *= t;
  }
  return v;
}

Eigen::VectorXd poly_features_dt(double t, int K) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(K + 1);
  double p = 1.0;
  for (int k = 1; k <= K; ++k) {
    v[k] = k * p;
    p *= t;
  }
  return v;
}

std::vector<std::vector<std::size_t>> split_indices(std::size_t n, std::span<const double> fractions,
                                                    std::uint64_t seed) {
  if (n == 0) throw InvalidInput("cannot split an empty dataset");
  if (fractions.empty()) throw InvalidInput("no split fractions given");
  double total = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw InvalidInput("split fractions must be positive");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw InvalidInput("split fractions must sum to 1");

  // Largest-remainder apportionment keeps every part within one of n * fraction.
  std::vector<std::size_t> counts(fractions.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < fractions.size(); ++k) {
    const double exact = static_cast<double>(n) * fractions[k];
    counts[k] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[k];
    remainders.emplace_back(exact - std::floor(exact), k);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < n; ++r, ++assigned) counts[remainders[r % remainders.size()].second] += 1;

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(child_seed(seed, "split"));
  for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);

  std::vector<std::vector<std::size_t>> parts(fractions.size());
  std::size_t offset = 0;
  for (std::size_t k = 0; k < fractions.size(); ++k) {
    parts[k].assign(perm.begin() + static_cast<std::ptrdiff_t>(offset),
                    perm.begin() + static_cast<std::ptrdiff_t>(offset + counts[k]));
    std::sort(parts[k].begin(), parts[k].end());
    offset += counts[k];
  }
  return parts;
}

std::vector<Dataset> split(const Dataset& ds, std::span<const double> fractions, std::uint64_t seed) {
  if (ds.empty()) throw InvalidInput("cannot split an empty dataset");
  std::vector<Dataset> out;
  for (const auto& idx : split_indices(ds.size(), fractions, seed)) out.push_back(ds.subset(idx));
  return out;
}

GroupKey group_key(const Eigen::Ref<const Eigen::VectorXd>& x, const GroupSpec& spec) {
  GroupKey key;
  key.reserve(spec.size());
  for (const auto& axis : spec) {
    if (axis.coord >= static_cast<std::size_t>(x.size())) throw InvalidInput("group coordinate out of range");
    const double v = x[static_cast<Eigen::Index>(axis.coord)];
    key.push_back(static_cast<int>(std::upper_bound(axis.edges.begin(), axis.edges.end(), v) - axis.edges.begin()));
  }
  return key;
}

Standardizer Standardizer::identity(std::size_t d) {
  return {Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d)), Eigen::VectorXd::Ones(static_cast<Eigen::Index>(d))};
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& x) {
  Standardizer s;
  const double n = static_cast<double>(x.cols());
  s.mean = x.rowwise().mean();
  s.scale = ((x.colwise() - s.mean).array().square().rowwise().sum() / std::max(1.0, n)).sqrt().matrix();
  for (Eigen::Index j = 0; j < s.scale.size(); ++j)
    if (!(s.scale[j] > 1e-12)) s.scale[j] = 1.0;
  return s;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& x) const {
  return ((x.colwise() - mean).array().colwise() / scale.array()).matrix();
}

namespace {

double parse_double(std::string_view field, std::size_t line) {
  while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
  while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) field.remove_suffix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size())
    throw InvalidInput("line " + std::to_string(line) + ": cannot parse '" + std::string(field) + "'");
  return v;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

void append_double(std::string& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

}  // namespace

Dataset read_csv(const std::filesystem::path& path, const Design& design, double t_scale) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput(path.string() + ": missing header");
  const auto header = split_commas(line);
  if (header.size() < 2) throw InvalidInput(path.string() + ": header needs t and y columns");
  const std::size_t d = header.size() - 2;
  std::vector<double> xs, ts, ys;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_commas(line);
    if (fields.size() != d + 2) throw InvalidInput("line " + std::to_string(lineno) + ": wrong field count");
    for (std::size_t j = 0; j < d; ++j) xs.push_back(parse_double(fields[j], lineno));
    ts.push_back(parse_double(fields[d], lineno) / t_scale);
    ys.push_back(parse_double(fields[d + 1], lineno));
  }
  const auto n = static_cast<Eigen::Index>(ts.size());
  Eigen::MatrixXd x = Eigen::Map<Eigen::MatrixXd>(xs.data(), static_cast<Eigen::Index>(d), n);
  return Dataset(std::move(x), Eigen::Map<Eigen::VectorXd>(ts.data(), n), Eigen::Map<Eigen::VectorXd>(ys.data(), n),
                 design);
}

void write_csv(const std::filesystem::path& path, const Dataset& ds, double t_scale) {
  std::string out;
  for (std::size_t j = 0; j < ds.dim(); ++j) out += "x" + std::to_string(j + 1) + ",";
  out += "t,y\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    for (Eigen::Index j = 0; j < ds.x().rows(); ++j) {
      append_double(out, ds.x()(j, c));
      out += ',';
    }
    append_double(out, ds.t()[c] * t_scale);
    out += ',';
    append_double(out, ds.y()[c]);
    out += '\n';
  }
  write_file_atomic(path, out);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << content;
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace dlpt
