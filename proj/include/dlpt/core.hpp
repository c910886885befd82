#pragma once

// Shared data model: designs, experimental records, the polynomial treatment
// basis, random partitioning and covariate grouping.

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace dlpt {

/// Membership tolerance for design levels (levels are exact constants after rescaling).
inline constexpr double kLevelTolerance = 1e-12;

/// Randomization design: m treatment levels, their assignment probabilities and
/// the upper end of the treatment range.
struct Design {
  std::vector<double> levels;
  std::vector<double> probs;
  double t_max = 1.0;

  static Design uniform(std::vector<double> levels, double t_max = 1.0);

  std::size_t m() const noexcept { return levels.size(); }
  void validate() const;
  std::optional<std::size_t> level_index(double t) const noexcept;
  /// Drops level j and renormalizes the remaining probabilities.
  Design without_level(std::size_t j) const;
  /// Levels divided by t_max, so that the range becomes [0, 1].
  Design rescaled() const;
};

struct Sample {
  Eigen::VectorXd x;
  double t = 0.0;
  double y = 0.0;
};

/// I.i.d. collection of samples stored column-wise: x is d x n.
class Dataset {
 public:
  Dataset() = default;
  Dataset(Eigen::MatrixXd x, Eigen::VectorXd t, Eigen::VectorXd y, Design design);

  std::size_t size() const noexcept { return static_cast<std::size_t>(t_.size()); }
  bool empty() const noexcept { return size() == 0; }
  std::size_t dim() const noexcept { return static_cast<std::size_t>(x_.rows()); }

  const Eigen::MatrixXd& x() const noexcept { return x_; }
  const Eigen::VectorXd& t() const noexcept { return t_; }
  const Eigen::VectorXd& y() const noexcept { return y_; }
  const Design& design() const noexcept { return design_; }
  /// Index of sample i's level in design().levels.
  std::size_t arm(std::size_t i) const noexcept { return arm_[i]; }

  Sample sample(std::size_t i) const;
  Dataset subset(std::span<const std::size_t> indices) const;
  /// Same samples under another design (every t must still be a level).
  Dataset with_design(Design design) const;

 private:
  Eigen::MatrixXd x_;
  Eigen::VectorXd t_;
  Eigen::VectorXd y_;
  Design design_;
  std::vector<std::uint32_t> arm_;
};

/// (1, t, t^2, ..., t^K).
Eigen::VectorXd poly_features(double t, int K);
/// d/dt of poly_features: (0, 1, 2t, ..., K t^(K-1)).
Eigen::VectorXd poly_features_dt(double t, int K);

/// Seeded random partition; part sizes are within one of n * fraction.
std::vector<std::vector<std::size_t>> split_indices(std::size_t n, std::span<const double> fractions,
                                                    std::uint64_t seed);
std::vector<Dataset> split(const Dataset& ds, std::span<const double> fractions, std::uint64_t seed);

struct GroupAxis {
  std::size_t coord = 0;
  std::vector<double> edges;  // sorted; bin b holds edges[b-1] <= x < edges[b]
};
using GroupSpec = std::vector<GroupAxis>;
using GroupKey = std::vector<int>;

GroupKey group_key(const Eigen::Ref<const Eigen::VectorXd>& x, const GroupSpec& spec);

/// Per-coordinate affine standardization fitted on a training split.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  static Standardizer identity(std::size_t d);
  static Standardizer fit(const Eigen::MatrixXd& x);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
};

// CSV: header x1,...,xd,t,y. Treatments are divided by t_scale on read and
// multiplied by it on write.
Dataset read_csv(const std::filesystem::path& path, const Design& design, double t_scale = 1.0);
void write_csv(const std::filesystem::path& path, const Dataset& ds, double t_scale = 1.0);

/// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

}  // namespace dlpt
