#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace htmle {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Marker stored in TwoPartDataset::s where the outcome is zero.
inline constexpr double kUndefined = std::numeric_limits<double>::quiet_NaN();

struct Decomposition {
  Vector delta;  // 1 where y > 0, else 0
  Vector s;      // y where y > 0, kUndefined elsewhere
};

// Splits a non-negative outcome into its hurdle indicator and positive part.
// Throws DataError naming the first negative or non-finite entry.
Decomposition decompose(const Vector& y);

// Observed data O = (X, T, Y = delta * S). Immutable once built; the
// constructor validates and derives delta and s.
class TwoPartDataset {
 public:
  TwoPartDataset(Matrix x, Vector t, Vector y, std::vector<std::string> covariate_names = {});

  std::size_t rows() const { return static_cast<std::size_t>(y_.size()); }
  std::size_t covariates() const { return static_cast<std::size_t>(x_.cols()); }

  const Matrix& x() const { return x_; }
  const Vector& t() const { return t_; }
  const Vector& y() const { return y_; }
  const Vector& delta() const { return delta_; }
  const Vector& s() const { return s_; }
  const std::vector<std::string>& covariate_names() const { return names_; }

  // Index of a covariate by name; -1 if absent.
  int covariate_index(const std::string& name) const;

  // Extra per-row columns carried alongside (e.g. a support bound for a shift
  // policy). They play no role in estimation.
  void set_aux(const std::string& name, Vector values);
  const Vector* aux(const std::string& name) const;

  std::size_t positives() const;

  // Rows in the given order (with repetition allowed).
  TwoPartDataset subset(const std::vector<std::size_t>& rows) const;

 private:
  Matrix x_;
  Vector t_;
  Vector y_;
  Vector delta_;
  Vector s_;
  std::vector<std::string> names_;
  std::map<std::string, Vector> aux_;
};

// Affine map of the outcome onto [0, 1] with a fixed lower bound of zero, so
// that unscaling is purely multiplicative.
class OutcomeScaler {
 public:
  static constexpr double kDefaultPad = 0.001;

  explicit OutcomeScaler(double upper);

  double lower() const { return 0.0; }
  double upper() const { return upper_; }

  // Values above `upper` are clamped to 1 and counted in clamped().
  double scale(double y) const;
  Vector scale(const Vector& y) const;
  double unscale(double y_scaled) const { return y_scaled * upper_; }
  Vector unscale(const Vector& y_scaled) const { return y_scaled * upper_; }

  std::size_t clamped() const { return clamped_; }

 private:
  double upper_;
  mutable std::size_t clamped_ = 0;
};

// upper = max(y) * (1 + pad). Throws DataError("no positive outcomes") when
// delta has no ones.
OutcomeScaler fit_scaler(const Vector& y, const Vector& delta, double pad = OutcomeScaler::kDefaultPad);

struct CsvColumns {
  std::string outcome;
  std::string treatment;
  std::vector<std::string> covariates;
  std::vector<std::string> aux;  // loaded into TwoPartDataset::aux
};

// Reads a headed, comma-separated numeric file. Missing columns, empty or NA
// cells and non-numeric cells raise DataError with the row and column.
TwoPartDataset read_csv(const std::string& path, const CsvColumns& columns);

// Writes y, t and covariates (named x1..xp when unnamed) with full precision.
void write_csv(const std::string& path, const TwoPartDataset& data,
               const std::string& outcome = "y", const std::string& treatment = "t");

}  // namespace htmle
