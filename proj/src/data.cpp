#include "htmle/data.hpp"

#include "htmle/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace htmle {

Decomposition decompose(const Vector& y) {
  Decomposition out{Vector::Zero(y.size()), Vector::Constant(y.size(), kUndefined)};
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double v = y[i];
    if (!std::isfinite(v)) {
      throw DataError("outcome at index " + std::to_string(i) + " is not finite");
    }
    if (v < 0.0) {
      throw DataError("outcome at index " + std::to_string(i) + " is negative");
    }
    if (v > 0.0) {
      out.delta[i] = 1.0;
      out.s[i] = v;
    }
  }
  return out;
}

TwoPartDataset::TwoPartDataset(Matrix x, Vector t, Vector y, std::vector<std::string> covariate_names)
    : x_(std::move(x)), t_(std::move(t)), y_(std::move(y)), names_(std::move(covariate_names)) {
  if (y_.size() < 1) throw DataError("dataset has no rows");
  if (t_.size() != y_.size() || x_.rows() != y_.size()) {
    throw DataError("inconsistent lengths: x has " + std::to_string(x_.rows()) + " rows, t has " +
                    std::to_string(t_.size()) + ", y has " + std::to_string(y_.size()));
  }
  if (!x_.allFinite()) throw DataError("covariate matrix contains non-finite values");
  if (!t_.allFinite()) throw DataError("treatment contains non-finite values");
  auto parts = decompose(y_);
  delta_ = std::move(parts.delta);
  s_ = std::move(parts.s);
  if (names_.empty()) {
    for (Eigen::Index j = 0; j < x_.cols(); ++j) names_.push_back("x" + std::to_string(j + 1));
  }
  if (names_.size() != static_cast<std::size_t>(x_.cols())) {
    throw DataError("covariate name count does not match covariate columns");
  }
}

int TwoPartDataset::covariate_index(const std::string& name) const {
  for (std::size_t j = 0; j < names_.size(); ++j) {
    if (names_[j] == name) return static_cast<int>(j);
  }
  return -1;
}

void TwoPartDataset::set_aux(const std::string& name, Vector values) {
  if (values.size() != y_.size()) throw DataError("auxiliary column '" + name + "' has wrong length");
  aux_[name] = std::move(values);
}

const Vector* TwoPartDataset::aux(const std::string& name) const {
  auto it = aux_.find(name);
  return it == aux_.end() ? nullptr : &it->second;
}

std::size_t TwoPartDataset::positives() const {
  return static_cast<std::size_t>(delta_.sum());
}

TwoPartDataset TwoPartDataset::subset(const std::vector<std::size_t>& rows) const {
  const auto m = static_cast<Eigen::Index>(rows.size());
  Matrix x(m, x_.cols());
  Vector t(m), y(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const auto i = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(k)]);
    x.row(k) = x_.row(i);
    t[k] = t_[i];
    y[k] = y_[i];
  }
  TwoPartDataset out(std::move(x), std::move(t), std::move(y), names_);
  for (const auto& [name, col] : aux_) {
    Vector v(m);
    for (Eigen::Index k = 0; k < m; ++k) v[k] = col[static_cast<Eigen::Index>(rows[static_cast<std::size_t>(k)])];
    out.aux_[name] = std::move(v);
  }
  return out;
}

OutcomeScaler::OutcomeScaler(double upper) : upper_(upper) {
  if (!(upper > 0.0) || !std::isfinite(upper)) throw DataError("scaler upper bound must be positive and finite");
}

double OutcomeScaler::scale(double y) const {
  const double v = y / upper_;
  if (v > 1.0) {
    ++clamped_;
    return 1.0;
  }
  return v;
}

Vector OutcomeScaler::scale(const Vector& y) const {
  Vector out(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) out[i] = scale(y[i]);
  return out;
}

OutcomeScaler fit_scaler(const Vector& y, const Vector& delta, double pad) {
  if (delta.size() != y.size()) throw DataError("fit_scaler: y and delta lengths differ");
  if (!(pad >= 0.0)) throw ConfigError("fit_scaler: pad must be non-negative");
  if (delta.sum() < 1.0) throw DataError("no positive outcomes");
  return OutcomeScaler(y.maxCoeff() * (1.0 + pad));
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    auto b = cell.find_first_not_of(" \t\r\"");
    auto e = cell.find_last_not_of(" \t\r\"");
    cells.push_back(b == std::string::npos ? std::string{} : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_cell(const std::string& cell, std::size_t row, const std::string& column) {
  const std::string where = " at row " + std::to_string(row) + ", column '" + column + "'";
  if (cell.empty()) throw DataError("empty cell" + where);
  if (cell == "NA" || cell == "na" || cell == "NaN" || cell == "nan" || cell == "null") {
    throw DataError("missing value (" + cell + ")" + where);
  }
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last || !std::isfinite(value)) {
    throw DataError("non-numeric cell '" + cell + "'" + where);
  }
  return value;
}

}  // namespace

TwoPartDataset read_csv(const std::string& path, const CsvColumns& columns) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line.find_first_not_of(" \t\r") == std::string::npos) {
    throw DataError("'" + path + "' is empty (no header row)");
  }
  const auto header = split_line(line);
  auto locate = [&](const std::string& name) {
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (header[j] == name) return j;
    }
    throw DataError("column '" + name + "' not found in '" + path + "'");
  };
  const std::size_t y_col = locate(columns.outcome);
  const std::size_t t_col = locate(columns.treatment);
  std::vector<std::size_t> x_cols, aux_cols;
  for (const auto& c : columns.covariates) x_cols.push_back(locate(c));
  for (const auto& c : columns.aux) aux_cols.push_back(locate(c));

  std::vector<double> ys, ts;
  std::vector<std::vector<double>> xs, auxs(aux_cols.size());
  std::size_t row = 1;  // header is row 1
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_line(line);
    if (cells.size() != header.size()) {
      throw DataError("row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                      " cells, header has " + std::to_string(header.size()));
    }
    ys.push_back(parse_cell(cells[y_col], row, columns.outcome));
    ts.push_back(parse_cell(cells[t_col], row, columns.treatment));
    std::vector<double> xr;
    xr.reserve(x_cols.size());
    for (std::size_t k = 0; k < x_cols.size(); ++k) xr.push_back(parse_cell(cells[x_cols[k]], row, columns.covariates[k]));
    xs.push_back(std::move(xr));
    for (std::size_t k = 0; k < aux_cols.size(); ++k) auxs[k].push_back(parse_cell(cells[aux_cols[k]], row, columns.aux[k]));
  }
  if (ys.empty()) throw DataError("'" + path + "' has a header but no data rows");

  const auto n = static_cast<Eigen::Index>(ys.size());
  const auto p = static_cast<Eigen::Index>(x_cols.size());
  Matrix x(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) x(i, j) = xs[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  Vector y = Eigen::Map<Vector>(ys.data(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (y[i] < 0.0) {
      throw DataError("negative outcome at row " + std::to_string(i + 2) + ", column '" + columns.outcome + "'");
    }
  }
  TwoPartDataset data(std::move(x), Eigen::Map<Vector>(ts.data(), n), std::move(y), columns.covariates);
  for (std::size_t k = 0; k < aux_cols.size(); ++k) data.set_aux(columns.aux[k], Eigen::Map<Vector>(auxs[k].data(), n));
  return data;
}

void write_csv(const std::string& path, const TwoPartDataset& data, const std::string& outcome,
               const std::string& treatment) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << outcome << ',' << treatment;
  for (const auto& name : data.covariate_names()) out << ',' << name;
  out << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out << data.y()[r] << ',' << data.t()[r];
    for (Eigen::Index j = 0; j < data.x().cols(); ++j) out << ',' << data.x()(r, j);
    out << '\n';
  }
}

}  // namespace htmle
