#include "gcs/constellation.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "gcs/errors.hpp"

namespace gcs {

namespace {

constexpr double kUnitPowerTolerance = 1e-12;

bool is_finite(cdouble z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); }

unsigned gray_decode(unsigned g) {
  unsigned b = 0;
  for (; g != 0; g >>= 1) b ^= g;
  return b;
}

}  // namespace

Constellation::Constellation(std::vector<cdouble> points, int n_complex_dims)
    : points_(std::move(points)), n_complex_dims_(n_complex_dims) {
  if (n_complex_dims_ < 1) throw InvalidArgument("constellation: n_complex_dims must be >= 1");
  if (points_.size() % static_cast<std::size_t>(n_complex_dims_) != 0)
    throw InvalidArgument("constellation: point count is not a multiple of n_complex_dims");
  order_ = static_cast<int>(points_.size()) / n_complex_dims_;
  if (order_ < 2) throw InvalidArgument("constellation: order M must be >= 2");
  for (const auto& z : points_)
    if (!is_finite(z)) throw InvalidArgument("constellation: non-finite point");
}

std::span<const cdouble> Constellation::symbol(int index) const {
  if (index < 0 || index >= order_) throw InvalidArgument("constellation: symbol index out of range");
  return std::span<const cdouble>(points_).subspan(static_cast<std::size_t>(index) * n_complex_dims_,
                                                   n_complex_dims_);
}

double Constellation::mean_power() const {
  double sum = 0;
  for (const auto& z : points_) sum += std::norm(z);
  return sum / order_;
}

double Constellation::min_distance() const {
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < order_; ++i) {
    const auto a = symbol(i);
    for (int j = i + 1; j < order_; ++j) {
      const auto b = symbol(j);
      double d2 = 0;
      for (int n = 0; n < n_complex_dims_; ++n) d2 += std::norm(a[n] - b[n]);
      best = std::min(best, d2);
    }
  }
  return std::sqrt(best);
}

Constellation Constellation::scaled(double factor) const {
  std::vector<cdouble> pts(points_);
  for (auto& z : pts) z *= factor;
  Constellation out(std::move(pts), n_complex_dims_);
  out.metadata = metadata;
  return out;
}

Constellation new_qam(int order) {
  int bits = 0;
  switch (order) {
    case 4: bits = 1; break;
    case 16: bits = 2; break;
    case 64: bits = 3; break;
    case 256: bits = 4; break;
    default:
      throw InvalidArgument("new_qam: unsupported order " + std::to_string(order) +
                            " (expected 4, 16, 64 or 256)");
  }
  const unsigned levels = 1u << bits;
  std::vector<cdouble> pts(static_cast<std::size_t>(order));
  for (unsigned label = 0; label < static_cast<unsigned>(order); ++label) {
    const unsigned i_index = gray_decode(label >> bits);
    const unsigned q_index = gray_decode(label & (levels - 1));
    const double re = 2.0 * i_index - (levels - 1.0);
    const double im = 2.0 * q_index - (levels - 1.0);
    pts[label] = {re, im};
  }
  Constellation c(std::move(pts), 1);
  c.metadata["source"] = "qam" + std::to_string(order);
  return normalize_unit_power(c);
}

Constellation new_gaussian(int order) {
  if (order < 2) throw InvalidArgument("new_gaussian: order must be at least 2");
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  std::vector<cdouble> pts(static_cast<std::size_t>(order));
  for (int k = 0; k < order; ++k) {
    const double r = std::sqrt(-std::log(1.0 - (k + 0.5) / order));
    pts[static_cast<std::size_t>(k)] = std::polar(r, golden * k);
  }
  Constellation c(std::move(pts), 1);
  c.metadata["source"] = "gauss" + std::to_string(order);
  return normalize_unit_power(c);
}

Moments moments(const Constellation& c, std::optional<std::span<const double>> probabilities) {
  const int m = c.order();
  if (m == 0) throw InvalidArgument("moments: empty constellation");
  if (probabilities) {
    if (probabilities->size() != static_cast<std::size_t>(m))
      throw InvalidArgument("moments: weight count does not match constellation order");
    double total = 0;
    for (double w : *probabilities) {
      if (!(w >= 0)) throw InvalidArgument("moments: negative weight");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-9) throw InvalidArgument("moments: weights do not sum to 1");
  }
  double e2 = 0, e4 = 0, e6 = 0;
  for (int i = 0; i < m; ++i) {
    double p = 0;
    for (const auto& z : c.symbol(i)) p += std::norm(z);
    const double w = probabilities ? (*probabilities)[i] : 1.0 / m;
    e2 += w * p;
    e4 += w * p * p;
    e6 += w * p * p * p;
  }
  if (e2 <= 0) throw DegenerateInput("moments: constellation has zero power");
  return {e2, e4 / (e2 * e2), e6 / (e2 * e2 * e2)};
}

Constellation normalize_unit_power(const Constellation& c) {
  const double power = c.mean_power();
  if (!(power > 0)) throw DegenerateInput("normalize_unit_power: all points are zero");
  Constellation out = std::abs(power - 1.0) <= kUnitPowerTolerance ? c : c.scaled(1.0 / std::sqrt(power));
  out.normalized_ = true;
  return out;
}

nlohmann::json to_json(const Constellation& c) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& z : c.points()) {
    if (!is_finite(z)) throw InvalidArgument("save: non-finite point");
    pts.push_back({z.real(), z.imag()});
  }
  return {{"format_version", 1},
          {"M", c.order()},
          {"n_complex_dims", c.n_complex_dims()},
          {"points", std::move(pts)},
          {"metadata", c.metadata}};
}

Constellation from_json(const nlohmann::json& j) {
  auto field = [&](const char* name) -> const nlohmann::json& {
    if (!j.is_object() || !j.contains(name)) throw ParseError(std::string("constellation: missing field '") + name + "'");
    return j.at(name);
  };
  const auto& version = field("format_version");
  if (!version.is_number_integer() || version.get<int>() != 1)
    throw ParseError("constellation: field 'format_version' must be 1");
  const auto& m_field = field("M");
  if (!m_field.is_number_integer() || m_field.get<int>() < 2)
    throw ParseError("constellation: field 'M' must be an integer >= 2");
  const auto& n_field = field("n_complex_dims");
  if (!n_field.is_number_integer() || n_field.get<int>() < 1)
    throw ParseError("constellation: field 'n_complex_dims' must be a positive integer");
  const int m = m_field.get<int>();
  const int n = n_field.get<int>();
  const auto& pts = field("points");
  if (!pts.is_array()) throw ParseError("constellation: field 'points' must be an array");
  const std::size_t expected = static_cast<std::size_t>(m) * n;
  if (pts.size() != expected)
    throw ParseError("constellation: field 'points' has " + std::to_string(pts.size()) + " entries, expected " +
                     std::to_string(expected) + " from 'M' and 'n_complex_dims'");
  std::vector<cdouble> points;
  points.reserve(expected);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto& p = pts[i];
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
      throw ParseError("constellation: field 'points[" + std::to_string(i) + "]' must be [re, im]");
    const cdouble z(p[0].get<double>(), p[1].get<double>());
    if (!is_finite(z)) throw ParseError("constellation: field 'points[" + std::to_string(i) + "]' is not finite");
    points.push_back(z);
  }
  Constellation c(std::move(points), n);
  if (j.contains("metadata")) c.metadata = j.at("metadata");
  if (std::abs(c.mean_power() - 1.0) <= kUnitPowerTolerance) c = normalize_unit_power(c);
  return c;
}

void save(const Constellation& c, const std::filesystem::path& path) {
  const auto doc = to_json(c);
  std::ofstream out(path);
  if (!out) throw Error("save: cannot open '" + path.string() + "' for writing");
  out << doc.dump(2) << '\n';
  if (!out) throw Error("save: write to '" + path.string() + "' failed");
}

Constellation load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("load: cannot open '" + path.string() + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("constellation: '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return from_json(doc);
}

Constellation load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("load_csv: cannot open '" + path.string() + "'");
  std::vector<cdouble> points;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    row.imbue(std::locale::classic());
    double re = 0, im = 0;
    char comma = 0;
    if (!(row >> re >> comma >> im) || comma != ',') {
      if (points.empty() && line_no == 1) continue;  // header
      throw ParseError("load_csv: line " + std::to_string(line_no) + " is not 're,im'");
    }
    if (!std::isfinite(re) || !std::isfinite(im))
      throw ParseError("load_csv: line " + std::to_string(line_no) + " is not finite");
    points.emplace_back(re, im);
  }
  Constellation c(std::move(points), 1);
  c.metadata["source"] = path.filename().string();
  return c;
}

void save_csv(const Constellation& c, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("save_csv: cannot open '" + path.string() + "'");
  out.imbue(std::locale::classic());
  out.precision(17);
  out << "re,im\n";
  for (const auto& z : c.points()) out << z.real() << ',' << z.imag() << '\n';
}

}  // namespace gcs
