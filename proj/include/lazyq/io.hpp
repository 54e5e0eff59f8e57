#pragma once

#include <cstdio>
#include <cstdlib>
#include <sstream>
#include <string>
#include <utility>

#include "json.hpp"
#include "lazyq/errors.hpp"
#include "lazyq/sampler.hpp"
#include "lazyq/spectra.hpp"

// File formats. Matrices travel as JSON documents {"dim": n, "data": [...]},
// data row-major with one [re, im] pair per entry. Sampled states are one
// line per state, 2n reals interleaved re/im at full precision. Emitted
// numbers in result documents are rounded to 12 significant digits so equal
// inputs diff equal.

namespace lazyq::io {

using json = nlohmann::ordered_json;

struct MatrixFile {
  Eigen::Index dim;
  ComplexMatrix matrix;
};

/// Parses the matrix document; structural problems throw ParseError.
/// Hermiticity/density validation is left to the caller's command contract.
inline MatrixFile parse_matrix_text(const std::string& text) {
  const json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded()) {
    throw Error(ErrorKind::ParseError, "matrix document is not valid JSON");
  }
  if (!doc.is_object() || !doc.contains("dim") || !doc.contains("data")) {
    throw Error(ErrorKind::ParseError, "matrix document needs \"dim\" and \"data\" fields");
  }
  if (!doc["dim"].is_number_integer() || doc["dim"].get<long long>() < 1) {
    throw Error(ErrorKind::ParseError, "\"dim\" must be a positive integer");
  }
  const Eigen::Index n = doc["dim"].get<Eigen::Index>();
  const json& data = doc["data"];
  if (!data.is_array() || data.size() != static_cast<std::size_t>(n * n)) {
    std::ostringstream msg;
    msg << "\"data\" must hold " << n * n << " entries, found "
        << (data.is_array() ? data.size() : 0);
    throw Error(ErrorKind::ParseError, msg.str());
  }
  ComplexMatrix m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const json& entry = data[static_cast<std::size_t>(i * n + j)];
      if (!entry.is_array() || entry.size() != 2 || !entry[0].is_number() ||
          !entry[1].is_number()) {
        std::ostringstream msg;
        msg << "entry (" << i << ", " << j << ") must be a [re, im] pair";
        throw Error(ErrorKind::ParseError, msg.str());
      }
      m(i, j) = Complex(entry[0].get<double>(), entry[1].get<double>());
    }
  }
  return MatrixFile{n, std::move(m)};
}

inline json matrix_to_json(const ComplexMatrix& m) {
  json data = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      data.push_back({m(i, j).real(), m(i, j).imag()});
    }
  }
  return json{{"dim", m.rows()}, {"data", std::move(data)}};
}

/// Rounds through the 12-significant-digit decimal rendering, so emitted
/// documents are reproducible and diffable across runs.
inline double round12(double x) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.12g", x);
  return std::strtod(buffer, nullptr);
}

inline std::string format12(double x) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.12g", x);
  return buffer;
}

inline std::string format17(double x) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.17g", x);
  return buffer;
}

inline json rounded_vector(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    out.push_back(round12(v(i)));
  }
  return out;
}

inline json rounded_matrix(const ComplexMatrix& m) {
  json data = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      data.push_back({round12(m(i, j).real()), round12(m(i, j).imag())});
    }
  }
  return json{{"dim", m.rows()}, {"data", std::move(data)}};
}

/// One line per state: 2n reals, re/im interleaved, full precision.
inline std::string states_to_text(const SampleBatch& batch) {
  std::ostringstream out;
  for (const PureState& psi : batch.states) {
    for (Eigen::Index i = 0; i < psi.dim(); ++i) {
      if (i > 0) out << ' ';
      out << format17(psi.amplitudes()(i).real()) << ' ' << format17(psi.amplitudes()(i).imag());
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace lazyq::io
