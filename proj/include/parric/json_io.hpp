// JSON encoding of problems and solutions. Doubles survive a round trip
// bit-exactly (the serializer emits shortest round-trip representations).
#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "parric/problem.hpp"
#include "parric/riccati.hpp"

namespace parric {
namespace detail {

using json = nlohmann::json;

inline json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

inline Matrix matrix_from_json(const json& j, const std::string& field) {
  if (!j.is_array()) throw SchemaError(field);
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (rows == 0) return Matrix(0, 0);
  if (!j[0].is_array()) throw SchemaError(field);
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw SchemaError(field);
    for (Eigen::Index k = 0; k < cols; ++k) {
      const json& cell = row[static_cast<std::size_t>(k)];
      if (!cell.is_number()) throw SchemaError(field);
      m(i, k) = cell.get<double>();
    }
  }
  return m;
}

inline Vector vector_from_json(const json& j, const std::string& field) {
  if (!j.is_array()) throw SchemaError(field);
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const json& cell = j[static_cast<std::size_t>(i)];
    if (!cell.is_number()) throw SchemaError(field);
    v[i] = cell.get<double>();
  }
  return v;
}

inline const json& require(const json& j, const std::string& field) {
  if (!j.is_object() || !j.contains(field)) throw SchemaError(field);
  return j.at(field);
}

}  // namespace detail

inline std::string serialize_problem(const MpcProblem& p) {
  check_dimensions(p);
  detail::json doc;
  doc["nx"] = p.nx();
  doc["N"] = p.N();
  detail::json stages = detail::json::array();
  for (const StageData& s : p.stages) {
    detail::json stage;
    stage["A"] = detail::matrix_to_json(s.A);
    stage["B"] = detail::matrix_to_json(s.B);
    stage["Qx"] = detail::matrix_to_json(s.Qx);
    stage["Qxu"] = detail::matrix_to_json(s.Qxu);
    stage["Qu"] = detail::matrix_to_json(s.Qu);
    stages.push_back(std::move(stage));
  }
  doc["stages"] = std::move(stages);
  doc["QxN"] = detail::matrix_to_json(p.QxN);
  doc["x0"] = detail::vector_to_json(p.x0);
  return doc.dump(2);
}

inline MpcProblem parse_problem(const std::string& text) {
  detail::json doc;
  try {
    doc = detail::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(e.what(), e.byte);
  }

  const auto& nx_field = detail::require(doc, "nx");
  const auto& n_field = detail::require(doc, "N");
  if (!nx_field.is_number_integer()) throw SchemaError("nx");
  if (!n_field.is_number_integer()) throw SchemaError("N");
  const int nx = nx_field.get<int>();
  const int N = n_field.get<int>();

  const auto& stages = detail::require(doc, "stages");
  if (!stages.is_array()) throw SchemaError("stages");
  if (static_cast<int>(stages.size()) != N)
    throw DimensionMismatch("stage count does not match N");

  MpcProblem p;
  p.stages.reserve(stages.size());
  for (const auto& js : stages) {
    StageData s;
    s.A = detail::matrix_from_json(detail::require(js, "A"), "A");
    s.B = detail::matrix_from_json(detail::require(js, "B"), "B");
    s.Qx = detail::matrix_from_json(detail::require(js, "Qx"), "Qx");
    s.Qxu = detail::matrix_from_json(detail::require(js, "Qxu"), "Qxu");
    s.Qu = detail::matrix_from_json(detail::require(js, "Qu"), "Qu");
    // An empty B cannot carry its row count; rebuild the shape from nx.
    if (s.B.size() == 0) s.B = Matrix(nx, 0);
    if (s.Qxu.size() == 0) s.Qxu = Matrix(nx, 0);
    if (s.Qu.size() == 0) s.Qu = Matrix(0, 0);
    p.stages.push_back(std::move(s));
  }
  p.QxN = detail::matrix_from_json(detail::require(doc, "QxN"), "QxN");
  p.x0 = detail::vector_from_json(detail::require(doc, "x0"), "x0");

  if (p.nx() != nx)
    throw DimensionMismatch("x0 length does not match nx");
  check_dimensions(p);
  return p;
}

inline std::string serialize_solution(const Solution& s) {
  detail::json doc;
  auto seq = [](const std::vector<Vector>& vs) {
    detail::json out = detail::json::array();
    for (const Vector& v : vs) out.push_back(detail::vector_to_json(v));
    return out;
  };
  doc["x"] = seq(s.x);
  doc["u"] = seq(s.u);
  doc["lambda"] = seq(s.lambda);
  doc["mu"] = seq(s.mu);
  doc["objective"] = s.objective;
  return doc.dump(2);
}

}  // namespace parric
