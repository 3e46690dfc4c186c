#pragma once

#include "qot/herm.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace qot {

// Hermitian matrix file format: { "dim": n, "re": [[...]], "im": [[...]] },
// row-major n x n arrays. The reader validates Hermitian symmetry to 1e-8
// and stores the symmetrized matrix.

inline nlohmann::json matrix_to_json(const HermitianOperator& a) {
    const Index d = a.dim();
    nlohmann::json re = nlohmann::json::array(), im = nlohmann::json::array();
    for (Index i = 0; i < d; ++i) {
        nlohmann::json re_row = nlohmann::json::array(), im_row = nlohmann::json::array();
        for (Index j = 0; j < d; ++j) {
            re_row.push_back(a.matrix()(i, j).real());
            im_row.push_back(a.matrix()(i, j).imag());
        }
        re.push_back(std::move(re_row));
        im.push_back(std::move(im_row));
    }
    return nlohmann::json{{"dim", d}, {"re", std::move(re)}, {"im", std::move(im)}};
}

inline HermitianOperator matrix_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("dim") || !j.contains("re") || !j.contains("im"))
        throw std::invalid_argument("matrix_from_json: expected {dim, re, im}");
    const Index d = j.at("dim").get<Index>();
    if (d < 1) throw std::invalid_argument("matrix_from_json: dim must be >= 1");
    const auto& re = j.at("re");
    const auto& im = j.at("im");
    if (static_cast<Index>(re.size()) != d || static_cast<Index>(im.size()) != d)
        throw std::invalid_argument("matrix_from_json: row count does not match dim");
    CMatrix m(d, d);
    for (Index i = 0; i < d; ++i) {
        const auto& re_row = re.at(static_cast<std::size_t>(i));
        const auto& im_row = im.at(static_cast<std::size_t>(i));
        if (static_cast<Index>(re_row.size()) != d || static_cast<Index>(im_row.size()) != d)
            throw std::invalid_argument("matrix_from_json: column count does not match dim");
        for (Index jj = 0; jj < d; ++jj)
            m(i, jj) = Complex(re_row.at(static_cast<std::size_t>(jj)).get<double>(),
                               im_row.at(static_cast<std::size_t>(jj)).get<double>());
    }
    if (!m.allFinite()) throw std::invalid_argument("matrix_from_json: non-finite entries");
    const double dev = max_abs(m - m.adjoint());
    if (dev > 1e-8 * (1.0 + max_abs(m))) {
        std::ostringstream os;
        os << "matrix_from_json: matrix is not Hermitian to 1e-8 (deviation " << dev << ")";
        throw std::invalid_argument(os.str());
    }
    return hermitian_project(m);
}

inline void write_matrix_file(const std::string& path, const HermitianOperator& a) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_matrix_file: cannot open " + path);
    os << matrix_to_json(a).dump(2) << '\n';
}

inline HermitianOperator read_matrix_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("read_matrix_file: cannot open " + path);
    nlohmann::json j;
    is >> j;
    return matrix_from_json(j);
}

} // namespace qot
