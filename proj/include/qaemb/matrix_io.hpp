#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "qaemb/error.hpp"
#include "qaemb/text.hpp"

namespace qaemb {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

static_assert(std::endian::native == std::endian::little,
              "QAEMB-MAT I/O assumes a little-endian host");

namespace detail {
inline std::size_t parse_header_field(const std::string& header, const std::string& key)
{
    auto pos = header.find(key + "=");
    require(pos != std::string::npos, ErrorCode::MalformedRecord,
            "QAEMB-MAT header missing " + key);
    pos += key.size() + 1;
    std::size_t end = pos;
    while (end < header.size() && std::isdigit(static_cast<unsigned char>(header[end])) != 0) {
        ++end;
    }
    require(end > pos, ErrorCode::MalformedRecord, "QAEMB-MAT header bad " + key);
    return static_cast<std::size_t>(std::stoull(header.substr(pos, end - pos)));
}
}  // namespace detail

inline std::string mat_header(Eigen::Index rows, Eigen::Index cols)
{
    return "QAEMB-MAT v1 rows=" + std::to_string(rows) + " cols=" + std::to_string(cols) +
           " dtype=f32 order=row\n";
}

/// Serializes to the QAEMB-MAT v1 byte layout: ASCII header line then
/// rows*cols little-endian float32 in row-major order.
inline std::string encode_mat(const Matrix& m)
{
    std::string out = mat_header(m.rows(), m.cols());
    const auto header_size = out.size();
    out.resize(header_size + sizeof(float) * static_cast<std::size_t>(m.size()));
    char* dst = out.data() + header_size;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            const auto f = static_cast<float>(m(r, c));
            std::memcpy(dst, &f, sizeof f);
            dst += sizeof f;
        }
    }
    return out;
}

inline Matrix decode_mat(std::string_view bytes)
{
    auto nl = bytes.find('\n');
    require(nl != std::string_view::npos, ErrorCode::MalformedRecord, "QAEMB-MAT missing header");
    std::string header(bytes.substr(0, nl));
    require(header.rfind("QAEMB-MAT v1 ", 0) == 0, ErrorCode::MalformedRecord,
            "not a QAEMB-MAT v1 file");
    require(header.find("dtype=f32") != std::string::npos &&
                header.find("order=row") != std::string::npos,
            ErrorCode::MalformedRecord, "unsupported QAEMB-MAT dtype/order");
    const auto rows = detail::parse_header_field(header, "rows");
    const auto cols = detail::parse_header_field(header, "cols");
    const auto payload = bytes.substr(nl + 1);
    require(payload.size() == rows * cols * sizeof(float), ErrorCode::MalformedRecord,
            "QAEMB-MAT payload size mismatch");
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    const char* src = payload.data();
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            float f = 0;
            std::memcpy(&f, src, sizeof f);
            src += sizeof f;
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = f;
        }
    }
    return m;
}

inline void save_mat(const Matrix& m, const std::string& path)
{
    text::write_file(path, encode_mat(m));
}

inline Matrix load_mat(const std::string& path)
{
    return decode_mat(text::read_file(path));
}

inline std::string encode_csv(const Matrix& m, const std::vector<std::string>& header = {})
{
    std::ostringstream out;
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    if (!header.empty()) {
        out << text::join(header, ",") << '\n';
    }
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            if (c > 0) {
                out << ',';
            }
            out << m(r, c);
        }
        out << '\n';
    }
    return out.str();
}

/// Parses a numeric CSV. A first line that does not parse as numbers is
/// treated as a header and skipped.
inline Matrix decode_csv(std::string_view content)
{
    std::vector<std::vector<double>> rows;
    auto lines = text::split_lines(content);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        auto line = text::trim(lines[i]);
        if (line.empty()) {
            continue;
        }
        std::vector<double> row;
        bool numeric = true;
        for (const auto& cell : text::split(line, ',')) {
            auto t = std::string(text::trim(cell));
            char* end = nullptr;
            double v = std::strtod(t.c_str(), &end);
            if (t.empty() || end != t.c_str() + t.size()) {
                numeric = false;
                break;
            }
            row.push_back(v);
        }
        if (!numeric) {
            require(rows.empty() && i == 0, ErrorCode::MalformedRecord,
                    "non-numeric CSV cell on line " + std::to_string(i + 1));
            continue;
        }
        require(rows.empty() || rows.front().size() == row.size(), ErrorCode::MalformedRecord,
                "ragged CSV row on line " + std::to_string(i + 1));
        rows.push_back(std::move(row));
    }
    const auto ncols = rows.empty() ? 0 : rows.front().size();
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(ncols));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < ncols; ++c) {
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
        }
    }
    return m;
}

inline void save_csv(const Matrix& m, const std::string& path, const std::vector<std::string>& header = {})
{
    text::write_file(path, encode_csv(m, header));
}

inline Matrix load_csv(const std::string& path)
{
    return decode_csv(text::read_file(path));
}

/// Dispatches on extension: `.csv` is text, anything else is QAEMB-MAT.
inline Matrix load_matrix(const std::string& path)
{
    if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0) {
        return load_csv(path);
    }
    return load_mat(path);
}

inline void save_matrix(const Matrix& m, const std::string& path)
{
    if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0) {
        save_csv(m, path);
    } else {
        save_mat(m, path);
    }
}

inline bool all_finite(const Matrix& m)
{
    return m.allFinite();
}

}  // namespace qaemb
