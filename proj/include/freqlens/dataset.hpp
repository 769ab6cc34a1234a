#pragma once

#include "freqlens/errors.hpp"
#include "freqlens/io_util.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <sstream>
#include <string>

namespace freqlens {

// Points x_i in R^d paired with targets y_i in R^{d_o}. One row per sample.
struct LabeledDataset {
    Eigen::MatrixXd points;   // n x d
    Eigen::MatrixXd targets;  // n x d_o

    Eigen::Index size() const { return points.rows(); }
    Eigen::Index input_dim() const { return points.cols(); }
    Eigen::Index target_dim() const { return targets.cols(); }

    void validate() const {
        if (points.rows() < 1) throw invalid_parameter_error("dataset needs at least one point");
        if (points.cols() < 1) throw invalid_parameter_error("dataset needs input dimension >= 1");
        if (targets.cols() < 1) throw invalid_parameter_error("dataset needs target dimension >= 1");
        if (targets.rows() != points.rows()) {
            throw shape_error("points/targets row count mismatch: " + std::to_string(points.rows()) +
                              " vs " + std::to_string(targets.rows()));
        }
        if (!points.allFinite() || !targets.allFinite()) {
            throw invalid_parameter_error("dataset contains non-finite entries");
        }
    }
};

// Divides every input column by its maximum absolute value so each dimension
// lies in [-1, 1]. Columns that are identically zero stay unchanged, and
// targets are never touched.
inline LabeledDataset normalize_dimensions(const LabeledDataset& data) {
    data.validate();
    LabeledDataset out = data;
    for (Eigen::Index j = 0; j < out.points.cols(); ++j) {
        const double amplitude = out.points.col(j).cwiseAbs().maxCoeff();
        if (amplitude > 0.0) out.points.col(j) /= amplitude;
    }
    return out;
}

namespace detail {

inline std::string dataset_header(Eigen::Index d, Eigen::Index d_o) {
    std::string header;
    for (Eigen::Index j = 0; j < d; ++j) header += "x" + std::to_string(j) + ",";
    for (Eigen::Index j = 0; j < d_o; ++j) {
        header += "y" + std::to_string(j);
        if (j + 1 < d_o) header += ",";
    }
    return header;
}

}  // namespace detail

// CSV layout: header `x0,...,x{d-1},y0,...,y{do-1}`, then one row of
// comma-separated decimal floats per sample.
inline std::string dataset_to_csv(const LabeledDataset& data) {
    data.validate();
    std::string out = detail::dataset_header(data.input_dim(), data.target_dim()) + "\n";
    for (Eigen::Index i = 0; i < data.size(); ++i) {
        for (Eigen::Index j = 0; j < data.input_dim(); ++j) {
            out += format_double(data.points(i, j));
            out += ",";
        }
        for (Eigen::Index j = 0; j < data.target_dim(); ++j) {
            out += format_double(data.targets(i, j));
            if (j + 1 < data.target_dim()) out += ",";
        }
        out += "\n";
    }
    return out;
}

inline void write_dataset_csv(const std::filesystem::path& path, const LabeledDataset& data) {
    write_file_atomic(path, dataset_to_csv(data));
}

inline LabeledDataset parse_dataset_csv(const std::string& content, const std::string& origin) {
    std::istringstream in(content);
    std::string line;
    if (!std::getline(in, line)) throw parse_error(origin + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    const auto header = split_fields(line);
    Eigen::Index d = 0;
    Eigen::Index d_o = 0;
    for (std::size_t j = 0; j < header.size(); ++j) {
        const std::string expected_x = "x" + std::to_string(j);
        const std::string expected_y = "y" + std::to_string(j - static_cast<std::size_t>(d));
        if (d_o == 0 && header[j] == expected_x) {
            ++d;
        } else if (header[j] == expected_y) {
            ++d_o;
        } else {
            throw parse_error(origin + ": line 1: unexpected header column '" + std::string(header[j]) +
                              "' (want x0..x{d-1},y0..y{do-1})");
        }
    }
    if (d < 1 || d_o < 1) throw parse_error(origin + ": line 1: header needs at least one x and one y column");

    std::vector<double> rows;
    std::size_t n = 0;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_fields(line);
        if (fields.size() != static_cast<std::size_t>(d + d_o)) {
            throw parse_error(origin + ": line " + std::to_string(line_no) + ": expected " +
                              std::to_string(d + d_o) + " fields, got " + std::to_string(fields.size()));
        }
        for (const auto& f : fields) {
            rows.push_back(parse_double(f, origin + ": line " + std::to_string(line_no)));
        }
        ++n;
    }
    if (n == 0) throw parse_error(origin + ": no data rows");

    LabeledDataset data;
    data.points.resize(static_cast<Eigen::Index>(n), d);
    data.targets.resize(static_cast<Eigen::Index>(n), d_o);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = rows.data() + i * static_cast<std::size_t>(d + d_o);
        for (Eigen::Index j = 0; j < d; ++j) data.points(static_cast<Eigen::Index>(i), j) = row[j];
        for (Eigen::Index j = 0; j < d_o; ++j) data.targets(static_cast<Eigen::Index>(i), j) = row[d + j];
    }
    data.validate();
    return data;
}

inline LabeledDataset read_dataset_csv(const std::filesystem::path& path) {
    return parse_dataset_csv(read_file(path), path.string());
}

}  // namespace freqlens
