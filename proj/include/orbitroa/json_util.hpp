#pragma once

// JSON helpers shared by the artifact readers/writers.

#include <Eigen/Dense>
#include <json.hpp>
#include <string>
#include <vector>

namespace orbitroa {

nlohmann::json eigen_to_json(const Eigen::VectorXd& v);
/// Row-major nested array.
nlohmann::json eigen_to_json(const Eigen::MatrixXd& m);
Eigen::VectorXd json_to_vector(const nlohmann::json& j, const std::string& where);
Eigen::MatrixXd json_to_matrix(const nlohmann::json& j, const std::string& where);

/// Parses text, turning syntax errors into Error(kParse) with byte offset.
nlohmann::json parse_json_text(const std::string& text, const std::string& what);
nlohmann::json read_json_file(const std::string& path);
/// Writes with two-space indentation and a trailing newline.
void write_json_file(const std::string& path, const nlohmann::json& j);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace orbitroa
