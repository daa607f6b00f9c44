#pragma once

// CSV/JSON serialization for instances, designs, traces and paths.
// Numbers are written with 17 significant digits so that a save/load
// round trip is exact.

#include "qdesign/homotopy.hpp"
#include "qdesign/solvers.hpp"

#include <string>
#include <vector>

namespace qdesign::io {

std::string format_double(double x);

/// Comma-separated numeric table; a first row with a non-numeric cell is
/// taken as a header. Throws ParseError with the row/column location.
Mat<double> read_csv(const std::string& path, std::vector<std::string>* header = nullptr);

/// Writes to a temporary sibling and renames it over `path`.
void write_text_atomic(const std::string& path, const std::string& content);

std::string matrix_to_csv(const Mat<double>& M, const std::vector<std::string>& header = {});
void write_matrix_csv(const std::string& path, const Mat<double>& M, const std::vector<std::string>& header = {});

struct InstanceFiles
{
    std::string A_path;
    std::string target_path;    // c (one column) or K (m x r)
    double lambda = 0;
    bool normalize = false;
};

struct LoadedInstance
{
    ProblemInstance<double> instance;
    std::vector<std::string> warnings;
};

LoadedInstance load_instance(const InstanceFiles& files);

/// PREFIX_A.csv, PREFIX_K.csv and PREFIX.json (lambda and shape).
void save_instance(const std::string& prefix, const ProblemInstance<double>& inst);
LoadedInstance load_instance_prefix(const std::string& prefix, bool normalize = false);

/// Scales every column to unit Euclidean norm; returns indices of zero columns left untouched.
std::vector<Eigen::Index> normalize_columns(Mat<double>& A);

std::string design_to_csv(const Design<double>& w);
std::string trace_to_csv(const SolverTrace<double>& trace, bool timing = true);
std::string path_to_csv(const HomotopyPath<double>& path);
std::string mask_to_csv(const ScreeningMask<double>& mask);

} // namespace qdesign::io
