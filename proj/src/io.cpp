#include "qdesign/io.hpp"

#include <json.hpp>

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace qdesign::io {

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line)
{
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

bool parse_number(const std::string& s, double& out)
{
    if (s.empty()) return false;
    char* end = nullptr;
    errno = 0;
    out = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size() && errno != ERANGE;
}

std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::ParseError, path + ": cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

std::string format_double(double x)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

Mat<double> read_csv(const std::string& path, std::vector<std::string>* header)
{
    std::istringstream in(read_file(path));
    std::vector<std::vector<double>> rows;
    std::string line;
    long lineno = 0;
    bool first = true;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto cells = split(line);
        std::vector<double> vals(cells.size());
        bool numeric = true;
        std::size_t bad = 0;
        for (std::size_t j = 0; j < cells.size(); ++j) {
            if (!parse_number(cells[j], vals[j])) {
                numeric = false;
                bad = j;
                break;
            }
        }
        if (!numeric) {
            if (first) {
                if (header) *header = cells;
                first = false;
                continue;
            }
            throw Error(ErrorCode::ParseError, path + ": row " + std::to_string(lineno) + ", column " +
                                                   std::to_string(bad + 1) + ": non-numeric cell '" + cells[bad] + "'");
        }
        first = false;
        if (!rows.empty() && vals.size() != rows.front().size())
            throw Error(ErrorCode::ParseError, path + ": row " + std::to_string(lineno) + ", column " +
                                                   std::to_string(std::min(vals.size(), rows.front().size()) + 1) +
                                                   ": expected " + std::to_string(rows.front().size()) + " columns, found " +
                                                   std::to_string(vals.size()));
        rows.push_back(std::move(vals));
    }
    if (rows.empty()) throw Error(ErrorCode::ParseError, path + ": no numeric rows");
    Mat<double> M(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            M(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return M;
}

void write_text_atomic(const std::string& path, const std::string& content)
{
    const std::filesystem::path target(path);
    if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::ParseError, tmp + ": cannot open for writing");
        out << content;
        if (!out) throw Error(ErrorCode::ParseError, tmp + ": write failed");
    }
    std::filesystem::rename(tmp, target);
}

std::string matrix_to_csv(const Mat<double>& M, const std::vector<std::string>& header)
{
    std::string out;
    for (std::size_t j = 0; j < header.size(); ++j) out += (j ? "," : "") + header[j];
    if (!header.empty()) out += "\n";
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        for (Eigen::Index j = 0; j < M.cols(); ++j) {
            if (j) out += ",";
            out += format_double(M(i, j));
        }
        out += "\n";
    }
    return out;
}

void write_matrix_csv(const std::string& path, const Mat<double>& M, const std::vector<std::string>& header)
{
    write_text_atomic(path, matrix_to_csv(M, header));
}

std::vector<Eigen::Index> normalize_columns(Mat<double>& A)
{
    std::vector<Eigen::Index> zero;
    for (Eigen::Index j = 0; j < A.cols(); ++j) {
        const double n = A.col(j).norm();
        if (n > 0) A.col(j) /= n;
        else zero.push_back(j);
    }
    return zero;
}

LoadedInstance load_instance(const InstanceFiles& files)
{
    Mat<double> A = read_csv(files.A_path);
    const Mat<double> K = read_csv(files.target_path);
    if (K.rows() != A.rows())
        throw Error(ErrorCode::ParseError, files.target_path + ": row " + std::to_string(std::min(K.rows(), A.rows()) + 1) +
                                               ", column 1: target has " + std::to_string(K.rows()) +
                                               " rows but A has " + std::to_string(A.rows()));
    std::vector<std::string> warnings;
    if (files.normalize) {
        for (auto j : normalize_columns(A))
            warnings.push_back("column " + std::to_string(j) + " of A is zero and was left unnormalized");
    }
    return {ProblemInstance<double>(std::move(A), K, files.lambda), std::move(warnings)};
}

void save_instance(const std::string& prefix, const ProblemInstance<double>& inst)
{
    write_matrix_csv(prefix + "_A.csv", inst.A());
    write_matrix_csv(prefix + "_K.csv", inst.K());
    nlohmann::ordered_json meta;
    meta["lambda"] = inst.lambda();
    meta["m"] = inst.m();
    meta["p"] = inst.p();
    meta["r"] = inst.r();
    write_text_atomic(prefix + ".json", meta.dump(2) + "\n");
}

LoadedInstance load_instance_prefix(const std::string& prefix, bool normalize)
{
    const auto meta = nlohmann::json::parse(read_file(prefix + ".json"), nullptr, false);
    if (meta.is_discarded() || !meta.contains("lambda") || !meta["lambda"].is_number())
        throw Error(ErrorCode::ParseError, prefix + ".json: missing numeric 'lambda'");
    InstanceFiles f;
    f.A_path = prefix + "_A.csv";
    f.target_path = prefix + "_K.csv";
    f.lambda = meta["lambda"].get<double>();
    f.normalize = normalize;
    return load_instance(f);
}

std::string design_to_csv(const Design<double>& w)
{
    std::string out = "index,weight\n";
    for (Eigen::Index i = 0; i < w.size(); ++i) out += std::to_string(i) + "," + format_double(w[i]) + "\n";
    return out;
}

std::string trace_to_csv(const SolverTrace<double>& trace, bool timing)
{
    std::string out = "iter,value,gap_or_delta,surviving,elapsed_s\n";
    for (const auto& r : trace.records) {
        out += std::to_string(r.iter) + "," + format_double(r.value) + "," + format_double(r.gap_or_delta) + "," +
               std::to_string(r.surviving) + "," + format_double(timing ? r.elapsed_s : 0.0) + "\n";
    }
    return out;
}

std::string path_to_csv(const HomotopyPath<double>& path)
{
    std::string out = "k,alpha,lambda,nnz,active_indices\n";
    for (std::size_t k = 0; k < path.breakpoints.size(); ++k) {
        const auto& b = path.breakpoints[k];
        std::vector<Eigen::Index> nz;
        for (Eigen::Index i = 0; i < b.x.size(); ++i)
            if (b.x[i] != 0) nz.push_back(i);
        std::string idx;
        for (std::size_t j = 0; j < nz.size(); ++j) idx += (j ? " " : "") + std::to_string(nz[j]);
        out += std::to_string(k + 1) + "," + format_double(b.alpha) + "," + format_double(b.lambda) + "," +
               std::to_string(nz.size()) + "," + idx + "\n";
    }
    return out;
}

std::string mask_to_csv(const ScreeningMask<double>& mask)
{
    std::string out = "index,value,eliminated\n";
    for (std::size_t i = 0; i < mask.eliminated.size(); ++i)
        out += std::to_string(i) + "," + format_double(mask.values[static_cast<Eigen::Index>(i)]) + "," +
               (mask.eliminated[i] ? "1" : "0") + "\n";
    return out;
}

} // namespace qdesign::io
