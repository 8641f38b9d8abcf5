#pragma once

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "flawsim/model.hpp"

namespace flawsim {

/// Shortest decimal that round-trips the exact double (17 significant digits).
inline std::string format_exact(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline double parse_double(const std::string& s) {
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    // ERANGE with a huge result is an overflow; gradual underflow is fine
    if (end == s.c_str() || (errno == ERANGE && (v == HUGE_VAL || v == -HUGE_VAL)))
        throw std::invalid_argument("not a number: '" + s + "'");
    while (*end == ' ' || *end == '\t') ++end;
    if (*end != '\0') throw std::invalid_argument("trailing characters after number: '" + s + "'");
    return v;
}

inline std::uint64_t parse_u64(const std::string& s) {
    errno = 0;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
    if (end == s.c_str() || errno == ERANGE)
        throw std::invalid_argument("not an unsigned integer: '" + s + "'");
    while (*end == ' ' || *end == '\t') ++end;
    if (*end != '\0') throw std::invalid_argument("trailing characters after integer: '" + s + "'");
    return v;
}

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

/// Parses "key = value" lines; '#' starts a comment; blank lines ignored.
/// Duplicate keys are errors.
inline std::map<std::string, std::string> parse_key_values(std::istream& in,
                                                           const std::string& origin) {
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument(origin + ":" + std::to_string(lineno) +
                                        ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": empty key");
        if (!kv.emplace(key, value).second)
            throw std::invalid_argument(origin + ":" + std::to_string(lineno) +
                                        ": duplicate key '" + key + "'");
    }
    return kv;
}

inline std::vector<double> parse_double_list(const std::string& s) {
    std::vector<double> out;
    std::istringstream iss(s);
    std::string tok;
    while (iss >> tok) out.push_back(parse_double(tok));
    return out;
}

inline std::string join_exact(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ' ';
        s += format_exact(v[i]);
    }
    return s;
}

}  // namespace detail

/// Writes a realization as key = value text with exact decimal round trip.
inline void write_realization_file(const Realization& r, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << "# flawed-QC bath realization\n";
    out << "format = realization-v1\n";
    out << "nbath = " << r.params.nbath << "\n";
    out << "seed = " << r.params.seed << "\n";
    out << "b0x = " << format_exact(r.params.b0x) << "\n";
    out << "b0z = " << format_exact(r.params.b0z) << "\n";
    out << "delta = " << format_exact(r.params.delta) << "\n";
    out << "j_bound = " << format_exact(r.params.j) << "\n";
    out << "lambda_bound = " << format_exact(r.params.lambda) << "\n";
    out << "bx = " << detail::join_exact(r.bx) << "\n";
    out << "bz = " << detail::join_exact(r.bz) << "\n";
    out << "jxx = " << detail::join_exact(r.jxx) << "\n";
    out << "lambda_x = " << detail::join_exact(r.lambda_x) << "\n";
    out << "lambda_z = " << detail::join_exact(r.lambda_z) << "\n";
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

inline Realization read_realization_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    auto kv = detail::parse_key_values(in, path.string());
    auto need = [&](const char* key) -> std::string {
        auto it = kv.find(key);
        if (it == kv.end())
            throw std::invalid_argument(path.string() + ": missing key '" + std::string(key) + "'");
        return it->second;
    };
    if (need("format") != "realization-v1")
        throw std::invalid_argument(path.string() + ": unknown realization format");
    Realization r;
    r.params.nbath = static_cast<int>(parse_u64(need("nbath")));
    r.params.seed = parse_u64(need("seed"));
    r.params.b0x = parse_double(need("b0x"));
    r.params.b0z = parse_double(need("b0z"));
    r.params.delta = parse_double(need("delta"));
    r.params.j = parse_double(need("j_bound"));
    r.params.lambda = parse_double(need("lambda_bound"));
    r.bx = detail::parse_double_list(need("bx"));
    r.bz = detail::parse_double_list(need("bz"));
    r.jxx = detail::parse_double_list(need("jxx"));
    r.lambda_x = detail::parse_double_list(need("lambda_x"));
    r.lambda_z = detail::parse_double_list(need("lambda_z"));
    const std::size_t n = static_cast<std::size_t>(r.params.nbath);
    if (r.bx.size() != n || r.bz.size() != n || r.lambda_x.size() != n ||
        r.lambda_z.size() != n || r.jxx.size() != n * (n - 1) / 2)
        throw std::invalid_argument(path.string() + ": array sizes do not match nbath");
    return r;
}

/// Minimal RFC-4180 CSV writer: header row first, fields quoted only when
/// needed. One writer per file.
class CsvWriter {
  public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
        : out_(path) {
        if (!out_) throw std::runtime_error("cannot open " + path.string() + " for writing");
        write_row(header);
    }

    void write_row(const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out_ << ',';
            out_ << escape(fields[i]);
        }
        out_ << "\r\n";
    }

    void flush() { out_.flush(); }

  private:
    static std::string escape(const std::string& f) {
        if (f.find_first_of(",\"\r\n") == std::string::npos) return f;
        std::string q = "\"";
        for (char c : f) {
            q += c;
            if (c == '"') q += '"';
        }
        q += '"';
        return q;
    }

    std::ofstream out_;
};

/// Fixed-width numeric formatting for CSV cells: deterministic and compact.
inline std::string format_metric(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

}  // namespace flawsim
