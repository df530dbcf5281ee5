#include "bst/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "bst/errors.hpp"

namespace bst {

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace {

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
    std::ofstream out(path, mode);
    if (!out) throw Error("cannot write '" + path + "'");
    return out;
}

std::vector<std::vector<double>> read_numeric_csv(const std::string& path, std::vector<std::string>& header) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    std::vector<std::vector<double>> rows;
    std::string line;
    header.clear();
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::stringstream ss(line);
        std::string cell;
        if (header.empty()) {
            while (std::getline(ss, cell, ',')) header.push_back(cell);
            continue;
        }
        std::vector<double> r;
        while (std::getline(ss, cell, ',')) {
            // strtod, not stod: subnormal values are valid data
            char* end = nullptr;
            double v = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str() || *end != '\0') throw ConfigError("'" + path + "': non-numeric cell '" + cell + "'");
            r.push_back(v);
        }
        if (r.size() != header.size()) throw ConfigError("'" + path + "': row width differs from header");
        rows.push_back(std::move(r));
    }
    if (header.empty()) throw ConfigError("'" + path + "': missing header");
    return rows;
}

// Sorted unique values.
std::vector<double> axis_of(const std::vector<std::vector<double>>& rows, std::size_t c) {
    std::set<double> s;
    for (const auto& r : rows) s.insert(r[c]);
    return {s.begin(), s.end()};
}

std::size_t index_in(const std::vector<double>& axis, double v) {
    auto it = std::lower_bound(axis.begin(), axis.end(), v);
    return std::size_t(it - axis.begin());
}

}  // namespace

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows, const std::string& comment) {
    auto out = open_out(path);
    if (!comment.empty()) out << comment;
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << '\n';
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << fmt17(r[i]);
        out << '\n';
    }
    if (!out) throw Error("write failed for '" + path + "'");
}

void write_image_csv(const std::string& path, const PhantomImage& f) {
    std::vector<std::vector<double>> rows;
    rows.reserve(f.values.size());
    for (std::size_t i = 0; i < f.nq(); ++i)
        for (std::size_t j = 0; j < f.nx(); ++j) rows.push_back({f.q_axis[i], f.x1_axis[j], f.at(i, j)});
    write_csv(path, {"q", "x1", "value"}, rows, "# x2 = " + fmt17(f.x2) + "\n");
}

PhantomImage read_image_csv(const std::string& path, double x2) {
    std::vector<std::string> h;
    auto rows = read_numeric_csv(path, h);
    if (h.size() != 3) throw ConfigError("'" + path + "': expected columns q,x1,value");
    auto q = axis_of(rows, 0), x = axis_of(rows, 1);
    if (rows.size() != q.size() * x.size()) throw ConfigError("'" + path + "': image grid is incomplete");
    std::ifstream in(path);
    std::string line;
    if (std::getline(in, line) && line.rfind("# x2 = ", 0) == 0) std::sscanf(line.c_str(), "# x2 = %lf", &x2);
    PhantomImage f(q, x, x2);
    for (const auto& r : rows) f.at(index_in(q, r[0]), index_in(x, r[1])) = r[2];
    return f;
}

void write_sinogram_csv(const std::string& path, const SinogramTensor& t) {
    bool full = !t.d1.empty();
    std::vector<std::vector<double>> rows;
    for (std::size_t e = 0; e < t.ne(); ++e)
        for (std::size_t s = 0; s < t.ns(); ++s)
            for (std::size_t d = 0; d < t.nd(); ++d) {
                if (full)
                    rows.push_back({t.energies[e], t.s1[s], t.d1[d], t.at(e, s, d)});
                else
                    rows.push_back({t.energies[e], t.s1[s], t.at(e, s)});
            }
    char c[128];
    std::snprintf(c, sizeof c, "# x2 = %s, eps = %s, geometry = %s\n", fmt17(t.x2).c_str(), fmt17(t.eps).c_str(),
                  t.geometry_id.c_str());
    if (full)
        write_csv(path, {"energy_inv_A", "s1", "d1", "value"}, rows, c);
    else
        write_csv(path, {"energy_inv_A", "s1", "value"}, rows, c);
}

SinogramTensor read_sinogram_csv(const std::string& path) {
    std::vector<std::string> h;
    auto rows = read_numeric_csv(path, h);
    if (h.size() != 3 && h.size() != 4) throw ConfigError("'" + path + "': expected energy,s1[,d1],value columns");
    SinogramTensor t;
    t.energies = axis_of(rows, 0);
    t.s1 = axis_of(rows, 1);
    if (h.size() == 4) t.d1 = axis_of(rows, 2);
    if (rows.size() != t.ne() * t.ns() * t.nd()) throw ConfigError("'" + path + "': sinogram grid is incomplete");
    t.values.assign(rows.size(), 0.0);
    for (const auto& r : rows) {
        std::size_t d = h.size() == 4 ? index_in(t.d1, r[2]) : 0;
        t.at(index_in(t.energies, r[0]), index_in(t.s1, r[1]), d) = r.back();
    }
    // header comment carries x2 / eps
    std::ifstream in(path);
    std::string line;
    if (std::getline(in, line) && line.rfind("# x2 = ", 0) == 0) {
        double x2 = 0, eps = 0;
        char id[64] = {0};
        if (std::sscanf(line.c_str(), "# x2 = %lf, eps = %lf, geometry = %63s", &x2, &eps, id) >= 2) {
            t.x2 = x2;
            t.eps = eps;
            t.geometry_id = id;
        }
    }
    return t;
}

void write_image_binary(const std::string& path, const PhantomImage& f) {
    static_assert(std::endian::native == std::endian::little, "flat binary writer assumes a little-endian host");
    auto out = open_out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(f.values.data()), std::streamsize(f.values.size() * sizeof(double)));
    if (!out) throw Error("write failed for '" + path + "'");
    nlohmann::json j;
    j["dtype"] = "float64-le";
    j["order"] = "q-major";
    j["shape"] = {f.nq(), f.nx()};
    j["q_axis"] = f.q_axis;
    j["x1_axis"] = f.x1_axis;
    j["x2"] = f.x2;
    write_text(path + ".json", j.dump(2) + "\n");
}

PhantomImage read_image_binary(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text(path + ".json"));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("'" + path + ".json': " + e.what());
    }
    PhantomImage f(j.at("q_axis").get<std::vector<double>>(), j.at("x1_axis").get<std::vector<double>>(),
                   j.value("x2", 0.0));
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    in.read(reinterpret_cast<char*>(f.values.data()), std::streamsize(f.values.size() * sizeof(double)));
    if (in.gcount() != std::streamsize(f.values.size() * sizeof(double)))
        throw ConfigError("'" + path + "': payload shorter than the sidecar shape");
    return f;
}

void write_pgm(const std::string& path, const PhantomImage& f) {
    auto [lo_it, hi_it] = std::minmax_element(f.values.begin(), f.values.end());
    double lo = *lo_it, hi = *hi_it, span = hi > lo ? hi - lo : 1.0;
    auto out = open_out(path, std::ios::binary);
    out << "P5\n" << f.nx() << ' ' << f.nq() << "\n255\n";
    for (std::size_t r = 0; r < f.nq(); ++r) {
        std::size_t i = f.nq() - 1 - r;
        for (std::size_t j = 0; j < f.nx(); ++j) {
            double v = (f.at(i, j) - lo) / span;
            out.put(char(std::uint8_t(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
        }
    }
    if (!out) throw Error("write failed for '" + path + "'");
}

void write_text(const std::string& path, const std::string& text) {
    auto out = open_out(path);
    out << text;
    if (!out) throw Error("write failed for '" + path + "'");
}

std::string read_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace bst
