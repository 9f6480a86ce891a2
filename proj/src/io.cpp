#include "mffbsde/io.hpp"

#include "mffbsde/errors.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace mffbsde::io {

namespace {

void append_double(std::string& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out += buf;
}

void emit_canonical(const nlohmann::json& j, std::string& out) {
    using value_t = nlohmann::json::value_t;
    switch (j.type()) {
        case value_t::object: {
            out += '{';
            bool first = true;
            for (auto it = j.begin(); it != j.end(); ++it) {
                if (!first) out += ',';
                first = false;
                out += nlohmann::json(it.key()).dump();
                out += ':';
                emit_canonical(it.value(), out);
            }
            out += '}';
            break;
        }
        case value_t::array: {
            out += '[';
            bool first = true;
            for (const auto& item : j) {
                if (!first) out += ',';
                first = false;
                emit_canonical(item, out);
            }
            out += ']';
            break;
        }
        case value_t::string:
            out += j.dump();
            break;
        case value_t::boolean:
            out += j.get<bool>() ? "true" : "false";
            break;
        case value_t::number_integer:
            out += std::to_string(j.get<std::int64_t>());
            break;
        case value_t::number_unsigned:
            out += std::to_string(j.get<std::uint64_t>());
            break;
        case value_t::number_float: {
            const double v = j.get<double>();
            if (std::isfinite(v))
                append_double(out, v);
            else
                out += "null";
            break;
        }
        default:
            out += "null";
            break;
    }
}

}  // namespace

std::string canonical_json(const nlohmann::json& j) {
    std::string out;
    emit_canonical(j, out);
    return out;
}

namespace {

constexpr std::array<std::uint32_t, 64> kSha256Round = {
    0x428a2f98u, 0x71374491u, 0xb5c0fbcfu, 0xe9b5dba5u, 0x3956c25bu, 0x59f111f1u, 0x923f82a4u,
    0xab1c5ed5u, 0xd807aa98u, 0x12835b01u, 0x243185beu, 0x550c7dc3u, 0x72be5d74u, 0x80deb1feu,
    0x9bdc06a7u, 0xc19bf174u, 0xe49b69c1u, 0xefbe4786u, 0x0fc19dc6u, 0x240ca1ccu, 0x2de92c6fu,
    0x4a7484aau, 0x5cb0a9dcu, 0x76f988dau, 0x983e5152u, 0xa831c66du, 0xb00327c8u, 0xbf597fc7u,
    0xc6e00bf3u, 0xd5a79147u, 0x06ca6351u, 0x14292967u, 0x27b70a85u, 0x2e1b2138u, 0x4d2c6dfcu,
    0x53380d13u, 0x650a7354u, 0x766a0abbu, 0x81c2c92eu, 0x92722c85u, 0xa2bfe8a1u, 0xa81a664bu,
    0xc24b8b70u, 0xc76c51a3u, 0xd192e819u, 0xd6990624u, 0xf40e3585u, 0x106aa070u, 0x19a4c116u,
    0x1e376c08u, 0x2748774cu, 0x34b0bcb5u, 0x391c0cb3u, 0x4ed8aa4au, 0x5b9cca4fu, 0x682e6ff3u,
    0x748f82eeu, 0x78a5636fu, 0x84c87814u, 0x8cc70208u, 0x90befffau, 0xa4506cebu, 0xbef9a3f7u,
    0xc67178f2u};

inline std::uint32_t rotr(std::uint32_t x, int n) { return (x >> n) | (x << (32 - n)); }

void sha256_chunk(std::array<std::uint32_t, 8>& h, const unsigned char* p) {
    std::uint32_t w[64];
    for (int i = 0; i < 16; ++i)
        w[i] = (static_cast<std::uint32_t>(p[4 * i]) << 24) |
               (static_cast<std::uint32_t>(p[4 * i + 1]) << 16) |
               (static_cast<std::uint32_t>(p[4 * i + 2]) << 8) |
               static_cast<std::uint32_t>(p[4 * i + 3]);
    for (int i = 16; i < 64; ++i) {
        const std::uint32_t s0 = rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^ (w[i - 15] >> 3);
        const std::uint32_t s1 = rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^ (w[i - 2] >> 10);
        w[i] = w[i - 16] + s0 + w[i - 7] + s1;
    }
    std::uint32_t a = h[0], b = h[1], c = h[2], d = h[3];
    std::uint32_t e = h[4], f = h[5], g = h[6], k = h[7];
    for (int i = 0; i < 64; ++i) {
        const std::uint32_t s1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
        const std::uint32_t ch = (e & f) ^ (~e & g);
        const std::uint32_t t1 = k + s1 + ch + kSha256Round[static_cast<std::size_t>(i)] + w[i];
        const std::uint32_t s0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
        const std::uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
        const std::uint32_t t2 = s0 + maj;
        k = g;
        g = f;
        f = e;
        e = d + t1;
        d = c;
        c = b;
        b = a;
        a = t1 + t2;
    }
    h[0] += a;
    h[1] += b;
    h[2] += c;
    h[3] += d;
    h[4] += e;
    h[5] += f;
    h[6] += g;
    h[7] += k;
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
    std::array<std::uint32_t, 8> h = {0x6a09e667u, 0xbb67ae85u, 0x3c6ef372u, 0xa54ff53au,
                                      0x510e527fu, 0x9b05688cu, 0x1f83d9abu, 0x5be0cd19u};
    const std::size_t full = bytes.size() / 64;
    const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
    for (std::size_t i = 0; i < full; ++i) sha256_chunk(h, data + 64 * i);

    std::vector<unsigned char> tail(data + 64 * full, data + bytes.size());
    tail.push_back(0x80u);
    while (tail.size() % 64 != 56) tail.push_back(0u);
    const std::uint64_t bits = static_cast<std::uint64_t>(bytes.size()) * 8u;
    for (int i = 7; i >= 0; --i)
        tail.push_back(static_cast<unsigned char>((bits >> (8 * i)) & 0xFFu));
    for (std::size_t i = 0; i < tail.size(); i += 64) sha256_chunk(h, tail.data() + i);

    std::string hex;
    hex.reserve(64);
    for (std::uint32_t word : h) {
        char buf[9];
        std::snprintf(buf, sizeof buf, "%08x", word);
        hex += buf;
    }
    return hex;
}

std::string measure_flow_csv(const FlowSummary& summary) {
    std::string out = "time,population,coordinate,mean,std,q05,q25,q50,q75,q95\n";
    for (const SummaryRow& row : summary.rows) {
        for (Eigen::Index c = 0; c < row.mean.size(); ++c) {
            append_double(out, row.time);
            out += ',';
            out += std::to_string(row.population);
            out += ',';
            out += std::to_string(c);
            for (const Eigen::VectorXd* stat :
                 {&row.mean, &row.std_dev, &row.q05, &row.q25, &row.q50, &row.q75, &row.q95}) {
                out += ',';
                append_double(out, (*stat)[c]);
            }
            out += '\n';
        }
    }
    return out;
}

std::string control_table_csv(const ControlTable& table) {
    std::string out = "time,x";
    const Eigen::Index control_dim = table.values.empty() ? 0 : table.values.front().cols();
    for (Eigen::Index j = 0; j < control_dim; ++j) {
        out += ",control_" + std::to_string(j);
    }
    out += '\n';
    for (std::size_t k = 0; k < table.values.size(); ++k) {
        const Eigen::MatrixXd& block = table.values[k];
        for (Eigen::Index r = 0; r < block.rows(); ++r) {
            append_double(out, table.times[k]);
            out += ',';
            if (table.nodes.size() > 0) append_double(out, table.nodes[r]);
            for (Eigen::Index j = 0; j < block.cols(); ++j) {
                out += ',';
                append_double(out, block(r, j));
            }
            out += '\n';
        }
    }
    return out;
}

std::string weight_diagnostic_csv(const TimeGrid& grid, const Eigen::MatrixXd& weights) {
    if (static_cast<std::size_t>(weights.cols()) != grid.points())
        throw GridMismatch("weight matrix does not cover every grid point");
    std::string out = "time,weight_mean,weight_se,ess\n";
    const double n = static_cast<double>(weights.rows());
    for (std::size_t k = 0; k < grid.points(); ++k) {
        const auto col = weights.col(static_cast<Eigen::Index>(k));
        const double mean = col.mean();
        const double var = (col.array() - mean).square().sum() / std::max(1.0, n - 1.0);
        const double sum = col.sum();
        const double sumsq = col.array().square().sum();
        const double ess = sumsq > 0.0 ? sum * sum / sumsq : 0.0;
        append_double(out, grid[k]);
        out += ',';
        append_double(out, mean);
        out += ',';
        append_double(out, std::sqrt(var / n));
        out += ',';
        append_double(out, ess);
        out += '\n';
    }
    return out;
}

std::string backward_summary_csv(const BackwardSolution& backward) {
    std::string out = "time,y_mean,y_std,z_mean\n";
    for (std::size_t k = 0; k < backward.grid.points(); ++k) {
        const Eigen::MatrixXd& y = backward.y_values[k];
        const double mean = y.mean();
        const double sd = std::sqrt((y.array() - mean).square().sum() /
                                    std::max<double>(1.0, static_cast<double>(y.size()) - 1.0));
        append_double(out, backward.grid[k]);
        out += ',';
        append_double(out, mean);
        out += ',';
        append_double(out, sd);
        out += ',';
        if (k < backward.grid.steps()) append_double(out, backward.z_values[k].mean());
        out += '\n';
    }
    return out;
}

std::string paths_csv(const PathEnsemble& paths) {
    std::string out = "particle,time,coordinate,value\n";
    for (std::size_t p = 0; p < paths.particles(); ++p) {
        for (std::size_t k = 0; k < paths.grid.points(); ++k) {
            for (int c = 0; c < paths.state_dim; ++c) {
                out += std::to_string(p);
                out += ',';
                append_double(out, paths.grid[k]);
                out += ',';
                out += std::to_string(c);
                out += ',';
                append_double(out,
                              paths.states[k](static_cast<Eigen::Index>(p), c));
                out += '\n';
            }
        }
    }
    return out;
}

void write_file(const std::string& path, std::string_view content) {
    const std::filesystem::path target(path);
    if (target.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(target.parent_path(), ec);
        if (ec) throw std::runtime_error("cannot create directory for " + path);
    }
    std::ofstream stream(target, std::ios::binary | std::ios::trunc);
    if (!stream) throw std::runtime_error("cannot open " + path + " for writing");
    stream.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!stream) throw std::runtime_error("short write to " + path);
}

}  // namespace mffbsde::io
