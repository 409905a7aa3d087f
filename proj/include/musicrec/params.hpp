// Trainable parameters, Xavier initialization and checkpoint serialization.
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "musicrec/types.hpp"

namespace musicrec {

struct ModelParams {
    Mat U;       // M x d user ID embeddings
    Mat I;       // N x d item ID embeddings
    Mat P;       // L_max x d learned positional embeddings
    Mat W_a;     // h x d additive-attention projection
    Vec v_a;     // h attention scorer
    Mat W_v;     // d_v x d visual projection
    Mat W_t;     // d_t x d text projection
    Vec w_beta;  // d gate weights
};

// Gradient accumulator mirroring ModelParams shapes.
struct Gradients {
    Mat U, I, P, W_a, W_v, W_t;
    Vec v_a, w_beta;

    static Gradients zeros_like(const ModelParams& p) {
        Gradients g;
        g.U = Mat::Zero(p.U.rows(), p.U.cols());
        g.I = Mat::Zero(p.I.rows(), p.I.cols());
        g.P = Mat::Zero(p.P.rows(), p.P.cols());
        g.W_a = Mat::Zero(p.W_a.rows(), p.W_a.cols());
        g.W_v = Mat::Zero(p.W_v.rows(), p.W_v.cols());
        g.W_t = Mat::Zero(p.W_t.rows(), p.W_t.cols());
        g.v_a = Vec::Zero(p.v_a.size());
        g.w_beta = Vec::Zero(p.w_beta.size());
        return g;
    }
};

inline Mat xavier_uniform(int rows, int cols, Rng& rng) {
    // variance 2 / (fan_in + fan_out)
    double bound = std::sqrt(6.0 / (rows + cols));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Mat m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = dist(rng);
    return m;
}

inline Vec xavier_uniform_vec(int n, Rng& rng) {
    double bound = std::sqrt(6.0 / (n + 1));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Vec v(n);
    for (int i = 0; i < n; ++i) v(i) = dist(rng);
    return v;
}

inline ModelParams init_params(int M, int N, int d, int h, int L_max, int d_v, int d_t,
                               Rng& rng) {
    ModelParams p;
    p.U = xavier_uniform(M, d, rng);
    p.I = xavier_uniform(N, d, rng);
    p.P = xavier_uniform(L_max, d, rng);
    p.W_a = xavier_uniform(h, d, rng);
    p.v_a = xavier_uniform_vec(h, rng);
    p.W_v = xavier_uniform(d_v, d, rng);
    p.W_t = xavier_uniform(d_t, d, rng);
    p.w_beta = xavier_uniform_vec(d, rng);
    return p;
}

// ----- checkpoint format -----
// magic "MPCK", u32 version, u32 section count; per section:
// u16 name length, name bytes, u32 rows, u32 cols, rows*cols float32 row-major.

namespace detail {
inline void write_section(std::ofstream& out, const std::string& name, const Mat& m) {
    std::uint16_t len = static_cast<std::uint16_t>(name.size());
    out.write(reinterpret_cast<const char*>(&len), 2);
    out.write(name.data(), len);
    std::uint32_t rows = static_cast<std::uint32_t>(m.rows());
    std::uint32_t cols = static_cast<std::uint32_t>(m.cols());
    out.write(reinterpret_cast<const char*>(&rows), 4);
    out.write(reinterpret_cast<const char*>(&cols), 4);
    for (std::uint32_t r = 0; r < rows; ++r)
        for (std::uint32_t c = 0; c < cols; ++c) {
            float v = static_cast<float>(m(r, c));
            out.write(reinterpret_cast<const char*>(&v), 4);
        }
}

inline Mat read_section(std::ifstream& in, std::string& name) {
    std::uint16_t len = 0;
    in.read(reinterpret_cast<char*>(&len), 2);
    name.resize(len);
    in.read(name.data(), len);
    std::uint32_t rows = 0, cols = 0;
    in.read(reinterpret_cast<char*>(&rows), 4);
    in.read(reinterpret_cast<char*>(&cols), 4);
    Mat m(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r)
        for (std::uint32_t c = 0; c < cols; ++c) {
            float v;
            in.read(reinterpret_cast<char*>(&v), 4);
            m(r, c) = v;
        }
    return m;
}
}  // namespace detail

inline void save_checkpoint(const std::string& path, const ModelParams& p) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    out.write("MPCK", 4);
    std::uint32_t version = 1, sections = 8;
    out.write(reinterpret_cast<const char*>(&version), 4);
    out.write(reinterpret_cast<const char*>(&sections), 4);
    detail::write_section(out, "U", p.U);
    detail::write_section(out, "I", p.I);
    detail::write_section(out, "P", p.P);
    detail::write_section(out, "W_a", p.W_a);
    detail::write_section(out, "v_a", p.v_a);
    detail::write_section(out, "W_v", p.W_v);
    detail::write_section(out, "W_t", p.W_t);
    detail::write_section(out, "w_beta", p.w_beta);
}

inline ModelParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    char magic[4];
    std::uint32_t version = 0, sections = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&version), 4);
    in.read(reinterpret_cast<char*>(&sections), 4);
    if (!in || std::memcmp(magic, "MPCK", 4) != 0)
        throw DataError("bad checkpoint header: " + path);
    if (version != 1) throw DataError("unsupported checkpoint version in " + path);

    ModelParams p;
    for (std::uint32_t s = 0; s < sections; ++s) {
        std::string name;
        Mat m = detail::read_section(in, name);
        if (name == "U") p.U = m;
        else if (name == "I") p.I = m;
        else if (name == "P") p.P = m;
        else if (name == "W_a") p.W_a = m;
        else if (name == "v_a") p.v_a = m.col(0);
        else if (name == "W_v") p.W_v = m;
        else if (name == "W_t") p.W_t = m;
        else if (name == "w_beta") p.w_beta = m.col(0);
        else throw DataError("unknown checkpoint section '" + name + "' in " + path);
    }
    if (!in) throw DataError("truncated checkpoint: " + path);
    return p;
}

}  // namespace musicrec
