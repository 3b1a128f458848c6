// SPDX-License-Identifier: Apache-2.0
// stars_isac: energy-efficient STARS-assisted ISAC optimization
// Licensed under the Apache License, Version 2.0 (the "License").

#include "stars_isac/channel.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace stars_isac {

cvec array_response(int n, double spacing_over_lambda, double angle_rad) {
    if (n <= 0) throw std::invalid_argument("array_response: n must be positive");
    cvec a(n);
    const double k = -2.0 * kPi * spacing_over_lambda * std::sin(angle_rad);
    for (int i = 0; i < n; ++i) a(i) = std::polar(1.0, k * i);
    return a;
}

double pathloss_gain(double distance_m, double h0_db, double exponent) {
    return db_to_linear(h0_db) * std::pow(distance_m, -exponent);
}

cmat rician_matrix(int rows, int cols, double distance_m, double h0_db, double exponent,
                   double rician_factor, const cmat &los, std::mt19937_64 &rng) {
    if (los.rows() != rows || los.cols() != cols)
        throw std::invalid_argument("rician_matrix: LoS shape mismatch");
    if (distance_m <= 0.0) throw std::invalid_argument("rician_matrix: distance must be positive");
    std::normal_distribution<double> nd(0.0, std::sqrt(0.5));
    cmat nlos(rows, cols);
    for (int c = 0; c < cols; ++c)
        for (int r = 0; r < rows; ++r) {
            const double re = nd(rng);
            const double im = nd(rng);
            nlos(r, c) = cplx(re, im);
        }
    const double amp = std::sqrt(pathloss_gain(distance_m, h0_db, exponent));
    const double wl = std::sqrt(rician_factor / (rician_factor + 1.0));
    const double wn = std::sqrt(1.0 / (rician_factor + 1.0));
    return amp * (wl * los + wn * nlos);
}

void assemble_channels(ChannelSet &ch) {
    ch.G_s = ch.r_s * ch.g_s.adjoint();
    ch.G = ch.G_c + ch.G_s;
    ch.H.resize(ch.v.size());
    for (std::size_t k = 0; k < ch.v.size(); ++k) ch.H[k] = ch.v[k].asDiagonal() * ch.G;
}

ChannelSet generate_channels(const ScenarioParams &p, std::mt19937_64 &rng) {
    const int N = p.n_antennas, M = p.n_elements, K = p.n_users;
    const Geometry &g = p.geometry;
    const double deg = kPi / 180.0;
    const double h0 = p.ref_pathloss_db, alpha = p.pathloss_exponent, b0 = p.rician_factor;

    ChannelSet ch;
    // Reciprocity: one angle describes both ends of each link.
    const cvec a_bs_stars = array_response(N, g.antenna_spacing_wl, g.stars_angle_deg * deg);
    const cvec a_st_bs = array_response(M, g.element_spacing_wl, g.stars_angle_deg * deg);
    const cmat los_gc = a_st_bs * a_bs_stars.transpose();
    ch.G_c = rician_matrix(M, N, g.bs_stars_distance_m, h0, alpha, b0, los_gc, rng);

    const cvec a_bs_target = array_response(N, g.antenna_spacing_wl, g.target_angle_deg * deg);
    ch.g_s = rician_matrix(N, 1, g.bs_target_distance_m, h0, alpha, b0, a_bs_target, rng).col(0);

    // Bearing from the STARS towards the target, in the BS-centred frame.
    const double tx = g.bs_target_distance_m * std::cos(g.target_angle_deg * deg);
    const double ty = g.bs_target_distance_m * std::sin(g.target_angle_deg * deg);
    const double sx = g.bs_stars_distance_m * std::cos(g.stars_angle_deg * deg);
    const double sy = g.bs_stars_distance_m * std::sin(g.stars_angle_deg * deg);
    const double bearing = std::atan2(ty - sy, tx - sx);
    const cvec a_st_target = array_response(M, g.element_spacing_wl, bearing);
    ch.r_s = rician_matrix(M, 1, p.target_stars_distance(), h0, alpha, b0, a_st_target, rng).col(0);

    const auto angles = p.user_angles_deg();
    ch.v.resize(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
        const cvec a_u = array_response(M, g.element_spacing_wl, angles[static_cast<std::size_t>(k)] * deg);
        ch.v[static_cast<std::size_t>(k)] =
            rician_matrix(M, 1, g.stars_user_distance_m, h0, alpha, b0, a_u, rng).col(0);
    }
    assemble_channels(ch);
    return ch;
}

ChannelSet generate_channels(const ScenarioParams &p, std::uint64_t index) {
    auto rng = make_rng(p.seed, index);
    ChannelSet ch = generate_channels(p, rng);
    ch.seed = child_seed(p.seed, index);
    return ch;
}

namespace {

constexpr char kMagic[8] = {'S', 'T', 'I', 'S', 'C', 'H', '0', '1'};

void put_complex(std::ofstream &out, const cplx *data, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) {
        const double re = data[i].real(), im = data[i].imag();
        out.write(reinterpret_cast<const char *>(&re), sizeof(double));
        out.write(reinterpret_cast<const char *>(&im), sizeof(double));
    }
}

void get_complex(std::ifstream &in, cplx *data, Eigen::Index n) {
    for (Eigen::Index i = 0; i < n; ++i) {
        double re = 0.0, im = 0.0;
        in.read(reinterpret_cast<char *>(&re), sizeof(double));
        in.read(reinterpret_cast<char *>(&im), sizeof(double));
        data[i] = cplx(re, im);
    }
}

} // namespace

void write_channel_dump(const ChannelSet &ch, const std::string &path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write channel dump '" + path + "'");
    out.write(kMagic, sizeof(kMagic));
    const std::int64_t dims[3] = {ch.n_elements(), ch.n_antennas(), ch.n_users()};
    out.write(reinterpret_cast<const char *>(dims), sizeof(dims));
    out.write(reinterpret_cast<const char *>(&ch.seed), sizeof(ch.seed));
    put_complex(out, ch.G_c.data(), ch.G_c.size()); // column-major
    put_complex(out, ch.g_s.data(), ch.g_s.size());
    put_complex(out, ch.r_s.data(), ch.r_s.size());
    for (const auto &v : ch.v) put_complex(out, v.data(), v.size());
}

ChannelSet read_channel_dump(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open channel dump '" + path + "'");
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("not a channel dump: '" + path + "'");
    std::int64_t dims[3];
    in.read(reinterpret_cast<char *>(dims), sizeof(dims));
    ChannelSet ch;
    in.read(reinterpret_cast<char *>(&ch.seed), sizeof(ch.seed));
    const auto M = static_cast<Eigen::Index>(dims[0]), N = static_cast<Eigen::Index>(dims[1]);
    ch.G_c.resize(M, N);
    ch.g_s.resize(N);
    ch.r_s.resize(M);
    get_complex(in, ch.G_c.data(), ch.G_c.size());
    get_complex(in, ch.g_s.data(), N);
    get_complex(in, ch.r_s.data(), M);
    ch.v.assign(static_cast<std::size_t>(dims[2]), cvec(M));
    for (auto &v : ch.v) get_complex(in, v.data(), M);
    if (!in) throw std::runtime_error("truncated channel dump '" + path + "'");
    assemble_channels(ch);
    return ch;
}

} // namespace stars_isac
