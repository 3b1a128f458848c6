// SPDX-License-Identifier: Apache-2.0
// stars_isac: energy-efficient STARS-assisted ISAC optimization
// Licensed under the Apache License, Version 2.0 (the "License").

#pragma once

#include "stars_isac/scenario.hpp"
#include "stars_isac/types.hpp"

#include <random>
#include <string>
#include <vector>

namespace stars_isac {

struct ChannelSet {
    cmat G_c; // M x N, BS -> STARS
    cvec g_s; // N, BS -> target
    cvec r_s; // M, target -> STARS
    cmat G_s; // M x N, BS -> target -> STARS
    cmat G;   // G_c + G_s
    std::vector<cvec> v; // per user, M
    std::vector<cmat> H; // per user, diag(v_k) * G
    std::uint64_t seed = 0;

    int n_antennas() const { return static_cast<int>(G.cols()); }
    int n_elements() const { return static_cast<int>(G.rows()); }
    int n_users() const { return static_cast<int>(H.size()); }
};

// entry i = exp(-j 2 pi s i sin(angle)); throws for n == 0.
cvec array_response(int n, double spacing_over_lambda, double angle_rad);

double pathloss_gain(double distance_m, double h0_db, double exponent);

cmat rician_matrix(int rows, int cols, double distance_m, double h0_db, double exponent,
                   double rician_factor, const cmat &los, std::mt19937_64 &rng);

// Draws everything from the given generator.
ChannelSet generate_channels(const ScenarioParams &p, std::mt19937_64 &rng);
// Realization `index` of the scenario's master seed.
ChannelSet generate_channels(const ScenarioParams &p, std::uint64_t index = 0);

// Binary dump: magic, dims (M, N, K), seed, then interleaved re/im doubles of
// G_c, g_s, r_s and each v_k. The derived matrices are rebuilt on read.
void write_channel_dump(const ChannelSet &ch, const std::string &path);
ChannelSet read_channel_dump(const std::string &path);

// Recomputes G_s, G and H_k from the stored primitives.
void assemble_channels(ChannelSet &ch);

} // namespace stars_isac
