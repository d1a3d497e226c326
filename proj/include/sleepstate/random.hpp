#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace sleepstate {

// All stochastic code threads this engine explicitly. Distribution objects are
// always constructed per call so that the engine state alone determines the
// stream (which is what checkpoints serialize).
using Rng = std::mt19937_64;

std::string serialize_rng(const Rng& rng);
Rng deserialize_rng(const std::string& text);

// Uniform on the open interval (0, 1).
double uniform_open01(Rng& rng);

double sample_normal(Rng& rng, double mean, double sd);

// log of a Gamma(shape, 1) draw; stays finite for very small shapes where the
// draw itself would underflow. shape == 0 returns -inf.
double sample_log_gamma(Rng& rng, double shape);

// Gamma(shape, rate) draw.
double sample_gamma(Rng& rng, double shape, double rate);

double sample_beta(Rng& rng, double a, double b);

// (log x, log(1 - x)) for x ~ Beta(a, b), both accurate near 0 and 1. A zero
// shape gives the corresponding degenerate endpoint.
std::pair<double, double> sample_log_beta(Rng& rng, double a, double b);

// Dirichlet draw; zero entries in alpha produce exact zeros.
std::vector<double> sample_dirichlet(Rng& rng, std::span<const double> alpha);

bool sample_bernoulli(Rng& rng, double p);

// Index drawn proportionally to nonnegative weights (need not be normalized).
std::size_t sample_categorical(Rng& rng, std::span<const double> weights);

}  // namespace sleepstate
