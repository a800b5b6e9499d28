// Shrinks the attention logits toward uniform attention and prints how the
// spectrum of Attn(X) and Z collapses with and without the residual.

#include <iostream>

#include "tfconv/harness.hpp"

using namespace tfconv;

int main() {
    ModelConfig cfg;
    Rng rng(3);
    const Params<double> w = init_params<double>(InitScheme::lecun(), cfg, rng);
    const Matrix<double> x = gaussian_matrix<double>(rng, cfg.m, cfg.d);
    const auto probes = rank_collapse_probe(x, w, cfg, {4.0, 1.0, 0.1, 0.01, 0.0});
    write_probes_csv(std::cout, probes);
}
