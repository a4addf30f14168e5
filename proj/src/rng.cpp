#include "mfp/rng.hpp"

#include <cmath>
#include <random>

#include "mfp/errors.hpp"
#include "mfp/parallel.hpp"

namespace mfp {

std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t id) {
    return mix64(mix64(master) ^ mix64(id * 0xd1342543de82ef95ull + 0x632be59bd9b4e019ull));
}

Path brownian_increments(std::uint64_t seed, int N, int M, int d, double dt, std::uint64_t stream_base) {
    if (N < 1 || M < 1 || d < 1) throw ArgumentError("brownian_increments: sizes must be positive");
    if (!(dt > 0)) throw ArgumentError("brownian_increments: dt must be positive");
    Path dW(M, Mat(N, d));
    double sd = std::sqrt(dt);
    parallel_for(N, [&](int i) {
        std::mt19937_64 eng(derive_seed(seed, stream_base + std::uint64_t(i)));
        std::normal_distribution<double> z(0.0, 1.0);
        for (int k = 0; k < M; ++k)
            for (int a = 0; a < d; ++a) dW[k](i, a) = sd * z(eng);
    });
    return dW;
}

Path coarsen(const Path& dW, int factor) {
    if (factor < 1 || dW.size() % std::size_t(factor) != 0)
        throw AlignmentError("coarsen: step count not divisible by factor");
    Path out(dW.size() / factor);
    for (std::size_t k = 0; k < out.size(); ++k) {
        out[k] = dW[k * factor];
        for (int f = 1; f < factor; ++f) out[k] += dW[k * factor + f];
    }
    return out;
}

} // namespace mfp
