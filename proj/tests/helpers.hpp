#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "pspl/image.hpp"
#include "pspl/rng.hpp"

#ifndef PSPL_FIXTURE_DIR
#define PSPL_FIXTURE_DIR "tests/fixtures"
#endif

namespace testutil {

inline std::string fixture(const std::string& name) {
    return std::string(PSPL_FIXTURE_DIR) + "/" + name;
}

// Fresh directory under the system temp root; leaked on purpose (tiny files,
// sandbox-scoped) so failing tests leave their artifacts inspectable.
inline std::string temp_dir() {
    static pspl::Rng rng(0x74657374u ^ static_cast<std::uint64_t>(
                                            std::chrono::steady_clock::now().time_since_epoch().count()));
    namespace fs = std::filesystem;
    for (;;) {
        fs::path p = fs::temp_directory_path() / ("pspl_test_" + std::to_string(rng.below(1u << 30)));
        if (fs::create_directory(p)) return p.string();
    }
}

inline pspl::ImageGrid random_grid(int h, int w, int c, pspl::Rng& rng, double lo = 0.0,
                                   double hi = 1.0) {
    pspl::ImageGrid g(h, w, c, 1.0);
    for (double& v : g.data) v = rng.uniform(lo, hi);
    return g;
}

}  // namespace testutil
