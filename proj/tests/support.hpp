#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "dashlab/dashboards.hpp"

namespace dashlab::testing {

inline std::filesystem::path testDir() { return DASHLAB_TEST_DIR; }

inline StimulusSet fixtureStimuli()
{
    return loadStimulusSet(testDir() / "fixtures" / "canonical_stimuli.json");
}

inline std::string readFile(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratchDir(const std::string& tag)
{
    static std::mt19937_64 gen{std::random_device{}()};
    auto dir = std::filesystem::temp_directory_path() /
               ("dashlab_" + tag + "_" + std::to_string(gen() % 1000000000));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

// Independent reference: Pr(win) straight from erfc.
inline double refWin(double mu, double sigma, double b)
{
    return 0.5 * std::erfc((b - mu) / (sigma * std::sqrt(2.0)));
}

}  // namespace dashlab::testing
