#pragma once

#include <string>
#include <vector>

#include "vqclust/config.hpp"

namespace vqclust {

inline constexpr const char* kVersion = "0.1.0";

// Stage counters used to expand the root seed (see derive_seed).
enum StageSeed : std::uint64_t {
    kSeedSynth = 1,
    kSeedTrain = 2,
    kSeedCluster = 3,
    kSeedTsne = 4,
};

// Runs one subcommand against a run directory, writing outputs and a
// manifest.json. Valid names: preprocess, synth, train, encode, cluster,
// evaluate, project, deg, enrich, survival, pipeline.
void run_subcommand(const std::string& name, const PipelineConfig& config,
                    const std::string& out_dir);

const std::vector<std::string>& subcommand_names();

}  // namespace vqclust
