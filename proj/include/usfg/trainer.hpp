#pragma once

#include <string>
#include <vector>

#include "usfg/checkpoint.hpp"
#include "usfg/dataset.hpp"
#include "usfg/network.hpp"

namespace usfg {

struct TrainConfig {
    std::string preset = "desk";  // "desk" | "paper"
    int batch = 16;
    int steps = 2000;
    uint64_t seed = 0;
    int checkpoint_every = 500;       // 0 disables intermediate checkpoints
    std::string checkpoint_dir;       // empty disables checkpoint files
    double lr = 0.001;
    int workers = 1;

    ArchDescriptor arch() const {
        if (preset == "desk") return ArchDescriptor::desk();
        if (preset == "paper") return ArchDescriptor::paper();
        if (preset == "tiny") return ArchDescriptor::tiny();
        throw ConfigError("unknown preset '" + preset + "'");
    }
};

struct TrainResult {
    NetworkParams<float> params;
    AdamState<float> adam;
    std::vector<std::pair<int, double>> loss_log;  // (step, loss) per step
};

// Caps the number of compute threads; results are identical for any count.
void set_compute_threads(int n);

TrainResult train(const std::vector<TrainingExample>& examples, const TrainConfig& config);

void write_loss_log(const std::vector<std::pair<int, double>>& log, const std::string& path);

}  // namespace usfg
