#include <fstream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "usfg/trainer.hpp"

namespace usfg {

void set_compute_threads(int n) {
#ifdef _OPENMP
    omp_set_num_threads(n < 1 ? 1 : n);
#else
    (void)n;
#endif
}

TrainResult train(const std::vector<TrainingExample>& examples, const TrainConfig& config) {
    if (examples.empty()) throw ConfigError("train: empty example set");
    if (config.batch < 1 || config.steps < 1)
        throw ConfigError("train: batch and steps must be >= 1");

    ArchDescriptor arch = config.arch();
    for (const auto& ex : examples) {
        if (ex.input.width != arch.input_size || ex.input.height != arch.input_size ||
            ex.target.width != arch.output_size())
            throw ConfigError("train: example dimensions do not match the preset");
    }
    set_compute_threads(config.workers);

    TrainResult result;
    result.params = init_params<float>(arch, config.seed);
    result.adam = AdamState<float>::make(result.params);
    result.adam.lr = config.lr;

    NetworkParams<float> grads = zero_params<float>(arch);
    ForwardCache<float> cache;

    std::vector<size_t> order;
    size_t cursor = 0;
    uint64_t epoch = 0;
    auto refill = [&]() {
        order.resize(examples.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng rng(hash_u64(epoch, hash_u64(config.seed, 0x736875666cULL)));
        rng.shuffle(order);
        cursor = 0;
        ++epoch;
    };
    refill();

    const int out_count = arch.output_count();
    for (int step = 1; step <= config.steps; ++step) {
        std::vector<const ChannelStack*> inputs;
        std::vector<const SoftMask*> targets;
        for (int b = 0; b < config.batch; ++b) {
            if (cursor >= order.size()) refill();
            const TrainingExample& ex = examples[order[cursor++]];
            inputs.push_back(&ex.input);
            targets.push_back(&ex.target);
        }
        Tensor<float> x = pack_inputs<float>(inputs);
        Tensor<float> y = pack_targets<float>(targets, out_count);

        forward(result.params, x, cache);
        double step_loss = loss_value(cache.output, y);
        result.loss_log.emplace_back(step, step_loss);

        auto& g = grads;
        for_each_tensor(g, [](const std::string&, Tensor<float>& t) { t.zero(); });
        backward(result.params, cache, y, grads);
        adam_step(result.params, grads, result.adam);

        if (!config.checkpoint_dir.empty() && config.checkpoint_every > 0 &&
            step % config.checkpoint_every == 0) {
            save_checkpoint(result.params, &result.adam,
                            config.checkpoint_dir + "/step_" + std::to_string(step) + ".usfg");
        }
    }
    return result;
}

void write_loss_log(const std::vector<std::pair<int, double>>& log, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f << "step,loss\n";
    f.precision(17);
    for (const auto& [step, loss] : log) f << step << "," << loss << "\n";
    if (!f) throw IoError("short write to " + path);
}

}  // namespace usfg
