#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "fsn/model.hpp"
#include "fsn/types.hpp"

namespace fsn {

struct TrainOptions {
    double learning_rate = 1e-4;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::size_t batch_size = 12;
    std::size_t iterations = 2000;
    std::size_t log_every = 50;
    std::uint64_t seed = 42;
};

struct LossLogRow {
    std::size_t step = 0;
    double mean_loss = 0.0;  // mean over the steps since the previous row
};

// Mini-batch SGD over clips reshuffled every epoch.
std::vector<LossLogRow> train_strong(Head& head, std::span<const ClipSample> clips, const TrainOptions& options);

struct WeakVideo {
    const VideoFeatures* video = nullptr;
    std::vector<int> label;  // multi-hot, K entries
};

// Mini-batch SGD over videos; every epoch draws fresh weak samples of M positions.
std::vector<LossLogRow> train_weak(Head& head, std::span<const WeakVideo> videos, std::size_t m,
                                   const TrainOptions& options);

}  // namespace fsn
