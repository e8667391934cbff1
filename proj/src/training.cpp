#include "fsn/training.hpp"

#include <numeric>
#include <stdexcept>

#include "fsn/data.hpp"
#include "fsn/random.hpp"

namespace fsn {

namespace {

// Feeds batches of indices in [0, n), reshuffling at every epoch boundary.
class EpochSampler {
public:
    EpochSampler(std::size_t n, std::uint64_t seed) : order_(n), seed_(seed) {
        std::iota(order_.begin(), order_.end(), 0);
        reshuffle();
    }

    std::vector<std::size_t> next_batch(std::size_t size) {
        std::vector<std::size_t> batch;
        batch.reserve(size);
        while (batch.size() < size) {
            if (cursor_ == order_.size()) {
                ++epoch_;
                reshuffle();
            }
            batch.push_back(order_[cursor_++]);
        }
        return batch;
    }

    std::size_t epoch() const { return epoch_; }

private:
    void reshuffle() {
        Rng rng(Rng::derive(seed_, epoch_));
        rng.shuffle(order_.begin(), order_.end());
        cursor_ = 0;
    }

    std::vector<std::size_t> order_;
    std::uint64_t seed_;
    std::size_t epoch_ = 0;
    std::size_t cursor_ = 0;
};

template <class StepFn>
std::vector<LossLogRow> run_loop(std::size_t count, const TrainOptions& options, StepFn&& step) {
    if (count == 0) throw std::invalid_argument("training: no samples");
    if (options.batch_size == 0) throw std::invalid_argument("training: batch size must be >= 1");
    EpochSampler sampler(count, options.seed);
    std::vector<LossLogRow> log;
    double window = 0.0;
    std::size_t window_steps = 0;
    for (std::size_t it = 1; it <= options.iterations; ++it) {
        const auto batch = sampler.next_batch(options.batch_size);
        window += step(batch, sampler.epoch());
        ++window_steps;
        if (options.log_every > 0 && it % options.log_every == 0) {
            log.push_back({it, window / static_cast<double>(window_steps)});
            window = 0.0;
            window_steps = 0;
        }
    }
    return log;
}

}  // namespace

std::vector<LossLogRow> train_strong(Head& head, std::span<const ClipSample> clips, const TrainOptions& options) {
    nn::OptimizerState state(options.learning_rate, options.momentum, options.weight_decay);
    std::vector<ClipSample> batch;
    return run_loop(clips.size(), options, [&](const std::vector<std::size_t>& idx, std::size_t) {
        batch.clear();
        for (std::size_t i : idx) batch.push_back(clips[i]);
        return fsn_train_step(batch, head, state);
    });
}

std::vector<LossLogRow> train_weak(Head& head, std::span<const WeakVideo> videos, std::size_t m,
                                   const TrainOptions& options) {
    nn::OptimizerState state(options.learning_rate, options.momentum, options.weight_decay);
    std::vector<WeakSample> batch;
    const std::uint64_t sample_seed = Rng::derive(options.seed, 0x5eed);
    return run_loop(videos.size(), options, [&](const std::vector<std::size_t>& idx, std::size_t epoch) {
        batch.clear();
        for (std::size_t v : idx) {
            const std::uint64_t seed = Rng::derive(sample_seed, epoch * videos.size() + v);
            batch.push_back(make_weak_sample(*videos[v].video, videos[v].label, m, seed));
        }
        return wfsn_train_step(batch, head, state);
    });
}

}  // namespace fsn
