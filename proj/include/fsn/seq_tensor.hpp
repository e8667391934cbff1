#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fsn {

// Time-major 2D array: row t holds the channel vector of frame/snippet t.
class SeqTensor {
public:
    SeqTensor() = default;

    SeqTensor(std::size_t time_len, std::size_t channels, double fill = 0.0)
        : time_len_(time_len), channels_(channels), data_(time_len * channels, fill) {
        if (time_len == 0 || channels == 0) {
            throw std::invalid_argument("SeqTensor: time_len and channels must be >= 1");
        }
    }

    SeqTensor(std::size_t time_len, std::size_t channels, std::vector<double> data)
        : time_len_(time_len), channels_(channels), data_(std::move(data)) {
        if (time_len == 0 || channels == 0) {
            throw std::invalid_argument("SeqTensor: time_len and channels must be >= 1");
        }
        if (data_.size() != time_len * channels) {
            throw std::invalid_argument("SeqTensor: data size " + std::to_string(data_.size()) +
                                        " != " + std::to_string(time_len) + "x" +
                                        std::to_string(channels));
        }
    }

    // Builds from nested rows; every row must have the same width.
    static SeqTensor from_rows(const std::vector<std::vector<double>>& rows) {
        if (rows.empty() || rows.front().empty()) {
            throw std::invalid_argument("SeqTensor::from_rows: empty input");
        }
        SeqTensor out(rows.size(), rows.front().size());
        for (std::size_t t = 0; t < rows.size(); ++t) {
            if (rows[t].size() != out.channels()) {
                throw std::invalid_argument("SeqTensor::from_rows: ragged rows");
            }
            for (std::size_t c = 0; c < out.channels(); ++c) out(t, c) = rows[t][c];
        }
        return out;
    }

    std::size_t time_len() const { return time_len_; }
    std::size_t channels() const { return channels_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t t, std::size_t c) { return data_[t * channels_ + c]; }
    double operator()(std::size_t t, std::size_t c) const { return data_[t * channels_ + c]; }

    std::span<double> row(std::size_t t) { return {data_.data() + t * channels_, channels_}; }
    std::span<const double> row(std::size_t t) const { return {data_.data() + t * channels_, channels_}; }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }

    bool same_shape(const SeqTensor& other) const {
        return time_len_ == other.time_len_ && channels_ == other.channels_;
    }

    bool all_finite() const;

    friend bool operator==(const SeqTensor&, const SeqTensor&) = default;

private:
    std::size_t time_len_ = 0;
    std::size_t channels_ = 0;
    std::vector<double> data_;
};

inline std::string shape_string(const SeqTensor& x) {
    return std::to_string(x.time_len()) + "x" + std::to_string(x.channels());
}

}  // namespace fsn
