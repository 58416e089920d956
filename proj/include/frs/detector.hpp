#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "frs/frst_io.hpp"
#include "frs/rng.hpp"
#include "frs/tensor.hpp"

namespace frs {

/// Anchor-free single-stage detector: 4-stage backbone (strides 2,4,8,16),
/// 3-level FPN over C2..C4 (strides 4,8,16), and a head shared across levels
/// producing C class logits and 4 box distances per site.
struct DetectorConfig {
    std::array<int, 4> backbone_widths{16, 32, 64, 128};
    int fpn_channels = 64;
    int head_depth = 2;
    int num_classes = 3;
    int image_size = 64;
    std::vector<int> level_strides{4, 8, 16};
    /// Per-level (min, max] box max-side range in pixels; max < 0 means open.
    std::vector<std::pair<double, double>> scale_ranges{{0.0, 16.0}, {16.0, 32.0}, {32.0, -1.0}};

    int levels() const { return static_cast<int>(level_strides.size()); }
    int level_size(int level) const { return image_size / level_strides[static_cast<size_t>(level)]; }
    bool scale_in_range(int level, double max_side) const;

    void validate() const;
    nlohmann::json to_json() const;
    static DetectorConfig from_json(const nlohmann::json& j);

    static DetectorConfig teacher_default();
    static DetectorConfig student_default();
};

/// Named parameter tensors in a fixed construction order (the optimizer and
/// the FRST codec both rely on the ordering).
struct DetectorParams {
    DetectorConfig config;
    NamedTensors named;

    Tensor& find(const std::string& name);
    const Tensor& find(const std::string& name) const;
    std::vector<Tensor> trainable() const;
    void set_requires_grad(bool enabled);

    /// He fan-in initialization from the given stream; the final class conv
    /// bias starts at -2 so initial probabilities sit near 0.12.
    static DetectorParams init(const DetectorConfig& config, Rng& rng);
};

struct FeaturePyramid {
    std::vector<Tensor> levels;  // [N, fpn_channels, H_l, W_l]
};

struct ScorePyramid {
    std::vector<Tensor> probs;   // [N, C, H_l, W_l], post-sigmoid
    std::vector<Tensor> logits;  // same shapes, raw
};

struct BoxPyramid {
    std::vector<Tensor> levels;  // [N, 4, H_l, W_l], (l,t,r,b) in pixels
};

struct DetectorOutput {
    FeaturePyramid features;
    ScorePyramid scores;
    BoxPyramid boxes;
};

/// Full forward pass. Pure function of (params, images); spatial alignment
/// of the feature and score pyramids is asserted on every call.
DetectorOutput forward(const DetectorParams& params, const Tensor& images);

/// Per-level 1x1 convs mapping student FPN channels onto the teacher's;
/// empty (identity) when the channel counts already match.
struct AdapterParams {
    NamedTensors named;
    bool identity() const { return named.empty(); }
    std::vector<Tensor> trainable() const;
};

AdapterParams build_adapter(const DetectorConfig& student, const DetectorConfig& teacher, Rng& rng);

/// Adapted student features (passthrough for an identity adapter).
FeaturePyramid apply_adapter(const AdapterParams& adapter, const FeaturePyramid& student);

/// Checkpoints: "<base>.frst" (tensors) + "<base>.json" (DetectorConfig).
void save_params(const DetectorParams& params, const std::string& base_path);
DetectorParams load_params(const std::string& base_path);
/// Validates stored tensors against `expected`; raises CodecError naming the
/// first missing or mismatched tensor.
DetectorParams load_params(const std::string& base_path, const DetectorConfig& expected);

}  // namespace frs
