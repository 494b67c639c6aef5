#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "stcnet/core/conv.hpp"
#include "stcnet/keypoints/keypoints.hpp"

namespace stcnet {

/// Clip context handed to providers that look keypoints up instead of
/// computing them from pixels. For generated images the index names the
/// real frame the image stands in for.
struct FrameRef {
    std::string clip_id;
    int frame_index = -1;
    const std::vector<KeypointSet>* clip_keypoints = nullptr; // oracle source
};

/// Detector abstraction standing in for the fine-tuned pose model: an
/// oracle over ground-truth annotations, a trainable soft-argmax regressor,
/// and a reader of precomputed keypoint files. detect() is deterministic in
/// evaluation mode; only the regressor produces gradients.
class KeypointProvider {
public:
    virtual ~KeypointProvider() = default;

    /// Returns a (21,2) coordinate node. Regressor output participates in
    /// gradient flow with respect to both the image and its parameters.
    virtual Var detect(GraphContext& ctx, const Var& image, const FrameRef* ref) = 0;

    virtual bool trainable() const { return false; }
    virtual void collect(std::vector<Parameter*>&) {}
    virtual std::string kind() const = 0;
};

/// Evaluation-mode convenience wrapper.
inline KeypointSet detect_keypoints(KeypointProvider& provider, const Tensor& image,
                                    const FrameRef* ref = nullptr) {
    GraphContext ctx(false);
    return KeypointSet(provider.detect(ctx, constant(image), ref)->value);
}

class OracleProvider final : public KeypointProvider {
public:
    Var detect(GraphContext&, const Var&, const FrameRef* ref) override {
        STC_CHECK(ref != nullptr && ref->clip_keypoints != nullptr,
                  "oracle provider needs ground-truth keypoints in the frame context");
        STC_CHECK(ref->frame_index >= 0 &&
                      ref->frame_index < static_cast<int>(ref->clip_keypoints->size()),
                  "oracle provider: frame index " << ref->frame_index << " out of range for clip "
                                                  << ref->clip_id);
        return constant((*ref->clip_keypoints)[ref->frame_index].pts);
    }
    std::string kind() const override { return "oracle"; }
};

/// Reads the keypoints.json files of a dataset split. Missing clips or
/// frames are hard errors; a detector that silently interpolated would hide
/// exactly the unstable-frame failures this pipeline is meant to surface.
class FileProvider final : public KeypointProvider {
public:
    explicit FileProvider(std::string split_dir) : split_dir_(std::move(split_dir)) {}

    Var detect(GraphContext&, const Var&, const FrameRef* ref) override {
        STC_CHECK(ref != nullptr && !ref->clip_id.empty(),
                  "file provider needs a clip id in the frame context");
        auto it = cache_.find(ref->clip_id);
        if (it == cache_.end()) {
            const std::string path = split_dir_ + "/" + ref->clip_id + "/keypoints.json";
            it = cache_.emplace(ref->clip_id, read_keypoints_json(path)).first;
        }
        const auto& frames = it->second;
        STC_CHECK(ref->frame_index >= 0 && ref->frame_index < static_cast<int>(frames.size()),
                  "file provider: no keypoint entry for frame " << ref->frame_index << " of clip "
                                                                << ref->clip_id);
        return constant(frames[ref->frame_index].pts);
    }
    std::string kind() const override { return "file"; }

private:
    std::string split_dir_;
    std::map<std::string, std::vector<KeypointSet>> cache_;
};

/// Small trainable detector: four downsampling stages, a 21-channel head,
/// spatial soft-argmax. With the head zero-initialized the heatmaps are
/// uniform and every keypoint starts at the grid centroid.
class RegressorProvider final : public KeypointProvider {
public:
    explicit RegressorProvider(Rng& rng, int base_width = 16)
        : stage1_(rng, 3, base_width),
          stage2_(rng, base_width, 2 * base_width),
          stage3_(rng, 2 * base_width, 4 * base_width),
          stage4_(rng, 4 * base_width, 4 * base_width),
          head_(rng, 4 * base_width, kNumKeypoints, 3, /*zero_init=*/true) {}

    Var detect(GraphContext& ctx, const Var& image, const FrameRef*) override {
        Var h = avg_pool2(stage1_(ctx, image));
        h = avg_pool2(stage2_(ctx, h));
        h = avg_pool2(stage3_(ctx, h));
        h = avg_pool2(stage4_(ctx, h));
        return soft_argmax(heatmaps_from(ctx, h));
    }

    /// Exposed for diagnostics: the positive heatmaps feeding soft-argmax.
    Var heatmaps(GraphContext& ctx, const Var& image) {
        Var h = avg_pool2(stage1_(ctx, image));
        h = avg_pool2(stage2_(ctx, h));
        h = avg_pool2(stage3_(ctx, h));
        h = avg_pool2(stage4_(ctx, h));
        return heatmaps_from(ctx, h);
    }

    bool trainable() const override { return true; }
    void collect(std::vector<Parameter*>& out) override {
        stage1_.collect(out);
        stage2_.collect(out);
        stage3_.collect(out);
        stage4_.collect(out);
        head_.collect(out);
    }
    std::string kind() const override { return "regressor"; }

private:
    Var heatmaps_from(GraphContext& ctx, const Var& features) {
        return exp_shift_max(head_(ctx, features));
    }

    ConvNormRelu stage1_, stage2_, stage3_, stage4_;
    Conv2dLayer head_;
};

} // namespace stcnet
