#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <unordered_set>
#include <vector>

#include "canvas/condition.hpp"
#include "canvas/errors.hpp"
#include "canvas/grid.hpp"
#include "canvas/rng.hpp"
#include "canvas/synth.hpp"

namespace canvas {

enum class DatasetTask {
    GeneralEdit,
    BackgroundOutpaint,
    AspectRatioOutpaint,
    SuperResolution,
    Keyframe,
    SceneExtract,
    SceneSynthesize,
};

inline const char* dataset_task_name(DatasetTask t) {
    switch (t) {
        case DatasetTask::GeneralEdit: return "general_edit";
        case DatasetTask::BackgroundOutpaint: return "background_outpaint";
        case DatasetTask::AspectRatioOutpaint: return "aspect_ratio_outpaint";
        case DatasetTask::SuperResolution: return "super_resolution";
        case DatasetTask::Keyframe: return "keyframe";
        case DatasetTask::SceneExtract: return "scene_extract";
        case DatasetTask::SceneSynthesize: return "scene_synthesize";
    }
    return "unknown";
}

inline const char* dataset_task_prefix(DatasetTask t) {
    switch (t) {
        case DatasetTask::GeneralEdit: return "Edit the image as instructed";
        case DatasetTask::BackgroundOutpaint: return "Generate background for this product:";
        case DatasetTask::AspectRatioOutpaint: return "Extend the top and bottom of the image";
        case DatasetTask::SuperResolution: return "Super resolution for this image";
        case DatasetTask::Keyframe: return "Advance the scene by";
        case DatasetTask::SceneExtract: return "Extract the product onto a white background:";
        case DatasetTask::SceneSynthesize: return "Place the products in a scene:";
    }
    return "";
}

/// Outpaint-style samples carry references [image, known-region mask]; the mask
/// is 1 where the input is authoritative and must be preserved.
struct EditSample {
    DatasetTask task = DatasetTask::GeneralEdit;
    ConditionSet inputs;
    LatentGrid target;
    std::string prompt;
    std::string sample_id;
    double delta_seconds = 0.0;
    bool near_static = false;
};

/// Recolor edit: the instruction names a different palette color for the
/// product and the target is the same scene re-rendered with it.
inline EditSample make_general_edit_sample(const ProductImage& p, RngStream& rng) {
    if (p.spec.products.empty())
        throw std::invalid_argument("make_general_edit_sample: scene has no product");
    const auto& palette = product_palette();
    std::size_t current = palette.size();
    for (std::size_t i = 0; i < palette.size(); ++i)
        if (palette[i].rgb == p.spec.products[0].color) current = i;
    std::size_t pick = rng.uniform_int(palette.size() - (current < palette.size() ? 1 : 0));
    if (pick >= current) ++pick;

    SceneSpec edited = p.spec;
    edited.products[0].color = palette[pick].rgb;

    EditSample s;
    s.task = DatasetTask::GeneralEdit;
    s.inputs.images.push_back(p.image);
    s.target = image_to_grid(render_base(edited, RenderMode::Scene));
    s.prompt = std::string(dataset_task_prefix(s.task)) + ": make the " +
               shape_name(p.spec.products[0].kind) + " " + palette[pick].name;
    s.sample_id = p.sample_id;
    return s;
}

inline EditSample make_background_outpaint_sample(const ProductImage& p) {
    EditSample s;
    s.task = DatasetTask::BackgroundOutpaint;
    s.inputs.images.push_back(p.on_white);
    s.inputs.images.push_back(p.mask);
    s.target = p.image;
    s.prompt = std::string(dataset_task_prefix(s.task)) + " " + p.caption;
    s.sample_id = p.sample_id;
    return s;
}

/// Height of the 3:2 canvas an image of the given width extends into.
inline int aspect_canvas_height(int width) {
    return static_cast<int>(std::ceil(1.5 * double(width)));
}

/// Pastes an image into a taller canvas at the given top offset; rows outside
/// the pasted block are neutral gray.
inline LatentGrid embed_in_canvas(const LatentGrid& img, int canvas_height, int top) {
    if (top < 0 || top + img.height > canvas_height)
        throw std::invalid_argument("embed_in_canvas: block out of range");
    LatentGrid out(img.channels, canvas_height, img.width, 0.5f);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) out.at(c, top + y, x) = img.at(c, y, x);
    return out;
}

inline LatentGrid band_mask(int width, int canvas_height, int top, int known_rows) {
    LatentGrid m(1, canvas_height, width, 0.0f);
    for (int y = top; y < top + known_rows; ++y)
        for (int x = 0; x < width; ++x) m.at(0, y, x) = 1.0f;
    return m;
}

inline EditSample make_aspect_ratio_sample(const ProductImage& p, RngStream& rng) {
    const int w = p.image.width;
    const int h = p.image.height;
    if (double(h) / double(w) >= 1.4)
        throw std::invalid_argument("make_aspect_ratio_sample: image already taller than 7:5");
    const int canvas_h = aspect_canvas_height(w);
    const int band = canvas_h - h;
    const int top = rng.uniform_int(band + 1);

    EditSample s;
    s.task = DatasetTask::AspectRatioOutpaint;
    s.inputs.images.push_back(embed_in_canvas(p.image, canvas_h, top));
    s.inputs.images.push_back(band_mask(w, canvas_h, top, h));
    s.target = image_to_grid(
        render_scene(p.spec, w, canvas_h, 0.0, -double(top), 1, RenderMode::Scene));
    s.prompt = dataset_task_prefix(s.task);
    s.sample_id = p.sample_id;
    return s;
}

namespace detail {

inline LatentGrid box_downsample3(const LatentGrid& img) {
    LatentGrid out(img.channels, img.height / 3, img.width / 3);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < out.height; ++y)
            for (int x = 0; x < out.width; ++x) {
                double acc = 0.0;
                for (int dy = 0; dy < 3; ++dy)
                    for (int dx = 0; dx < 3; ++dx) acc += img.at(c, 3 * y + dy, 3 * x + dx);
                out.at(c, y, x) = static_cast<float>(acc / 9.0);
            }
    return out;
}

inline LatentGrid blur3(const LatentGrid& img) {
    static const double k[3] = {0.25, 0.5, 0.25};
    LatentGrid tmp(img.channels, img.height, img.width);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) {
                double acc = 0.0;
                for (int d = -1; d <= 1; ++d) {
                    const int xx = std::clamp(x + d, 0, img.width - 1);
                    acc += k[d + 1] * img.at(c, y, xx);
                }
                tmp.at(c, y, x) = static_cast<float>(acc);
            }
    LatentGrid out(img.channels, img.height, img.width);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) {
                double acc = 0.0;
                for (int d = -1; d <= 1; ++d) {
                    const int yy = std::clamp(y + d, 0, img.height - 1);
                    acc += k[d + 1] * tmp.at(c, yy, x);
                }
                out.at(c, y, x) = static_cast<float>(acc);
            }
    return out;
}

inline LatentGrid quantize_u8(const LatentGrid& img) {
    LatentGrid out(img.channels, img.height, img.width);
    for (std::size_t i = 0; i < img.data.size(); ++i)
        out.data[i] = float(unit_to_u8(img.data[i])) / 255.0f;
    return out;
}

}  // namespace detail

inline EditSample make_superres_pair(const LatentGrid& image, RngStream& rng,
                                     double noise_sigma = 0.01) {
    if (image.width % 3 != 0 || image.height % 3 != 0)
        throw std::invalid_argument("make_superres_pair: dimensions must be divisible by 3");
    LatentGrid low = detail::box_downsample3(image);
    low = detail::blur3(low);
    if (noise_sigma > 0.0) {
        for (auto& v : low.data) v += static_cast<float>(noise_sigma) * rng.normal_f();
    }
    low = detail::quantize_u8(low);

    EditSample s;
    s.task = DatasetTask::SuperResolution;
    s.inputs.images.push_back(std::move(low));
    s.target = image;
    s.prompt = dataset_task_prefix(s.task);
    return s;
}

/// Deterministic keyframe core: pan shifts the raster with edge padding,
/// an object move re-renders the scene with the product displaced.
inline EditSample make_keyframe_pair(const ProductImage& p, int dx, int dy, int delta_seconds,
                                     bool pan) {
    if (delta_seconds < 2)
        throw std::invalid_argument("make_keyframe_pair: separation below two seconds");
    EditSample s;
    s.task = DatasetTask::Keyframe;
    s.inputs.images.push_back(p.image);
    if (pan) {
        LatentGrid shifted(p.image.channels, p.image.height, p.image.width);
        for (int c = 0; c < p.image.channels; ++c)
            for (int y = 0; y < p.image.height; ++y)
                for (int x = 0; x < p.image.width; ++x) {
                    const int sx = std::clamp(x - dx, 0, p.image.width - 1);
                    const int sy = std::clamp(y - dy, 0, p.image.height - 1);
                    shifted.at(c, y, x) = p.image.at(c, sy, sx);
                }
        s.target = std::move(shifted);
    } else {
        SceneSpec moved = p.spec;
        for (auto& shape : moved.products) {
            shape.cx += dx;
            shape.cy += dy;
        }
        s.target = image_to_grid(render_base(moved, RenderMode::Scene));
    }
    s.delta_seconds = delta_seconds;
    s.near_static = (dx == 0 && dy == 0);
    char desc[96];
    std::snprintf(desc, sizeof(desc), "%s %d seconds: %s by (%d, %d)",
                  dataset_task_prefix(s.task), delta_seconds,
                  pan ? "pan the view" : "move the product", dx, dy);
    s.prompt = desc;
    s.sample_id = p.sample_id;
    return s;
}

inline EditSample make_keyframe_pair(const ProductImage& p, RngStream& rng) {
    const int dx = rng.uniform_int(5) - 2;
    const int dy = rng.uniform_int(5) - 2;
    const int delta = 2 + rng.uniform_int(4);
    const bool pan = rng.uniform() < 0.5;
    return make_keyframe_pair(p, dx, dy, delta, pan);
}

enum class SceneDirection { Extract, Synthesize };

/// Places all products in one shared scene (first product's background),
/// spread across the width with radii shrunk to keep total coverage sane.
inline SceneSpec combine_scene(const std::vector<ProductImage>& products) {
    if (products.empty() || products.size() > std::size_t(kMaxImageRefs))
        throw std::invalid_argument("combine_scene: need 1..8 products");
    SceneSpec s = products[0].spec;
    s.products.clear();
    const double n = double(products.size());
    const double shrink = 1.0 / std::sqrt(n);
    for (std::size_t i = 0; i < products.size(); ++i) {
        ShapeSpec shape = products[i].spec.products.at(0);
        shape.cx = (double(i) + 0.5) / n * s.base_width;
        shape.cy = 0.5 * s.base_height;
        shape.rx *= shrink;
        shape.ry *= shrink;
        s.products.push_back(shape);
    }
    return s;
}

inline EditSample make_scene_pair(const std::vector<ProductImage>& products,
                                  SceneDirection direction) {
    const SceneSpec scene = combine_scene(products);
    const LatentGrid scene_img = image_to_grid(render_base(scene, RenderMode::Scene));
    const LatentGrid white_img = image_to_grid(render_base(scene, RenderMode::OnWhite));

    std::string caption;
    for (std::size_t i = 0; i < products.size(); ++i) {
        if (i) caption += ", ";
        caption += products[i].caption;
    }

    EditSample s;
    s.sample_id = products[0].sample_id;
    if (direction == SceneDirection::Extract) {
        s.task = DatasetTask::SceneExtract;
        s.inputs.images.push_back(scene_img);
        s.target = white_img;
    } else {
        s.task = DatasetTask::SceneSynthesize;
        for (const auto& p : products) s.inputs.images.push_back(p.on_white);
        s.target = scene_img;
    }
    s.prompt = std::string(dataset_task_prefix(s.task)) + " " + caption;
    return s;
}

using Embedder = std::function<std::vector<double>(const LatentGrid&)>;

/// Keeps samples whose input/target embedding cosine lands inside [lo, hi];
/// too-similar and too-dissimilar pairs are both dropped.
inline std::vector<EditSample> similarity_band_filter(const std::vector<EditSample>& samples,
                                                      const Embedder& embedder, double lo,
                                                      double hi) {
    if (!(lo >= 0.0 && lo < hi && hi <= 1.0))
        throw std::invalid_argument("similarity_band_filter: need 0 <= lo < hi <= 1");
    std::vector<EditSample> kept;
    for (const auto& s : samples) {
        if (s.inputs.images.empty()) continue;
        const double sim =
            cosine_similarity(embedder(s.inputs.images.front()), embedder(s.target));
        if (sim >= lo && sim <= hi) kept.push_back(s);
    }
    return kept;
}

struct MixtureEntry {
    std::string dataset_id;
    double weight = 0.0;
};

struct MixtureSpec {
    std::vector<MixtureEntry> entries;
};

inline std::size_t pick_mixture(const MixtureSpec& spec, RngStream& rng) {
    double total = 0.0;
    for (const auto& e : spec.entries) {
        if (e.weight < 0.0) throw std::invalid_argument("pick_mixture: negative weight");
        total += e.weight;
    }
    if (!(total > 0.0)) throw std::invalid_argument("pick_mixture: weights sum to zero");
    const double u = rng.uniform() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < spec.entries.size(); ++i) {
        acc += spec.entries[i].weight;
        if (u < acc) return i;
    }
    return spec.entries.size() - 1;
}

struct OptOutList {
    std::unordered_set<std::string> ids;

    bool contains(const std::string& id) const { return ids.count(id) > 0; }
};

struct OptOutAudit {
    std::uint64_t excluded = 0;
    std::uint64_t passed = 0;
};

template <typename T>
std::vector<T> apply_optout(const std::vector<T>& items, const OptOutList& list,
                            OptOutAudit* audit = nullptr) {
    std::vector<T> kept;
    for (const auto& item : items) {
        if (list.contains(item.sample_id)) {
            if (audit) ++audit->excluded;
        } else {
            if (audit) ++audit->passed;
            kept.push_back(item);
        }
    }
    return kept;
}

}  // namespace canvas
