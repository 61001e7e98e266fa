#pragma once

#include <cctype>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "canvas/errors.hpp"
#include "canvas/grid.hpp"
#include "canvas/rng.hpp"

namespace canvas {

/// Reserved token id for the learned null embedding. A NULL text condition is
/// this single token, which keeps it distinct from an empty token list.
inline constexpr int kNullTokenId = 0;

inline constexpr std::size_t kMaxImageRefs = 8;

using TokenSeq = std::vector<int>;

enum class TaskKind {
    GeneralEdit,
    BackgroundOutpaint,
    AspectRatioOutpaint,
    SuperResolution,
};

inline const char* to_string(TaskKind t) {
    switch (t) {
        case TaskKind::GeneralEdit: return "general_edit";
        case TaskKind::BackgroundOutpaint: return "background_outpaint";
        case TaskKind::AspectRatioOutpaint: return "aspect_ratio_outpaint";
        case TaskKind::SuperResolution: return "super_resolution";
    }
    throw std::logic_error("unreachable TaskKind");
}

inline TaskKind parse_task_kind(const std::string& s) {
    if (s == "general_edit") return TaskKind::GeneralEdit;
    if (s == "background_outpaint") return TaskKind::BackgroundOutpaint;
    if (s == "aspect_ratio_outpaint") return TaskKind::AspectRatioOutpaint;
    if (s == "super_resolution") return TaskKind::SuperResolution;
    throw ConfigError("unknown task kind: " + s);
}

/// Prompt prefix each training sample and pipeline prompt must start with.
inline const char* task_prompt_prefix(TaskKind t) {
    switch (t) {
        case TaskKind::GeneralEdit: return "Edit the image as instructed";
        case TaskKind::BackgroundOutpaint: return "Generate background for this product:";
        case TaskKind::AspectRatioOutpaint: return "Extend the top and bottom of the image";
        case TaskKind::SuperResolution: return "Super resolution for this image";
    }
    throw std::logic_error("unreachable TaskKind");
}

/// Everything the velocity field may be conditioned on. Text slots hold token
/// ids; std::nullopt means NULL (dropped), which is not the same thing as an
/// empty sequence.
struct ConditionSet {
    std::optional<TokenSeq> text;
    std::optional<TokenSeq> negative_text;
    std::vector<LatentGrid> images;

    void require_valid() const {
        if (images.size() > kMaxImageRefs)
            throw std::invalid_argument("ConditionSet: more than 8 image references");
    }

    ConditionSet with_text(std::optional<TokenSeq> t) const {
        ConditionSet out = *this;
        out.text = std::move(t);
        return out;
    }

    ConditionSet without_text() const { return with_text(std::nullopt); }

    ConditionSet without_images() const {
        ConditionSet out = *this;
        out.images.clear();
        return out;
    }
};

/// Deterministic toy tokenizer: lowercase words hashed into [1, vocab).
/// Id 0 stays reserved for the null embedding.
inline TokenSeq tokenize(const std::string& text, int vocab_size) {
    if (vocab_size < 2) throw std::invalid_argument("tokenize: vocab_size must be >= 2");
    TokenSeq out;
    std::string word;
    auto flush = [&] {
        if (word.empty()) return;
        std::uint64_t h = detail::mix64(0x746f6b656e697aULL);
        for (unsigned char ch : word) h = detail::mix64(h ^ ch);
        out.push_back(1 + static_cast<int>(h % static_cast<std::uint64_t>(vocab_size - 1)));
        word.clear();
    };
    for (unsigned char ch : text) {
        if (std::isalnum(ch))
            word.push_back(static_cast<char>(std::tolower(ch)));
        else
            flush();
    }
    flush();
    return out;
}

}  // namespace canvas
