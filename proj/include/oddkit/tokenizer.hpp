#pragma once

#include <cstddef>
#include <functional>
#include <string_view>

namespace oddkit {

/// Maps text to a non-negative token count. Must be additive over the
/// per-stage concatenations it is applied to.
using TokenCounter = std::function<size_t(std::string_view)>;

/// Reference tokenizer: a whitespace-and-punctuation word-piece
/// approximation. Every maximal alphanumeric run counts as one piece and
/// every non-whitespace punctuation character counts as one more, so
/// "painted_speed_or_route_number" is 9 tokens. Deterministic and offline;
/// real backend tokenizers can be plugged in through TokenCounter.
size_t approximate_token_count(std::string_view text);

}  // namespace oddkit
