#include "oddkit/tokenizer.hpp"

#include <cctype>

namespace oddkit {

size_t approximate_token_count(std::string_view text) {
    size_t count = 0;
    bool in_word = false;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            if (!in_word) {
                ++count;
                in_word = true;
            }
        } else {
            in_word = false;
            if (!std::isspace(c)) ++count;  // punctuation piece
        }
    }
    return count;
}

}  // namespace oddkit
