#pragma once

#include <cstdint>
#include <vector>

#include "headgate/matrix.hpp"

namespace headgate {

enum class Modality : std::uint8_t { vision = 0, text = 1 };

// A tokenized input. `embeddings` is optional: when non-empty it overrides
// the model's embedding-table lookup (used by synthetic tasks that plant
// content directly in token vectors).
struct TokenSequence {
    std::vector<int> token_ids;
    std::vector<Modality> modality;
    Matrix embeddings; // N x d_model when present, else 0 x 0

    std::size_t size() const { return token_ids.size(); }

    void validate(int vocab_size, int d_model) const {
        if (token_ids.empty()) throw validation_error("sequence: length must be >= 1");
        if (modality.size() != token_ids.size())
            throw validation_error("sequence: one modality tag required per position");
        for (int id : token_ids)
            if (id < 0 || id >= vocab_size)
                throw validation_error("sequence: token id out of vocab range");
        if (!embeddings.empty())
            require_shape(embeddings, token_ids.size(), static_cast<std::size_t>(d_model),
                          "sequence embeddings");
    }
};

} // namespace headgate
