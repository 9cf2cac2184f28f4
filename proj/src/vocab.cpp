#include "pregu/vocab.hpp"

#include <sstream>

#include "pregu/errors.hpp"

namespace pregu {

Vocabulary::Vocabulary(std::vector<std::string> tokens, Join join)
    : tokens_(std::move(tokens)), join_(join) {
    for (int i = 0; i < static_cast<int>(tokens_.size()); ++i) {
        auto [it, inserted] = index_.emplace(tokens_[i], i);
        if (!inserted)
            throw InputError("duplicate token in vocabulary: " + tokens_[i]);
    }
}

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || id >= size())
        throw InputError("token id out of range: " + std::to_string(id));
    return tokens_[static_cast<std::size_t>(id)];
}

std::optional<int> Vocabulary::id(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

int Vocabulary::intern(const std::string& token) {
    auto it = index_.find(token);
    if (it != index_.end()) return it->second;
    tokens_.push_back(token);
    int id = static_cast<int>(tokens_.size()) - 1;
    index_.emplace(tokens_.back(), id);
    return id;
}

std::vector<int> Vocabulary::tokenize(const std::string& text) const {
    if (join_ != Join::space)
        throw CapabilityError("tokenize requires a space-joined vocabulary");
    std::vector<int> out;
    std::istringstream in(text);
    std::string word;
    while (in >> word) {
        auto found = id(word);
        if (!found) throw InputError("unknown token: '" + word + "'");
        out.push_back(*found);
    }
    return out;
}

std::string Vocabulary::detokenize(std::span<const int> ids) const {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (join_ == Join::space && i > 0) out.push_back(' ');
        out += token(ids[i]);
    }
    return out;
}

}  // namespace pregu
