#pragma once

#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace pregu {

// Token inventory with dense ids 0..size-1. Two join modes exist: the toy
// model uses whitespace-separated word symbols, a remote backend interns the
// server's own token strings and joins by concatenation.
class Vocabulary {
public:
    enum class Join { space, concat };

    Vocabulary() = default;
    Vocabulary(std::vector<std::string> tokens, Join join);

    int size() const { return static_cast<int>(tokens_.size()); }
    Join join_mode() const { return join_; }

    const std::string& token(int id) const;
    std::optional<int> id(const std::string& token) const;

    // Adds the token if unseen; returns its id either way.
    int intern(const std::string& token);

    // Space mode only: splits on whitespace, throws InputError on a word
    // outside the vocabulary.
    std::vector<int> tokenize(const std::string& text) const;
    std::string detokenize(std::span<const int> ids) const;

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
    Join join_ = Join::space;
};

}  // namespace pregu
