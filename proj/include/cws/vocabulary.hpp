#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "cws/tensor.hpp"

namespace cws {

/// Term <-> id map with two reserved ids: unknown (0) and padding (1).
class Vocabulary {
  public:
    static constexpr TokenId unk = 0;
    static constexpr TokenId pad = 1;

    Vocabulary() : m_terms{"<unk>", "<pad>"} {}

    TokenId add(std::string const& term)
    {
        auto [it, inserted] = m_ids.try_emplace(term, static_cast<TokenId>(m_terms.size()));
        if (inserted) {
            m_terms.push_back(term);
        }
        return it->second;
    }

    [[nodiscard]] TokenId id(std::string const& term) const
    {
        auto it = m_ids.find(term);
        return it == m_ids.end() ? unk : it->second;
    }

    [[nodiscard]] bool contains(std::string const& term) const { return m_ids.contains(term); }

    [[nodiscard]] std::string const& term(TokenId id) const { return m_terms.at(id); }

    [[nodiscard]] std::size_t size() const noexcept { return m_terms.size(); }

    [[nodiscard]] std::vector<std::string> const& terms() const noexcept { return m_terms; }

    [[nodiscard]] std::vector<TokenId> encode(std::vector<std::string> const& tokens) const
    {
        std::vector<TokenId> ids;
        ids.reserve(tokens.size());
        for (auto const& t : tokens) {
            ids.push_back(id(t));
        }
        return ids;
    }

  private:
    std::vector<std::string> m_terms;
    std::unordered_map<std::string, TokenId> m_ids;
};

}  // namespace cws
