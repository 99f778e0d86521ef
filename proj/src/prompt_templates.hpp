#pragma once

#include <array>
#include <string_view>

namespace tseg::agent::detail {

struct PromptTemplate {
    std::string_view name;
    std::string_view text;
};

extern const std::array<PromptTemplate, 6> kPromptTemplates;

} // namespace tseg::agent::detail
