#pragma once

#include "tseg/seg.hpp"

#include <string>
#include <string_view>

namespace tseg::detail {

/// POSTs a JSON body, retrying transport failures and 5xx replies with doubling backoff.
/// Returns the body of the first 2xx reply; anything else ends in ServiceError.
std::string post_json(const seg::HttpClientConfig& cfg, std::string_view path, const std::string& body);

} // namespace tseg::detail
