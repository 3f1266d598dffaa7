#pragma once

#include <string>
#include <string_view>

namespace iqarag::detail {

std::string base64_encode(std::string_view bytes);
// Throws ValidationError on malformed input.
std::string base64_decode(std::string_view text);

}  // namespace iqarag::detail
