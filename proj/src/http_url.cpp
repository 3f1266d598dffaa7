#include "http_url.hpp"

#include "iqarag/error.hpp"

namespace iqarag::detail {

HttpUrl parse_http_url(std::string_view url, std::string_view default_path) {
    constexpr std::string_view scheme = "http://";
    if (url.substr(0, scheme.size()) != scheme) {
        throw ValidationError("unsupported endpoint '" + std::string(url) + "': expected http://host:port[/path]");
    }
    const auto rest = url.substr(scheme.size());
    const auto slash = rest.find('/');
    const auto authority = rest.substr(0, slash);
    if (authority.empty()) throw ValidationError("endpoint '" + std::string(url) + "' has no host");

    HttpUrl out;
    out.base = std::string(scheme) + std::string(authority);
    out.path = slash == std::string_view::npos || rest.substr(slash) == "/" ? std::string(default_path)
                                                                           : std::string(rest.substr(slash));
    return out;
}

}  // namespace iqarag::detail
