#pragma once

#include <string>
#include <string_view>

namespace iqarag::detail {

struct HttpUrl {
    std::string base;  // scheme://host:port, as httplib::Client expects
    std::string path;
};

// Accepts "http://host[:port][/path]". Throws ValidationError otherwise.
HttpUrl parse_http_url(std::string_view url, std::string_view default_path);

}  // namespace iqarag::detail
