#pragma once

#include <string>
#include <vector>

namespace cae {

std::string base64_encode(const std::vector<unsigned char>& bytes);
/// Throws cae::Error on malformed input.
std::vector<unsigned char> base64_decode(const std::string& text);

}  // namespace cae
