#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nsim/env.hpp"
#include "nsim/io.hpp"

namespace nsim {

/// RGB8 PNG bytes of a frame.
std::vector<uint8_t> encode_png(const Frame& frame);
/// Any PNG libpng can read, converted to RGB8; FormatError on malformed input.
Frame decode_png(std::span<const uint8_t> bytes);
void write_png(const std::filesystem::path& path, const Frame& frame);

std::string base64_encode(std::span<const uint8_t> bytes);
/// FormatError on characters outside the standard alphabet or bad padding.
std::vector<uint8_t> base64_decode(std::string_view text);

Frame resize_nearest(const Frame& frame, int height, int width);
/// Rows of equally sized frames laid out as one image, each cell upscaled by `scale`.
Frame tile(const std::vector<std::vector<Frame>>& rows, int scale = 1);

}  // namespace nsim
