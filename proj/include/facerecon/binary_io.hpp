// Copyright 2026 The facerecon Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FACERECON_BINARY_IO_HPP_
#define FACERECON_BINARY_IO_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace facerecon {

// Lower-case hex SHA-256.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_hex(std::string_view bytes);

// Appends doubles as little-endian IEEE-754 regardless of host order.
void append_f64_le(std::vector<std::uint8_t>& out, std::span<const double> values);
// Decodes `count` doubles starting at byte `offset`; throws kIo when short.
std::vector<double> read_f64_le(std::span<const std::uint8_t> bytes, std::size_t offset,
                                std::size_t count);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace facerecon

#endif  // FACERECON_BINARY_IO_HPP_
