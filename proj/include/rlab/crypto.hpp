/*
 * Copyright (C) 2026 The remotelab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 *
*/

#ifndef RLAB__CRYPTO_HPP
#define RLAB__CRYPTO_HPP

#include <string>
#include <string_view>

namespace rlab {

/// Lower-case hex SHA-256 digest.
std::string sha256_hex(std::string_view bytes);

/// 32 random bytes from the OS CSPRNG, hex encoded.
std::string random_token();

/// 32 bytes derived from a secret and a discriminator, hex encoded. Used where
/// token issuance must be reproducible (scenario runs, crash recovery).
std::string derive_token(std::string_view secret, std::string_view discriminator);

/// Constant-time comparison of equal-length strings.
bool constant_time_equal(std::string_view a, std::string_view b);

} // namespace rlab

#endif // RLAB__CRYPTO_HPP
