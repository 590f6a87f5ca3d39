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

#include <rlab/crypto.hpp>
#include <rlab/error.hpp>

#include <openssl/rand.h>
#include <openssl/sha.h>

#include <array>

namespace rlab {

namespace {

std::string to_hex(const unsigned char* data, std::size_t n)
{
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(n * 2, '0');
  for (std::size_t i = 0; i < n; ++i)
  {
    out[2 * i] = digits[data[i] >> 4];
    out[2 * i + 1] = digits[data[i] & 0x0F];
  }
  return out;
}

} // anonymous namespace

std::string sha256_hex(std::string_view bytes)
{
  std::array<unsigned char, SHA256_DIGEST_LENGTH> digest{};
  SHA256(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), digest.data());
  return to_hex(digest.data(), digest.size());
}

std::string random_token()
{
  std::array<unsigned char, 32> buf{};
  if (RAND_bytes(buf.data(), static_cast<int>(buf.size())) != 1)
    throw Error(Errc::IoFailure, "system random source unavailable");
  return to_hex(buf.data(), buf.size());
}

std::string derive_token(std::string_view secret, std::string_view discriminator)
{
  std::string material;
  material.reserve(secret.size() + discriminator.size() + 1);
  material.append(secret);
  material.push_back(':');
  material.append(discriminator);
  return sha256_hex(material);
}

bool constant_time_equal(std::string_view a, std::string_view b)
{
  if (a.size() != b.size())
    return false;
  unsigned char diff = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    diff |= static_cast<unsigned char>(a[i] ^ b[i]);
  return diff == 0;
}

} // namespace rlab
