// Copyright 2026 The TCG Authors
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

#ifndef TCG_RANDOM_HPP
#define TCG_RANDOM_HPP

#include <cstdint>
#include <random>
#include <string_view>

namespace tcg {

/// SplitMix64 finalizer. Used to derive independent stream seeds from a
/// master seed and a stream key, so that adding a stream never perturbs
/// the draws of another.
constexpr uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr uint64_t stream_seed(uint64_t master, uint64_t key) {
    return mix64(mix64(master) ^ mix64(key + 0x632be59bd9b4e019ULL));
}

constexpr uint64_t stream_seed(uint64_t master, uint64_t key_a, uint64_t key_b) {
    return stream_seed(stream_seed(master, key_a), key_b);
}

/// FNV-1a, for keying streams by name ("measurement", ...).
constexpr uint64_t hash_name(std::string_view name) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : name) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

class RandomStream {
   public:
    explicit RandomStream(uint64_t seed) : engine_(seed) {}

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }
    std::mt19937_64 &engine() { return engine_; }

   private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace tcg

#endif
