#pragma once

#include <cstdint>
#include <vector>

#include "diffmac/image.hpp"

namespace diffmac {

/// Procedural face-like test image: background gradient, hair, skin-toned face
/// ellipse, eyes with irises, brows, nose shading and mouth, plus fine hair
/// texture. Every attribute is drawn from `seed`, so distinct seeds give
/// distinct "identities".
Image synth_face(std::uint64_t seed, int resolution);

/// `count` faces with seeds base_seed, base_seed + 1, ...
std::vector<Image> synth_face_corpus(std::size_t count, int resolution, std::uint64_t base_seed = 0);

}  // namespace diffmac
