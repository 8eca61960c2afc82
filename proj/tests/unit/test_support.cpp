#include <doctest.h>

#include <fstream>

#include "diffmac/archive.hpp"
#include "diffmac/errors.hpp"
#include "diffmac/faces.hpp"
#include "diffmac/image.hpp"
#include "diffmac/tensor_bridge.hpp"
#include "helpers.hpp"

using namespace diffmac;

TEST_CASE("image construction validates the buffer") {
    CHECK_THROWS_AS(Image(2, 2, std::vector<float>(11)), ShapeError);
    CHECK_THROWS_AS(Image(-1, 2), ShapeError);
    const Image img(3, 4, 0.25f);
    CHECK(img.size() == 36);
    CHECK(img.at(2, 3, 2) == 0.25f);
}

TEST_CASE("u8 mapping round-trips every level") {
    std::vector<unsigned char> levels(256 * 3);
    for (std::size_t i = 0; i < levels.size(); ++i) levels[i] = static_cast<unsigned char>(i / 3);
    const auto img = from_u8(16, 16, levels);
    CHECK(img.at(0, 0, 0) == -1.0f);
    CHECK(img.at(15, 15, 0) == 1.0f);
    CHECK(to_u8(img) == levels);

    Image out_of_range(1, 1, 5.0f);
    CHECK(to_u8(out_of_range) == std::vector<unsigned char>{255, 255, 255});
}

TEST_CASE("PNG write and read are lossless at 8 bits") {
    const auto dir = testing::scratch_dir("png");
    const auto face = synth_face(7, 32);
    write_png(face, dir / "b.png");
    write_png(face, dir / "a.png");
    const auto back = read_png(dir / "a.png");
    CHECK(back.height() == 32);
    CHECK(back.width() == 32);
    CHECK(to_u8(back) == to_u8(face));
    CHECK(testing::max_abs_diff(back, face) <= 1.0 / 127.5 + 1e-6);

    const auto listed = list_pngs(dir);
    REQUIRE(listed.size() == 2);
    CHECK(listed[0].filename() == "a.png");
    CHECK_THROWS_AS(read_png(dir / "missing.png"), IoError);
    CHECK_THROWS_AS(list_pngs(dir / "nope"), IoError);
    std::ofstream(dir / "junk.png") << "not a png";
    CHECK_THROWS_AS(read_png(dir / "junk.png"), IoError);
}

TEST_CASE("archives round-trip and fingerprint deterministically") {
    const auto dir = testing::scratch_dir("archive");
    TensorArchive a;
    a.metadata["kind"] = "test";
    a.tensors["w"] = torch::randn({3, 4});
    a.tensors["b"] = torch::arange(5, torch::kFloat32);
    save_archive(a, dir / "a.bin");
    const auto back = load_archive(dir / "a.bin");
    CHECK(back.meta("kind") == "test");
    CHECK(torch::equal(back.tensor("w"), a.tensors["w"]));
    CHECK(torch::equal(back.tensor("b"), a.tensors["b"]));
    CHECK(fingerprint(back.tensors) == fingerprint(a.tensors));
    CHECK_THROWS_AS(back.meta("missing"), ConfigError);
    CHECK_THROWS_AS(back.tensor("missing"), ConfigError);

    save_archive(back, dir / "b.bin");
    std::ifstream fa(dir / "a.bin", std::ios::binary), fb(dir / "b.bin", std::ios::binary);
    CHECK(std::string(std::istreambuf_iterator<char>(fa), {}) == std::string(std::istreambuf_iterator<char>(fb), {}));

    auto changed = a.tensors;
    changed["b"] = changed["b"].clone();
    changed["b"][0] = 0.5f;
    CHECK(fingerprint(changed) != fingerprint(a.tensors));
    CHECK(fingerprint(a.tensors).size() == 16);

    std::ofstream(dir / "bad.bin") << "garbage!";
    CHECK_THROWS_AS(load_archive(dir / "bad.bin"), IoError);
    CHECK_THROWS_AS(load_archive(dir / "missing.bin"), IoError);
    {
        std::ifstream in(dir / "a.bin", std::ios::binary);
        std::string bytes(std::istreambuf_iterator<char>(in), {});
        std::ofstream(dir / "trunc.bin", std::ios::binary) << bytes.substr(0, bytes.size() - 7);
    }
    CHECK_THROWS_AS(load_archive(dir / "trunc.bin"), IoError);
}

TEST_CASE("module export and import") {
    torch::nn::Linear src(3, 2), dst(3, 2);
    std::map<std::string, torch::Tensor> t;
    export_module(*src, "m.", t);
    CHECK(t.count("m.weight") == 1);
    import_module(*dst, "m.", t);
    CHECK(torch::equal(dst->weight, src->weight));
    CHECK_THROWS_AS(import_module(*dst, "other.", t), ConfigError);
    torch::nn::Linear wide(4, 2);
    CHECK_THROWS_AS(import_module(*wide, "m.", t), ConfigError);
}

TEST_CASE("tensor bridge") {
    const auto img = testing::random_image(5, 6, 3);
    const auto t = to_tensor(img);
    CHECK(t.sizes() == torch::IntArrayRef{3, 5, 6});
    CHECK(t[1][4][2].item<float>() == img.at(4, 2, 1));
    CHECK(to_image(t) == img);
    CHECK(to_image(t.unsqueeze(0)) == img);

    const std::vector<Image> imgs{img, testing::random_image(5, 6, 4)};
    const auto batch = to_batch(imgs);
    CHECK(batch.sizes() == torch::IntArrayRef{2, 3, 5, 6});
    CHECK((to_images(batch) == imgs));
    CHECK_THROWS_AS(to_batch(std::vector<Image>{}), ShapeError);
    CHECK_THROWS_AS(to_batch(std::vector<Image>{img, Image(6, 5)}), ShapeError);
    CHECK_THROWS_AS(to_image(torch::zeros({5, 6})), ShapeError);
}

TEST_CASE("procedural faces") {
    CHECK(synth_face(3, 64) == synth_face(3, 64));
    CHECK_FALSE(synth_face(3, 64) == synth_face(4, 64));
    const auto corpus = synth_face_corpus(3, 32, 10);
    REQUIRE(corpus.size() == 3);
    CHECK(corpus[1] == synth_face(11, 32));
    for (float v : corpus[0].pixels()) CHECK((v >= -1.0f && v <= 1.0f));
}
