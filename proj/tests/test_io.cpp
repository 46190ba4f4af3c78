#include <catch2/catch_amalgamated.hpp>

#include <cstring>

#include "rccn/image_io.hpp"
#include "rccn/model_io.hpp"

using namespace rccn;

namespace {

Model tiny_model(uint64_t seed = 5) {
    NetworkSpec s;
    s.input_h = 32;
    s.input_w = 32;
    s.channel_div = 32;
    s.K = 5;
    return Model::build(s, DiscretizationScheme{DiscretizationMode::SID, 1.0, 10.0, 5}, seed);
}

}  // namespace

TEST_CASE("model serialization round-trips bitwise") {
    Model m = tiny_model();
    auto bytes = serialize_model(m);
    Model back = deserialize_model(bytes);
    CHECK(back.spec.K == m.spec.K);
    CHECK(back.spec.input_h == m.spec.input_h);
    CHECK(back.scheme.b == m.scheme.b);
    auto pa = m.params(), pb = back.params();
    REQUIRE(pa.size() == pb.size());
    for (size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i].name == pb[i].name);
        CHECK(pa[i].value->data == pb[i].value->data);
    }
    // re-serialization is byte identical
    CHECK(serialize_model(back) == bytes);
}

TEST_CASE("model file rejection diagnostics") {
    Model m = tiny_model();
    auto bytes = serialize_model(m);

    SECTION("bad magic") {
        bytes[0] = 'X';
        CHECK_THROWS_WITH(deserialize_model(bytes), Catch::Matchers::ContainsSubstring("magic"));
    }
    SECTION("unsupported version") {
        bytes[4] = 99;
        // version change also breaks the checksum, but version is checked first
        CHECK_THROWS_WITH(deserialize_model(bytes), Catch::Matchers::ContainsSubstring("version"));
    }
    SECTION("flipped parameter byte fails the checksum") {
        bytes[bytes.size() / 2] ^= 0x40;
        CHECK_THROWS_WITH(deserialize_model(bytes),
                          Catch::Matchers::ContainsSubstring("checksum"));
    }
    SECTION("truncation") {
        bytes.resize(bytes.size() - 12);
        CHECK_THROWS_WITH(deserialize_model(bytes),
                          Catch::Matchers::ContainsSubstring("truncated"));
    }
    SECTION("trailing garbage") {
        bytes.push_back(0);
        CHECK_THROWS_WITH(deserialize_model(bytes),
                          Catch::Matchers::ContainsSubstring("trailing"));
    }
    SECTION("corrupt JSON header") {
        // header starts at offset 10
        bytes[12] = '}';
        CHECK_THROWS_AS(deserialize_model(bytes), std::runtime_error);
    }
}

TEST_CASE("PPM encode/decode round-trips bitwise") {
    Tensor rgb({3, 2, 3});
    for (size_t i = 0; i < rgb.data.size(); ++i)
        rgb.data[i] = static_cast<double>((i * 37) % 256) / 255.0;  // grid-aligned values
    auto bytes = encode_ppm(rgb);
    Tensor back = decode_ppm(bytes);
    CHECK(back.data == rgb.data);
    CHECK(encode_ppm(back) == bytes);
    CHECK_THROWS_AS(encode_ppm(Tensor({2, 2, 2})), std::invalid_argument);
}

TEST_CASE("PPM header parsing: comments accepted, malformed rejected") {
    const std::string with_comment = "P6\n# a comment\n2 1\n255\n" + std::string(6, '\x7f');
    Tensor t = decode_ppm(std::vector<uint8_t>(with_comment.begin(), with_comment.end()));
    CHECK(t.shape == std::vector<int>{3, 1, 2});
    CHECK(t.data[0] == Catch::Approx(127.0 / 255.0));

    auto reject = [](const std::string& s, const char* why) {
        INFO(why);
        CHECK_THROWS_WITH(decode_ppm(std::vector<uint8_t>(s.begin(), s.end())),
                          Catch::Matchers::ContainsSubstring("rejected"));
    };
    reject("P5\n2 1\n255\n" + std::string(6, 'a'), "bad magic");
    reject("P6\n2 1\n65535\n" + std::string(6, 'a'), "wrong maxval");
    reject("P6\n2 1\n255\n" + std::string(3, 'a'), "short pixel data");
    reject("P6\n2\n", "incomplete header");
}

TEST_CASE("DMAP matches the hand-built byte fixture") {
    // 1x2 map: depth 1.0 valid, invalid (NaN) second pixel
    Tensor d({1, 2}, {1.0, 123.0});
    auto bytes = encode_dmap(d, {1, 0});
    std::vector<uint8_t> want{'D', 'M', 'P', '1', 1, 0, 0, 0, 2, 0, 0, 0};
    const float one = 1.0f, nanf = std::numeric_limits<float>::quiet_NaN();
    uint8_t buf[4];
    std::memcpy(buf, &one, 4);
    want.insert(want.end(), buf, buf + 4);
    std::memcpy(buf, &nanf, 4);
    want.insert(want.end(), buf, buf + 4);
    CHECK(bytes == want);

    auto [back, mask] = decode_dmap(bytes);
    CHECK(back.shape == std::vector<int>{1, 2});
    CHECK(back.data[0] == 1.0);
    CHECK(mask == std::vector<uint8_t>{1, 0});
}

TEST_CASE("DMAP round-trips float32 depths bitwise") {
    Tensor d({3, 4});
    std::vector<uint8_t> mask(12, 1);
    for (size_t i = 0; i < d.data.size(); ++i) {
        d.data[i] = static_cast<double>(static_cast<float>(0.37 * static_cast<double>(i) + 1.0));
        if (i % 5 == 0) mask[i] = 0;
    }
    auto bytes = encode_dmap(d, mask);
    auto [back, bmask] = decode_dmap(bytes);
    CHECK(bmask == mask);
    for (size_t i = 0; i < d.data.size(); ++i)
        if (mask[i]) CHECK(back.data[i] == d.data[i]);
    CHECK(encode_dmap(back, bmask) == bytes);
}

TEST_CASE("DMAP rejection diagnostics") {
    Tensor d({2, 2}, {1, 2, 3, 4});
    auto bytes = encode_dmap(d, {1, 1, 1, 1});
    SECTION("bad magic") {
        bytes[3] = '2';
        CHECK_THROWS_WITH(decode_dmap(bytes), Catch::Matchers::ContainsSubstring("magic"));
    }
    SECTION("truncated payload") {
        bytes.resize(bytes.size() - 3);
        CHECK_THROWS_WITH(decode_dmap(bytes), Catch::Matchers::ContainsSubstring("short"));
    }
    SECTION("implausible dimensions") {
        bytes[4] = 0xff;
        bytes[5] = 0xff;
        bytes[6] = 0xff;
        bytes[7] = 0xff;
        CHECK_THROWS_AS(decode_dmap(bytes), std::runtime_error);
    }
    CHECK_THROWS_AS(encode_dmap(d, {1, 1}), std::invalid_argument);
}

TEST_CASE("falsecolor keeps invalid pixels black and output in range") {
    Tensor d({1, 3}, {1.0, 5.0, 10.0});
    Tensor rgb = depth_to_falsecolor(d, {1, 0, 1}, 1.0, 10.0);
    CHECK(rgb.shape == std::vector<int>{3, 1, 3});
    for (int c = 0; c < 3; ++c) CHECK(rgb.data[static_cast<size_t>(c * 3 + 1)] == 0.0);
    for (double v : rgb.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}
