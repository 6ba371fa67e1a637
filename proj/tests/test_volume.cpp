#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include "drt/phantom.hpp"
#include "drt/random.hpp"
#include "drt/volume.hpp"
#include "temp_dir.hpp"

using namespace drt;

namespace {

VolumeHeader header(Dims d, Encoding e, ValueKind k = ValueKind::grayscale, double vs = 1.0) {
    VolumeHeader h;
    h.dims = d;
    h.voxel_size_um = vs;
    h.value_kind = k;
    h.element_encoding = e;
    return h;
}

void write_bytes(const std::filesystem::path& p, const std::vector<unsigned char>& b) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(b.data()), std::streamsize(b.size()));
}

std::vector<unsigned char> read_bytes(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace

TEST(Volume, DecodesU8Bytes) {
    TempDir dir;
    write_bytes(dir / "v.raw", {0, 1, 2, 3, 4, 5, 6, 7});
    write_text_file(dir / "v.json", to_json(header({2, 2, 2}, Encoding::u8)).dump());
    const auto v = load_volume<std::uint16_t>(dir / "v.raw", dir / "v.json");
    ASSERT_EQ(v.size(), 8u);
    for (std::uint16_t i = 0; i < 8; ++i) EXPECT_EQ(v[i], i);
}

TEST(Volume, ShortFileIsSizeMismatch) {
    TempDir dir;
    write_bytes(dir / "v.raw", {1, 2, 3});
    write_text_file(dir / "v.json", to_json(header({2, 2, 2}, Encoding::u8)).dump());
    try {
        load_volume<float>(dir / "v.raw", dir / "v.json");
        FAIL() << "expected SizeMismatch";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::SizeMismatch);
    }
}

TEST(Volume, BadHeaders) {
    TempDir dir;
    write_bytes(dir / "v.raw", {1});
    auto expect_bad = [&](const std::string& text) {
        write_text_file(dir / "v.json", text);
        try {
            load_volume<float>(dir / "v.raw", dir / "v.json");
            ADD_FAILURE() << "accepted " << text;
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::BadHeader) << text;
        }
    };
    expect_bad(R"({"voxel_size_um":1,"value_kind":"label","element_encoding":"u8","byte_order":"little"})");
    expect_bad(R"({"dims":[1,1,0],"voxel_size_um":1,"value_kind":"label","element_encoding":"u8","byte_order":"little"})");
    expect_bad(R"({"dims":[1,1,1],"voxel_size_um":-2,"value_kind":"label","element_encoding":"u8","byte_order":"little"})");
    expect_bad(R"({"dims":[1,1,1],"voxel_size_um":1,"value_kind":"label","element_encoding":"u32","byte_order":"little"})");
    expect_bad(R"({"dims":[1,1,1],"voxel_size_um":[1,1,2],"value_kind":"label","element_encoding":"u8","byte_order":"little"})");
    expect_bad("not json");
}

TEST(Volume, SingleVoxelU8File) {
    TempDir dir;
    Volume<std::uint8_t> v(header({1, 1, 1}, Encoding::u8), 42);
    save_volume(v, dir / "v.raw", dir / "v.json");
    EXPECT_EQ(read_bytes(dir / "v.raw"), std::vector<unsigned char>{0x2A});
}

TEST(Volume, F32RoundTripIsBitwise) {
    TempDir dir;
    Rng rng(7);
    for (auto order : {ByteOrder::little, ByteOrder::big}) {
        auto h = header({8, 8, 8}, Encoding::f32);
        h.byte_order = order;
        GrayVolume v(h);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = float(rng.normal() * 1e3);
        save_volume(v, dir / "v.raw", dir / "v.json");
        const auto back = load_volume<float>(dir / "v.raw", dir / "v.json");
        ASSERT_EQ(back.header(), v.header());
        EXPECT_EQ(std::memcmp(back.data().data(), v.data().data(), v.size() * sizeof(float)), 0);
    }
}

TEST(Volume, BigEndianBytesOnDisk) {
    TempDir dir;
    auto h = header({2, 1, 1}, Encoding::u16);
    h.byte_order = ByteOrder::big;
    LabelVolume v(h);
    v[0] = 0x0102;
    v[1] = 0xA0B0;
    save_volume(v, dir / "v.raw", dir / "v.json");
    EXPECT_EQ(read_bytes(dir / "v.raw"), (std::vector<unsigned char>{0x01, 0x02, 0xA0, 0xB0}));
}

TEST(Volume, U16RampRoundTripAndVoxelSize) {
    TempDir dir;
    LabelVolume v(header({16, 16, 16}, Encoding::u16, ValueKind::label, 28.0));
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::uint16_t(i);
    save_volume(v, dir / "v.raw", dir / "v.json");
    const auto back = load_volume<std::uint16_t>(dir / "v.raw", dir / "v.json");
    EXPECT_TRUE(back == v);
    EXPECT_EQ(back.voxel_size_um(), 28.0);
}

TEST(Volume, IndexingIsXFastest) {
    TempDir dir;
    const Dims d{5, 4, 3};
    Volume<float> v(header(d, Encoding::f32));
    for (std::size_t z = 0; z < d.nz; ++z)
        for (std::size_t y = 0; y < d.ny; ++y)
            for (std::size_t x = 0; x < d.nx; ++x) v(x, y, z) = float(x + 100 * y + 10000 * z);
    save_volume(v, dir / "v.raw", dir / "v.json");
    const auto bytes = read_bytes(dir / "v.raw");
    for (std::size_t z = 0; z < d.nz; ++z)
        for (std::size_t y = 0; y < d.ny; ++y)
            for (std::size_t x = 0; x < d.nx; ++x) {
                float f;
                std::memcpy(&f, bytes.data() + 4 * (x + d.nx * (y + d.ny * z)), 4);
                EXPECT_EQ(f, float(x + 100 * y + 10000 * z));
            }
}

TEST(Volume, UnrepresentableValueRejectedOnSave) {
    TempDir dir;
    GrayVolume v(header({1, 1, 1}, Encoding::u8));
    v[0] = 300.0f;
    EXPECT_THROW(save_volume(v, dir / "v.raw", dir / "v.json"), Error);
}

TEST(Phantom, SingleSphereMatchesExplicitCount) {
    PhantomParams p;
    p.radii = {5};
    const auto ph = make_phantom(PhantomKind::single_sphere, {32, 32, 32}, p);
    std::size_t expected = 0;
    for (int z = 0; z < 32; ++z)
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x) {
                const int dx = x - 16, dy = y - 16, dz = z - 16;
                expected += dx * dx + dy * dy + dz * dz <= 25;
            }
    std::size_t pores = 0;
    for (auto l : ph.labels.data()) pores += l == 1;
    EXPECT_EQ(pores, expected);
    EXPECT_NEAR(double(pores), 4.0 / 3.0 * std::numbers::pi * 125.0, 30.0);
}

TEST(Phantom, NoiselessHasTwoIntensities) {
    PhantomParams p;
    p.radii = {4, 3};
    p.counts = {3, 4};
    const auto ph = make_phantom(PhantomKind::sphere_pack, {32, 32, 32}, p);
    std::set<float> values(ph.gray.data().begin(), ph.gray.data().end());
    EXPECT_EQ(values, (std::set<float>{50.0f, 200.0f}));
}

TEST(Phantom, LayeredHasThreeLabels) {
    PhantomParams p;
    p.layers = {3, 4, 5};
    const auto ph = make_phantom(PhantomKind::layered, {8, 8, 12}, p);
    std::set<std::uint16_t> labels(ph.labels.data().begin(), ph.labels.data().end());
    EXPECT_EQ(labels.size(), 3u);
}

TEST(Phantom, PoreFractionNearAnalytic) {
    PhantomParams p;
    p.radii = {8, 6, 5};
    p.counts = {6, 8, 10};
    p.seed = 11;
    const auto ph = make_phantom(PhantomKind::sphere_pack, {64, 64, 64}, p);
    double analytic = 0;
    for (const auto& s : ph.spheres) analytic += 4.0 / 3.0 * std::numbers::pi * s.r * s.r * s.r;
    analytic /= 64.0 * 64.0 * 64.0;
    EXPECT_NEAR(ph.analytic_pore_fraction, analytic, 1e-12);
    EXPECT_NEAR(ph.pore_fraction, analytic, 0.01);
}

TEST(Phantom, OversizedRadiusIsBadParams) {
    PhantomParams p;
    p.radii = {20};
    try {
        make_phantom(PhantomKind::single_sphere, {16, 16, 16}, p);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::BadParams);
    }
}

TEST(Phantom, SameSeedSameVolume) {
    PhantomParams p;
    p.radii = {4};
    p.counts = {5};
    p.noise_sigma = 10;
    const auto a = make_phantom(PhantomKind::sphere_pack, {24, 24, 24}, p);
    const auto b = make_phantom(PhantomKind::sphere_pack, {24, 24, 24}, p);
    EXPECT_TRUE(a.gray == b.gray);
    EXPECT_TRUE(a.labels == b.labels);
}
