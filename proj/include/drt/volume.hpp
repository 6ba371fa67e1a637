#pragma once

// Dense 3-D scalar volumes and their RAW + JSON sidecar file format.
//
// Voxel (x, y, z) lives at flat index x + nx * (y + ny * z); every module in
// the library assumes this x-fastest order.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "drt/error.hpp"

namespace drt {

enum class ValueKind { grayscale, label, distance, throat_size };
enum class Encoding { u8, u16, f32 };
enum class ByteOrder { little, big };

inline std::string to_string(ValueKind k) {
    switch (k) {
        case ValueKind::grayscale: return "grayscale";
        case ValueKind::label: return "label";
        case ValueKind::distance: return "distance";
        case ValueKind::throat_size: return "throat_size";
    }
    return "grayscale";
}
inline std::string to_string(Encoding e) {
    switch (e) {
        case Encoding::u8: return "u8";
        case Encoding::u16: return "u16";
        case Encoding::f32: return "f32";
    }
    return "f32";
}
inline std::string to_string(ByteOrder b) { return b == ByteOrder::little ? "little" : "big"; }

inline std::size_t element_width(Encoding e) {
    switch (e) {
        case Encoding::u8: return 1;
        case Encoding::u16: return 2;
        case Encoding::f32: return 4;
    }
    return 4;
}

struct Dims {
    std::size_t nx = 1, ny = 1, nz = 1;

    std::size_t count() const { return nx * ny * nz; }
    std::size_t min() const { return std::min({nx, ny, nz}); }
    bool operator==(const Dims&) const = default;
};

struct VolumeHeader {
    Dims dims;
    double voxel_size_um = 1.0;
    ValueKind value_kind = ValueKind::grayscale;
    Encoding element_encoding = Encoding::f32;
    ByteOrder byte_order = ByteOrder::little;

    void validate() const {
        if (dims.nx < 1 || dims.ny < 1 || dims.nz < 1)
            throw Error(ErrorCode::BadHeader, "dims must be positive");
        if (!(voxel_size_um > 0.0) || !std::isfinite(voxel_size_um))
            throw Error(ErrorCode::BadHeader, "voxel_size_um must be positive");
    }

    bool operator==(const VolumeHeader&) const = default;
};

inline nlohmann::json to_json(const VolumeHeader& h) {
    return nlohmann::json{{"dims", {h.dims.nx, h.dims.ny, h.dims.nz}},
                          {"voxel_size_um", h.voxel_size_um},
                          {"value_kind", to_string(h.value_kind)},
                          {"element_encoding", to_string(h.element_encoding)},
                          {"byte_order", to_string(h.byte_order)}};
}

inline VolumeHeader header_from_json(const nlohmann::json& j) {
    auto bad = [](const std::string& m) { return Error(ErrorCode::BadHeader, m); };
    if (!j.is_object()) throw bad("sidecar is not a JSON object");
    VolumeHeader h;

    const auto dims = j.find("dims");
    if (dims == j.end() || !dims->is_array() || dims->size() != 3)
        throw bad("'dims' must be an array of 3 integers");
    std::size_t d[3];
    for (int i = 0; i < 3; ++i) {
        const auto& e = (*dims)[i];
        if (!e.is_number_integer() || e.get<long long>() < 1) throw bad("'dims' entries must be positive integers");
        d[i] = e.get<std::size_t>();
    }
    h.dims = {d[0], d[1], d[2]};

    const auto vs = j.find("voxel_size_um");
    if (vs == j.end()) throw bad("missing 'voxel_size_um'");
    if (vs->is_number()) {
        h.voxel_size_um = vs->get<double>();
    } else if (vs->is_array() && vs->size() == 3 && (*vs)[0].is_number() && (*vs)[1].is_number() &&
               (*vs)[2].is_number()) {
        const double a = (*vs)[0], b = (*vs)[1], c = (*vs)[2];
        if (a != b || b != c) throw bad("anisotropic voxel spacing is not supported");
        h.voxel_size_um = a;
    } else {
        throw bad("'voxel_size_um' must be a number");
    }

    auto str_field = [&](const char* name) {
        const auto it = j.find(name);
        if (it == j.end() || !it->is_string()) throw bad(std::string("missing or non-string '") + name + "'");
        return it->get<std::string>();
    };
    const std::string kind = str_field("value_kind");
    if (kind == "grayscale") h.value_kind = ValueKind::grayscale;
    else if (kind == "label") h.value_kind = ValueKind::label;
    else if (kind == "distance") h.value_kind = ValueKind::distance;
    else if (kind == "throat_size") h.value_kind = ValueKind::throat_size;
    else throw bad("unknown value_kind '" + kind + "'");

    const std::string enc = str_field("element_encoding");
    if (enc == "u8") h.element_encoding = Encoding::u8;
    else if (enc == "u16") h.element_encoding = Encoding::u16;
    else if (enc == "f32") h.element_encoding = Encoding::f32;
    else throw bad("unknown element_encoding '" + enc + "'");

    const std::string order = str_field("byte_order");
    if (order == "little") h.byte_order = ByteOrder::little;
    else if (order == "big") h.byte_order = ByteOrder::big;
    else throw bad("unknown byte_order '" + order + "'");

    h.validate();
    return h;
}

template <class T>
class Volume {
public:
    using value_type = T;

    Volume() = default;

    explicit Volume(VolumeHeader header, T fill = T{}) : header_(header), data_(header.dims.count(), fill) {
        header_.validate();
    }

    Volume(VolumeHeader header, std::vector<T> data) : header_(header), data_(std::move(data)) {
        header_.validate();
        if (data_.size() != header_.dims.count())
            throw Error(ErrorCode::SizeMismatch, "data length does not match dims");
    }

    const VolumeHeader& header() const { return header_; }
    VolumeHeader& header() { return header_; }
    const Dims& dims() const { return header_.dims; }
    double voxel_size_um() const { return header_.voxel_size_um; }
    std::size_t size() const { return data_.size(); }

    std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
        return x + header_.dims.nx * (y + header_.dims.ny * z);
    }

    T& operator()(std::size_t x, std::size_t y, std::size_t z) { return data_[index(x, y, z)]; }
    const T& operator()(std::size_t x, std::size_t y, std::size_t z) const { return data_[index(x, y, z)]; }
    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }
    const std::vector<T>& values() const { return data_; }

    bool operator==(const Volume&) const = default;

private:
    VolumeHeader header_;
    std::vector<T> data_;
};

using GrayVolume = Volume<float>;
using LabelVolume = Volume<std::uint16_t>;

/// Header with the same geometry as `h` but a different kind/encoding.
inline VolumeHeader derived_header(const VolumeHeader& h, ValueKind kind, Encoding enc) {
    VolumeHeader out = h;
    out.value_kind = kind;
    out.element_encoding = enc;
    return out;
}

namespace detail {

template <class U>
U byteswap(U v) {
    static_assert(std::is_trivially_copyable_v<U>);
    unsigned char b[sizeof(U)];
    std::memcpy(b, &v, sizeof(U));
    std::reverse(b, b + sizeof(U));
    std::memcpy(&v, b, sizeof(U));
    return v;
}

inline bool needs_swap(ByteOrder order) {
    return (order == ByteOrder::little) != (std::endian::native == std::endian::little);
}

template <class Raw, class T>
void decode_into(const std::vector<char>& bytes, ByteOrder order, std::vector<T>& out) {
    const bool swap = needs_swap(order);
    for (std::size_t i = 0; i < out.size(); ++i) {
        Raw r;
        std::memcpy(&r, bytes.data() + i * sizeof(Raw), sizeof(Raw));
        if (swap) r = byteswap(r);
        if constexpr (std::is_integral_v<T> && std::is_floating_point_v<Raw>) {
            if (!(r >= 0) || r != std::floor(r) || r > static_cast<Raw>(std::numeric_limits<T>::max()))
                throw Error(ErrorCode::BadHeader, "f32 element is not a valid integer label");
        } else if constexpr (std::is_integral_v<T> && std::is_integral_v<Raw>) {
            if (r > std::numeric_limits<T>::max())
                throw Error(ErrorCode::BadHeader, "element exceeds target label range");
        }
        out[i] = static_cast<T>(r);
    }
}

template <class Raw, class T>
void encode_from(std::span<const T> in, ByteOrder order, std::vector<char>& bytes) {
    const bool swap = needs_swap(order);
    bytes.resize(in.size() * sizeof(Raw));
    for (std::size_t i = 0; i < in.size(); ++i) {
        const T v = in[i];
        if constexpr (std::is_integral_v<Raw>) {
            const double d = static_cast<double>(v);
            if (!(d >= 0) || d > std::numeric_limits<Raw>::max() || d != std::floor(d))
                throw Error(ErrorCode::BadParams, "value not representable in " +
                                                      std::string(sizeof(Raw) == 1 ? "u8" : "u16"));
        }
        Raw r = static_cast<Raw>(v);
        if (swap) r = byteswap(r);
        std::memcpy(bytes.data() + i * sizeof(Raw), &r, sizeof(Raw));
    }
}

} // namespace detail

inline VolumeHeader load_header(const std::filesystem::path& header_path) {
    std::ifstream in(header_path);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + header_path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::BadHeader, header_path.string() + ": " + e.what());
    }
    return header_from_json(j);
}

/// Reads a RAW blob described by a JSON sidecar and converts elements to T.
template <class T>
Volume<T> load_volume(const std::filesystem::path& raw_path, const std::filesystem::path& header_path) {
    const VolumeHeader h = load_header(header_path);
    std::ifstream in(raw_path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + raw_path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::size_t expected = h.dims.count() * element_width(h.element_encoding);
    if (bytes.size() != expected)
        throw Error(ErrorCode::SizeMismatch, raw_path.string() + " holds " + std::to_string(bytes.size()) +
                                                 " bytes, header requires " + std::to_string(expected));
    std::vector<T> data(h.dims.count());
    switch (h.element_encoding) {
        case Encoding::u8: detail::decode_into<std::uint8_t>(bytes, h.byte_order, data); break;
        case Encoding::u16: detail::decode_into<std::uint16_t>(bytes, h.byte_order, data); break;
        case Encoding::f32: detail::decode_into<float>(bytes, h.byte_order, data); break;
    }
    return Volume<T>(h, std::move(data));
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
    out << text;
    if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
}

/// Writes the RAW blob using the volume header's encoding and byte order.
template <class T>
void save_volume(const Volume<T>& v, const std::filesystem::path& raw_path, const std::filesystem::path& header_path) {
    const VolumeHeader& h = v.header();
    std::vector<char> bytes;
    switch (h.element_encoding) {
        case Encoding::u8: detail::encode_from<std::uint8_t>(v.data(), h.byte_order, bytes); break;
        case Encoding::u16: detail::encode_from<std::uint16_t>(v.data(), h.byte_order, bytes); break;
        case Encoding::f32: detail::encode_from<float>(v.data(), h.byte_order, bytes); break;
    }
    {
        std::ofstream out(raw_path, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + raw_path.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + raw_path.string());
    }
    write_text_file(header_path, to_json(h).dump(2) + "\n");
}

/// `foo.raw` -> `foo.json`.
inline std::filesystem::path sidecar_path(const std::filesystem::path& raw_path) {
    auto p = raw_path;
    p.replace_extension(".json");
    return p;
}

} // namespace drt
