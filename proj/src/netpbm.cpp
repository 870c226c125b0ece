#include <cstdio>
#include <fstream>
#include <string>

#include "usfg/image.hpp"

namespace usfg {

namespace {

struct Cursor {
    const std::vector<uint8_t>& bytes;
    size_t pos = 0;

    bool eof() const { return pos >= bytes.size(); }
    uint8_t peek() const { return bytes[pos]; }

    void skip_ws_and_comments() {
        while (!eof()) {
            uint8_t c = peek();
            if (c == '#') {
                while (!eof() && peek() != '\n') ++pos;
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                ++pos;
            } else {
                break;
            }
        }
    }

    int read_uint() {
        skip_ws_and_comments();
        if (eof() || peek() < '0' || peek() > '9')
            throw DecodeError("netpbm: expected integer in header", pos);
        long v = 0;
        while (!eof() && peek() >= '0' && peek() <= '9') {
            v = v * 10 + (peek() - '0');
            if (v > 1 << 24) throw DecodeError("netpbm: header value out of range", pos);
            ++pos;
        }
        return static_cast<int>(v);
    }
};

}  // namespace

Image decode_netpbm(const std::vector<uint8_t>& bytes) {
    Cursor cur{bytes};
    if (bytes.size() < 2 || bytes[0] != 'P')
        throw DecodeError("netpbm: missing magic", 0);
    int channels;
    if (bytes[1] == '5') {
        channels = 1;
    } else if (bytes[1] == '6') {
        channels = 3;
    } else {
        throw DecodeError("netpbm: unsupported magic (only P5/P6)", 1);
    }
    cur.pos = 2;
    int w = cur.read_uint();
    int h = cur.read_uint();
    int maxval = cur.read_uint();
    if (w < 1 || h < 1) throw DecodeError("netpbm: zero dimension", cur.pos);
    if (maxval != 255) throw DecodeError("netpbm: maxval must be 255", cur.pos);
    // Exactly one whitespace byte separates the header from the payload.
    if (cur.eof()) throw DecodeError("netpbm: truncated after maxval", cur.pos);
    uint8_t sep = cur.peek();
    if (sep != ' ' && sep != '\t' && sep != '\r' && sep != '\n')
        throw DecodeError("netpbm: expected whitespace before payload", cur.pos);
    ++cur.pos;

    size_t need = static_cast<size_t>(w) * h * channels;
    if (bytes.size() - cur.pos < need)
        throw DecodeError("netpbm: truncated payload", bytes.size());

    Image img(w, h, channels);
    std::copy(bytes.begin() + cur.pos, bytes.begin() + cur.pos + need, img.data.begin());
    return img;
}

static std::vector<uint8_t> encode_raw(int w, int h, int channels,
                                       const std::vector<uint8_t>& data) {
    std::string header = (channels == 1 ? "P5\n" : "P6\n") + std::to_string(w) + " " +
                         std::to_string(h) + "\n255\n";
    std::vector<uint8_t> out;
    out.reserve(header.size() + data.size());
    out.insert(out.end(), header.begin(), header.end());
    out.insert(out.end(), data.begin(), data.end());
    return out;
}

std::vector<uint8_t> encode_netpbm(const Image& img) {
    return encode_raw(img.width, img.height, img.channels, img.data);
}

std::vector<uint8_t> encode_netpbm(const SoftMask& mask) {
    return encode_raw(mask.width, mask.height, 1, mask.data);
}

SoftMask to_softmask(const Image& gray) {
    if (gray.channels != 1) throw ArgumentError("to_softmask: expected 1-channel image");
    SoftMask m(gray.width, gray.height);
    m.data = gray.data;
    return m;
}

Image to_image(const SoftMask& mask) {
    Image img(mask.width, mask.height, 1);
    img.data = mask.data;
    return img;
}

static std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                               std::istreambuf_iterator<char>());
    return bytes;
}

static void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("short write to " + path);
}

Image read_image(const std::string& path) { return decode_netpbm(read_file(path)); }

SoftMask read_mask(const std::string& path) {
    Image img = decode_netpbm(read_file(path));
    return to_softmask(img);
}

void write_image(const std::string& path, const Image& img) {
    write_file(path, encode_netpbm(img));
}

void write_mask(const std::string& path, const SoftMask& mask) {
    write_file(path, encode_netpbm(mask));
}

}  // namespace usfg
