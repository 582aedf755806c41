#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "handcontact/error.hpp"
#include "handcontact/render.hpp"

namespace hc::render {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// next whitespace-delimited token, treating '#' as comment-to-eol
std::string pgm_token(std::FILE* f, const std::string& path) {
    std::string tok;
    int c;
    while ((c = std::fgetc(f)) != EOF) {
        if (c == '#') {
            while ((c = std::fgetc(f)) != EOF && c != '\n') {}
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(static_cast<char>(c));
    }
    if (tok.empty()) throw ParseError(path + ": truncated header");
    return tok;
}

long pgm_int(std::FILE* f, const std::string& path) {
    const std::string tok = pgm_token(f, path);
    std::size_t used = 0;
    long v = 0;
    try {
        v = std::stol(tok, &used);
    } catch (const std::exception&) {
        throw ParseError(path + ": bad header field '" + tok + "'");
    }
    if (used != tok.size()) throw ParseError(path + ": bad header field '" + tok + "'");
    return v;
}

FilePtr open_or_throw(const std::string& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) throw ParseError(path + ": cannot open");
    return f;
}

void read_header(std::FILE* f, const std::string& path, long expect_maxval, int& w, int& h) {
    if (pgm_token(f, path) != "P5") throw ParseError(path + ": not a binary pgm");
    const long lw = pgm_int(f, path);
    const long lh = pgm_int(f, path);
    const long maxval = pgm_int(f, path);
    if (lw <= 0 || lh <= 0 || lw > 1 << 16 || lh > 1 << 16)
        throw ParseError(path + ": bad image size");
    if (maxval != expect_maxval)
        throw ParseError(path + ": maxval " + std::to_string(maxval) + ", expected " +
                         std::to_string(expect_maxval));
    w = static_cast<int>(lw);
    h = static_cast<int>(lh);
}

}  // namespace

Image quantize16(const Image& im) {
    Image out = im;
    for (double& v : out.pix) {
        const double c = std::clamp(v, 0.0, 1.0);
        const long q = std::lround(c * 65535.0);
        v = static_cast<double>(q) / 65535.0;
    }
    return out;
}

void write_pgm16(const std::string& path, const Image& im) {
    FilePtr f = open_or_throw(path, "wb");
    std::fprintf(f.get(), "P5\n%d %d\n65535\n", im.width, im.height);
    std::vector<unsigned char> bytes(im.pix.size() * 2);
    for (std::size_t i = 0; i < im.pix.size(); ++i) {
        const double c = std::clamp(im.pix[i], 0.0, 1.0);
        const long q = std::lround(c * 65535.0);
        bytes[2 * i] = static_cast<unsigned char>(q >> 8);
        bytes[2 * i + 1] = static_cast<unsigned char>(q & 0xff);
    }
    if (std::fwrite(bytes.data(), 1, bytes.size(), f.get()) != bytes.size())
        throw ParseError(path + ": short write");
}

Image read_pgm16(const std::string& path) {
    FilePtr f = open_or_throw(path, "rb");
    int w = 0, h = 0;
    read_header(f.get(), path, 65535, w, h);
    Image im(w, h);
    std::vector<unsigned char> bytes(im.pix.size() * 2);
    if (std::fread(bytes.data(), 1, bytes.size(), f.get()) != bytes.size())
        throw ParseError(path + ": truncated pixel data");
    for (std::size_t i = 0; i < im.pix.size(); ++i) {
        const unsigned v = (static_cast<unsigned>(bytes[2 * i]) << 8) | bytes[2 * i + 1];
        im.pix[i] = static_cast<double>(v) / 65535.0;
    }
    return im;
}

void write_mask_pgm(const std::string& path, const Image& mask) {
    FilePtr f = open_or_throw(path, "wb");
    std::fprintf(f.get(), "P5\n%d %d\n255\n", mask.width, mask.height);
    std::vector<unsigned char> bytes(mask.pix.size());
    for (std::size_t i = 0; i < mask.pix.size(); ++i)
        bytes[i] = mask.pix[i] > 0.5 ? 255 : 0;
    if (std::fwrite(bytes.data(), 1, bytes.size(), f.get()) != bytes.size())
        throw ParseError(path + ": short write");
}

Image read_mask_pgm(const std::string& path) {
    FilePtr f = open_or_throw(path, "rb");
    int w = 0, h = 0;
    read_header(f.get(), path, 255, w, h);
    Image im(w, h);
    std::vector<unsigned char> bytes(im.pix.size());
    if (std::fread(bytes.data(), 1, bytes.size(), f.get()) != bytes.size())
        throw ParseError(path + ": truncated pixel data");
    for (std::size_t i = 0; i < im.pix.size(); ++i) im.pix[i] = bytes[i] ? 1.0 : 0.0;
    return im;
}

}  // namespace hc::render
