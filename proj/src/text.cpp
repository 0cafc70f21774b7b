#include "igaiva/text.hpp"

namespace igaiva::text {

std::u32string decode_utf8(std::string_view input) {
    std::u32string out;
    out.reserve(input.size());
    std::size_t i = 0;
    const auto n = input.size();
    while (i < n) {
        const auto c = static_cast<unsigned char>(input[i]);
        char32_t cp;
        std::size_t len;
        if (c < 0x80) {
            cp = c;
            len = 1;
        } else if ((c & 0xe0) == 0xc0) {
            cp = c & 0x1f;
            len = 2;
        } else if ((c & 0xf0) == 0xe0) {
            cp = c & 0x0f;
            len = 3;
        } else if ((c & 0xf8) == 0xf0) {
            cp = c & 0x07;
            len = 4;
        } else {
            out.push_back(0xfffd);
            ++i;
            continue;
        }
        if (i + len > n) {
            out.push_back(0xfffd);
            break;
        }
        bool ok = true;
        for (std::size_t k = 1; k < len; ++k) {
            const auto cc = static_cast<unsigned char>(input[i + k]);
            if ((cc & 0xc0) != 0x80) {
                ok = false;
                break;
            }
            cp = (cp << 6) | (cc & 0x3f);
        }
        if (!ok) {
            out.push_back(0xfffd);
            ++i;
            continue;
        }
        out.push_back(cp);
        i += len;
    }
    return out;
}

void append_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xc0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xe0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
    } else {
        out.push_back(static_cast<char>(0xf0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3f)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3f)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3f)));
    }
}

std::string encode_utf8(std::u32string_view input) {
    std::string out;
    out.reserve(input.size());
    for (char32_t cp : input) append_utf8(out, cp);
    return out;
}

char32_t to_lower(char32_t cp) {
    if (cp >= U'A' && cp <= U'Z') return cp + 32;
    if (cp < 0xc0) return cp;
    // Latin-1 supplement, excluding the multiplication sign.
    if (cp <= 0xde) return cp == 0xd7 ? cp : cp + 32;
    // Latin Extended-A: mostly even upper / odd lower pairs.
    if (cp >= 0x100 && cp <= 0x137) return cp | 1;
    if (cp >= 0x139 && cp <= 0x148) return (cp & 1) ? cp + 1 : cp;
    if (cp >= 0x14a && cp <= 0x177) return cp | 1;
    if (cp == 0x178) return 0xff;
    if (cp >= 0x179 && cp <= 0x17e) return (cp & 1) ? cp + 1 : cp;
    // Greek.
    if (cp >= 0x391 && cp <= 0x3a9 && cp != 0x3a2) return cp + 32;
    // Cyrillic.
    if (cp >= 0x410 && cp <= 0x42f) return cp + 32;
    if (cp >= 0x400 && cp <= 0x40f) return cp + 80;
    return cp;
}

bool is_word_char(char32_t cp) {
    if (cp < 0x80) {
        return (cp >= U'a' && cp <= U'z') || (cp >= U'A' && cp <= U'Z') ||
               (cp >= U'0' && cp <= U'9') || cp == U'_';
    }
    if (cp == 0xaa || cp == 0xb5 || cp == 0xba) return true;
    if (cp >= 0xc0 && cp <= 0x24f) return cp != 0xd7 && cp != 0xf7;
    if (cp >= 0x370 && cp <= 0x3ff) return cp != 0x37e && cp != 0x387;
    if (cp >= 0x400 && cp <= 0x52f) return true;
    // General punctuation, symbols and replacement characters split words.
    if (cp >= 0x2000 && cp <= 0x2bff) return false;
    if (cp >= 0x3000 && cp <= 0x303f) return false;
    if (cp == 0xfffd || cp == 0xfeff) return false;
    return cp > 0x2e80;
}

std::string lowercase(std::string_view input) {
    auto cps = decode_utf8(input);
    for (auto& cp : cps) cp = to_lower(cp);
    return encode_utf8(cps);
}

}  // namespace igaiva::text
