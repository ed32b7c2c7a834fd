#include "ctgen/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>

namespace ctgen::metrics {

namespace {

// string.punctuation from the official evaluator.
bool is_ascii_punct(char32_t c) {
    static const std::string kSet = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~";
    return c < 0x80 && kSet.find(static_cast<char>(c)) != std::string::npos;
}

// Unicode general category P* ranges above ASCII (generated from the Unicode
// character database).
struct Range { char32_t lo, hi; };
constexpr std::array<Range, 176> kUnicodePunct{{
    {0xA1, 0xA1}, {0xA7, 0xA7}, {0xAB, 0xAB}, {0xB6, 0xB7},
    {0xBB, 0xBB}, {0xBF, 0xBF}, {0x37E, 0x37E}, {0x387, 0x387},
    {0x55A, 0x55F}, {0x589, 0x58A}, {0x5BE, 0x5BE}, {0x5C0, 0x5C0},
    {0x5C3, 0x5C3}, {0x5C6, 0x5C6}, {0x5F3, 0x5F4}, {0x609, 0x60A},
    {0x60C, 0x60D}, {0x61B, 0x61B}, {0x61E, 0x61F}, {0x66A, 0x66D},
    {0x6D4, 0x6D4}, {0x700, 0x70D}, {0x7F7, 0x7F9}, {0x830, 0x83E},
    {0x85E, 0x85E}, {0x964, 0x965}, {0x970, 0x970}, {0x9FD, 0x9FD},
    {0xA76, 0xA76}, {0xAF0, 0xAF0}, {0xC77, 0xC77}, {0xC84, 0xC84},
    {0xDF4, 0xDF4}, {0xE4F, 0xE4F}, {0xE5A, 0xE5B}, {0xF04, 0xF12},
    {0xF14, 0xF14}, {0xF3A, 0xF3D}, {0xF85, 0xF85}, {0xFD0, 0xFD4},
    {0xFD9, 0xFDA}, {0x104A, 0x104F}, {0x10FB, 0x10FB}, {0x1360, 0x1368},
    {0x1400, 0x1400}, {0x166E, 0x166E}, {0x169B, 0x169C}, {0x16EB, 0x16ED},
    {0x1735, 0x1736}, {0x17D4, 0x17D6}, {0x17D8, 0x17DA}, {0x1800, 0x180A},
    {0x1944, 0x1945}, {0x1A1E, 0x1A1F}, {0x1AA0, 0x1AA6}, {0x1AA8, 0x1AAD},
    {0x1B5A, 0x1B60}, {0x1BFC, 0x1BFF}, {0x1C3B, 0x1C3F}, {0x1C7E, 0x1C7F},
    {0x1CC0, 0x1CC7}, {0x1CD3, 0x1CD3}, {0x2010, 0x2027}, {0x2030, 0x2043},
    {0x2045, 0x2051}, {0x2053, 0x205E}, {0x207D, 0x207E}, {0x208D, 0x208E},
    {0x2308, 0x230B}, {0x2329, 0x232A}, {0x2768, 0x2775}, {0x27C5, 0x27C6},
    {0x27E6, 0x27EF}, {0x2983, 0x2998}, {0x29D8, 0x29DB}, {0x29FC, 0x29FD},
    {0x2CF9, 0x2CFC}, {0x2CFE, 0x2CFF}, {0x2D70, 0x2D70}, {0x2E00, 0x2E2E},
    {0x2E30, 0x2E4F}, {0x2E52, 0x2E52}, {0x3001, 0x3003}, {0x3008, 0x3011},
    {0x3014, 0x301F}, {0x3030, 0x3030}, {0x303D, 0x303D}, {0x30A0, 0x30A0},
    {0x30FB, 0x30FB}, {0xA4FE, 0xA4FF}, {0xA60D, 0xA60F}, {0xA673, 0xA673},
    {0xA67E, 0xA67E}, {0xA6F2, 0xA6F7}, {0xA874, 0xA877}, {0xA8CE, 0xA8CF},
    {0xA8F8, 0xA8FA}, {0xA8FC, 0xA8FC}, {0xA92E, 0xA92F}, {0xA95F, 0xA95F},
    {0xA9C1, 0xA9CD}, {0xA9DE, 0xA9DF}, {0xAA5C, 0xAA5F}, {0xAADE, 0xAADF},
    {0xAAF0, 0xAAF1}, {0xABEB, 0xABEB}, {0xFD3E, 0xFD3F}, {0xFE10, 0xFE19},
    {0xFE30, 0xFE52}, {0xFE54, 0xFE61}, {0xFE63, 0xFE63}, {0xFE68, 0xFE68},
    {0xFE6A, 0xFE6B}, {0xFF01, 0xFF03}, {0xFF05, 0xFF0A}, {0xFF0C, 0xFF0F},
    {0xFF1A, 0xFF1B}, {0xFF1F, 0xFF20}, {0xFF3B, 0xFF3D}, {0xFF3F, 0xFF3F},
    {0xFF5B, 0xFF5B}, {0xFF5D, 0xFF5D}, {0xFF5F, 0xFF65}, {0x10100, 0x10102},
    {0x1039F, 0x1039F}, {0x103D0, 0x103D0}, {0x1056F, 0x1056F}, {0x10857, 0x10857},
    {0x1091F, 0x1091F}, {0x1093F, 0x1093F}, {0x10A50, 0x10A58}, {0x10A7F, 0x10A7F},
    {0x10AF0, 0x10AF6}, {0x10B39, 0x10B3F}, {0x10B99, 0x10B9C}, {0x10EAD, 0x10EAD},
    {0x10F55, 0x10F59}, {0x11047, 0x1104D}, {0x110BB, 0x110BC}, {0x110BE, 0x110C1},
    {0x11140, 0x11143}, {0x11174, 0x11175}, {0x111C5, 0x111C8}, {0x111CD, 0x111CD},
    {0x111DB, 0x111DB}, {0x111DD, 0x111DF}, {0x11238, 0x1123D}, {0x112A9, 0x112A9},
    {0x1144B, 0x1144F}, {0x1145A, 0x1145B}, {0x1145D, 0x1145D}, {0x114C6, 0x114C6},
    {0x115C1, 0x115D7}, {0x11641, 0x11643}, {0x11660, 0x1166C}, {0x1173C, 0x1173E},
    {0x1183B, 0x1183B}, {0x11944, 0x11946}, {0x119E2, 0x119E2}, {0x11A3F, 0x11A46},
    {0x11A9A, 0x11A9C}, {0x11A9E, 0x11AA2}, {0x11C41, 0x11C45}, {0x11C70, 0x11C71},
    {0x11EF7, 0x11EF8}, {0x11FFF, 0x11FFF}, {0x12470, 0x12474}, {0x16A6E, 0x16A6F},
    {0x16AF5, 0x16AF5}, {0x16B37, 0x16B3B}, {0x16B44, 0x16B44}, {0x16E97, 0x16E9A},
    {0x16FE2, 0x16FE2}, {0x1BC9F, 0x1BC9F}, {0x1DA87, 0x1DA8B}, {0x1E95E, 0x1E95F},
}};

bool is_punct(char32_t c) {
    if (c < 0x80) return is_ascii_punct(c);
    auto it = std::upper_bound(kUnicodePunct.begin(), kUnicodePunct.end(), c,
                               [](char32_t v, const Range& r) { return v < r.lo; });
    if (it == kUnicodePunct.begin()) return false;
    --it;
    return c >= it->lo && c <= it->hi;
}

// Minimal UTF-8 decode; invalid bytes pass through as single codepoints.
char32_t decode_utf8(std::string_view s, size_t& i) {
    unsigned char c = s[i];
    if (c < 0x80) {
        ++i;
        return c;
    }
    int extra = 0;
    char32_t cp = 0;
    if ((c & 0xE0) == 0xC0) {
        cp = c & 0x1F;
        extra = 1;
    } else if ((c & 0xF0) == 0xE0) {
        cp = c & 0x0F;
        extra = 2;
    } else if ((c & 0xF8) == 0xF0) {
        cp = c & 0x07;
        extra = 3;
    } else {
        ++i;
        return c;
    }
    for (int k = 1; k <= extra; ++k) {
        if (i + k >= s.size() || (static_cast<unsigned char>(s[i + k]) & 0xC0) != 0x80) {
            ++i;
            return c;
        }
        cp = (cp << 6) | (static_cast<unsigned char>(s[i + k]) & 0x3F);
    }
    i += extra + 1;
    return cp;
}

void encode_utf8(char32_t cp, std::string& out) {
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        out += static_cast<char>(0xF0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
}

bool is_article(const std::string& token) {
    return token == "a" || token == "an" || token == "the";
}

size_t overlap_count(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::map<std::string, size_t> counts;
    for (const auto& t : a) ++counts[t];
    size_t overlap = 0;
    for (const auto& t : b) {
        auto it = counts.find(t);
        if (it != counts.end() && it->second > 0) {
            --it->second;
            ++overlap;
        }
    }
    return overlap;
}

double f1_from_tokens(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
    if (pred.empty() && gold.empty()) return 1.0;
    size_t overlap = overlap_count(pred, gold);
    if (overlap == 0) return 0.0;
    double precision = 1.0 * static_cast<double>(overlap) / static_cast<double>(pred.size());
    double recall = 1.0 * static_cast<double>(overlap) / static_cast<double>(gold.size());
    return (2 * precision * recall) / (precision + recall);
}

}  // namespace

std::vector<std::string> normalize_answer(std::string_view text) {
    // lowercase + strip punctuation in one pass over codepoints
    std::string cleaned;
    cleaned.reserve(text.size());
    size_t i = 0;
    while (i < text.size()) {
        char32_t cp = decode_utf8(text, i);
        if (is_punct(cp)) continue;
        if (cp < 0x80 && cp >= 'A' && cp <= 'Z') cp = cp - 'A' + 'a';
        encode_utf8(cp, cleaned);
    }
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&]() {
        if (!current.empty()) {
            if (!is_article(current)) tokens.push_back(current);
            current.clear();
        }
    };
    for (char c : cleaned) {
        if (std::isspace(static_cast<unsigned char>(c)))
            flush();
        else
            current += c;
    }
    flush();
    return tokens;
}

double squad_f1(std::string_view prediction, const std::vector<std::string>& golds) {
    if (golds.empty()) throw EmptyGolds();
    auto pred_tokens = normalize_answer(prediction);
    double best = 0.0;
    for (const auto& gold : golds)
        best = std::max(best, f1_from_tokens(pred_tokens, normalize_answer(gold)));
    return best;
}

double macro_f1(const std::vector<int>& preds, const std::vector<int>& golds, int n_labels) {
    if (preds.size() != golds.size()) throw LengthMismatch();
    if (preds.empty()) throw MetricsError("macro_f1 requires at least one example");
    std::vector<size_t> tp(n_labels, 0), fp(n_labels, 0), fn(n_labels, 0);
    for (size_t i = 0; i < preds.size(); ++i) {
        int p = preds[i], g = golds[i];
        if (p < 0 || p >= n_labels || g < 0 || g >= n_labels)
            throw MetricsError("label index out of range");
        if (p == g) {
            ++tp[p];
        } else {
            ++fp[p];
            ++fn[g];
        }
    }
    double total = 0.0;
    for (int label = 0; label < n_labels; ++label) {
        double denom_p = static_cast<double>(tp[label] + fp[label]);
        double denom_r = static_cast<double>(tp[label] + fn[label]);
        double precision = denom_p > 0 ? tp[label] / denom_p : 0.0;
        double recall = denom_r > 0 ? tp[label] / denom_r : 0.0;
        double f1 = (precision + recall) > 0 ? (2 * precision * recall) / (precision + recall) : 0.0;
        total += f1;
    }
    return total / n_labels;
}

double micro_f1(const std::vector<int>& preds, const std::vector<int>& golds, int n_labels) {
    if (preds.size() != golds.size()) throw LengthMismatch();
    if (preds.empty()) throw MetricsError("micro_f1 requires at least one example");
    size_t tp = 0;
    for (size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] < 0 || preds[i] >= n_labels || golds[i] < 0 || golds[i] >= n_labels)
            throw MetricsError("label index out of range");
        if (preds[i] == golds[i]) ++tp;
    }
    // Single-label multi-class: micro precision == micro recall == accuracy.
    return static_cast<double>(tp) / static_cast<double>(preds.size());
}

std::pair<double, double> mean_stderr(const std::vector<double>& values) {
    if (values.size() < 2) throw TooFewValues();
    double sum = 0.0;
    for (double v : values) sum += v;
    double mean = sum / static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    double sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
    return {mean, sd / std::sqrt(static_cast<double>(values.size()))};
}

}  // namespace ctgen::metrics
