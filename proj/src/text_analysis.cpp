#include "xlr/text_analysis.hpp"

#include <fstream>

#include <unicode/uchar.h>
#include <unicode/uscript.h>
#include <unicode/utf8.h>

#include "xlr/errors.hpp"
#include "xlr/hash.hpp"

namespace xlr {

namespace {

struct CodePoint {
    UChar32 cp;
    std::size_t offset;
    std::size_t length;
};

std::vector<CodePoint> decode(std::string_view text)
{
    std::vector<CodePoint> out;
    out.reserve(text.size());
    const auto* s = reinterpret_cast<const uint8_t*>(text.data());
    const auto n = static_cast<int32_t>(text.size());
    int32_t i = 0;
    while (i < n) {
        int32_t start = i;
        UChar32 c;
        U8_NEXT(s, i, n, c);
        if (c < 0) {
            c = 0xFFFD;
        }
        out.push_back({c, static_cast<std::size_t>(start), static_cast<std::size_t>(i - start)});
    }
    return out;
}

void append_utf8(std::string& out, UChar32 c)
{
    uint8_t buf[U8_MAX_LENGTH];
    int32_t len = 0;
    UBool err = false;
    U8_APPEND(buf, len, U8_MAX_LENGTH, c, err);
    if (!err) {
        out.append(reinterpret_cast<const char*>(buf), static_cast<std::size_t>(len));
    }
}

UChar32 fold_width(UChar32 c)
{
    if (c >= 0xFF01 && c <= 0xFF5E) {
        return c - 0xFEE0;
    }
    if (c == 0x3000) {
        return 0x20;
    }
    return c;
}

bool is_cjk(UChar32 c)
{
    UErrorCode err = U_ZERO_ERROR;
    UScriptCode script = uscript_getScript(c, &err);
    if (U_FAILURE(err)) {
        return false;
    }
    return script == USCRIPT_HAN || script == USCRIPT_HIRAGANA || script == USCRIPT_KATAKANA ||
           script == USCRIPT_HANGUL;
}

bool is_word_char(UChar32 c)
{
    return u_isalnum(c) || (U_GET_GC_MASK(c) & U_GC_M_MASK) != 0 ||
           u_hasBinaryProperty(c, UCHAR_ALPHABETIC);
}

bool is_space(UChar32 c)
{
    return u_isUWhiteSpace(c);
}

// Closes a sentence only when followed by whitespace or end of text.
bool is_soft_terminator(UChar32 c)
{
    switch (c) {
        case '.':
        case '!':
        case '?':
        case 0x2026:  // …
        case 0x061F:  // ؟
        case 0x0964:  // ।
        case 0x0965:  // ॥
            return true;
        default:
            return false;
    }
}

// Full-width terminators close a sentence regardless of what follows.
bool is_hard_terminator(UChar32 c)
{
    return c == 0x3002 || c == 0xFF01 || c == 0xFF1F;
}

bool is_closer(UChar32 c)
{
    switch (c) {
        case '"':
        case '\'':
        case ')':
        case ']':
        case 0x2019:  // ’
        case 0x201D:  // ”
        case 0x300D:  // 」
        case 0x300F:  // 』
        case 0x300B:  // 》
        case 0xFF09:  // ）
            return true;
        default:
            return false;
    }
}

}  // namespace

Analyzer::Analyzer(std::string lang, AnalyzerOptions options)
    : lang_(std::move(lang)), options_(std::move(options))
{
    if (lang_ == "zh") {
        options_.mode = TokenMode::cjk_bigram;
    }
}

std::vector<std::string> Analyzer::tokenize(std::string_view text) const
{
    std::vector<std::string> tokens;
    std::string word;
    std::vector<std::string> cjk_run;

    auto emit = [&](std::string token) {
        if (!options_.stopwords.empty() && options_.stopwords.contains(token)) {
            return;
        }
        tokens.push_back(std::move(token));
    };
    auto flush_word = [&] {
        if (!word.empty()) {
            emit(std::move(word));
            word.clear();
        }
    };
    auto flush_cjk = [&] {
        if (cjk_run.size() == 1) {
            emit(std::move(cjk_run.front()));
        } else {
            for (std::size_t i = 0; i + 1 < cjk_run.size(); ++i) {
                emit(cjk_run[i] + cjk_run[i + 1]);
            }
        }
        cjk_run.clear();
    };

    for (const auto& cp : decode(text)) {
        UChar32 c = fold_width(cp.cp);
        if (options_.lowercase) {
            c = u_tolower(c);
        }
        if (is_cjk(c)) {
            flush_word();
            std::string ch;
            append_utf8(ch, c);
            if (options_.mode == TokenMode::cjk_bigram) {
                cjk_run.push_back(std::move(ch));
            } else {
                emit(std::move(ch));
            }
        } else if (is_word_char(c)) {
            flush_cjk();
            append_utf8(word, c);
        } else {
            flush_word();
            flush_cjk();
        }
    }
    flush_word();
    flush_cjk();
    return tokens;
}

std::string Analyzer::fingerprint() const
{
    std::string stop;
    for (const auto& w : options_.stopwords) {
        stop += w;
        stop.push_back('\n');
    }
    return "lang=" + lang_ + ";lower=" + (options_.lowercase ? "1" : "0") + ";mode=" +
           (options_.mode == TokenMode::cjk_bigram ? "cjk-bigram" : "unicode-word") +
           ";stop=" + std::to_string(options_.stopwords.size()) + ":" + hex64(fnv1a64(stop));
}

std::set<std::string> load_stopwords(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open stopword list " + path.string());
    }
    std::set<std::string> words;
    std::string line;
    while (std::getline(in, line)) {
        if (auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) {
            continue;
        }
        auto last = line.find_last_not_of(" \t\r");
        words.insert(line.substr(first, last - first + 1));
    }
    return words;
}

std::vector<Sentence> split_sentences(std::string_view /*lang*/, std::string_view text,
                                      std::size_t max_chars, std::string_view doc_id)
{
    // Terminator rules are shared by every supported language.
    const auto cps = decode(text);
    const std::size_t n = cps.size();
    auto byte_at = [&](std::size_t i) { return i < n ? cps[i].offset : text.size(); };

    std::vector<Sentence> out;
    auto push = [&](std::size_t from, std::size_t to) {
        // [from, to) in code point positions
        while (from < to && is_space(cps[from].cp)) {
            ++from;
        }
        while (to > from && is_space(cps[to - 1].cp)) {
            --to;
        }
        while (from < to) {
            std::size_t end = to;
            if (max_chars > 0 && to - from > max_chars) {
                end = from + max_chars;
                for (std::size_t j = end; j > from + 1; --j) {
                    if (is_space(cps[j - 1].cp)) {
                        end = j - 1;
                        break;
                    }
                }
            }
            std::size_t trimmed = end;
            while (trimmed > from && is_space(cps[trimmed - 1].cp)) {
                --trimmed;
            }
            out.push_back({std::string(doc_id), out.size(),
                           std::string(text.substr(byte_at(from), byte_at(trimmed) - byte_at(from)))});
            from = end;
            while (from < to && is_space(cps[from].cp)) {
                ++from;
            }
        }
    };

    std::size_t start = 0;
    std::size_t i = 0;
    while (i < n) {
        UChar32 c = cps[i].cp;
        if (is_soft_terminator(c) || is_hard_terminator(c)) {
            bool hard = false;
            std::size_t j = i;
            while (j < n && (is_soft_terminator(cps[j].cp) || is_hard_terminator(cps[j].cp))) {
                hard = hard || is_hard_terminator(cps[j].cp);
                ++j;
            }
            while (j < n && is_closer(cps[j].cp)) {
                ++j;
            }
            if (hard || j == n || is_space(cps[j].cp)) {
                push(start, j);
                start = j;
            }
            i = j;
            continue;
        }
        if (c == '\n') {
            std::size_t k = i + 1;
            while (k < n && (cps[k].cp == ' ' || cps[k].cp == '\t' || cps[k].cp == '\r')) {
                ++k;
            }
            if (k < n && cps[k].cp == '\n') {
                push(start, i);
                start = k + 1;
                i = k + 1;
                continue;
            }
        }
        ++i;
    }
    push(start, n);
    return out;
}

}  // namespace xlr
