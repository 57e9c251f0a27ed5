#include "tabenc/vocab.hpp"

#include <algorithm>
#include <cctype>

#include "tabenc/core.hpp"

namespace tabenc {

const Vocabulary& Vocabulary::instance() {
    static const Vocabulary v;
    return v;
}

TokenId Vocabulary::add(std::string s) {
    auto id = static_cast<TokenId>(symbols_.size());
    by_name_.emplace(s, id);
    symbols_.push_back(std::move(s));
    return id;
}

Vocabulary::Vocabulary() {
    pad_ = add("PAD");
    bos_ = add("BOS");
    eos_ = add("EOS");
    sep_ = add("SEP");
    unk_ = add("UNK");
    row_ = add("[ROW]");
    row1_ = add("[ROW 1]");
    for (int r = 2; r <= kMaxIndexedRows; ++r) add("[ROW " + std::to_string(r) + "]");
    col_ = add("[COL]");
    cell_ = add("[CELL]");
    tab_ = add("[TAB]");
    digit0_ = add("0");
    for (int d = 1; d <= 9; ++d) add(std::to_string(d));
    for (const char* kw : {"select", "where", "from", "table", "and", "or", "in", "limit", "=", "!=", "(", ")", ","})
        add(kw);
    for (int c = 1; c <= kMaxColumnNames; ++c) add("c" + std::to_string(c));
}

TokenId Vocabulary::id(std::string_view symbol) const {
    auto it = by_name_.find(std::string(symbol));
    if (it == by_name_.end()) throw InputError("unknown vocabulary symbol '" + std::string(symbol) + "'");
    return it->second;
}

TokenId Vocabulary::indexed_row(int r) const {
    if (r < 1 || r > kMaxIndexedRows) throw ConfigError("no indexed row token for row " + std::to_string(r));
    return row1_ + (r - 1);
}

namespace {

bool is_plain_word(std::string_view w) {
    // Specials are never produced from text.
    return !(w == "PAD" || w == "BOS" || w == "EOS" || w == "SEP" || w == "UNK" || w.starts_with("["));
}

void emit_word(const std::string& word, std::vector<TokenId>& out, std::size_t* unk_count) {
    const auto& v = Vocabulary::instance();
    if (std::all_of(word.begin(), word.end(), [](unsigned char c) { return std::isdigit(c); })) {
        for (char c : word) out.push_back(v.digit(c - '0'));
        return;
    }
    std::string lower = word;
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (is_plain_word(lower) && v.contains(lower)) {
        out.push_back(v.id(lower));
        return;
    }
    out.push_back(v.unk());
    if (unk_count) ++*unk_count;
}

}  // namespace

std::vector<TokenId> tokenize_text(std::string_view text, std::size_t* unk_count) {
    std::vector<TokenId> out;
    std::string word;
    auto flush = [&] {
        if (!word.empty()) emit_word(word, out, unk_count);
        word.clear();
    };
    const auto& v = Vocabulary::instance();
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            flush();
        } else if (c == '(' || c == ')' || c == ',' || c == '=') {
            flush();
            out.push_back(v.id(std::string(1, c)));
        } else if (c == '!' && i + 1 < text.size() && text[i + 1] == '=') {
            flush();
            out.push_back(v.id("!="));
            ++i;
        } else {
            word.push_back(c);
        }
    }
    flush();
    return out;
}

std::vector<TokenId> encode_answer(const std::vector<std::string>& values, std::size_t* unk_count) {
    const auto& v = Vocabulary::instance();
    std::vector<TokenId> out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out.push_back(v.sep());
        auto toks = tokenize_text(values[i], unk_count);
        out.insert(out.end(), toks.begin(), toks.end());
    }
    out.push_back(v.eos());
    return out;
}

std::vector<std::string> decode_answer(const std::vector<TokenId>& ids) {
    const auto& v = Vocabulary::instance();
    std::vector<std::string> values;
    std::string cur;
    bool any = false;
    for (TokenId id : ids) {
        if (id == v.eos()) break;
        if (id == v.sep()) {
            values.push_back(cur);
            cur.clear();
            any = false;
            continue;
        }
        if (id == v.bos() || id == v.pad()) continue;
        cur += v.symbol(id);
        any = true;
    }
    if (any || !values.empty()) values.push_back(cur);
    return values;
}

}  // namespace tabenc
