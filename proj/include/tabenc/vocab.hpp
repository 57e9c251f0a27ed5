#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tabenc {

using TokenId = std::int32_t;

/// Closed symbol set shared by encoder input and decoder output.
///
/// Layout (contiguous ids, PAD = 0):
///   PAD BOS EOS SEP UNK [ROW] [ROW 1]..[ROW 64] [COL] [CELL] [TAB]
///   0..9  select where from table and or in limit = != ( ) ,  c1..c16
class Vocabulary {
public:
    static constexpr int kMaxIndexedRows = 64;
    static constexpr int kMaxColumnNames = 16;

    static const Vocabulary& instance();

    std::size_t size() const { return symbols_.size(); }
    const std::string& symbol(TokenId id) const { return symbols_.at(static_cast<std::size_t>(id)); }
    /// Id of a symbol by its canonical name, including specials ("SEP", "[ROW 3]").
    TokenId id(std::string_view symbol) const;
    bool contains(std::string_view symbol) const { return by_name_.contains(std::string(symbol)); }

    TokenId pad() const { return pad_; }
    TokenId bos() const { return bos_; }
    TokenId eos() const { return eos_; }
    TokenId sep() const { return sep_; }
    TokenId unk() const { return unk_; }
    TokenId row() const { return row_; }
    TokenId indexed_row(int r) const;  // r in 1..64
    TokenId col() const { return col_; }
    TokenId cell() const { return cell_; }
    TokenId tab() const { return tab_; }
    TokenId digit(int d) const { return digit0_ + d; }
    bool is_digit(TokenId id) const { return id >= digit0_ && id < digit0_ + 10; }

private:
    Vocabulary();
    TokenId add(std::string s);

    std::vector<std::string> symbols_;
    std::unordered_map<std::string, TokenId> by_name_;
    TokenId pad_, bos_, eos_, sep_, unk_, row_, row1_, col_, cell_, tab_, digit0_;
};

/// Splits text into vocabulary ids. Keywords match case-insensitively,
/// numbers split into one token per digit, '(' ')' ',' '=' '!=' separate
/// themselves from neighbours. Words outside the vocabulary become UNK and
/// are counted in `unk_count`.
std::vector<TokenId> tokenize_text(std::string_view text, std::size_t* unk_count = nullptr);

/// Decoder target: digits of each value joined by SEP, terminated by EOS.
std::vector<TokenId> encode_answer(const std::vector<std::string>& values, std::size_t* unk_count = nullptr);
/// Inverse of encode_answer; stops at EOS, splits on SEP.
std::vector<std::string> decode_answer(const std::vector<TokenId>& ids);

}  // namespace tabenc
