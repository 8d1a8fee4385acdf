#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

#include "sealdb/error.hpp"

namespace sealdb {

/// Exact decimal number kept as canonical digit strings. No floating
/// point anywhere: values compare and round-trip exactly.
///
/// Canonical form: no leading zeros in the integer part (single "0" if
/// empty), no trailing zeros in the fraction, no negative zero, fraction
/// omitted when empty.
class Decimal {
public:
    Decimal() : negative_(false), int_part_("0") {}

    static Decimal parse(std::string_view text, std::size_t position = Error::npos) {
        std::string_view rest = text;
        bool negative = false;
        if (!rest.empty() && (rest.front() == '+' || rest.front() == '-')) {
            negative = rest.front() == '-';
            rest.remove_prefix(1);
        }
        auto dot = rest.find('.');
        std::string_view int_part = dot == std::string_view::npos ? rest : rest.substr(0, dot);
        std::string_view frac_part = dot == std::string_view::npos ? std::string_view{} : rest.substr(dot + 1);
        if (int_part.empty() && frac_part.empty())
            fail(Errc::parse_error, "malformed decimal: '" + std::string(text) + "'", position);
        for (char c : int_part)
            if (c < '0' || c > '9')
                fail(Errc::parse_error, "malformed decimal: '" + std::string(text) + "'", position);
        for (char c : frac_part)
            if (c < '0' || c > '9')
                fail(Errc::parse_error, "malformed decimal: '" + std::string(text) + "'", position);
        Decimal d;
        d.negative_ = negative;
        d.int_part_ = std::string(int_part);
        d.frac_part_ = std::string(frac_part);
        d.canonicalize();
        return d;
    }

    static Decimal from_int(std::int64_t value) {
        Decimal d;
        d.negative_ = value < 0;
        d.int_part_ = value < 0 ? std::to_string(value).substr(1) : std::to_string(value);
        d.canonicalize();
        return d;
    }

    [[nodiscard]] std::string to_string() const {
        std::string out;
        if (negative_) out.push_back('-');
        out += int_part_;
        if (!frac_part_.empty()) {
            out.push_back('.');
            out += frac_part_;
        }
        return out;
    }

    [[nodiscard]] bool is_zero() const { return int_part_ == "0" && frac_part_.empty(); }

    /// Three-way numeric comparison.
    [[nodiscard]] int compare(const Decimal& other) const {
        if (negative_ != other.negative_) return negative_ ? -1 : 1;
        int mag = compare_magnitude(other);
        return negative_ ? -mag : mag;
    }

    friend bool operator==(const Decimal& a, const Decimal& b) { return a.compare(b) == 0; }
    friend std::strong_ordering operator<=>(const Decimal& a, const Decimal& b) {
        int c = a.compare(b);
        return c < 0 ? std::strong_ordering::less
             : c > 0 ? std::strong_ordering::greater
                     : std::strong_ordering::equal;
    }

private:
    void canonicalize() {
        std::size_t keep = 0;
        while (keep + 1 < int_part_.size() && int_part_[keep] == '0') ++keep;
        int_part_.erase(0, keep);
        if (int_part_.empty()) int_part_ = "0";
        while (!frac_part_.empty() && frac_part_.back() == '0') frac_part_.pop_back();
        if (is_zero()) negative_ = false;
    }

    [[nodiscard]] int compare_magnitude(const Decimal& other) const {
        if (int_part_.size() != other.int_part_.size())
            return int_part_.size() < other.int_part_.size() ? -1 : 1;
        if (int cmp = int_part_.compare(other.int_part_); cmp != 0) return cmp < 0 ? -1 : 1;
        // Fractions compare lexicographically once right-padded to equal length.
        std::size_t n = std::max(frac_part_.size(), other.frac_part_.size());
        for (std::size_t i = 0; i < n; ++i) {
            char a = i < frac_part_.size() ? frac_part_[i] : '0';
            char b = i < other.frac_part_.size() ? other.frac_part_[i] : '0';
            if (a != b) return a < b ? -1 : 1;
        }
        return 0;
    }

    bool negative_;
    std::string int_part_;
    std::string frac_part_;
};

} // namespace sealdb
