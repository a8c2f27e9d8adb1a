#include "enslens/brush/selection_mask.hpp"

#include "enslens/error.hpp"
#include "enslens/util/base64.hpp"

namespace enslens {

void SelectionMask::recount() {
    if (size_ % 64 != 0 && !words_.empty()) words_.back() &= (std::uint64_t{1} << (size_ % 64)) - 1;
    std::size_t c = 0;
    for (auto w : words_) c += static_cast<std::size_t>(std::popcount(w));
    count_ = c;
}

bool SelectionMask::is_subset_of(const SelectionMask& other) const {
    if (other.size_ != size_) return false;
    for (std::size_t i = 0; i < words_.size(); ++i)
        if (words_[i] & ~other.words_[i]) return false;
    return true;
}

std::size_t SelectionMask::intersection_count(const SelectionMask& other) const {
    std::size_t c = 0;
    for (std::size_t i = 0; i < words_.size() && i < other.words_.size(); ++i)
        c += static_cast<std::size_t>(std::popcount(words_[i] & other.words_[i]));
    return c;
}

std::vector<std::size_t> SelectionMask::set_rows() const {
    std::vector<std::size_t> rows;
    rows.reserve(count_);
    for (std::size_t w = 0; w < words_.size(); ++w) {
        std::uint64_t bits = words_[w];
        while (bits) {
            rows.push_back(w * 64 + static_cast<std::size_t>(std::countr_zero(bits)));
            bits &= bits - 1;
        }
    }
    return rows;
}

nlohmann::json to_json(const SelectionMask& mask) {
    std::vector<std::uint8_t> bytes;
    bytes.reserve(mask.words().size() * 8);
    for (auto w : mask.words())
        for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<std::uint8_t>(w >> (8 * b)));
    return {{"member", mask.member_id()}, {"count", mask.count()}, {"size", mask.size()},
            {"bitset", base64_encode(bytes)}};
}

SelectionMask mask_from_json(const nlohmann::json& doc) {
    try {
        SelectionMask mask(doc.at("member").get<std::string>(), doc.at("size").get<std::size_t>());
        const auto bytes = base64_decode(doc.at("bitset").get<std::string>());
        if (bytes.size() != mask.words().size() * 8)
            throw Error(ErrorCode::SchemaViolation, "bitset length does not match size");
        auto& words = mask.mutable_words();
        for (std::size_t w = 0; w < words.size(); ++w) {
            std::uint64_t v = 0;
            for (int b = 0; b < 8; ++b) v |= std::uint64_t(bytes[w * 8 + b]) << (8 * b);
            words[w] = v;
        }
        mask.recount();
        if (doc.contains("count") && doc.at("count").get<std::size_t>() != mask.count())
            throw Error(ErrorCode::SchemaViolation, "count does not match bitset");
        return mask;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::SchemaViolation, e.what());
    }
}

}  // namespace enslens
