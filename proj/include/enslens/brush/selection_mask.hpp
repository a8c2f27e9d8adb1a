#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace enslens {

// Activation bits over one member's active points (bit i <-> row i).
class SelectionMask {
public:
    SelectionMask() = default;
    SelectionMask(std::string member_id, std::size_t size)
        : member_id_(std::move(member_id)), size_(size), words_((size + 63) / 64, 0) {}

    const std::string& member_id() const { return member_id_; }
    std::size_t size() const { return size_; }
    std::size_t count() const { return count_; }

    bool test(std::size_t i) const { return (words_[i >> 6] >> (i & 63)) & 1u; }

    const std::vector<std::uint64_t>& words() const { return words_; }
    // Direct word access for kernels that fill disjoint word ranges; call recount() afterwards.
    std::vector<std::uint64_t>& mutable_words() { return words_; }
    void recount();

    void set(std::size_t i) {
        const std::uint64_t bit = std::uint64_t{1} << (i & 63);
        if (!(words_[i >> 6] & bit)) {
            words_[i >> 6] |= bit;
            ++count_;
        }
    }

    bool is_subset_of(const SelectionMask& other) const;
    std::size_t intersection_count(const SelectionMask& other) const;
    std::vector<std::size_t> set_rows() const;

    bool operator==(const SelectionMask& other) const {
        return member_id_ == other.member_id_ && size_ == other.size_ && words_ == other.words_;
    }

private:
    std::string member_id_;
    std::size_t size_ = 0;
    std::size_t count_ = 0;
    std::vector<std::uint64_t> words_;
};

// {member, count, size, bitset: base64 of packed little-endian 64-bit words}
nlohmann::json to_json(const SelectionMask& mask);
// Throws SchemaViolation.
SelectionMask mask_from_json(const nlohmann::json& doc);

}  // namespace enslens
