#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace stereobias {

struct Post {
    std::string id;
    std::string text;
};

/// Posts keyed by id, kept in file order.
class PostTable {
public:
    /// Throws InvalidInput on a duplicate id.
    void add(Post post);

    const Post* find(std::string_view id) const;
    bool contains(std::string_view id) const { return find(id) != nullptr; }
    std::size_t size() const noexcept { return posts_.size(); }
    bool empty() const noexcept { return posts_.empty(); }

    auto begin() const noexcept { return posts_.begin(); }
    auto end() const noexcept { return posts_.end(); }
    const Post& operator[](std::size_t i) const { return posts_[i]; }

private:
    std::vector<Post> posts_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct AnnotationRecord {
    std::string item_id;
    std::string annotator_id;
    int label = 0;
};

struct LabelCounts {
    long long n1 = 0;
    long long n0 = 0;
    long long total() const noexcept { return n1 + n0; }
};

/// Long-format binary annotations with a per-item (n1, n0) index.
/// At most one record per (item, annotator) pair.
class AnnotationSet {
public:
    /// Throws InvalidInput on a repeated (item, annotator) pair or a non-binary label.
    void add(AnnotationRecord record);

    const std::vector<AnnotationRecord>& records() const noexcept { return records_; }
    std::size_t size() const noexcept { return records_.size(); }
    bool empty() const noexcept { return records_.empty(); }

    /// Item ids in order of first appearance.
    const std::vector<std::string>& items() const noexcept { return item_order_; }
    /// Annotator ids in order of first appearance.
    const std::vector<std::string>& annotators() const noexcept { return annotator_order_; }

    /// Zero counts for unknown items.
    LabelCounts counts(std::string_view item_id) const;
    std::optional<int> label(std::string_view item_id, std::string_view annotator_id) const;

    /// Indices into records() for one item / one annotator, in insertion order.
    const std::vector<std::size_t>& item_records(std::string_view item_id) const;
    const std::vector<std::size_t>& annotator_records(std::string_view annotator_id) const;

private:
    std::vector<AnnotationRecord> records_;
    std::vector<std::string> item_order_;
    std::vector<std::string> annotator_order_;
    std::unordered_map<std::string, LabelCounts> counts_;
    std::unordered_map<std::string, std::vector<std::size_t>> by_item_;
    std::unordered_map<std::string, std::vector<std::size_t>> by_annotator_;
    std::unordered_map<std::string, std::size_t> pair_index_;
};

struct LexiconEntry {
    std::string group_id;
    std::string surface_form;         // tokens joined by a single space
    std::vector<std::string> tokens;  // lowercase, length >= 1
};

/// Social-group surface forms. (group, surface form) pairs are unique.
class SgtLexicon {
public:
    /// Tokenizes and lowercases `surface_form`. Returns false if the pair is
    /// already present; throws InvalidInput if the form has no tokens.
    bool add(std::string group_id, std::string_view surface_form);

    const std::vector<LexiconEntry>& entries() const noexcept { return entries_; }
    /// Group ids in order of first appearance.
    const std::vector<std::string>& groups() const noexcept { return group_order_; }
    std::vector<const LexiconEntry*> forms(std::string_view group_id) const;
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }

private:
    std::vector<LexiconEntry> entries_;
    std::vector<std::string> group_order_;
};

struct SgtMention {
    std::string item_id;
    std::string group_id;
    std::string surface_form;
    std::size_t token_offset = 0;

    bool operator==(const SgtMention&) const = default;
};

struct MajorityLabel {
    std::string item_id;
    int label = 0;
    bool tied = false;
};

/// Lowercases ASCII letters and splits on every run of non-alphanumeric
/// ASCII characters. Bytes >= 0x80 are kept inside tokens so UTF-8 words
/// survive intact.
std::vector<std::string> tokenize(std::string_view text);

AnnotationSet load_annotations(const std::filesystem::path& path);
PostTable load_posts(const std::filesystem::path& path);
SgtLexicon load_lexicon(const std::filesystem::path& path);

/// Whole-token matches of every lexicon form, ordered by offset then by
/// group order. At most one mention per (group, offset); when several
/// forms of the same group start at one offset the longest wins.
std::vector<SgtMention> match_sgts(std::string_view text, const SgtLexicon& lexicon,
                                   std::string_view item_id = {});

/// Mentions for every post, in table order.
std::vector<SgtMention> match_corpus(const PostTable& posts, const SgtLexicon& lexicon);

/// Ties go to label 0 and are flagged.
MajorityLabel majority_vote(long long n1, long long n0, std::string_view item_id = {});

std::vector<MajorityLabel> majority_labels(const AnnotationSet& annotations);

}  // namespace stereobias
