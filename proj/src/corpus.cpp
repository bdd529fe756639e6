#include "stereobias/corpus.hpp"

#include <algorithm>
#include <array>

#include <json.hpp>

#include "stereobias/error.hpp"
#include "stereobias/io.hpp"

namespace stereobias {

namespace {

const std::vector<std::size_t> kNoRecords;

std::string pair_key(std::string_view item, std::string_view annotator) {
    std::string key;
    key.reserve(item.size() + annotator.size() + 1);
    key.append(item);
    key.push_back('\x1f');
    key.append(annotator);
    return key;
}

bool is_token_byte(unsigned char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c >= 0x80;
}

}  // namespace

void PostTable::add(Post post) {
    if (index_.contains(post.id)) throw InvalidInput("duplicate post id '" + post.id + "'");
    index_.emplace(post.id, posts_.size());
    posts_.push_back(std::move(post));
}

const Post* PostTable::find(std::string_view id) const {
    const auto it = index_.find(std::string(id));
    return it == index_.end() ? nullptr : &posts_[it->second];
}

void AnnotationSet::add(AnnotationRecord record) {
    if (record.label != 0 && record.label != 1)
        throw InvalidInput("label must be 0 or 1, got " + std::to_string(record.label));
    std::string key = pair_key(record.item_id, record.annotator_id);
    if (pair_index_.contains(key))
        throw InvalidInput("duplicate annotation for item '" + record.item_id + "' by annotator '" +
                           record.annotator_id + "'");
    const std::size_t index = records_.size();
    pair_index_.emplace(std::move(key), index);

    auto [counts, new_item] = counts_.try_emplace(record.item_id);
    if (new_item) item_order_.push_back(record.item_id);
    (record.label == 1 ? counts->second.n1 : counts->second.n0) += 1;
    by_item_[record.item_id].push_back(index);

    auto& annotator = by_annotator_[record.annotator_id];
    if (annotator.empty()) annotator_order_.push_back(record.annotator_id);
    annotator.push_back(index);

    records_.push_back(std::move(record));
}

LabelCounts AnnotationSet::counts(std::string_view item_id) const {
    const auto it = counts_.find(std::string(item_id));
    return it == counts_.end() ? LabelCounts{} : it->second;
}

std::optional<int> AnnotationSet::label(std::string_view item_id, std::string_view annotator_id) const {
    const auto it = pair_index_.find(pair_key(item_id, annotator_id));
    if (it == pair_index_.end()) return std::nullopt;
    return records_[it->second].label;
}

const std::vector<std::size_t>& AnnotationSet::item_records(std::string_view item_id) const {
    const auto it = by_item_.find(std::string(item_id));
    return it == by_item_.end() ? kNoRecords : it->second;
}

const std::vector<std::size_t>& AnnotationSet::annotator_records(std::string_view annotator_id) const {
    const auto it = by_annotator_.find(std::string(annotator_id));
    return it == by_annotator_.end() ? kNoRecords : it->second;
}

bool SgtLexicon::add(std::string group_id, std::string_view surface_form) {
    auto tokens = tokenize(surface_form);
    if (tokens.empty()) throw InvalidInput("blank surface form for group '" + group_id + "'");
    std::string joined;
    for (const auto& token : tokens) {
        if (!joined.empty()) joined.push_back(' ');
        joined += token;
    }
    for (const auto& entry : entries_)
        if (entry.group_id == group_id && entry.surface_form == joined) return false;
    if (std::find(group_order_.begin(), group_order_.end(), group_id) == group_order_.end())
        group_order_.push_back(group_id);
    entries_.push_back({std::move(group_id), std::move(joined), std::move(tokens)});
    return true;
}

std::vector<const LexiconEntry*> SgtLexicon::forms(std::string_view group_id) const {
    std::vector<const LexiconEntry*> out;
    for (const auto& entry : entries_)
        if (entry.group_id == group_id) out.push_back(&entry);
    return out;
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (const char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (is_token_byte(c)) {
            current.push_back((c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : ch);
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

AnnotationSet load_annotations(const std::filesystem::path& path) {
    const std::string origin = path.string();
    const auto rows = io::read_csv(path);
    if (rows.empty()) throw ParseError(origin, 0, "missing header row (item_id,annotator_id,label)");

    const auto& header = rows.front().fields;
    std::array<std::size_t, 3> column{};
    constexpr std::array<std::string_view, 3> names{"item_id", "annotator_id", "label"};
    for (std::size_t k = 0; k < names.size(); ++k) {
        const auto it = std::find_if(header.begin(), header.end(),
                                     [&](const std::string& h) { return io::trim(h) == names[k]; });
        if (it == header.end())
            throw ParseError(origin, rows.front().line, "header lacks column '" + std::string(names[k]) + "'");
        column[k] = static_cast<std::size_t>(it - header.begin());
    }

    AnnotationSet set;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.fields.size() != header.size())
            throw ParseError(origin, row.line,
                             "expected " + std::to_string(header.size()) + " fields, found " +
                                 std::to_string(row.fields.size()));
        std::string item(io::trim(row.fields[column[0]]));
        std::string annotator(io::trim(row.fields[column[1]]));
        if (item.empty() || annotator.empty()) throw ParseError(origin, row.line, "empty item_id or annotator_id");
        const std::string_view raw_label = io::trim(row.fields[column[2]]);
        if (raw_label != "0" && raw_label != "1")
            throw ParseError(origin, row.line, "label must be 0 or 1, got '" + std::string(raw_label) + "'");
        try {
            set.add({std::move(item), std::move(annotator), raw_label == "1" ? 1 : 0});
        } catch (const InvalidInput& e) {
            throw ParseError(origin, row.line, e.what());
        }
    }
    return set;
}

PostTable load_posts(const std::filesystem::path& path) {
    const std::string origin = path.string();
    const auto lines = io::read_lines(path);
    PostTable table;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::size_t line = i + 1;
        if (io::trim(lines[i]).empty()) continue;
        nlohmann::json record;
        try {
            record = nlohmann::json::parse(lines[i]);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(origin, line, std::string("invalid JSON: ") + e.what());
        }
        if (!record.is_object()) throw ParseError(origin, line, "record is not a JSON object");
        const auto id = record.find("id");
        if (id == record.end()) throw ParseError(origin, line, "missing 'id' field");
        std::string id_text;
        if (id->is_string())
            id_text = id->get<std::string>();
        else if (id->is_number_integer())
            id_text = std::to_string(id->get<long long>());
        else
            throw ParseError(origin, line, "'id' must be a string or integer");
        if (id_text.empty()) throw ParseError(origin, line, "empty 'id'");
        const auto text = record.find("text");
        if (text == record.end()) throw ParseError(origin, line, "missing 'text' field");
        if (!text->is_string()) throw ParseError(origin, line, "'text' must be a string");
        try {
            table.add({std::move(id_text), text->get<std::string>()});
        } catch (const InvalidInput& e) {
            throw ParseError(origin, line, e.what());
        }
    }
    return table;
}

SgtLexicon load_lexicon(const std::filesystem::path& path) {
    const std::string origin = path.string();
    const auto lines = io::read_lines(path);
    SgtLexicon lexicon;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::size_t line = i + 1;
        const std::string_view content = io::trim(lines[i]);
        if (content.empty() || content.front() == '#') continue;
        const std::string_view raw = lines[i];
        const auto tab = raw.find('\t');
        if (tab == std::string_view::npos) throw ParseError(origin, line, "expected group_id<TAB>surface_form");
        const std::string group(io::trim(raw.substr(0, tab)));
        if (group.empty()) throw ParseError(origin, line, "empty group_id");
        try {
            lexicon.add(group, raw.substr(tab + 1));
        } catch (const InvalidInput& e) {
            throw ParseError(origin, line, e.what());
        }
    }
    return lexicon;
}

std::vector<SgtMention> match_sgts(std::string_view text, const SgtLexicon& lexicon, std::string_view item_id) {
    std::vector<SgtMention> mentions;
    const auto tokens = tokenize(text);
    if (tokens.empty()) return mentions;

    const auto& groups = lexicon.groups();
    for (std::size_t offset = 0; offset < tokens.size(); ++offset) {
        for (const auto& group : groups) {
            const LexiconEntry* best = nullptr;
            for (const auto& entry : lexicon.entries()) {
                if (entry.group_id != group) continue;
                const auto& form = entry.tokens;
                if (offset + form.size() > tokens.size()) continue;
                if (!std::equal(form.begin(), form.end(), tokens.begin() + static_cast<std::ptrdiff_t>(offset)))
                    continue;
                if (best == nullptr || form.size() > best->tokens.size()) best = &entry;
            }
            if (best != nullptr)
                mentions.push_back({std::string(item_id), best->group_id, best->surface_form, offset});
        }
    }
    return mentions;
}

std::vector<SgtMention> match_corpus(const PostTable& posts, const SgtLexicon& lexicon) {
    std::vector<SgtMention> out;
    for (const auto& post : posts) {
        auto mentions = match_sgts(post.text, lexicon, post.id);
        out.insert(out.end(), std::make_move_iterator(mentions.begin()), std::make_move_iterator(mentions.end()));
    }
    return out;
}

MajorityLabel majority_vote(long long n1, long long n0, std::string_view item_id) {
    if (n1 < 0 || n0 < 0) throw InvalidInput("label counts must be non-negative");
    if (n1 + n0 == 0) throw InvalidInput("majority vote needs at least one label");
    return {std::string(item_id), n1 > n0 ? 1 : 0, n1 == n0};
}

std::vector<MajorityLabel> majority_labels(const AnnotationSet& annotations) {
    std::vector<MajorityLabel> out;
    out.reserve(annotations.items().size());
    for (const auto& item : annotations.items()) {
        const auto c = annotations.counts(item);
        out.push_back(majority_vote(c.n1, c.n0, item));
    }
    return out;
}

}  // namespace stereobias
