#pragma once

#include <istream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace capita {

struct ClassInfo {
    std::string name;
    bool pickupable = false;
    bool receptacle = false;
    bool openable = false;
    bool toggleable = false;
    bool sliceable = false;
    bool container = false;  // pickupable receptacle (bowl, mug, ...)
    bool heatable = false;
    bool coolable = false;
    bool cleanable = false;
    bool examinable = false;
    bool stackable = false;  // fits inside a container
    std::vector<std::string> placements;  // receptacle classes it spawns on
};

const std::vector<ClassInfo>& class_table();
const ClassInfo* find_class(std::string_view name);
const ClassInfo& class_info(std::string_view name);
bool is_class(std::string_view name);

// "Apple 12" -> "Apple"
std::string class_of_id(std::string_view id);
// "CounterTop" -> "countertop"
std::string display_name(std::string_view cls);
// case-insensitive lookup of a single class token ("countertop" -> "CounterTop")
std::optional<std::string> class_from_token(std::string_view token);

std::vector<std::string> tokenize(std::string_view text);
bool is_stop_word(std::string_view token);

// Synonym / description tables: one line `class<TAB>phrase`.
class Lexicon {
public:
    Lexicon() = default;
    void load(std::istream& in);
    void load_file(const std::string& path);
    void add(const std::string& cls, const std::string& phrase);

    // Canonicalizes a free-text query to candidate classes. A bare class
    // name maps to itself; otherwise exact phrase matches from the tables.
    // Ambiguous phrases return several classes.
    std::vector<std::string> canonicalize(std::string_view query) const;
    // Tokens with stop words removed and synonyms folded to class names.
    std::vector<std::string> canonical_tokens(std::string_view text) const;
    const std::vector<std::string>& phrases(const std::string& cls) const;
    std::size_t size() const { return entries_; }

private:
    std::map<std::string, std::set<std::string>> phrase_to_classes_;
    std::map<std::string, std::vector<std::string>> class_to_phrases_;
    std::size_t entries_ = 0;
};

std::string data_dir();
// synonyms.tsv + descriptions.tsv from data_dir(), loaded once.
const Lexicon& default_lexicon();

double jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b);

}  // namespace capita
