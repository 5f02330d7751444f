#include "capita/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <mutex>

#include "capita/common.hpp"

#ifndef CAPITA_DATA_DIR
#define CAPITA_DATA_DIR "data"
#endif

namespace capita {

namespace {

ClassInfo fixed(std::string name, bool openable = false, bool toggleable = false) {
    ClassInfo c;
    c.name = std::move(name);
    c.receptacle = true;
    c.openable = openable;
    c.toggleable = toggleable;
    return c;
}

enum : unsigned {
    kHeat = 1, kCool = 2, kClean = 4, kExamine = 8, kSlice = 16, kStack = 32, kContainer = 64,
};

ClassInfo item(std::string name, unsigned bits, std::vector<std::string> placements) {
    ClassInfo c;
    c.name = std::move(name);
    c.pickupable = true;
    c.heatable = bits & kHeat;
    c.coolable = bits & kCool;
    c.cleanable = bits & kClean;
    c.examinable = bits & kExamine;
    c.sliceable = bits & kSlice;
    c.stackable = bits & kStack;
    c.container = bits & kContainer;
    c.receptacle = c.container;
    c.placements = std::move(placements);
    return c;
}

std::vector<ClassInfo> build_table() {
    const std::vector<std::string> food = {"CounterTop", "Fridge", "DiningTable", "SideTable"};
    const std::vector<std::string> dish = {"CounterTop", "Cabinet", "DiningTable", "Shelf"};
    const std::vector<std::string> cup = {"CounterTop", "Cabinet", "Shelf", "DiningTable", "Desk"};
    const std::vector<std::string> cutlery = {"CounterTop", "Drawer", "DiningTable"};
    const std::vector<std::string> reading = {"Desk", "Bed", "Sofa", "Shelf", "SideTable", "Dresser"};
    const std::vector<std::string> small = {"Desk", "Drawer", "SideTable", "Dresser", "Sofa", "Armchair"};

    std::vector<ClassInfo> t;
    t.push_back(fixed("CounterTop"));
    t.push_back(fixed("Cabinet", true));
    t.push_back(fixed("Drawer", true));
    t.push_back(fixed("Fridge", true));
    t.push_back(fixed("Microwave", true, true));
    t.push_back(fixed("SinkBasin", false, true));
    t.push_back(fixed("Desk"));
    t.push_back(fixed("SideTable"));
    t.push_back(fixed("DiningTable"));
    t.push_back(fixed("Shelf"));
    t.push_back(fixed("Dresser"));
    t.push_back(fixed("Bed"));
    t.push_back(fixed("Sofa"));
    t.push_back(fixed("Armchair"));
    t.push_back(fixed("GarbageCan"));

    ClassInfo lamp;
    lamp.name = "DeskLamp";
    lamp.toggleable = true;
    t.push_back(lamp);

    t.push_back(item("Apple", kHeat | kCool | kClean | kSlice | kStack, food));
    t.push_back(item("Tomato", kHeat | kCool | kClean | kSlice | kStack, food));
    t.push_back(item("Potato", kHeat | kCool | kClean | kSlice | kStack, food));
    t.push_back(item("Lettuce", kCool | kClean | kSlice, food));
    t.push_back(item("Egg", kHeat | kCool | kStack, food));
    t.push_back(item("Bread", kHeat | kCool | kSlice, food));
    t.push_back(item("Mug", kContainer | kHeat | kCool | kClean | kExamine, cup));
    t.push_back(item("Cup", kContainer | kHeat | kCool | kClean, cup));
    t.push_back(item("Bowl", kContainer | kCool | kClean | kExamine, dish));
    t.push_back(item("Plate", kContainer | kCool | kClean, dish));
    t.push_back(item("Pot", kContainer | kCool | kClean, dish));
    t.push_back(item("Knife", kClean | kStack, cutlery));
    t.push_back(item("Spoon", kClean | kStack, cutlery));
    t.push_back(item("Book", kExamine, reading));
    t.push_back(item("CellPhone", kExamine | kStack, small));
    t.push_back(item("KeyChain", kExamine | kStack, small));
    t.push_back(item("CreditCard", kExamine | kStack, small));
    ClassInfo laptop = item("Laptop", kExamine, reading);
    laptop.openable = true;
    laptop.toggleable = true;
    t.push_back(laptop);
    t.push_back(item("SoapBar", kClean, {"SinkBasin", "CounterTop", "Cabinet"}));
    t.push_back(item("Vase", kExamine, {"Shelf", "SideTable", "DiningTable", "Dresser"}));
    return t;
}

const std::set<std::string>& stop_words() {
    static const std::set<std::string> words = {
        "a", "an", "the", "some", "of", "to", "for", "with", "and", "in", "on", "at", "it", "its",
        "this", "that", "my", "please", "one", "any", "is", "which", "used", "you", "can"};
    return words;
}

}  // namespace

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[i] = digits[v & 0xF];
        v >>= 4;
    }
    return s;
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == sep) {
            out.emplace_back(s.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

bool starts_with(std::string_view s, std::string_view prefix) {
    return s.substr(0, prefix.size()) == prefix;
}

const std::vector<ClassInfo>& class_table() {
    static const std::vector<ClassInfo> table = build_table();
    return table;
}

const ClassInfo* find_class(std::string_view name) {
    for (const auto& c : class_table())
        if (c.name == name) return &c;
    return nullptr;
}

const ClassInfo& class_info(std::string_view name) {
    const ClassInfo* c = find_class(name);
    if (!c) throw Error("vocabulary", "unknown class: " + std::string(name));
    return *c;
}

bool is_class(std::string_view name) { return find_class(name) != nullptr; }

std::string class_of_id(std::string_view id) {
    auto pos = id.rfind(' ');
    if (pos == std::string_view::npos) return std::string(id);
    return std::string(id.substr(0, pos));
}

std::string display_name(std::string_view cls) { return to_lower(cls); }

std::optional<std::string> class_from_token(std::string_view token) {
    std::string lower = to_lower(token);
    for (const auto& c : class_table())
        if (to_lower(c.name) == lower) return c.name;
    return std::nullopt;
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        unsigned char c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

bool is_stop_word(std::string_view token) { return stop_words().count(std::string(token)) > 0; }

namespace {
std::string phrase_key(std::string_view phrase) {
    std::string key;
    for (const auto& tok : tokenize(phrase)) {
        if (is_stop_word(tok)) continue;
        if (!key.empty()) key.push_back(' ');
        key += tok;
    }
    return key;
}
}  // namespace

void Lexicon::add(const std::string& cls, const std::string& phrase) {
    if (!is_class(cls)) throw Error("vocabulary", "lexicon entry for unknown class: " + cls);
    std::string key = phrase_key(phrase);
    if (key.empty()) return;
    phrase_to_classes_[key].insert(cls);
    auto& list = class_to_phrases_[cls];
    if (std::find(list.begin(), list.end(), phrase) == list.end()) list.push_back(phrase);
    ++entries_;
}

void Lexicon::load(std::istream& in) {
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos) continue;
        add(trim(line.substr(0, tab)), trim(line.substr(tab + 1)));
    }
}

void Lexicon::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("io", "cannot open lexicon file " + path);
    load(in);
}

std::vector<std::string> Lexicon::canonicalize(std::string_view query) const {
    std::string key = phrase_key(query);
    std::vector<std::string> out;
    if (key.empty()) return out;
    std::string compact;
    for (char c : key)
        if (c != ' ') compact.push_back(c);
    if (auto cls = class_from_token(compact)) {
        out.push_back(*cls);
        return out;
    }
    auto it = phrase_to_classes_.find(key);
    if (it != phrase_to_classes_.end()) out.assign(it->second.begin(), it->second.end());
    return out;
}

std::vector<std::string> Lexicon::canonical_tokens(std::string_view text) const {
    std::vector<std::string> toks;
    for (auto& t : tokenize(text))
        if (!is_stop_word(t)) toks.push_back(t);
    std::vector<std::string> out;
    for (std::size_t i = 0; i < toks.size();) {
        // longest phrase starting at i that maps to exactly one class
        std::size_t best = 0;
        std::string best_cls;
        for (std::size_t len = std::min<std::size_t>(4, toks.size() - i); len >= 1; --len) {
            std::string key;
            for (std::size_t j = i; j < i + len; ++j) {
                if (!key.empty()) key.push_back(' ');
                key += toks[j];
            }
            auto classes = canonicalize(key);
            if (classes.size() == 1) {
                best = len;
                best_cls = to_lower(classes.front());
                break;
            }
        }
        if (best == 0) {
            out.push_back(toks[i]);
            ++i;
        } else {
            out.push_back(best_cls);
            i += best;
        }
    }
    return out;
}

const std::vector<std::string>& Lexicon::phrases(const std::string& cls) const {
    static const std::vector<std::string> empty;
    auto it = class_to_phrases_.find(cls);
    return it == class_to_phrases_.end() ? empty : it->second;
}

std::string data_dir() {
    if (const char* env = std::getenv("CAPITA_DATA_DIR"); env && *env) return env;
    return CAPITA_DATA_DIR;
}

const Lexicon& default_lexicon() {
    static Lexicon lex;
    static std::once_flag once;
    std::call_once(once, [] {
        lex.load_file(data_dir() + "/synonyms.tsv");
        lex.load_file(data_dir() + "/descriptions.tsv");
    });
    return lex;
}

double jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::set<std::string> sa(a.begin(), a.end()), sb(b.begin(), b.end());
    if (sa.empty() && sb.empty()) return 1.0;
    std::size_t inter = 0;
    for (const auto& x : sa) inter += sb.count(x);
    std::size_t uni = sa.size() + sb.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace capita
