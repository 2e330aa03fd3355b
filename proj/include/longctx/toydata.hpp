#pragma once

// Deterministic toy data: a small themed corpus of books and papers, essay-style
// haystack prose, a topic-conversation pool and the two auxiliary chat pools.
// Everything is a pure function of the seed, so offline runs are reproducible.

#include "longctx/common.hpp"

namespace longctx::toy {

struct Theme {
    std::string name;
    std::vector<std::string> nouns;
    std::vector<std::string> verbs;  // past tense
    std::vector<std::string> adjectives;
    std::vector<std::string> places;
};

inline const std::vector<Theme>& themes() {
    static const std::vector<Theme> t = {
        {"sea",
         {"harbor", "schooner", "lighthouse", "tide", "compass", "anchor", "sail", "reef", "cargo", "gull", "mast",
          "current", "storm", "island", "chart"},
         {"sailed", "charted", "repaired", "watched", "anchored", "navigated", "signaled", "rowed", "mapped", "steered"},
         {"salty", "stormy", "distant", "weathered", "calm", "grey", "brave", "silent", "northern", "restless"},
         {"the northern cape", "the old pier", "Gull Island", "the breakwater", "the harbor master's office"}},
        {"sky",
         {"telescope", "comet", "orbit", "nebula", "observatory", "eclipse", "planet", "lens", "star", "meteor",
          "galaxy", "spectrum", "moon", "horizon", "dome"},
         {"observed", "measured", "calculated", "recorded", "photographed", "predicted", "tracked", "catalogued",
          "aligned", "studied"},
         {"faint", "bright", "distant", "silver", "cold", "precise", "luminous", "ancient", "patient", "clear"},
         {"the hilltop observatory", "the university roof", "the desert plateau", "the mountain station",
          "the old clock tower"}},
        {"garden",
         {"orchard", "seedling", "greenhouse", "rose", "soil", "harvest", "trellis", "hedge", "beehive", "meadow",
          "vine", "blossom", "compost", "herb", "pond"},
         {"planted", "pruned", "watered", "harvested", "grafted", "tended", "gathered", "sowed", "weeded", "dug"},
         {"green", "fragrant", "tangled", "early", "quiet", "sunlit", "fertile", "wild", "tidy", "blooming"},
         {"the walled garden", "the east orchard", "the village allotment", "the glasshouse", "the river meadow"}},
        {"rail",
         {"locomotive", "viaduct", "signal", "timetable", "boiler", "platform", "tunnel", "junction", "carriage",
          "track", "station", "bridge", "furnace", "whistle", "freight"},
         {"engineered", "inspected", "surveyed", "constructed", "scheduled", "welded", "operated", "coupled",
          "rebuilt", "tested"},
         {"iron", "steam-driven", "punctual", "heavy", "narrow", "busy", "smoky", "modern", "sturdy", "crowded"},
         {"the central depot", "the mountain pass", "the county junction", "the river crossing",
          "the engine works"}},
    };
    return t;
}

inline const std::vector<std::string>& character_names() {
    static const std::vector<std::string> n = {
        "Alma Thornbury",  "Basil Crane",    "Cora Whitlock",   "Dorian Fells",   "Edith Marlowe",  "Felix Ashdown",
        "Greta Holloway",  "Hugo Pembrey",   "Ines Calder",     "Jasper Quill",   "Katrin Vossler", "Leopold Ainsworth",
        "Mabel Dunmore",   "Nestor Bramble", "Odette Farrow",   "Percival Lune",  "Rosalind Keats", "Silas Wren",
        "Tamsin Orchard",  "Ulric Stroud",   "Vera Lindqvist",  "Walter Brigg",   "Yvette Moreau",  "Zachary Penhale",
    };
    return n;
}

template <class T>
const T& pick(Rng& rng, const std::vector<T>& v) {
    return v[static_cast<std::size_t>(rng.below(v.size()))];
}

inline std::string capitalize(std::string s) {
    if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
    return s;
}

/// One narrative sentence; `cast` may be empty (then no names are used).
inline std::string sentence(Rng& rng, const Theme& th, const std::vector<std::string>& cast) {
    const std::string who = cast.empty() ? "the keeper" : pick(rng, cast);
    const std::string n1 = pick(rng, th.nouns), n2 = pick(rng, th.nouns);
    const std::string a1 = pick(rng, th.adjectives), v1 = pick(rng, th.verbs);
    const std::string place = pick(rng, th.places);
    switch (rng.below(7)) {
        case 0: return who + " " + v1 + " the " + a1 + " " + n1 + " near " + place + ".";
        case 1: return "In the year " + std::to_string(1820 + rng.below(90)) + ", " + who + " " + v1 + " a " + n1 + " at " + place + ".";
        case 2: return capitalize("the " + n1) + " was " + a1 + ", and " + who + " " + v1 + " it with " +
                       std::to_string(2 + rng.below(40)) + " companions.";
        case 3: return "Everyone at " + place + " remembered how " + who + " " + v1 + " the " + n2 + ".";
        case 4: return capitalize(a1) + " " + n1 + "s and " + a1 + " " + n2 + "s filled the days at " + place + ".";
        case 5: return who + " kept a notebook about the " + n1 + " and wrote that it was " + a1 + ".";
        default:
            return "After the " + n1 + " had been " + v1 + ", " + who + " walked to " + place + " and studied the " +
                   n2 + ".";
    }
}

inline std::string paragraph(Rng& rng, const Theme& th, const std::vector<std::string>& cast, std::size_t sentences) {
    std::vector<std::string> s;
    for (std::size_t i = 0; i < sentences; ++i) s.push_back(sentence(rng, th, cast));
    return join(s, " ");
}

/// Paragraphs until roughly `words` whitespace words are produced.
inline std::string body_text(Rng& rng, const Theme& th, const std::vector<std::string>& cast, std::size_t words) {
    std::vector<std::string> paras;
    std::size_t have = 0;
    while (have < words) {
        paras.push_back(paragraph(rng, th, cast, 3 + rng.below(4)));
        have += split_ws(paras.back()).size();
    }
    return join(paras, "\n\n");
}

struct CorpusSpec {
    std::size_t books = 8;
    std::size_t papers = 8;
    std::size_t min_words = 400;
    std::size_t max_words = 1400;
    std::uint64_t seed = 7;
};

struct ToyFile {
    std::string relpath;
    std::string content;
};

inline std::vector<ToyFile> corpus_files(const CorpusSpec& spec) {
    Rng rng(derive_seed(spec.seed, "toy-corpus"));
    const auto& names = character_names();
    std::vector<ToyFile> out;
    const auto words = [&] { return spec.min_words + rng.below(spec.max_words - spec.min_words + 1); };
    for (std::size_t i = 0; i < spec.books; ++i) {
        const Theme& th = themes()[i % themes().size()];
        std::vector<std::string> cast;
        for (std::size_t c = 0; c < 3; ++c) cast.push_back(names[(i * 3 + c) % names.size()]);
        const std::string title = "The " + capitalize(pick(rng, th.adjectives)) + " " + capitalize(pick(rng, th.nouns));
        std::string text = title + "\nAuthor: " + names[(i * 5 + 11) % names.size()] + "\n\n";
        text += "Chapter One\n\n" + body_text(rng, th, cast, words() / 2) + "\n\nChapter Two\n\n" +
                body_text(rng, th, cast, words() / 2) + "\n";
        char buf[32];
        std::snprintf(buf, sizeof buf, "books/book_%03zu.txt", i);
        out.push_back({buf, std::move(text)});
    }
    for (std::size_t i = 0; i < spec.papers; ++i) {
        const Theme& th = themes()[(i + 1) % themes().size()];
        const std::string subject = pick(rng, th.nouns);
        std::string text = "On the " + capitalize(pick(rng, th.adjectives)) + " " + capitalize(subject) +
                           ": A Field Study\nAuthor: " + names[(i * 7 + 3) % names.size()] + "\n\n";
        text += "Abstract\n\nWe report observations of the " + subject + " collected over " +
                std::to_string(3 + rng.below(20)) + " seasons.\n\n";
        text += "Introduction\n\n" + body_text(rng, th, {}, words() / 2) + "\n\nResults\n\n" +
                body_text(rng, th, {}, words() / 2) + "\n";
        char buf[32];
        std::snprintf(buf, sizeof buf, "papers/paper_%03zu.txt", i);
        out.push_back({buf, std::move(text)});
    }
    return out;
}

inline void write_corpus_dir(const fs::path& dir, const CorpusSpec& spec = {}) {
    for (const auto& f : corpus_files(spec)) write_file(dir / f.relpath, f.content);
}

// ---------------------------------------------------------------------------
// Haystack

/// Essay-style filler prose with paragraph breaks; never mentions the default needle.
inline std::string haystack(std::size_t words, std::uint64_t seed = 11) {
    static const std::vector<std::string> openers = {
        "Most founders learn this slowly.", "It is easy to underestimate how long good work takes.",
        "The surprising thing about small groups is how much they can do.",
        "Writing an essay is a way of finding out what you think.",
        "People who make things tend to distrust advice that cannot be tested.",
    };
    static const std::vector<std::string> subjects = {"a startup", "an essay", "a city",  "a programmer",
                                                      "a teacher", "a painter", "a school", "a committee"};
    static const std::vector<std::string> verbs = {"improves", "changes", "learns", "fails", "grows", "hesitates"};
    static const std::vector<std::string> reasons = {
        "when it listens to its users", "because the problem is harder than it looks",
        "after the first version ships", "once the easy ideas are used up",
        "if nobody is watching closely", "as long as the feedback is honest"};
    Rng rng(derive_seed(seed, "haystack"));
    std::vector<std::string> paras;
    std::size_t have = 0;
    while (have < words) {
        std::vector<std::string> s = {pick(rng, openers)};
        const std::size_t n = 3 + rng.below(4);
        for (std::size_t i = 0; i < n; ++i)
            s.push_back(capitalize(pick(rng, subjects)) + " " + pick(rng, verbs) + " " + pick(rng, reasons) + ".");
        paras.push_back(join(s, " "));
        have += split_ws(paras.back()).size();
    }
    return join(paras, "\n\n");
}

// ---------------------------------------------------------------------------
// Topic pool

struct TopicEntry {
    std::string topic;
    std::string user;
    std::string assistant;
};

/// 90 distinct discussion topics, each with a short user/assistant exchange.
inline std::vector<TopicEntry> topic_pool(std::uint64_t seed = 13) {
    static const std::vector<std::string> aspects = {"the history of", "the economics of", "beginner tips for"};
    static const std::vector<std::string> subjects = {
        "lighthouse keeping", "amateur astronomy", "bee keeping",      "urban cycling",     "sourdough baking",
        "glass blowing",      "jazz piano",        "mountain hiking",  "chess openings",    "origami",
        "kite flying",        "pottery",           "bird watching",    "coffee roasting",   "woodworking",
        "marathon training",  "calligraphy",       "rock climbing",    "home brewing",      "stamp collecting",
        "sailing",            "knitting",          "film photography", "urban gardening",   "fencing",
        "cheese making",      "orienteering",      "violin making",    "tea ceremonies",    "model railways"};
    Rng rng(derive_seed(seed, "topics"));
    std::vector<TopicEntry> out;
    for (const auto& a : aspects) {
        for (const auto& s : subjects) {
            const std::string topic = a + " " + s;
            TopicEntry e;
            e.topic = topic;
            e.user = "I would like to discuss the topic of " + topic + ".";
            e.assistant = "Sure! " + capitalize(topic) + " is a rich subject. Many people start with " +
                          std::to_string(2 + rng.below(9)) + " simple habits, and most of them find that patience " +
                          "matters more than equipment. A good first step is to join a local group.";
            out.push_back(std::move(e));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Auxiliary pools (native on-disk layouts)

/// Plain-text rows {"text": ...} in the style of a pretraining corpus.
inline std::vector<json> redpajama_rows(std::size_t n, std::uint64_t seed = 17) {
    Rng rng(derive_seed(seed, "redpajama"));
    std::vector<json> rows;
    for (std::size_t i = 0; i < n; ++i) {
        const Theme& th = themes()[i % themes().size()];
        rows.push_back({{"text", "Record " + std::to_string(i) + ". " + paragraph(rng, th, {}, 4 + rng.below(4))}});
    }
    return rows;
}

/// Instruction rows {"instruction", "input", "output"} in the style of a long-instruction set.
inline std::vector<json> longalpaca_rows(std::size_t n, std::uint64_t seed = 19) {
    Rng rng(derive_seed(seed, "longalpaca"));
    std::vector<json> rows;
    for (std::size_t i = 0; i < n; ++i) {
        const Theme& th = themes()[(i + 2) % themes().size()];
        const std::string doc = paragraph(rng, th, {character_names()[i % character_names().size()]}, 5);
        rows.push_back({{"instruction", "Summarize the following passage in one sentence (item " + std::to_string(i) + ")."},
                        {"input", doc},
                        {"output", sentence(rng, th, {character_names()[i % character_names().size()]})}});
    }
    return rows;
}

/// Writes corpus/{books,papers}/, pools/redpajama.jsonl and pools/longalpaca.jsonl under `dir`.
inline void write_toy_dataset(const fs::path& dir, const CorpusSpec& spec, std::size_t rp_rows, std::size_t la_rows) {
    write_corpus_dir(dir / "corpus", spec);
    write_file(dir / "pools" / "redpajama.jsonl", to_jsonl(redpajama_rows(rp_rows, derive_seed(spec.seed, "rp"))));
    write_file(dir / "pools" / "longalpaca.jsonl", to_jsonl(longalpaca_rows(la_rows, derive_seed(spec.seed, "la"))));
}

}  // namespace longctx::toy
