#include "longctx/corpus.hpp"

#include "test_util.hpp"

using namespace longctx;
using longctx::test::TempDir;
using longctx::test::ws;

TEST(Normalize, LineEndingsControlsAndBlankRuns) {
    EXPECT_EQ(normalize("a\r\nb\rc"), "a\nb\nc");
    EXPECT_EQ(normalize("\xEF\xBB\xBFhi\x01\x7F there"), "hi there");
    EXPECT_EQ(normalize("p1\n\n\n\n\np2"), "p1\n\n\np2");
    EXPECT_EQ(normalize("tab\tkept"), "tab\tkept");
}

TEST(Normalize, Idempotent) {
    const std::string raw = "x\r\n\r\n\r\n\r\ny\x02z\n\n\n\n";
    const auto once = normalize(raw);
    EXPECT_EQ(normalize(once), once);
}

TEST(Utf8, InvalidSequencesReportOffset) {
    EXPECT_EQ(find_invalid_utf8("caf\xC3\xA9"), std::string_view::npos);
    EXPECT_EQ(find_invalid_utf8("ab\xC3"), 2u);
    EXPECT_EQ(find_invalid_utf8("a\xC0\x80"), 1u);    // overlong
    EXPECT_EQ(find_invalid_utf8("\xED\xA0\x80"), 0u);  // surrogate
    try {
        decode_text("ok\xFFno");
        FAIL();
    } catch (const DecodeError& e) {
        EXPECT_EQ(e.offset(), 2u);
    }
}

TEST(Decode, Latin1AndAscii) {
    EXPECT_EQ(decode_text("caf\xE9", "latin-1"), "caf\xC3\xA9");
    EXPECT_THROW(decode_text("caf\xE9", "ascii"), DecodeError);
    EXPECT_THROW(decode_text("x", "ebcdic"), ConfigError);
}

TEST(Meta, TitleAndAuthor) {
    const auto m = infer_meta("\n# The Lantern\nAuthor: Ada Brook\n\nBody.");
    EXPECT_EQ(m.at("title"), "The Lantern");
    EXPECT_EQ(m.at("author"), "Ada Brook");
}

TEST(Ingest, WalksTreeInfersKindsAndReportsBadFiles) {
    TempDir tmp;
    write_file(tmp / "books/one.txt", "Book One\nAuthor: A\n\nText of the book.");
    write_file(tmp / "papers/two.md", "Paper Two\n\nAbstract.");
    write_file(tmp / "misc/three.txt", "Generic text.");
    write_file(tmp / "misc/skip.bin", "ignored");
    write_file(tmp / "books/bad.txt", "broken \xFF byte");
    const auto r = ingest_dir(tmp.path(), ws());
    ASSERT_EQ(r.documents.size(), 3u);
    ASSERT_EQ(r.errors.size(), 1u);
    EXPECT_NE(r.errors[0].path.find("bad.txt"), std::string::npos);
    std::map<std::string, DocKind> kinds;
    for (const auto& d : r.documents) kinds[d.source_path] = d.kind;
    EXPECT_EQ(kinds.at("books/one.txt"), DocKind::book);
    EXPECT_EQ(kinds.at("papers/two.md"), DocKind::paper);
    EXPECT_EQ(kinds.at("misc/three.txt"), DocKind::generic);
    for (std::size_t i = 1; i < r.documents.size(); ++i) EXPECT_LT(r.documents[i - 1].id, r.documents[i].id);
}

TEST(Ingest, IdsDependOnRelativePathNotRoot) {
    TempDir a;
    write_file(a / "r1/books/x.txt", "Same text.");
    write_file(a / "r2/books/x.txt", "Same text.");
    write_file(a / "r3/books/x.txt", "Other text.");
    const auto id = [&](const char* root) { return ingest_dir(a / root, ws()).documents[0].id; };
    EXPECT_EQ(id("r1"), id("r2"));
    EXPECT_NE(id("r1"), id("r3"));
}

TEST(Ingest, EmptyOrMissingRoot) {
    TempDir tmp;
    EXPECT_THROW(ingest_dir(tmp / "nope", ws()), ConfigError);
    EXPECT_THROW(ingest_dir(tmp.path(), ws()), Error);
}

TEST(Ingest, KindFilter) {
    TempDir tmp;
    write_file(tmp / "books/one.txt", "Book.");
    write_file(tmp / "papers/two.txt", "Paper.");
    IngestOptions o;
    o.kinds = {DocKind::paper};
    const auto r = ingest_dir(tmp.path(), ws(), o);
    ASSERT_EQ(r.documents.size(), 1u);
    EXPECT_EQ(r.documents[0].kind, DocKind::paper);
}

TEST(CorpusFile, RoundTripIsByteStable) {
    TempDir tmp;
    write_file(tmp / "c/books/one.txt", "Book One\nAuthor: A\n\nText.");
    write_file(tmp / "c/two.txt", "Two.");
    const auto docs = ingest_dir(tmp / "c", ws()).documents;
    write_corpus(tmp / "corpus.jsonl", docs);
    const auto back = read_corpus(tmp / "corpus.jsonl");
    EXPECT_EQ(back, docs);
    write_corpus(tmp / "again.jsonl", back);
    EXPECT_EQ(read_file(tmp / "corpus.jsonl"), read_file(tmp / "again.jsonl"));
    const CorpusIndex idx(back);
    EXPECT_TRUE(idx.contains(docs[0].id));
    EXPECT_THROW(idx.at("doc-missing"), Error);
}
