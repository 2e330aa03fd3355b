#include "longctx/mock.hpp"

#include "test_util.hpp"

using namespace longctx;
using longctx::test::bpe;

TEST(TeacherGrammar, ParsesNumberedPairs) {
    const auto p = parse_teacher_output("Here you go:\n1. Q: Who keeps the lantern?\n   A: Ada Brook.\n\n"
                                        "2) **Q:** Where is the harbour?\n**A:** To the north,\nbeyond the gate.\n",
                                        TaskKind::MultiDetailQAHomogeneous);
    ASSERT_EQ(p.size(), 2u);
    EXPECT_EQ(p[0].question, "Who keeps the lantern?");
    EXPECT_EQ(p[0].answer, "Ada Brook.");
    EXPECT_EQ(p[1].answer, "To the north, beyond the gate.");
}

TEST(TeacherGrammar, InlineAnswerAndRoundTrip) {
    const auto p = parse_teacher_output("Q: One? A: Yes.", TaskKind::SingleDetailQA);
    ASSERT_EQ(p.size(), 1u);
    EXPECT_EQ(p[0].answer, "Yes.");
    const std::vector<QAPair> pairs = {{"What rose?", "The tide.", {}}, {"Who sang?", "A gull, loudly.", {}}};
    EXPECT_EQ(parse_teacher_output(format_pairs(pairs), TaskKind::SingleDetailQA), pairs);
}

TEST(TeacherGrammar, MalformedInputCarriesOffendingLine) {
    try {
        parse_teacher_output("1. Q: Dangling question?\n\n2. Q: Another?\nA: fine", TaskKind::SingleDetailQA);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.offending_line(), "1. Q: Dangling question?");
    }
    try {
        parse_teacher_output("A: orphan answer", TaskKind::SingleDetailQA);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.offending_line(), "A: orphan answer");
    }
    EXPECT_THROW(parse_teacher_output("no pairs at all", TaskKind::SingleDetailQA), ParseError);
    EXPECT_THROW(parse_teacher_output("Q: Tell me about Ada.\nA: She sails.", TaskKind::BiographySummarization),
                 ParseError);
    EXPECT_NO_THROW(parse_teacher_output("Q: Write a biography of Ada Brook.\nA: She sails.", TaskKind::BiographySummarization));
}

TEST(Prompts, RenderPerTaskAndBudget) {
    const auto single = render_prompt(TaskKind::SingleDetailQA, {"A short passage about the tide."}, bpe());
    EXPECT_EQ(single.template_id, "single_detail_qa_v1");
    EXPECT_NE(single.request.messages[0].content.find("A short passage about the tide."), std::string::npos);
    EXPECT_EQ(single.digest, render_prompt(TaskKind::SingleDetailQA, {"A short passage about the tide."}, bpe()).digest);

    const auto het = render_prompt(TaskKind::MultiDetailQAHeterogeneous, {"First.", "Second."}, bpe());
    EXPECT_NE(het.request.messages[0].content.find("<text id=\"2\">"), std::string::npos);

    PromptOptions tight;
    tight.teacher_input_budget = 5;
    try {
        render_prompt(TaskKind::MultiDetailQAHomogeneous, {"one two three four five six seven eight nine ten"}, bpe(), tight);
        FAIL();
    } catch (const PreconditionError& e) {
        EXPECT_NE(std::string(e.what()).find("exceeding the teacher input budget"), std::string::npos);
    }
    EXPECT_THROW(render_prompt(TaskKind::SingleDetailQA, {"a", "b"}, bpe()), PreconditionError);
    EXPECT_THROW(render_prompt(TaskKind::SingleDetailQA, {"  "}, bpe()), PreconditionError);
}

TEST(Prompts, ExcerptsFitBudgetAndCoverEveryPiece) {
    Rng rng(3);
    std::vector<std::string> pieces;
    for (int i = 0; i < 3; ++i) pieces.push_back(toy::body_text(rng, toy::themes()[i], {}, 1500));
    const auto ex = excerpt_material(pieces, 1200, bpe(), 128);
    ASSERT_EQ(ex.size(), 3u);
    std::size_t total = 0;
    for (const auto& e : ex) {
        total += bpe().count(e);
        EXPECT_NE(e.find("[excerpt 1/"), std::string::npos);
    }
    EXPECT_LE(total, 1200u);
}

class SynthTest : public ::testing::Test {
protected:
    void SetUp() override {
        toy::CorpusSpec spec;
        spec.books = 2;
        spec.papers = 2;
        for (const auto& f : toy::corpus_files(spec)) {
            const DocKind kind = starts_with(f.relpath, "books/") ? DocKind::book : DocKind::paper;
            docs.push_back(make_document(f.relpath, kind, f.content, bpe()));
        }
        corpus = std::make_unique<CorpusIndex>(docs);
        whole.pieces = {{docs[0].id, 0, docs[0].text.size()}};
        finalize(whole, *corpus, bpe());
        het.pieces = {{docs[2].id, 0, docs[2].text.size()}, {docs[3].id, 0, docs[3].text.size()}};
        finalize(het, *corpus, bpe());
        anchored = whole;
        anchored.anchor = slice_segments(docs[0], 128, BoundaryRule::sentence, bpe())[2];
        finalize(anchored, *corpus, bpe());
        ep.id = "teacher";
        ep.model_name = "mock-teacher";
    }
    std::vector<Document> docs;
    std::unique_ptr<CorpusIndex> corpus;
    ContextAssembly whole, het, anchored;
    EndpointConfig ep;
};

TEST_F(SynthTest, EveryTaskProducesPairs) {
    Gateway gw(ep, mock::teacher_transport());
    const std::vector<SynthJob> jobs = {{&anchored, TaskKind::SingleDetailQA},
                                        {&whole, TaskKind::MultiDetailQAHomogeneous},
                                        {&whole, TaskKind::BiographySummarization},
                                        {&het, TaskKind::MultiDetailQAHeterogeneous}};
    const auto out = synthesize_all(jobs, *corpus, bpe(), gw, 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        ASSERT_TRUE(out[i].record) << out[i].skip_reason;
        EXPECT_EQ(out[i].record->task, jobs[i].task);
        EXPECT_EQ(out[i].record->assembly_id, jobs[i].assembly->id);
        EXPECT_FALSE(out[i].record->pairs.empty());
        EXPECT_EQ(out[i].reasks, 0);
    }
    // Single-detail answers come from the anchor segment.
    const auto& s = *anchored.anchor;
    const std::string seg = docs[0].text.substr(s.begin, s.end - s.begin);
    for (const auto& p : out[0].record->pairs) EXPECT_NE(seg.find(p.answer), std::string::npos) << p.answer;
    for (const auto& p : out[2].record->pairs) EXPECT_TRUE(starts_with(p.question, "Write a biography of "));
}

TEST_F(SynthTest, FlakyTeacherIsReasked) {
    Gateway gw(ep, mock::teacher_transport(true));
    const auto o = synthesize(whole, TaskKind::MultiDetailQAHomogeneous, *corpus, bpe(), gw);
    ASSERT_TRUE(o.record) << o.skip_reason;
    EXPECT_EQ(o.reasks, 1);
    EXPECT_EQ(o.record->reasks, 1);

    SynthOptions no_reask;
    no_reask.max_reasks = 0;
    Gateway gw2(ep, mock::teacher_transport(true));
    const auto o2 = synthesize(whole, TaskKind::MultiDetailQAHomogeneous, *corpus, bpe(), gw2, no_reask);
    EXPECT_FALSE(o2.record);
    EXPECT_NE(o2.skip_reason.find("unparseable"), std::string::npos);
}

TEST_F(SynthTest, IncompatibleTaskIsAPrecondition) {
    Gateway gw(ep, mock::teacher_transport());
    EXPECT_THROW(synthesize(whole, TaskKind::SingleDetailQA, *corpus, bpe(), gw), PreconditionError);
    EXPECT_THROW(synthesize(het, TaskKind::MultiDetailQAHomogeneous, *corpus, bpe(), gw), PreconditionError);
    EXPECT_THROW(synthesize(whole, TaskKind::MultiDetailQAHeterogeneous, *corpus, bpe(), gw), PreconditionError);
}

TEST_F(SynthTest, TransportFailureBecomesSkip) {
    ep.retry.max_attempts = 1;
    Gateway gw(ep, std::make_shared<MockTransport>([](const std::string&, const json&) { return HttpResult{403, "no", {}}; }));
    const auto o = synthesize(whole, TaskKind::MultiDetailQAHomogeneous, *corpus, bpe(), gw);
    EXPECT_FALSE(o.record);
    EXPECT_NE(o.skip_reason.find("teacher call failed"), std::string::npos);
}

TEST_F(SynthTest, OversizedMaterialIsExcerpted) {
    SynthOptions o;
    o.prompt.teacher_input_budget = 256;
    Gateway gw(ep, mock::teacher_transport());
    const auto r = synthesize(whole, TaskKind::MultiDetailQAHomogeneous, *corpus, bpe(), gw, o);
    ASSERT_TRUE(r.record) << r.skip_reason;
    EXPECT_TRUE(r.record->material_excerpted);
}

TEST_F(SynthTest, RecordsRoundTrip) {
    test::TempDir tmp;
    Gateway gw(ep, mock::teacher_transport());
    const auto o = synthesize(whole, TaskKind::BiographySummarization, *corpus, bpe(), gw);
    ASSERT_TRUE(o.record);
    write_synth_records(tmp / "r.jsonl", {*o.record});
    EXPECT_EQ(read_synth_records(tmp / "r.jsonl")[0], *o.record);
}
