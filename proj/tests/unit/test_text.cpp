#include <gtest/gtest.h>

#include <random>

#include "unislide/assets.hpp"
#include "unislide/content.hpp"
#include "unislide/html.hpp"
#include "unislide/png.hpp"
#include "unislide/text.hpp"

using namespace unislide;

TEST(Text, Utf8RoundTripOnRandomCodePoints) {
    std::mt19937 rng(3);
    std::uniform_int_distribution<char32_t> pick(1, 0x10FFFF);
    for (int trial = 0; trial < 200; ++trial) {
        std::u32string s;
        for (int i = 0; i < 50; ++i) {
            char32_t c = pick(rng);
            if (c >= 0xD800 && c <= 0xDFFF) c = 'x';
            s.push_back(c);
        }
        const auto bytes = text::encode_utf8(s);
        EXPECT_EQ(text::decode_utf8(bytes), s);
        EXPECT_EQ(text::code_point_count(bytes), s.size());
    }
}

TEST(Text, SubstrAndTruncateCountCodePoints) {
    const std::string s = "héllo 中文 ß";
    EXPECT_EQ(text::substr_cp(s, 1, 4), "éllo");
    EXPECT_EQ(text::substr_cp(s, 6, 2), "中文");
    EXPECT_EQ(text::substr_cp(s, 100, 3), "");
    EXPECT_EQ(text::truncate_cp(s, 2), "hé");
    EXPECT_EQ(text::truncate_cp(s, 100), s);
}

TEST(Text, TokenizeLowercasesAndSplitsOnPunctuation) {
    EXPECT_EQ(text::tokenize("Battery-prices FELL, 47%!"),
              (std::vector<std::string>{"battery", "prices", "fell", "47"}));
    EXPECT_EQ(text::tokenize("Café crème"), (std::vector<std::string>{"café", "crème"}));
    EXPECT_TRUE(text::tokenize("  ...  ").empty());
}

TEST(Text, SplitSentences) {
    const auto s = text::split_sentences("One fact. Two facts! Three?\nFour");
    EXPECT_EQ(s, (std::vector<std::string>{"One fact.", "Two facts!", "Three?", "Four"}));
    EXPECT_EQ(text::split_sentences("Rate was 0.35 dollars.").size(), 1u);
}

TEST(Text, Sha256KnownVectors) {
    EXPECT_EQ(text::sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    EXPECT_EQ(text::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Text, Base64KnownVectors) {
    EXPECT_EQ(text::base64_encode(""), "");
    EXPECT_EQ(text::base64_encode("f"), "Zg==");
    EXPECT_EQ(text::base64_encode("fo"), "Zm8=");
    EXPECT_EQ(text::base64_encode("foobar"), "Zm9vYmFy");
}

TEST(Text, ExtractJsonBlockIgnoresFencesAndProse) {
    EXPECT_EQ(text::extract_json_block("Sure:\n```json\n{\"a\": [1, 2]}\n```\nDone"), "{\"a\": [1, 2]}");
    EXPECT_EQ(text::extract_json_block("list: [1, {\"b\": \"]\"}] tail"), "[1, {\"b\": \"]\"}]");
    EXPECT_FALSE(text::extract_json_block("no json here").has_value());
    EXPECT_FALSE(text::extract_json_block("{ unbalanced").has_value());
}

TEST(Text, FixedFormatting) {
    EXPECT_EQ(text::fixed(7.71375, 2), "7.71");
    EXPECT_EQ(text::fixed(-0.5, 1), "-0.5");
}

TEST(Text, Fnv1aIsSeedSensitive) {
    EXPECT_EQ(text::fnv1a64("abc"), text::fnv1a64("abc"));
    EXPECT_NE(text::fnv1a64("abc", 1), text::fnv1a64("abc", 2));
}

TEST(Html, ParsesNestedElementsWithOffsets) {
    const std::string m = "<div id=\"a\"><p class=\"x y\">Hi &amp; bye</p><img src=\"i.png\"></div>";
    const auto r = html::parse(m);
    ASSERT_TRUE(r.errors.empty());
    const auto* p = html::find_first(r.root, [](const html::Node& n) { return n.tag == "p"; });
    ASSERT_NE(p, nullptr);
    EXPECT_TRUE(p->has_class("y"));
    EXPECT_EQ(m.substr(p->begin, p->end - p->begin), "<p class=\"x y\">Hi &amp; bye</p>");
    EXPECT_EQ(html::visible_text(*p), "Hi & bye");
    const auto* img = html::find_first(r.root, [](const html::Node& n) { return n.tag == "img"; });
    ASSERT_NE(img, nullptr);
    EXPECT_EQ(*img->attr("src"), "i.png");
}

TEST(Html, ReportsMismatchedTags) {
    EXPECT_FALSE(html::parse("<div><p>open</div>").errors.empty());
    EXPECT_FALSE(html::parse("<div>").errors.empty());
}

TEST(Html, VisibleTextSkipsStyleAndScript) {
    const auto r = html::parse("<html><head><style>p{}</style></head><body><script>x</script><p>Seen</p></body></html>");
    EXPECT_EQ(text::trim(html::visible_text(r.root)), "Seen");
}

TEST(Html, EscapeRoundTrip) {
    const std::string raw = "a < b & \"c\" > 'd'";
    EXPECT_EQ(html::decode_entities(html::escape_attribute(raw)), raw);
    EXPECT_EQ(html::decode_entities(html::escape_text(raw)), raw);
}

TEST(Html, InlineStyleParsing) {
    const auto props = html::parse_inline_style("left: 10px; top:20px ;color: var(--c)");
    ASSERT_EQ(props.size(), 3u);
    EXPECT_EQ(props[0], (std::pair<std::string, std::string>{"left", "10px"}));
    EXPECT_EQ(props[2].second, "var(--c)");
}

TEST(Html, TextSegmentsAreInnermostBlocks) {
    const auto r = html::parse("<ul><li>One</li><li>Two <b>bold</b></li></ul><p>Para</p>");
    const auto segs = html::text_segments(r.root);
    ASSERT_EQ(segs.size(), 3u);
    EXPECT_EQ(html::visible_text(*segs[1]), "Two bold");
}

TEST(Content, TokensDropStopwordsKeepNumbers) {
    const auto t = content::content_tokens("The access rose to 68 percent");
    EXPECT_TRUE(t.count("access"));
    EXPECT_TRUE(t.count("68"));
    EXPECT_FALSE(t.count("the"));
    EXPECT_FALSE(t.count("to"));
}

TEST(Content, CoverageAndSegmentMatching) {
    const auto point = content::content_tokens("battery degradation drives maintenance cost");
    EXPECT_DOUBLE_EQ(content::coverage(point, point), 1.0);
    EXPECT_DOUBLE_EQ(content::coverage({}, point), 0.0);
    EXPECT_TRUE(content::segment_matches(content::content_tokens("battery degradation is costly"), point));
    EXPECT_FALSE(content::segment_matches(content::content_tokens("solar panels in schools and clinics"), point));
}

TEST(Png, EncodesValidSignatureAndDimensions) {
    png::Image img(7, 3, 0x102030);
    img.fill_rect(1, 1, 3, 2, 0xFF0000);
    const auto bytes = png::encode(img);
    ASSERT_GT(bytes.size(), 33u);
    EXPECT_EQ(bytes.substr(0, 8), std::string("\x89PNG\r\n\x1a\n", 8));
    EXPECT_EQ(bytes.substr(12, 4), "IHDR");
    EXPECT_EQ(static_cast<unsigned char>(bytes[19]), 7);
    EXPECT_EQ(static_cast<unsigned char>(bytes[23]), 3);
    EXPECT_EQ(bytes.substr(bytes.size() - 8, 4), "IEND");
}

TEST(Png, HexColorParsing) {
    EXPECT_EQ(png::parse_hex_color("#1a2B3c", 0), 0x1A2B3Cu);
    EXPECT_EQ(png::parse_hex_color("blue", 7), 7u);
}

TEST(Assets, RubricsAndPromptsAreEmbedded) {
    for (const char* id : {"shared/engagement", "shared/instruction_fulfillment", "scenario/coverage_point"}) {
        const auto r = assets::rubric(id, "judge");
        EXPECT_FALSE(r.text.empty()) << id;
    }
    EXPECT_FALSE(assets::text("prompts/outline.txt").empty());
    EXPECT_FALSE(assets::text("schemas/style_schema.json").empty());
    try {
        assets::text("prompts/missing.txt");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::missing_file);
    }
}
