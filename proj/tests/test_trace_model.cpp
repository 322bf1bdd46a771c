#include <gtest/gtest.h>

#include <algorithm>
#include <iterator>
#include <random>
#include <set>

#include "leakscope/errors.hpp"
#include "leakscope/trace_id_set.hpp"
#include "leakscope/trace_model.hpp"

using namespace leakscope;

namespace {

ImageTable toy_images() { return ImageTable::from_files(std::vector<std::string>{"[extern]", "/index.js", "target.js"}); }

}  // namespace

TEST(Address, EncodesLineAndColumn) {
  EXPECT_EQ(encode_address(2, 11, 15).offset, 0x000B000FU);
  EXPECT_EQ(encode_address(2, 1, 0).offset, 0x00010000U);
}

TEST(Address, RejectsOutOfRange) {
  EXPECT_THROW(encode_address(3, 70000, 0), encoding_error);
  EXPECT_THROW(encode_address(3, 5, 70000), encoding_error);
}

TEST(Address, DecodesToFileLineColumn) {
  ImageTable images = toy_images();
  SourceLocation loc = decode_address({2, 0x000B000F}, images);
  EXPECT_EQ(loc.file, "target.js");
  EXPECT_EQ(loc.line, 11U);
  EXPECT_EQ(loc.column, 15U);
  EXPECT_EQ(to_string(loc), "target.js:11:15");
}

TEST(Address, ExternNames) {
  ImageTable images = toy_images();
  images.add_extern_name(extern_name_key("parseInt"), "parseInt");
  SourceLocation loc = decode_address(encode_extern("parseInt"), images);
  EXPECT_EQ(to_string(loc), "[extern]:parseInt");
  EXPECT_EQ(format_address(encode_extern("parseInt"), images), "[extern]:parseInt");
}

TEST(Address, UnknownImage) {
  ImageTable images = toy_images();
  EXPECT_THROW(decode_address({99, 1}, images), lookup_error);
}

TEST(Address, FormatsUnresolvedSentinel) { EXPECT_EQ(format_address(kUnresolvedAddress, toy_images()), "<?>"); }

TEST(Address, RoundTripProperty) {
  std::vector<std::string> files{"[extern]"};
  for (int i = 1; i < 20; ++i) files.push_back("f" + std::to_string(i) + ".js");
  ImageTable images = ImageTable::from_files(files);
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::uint32_t> image(1, 19), line(1, 65535), column(0, 65535);
  for (int i = 0; i < 10000; ++i) {
    std::uint32_t im = image(rng), l = line(rng), c = column(rng);
    SourceLocation loc = decode_address(encode_address(im, l, c), images);
    ASSERT_EQ(loc.file, files[im]);
    ASSERT_EQ(loc.line, l);
    ASSERT_EQ(loc.column, c);
  }
}

TEST(Address, OrderingMatchesLineColumn) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::uint32_t> line(1, 65535), column(0, 65535);
  for (int i = 0; i < 10000; ++i) {
    std::uint32_t l1 = line(rng), c1 = column(rng), l2 = line(rng), c2 = column(rng);
    if (i % 3 == 0) l2 = l1;
    bool lex = std::pair(l1, c1) < std::pair(l2, c2);
    ASSERT_EQ(encode_address(1, l1, c1) < encode_address(1, l2, c2), lex);
  }
}

TEST(Address, PropertyOffsetsStayAboveIndices) {
  EXPECT_NE(property_offset("length") & kPropertyOffsetBit, 0U);
  EXPECT_EQ(property_offset("length"), property_offset("length"));
  EXPECT_NE(property_offset("length"), property_offset("size"));
}

TEST(ImageTableTest, ExternIsImageZero) {
  ImageTable images = toy_images();
  EXPECT_EQ(images.at(0).kind, ImageKind::external);
  EXPECT_EQ(images.find("target.js"), std::optional<std::uint32_t>(2));
  EXPECT_FALSE(images.find("other.js").has_value());
}

TEST(TraceIdSetTest, BasicOperations) {
  TraceIdSet a{0, 3, 70, 200};
  EXPECT_EQ(a.size(), 4U);
  EXPECT_TRUE(a.contains(70));
  EXPECT_FALSE(a.contains(71));
  EXPECT_EQ(a.to_string(), "0, 3, 70, 200");
  a.erase(200);
  EXPECT_EQ(a, (TraceIdSet{0, 3, 70}));
  TraceIdSet b{3, 4};
  EXPECT_EQ(a & b, (TraceIdSet{3}));
  EXPECT_EQ(a - b, (TraceIdSet{0, 70}));
  EXPECT_EQ((a | b).size(), 4U);
  EXPECT_TRUE((TraceIdSet{3}).is_subset_of(a));
  EXPECT_EQ(TraceIdSet::range(3), (TraceIdSet{0, 1, 2}));
  EXPECT_EQ(a.first(), std::optional<TraceId>(0));
  EXPECT_FALSE(TraceIdSet{}.first().has_value());
}

TEST(TraceIdSetTest, MatchesStdSetModel) {
  std::mt19937_64 rng(3);
  for (int round = 0; round < 200; ++round) {
    TraceIdSet a, b;
    std::set<TraceId> ma, mb;
    for (int i = 0; i < 50; ++i) {
      TraceId x = static_cast<TraceId>(rng() % 300), y = static_cast<TraceId>(rng() % 300);
      a.insert(x), ma.insert(x);
      b.insert(y), mb.insert(y);
    }
    std::vector<TraceId> expect;
    std::set_intersection(ma.begin(), ma.end(), mb.begin(), mb.end(), std::back_inserter(expect));
    ASSERT_EQ((a & b).to_vector(), expect);
    expect.clear();
    std::set_difference(ma.begin(), ma.end(), mb.begin(), mb.end(), std::back_inserter(expect));
    ASSERT_EQ((a - b).to_vector(), expect);
    ASSERT_EQ(a.intersects(b), !(a & b).empty());
    ASSERT_EQ(a < b, ma < mb);
  }
}
