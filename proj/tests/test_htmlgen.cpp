#include "triplekit/htmlgen.hpp"

#include <memory>
#include <random>

#include "doctest.h"

using namespace triplekit;
using namespace triplekit::htmlgen;

namespace {

int count_tokens(const TokenStream& ts, HtmlToken::Kind kind, const std::string& tag = "") {
  int n = 0;
  for (const HtmlToken& t : ts)
    if (t.kind == kind && (tag.empty() || t.tag == tag)) ++n;
  return n;
}

} // namespace

TEST_CASE("simple tag renders open/text/close") {
  TokenStream ts = render(tag("b", {text("bold")}));
  REQUIRE(ts.size() == 3);
  CHECK(ts[0].kind == HtmlToken::Kind::Open);
  CHECK(ts[0].tag == "b");
  CHECK(ts[1].kind == HtmlToken::Kind::Text);
  CHECK(ts[1].text == "bold");
  CHECK(ts[2].kind == HtmlToken::Kind::Close);
  CHECK(ts[2].tag == "b");
}

TEST_CASE("affiliation table: rule expansion produces header plus data rows") {
  std::vector<std::pair<std::string, std::string>> pairs = {
      {"wielemaker", "uva"}, {"huang", "vu"}, {"van der meij", "vu"}};
  auto affiliations = [&]() {
    SpecList rows;
    for (const auto& [name, aff] : pairs)
      rows.push_back(tag("tr", {tag("td", {text(name)}), tag("td", {text(aff)})}));
    return rows;
  };
  HtmlSpec table =
      tag("table", {{"border", markup::AttrScalar::make_int(2)}, {"align", markup::AttrScalar::make_text("center")}},
          {tag("tr", {tag("th", {text("Name")}), tag("th", {text("Affiliation")})}),
           rule("affiliations", affiliations)});

  TokenStream ts = render(table);
  CHECK(count_tokens(ts, HtmlToken::Kind::Open, "tr") == 4);  // 1 header + 3 data
  CHECK(count_tokens(ts, HtmlToken::Kind::Open, "th") == 2);
  CHECK(count_tokens(ts, HtmlToken::Kind::Open, "td") == 6);
  // balance over every tag
  for (const char* t : {"table", "tr", "th", "td"})
    CHECK(count_tokens(ts, HtmlToken::Kind::Open, t) == count_tokens(ts, HtmlToken::Kind::Close, t));

  // and the text reparses with one header row and three data rows
  markup::NodeList doc = markup::parse_tree(tokens_to_text(ts));
  REQUIRE(doc.size() == 1);
  CHECK(doc[0].element().children.size() == 4);
}

TEST_CASE("empty rule expansion contributes no tokens") {
  TokenStream ts = render(tag("div", {rule("nothing", []() { return SpecList{}; })}));
  REQUIRE(ts.size() == 2);
  CHECK(ts[0].kind == HtmlToken::Kind::Open);
  CHECK(ts[1].kind == HtmlToken::Kind::Close);
}

TEST_CASE("compositionality: body renders concatenate inside the wrapper") {
  HtmlSpec s1 = tag("i", {text("a")});
  HtmlSpec s2 = tag("b", {text("b")});
  TokenStream inner1 = render(s1);
  TokenStream inner2 = render(s2);
  TokenStream whole = render(tag("p", {s1, s2}));
  TokenStream expect;
  expect.push_back({HtmlToken::Kind::Open, "p", {}, {}});
  expect.insert(expect.end(), inner1.begin(), inner1.end());
  expect.insert(expect.end(), inner2.begin(), inner2.end());
  expect.push_back({HtmlToken::Kind::Close, "p", {}, {}});
  REQUIRE(whole.size() == expect.size());
  for (size_t i = 0; i < whole.size(); ++i) {
    CHECK(whole[i].kind == expect[i].kind);
    CHECK(whole[i].tag == expect[i].tag);
    CHECK(whole[i].text == expect[i].text);
  }
}

TEST_CASE("tokens_to_text quotes and collapses empty elements") {
  CHECK(tokens_to_text(render(tag("p", {text("x")}))) == "<p>x</p>");
  CHECK(tokens_to_text(render(tag("p", {text("a<b")}))) == "<p>a&lt;b</p>");
  CHECK(tokens_to_text(render(tag("br"))) == "<br/>");
  CHECK(tokens_to_text(render(tag("a", {{"href", markup::AttrScalar::make_text("x?a=1&b=2")}}, {text("l")}))) ==
        "<a href=\"x?a=1&amp;b=2\">l</a>");
}

TEST_CASE("generator failure reports the node path") {
  HtmlSpec bad = tag("table", {tag("tr", {rule("boom", []() -> SpecList {
                                            throw std::runtime_error("nope");
                                          })})});
  try {
    render(bad);
    FAIL("expected Error");
  } catch (const Error& e) {
    std::string msg = e.what();
    CHECK(msg.find("table > tr > \\boom") != std::string::npos);
  }
}

TEST_CASE("void elements reject body content") {
  CHECK_THROWS_AS(render(tag("br", {text("x")})), Error);
  CHECK_THROWS_AS(render(tag("img", {tag("b")})), Error);
}

TEST_CASE("hand-built unbalanced streams are rejected") {
  TokenStream bad;
  bad.push_back({HtmlToken::Kind::Open, "a", {}, {}});
  bad.push_back({HtmlToken::Kind::Close, "b", {}, {}});
  CHECK_THROWS_AS(tokens_to_text(bad), Error);
  TokenStream open_only;
  open_only.push_back({HtmlToken::Kind::Open, "a", {}, {}});
  CHECK_THROWS_AS(tokens_to_text(open_only), Error);
}

namespace {

std::mt19937& rng() {
  static std::mt19937 gen(7);
  return gen;
}

std::string rand_name() {
  std::uniform_int_distribution<int> len(1, 5);
  std::uniform_int_distribution<int> ch('a', 'z');
  std::string s;
  for (int i = 0, n = len(rng()); i < n; ++i) s += static_cast<char>(ch(rng()));
  return s;
}

HtmlSpec rand_spec(int depth, markup::MarkupNode* skeleton) {
  std::uniform_int_distribution<int> kind(0, 9);
  int k = depth > 0 ? kind(rng()) : 9;
  if (k < 6) {
    std::string name = rand_name();
    std::uniform_int_distribution<int> nchild(0, 3);
    markup::Element skel{name, {}, {}};
    SpecList body;
    for (int i = 0, n = nchild(rng()); i < n; ++i) {
      markup::MarkupNode child;
      HtmlSpec s = rand_spec(depth - 1, &child);
      // adjacent text leaves coalesce when reparsed; keep the skeleton exact
      if (child.is_text() && !skel.children.empty() && skel.children.back().is_text()) continue;
      body.push_back(std::move(s));
      skel.children.push_back(std::move(child));
    }
    if (kind(rng()) < 3) {
      skel.attributes.emplace_back("id", markup::AttrValue::atomic("v&<1"));
    }
    HtmlAttrs attrs;
    for (auto& [an, av] : skel.attributes)
      attrs.emplace_back(an, markup::AttrScalar::make_text(av.to_text()));
    *skeleton = markup::MarkupNode(std::move(skel));
    return tag(name, attrs, std::move(body));
  }
  if (k < 8) {
    // rule call expanding to one element
    markup::MarkupNode inner;
    HtmlSpec s = rand_spec(depth - 1, &inner);
    *skeleton = std::move(inner);
    auto shared = std::make_shared<HtmlSpec>(std::move(s));
    return rule("gen", [shared]() { return SpecList{*shared}; });
  }
  std::string t = "t<&" + rand_name();
  *skeleton = markup::text(t);
  return text(t);
}

} // namespace

TEST_CASE("randomized structural oracle: render -> text -> parse equals skeleton") {
  for (int i = 0; i < 150; ++i) {
    markup::MarkupNode skeleton;
    std::uniform_int_distribution<int> d(1, 3);
    HtmlSpec spec = rand_spec(d(rng()), &skeleton);
    if (!skeleton.is_element()) continue;  // top-level text: parse returns text node list
    std::string doc = tokens_to_text(render(spec));
    CAPTURE(doc);
    markup::NodeList back = markup::parse_tree(doc);
    REQUIRE(back.size() == 1);
    CHECK(back[0] == skeleton);
  }
}

TEST_CASE("well-formedness: every rendered spec parses") {
  for (int i = 0; i < 100; ++i) {
    markup::MarkupNode skeleton;
    HtmlSpec spec = rand_spec(3, &skeleton);
    CHECK_NOTHROW(markup::parse_tree(tokens_to_text(render(spec))));
  }
}
