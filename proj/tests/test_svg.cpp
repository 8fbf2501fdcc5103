#include <doctest.h>

#include "fixture_model.hpp"
#include "snmt/error.hpp"
#include "snmt/svg.hpp"

using namespace snmt;
using namespace snmt::testing;

namespace {

std::size_t count(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + 1)) ++n;
  return n;
}

// Text of the <text> elements inside the group with the given class.
std::vector<std::string> labels(const std::string& svg, const std::string& group) {
  std::vector<std::string> out;
  const auto begin = svg.find("<g class=\"" + group + "\"");
  REQUIRE(begin != std::string::npos);
  const auto end = svg.find("</g>", begin);
  for (auto pos = svg.find("<text", begin); pos < end; pos = svg.find("<text", pos + 1)) {
    const auto open = svg.find('>', pos) + 1;
    out.push_back(svg.substr(open, svg.find("</text>", open) - open));
  }
  return out;
}

}  // namespace

TEST_CASE("render_attention_svg structure") {
  SUBCASE("1x1 full-intensity cell") {
    const AttentionMatrix m{{{1.0}}, {"a"}, {"b"}};
    const auto svg = render_attention_svg(m);
    CHECK(svg.starts_with("<?xml"));
    CHECK(count(svg, "data-row=") == 1);
    CHECK(count(svg, "fill=\"#ffffff\" data-row") == 1);
    CHECK(labels(svg, "col-labels") == std::vector<std::string>{"a"});
    CHECK(labels(svg, "row-labels") == std::vector<std::string>{"b"});
  }

  SUBCASE("2x3 grid") {
    const AttentionMatrix m{{{0.0, 0.5, 0.5}, {0.25, 0.25, 0.5}}, {"x", "y", "z"}, {"p", "q"}};
    const auto svg = render_attention_svg(m);
    CHECK(count(svg, "data-row=") == 6);
    CHECK(labels(svg, "col-labels").size() == 3);
    CHECK(labels(svg, "row-labels").size() == 2);
    // Luminance is linear in alpha: 0 -> black, 0.5 -> mid gray, 0.25 -> 64.
    CHECK(svg.find("fill=\"#000000\" data-row=\"0\" data-col=\"0\"") != std::string::npos);
    CHECK(svg.find("fill=\"#808080\" data-row=\"0\" data-col=\"1\"") != std::string::npos);
    CHECK(svg.find("fill=\"#404040\" data-row=\"1\" data-col=\"0\"") != std::string::npos);
    CHECK(render_attention_svg(m) == svg);
  }

  SUBCASE("labels are escaped") {
    const AttentionMatrix m{{{1.0}}, {"<start>"}, {"a&b\""}};
    const auto svg = render_attention_svg(m);
    CHECK(labels(svg, "col-labels") == std::vector<std::string>{"&lt;start&gt;"});
    CHECK(labels(svg, "row-labels") == std::vector<std::string>{"a&amp;b&quot;"});
  }

  SUBCASE("invalid matrices") {
    CHECK_THROWS_AS(render_attention_svg(AttentionMatrix{}), DimensionError);
    CHECK_THROWS_AS(render_attention_svg(AttentionMatrix{{{}}, {}, {"a"}}), DimensionError);
    CHECK_THROWS_AS(render_attention_svg(AttentionMatrix{{{1.0}, {0.5, 0.5}}, {"a", "b"}, {"c", "d"}}),
                    DimensionError);
    CHECK_THROWS_AS(render_attention_svg(AttentionMatrix{{{1.0}}, {"a", "b"}, {"c"}}), DimensionError);
    CHECK_THROWS_AS(render_attention_svg(AttentionMatrix{{{1.5}}, {"a"}, {"c"}}), DomainError);
  }
}

TEST_CASE("heatmaps of the fixture sentences carry the plotted token axes") {
  const auto& tm = fixture_run().model;
  struct Plot {
    const char* source;
    std::vector<std::string> columns;
    std::vector<std::string> rows;
  };
  // The question sentence differs: "?" is a token of its own here.
  const std::vector<Plot> plots{
      {"अहं बहु व्यस्तः अस्मि",
       {"&lt;start&gt;", "अहं", "बहु", "व्यस्तः", "अस्मि", "&lt;end&gt;"},
       {"मैं", "बहुत", "व्यस्त", "हूँ", "&lt;end&gt;"}},
      {"अहं एकाकिनी अस्मि",
       {"&lt;start&gt;", "अहं", "एकाकिनी", "अस्मि", "&lt;end&gt;"},
       {"मैं", "अकेली", "हूँ", "&lt;end&gt;"}},
      {"अहं तर्तुं शक्नोमि",
       {"&lt;start&gt;", "अहं", "तर्तुं", "शक्नोमि", "&lt;end&gt;"},
       {"मैं", "तैर", "सकता", "हूँ", "&lt;end&gt;"}},
      {"अन्तः आगन्तुं शक्नोमि?",
       {"&lt;start&gt;", "अन्तः", "आगन्तुं", "शक्नोमि", "?", "&lt;end&gt;"},
       {"अंदर", "आ", "सकता", "हूँ", "क्या", "?", "&lt;end&gt;"}},
  };
  for (const auto& p : plots) {
    const auto r = translate_text(tm, p.source, 50);
    REQUIRE(r.attention);
    const auto svg = render_attention_svg(*r.attention);
    CHECK(labels(svg, "col-labels") == p.columns);
    CHECK(labels(svg, "row-labels") == p.rows);
    CHECK(count(svg, "data-row=") == p.columns.size() * p.rows.size());
  }
}
