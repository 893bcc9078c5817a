// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "dmesr/error.hpp"
#include "dmesr/semantics.hpp"

namespace dmesr {

namespace {

constexpr std::string_view kTextLead = "The item has the following attributes: ";
constexpr std::string_view kTextInstruction =
    "Summarize the item based on the text above and describe it smoothly in one paragraph for recommendation.";

// Kept exactly as published, spelling included, so generated descriptions
// are comparable with the reference setup.
constexpr std::string_view kVisualTemplate =
    "Image data is given via local path {image path}. Analyze the provided image carefully, pay close attention to "
    "specific visual elements such as color schemes, main characters, prominent objects, and artistic style, and "
    "explicitly mention them in your description. The description should accurately reflect the image's theme, mood "
    "and atmosphere. Output only a well-structured and vivid paragraph for recommandation.";

constexpr std::string_view kHybridTemplate =
    "The item's text info is: {text info}. The image is given in {image path}.\n"
    "Carefully analyze the provided textual description and movie poster through the following iterative steps.\n"
    "\n"
    "Step 1: Initial Generation.\n"
    "Jointly analyze the item's text and image information to identify key thematic and visual elements relevant to "
    "recommendation, such as genre, emotional tone, main characters, setting, and target audience.\n"
    "Generate an initial paragraph that integrates the original textual content with complementary visual cues.\n"
    "\n"
    "Step 2: Recursive Refinement.\n"
    "Review the generated paragraph and reanalyze original modalities to detect missing or inconsistent details.\n"
    "Revise the description by adding omitted but relevant visual or textual information to improve completeness, "
    "coherence, and recommendation focus.\n"
    "\n"
    "Step 3: Final Output.\n"
    "Repeat Step 2 until no new information added, yielding a unified, recommendation-oriented description.";

std::string substitute(std::string_view tmpl, std::string_view key, const std::string& value) {
  std::string out(tmpl);
  for (auto pos = out.find(key); pos != std::string::npos; pos = out.find(key, pos + value.size())) {
    out.replace(pos, key.size(), value);
  }
  return out;
}

void require_attributes(const ItemAttributes& attrs) {
  if (attrs.attributes.empty()) throw Error("item has no textual attributes");
  for (const auto& [name, value] : attrs.attributes) {
    if (name.empty()) throw Error("attribute with an empty name");
  }
}

}  // namespace

std::string_view route_name(Route route) {
  switch (route) {
    case Route::text: return "text";
    case Route::visual: return "visual";
    case Route::hybrid: return "hybrid";
    case Route::original_text: return "orig";
  }
  throw Error("invalid route tag");
}

Route parse_route(std::string_view name) {
  for (Route r : kAllRoutes)
    if (route_name(r) == name) return r;
  throw Error("unknown route '" + std::string(name) + "' (expected text, visual, hybrid or orig)");
}

std::vector<Route> parse_routes(std::string_view list) {
  std::vector<Route> out;
  std::size_t start = 0;
  while (start <= list.size()) {
    const auto comma = std::min(list.find(',', start), list.size());
    const auto token = list.substr(start, comma - start);
    if (!token.empty()) {
      const Route r = parse_route(token);
      if (std::find(out.begin(), out.end(), r) == out.end()) out.push_back(r);
    }
    start = comma + 1;
  }
  if (out.empty()) throw Error("empty route list");
  return out;
}

std::string enumerate_attributes(const ItemAttributes& attrs) {
  require_attributes(attrs);
  std::string out;
  for (std::size_t i = 0; i < attrs.attributes.size(); ++i) {
    if (i) out += "; ";
    out += attrs.attributes[i].first;
    out += ": ";
    out += attrs.attributes[i].second;
  }
  return out;
}

std::string build_text_prompt(const ItemAttributes& attrs) {
  std::string out(kTextLead);
  out += enumerate_attributes(attrs);
  out += ". ";
  out += kTextInstruction;
  return out;
}

std::string build_visual_prompt(const std::string& image_path) {
  if (image_path.empty()) throw Error("visual prompt needs an image path");
  return substitute(kVisualTemplate, "{image path}", image_path);
}

std::string build_hybrid_prompt(const ItemAttributes& attrs, const std::string& image_path) {
  if (image_path.empty()) throw Error("hybrid prompt needs an image path");
  const auto text = enumerate_attributes(attrs);
  return substitute(substitute(kHybridTemplate, "{text info}", text), "{image path}", image_path);
}

std::string serialize_original_text(const ItemAttributes& attrs) { return enumerate_attributes(attrs); }

bool has_all_assets(const ItemAttributes& attrs) {
  return !attrs.attributes.empty() && attrs.image_path && !attrs.image_path->empty();
}

std::map<std::string, ItemAttributes> load_item_catalog(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open item catalog " + path);
  std::map<std::string, ItemAttributes> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      std::string id = j.at("item").is_string() ? j.at("item").get<std::string>() : j.at("item").dump();
      ItemAttributes attrs;
      if (j.contains("image") && !j.at("image").is_null()) attrs.image_path = j.at("image").get<std::string>();
      for (const auto& pair : j.value("attributes", nlohmann::json::array())) {
        if (!pair.is_array() || pair.size() != 2) throw ParseError("attribute must be a [name, value] pair", line_no);
        attrs.attributes.emplace_back(pair[0].get<std::string>(), pair[1].get<std::string>());
      }
      if (!out.emplace(std::move(id), std::move(attrs)).second) throw ParseError("duplicate item", line_no);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("bad catalog entry: ") + e.what(), line_no);
    }
  }
  return out;
}

}  // namespace dmesr
