#include "gsnkit/render.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "gsnkit/error.h"
#include "gsnkit/prose.h"

namespace gsnkit {

namespace {

constexpr double kMargin = 30.0;
constexpr double kColumnWidth = 210.0;
constexpr double kNodeWidth = 180.0;
constexpr double kRowGap = 60.0;
constexpr double kLineHeight = 14.0;
constexpr const char* kHollowDiamond = "◇";

void require_valid(const GoalStructure& structure, const char* what) {
  auto violations = validate(structure);
  if (has_errors(violations)) {
    throw Error(ErrorCode::kInvalidStructure,
                fmt::format("cannot {} an invalid structure ({} violations)", what,
                            violations.size()));
  }
}

std::vector<std::string> wrap(std::string_view text, std::size_t width) {
  std::vector<std::string> lines;
  std::string current;
  std::size_t pos = 0;
  while (pos < text.size()) {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    std::size_t end = pos;
    while (end < text.size() && !std::isspace(static_cast<unsigned char>(text[end]))) ++end;
    if (end == pos) break;
    std::string_view word = text.substr(pos, end - pos);
    if (!current.empty() && current.size() + 1 + word.size() > width) {
      lines.push_back(std::move(current));
      current.clear();
    }
    if (!current.empty()) current += ' ';
    current += word;
    pos = end;
  }
  if (!current.empty()) lines.push_back(std::move(current));
  return lines;
}

std::size_t wrap_width(ElementKind kind) {
  return kind == ElementKind::kSolution ? 18 : 28;
}

double node_height(const GsnElement& e) {
  const double lines = static_cast<double>(wrap(e.statement, wrap_width(e.kind)).size()) + 1.0;
  if (e.kind == ElementKind::kSolution) return std::max(90.0, 24.0 + lines * kLineHeight * 1.2);
  return std::max(60.0, 20.0 + lines * kLineHeight);
}

std::string xml_escape(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string dot_escape(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) { return fmt::format("{:.1f}", v); }

}  // namespace

const NodePlacement* Layout::find(const std::string& id) const {
  for (const auto& n : nodes) {
    if (n.id == id) return &n;
  }
  return nullptr;
}

Layout layered_layout(const GoalStructure& structure) {
  require_valid(structure, "lay out");
  const auto order = canonical_element_order(structure);

  std::map<std::string, std::vector<std::string>> parents;
  std::map<std::string, std::vector<std::string>> children;
  for (const GsnRelationship& r : structure.relationships()) {
    parents[r.target].push_back(r.source);
    children[r.source].push_back(r.target);
  }

  // Longest-path ranks via Kahn's algorithm over the whole relationship DAG.
  std::map<std::string, int> rank;
  std::map<std::string, std::size_t> pending;
  std::vector<std::string> ready;
  for (const GsnElement* e : order) {
    pending[e->id] = parents[e->id].size();
    rank[e->id] = 0;
    if (pending[e->id] == 0) ready.push_back(e->id);
  }
  while (!ready.empty()) {
    std::string node = ready.back();
    ready.pop_back();
    for (const std::string& child : children[node]) {
      rank[child] = std::max(rank[child], rank[node] + 1);
      if (--pending[child] == 0) ready.push_back(child);
    }
  }

  int max_rank = 0;
  for (const auto& [_, r] : rank) max_rank = std::max(max_rank, r);
  std::vector<std::vector<const GsnElement*>> rows(static_cast<std::size_t>(max_rank) + 1);
  for (const GsnElement* e : order) rows[static_cast<std::size_t>(rank[e->id])].push_back(e);

  std::size_t widest = 0;
  for (const auto& row : rows) widest = std::max(widest, row.size());
  const double total_width = 2 * kMargin + static_cast<double>(widest) * kColumnWidth;

  Layout layout;
  layout.width = total_width;
  std::map<std::string, NodePlacement> placed;
  double top = kMargin;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto& row = rows[r];
    std::map<std::string, double> barycenter;
    for (const GsnElement* e : row) {
      const auto& ps = parents[e->id];
      double sum = 0;
      for (const std::string& p : ps) sum += placed.at(p).x;
      barycenter[e->id] = ps.empty() ? 0.0 : sum / static_cast<double>(ps.size());
    }
    std::stable_sort(row.begin(), row.end(), [&](const GsnElement* a, const GsnElement* b) {
      if (barycenter[a->id] != barycenter[b->id]) return barycenter[a->id] < barycenter[b->id];
      return a->id < b->id;
    });

    double row_height = 0;
    for (const GsnElement* e : row) row_height = std::max(row_height, node_height(*e));
    const double row_width = static_cast<double>(row.size()) * kColumnWidth;
    const double left = (total_width - row_width) / 2.0;
    for (std::size_t i = 0; i < row.size(); ++i) {
      const GsnElement* e = row[i];
      NodePlacement p;
      p.id = e->id;
      p.rank = static_cast<int>(r);
      p.order = static_cast<int>(i);
      p.x = left + (static_cast<double>(i) + 0.5) * kColumnWidth;
      p.y = top + row_height / 2.0;
      p.height = node_height(*e);
      p.width = e->kind == ElementKind::kSolution ? p.height : kNodeWidth;
      placed[e->id] = p;
    }
    top += row_height + kRowGap;
  }
  layout.height = top - kRowGap + kMargin;
  for (const GsnElement* e : order) layout.nodes.push_back(placed.at(e->id));
  return layout;
}

std::string export_dot(const GoalStructure& structure) {
  require_valid(structure, "export");
  std::string out = fmt::format("digraph \"{}\" {{\n", dot_escape(structure.name()));
  out += "  graph [rankdir=TB];\n";
  out += "  node [fontname=\"Helvetica\", fontsize=10];\n";
  const auto order = canonical_element_order(structure);
  for (const GsnElement* e : order) {
    std::string attrs;
    switch (e->kind) {
      case ElementKind::kGoal: attrs = "shape=box"; break;
      case ElementKind::kStrategy: attrs = "shape=parallelogram"; break;
      case ElementKind::kSolution: attrs = "shape=circle"; break;
      case ElementKind::kContext: attrs = "shape=box, style=rounded"; break;
      case ElementKind::kAssumption: attrs = "shape=ellipse, xlabel=\"A\""; break;
      case ElementKind::kJustification: attrs = "shape=ellipse, xlabel=\"J\""; break;
    }
    std::string label = dot_escape(e->id) + "\\n" + dot_escape(e->statement);
    if (e->undeveloped) label += fmt::format("\\n{}", kHollowDiamond);
    out += fmt::format("  \"{}\" [{}, label=\"{}\"];\n", dot_escape(e->id), attrs, label);
  }
  for (const GsnElement* e : order) {
    for (const GsnRelationship& r : structure.relationships()) {
      if (r.source != e->id) continue;
      const char* head = r.kind == RelationshipKind::kSupportedBy ? "normal" : "empty";
      out += fmt::format("  \"{}\" -> \"{}\" [arrowhead={}];\n", dot_escape(r.source),
                         dot_escape(r.target), head);
    }
  }
  out += "}\n";
  return out;
}

std::string export_svg(const GoalStructure& structure) {
  const Layout layout = layered_layout(structure);
  std::string out;
  out += fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" "
      "viewBox=\"0 0 {0} {1}\" font-family=\"Helvetica, Arial, sans-serif\" font-size=\"11\">\n",
      num(layout.width), num(layout.height));
  out += fmt::format("  <title>{}</title>\n", xml_escape(structure.name()));
  out +=
      "  <defs>\n"
      "    <marker id=\"arrow-solid\" viewBox=\"0 0 10 10\" refX=\"10\" refY=\"5\" "
      "markerWidth=\"8\" markerHeight=\"8\" orient=\"auto\">"
      "<path d=\"M0,0 L10,5 L0,10 z\" fill=\"black\"/></marker>\n"
      "    <marker id=\"arrow-hollow\" viewBox=\"0 0 10 10\" refX=\"10\" refY=\"5\" "
      "markerWidth=\"8\" markerHeight=\"8\" orient=\"auto\">"
      "<path d=\"M0,0 L10,5 L0,10 z\" fill=\"white\" stroke=\"black\"/></marker>\n"
      "  </defs>\n";

  for (const NodePlacement& n : layout.nodes) {
    for (const GsnRelationship& r : structure.relationships()) {
      if (r.source != n.id) continue;
      const NodePlacement* t = layout.find(r.target);
      const bool solid = r.kind == RelationshipKind::kSupportedBy;
      out += fmt::format(
          "  <g class=\"edge\" data-kind=\"{}\" data-source=\"{}\" data-target=\"{}\">"
          "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\" "
          "marker-end=\"url(#{})\"/></g>\n",
          to_string(r.kind), xml_escape(r.source), xml_escape(r.target), num(n.x),
          num(n.y + n.height / 2), num(t->x), num(t->y - t->height / 2),
          solid ? "arrow-solid" : "arrow-hollow");
    }
  }

  for (const NodePlacement& n : layout.nodes) {
    const GsnElement& e = *structure.find(n.id);
    const double x0 = n.x - n.width / 2;
    const double y0 = n.y - n.height / 2;
    out += fmt::format("  <g class=\"node\" id=\"node-{}\" data-id=\"{}\" data-kind=\"{}\">",
                       xml_escape(e.id), xml_escape(e.id), to_string(e.kind));
    const char* style = "fill=\"white\" stroke=\"black\"";
    switch (e.kind) {
      case ElementKind::kGoal:
        out += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" {}/>", num(x0),
                           num(y0), num(n.width), num(n.height), style);
        break;
      case ElementKind::kStrategy: {
        const double skew = 15;
        out += fmt::format("<polygon points=\"{},{} {},{} {},{} {},{}\" {}/>", num(x0 + skew),
                           num(y0), num(x0 + n.width), num(y0), num(x0 + n.width - skew),
                           num(y0 + n.height), num(x0), num(y0 + n.height), style);
        break;
      }
      case ElementKind::kSolution:
        out += fmt::format("<circle cx=\"{}\" cy=\"{}\" r=\"{}\" {}/>", num(n.x), num(n.y),
                           num(n.height / 2), style);
        break;
      case ElementKind::kContext:
        out += fmt::format(
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" rx=\"18\" ry=\"18\" {}/>",
            num(x0), num(y0), num(n.width), num(n.height), style);
        break;
      case ElementKind::kAssumption:
      case ElementKind::kJustification:
        out += fmt::format(
            "<ellipse cx=\"{}\" cy=\"{}\" rx=\"{}\" ry=\"{}\" {}/>"
            "<text x=\"{}\" y=\"{}\" font-weight=\"bold\">{}</text>",
            num(n.x), num(n.y), num(n.width / 2), num(n.height / 2), style,
            num(x0 + n.width - 8), num(y0 + n.height), e.kind == ElementKind::kAssumption ? "A" : "J");
        break;
    }
    const auto lines = wrap(e.statement, wrap_width(e.kind));
    const double text_top = n.y - (static_cast<double>(lines.size()) + 1) * kLineHeight / 2 + 11;
    out += fmt::format("<text text-anchor=\"middle\" x=\"{}\" y=\"{}\">", num(n.x), num(text_top));
    out += fmt::format("<tspan x=\"{}\" dy=\"0\" font-weight=\"bold\">{}</tspan>", num(n.x),
                       xml_escape(e.id));
    for (const auto& line : lines) {
      out += fmt::format("<tspan x=\"{}\" dy=\"{}\">{}</tspan>", num(n.x), num(kLineHeight),
                         xml_escape(line));
    }
    out += "</text>";
    if (e.undeveloped) {
      const double by = n.y + n.height / 2;
      out += fmt::format(
          "<polygon class=\"undeveloped\" points=\"{},{} {},{} {},{} {},{}\" fill=\"white\" "
          "stroke=\"black\"/>",
          num(n.x), num(by), num(n.x + 8), num(by + 8), num(n.x), num(by + 16), num(n.x - 8),
          num(by + 8));
    }
    out += "</g>\n";
  }
  out += "</svg>\n";
  return out;
}

}  // namespace gsnkit
