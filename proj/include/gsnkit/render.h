#pragma once

#include <map>
#include <string>
#include <vector>

#include "gsnkit/model.h"

namespace gsnkit {

/// Deterministic layered placement used by the SVG export and the editor's
/// auto-layout. Ranks are longest-path depths from the root over all
/// relationships; within a rank nodes are ordered by the barycenter of
/// their parents' positions (ties by id).
struct NodePlacement {
  std::string id;
  int rank = 0;
  int order = 0;
  double x = 0;  // center
  double y = 0;  // center
  double width = 0;
  double height = 0;
};

struct Layout {
  std::vector<NodePlacement> nodes;  // canonical element order
  double width = 0;
  double height = 0;

  const NodePlacement* find(const std::string& id) const;
};

/// Throws Error(kInvalidStructure).
Layout layered_layout(const GoalStructure& structure);

/// Graphviz description; one node statement per element and one edge
/// statement per relationship. Throws Error(kInvalidStructure).
std::string export_dot(const GoalStructure& structure);

/// Standalone SVG document. Throws Error(kInvalidStructure).
std::string export_svg(const GoalStructure& structure);

}  // namespace gsnkit
