/*
 * Copyright 2026 The hierloss Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hierloss/common.hpp"
#include "json.hpp"

namespace hierloss {

// One retained classification level: the nodes at `depth` plus every leaf
// shallower than `depth`, in pre-order.
struct Level {
  std::size_t depth = 0;
  std::vector<NodeId> classes;

  bool operator==(const Level&) const = default;
};

// Immutable rooted label tree. Node ids are pre-order positions (root = 0)
// and children keep the order of the source document.
class Taxonomy {
 public:
  struct Node {
    std::string name;
    std::optional<NodeId> parent;
    std::vector<NodeId> children;

    bool operator==(const Node&) const = default;
  };

  // Parent links given as (name, parent name); exactly one entry must have no
  // parent. Children are ordered by first appearance in `links`.
  static Taxonomy from_parent_links(
      const std::vector<std::pair<std::string, std::optional<std::string>>>& links) {
    detail::require(!links.empty(), "taxonomy: empty document");
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < links.size(); ++i) {
      const auto& name = links[i].first;
      detail::require(index.emplace(name, i).second, "taxonomy: duplicate node name '", name, "'");
    }
    std::optional<std::size_t> root;
    std::vector<std::vector<std::size_t>> children(links.size());
    for (std::size_t i = 0; i < links.size(); ++i) {
      const auto& parent = links[i].second;
      if (!parent) {
        detail::require(!root, "taxonomy: more than one root ('", links[*root].first, "', '",
                        links[i].first, "')");
        root = i;
        continue;
      }
      auto it = index.find(*parent);
      detail::require(it != index.end(), "taxonomy: unknown parent '", *parent, "' of '",
                      links[i].first, "'");
      detail::require(it->second != i, "taxonomy: cycle at '", links[i].first, "'");
      children[it->second].push_back(i);
    }
    detail::require(root.has_value(), "taxonomy: cycle (no node without a parent)");

    Taxonomy t;
    std::vector<std::pair<std::size_t, std::optional<NodeId>>> stack{{*root, std::nullopt}};
    while (!stack.empty()) {
      auto [src, parent] = stack.back();
      stack.pop_back();
      const NodeId id = t.nodes_.size();
      t.nodes_.push_back(Node{links[src].first, parent, {}});
      if (parent) t.nodes_[*parent].children.push_back(id);
      for (auto it = children[src].rbegin(); it != children[src].rend(); ++it) {
        stack.emplace_back(*it, id);
      }
    }
    // Anything not reached from the root sits on a parent cycle.
    detail::require(t.nodes_.size() == links.size(), "taxonomy: cycle among ",
                    links.size() - t.nodes_.size(), " node(s) unreachable from the root");
    t.finalise();
    return t;
  }

  // Nested {"name": ..., "children": [...]} document with one top-level object.
  static Taxonomy from_json(const nlohmann::json& doc) {
    detail::require(doc.is_object() && !doc.empty(), "taxonomy: empty document");
    std::vector<std::pair<std::string, std::optional<std::string>>> links;
    std::vector<std::pair<const nlohmann::json*, std::optional<std::string>>> stack{{&doc, std::nullopt}};
    while (!stack.empty()) {
      auto [node, parent] = stack.back();
      stack.pop_back();
      detail::require(node->is_object(), "taxonomy: node must be an object");
      auto name = node->find("name");
      detail::require(name != node->end() && name->is_string(), "taxonomy: node without a string 'name'");
      links.emplace_back(name->get<std::string>(), parent);
      auto kids = node->find("children");
      if (kids == node->end() || kids->is_null()) continue;
      detail::require(kids->is_array(), "taxonomy: 'children' of '", links.back().first,
                      "' must be an array");
      for (auto it = kids->rbegin(); it != kids->rend(); ++it) {
        stack.emplace_back(&*it, links.back().first);
      }
    }
    return from_parent_links(links);
  }

  static Taxonomy parse(std::string_view text) {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      detail::fail("taxonomy: malformed JSON: ", e.what());
    }
    return from_json(doc);
  }

  nlohmann::json to_json() const { return to_json(root()); }

  std::size_t size() const { return nodes_.size(); }
  NodeId root() const { return 0; }
  const Node& node(NodeId n) const { return nodes_.at(check(n)); }
  const std::string& name(NodeId n) const { return node(n).name; }
  const std::optional<NodeId>& parent(NodeId n) const { return node(n).parent; }
  const std::vector<NodeId>& children(NodeId n) const { return node(n).children; }
  bool is_leaf(NodeId n) const { return children(n).empty(); }
  // Leaves in pre-order.
  const std::vector<NodeId>& leaves() const { return leaves_; }

  std::optional<NodeId> find(std::string_view name) const {
    auto it = by_name_.find(std::string(name));
    if (it == by_name_.end()) return std::nullopt;
    return it->second;
  }

  NodeId id_of(std::string_view name) const {
    auto id = find(name);
    detail::require(id.has_value(), "taxonomy: unknown node '", name, "'");
    return *id;
  }

  // Edges from the root (root depth 0).
  std::size_t depth(NodeId n) const { return depth_.at(check(n)); }

  bool is_ancestor_or_self(NodeId ancestor, NodeId descendant) const {
    check(ancestor);
    if (depth(descendant) < depth(ancestor)) return false;
    return ancestor_at_depth(descendant, depth(ancestor)) == ancestor;
  }

  // The ancestor-or-self of `n` at depth `d` (d <= depth(n)).
  NodeId ancestor_at_depth(NodeId n, std::size_t d) const {
    detail::require(d <= depth(n), "taxonomy: depth ", d, " below node '", name(n), "'");
    while (depth_[n] > d) n = *nodes_[n].parent;
    return n;
  }

  NodeId lca(NodeId a, NodeId b) const {
    check(a);
    check(b);
    while (depth_[a] > depth_[b]) a = *nodes_[a].parent;
    while (depth_[b] > depth_[a]) b = *nodes_[b].parent;
    while (a != b) {
      a = *nodes_[a].parent;
      b = *nodes_[b].parent;
    }
    return a;
  }

  // Edge count from `descendant` up to `ancestor`.
  std::size_t node_distance(NodeId descendant, NodeId ancestor) const {
    detail::require(is_ancestor_or_self(ancestor, descendant), "taxonomy: '", name(ancestor),
                    "' is not an ancestor of '", name(descendant), "'");
    return depth_[descendant] - depth_[ancestor];
  }

  // Longest root-to-leaf path (H_T) and longest leaf-to-leaf path (D_T).
  std::size_t height() const { return height_; }
  std::size_t diameter() const { return diameter_; }

  // Classification levels, shallowest first. A depth is kept when it holds at
  // least two nodes; the deepest depth is always kept when there are at least
  // two leaves, and its class set is then every leaf.
  const std::vector<Level>& levels() const { return levels_; }

  // Index into levels() for a depth, if that depth is retained.
  std::optional<std::size_t> level_index(std::size_t depth) const {
    for (std::size_t i = 0; i < levels_.size(); ++i) {
      if (levels_[i].depth == depth) return i;
    }
    return std::nullopt;
  }

  NodeId target_at_level(NodeId leaf, std::size_t level_depth) const {
    detail::require(is_leaf(leaf), "taxonomy: '", name(leaf), "' is not a leaf");
    detail::require(level_index(level_depth).has_value(), "taxonomy: level ", level_depth,
                    " is not a retained classification level");
    return ancestor_at_depth(leaf, std::min(level_depth, depth(leaf)));
  }

  bool operator==(const Taxonomy& other) const { return nodes_ == other.nodes_; }

 private:
  Taxonomy() = default;

  NodeId check(NodeId n) const {
    detail::require(n < nodes_.size(), "taxonomy: invalid node id ", n);
    return n;
  }

  nlohmann::json to_json(NodeId n) const {
    nlohmann::json out;
    out["name"] = nodes_[n].name;
    if (!nodes_[n].children.empty()) {
      auto& kids = out["children"] = nlohmann::json::array();
      for (NodeId c : nodes_[n].children) kids.push_back(to_json(c));
    }
    return out;
  }

  void finalise() {
    depth_.assign(nodes_.size(), 0);
    for (NodeId n = 0; n < nodes_.size(); ++n) {
      by_name_.emplace(nodes_[n].name, n);
      if (nodes_[n].parent) depth_[n] = depth_[*nodes_[n].parent] + 1;
      if (nodes_[n].children.empty()) leaves_.push_back(n);
      height_ = std::max(height_, depth_[n]);
    }

    // Deepest leaf below each node; reverse pre-order visits children first.
    std::vector<std::size_t> below(nodes_.size(), 0);
    for (NodeId n = nodes_.size(); n-- > 0;) {
      std::size_t best = 0, second = 0;
      for (NodeId c : nodes_[n].children) {
        const std::size_t h = below[c] + 1;
        if (h > best) {
          second = best;
          best = h;
        } else if (h > second) {
          second = h;
        }
      }
      below[n] = best;
      if (nodes_[n].children.size() >= 2) diameter_ = std::max(diameter_, best + second);
    }

    std::vector<std::size_t> width(height_ + 1, 0);
    for (NodeId n = 0; n < nodes_.size(); ++n) ++width[depth_[n]];
    for (std::size_t d = 1; d <= height_; ++d) {
      const bool deepest = d == height_;
      if (width[d] < 2 && !(deepest && leaves_.size() >= 2)) continue;
      Level level{d, {}};
      for (NodeId n = 0; n < nodes_.size(); ++n) {
        if (depth_[n] == d || (depth_[n] < d && nodes_[n].children.empty())) level.classes.push_back(n);
      }
      levels_.push_back(std::move(level));
    }
  }

  std::vector<Node> nodes_;
  std::unordered_map<std::string, NodeId> by_name_;
  std::vector<std::size_t> depth_;
  std::vector<NodeId> leaves_;
  std::vector<Level> levels_;
  std::size_t height_ = 0;
  std::size_t diameter_ = 0;
};

}  // namespace hierloss
