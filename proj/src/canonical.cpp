#include <algorithm>
#include <functional>
#include <map>
#include <set>

#include "dilskit/diagram.hpp"

namespace dilskit {

namespace {

using Colors = std::map<std::string, std::size_t>;

std::string endpoint_label(const PortRef& ref, const Colors& colors) {
  if (ref.is_outer()) return "outer." + ref.port;
  return "#" + std::to_string(colors.at(ref.box)) + "." + ref.port;
}

std::map<std::string, std::string> signatures(const WiringDiagram& d, const Colors& colors) {
  std::map<std::string, std::vector<std::string>> entries;
  for (const auto& w : d.wires) {
    if (!w.dest.is_outer()) {
      entries[w.dest.box].push_back("<" + w.dest.port + "=" + endpoint_label(w.source, colors));
    }
    if (!w.source.is_outer()) {
      entries[w.source.box].push_back(">" + w.source.port + "=" + endpoint_label(w.dest, colors));
    }
  }
  std::map<std::string, std::string> sig;
  for (const auto& [id, iface] : d.inner) {
    auto& e = entries[id];
    std::sort(e.begin(), e.end());
    std::string s = std::to_string(colors.at(id)) + "|";
    for (const auto& x : e) s += x + ";";
    sig.emplace(id, std::move(s));
  }
  return sig;
}

// Iterated neighbourhood refinement run jointly over several diagrams, so
// the resulting color numbers are comparable between them.
std::vector<Colors> refine(const std::vector<const WiringDiagram*>& ds) {
  std::vector<Colors> colors(ds.size());
  {
    std::set<std::string> all;
    for (const auto* d : ds) {
      for (const auto& [id, iface] : d->inner) all.insert(to_string(iface));
    }
    std::vector<std::string> ranked(all.begin(), all.end());
    for (std::size_t k = 0; k < ds.size(); ++k) {
      for (const auto& [id, iface] : ds[k]->inner) {
        auto s = to_string(iface);
        colors[k][id] = std::lower_bound(ranked.begin(), ranked.end(), s) - ranked.begin();
      }
    }
  }
  auto class_count = [&] {
    std::set<std::size_t> c;
    for (const auto& cs : colors) {
      for (const auto& [id, col] : cs) c.insert(col);
    }
    return c.size();
  };
  std::size_t classes = class_count();
  std::size_t max_rounds = 1;
  for (const auto* d : ds) max_rounds += d->inner.size();
  for (std::size_t round = 0; round < max_rounds; ++round) {
    std::vector<std::map<std::string, std::string>> sigs;
    std::set<std::string> all;
    for (std::size_t k = 0; k < ds.size(); ++k) {
      sigs.push_back(signatures(*ds[k], colors[k]));
      for (const auto& [id, s] : sigs.back()) all.insert(s);
    }
    std::vector<std::string> ranked(all.begin(), all.end());
    for (std::size_t k = 0; k < ds.size(); ++k) {
      for (const auto& [id, s] : sigs[k]) {
        colors[k][id] = std::lower_bound(ranked.begin(), ranked.end(), s) - ranked.begin();
      }
    }
    auto now = class_count();
    if (now == classes) break;
    classes = now;
  }
  return colors;
}

WiringDiagram rename(const WiringDiagram& d, const std::map<std::string, std::string>& names) {
  WiringDiagram r;
  r.outer = d.outer;
  for (const auto& [id, iface] : d.inner) r.inner.emplace(names.at(id), iface);
  auto map_ref = [&](PortRef ref) {
    if (!ref.is_outer()) ref.box = names.at(ref.box);
    return ref;
  };
  for (const auto& w : d.wires) r.wires.push_back({map_ref(w.source), map_ref(w.dest)});
  normalize(r);
  return r;
}

}  // namespace

WiringDiagram canonical_form(const WiringDiagram& d) {
  auto colors = refine({&d}).front();
  std::vector<std::pair<std::size_t, std::string>> order;
  for (const auto& [id, c] : colors) order.emplace_back(c, id);
  std::sort(order.begin(), order.end());
  std::map<std::string, std::string> names;
  for (std::size_t i = 0; i < order.size(); ++i) names[order[i].second] = "b" + std::to_string(i);
  return rename(d, names);
}

bool structurally_equal(const WiringDiagram& a, const WiringDiagram& b) {
  if (a.outer != b.outer || a.inner.size() != b.inner.size() || a.wires.size() != b.wires.size()) {
    return false;
  }
  auto colors = refine({&a, &b});
  const auto& ca = colors[0];
  const auto& cb = colors[1];

  std::multiset<std::size_t> ma, mb;
  for (const auto& [id, c] : ca) ma.insert(c);
  for (const auto& [id, c] : cb) mb.insert(c);
  if (ma != mb) return false;

  std::multiset<Wire> target(b.wires.begin(), b.wires.end());

  // Most constrained boxes first.
  std::vector<std::string> order;
  for (const auto& [id, c] : ca) order.push_back(id);
  std::stable_sort(order.begin(), order.end(), [&](const auto& x, const auto& y) {
    return ma.count(ca.at(x)) < ma.count(ca.at(y));
  });

  std::map<std::string, std::string> mapping;
  std::set<std::string> used;

  auto mapped = [&](const PortRef& ref, PortRef& out) {
    out = ref;
    if (ref.is_outer()) return true;
    auto it = mapping.find(ref.box);
    if (it == mapping.end()) return false;
    out.box = it->second;
    return true;
  };
  // Every wire of `a` whose ends are both mapped must appear in `b`, with
  // multiplicity.
  auto consistent = [&] {
    std::multiset<Wire> image;
    for (const auto& w : a.wires) {
      Wire m;
      if (mapped(w.source, m.source) && mapped(w.dest, m.dest)) image.insert(m);
    }
    for (auto it = image.begin(); it != image.end(); it = image.upper_bound(*it)) {
      if (image.count(*it) > target.count(*it)) return false;
    }
    return true;
  };

  std::function<bool(std::size_t)> search = [&](std::size_t k) {
    if (k == order.size()) return true;
    const auto& x = order[k];
    for (const auto& [y, c] : cb) {
      if (c != ca.at(x) || used.count(y) || a.inner.at(x) != b.inner.at(y)) continue;
      mapping[x] = y;
      used.insert(y);
      if (consistent() && search(k + 1)) return true;
      mapping.erase(x);
      used.erase(y);
    }
    return false;
  };
  return search(0);
}

}  // namespace dilskit
