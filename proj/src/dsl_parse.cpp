#include <algorithm>
#include <cctype>
#include <charconv>
#include <set>

#include "dilskit/dsl.hpp"

namespace dilskit {

ParseError::ParseError(const std::string& message, Span at, std::vector<std::string> expected)
    : Error([&] {
        std::string s = std::to_string(at.line) + ":" + std::to_string(at.column) + ": " + message;
        if (!expected.empty()) {
          s += " (expected ";
          for (std::size_t i = 0; i < expected.size(); ++i) {
            if (i) s += i + 1 == expected.size() ? " or " : ", ";
            s += expected[i];
          }
          s += ")";
        }
        return s;
      }()),
      span_(at),
      message_(message),
      expected_(std::move(expected)) {}

namespace {

enum class Tok { ident, number, punct, end };

struct Token {
  Tok type;
  std::string text;
  double value = 0.0;
  Span span;
};

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '/';
}

std::vector<Token> lex(std::string_view src) {
  std::vector<Token> out;
  int line = 1, col = 1;
  std::size_t i = 0;
  auto advance = [&](std::size_t n) {
    for (std::size_t k = 0; k < n; ++k, ++i) {
      if (src[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
  };
  while (i < src.size()) {
    char c = src[i];
    if (c == '#') {
      while (i < src.size() && src[i] != '\n') advance(1);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      advance(1);
      continue;
    }
    Span at{line, col};
    if (ident_start(c)) {
      std::size_t j = i;
      while (j < src.size() && ident_char(src[j])) ++j;
      out.push_back({Tok::ident, std::string(src.substr(i, j - i)), 0.0, at});
      advance(j - i);
      continue;
    }
    if (c == '-' && i + 1 < src.size() && src[i + 1] == '>') {
      out.push_back({Tok::punct, "->", 0.0, at});
      advance(2);
      continue;
    }
    auto digit_at = [&](std::size_t k) {
      return k < src.size() && std::isdigit(static_cast<unsigned char>(src[k]));
    };
    bool numeric = digit_at(i) || (c == '.' && digit_at(i + 1)) ||
                   ((c == '-' || c == '+') && i + 1 < src.size() &&
                    (digit_at(i + 1) || (src[i + 1] == '.' && digit_at(i + 2))));
    if (numeric) {
      std::size_t j = i;
      if (src[j] == '-' || src[j] == '+') ++j;
      while (j < src.size() && (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '.' ||
                                ((src[j] == '-' || src[j] == '+') &&
                                 (src[j - 1] == 'e' || src[j - 1] == 'E')))) {
        ++j;
      }
      std::string text(src.substr(i, j - i));
      const char* first = text.data();
      if (*first == '+') ++first;
      double v = 0.0;
      auto [end, ec] = std::from_chars(first, text.data() + text.size(), v);
      if (ec != std::errc() || end != text.data() + text.size()) {
        throw ParseError("malformed number '" + text + "'", at);
      }
      out.push_back({Tok::number, text, v, at});
      advance(j - i);
      continue;
    }
    if (std::string_view("{}[]():;,.=").find(c) != std::string_view::npos) {
      out.push_back({Tok::punct, std::string(1, c), 0.0, at});
      advance(1);
      continue;
    }
    // Anything else becomes a token no rule accepts, so the parser reports
    // it together with what it expected there.
    std::size_t j = i + 1;
    while (j < src.size() && (static_cast<unsigned char>(src[j]) & 0xC0) == 0x80) ++j;
    out.push_back({Tok::punct, std::string(src.substr(i, j - i)), 0.0, at});
    advance(j - i);
  }
  out.push_back({Tok::end, "", 0.0, Span{line, col}});
  return out;
}

std::string describe(const Token& t) {
  if (t.type == Tok::end) return "end of input";
  return "'" + t.text + "'";
}

std::string join_path(const std::string& level, const std::string& id) {
  return level.empty() ? id : level + "/" + id;
}

// A parsed block with paths relative to itself.
struct Fragment {
  NestedDiagram tree;
  std::map<std::string, Attachment> attachments;
  SourceMap spans;
};

// Re-roots a fragment under `slot`.
void graft(Fragment& into, const std::string& slot, const Fragment& part) {
  for (const auto& [path, a] : part.attachments) into.attachments[slot + "/" + path] = a;
  for (const auto& [path, s] : part.spans.boxes) {
    if (!path.empty()) into.spans.boxes[slot + "/" + path] = s;
  }
  for (const auto& [key, s] : part.spans.wires) {
    into.spans.wires[{join_path(slot, key.first), key.second}] = s;
  }
}

struct RawRef {
  std::string box;
  std::string port;
  Span span;
};

struct RawWire {
  RawRef source, dest;
  Span span;
};

struct RawAttach {
  std::string box;
  Attachment attachment;
  Span span;
};

struct RawCandidate {
  RawRef source, dest;
  double logit = 0.0;
  double gain = 1.0;
  Span span;
};

class Parser {
 public:
  explicit Parser(std::string_view text) : toks_(lex(text)) {}

  Document document() {
    Fragment root;
    std::vector<RawWire> wires;
    std::vector<RawAttach> attaches;
    std::vector<RawCandidate> candidates;
    std::set<std::string> declared;
    bool have_outer = false;
    root.spans.boxes[""] = Span{1, 1};

    while (peek().type != Tok::end) {
      const Token& t = peek();
      if (is_word("interface")) {
        interface_decl();
      } else if (is_word("diagram")) {
        diagram_decl();
      } else if (is_word("outer")) {
        if (have_outer) throw ParseError("duplicate outer declaration", t.span);
        have_outer = true;
        root.spans.boxes[""] = t.span;
        next();
        root.tree.diagram.outer = interface_ref();
      } else if (is_word("candidate")) {
        candidates.push_back(candidate());
      } else if (!block_statement(root, declared, wires, attaches)) {
        throw ParseError("unexpected " + describe(t), t.span,
                         {"'interface'", "'diagram'", "'outer'", "'box'", "'wire'", "'attach'",
                          "'candidate'"});
      }
    }
    finish_block(root, wires, attaches, "");

    Document doc;
    doc.tree = std::move(root.tree);
    doc.attachments = std::move(root.attachments);
    doc.spans = std::move(root.spans);
    resolve_candidates(doc, candidates);
    return doc;
  }

 private:
  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  std::map<std::string, BoxInterface> interfaces_;
  std::map<std::string, Fragment> diagrams_;

  const Token& peek() const { return toks_[pos_]; }
  const Token& next() { return toks_[pos_ == toks_.size() - 1 ? pos_ : pos_++]; }
  bool is_word(std::string_view w) const { return peek().type == Tok::ident && peek().text == w; }
  bool is_punct(std::string_view p) const { return peek().type == Tok::punct && peek().text == p; }

  [[noreturn]] void fail(std::vector<std::string> expected) const {
    throw ParseError("unexpected " + describe(peek()), peek().span, std::move(expected));
  }

  const Token& expect_punct(std::string_view p) {
    if (!is_punct(p)) fail({"'" + std::string(p) + "'"});
    return next();
  }

  bool accept_punct(std::string_view p) {
    if (!is_punct(p)) return false;
    next();
    return true;
  }

  const Token& ident(const char* what) {
    if (peek().type != Tok::ident) fail({what});
    return next();
  }

  void interface_decl() {
    next();
    const Token& name = ident("interface name");
    if (interfaces_.count(name.text)) {
      throw ParseError("interface '" + name.text + "' already declared", name.span);
    }
    interfaces_[name.text] = interface_body();
  }

  BoxInterface interface_ref() {
    if (is_punct("{")) return interface_body();
    if (peek().type != Tok::ident) fail({"interface name", "'{'"});
    const Token& name = next();
    auto it = interfaces_.find(name.text);
    if (it == interfaces_.end()) {
      throw ParseError("undeclared interface '" + name.text + "'", name.span);
    }
    return it->second;
  }

  BoxInterface interface_body() {
    expect_punct("{");
    BoxInterface iface;
    while (!accept_punct("}")) {
      bool input;
      if (is_word("in")) {
        input = true;
      } else if (is_word("out")) {
        input = false;
      } else {
        fail({"'in'", "'out'", "'}'"});
      }
      next();
      PortSpec spec;
      spec.name = ident("port name").text;
      expect_punct(":");
      spec.kind = kind();
      (input ? iface.inputs : iface.outputs).push_back(std::move(spec));
      if (!accept_punct(";")) accept_punct(",");
    }
    return iface;
  }

  PortKind kind() {
    if (is_word("bool")) {
      next();
      return PortKind::boolean();
    }
    if (!is_word("real")) fail({"'bool'", "'real'"});
    next();
    if (!accept_punct("[")) return PortKind::real();
    const Token& n = peek();
    if (n.type != Tok::number || n.value != static_cast<int>(n.value)) fail({"dimension"});
    next();
    expect_punct("]");
    // Dimension 0 is kept so that validation can report it.
    return PortKind::vector(static_cast<int>(n.value));
  }

  void diagram_decl() {
    next();
    const Token& name = ident("diagram name");
    if (diagrams_.count(name.text)) {
      throw ParseError("diagram '" + name.text + "' already declared", name.span);
    }
    expect_punct(":");
    BoxInterface iface = interface_ref();
    diagrams_[name.text] = block(iface);
  }

  // `{ statements }` with the given outer interface.
  Fragment block(const BoxInterface& outer) {
    expect_punct("{");
    Fragment frag;
    frag.tree.diagram.outer = outer;
    std::vector<RawWire> wires;
    std::vector<RawAttach> attaches;
    std::set<std::string> declared;
    while (!accept_punct("}")) {
      if (!block_statement(frag, declared, wires, attaches)) {
        fail({"'box'", "'wire'", "'attach'", "'}'"});
      }
    }
    finish_block(frag, wires, attaches, "");
    return frag;
  }

  bool block_statement(Fragment& frag, std::set<std::string>& declared,
                       std::vector<RawWire>& wires, std::vector<RawAttach>& attaches) {
    if (is_word("box")) {
      box(frag, declared);
    } else if (is_word("wire")) {
      Span at = next().span;
      RawRef s = ref();
      expect_punct("->");
      RawRef d = ref();
      wires.push_back({s, d, at});
    } else if (is_word("attach")) {
      attaches.push_back(attach());
    } else {
      return false;
    }
    return true;
  }

  void box(Fragment& frag, std::set<std::string>& declared) {
    next();
    const Token& id = ident("box id");
    if (id.text == kOuter) throw ParseError("box id 'outer' is reserved", id.span);
    if (!declared.insert(id.text).second) {
      throw ParseError("box '" + id.text + "' already declared", id.span);
    }
    std::optional<BoxInterface> iface;
    if (accept_punct(":")) iface = interface_ref();
    std::optional<Fragment> body;
    if (accept_punct("=")) {
      const Token& name = ident("diagram name");
      auto it = diagrams_.find(name.text);
      if (it == diagrams_.end()) {
        throw ParseError("undeclared diagram '" + name.text + "'", name.span);
      }
      if (iface && *iface != it->second.tree.diagram.outer) {
        throw ParseError("diagram '" + name.text + "' has interface " +
                             to_string(it->second.tree.diagram.outer) + ", box '" + id.text +
                             "' declares " + to_string(*iface),
                         name.span);
      }
      iface = it->second.tree.diagram.outer;
      body = it->second;
    } else if (is_punct("{")) {
      if (!iface) fail({"':'"});
      body = block(*iface);
    }
    if (!iface) fail({"':'", "'='"});
    frag.tree.diagram.inner[id.text] = *iface;
    frag.spans.boxes[id.text] = id.span;
    if (body) {
      graft(frag, id.text, *body);
      frag.tree.set_child(id.text, std::move(body->tree));
    }
  }

  RawRef ref() {
    const Token& box = ident("port reference");
    expect_punct(".");
    const Token& port = ident("port name");
    return {box.text, port.text, box.span};
  }

  Param param_value() {
    const Token& t = peek();
    if (t.type == Tok::number) {
      next();
      return Param::of(t.value);
    }
    if (t.type == Tok::ident) {
      next();
      return Param::of_word(t.text);
    }
    if (accept_punct("[")) {
      std::vector<Param> items;
      if (!accept_punct("]")) {
        for (;;) {
          items.push_back(param_value());
          if (accept_punct("]")) break;
          expect_punct(",");
        }
      }
      return Param::of_list(std::move(items));
    }
    fail({"number", "word", "'['"});
  }

  std::map<std::string, std::pair<Param, Span>> param_block() {
    std::map<std::string, std::pair<Param, Span>> out;
    expect_punct("{");
    while (!accept_punct("}")) {
      const Token& key = ident("parameter name");
      expect_punct(":");
      Param v = param_value();
      if (!out.emplace(key.text, std::pair{std::move(v), key.span}).second) {
        throw ParseError("duplicate parameter '" + key.text + "'", key.span);
      }
      if (!accept_punct(",")) accept_punct(";");
    }
    return out;
  }

  RawAttach attach() {
    Span at = next().span;
    RawAttach a;
    a.span = at;
    a.box = ident("box id").text;
    a.attachment.family = ident("attachment family").text;
    // A statement keyword starts the next statement, it is never a variant.
    static const std::set<std::string, std::less<>> keywords{"interface", "diagram", "outer", "box",
                                                             "wire", "attach", "candidate"};
    if (peek().type == Tok::ident && !keywords.count(peek().text)) a.attachment.variant = next().text;
    if (is_punct("{")) {
      for (auto& [k, v] : param_block()) a.attachment.params[k] = std::move(v.first);
    }
    return a;
  }

  RawCandidate candidate() {
    RawCandidate c;
    c.span = next().span;
    c.source = ref();
    expect_punct("->");
    c.dest = ref();
    if (is_punct("{")) {
      for (auto& [k, v] : param_block()) {
        if (v.first.type != Param::Type::number) {
          throw ParseError("candidate parameter '" + k + "' must be a number", v.second);
        }
        if (k == "logit") {
          c.logit = v.first.number;
        } else if (k == "gain") {
          c.gain = v.first.number;
        } else {
          throw ParseError("unknown candidate parameter '" + k + "'", v.second,
                           {"'logit'", "'gain'"});
        }
      }
    }
    return c;
  }

  static PortRef resolve(const WiringDiagram& d, const RawRef& r, bool as_source) {
    if (r.box == kOuter) {
      const auto& side = as_source ? d.outer.inputs : d.outer.outputs;
      for (const auto& p : side) {
        if (p.name == r.port) {
          return as_source ? PortRef::outer_in(r.port) : PortRef::outer_out(r.port);
        }
      }
      throw ParseError(std::string("outer has no ") + (as_source ? "input" : "output") + " port '" +
                           r.port + "'",
                       r.span);
    }
    auto it = d.inner.find(r.box);
    if (it == d.inner.end()) throw ParseError("undeclared box '" + r.box + "'", r.span);
    const auto& side = as_source ? it->second.outputs : it->second.inputs;
    for (const auto& p : side) {
      if (p.name == r.port) {
        return as_source ? PortRef::out(r.box, r.port) : PortRef::in(r.box, r.port);
      }
    }
    throw ParseError("box '" + r.box + "' has no " + (as_source ? "output" : "input") + " port '" +
                         r.port + "'",
                     r.span);
  }

  static void finish_block(Fragment& frag, const std::vector<RawWire>& wires,
                           const std::vector<RawAttach>& attaches, const std::string& level) {
    auto& d = frag.tree.diagram;
    for (const auto& w : wires) {
      Wire wire{resolve(d, w.source, true), resolve(d, w.dest, false)};
      d.wires.push_back(wire);
      frag.spans.wires.emplace(std::pair{level, wire}, w.span);
    }
    normalize(d);
    for (const auto& a : attaches) {
      if (!d.inner.count(a.box)) throw ParseError("undeclared box '" + a.box + "'", a.span);
      if (frag.tree.child(a.box)) {
        throw ParseError("box '" + a.box + "' has a body and cannot take an attachment", a.span);
      }
      if (!frag.attachments.emplace(a.box, a.attachment).second) {
        throw ParseError("box '" + a.box + "' already has an attachment", a.span);
      }
    }
  }

  static void resolve_candidates(Document& doc, const std::vector<RawCandidate>& raw) {
    const auto& d = doc.tree.diagram;
    std::map<PortRef, std::vector<Candidate>> by_dest;
    for (const auto& c : raw) {
      PortRef src = resolve(d, c.source, true);
      PortRef dst = resolve(d, c.dest, false);
      auto& list = by_dest[dst];
      doc.spans.candidates[{dst, list.size()}] = c.span;
      list.push_back({src, c.logit, c.gain});
    }
    for (auto& [dest, list] : by_dest) doc.candidates.destinations.push_back({dest, std::move(list)});
  }
};

}  // namespace

Document parse_document(std::string_view text) { return Parser(text).document(); }

}  // namespace dilskit
