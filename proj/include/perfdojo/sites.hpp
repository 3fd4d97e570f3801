#pragma once

// Stable, human-readable references to program locations.
//
//   t@1      scope at depth 1 enclosing the operation that writes t
//   t#2@0    the same, for the third operation writing t
//   t  t#2   the operation itself
//   t[1]     dimension 1 of buffer t
//   t[]      buffer t as a whole

#include <charconv>
#include <variant>

#include "perfdojo/ir.hpp"

namespace perfdojo {

struct ScopeSite {
  std::string array;
  std::optional<int> occurrence;
  int depth = 0;
  bool operator==(const ScopeSite&) const = default;
};
struct LeafSite {
  std::string array;
  std::optional<int> occurrence;
  bool operator==(const LeafSite&) const = default;
};
struct BufferDimSite {
  std::string buffer;
  std::size_t dim = 0;
  bool operator==(const BufferDimSite&) const = default;
};
struct BufferSite {
  std::string buffer;
  bool operator==(const BufferSite&) const = default;
};

using SiteRef = std::variant<ScopeSite, LeafSite, BufferDimSite, BufferSite>;

inline std::string format_site(const SiteRef& s) {
  auto writer = [](const std::string& a, const std::optional<int>& occ) {
    return occ ? a + "#" + std::to_string(*occ) : a;
  };
  return std::visit(
      [&](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, ScopeSite>)
          return writer(v.array, v.occurrence) + "@" + std::to_string(v.depth);
        else if constexpr (std::is_same_v<T, LeafSite>)
          return writer(v.array, v.occurrence);
        else if constexpr (std::is_same_v<T, BufferDimSite>)
          return v.buffer + "[" + std::to_string(v.dim) + "]";
        else
          return v.buffer + "[]";
      },
      s);
}

namespace sites_detail {

inline bool ident_ok(std::string_view s) {
  if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  return std::all_of(s.begin(), s.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; });
}

inline std::optional<long> number(std::string_view s) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || v < 0) return std::nullopt;
  return v;
}

}  // namespace sites_detail

inline SiteRef parse_site(std::string_view text) {
  using namespace sites_detail;
  auto bad = [&]() { return Error(ErrorCode::Syntax, "malformed site '" + std::string(text) + "'"); };
  if (auto lb = text.find('['); lb != std::string_view::npos) {
    if (text.back() != ']' || !ident_ok(text.substr(0, lb))) throw bad();
    std::string_view inner = text.substr(lb + 1, text.size() - lb - 2);
    std::string buf(text.substr(0, lb));
    if (inner.empty()) return BufferSite{buf};
    auto n = number(inner);
    if (!n) throw bad();
    return BufferDimSite{buf, static_cast<std::size_t>(*n)};
  }
  std::optional<int> depth;
  if (auto at = text.find('@'); at != std::string_view::npos) {
    auto n = number(text.substr(at + 1));
    if (!n) throw bad();
    depth = static_cast<int>(*n);
    text = text.substr(0, at);
  }
  std::optional<int> occ;
  if (auto hash = text.find('#'); hash != std::string_view::npos) {
    auto n = number(text.substr(hash + 1));
    if (!n) throw bad();
    occ = static_cast<int>(*n);
    text = text.substr(0, hash);
  }
  if (!ident_ok(text)) throw bad();
  if (depth) return ScopeSite{std::string(text), occ, *depth};
  return LeafSite{std::string(text), occ};
}

/// Operations writing `array`, in execution order.
inline std::vector<LeafRef> writers_of(const Program& p, const std::string& array) {
  auto all = leaves(p);
  std::erase_if(all, [&](const LeafRef& l) { return l.op->output.array != array; });
  return all;
}

inline LeafRef resolve_writer(const Program& p, const std::string& array, const std::optional<int>& occ) {
  auto ws = writers_of(p, array);
  if (ws.empty()) throw Error(ErrorCode::NotFound, "no operation writes '" + array + "'");
  if (occ) {
    if (*occ < 0 || static_cast<std::size_t>(*occ) >= ws.size())
      throw Error(ErrorCode::NotFound, "'" + array + "' has only " + std::to_string(ws.size()) + " writers");
    return ws[static_cast<std::size_t>(*occ)];
  }
  if (ws.size() > 1) {
    std::string list;
    for (std::size_t i = 0; i < ws.size(); ++i) list += (i ? ", " : "") + array + "#" + std::to_string(i);
    throw Error(ErrorCode::Ambiguous, "'" + array + "' is written by several operations: " + list);
  }
  return ws[0];
}

/// Resolves a node site (scope or leaf) to its path.
inline NodePath resolve_node(const Program& p, const SiteRef& s) {
  if (const auto* sc = std::get_if<ScopeSite>(&s)) {
    LeafRef w = resolve_writer(p, sc->array, sc->occurrence);
    if (sc->depth < 0 || static_cast<std::size_t>(sc->depth) >= w.scopes.size())
      throw Error(ErrorCode::NotFound, "no scope at depth " + std::to_string(sc->depth) + " above '" + sc->array + "'");
    return NodePath(w.path.begin(), w.path.begin() + sc->depth + 1);
  }
  if (const auto* lf = std::get_if<LeafSite>(&s)) return resolve_writer(p, lf->array, lf->occurrence).path;
  throw Error(ErrorCode::NotFound, "site " + format_site(s) + " is not a tree node");
}

inline const BufferDecl& resolve_buffer(const Program& p, const SiteRef& s) {
  std::string name;
  if (const auto* d = std::get_if<BufferDimSite>(&s)) name = d->buffer;
  else if (const auto* b = std::get_if<BufferSite>(&s)) name = b->buffer;
  else throw Error(ErrorCode::NotFound, "site " + format_site(s) + " is not a buffer");
  const BufferDecl* b = p.buffer_named(name);
  if (!b) throw Error(ErrorCode::NotFound, "no buffer named '" + name + "'");
  if (const auto* d = std::get_if<BufferDimSite>(&s); d && d->dim >= b->shape.size())
    throw Error(ErrorCode::NotFound, "buffer '" + name + "' has no dimension " + std::to_string(d->dim));
  return *b;
}

/// Canonical site naming the node at `path`. A scope is named through the
/// first operation beneath it.
inline SiteRef site_of_node(const Program& p, const NodePath& path) {
  auto all = leaves(p);
  for (const auto& l : all) {
    if (!is_prefix(path, l.path)) continue;
    const std::string& a = l.op->output.array;
    int index = 0, count = 0;
    for (const auto& o : all) {
      if (o.op->output.array != a) continue;
      if (o.path < l.path) ++index;
      ++count;
    }
    std::optional<int> occ;
    if (count > 1) occ = index;
    if (l.path.size() == path.size()) return LeafSite{a, occ};
    return ScopeSite{a, occ, static_cast<int>(path.size()) - 1};
  }
  throw Error(ErrorCode::Internal, "scope without operations has no site");
}

}  // namespace perfdojo
