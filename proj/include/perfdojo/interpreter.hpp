#pragma once

// Reference executor. Scopes run as counted loops in child order; suffixes
// are ignored. Values are computed in double and rounded to the buffer's
// data type on every store.

#include <cmath>
#include <map>
#include <random>

#include "perfdojo/validate.hpp"

namespace perfdojo {

/// Dense row-major tensor over the logical shape of an interface array.
struct Tensor {
  DType dtype = DType::F32;
  std::vector<std::int64_t> shape;
  std::vector<double> data;

  std::int64_t size() const {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
};

struct TensorEnv {
  DimBindings dims;  // overrides the program's own bindings
  std::map<std::string, Tensor> arrays;
};

inline double round_to(DType t, double v) {
  switch (t) {
    case DType::F32: return static_cast<double>(static_cast<float>(v));
    case DType::F64: return v;
    case DType::I32:
      if (!std::isfinite(v)) return 0;
      return static_cast<double>(static_cast<std::int32_t>(std::clamp(std::trunc(v), -2147483648.0, 2147483647.0)));
  }
  return v;
}

/// Program with dimension overrides from `dims` applied.
inline Program bind_dims(Program p, const DimBindings& dims) {
  for (const auto& [k, v] : dims.items()) p.dims.set(k, v);
  return p;
}

inline std::vector<std::int64_t> logical_shape(const Program& p, const BufferDecl& b) {
  std::vector<std::int64_t> s;
  for (const auto& d : b.shape) s.push_back(d.logical(p.dims));
  return s;
}

namespace interp_detail {

struct Linear {
  std::int64_t constant = 0;
  std::vector<std::pair<int, std::int64_t>> coeffs;

  std::int64_t at(const std::int64_t* iters) const {
    std::int64_t v = constant;
    for (const auto& [d, c] : coeffs) v += c * iters[d];
    return v;
  }
};

struct Slot {
  std::vector<double> data;
  DType dtype;
};

struct CExpr {
  Expr::Kind kind;
  double value = 0;
  int depth = 0;
  std::size_t slot = 0;
  Linear addr;
  std::string fn;
  std::vector<CExpr> args;
};

struct COp {
  std::size_t slot;
  Linear addr;
  bool accumulate;
  CExpr value;
};

struct CNode {
  bool scope;
  std::int64_t extent = 0;
  std::vector<CNode> children;
  COp op;
};

class Compiled {
 public:
  explicit Compiled(const Program& p) : p_(p) {
    for (const auto& b : p.buffers) {
      Slot s;
      s.dtype = b.dtype;
      s.data.assign(static_cast<std::size_t>(b.footprint_elements(p.dims)), 0.0);
      slots_.push_back(std::move(s));
      std::vector<std::int64_t> strides(b.shape.size(), 0);
      std::int64_t st = 1;
      for (std::size_t j = b.shape.size(); j-- > 0;) {
        strides[j] = b.shape[j].materialized ? st : 0;
        st *= b.shape[j].storage(p.dims);
      }
      strides_.push_back(std::move(strides));
    }
    for (const auto& n : p.root) root_.push_back(compile(n));
  }

  std::size_t slot_of(const std::string& array) const {
    for (std::size_t i = 0; i < p_.buffers.size(); ++i)
      if (p_.buffers[i].holds(array)) return i;
    throw Error(ErrorCode::UnresolvedArray, "array '" + array + "' has no buffer");
  }

  /// Storage offset of logical element `flat` (row-major) in buffer `slot`.
  std::int64_t storage_offset(std::size_t slot, std::int64_t flat) const {
    const BufferDecl& b = p_.buffers[slot];
    std::int64_t off = 0;
    for (std::size_t j = b.shape.size(); j-- > 0;) {
      std::int64_t ext = b.shape[j].logical(p_.dims);
      off += (flat % ext) * strides_[slot][j];
      flat /= ext;
    }
    return off;
  }

  std::vector<double>& storage(std::size_t slot) { return slots_[slot].data; }

  void run() {
    std::vector<std::int64_t> iters(64, 0);
    for (const auto& n : root_) exec(n, 0, iters.data());
  }

 private:
  Linear linearize(const ArrayAccess& a, std::size_t& slot) {
    slot = slot_of(a.array);
    Linear l;
    for (std::size_t j = 0; j < a.indices.size(); ++j) {
      std::int64_t st = strides_[slot][j];
      if (st == 0) continue;
      ConcreteAffine c = concretize(a.indices[j], p_.dims);
      l.constant += st * c.constant;
      for (const auto& [d, k] : c.coeffs) {
        auto it = std::find_if(l.coeffs.begin(), l.coeffs.end(), [&](auto& x) { return x.first == d; });
        if (it == l.coeffs.end())
          l.coeffs.emplace_back(d, st * k);
        else
          it->second += st * k;
      }
    }
    return l;
  }

  CExpr compile(const Expr& e) {
    CExpr c;
    c.kind = e.kind;
    switch (e.kind) {
      case Expr::Kind::Constant: c.value = e.value; break;
      case Expr::Kind::Symbol:
        c.kind = Expr::Kind::Constant;
        if (const double* v = p_.consts.find(e.name))
          c.value = *v;
        else
          c.value = static_cast<double>(p_.dims.at(e.name));
        break;
      case Expr::Kind::IndexRef: c.depth = e.depth; break;
      case Expr::Kind::Access: c.addr = linearize(e.access, c.slot); break;
      default: break;
    }
    c.fn = e.name;
    for (const auto& a : e.args) c.args.push_back(compile(a));
    return c;
  }

  CNode compile(const Node& n) {
    CNode c;
    c.scope = n.is_scope();
    if (c.scope) {
      c.extent = n.extent.value(p_.dims);
      for (const auto& ch : n.children) c.children.push_back(compile(ch));
    } else {
      c.op.addr = linearize(n.op.output, c.op.slot);
      c.op.accumulate = n.op.kind == OpKind::Accumulate;
      c.op.value = compile(n.op.value);
    }
    return c;
  }

  double load(std::size_t slot, std::int64_t addr) const {
    const auto& d = slots_[slot].data;
    if (addr < 0 || static_cast<std::size_t>(addr) >= d.size())
      throw Error(ErrorCode::Internal, "out-of-bounds read in buffer '" + p_.buffers[slot].name + "'");
    return d[static_cast<std::size_t>(addr)];
  }

  double eval(const CExpr& e, const std::int64_t* it) const {
    switch (e.kind) {
      case Expr::Kind::Constant: return e.value;
      case Expr::Kind::IndexRef: return static_cast<double>(it[e.depth]);
      case Expr::Kind::Access: return load(e.slot, e.addr.at(it));
      case Expr::Kind::Neg: return -eval(e.args[0], it);
      case Expr::Kind::Add: return eval(e.args[0], it) + eval(e.args[1], it);
      case Expr::Kind::Sub: return eval(e.args[0], it) - eval(e.args[1], it);
      case Expr::Kind::Mul: return eval(e.args[0], it) * eval(e.args[1], it);
      case Expr::Kind::Div: return eval(e.args[0], it) / eval(e.args[1], it);
      case Expr::Kind::Call: {
        double a = eval(e.args[0], it);
        if (e.fn == "max") return std::max(a, eval(e.args[1], it));
        if (e.fn == "min") return std::min(a, eval(e.args[1], it));
        if (e.fn == "exp") return std::exp(a);
        if (e.fn == "log") return std::log(a);
        if (e.fn == "sqrt") return std::sqrt(a);
        if (e.fn == "abs") return std::fabs(a);
        throw Error(ErrorCode::Internal, "unknown builtin '" + e.fn + "'");
      }
      case Expr::Kind::Symbol: break;
    }
    throw Error(ErrorCode::Internal, "unexpected expression");
  }

  void exec(const CNode& n, int depth, std::int64_t* it) {
    if (!n.scope) {
      double v = eval(n.op.value, it);
      std::int64_t a = n.op.addr.at(it);
      Slot& s = slots_[n.op.slot];
      if (a < 0 || static_cast<std::size_t>(a) >= s.data.size())
        throw Error(ErrorCode::Internal, "out-of-bounds write in buffer '" + p_.buffers[n.op.slot].name + "'");
      double& ref = s.data[static_cast<std::size_t>(a)];
      ref = round_to(s.dtype, n.op.accumulate ? ref + v : v);
      return;
    }
    for (std::int64_t i = 0; i < n.extent; ++i) {
      it[depth] = i;
      for (const auto& c : n.children) exec(c, depth + 1, it);
    }
  }

  const Program& p_;
  std::vector<Slot> slots_;
  std::vector<std::vector<std::int64_t>> strides_;
  std::vector<CNode> root_;
};

}  // namespace interp_detail

/// Runs `p` on the inputs in `env` and returns every output array.
inline std::map<std::string, Tensor> interpret(const Program& program, const TensorEnv& env) {
  Program p = bind_dims(program, env.dims);
  for (const auto& b : p.buffers)
    for (const auto& d : b.shape) d.extent.value(p.dims);
  interp_detail::Compiled c(p);
  for (const auto& name : p.inputs) {
    auto it = env.arrays.find(name);
    if (it == env.arrays.end()) throw Error(ErrorCode::ShapeMismatch, "input '" + name + "' is missing");
    std::size_t slot = c.slot_of(name);
    auto shape = logical_shape(p, p.buffers[slot]);
    if (it->second.shape != shape) throw Error(ErrorCode::ShapeMismatch, "input '" + name + "' has the wrong shape");
    if (it->second.data.size() != static_cast<std::size_t>(it->second.size()))
      throw Error(ErrorCode::ShapeMismatch, "input '" + name + "' has the wrong element count");
    auto& dst = c.storage(slot);
    DType t = p.buffers[slot].dtype;
    for (std::int64_t k = 0; k < it->second.size(); ++k)
      dst[static_cast<std::size_t>(c.storage_offset(slot, k))] = round_to(t, it->second.data[static_cast<std::size_t>(k)]);
  }
  c.run();
  std::map<std::string, Tensor> out;
  for (const auto& name : p.outputs) {
    std::size_t slot = c.slot_of(name);
    Tensor t;
    t.dtype = p.buffers[slot].dtype;
    t.shape = logical_shape(p, p.buffers[slot]);
    t.data.resize(static_cast<std::size_t>(t.size()));
    const auto& src = c.storage(slot);
    for (std::int64_t k = 0; k < t.size(); ++k)
      t.data[static_cast<std::size_t>(k)] = src[static_cast<std::size_t>(c.storage_offset(slot, k))];
    out[name] = std::move(t);
  }
  return out;
}

/// Uniform double in [lo, hi) from raw 64-bit engine output, identical on
/// every platform.
inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * u;
}

struct InputRange {
  double lo = -1.0;
  double hi = 1.0;
};

/// Whether any leaf calls exp (those kernels draw inputs from [-4, 0]).
inline bool uses_exp(const Program& p) {
  bool found = false;
  std::function<void(const Expr&)> walk = [&](const Expr& e) {
    if (e.kind == Expr::Kind::Call && e.name == "exp") found = true;
    for (const auto& a : e.args) walk(a);
  };
  for (const auto& l : leaves(p)) walk(l.op->value);
  return found;
}

inline InputRange default_range(const Program& p) { return uses_exp(p) ? InputRange{-4.0, 0.0} : InputRange{}; }

inline TensorEnv random_inputs(const Program& p, std::uint64_t seed,
                               const std::map<std::string, InputRange>& ranges = {}) {
  std::mt19937_64 rng(seed);
  TensorEnv env;
  InputRange fallback = default_range(p);
  for (const auto& name : p.inputs) {
    const BufferDecl* b = p.buffer_of(name);
    Tensor t;
    t.dtype = b->dtype;
    t.shape = logical_shape(p, *b);
    auto r = ranges.count(name) ? ranges.at(name) : fallback;
    t.data.resize(static_cast<std::size_t>(t.size()));
    for (auto& v : t.data) v = round_to(t.dtype, uniform(rng, r.lo, r.hi));
    env.arrays[name] = std::move(t);
  }
  return env;
}

struct Tolerance {
  double atol;
  double rtol;
};

inline Tolerance tolerance_for(DType t) {
  return t == DType::F64 ? Tolerance{1e-9, 1e-9} : Tolerance{1e-5, 1e-5};
}

struct Equivalence {
  bool equal = true;
  double max_error = 0;
  std::string detail;
};

inline Equivalence compare_outputs(const std::map<std::string, Tensor>& a, const std::map<std::string, Tensor>& b) {
  Equivalence r;
  for (const auto& [name, ta] : a) {
    auto it = b.find(name);
    if (it == b.end() || it->second.shape != ta.shape) {
      r.equal = false;
      r.detail = "output '" + name + "' shape differs";
      continue;
    }
    Tolerance tol = tolerance_for(ta.dtype);
    for (std::size_t k = 0; k < ta.data.size(); ++k) {
      double x = ta.data[k], y = it->second.data[k];
      double err = std::fabs(x - y);
      if (std::isnan(x) != std::isnan(y)) err = INFINITY;
      if (std::isnan(x) && std::isnan(y)) err = 0;
      r.max_error = std::max(r.max_error, err);
      if (!(err <= tol.atol + tol.rtol * std::fabs(y))) {
        if (r.equal) r.detail = "output '" + name + "' differs at element " + std::to_string(k);
        r.equal = false;
      }
    }
  }
  return r;
}

inline bool same_interface(const Program& p, const Program& q) {
  if (p.inputs != q.inputs || p.outputs != q.outputs) return false;
  for (const auto* list : {&p.inputs, &p.outputs})
    for (const auto& a : *list) {
      const BufferDecl* bp = p.buffer_of(a);
      const BufferDecl* bq = q.buffer_of(a);
      if (!bp || !bq || bp->dtype != bq->dtype || logical_shape(p, *bp) != logical_shape(q, *bq)) return false;
    }
  return true;
}

/// Compares `q` against the reference `p` on `trials` random inputs.
inline Equivalence equivalent(const Program& p, const Program& q, int trials, std::uint64_t seed,
                              const std::map<std::string, InputRange>& ranges = {}) {
  if (!same_interface(p, q)) throw Error(ErrorCode::InterfaceMismatch, "programs have different interfaces");
  Equivalence total;
  for (int t = 0; t < trials; ++t) {
    TensorEnv env = random_inputs(p, seed + static_cast<std::uint64_t>(t), ranges);
    auto r = compare_outputs(interpret(q, env), interpret(p, env));
    total.max_error = std::max(total.max_error, r.max_error);
    if (!r.equal && total.equal) total.detail = r.detail;
    total.equal = total.equal && r.equal;
  }
  return total;
}

}  // namespace perfdojo
