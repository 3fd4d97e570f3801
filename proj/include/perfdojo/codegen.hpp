#pragma once

// C99 emission. One function per program; interface arrays are pointer
// parameters in buffer-declaration order, temporaries live inside the body.
// Arithmetic runs in double and is rounded on every store, exactly like the
// interpreter.

#include <cstdio>

#include "perfdojo/interpreter.hpp"

namespace perfdojo {

struct EmitResult {
  std::string source;
  std::string entry;      // function name
  std::string signature;  // full prototype
  std::vector<std::string> parameters;  // interface buffer names, in order
};

inline const char* c_type(DType t) {
  switch (t) {
    case DType::F32: return "float";
    case DType::F64: return "double";
    case DType::I32: return "int32_t";
  }
  return "?";
}

namespace codegen_detail {

inline std::string c_number(double v) {
  if (std::isinf(v)) return v > 0 ? "HUGE_VAL" : "(-HUGE_VAL)";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  std::string s = buf;
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return v < 0 ? "(" + s + ")" : s;
}

class Emitter {
 public:
  explicit Emitter(const Program& p) : p_(p) {
    for (const auto& b : p.buffers) {
      std::vector<std::int64_t> strides(b.shape.size(), 0);
      std::int64_t st = 1;
      for (std::size_t j = b.shape.size(); j-- > 0;) {
        strides[j] = b.shape[j].materialized ? st : 0;
        st *= b.shape[j].storage(p.dims);
      }
      strides_[b.name] = std::move(strides);
    }
  }

  std::string address(const ArrayAccess& a) const {
    const BufferDecl* b = p_.buffer_of(a.array);
    const auto& strides = strides_.at(b->name);
    std::int64_t constant = 0;
    std::map<int, std::int64_t> coeffs;
    for (std::size_t j = 0; j < a.indices.size(); ++j) {
      if (strides[j] == 0) continue;
      ConcreteAffine c = concretize(a.indices[j], p_.dims);
      constant += strides[j] * c.constant;
      for (const auto& [d, k] : c.coeffs) coeffs[d] += strides[j] * k;
    }
    std::string out;
    for (const auto& [d, k] : coeffs) {
      if (k == 0) continue;
      std::string term = "i" + std::to_string(d);
      if (k != 1) term += "*" + std::to_string(k);
      if (!out.empty()) out += k < 0 ? " + " : " + ";
      out += k < 0 ? "(" + term + ")" : term;
    }
    if (constant != 0 || out.empty()) out += (out.empty() ? "" : " + ") + std::to_string(constant);
    return b->name + "[" + out + "]";
  }

  std::string expr(const Expr& e) const {
    switch (e.kind) {
      case Expr::Kind::Constant: return c_number(e.value);
      case Expr::Kind::Symbol: {
        if (const double* v = p_.consts.find(e.name)) return c_number(*v);
        return c_number(static_cast<double>(p_.dims.at(e.name)));
      }
      case Expr::Kind::IndexRef: return "(double)i" + std::to_string(e.depth);
      case Expr::Kind::Access: return "(double)" + address(e.access);
      case Expr::Kind::Neg: return "(-" + expr(e.args[0]) + ")";
      case Expr::Kind::Add: return "(" + expr(e.args[0]) + " + " + expr(e.args[1]) + ")";
      case Expr::Kind::Sub: return "(" + expr(e.args[0]) + " - " + expr(e.args[1]) + ")";
      case Expr::Kind::Mul: return "(" + expr(e.args[0]) + " * " + expr(e.args[1]) + ")";
      case Expr::Kind::Div: return "(" + expr(e.args[0]) + " / " + expr(e.args[1]) + ")";
      case Expr::Kind::Call: {
        std::string fn = e.name == "max" ? "fmax" : e.name == "min" ? "fmin" : e.name == "abs" ? "fabs" : e.name;
        std::string out = fn + "(";
        for (std::size_t i = 0; i < e.args.size(); ++i) out += (i ? ", " : "") + expr(e.args[i]);
        return out + ")";
      }
    }
    return "0";
  }

  void node(const Node& n, int depth, int indent, std::string& out) const {
    std::string pad(static_cast<std::size_t>(indent) * 2, ' ');
    if (n.is_leaf()) {
      const Operation& op = n.op;
      std::string lhs = address(op.output);
      std::string type = c_type(p_.buffer_of(op.output.array)->dtype);
      std::string rhs = expr(op.value);
      if (op.kind == OpKind::Accumulate) rhs = "((double)" + lhs + " + " + rhs + ")";
      out += pad + lhs + " = (" + type + ")" + rhs + ";\n";
      return;
    }
    std::int64_t e = n.extent.value(p_.dims);
    switch (n.suffix) {
      case Suffix::Unroll: out += pad + "#pragma GCC unroll " + std::to_string(e) + "\n"; break;
      case Suffix::Parallel: out += pad + "#pragma omp parallel for\n"; break;
      case Suffix::Vector: out += pad + "#pragma omp simd\n"; break;
      case Suffix::None: break;
      default: throw Error(ErrorCode::UnsupportedBackend, "GPU suffixes have no C backend");
    }
    std::string i = "i" + std::to_string(depth);
    out += pad + "for (long " + i + " = 0; " + i + " < " + std::to_string(e) + "; ++" + i + ") {\n";
    for (const auto& c : n.children) node(c, depth + 1, indent + 1, out);
    out += pad + "}\n";
  }

 private:
  const Program& p_;
  std::map<std::string, std::vector<std::int64_t>> strides_;
};

inline std::string c_ident(const std::string& s) {
  std::string out;
  for (char c : s) out += std::isalnum(static_cast<unsigned char>(c)) ? c : '_';
  return out.empty() ? "kernel" : out;
}

}  // namespace codegen_detail

/// C99 source for `program` with `dims` overriding its own bindings.
inline EmitResult emit(const Program& program, const DimBindings& dims = {}) {
  using namespace codegen_detail;
  Program p = bind_dims(program, dims);
  for_each_scope(p, [&](const Node& n, const NodePath&) {
    if (is_gpu_suffix(n.suffix)) throw Error(ErrorCode::UnsupportedBackend, "GPU suffixes have no C backend");
    n.extent.value(p.dims);
  });
  for (const auto& b : p.buffers)
    for (const auto& d : b.shape) d.extent.value(p.dims);

  EmitResult r;
  r.entry = "pd_" + c_ident(p.name.empty() ? "kernel" : p.name);
  std::string params;
  for (const auto& b : p.buffers) {
    if (!p.is_interface_buffer(b)) continue;
    bool input = std::find(p.inputs.begin(), p.inputs.end(), b.arrays[0]) != p.inputs.end();
    if (!params.empty()) params += ", ";
    params += std::string(input ? "const " : "") + c_type(b.dtype) + "* restrict " + b.name;
    r.parameters.push_back(b.name);
  }
  if (params.empty()) params = "void";
  r.signature = "void " + r.entry + "(" + params + ")";

  std::string body;
  std::vector<std::string> heap;
  for (const auto& b : p.buffers) {
    if (p.is_interface_buffer(b)) continue;
    std::string n = std::to_string(b.footprint_elements(p.dims));
    if (b.location == Location::Stack) {
      body += "  " + std::string(c_type(b.dtype)) + " " + b.name + "[" + n + "];\n";
      body += "  memset(" + b.name + ", 0, sizeof " + b.name + ");\n";
    } else {
      body += "  " + std::string(c_type(b.dtype)) + "* " + b.name + " = (" + c_type(b.dtype) + "*)calloc(" + n +
              ", sizeof(" + c_type(b.dtype) + "));\n";
      heap.push_back(b.name);
    }
  }
  Emitter em(p);
  for (const auto& n : p.root) em.node(n, 0, 1, body);
  for (const auto& h : heap) body += "  free(" + h + ");\n";

  r.source = "#include <math.h>\n#include <stdint.h>\n#include <stdlib.h>\n#include <string.h>\n\n" + r.signature +
             " {\n" + body + "}\n";
  return r;
}

/// Bytes allocated for one buffer (materialized, padded storage).
inline std::int64_t allocated_bytes(const Program& p, const BufferDecl& b) {
  return b.footprint_elements(p.dims) * static_cast<std::int64_t>(dtype_size(b.dtype));
}

}  // namespace perfdojo
