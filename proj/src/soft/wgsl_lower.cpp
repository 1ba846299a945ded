// Semantic analysis and lowering of the WGSL AST into the masked register IR.

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <optional>
#include <unordered_map>

#include "ir.hpp"
#include "wgsl_ast.hpp"
#include "wgsl_lower.hpp"

namespace ndgpu::soft::wgsl {

using ir::Instr;
using ir::kNoReg;
using ir::Op;

namespace {

[[noreturn]] void fail(Loc loc, std::string message) { throw SyntaxError{loc, std::move(message)}; }

// ---------------------------------------------------------------------------
// Types

enum class SK : std::uint8_t { Bool, I32, U32, F32, AInt, AFloat };

bool is_abstract(SK k) { return k == SK::AInt || k == SK::AFloat; }
bool is_integer(SK k) { return k == SK::I32 || k == SK::U32 || k == SK::AInt; }

const char* sk_name(SK k) {
    switch (k) {
        case SK::Bool: return "bool";
        case SK::I32: return "i32";
        case SK::U32: return "u32";
        case SK::F32: return "f32";
        case SK::AInt: return "abstract-int";
        case SK::AFloat: return "abstract-float";
    }
    return "?";
}

struct Type {
    enum class Kind { Scalar, Vector, Array, Struct };
    struct Member {
        std::string name;
        const Type* type;
        std::uint32_t offset;
    };

    Kind kind = Kind::Scalar;
    SK scalar = SK::I32;
    std::uint32_t width = 1;
    const Type* elem = nullptr;
    std::uint32_t count = 0;  // arrays; 0 = runtime-sized
    std::vector<Member> members;
    std::uint32_t size = 1;   // words
    std::uint32_t align = 1;  // words
    std::string name;

    bool is_scalar() const { return kind == Kind::Scalar; }
    bool is_vector() const { return kind == Kind::Vector; }
    bool is_numeric_vector_or_scalar() const { return kind == Kind::Scalar || kind == Kind::Vector; }
    std::uint32_t stride() const { return (size + align - 1) / align * align; }
};

std::uint32_t round_up(std::uint32_t v, std::uint32_t a) { return (v + a - 1) / a * a; }

class TypeTable {
 public:
    const Type* scalar(SK k) {
        auto key = std::string(sk_name(k));
        if (auto it = by_key_.find(key); it != by_key_.end()) return it->second;
        Type t;
        t.kind = Type::Kind::Scalar;
        t.scalar = k;
        t.name = key;
        return intern(key, std::move(t));
    }

    const Type* vec(SK k, std::uint32_t n) {
        if (n == 1) return scalar(k);
        auto key = "vec" + std::to_string(n) + "<" + sk_name(k) + ">";
        if (auto it = by_key_.find(key); it != by_key_.end()) return it->second;
        Type t;
        t.kind = Type::Kind::Vector;
        t.scalar = k;
        t.width = n;
        t.size = n;
        t.align = n == 3 ? 4 : n;
        t.name = key;
        return intern(key, std::move(t));
    }

    const Type* array(const Type* elem, std::uint32_t count) {
        auto key = "array<" + elem->name + (count ? ", " + std::to_string(count) : std::string()) + ">";
        if (auto it = by_key_.find(key); it != by_key_.end()) return it->second;
        Type t;
        t.kind = Type::Kind::Array;
        t.elem = elem;
        t.count = count;
        t.align = elem->align;
        t.size = elem->stride() * count;
        t.name = key;
        return intern(key, std::move(t));
    }

    const Type* make_struct(const std::string& name, std::vector<Type::Member> members) {
        Type t;
        t.kind = Type::Kind::Struct;
        t.name = name;
        std::uint32_t offset = 0, align = 1;
        for (auto& m : members) {
            offset = round_up(offset, m.type->align);
            m.offset = offset;
            offset += m.type->size;
            align = std::max(align, m.type->align);
        }
        t.members = std::move(members);
        t.align = align;
        t.size = round_up(offset, align);
        return intern("struct " + name, std::move(t));
    }

 private:
    const Type* intern(const std::string& key, Type t) {
        storage_.push_back(std::move(t));
        by_key_[key] = &storage_.back();
        return &storage_.back();
    }

    std::deque<Type> storage_;
    std::unordered_map<std::string, const Type*> by_key_;
};

// ---------------------------------------------------------------------------
// Values produced while lowering expressions

struct CVal {
    std::int64_t i = 0;
    double f = 0.0;
};

enum class Space : std::uint8_t { Global, Workgroup, Private };

struct MemRef {
    Space space = Space::Global;
    std::uint16_t slot = 0;
    std::uint16_t dyn = kNoReg;
    std::uint32_t offset = 0;
    bool writable = false;
};

struct Value {
    enum class Kind { None, Const, Regs, Mem };
    Kind kind = Kind::None;
    const Type* type = nullptr;
    std::array<CVal, 4> c{};
    std::array<std::uint16_t, 4> r{};
    bool assignable = false;
    MemRef mem;

    bool is_const() const { return kind == Kind::Const; }
    std::uint32_t width() const { return type->is_vector() ? type->width : 1; }
};

std::uint32_t to_word(SK k, const CVal& v) {
    switch (k) {
        case SK::F32:
        case SK::AFloat: return ir::U(static_cast<float>(v.f));
        default: return static_cast<std::uint32_t>(v.i);
    }
}

CVal from_word(SK k, std::uint32_t w) {
    CVal v;
    switch (k) {
        case SK::F32: v.f = ir::F(w); break;
        case SK::I32: v.i = ir::S(w); break;
        default: v.i = w; break;
    }
    return v;
}

struct Symbol {
    enum class Kind { Var, Let, Const, Resource, Builtin };
    Kind kind = Kind::Let;
    Value value;
    int resource = -1;
};

struct LoopCtx {
    std::uint16_t frame;
    bool in_continuing = false;
};

// ---------------------------------------------------------------------------

class Lowerer {
 public:
    Lowerer(const ModuleAst& module, const CompileOptions& options) : m_(module), opt_(options) {
        for (const auto& s : m_.structs) {
            if (struct_decls_.contains(s.name)) fail(s.loc, "redeclaration of '" + s.name + "'");
            struct_decls_[s.name] = &s;
        }
    }

    EntryPoint lower_entry(const FnDecl& fn) {
        reset();
        EntryPoint ep;
        ep.name = fn.name;

        const Attribute* wg_attr = nullptr;
        for (const auto& a : fn.attrs) {
            if (a.name == "workgroup_size") wg_attr = &a;
        }
        if (!wg_attr) fail(fn.loc, "compute entry point '" + fn.name + "' requires @workgroup_size");
        if (wg_attr->args.empty() || wg_attr->args.size() > 3) fail(wg_attr->loc, "@workgroup_size takes 1 to 3 arguments");

        scopes_.emplace_back();
        scope_regs_.emplace_back();
        begin_temps();
        lower_globals();
        end_temps();

        std::uint64_t invocations = 1;
        for (std::size_t k = 0; k < wg_attr->args.size(); ++k) {
            auto v = const_int(*wg_attr->args[k]);
            if (v < 1) fail(wg_attr->args[k]->loc, "workgroup size must be at least 1");
            ep.workgroup_size[k] = static_cast<std::uint32_t>(v);
            invocations *= static_cast<std::uint64_t>(v);
        }
        if (invocations > opt_.max_invocations_per_workgroup) {
            fail(wg_attr->loc, "workgroup size " + std::to_string(invocations) + " exceeds the limit of " +
                                   std::to_string(opt_.max_invocations_per_workgroup) + " invocations");
        }
        prog_.workgroup_size = ep.workgroup_size;

        if (fn.return_type) fail(fn.loc, "compute entry points must not return a value");
        scopes_.emplace_back();
        scope_regs_.emplace_back();
        for (const auto& p : fn.params) bind_builtin_param(p);
        emit_private_initializers();
        begin_temps();
        lower_block_body(fn.body);
        end_temps();

        if (prog_.workgroup_words * 4 > opt_.max_workgroup_storage_bytes) {
            fail(fn.loc, "workgroup storage of " + std::to_string(prog_.workgroup_words * 4) +
                             " bytes exceeds the limit of " + std::to_string(opt_.max_workgroup_storage_bytes));
        }
        prog_.num_regs = next_reg_;
        prog_.frame_depth = max_frames_;
        for (const auto& [bits, reg] : const_regs_) prog_.constants.emplace_back(reg, bits);

        ep.bindings = resources_;
        ep.program = std::make_shared<const ir::Program>(std::move(prog_));
        return ep;
    }

 private:
    // ---------------------------------------------------------------- state
    void reset() {
        prog_ = ir::Program{};
        prog_.builtins.fill(kNoReg);
        next_reg_ = 0;
        free_regs_.clear();
        const_regs_.clear();
        scopes_.clear();
        scope_regs_.clear();
        temps_.clear();
        resources_.clear();
        loops_.clear();
        frames_ = 0;
        max_frames_ = 0;
        private_inits_.clear();
    }

    std::uint16_t fresh_reg(Loc loc = {}) {
        if (next_reg_ >= 0xff00) fail(loc, "shader is too large (register limit exceeded)");
        return static_cast<std::uint16_t>(next_reg_++);
    }

    std::uint16_t alloc_reg() {
        if (!free_regs_.empty()) {
            auto r = free_regs_.back();
            free_regs_.pop_back();
            return r;
        }
        return fresh_reg();
    }

    std::uint16_t temp() {
        auto r = alloc_reg();
        temps_.back().push_back(r);
        return r;
    }

    std::uint16_t owned() {
        auto r = alloc_reg();
        scope_regs_.back().push_back(r);
        return r;
    }

    void begin_temps() { temps_.emplace_back(); }
    void end_temps() {
        for (auto r : temps_.back()) free_regs_.push_back(r);
        temps_.pop_back();
    }

    // Moves a temp register into the current scope; returns false if `r` is not a temp.
    bool adopt(std::uint16_t r) {
        for (auto it = temps_.rbegin(); it != temps_.rend(); ++it) {
            auto pos = std::find(it->begin(), it->end(), r);
            if (pos != it->end()) {
                it->erase(pos);
                scope_regs_.back().push_back(r);
                return true;
            }
        }
        return false;
    }

    void push_scope() {
        scopes_.emplace_back();
        scope_regs_.emplace_back();
    }

    void pop_scope() {
        for (auto r : scope_regs_.back()) free_regs_.push_back(r);
        scope_regs_.pop_back();
        scopes_.pop_back();
    }

    void declare(Loc loc, const std::string& name, Symbol sym) {
        if (is_reserved_word(name)) fail(loc, "'" + name + "' is a reserved word");
        auto& scope = scopes_.back();
        if (scope.contains(name)) fail(loc, "redeclaration of '" + name + "'");
        scope.emplace(name, std::move(sym));
    }

    Symbol* lookup(const std::string& name) {
        for (auto it = scopes_.rbegin(); it != scopes_.rend(); ++it) {
            auto f = it->find(name);
            if (f != it->end()) return &f->second;
        }
        return nullptr;
    }

    std::uint16_t const_reg(std::uint32_t bits) {
        auto it = const_regs_.find(bits);
        if (it != const_regs_.end()) return it->second;
        auto r = fresh_reg();
        const_regs_[bits] = r;
        return r;
    }

    std::size_t emit(Op op, std::uint16_t d = 0, std::uint16_t a = 0, std::uint16_t b = 0, std::uint16_t c = 0,
                     std::uint32_t imm = 0) {
        prog_.code.push_back(Instr{op, d, a, b, c, imm});
        return prog_.code.size() - 1;
    }

    std::uint32_t pc() const { return static_cast<std::uint32_t>(prog_.code.size()); }
    void patch(std::size_t at) { prog_.code[at].imm = pc(); }

    std::uint16_t push_frame() {
        auto f = static_cast<std::uint16_t>(frames_++);
        max_frames_ = std::max(max_frames_, frames_);
        return f;
    }
    void pop_frame() { --frames_; }
    std::uint16_t top_frame() const { return frames_ == 0 ? std::uint16_t(0xffff) : std::uint16_t(frames_ - 1); }

    // ---------------------------------------------------------------- types
    const Type* resolve_type(const TypeRef& t) {
        const auto& n = t.name;
        auto need_params = [&](std::size_t k) {
            if (t.params.size() != k) fail(t.loc, "'" + n + "' expects " + std::to_string(k) + " template parameter(s)");
        };
        auto scalar_of = [&](const TypeRef& p) {
            const Type* s = resolve_type(p);
            if (!s->is_scalar()) fail(p.loc, "vector element type must be a scalar");
            return s->scalar;
        };
        if (n == "f32" || n == "i32" || n == "u32" || n == "bool") {
            need_params(0);
            return types_.scalar(n == "f32" ? SK::F32 : n == "i32" ? SK::I32 : n == "u32" ? SK::U32 : SK::Bool);
        }
        if (n == "f16" || n == "f64") fail(t.loc, "type '" + n + "' is not supported");
        if (n == "vec2" || n == "vec3" || n == "vec4") {
            need_params(1);
            return types_.vec(scalar_of(t.params[0]), static_cast<std::uint32_t>(n[3] - '0'));
        }
        if (n.size() == 5 && n.rfind("vec", 0) == 0 && n[3] >= '2' && n[3] <= '4') {
            const char s = n[4];
            if (s == 'f' || s == 'i' || s == 'u') {
                need_params(0);
                return types_.vec(s == 'f' ? SK::F32 : s == 'i' ? SK::I32 : SK::U32, static_cast<std::uint32_t>(n[3] - '0'));
            }
        }
        if (n == "array") {
            need_params(1);
            const Type* elem = resolve_type(t.params[0]);
            if (elem->kind == Type::Kind::Array && elem->count == 0) fail(t.loc, "runtime-sized arrays cannot be nested");
            std::uint32_t count = 0;
            if (t.count) {
                auto v = const_int(*t.count);
                if (v < 1) fail(t.count->loc, "array element count must be greater than 0");
                count = static_cast<std::uint32_t>(v);
            }
            return types_.array(elem, count);
        }
        if (n.rfind("mat", 0) == 0 || n == "ptr" || n == "atomic" || n.rfind("texture", 0) == 0 || n == "sampler") {
            fail(t.loc, "type '" + n + "' is not supported by this compiler");
        }
        if (auto it = structs_.find(n); it != structs_.end()) return it->second;
        if (auto it = struct_decls_.find(n); it != struct_decls_.end()) {
            if (resolving_.contains(n)) fail(t.loc, "recursive struct '" + n + "'");
            resolving_.insert({n, true});
            std::vector<Type::Member> members;
            const auto& decl = *it->second;
            for (std::size_t k = 0; k < decl.members.size(); ++k) {
                const auto& m = decl.members[k];
                const Type* mt = resolve_type(m.type);
                if (mt->kind == Type::Kind::Array && mt->count == 0 && k + 1 != decl.members.size()) {
                    fail(m.loc, "a runtime-sized array must be the last struct member");
                }
                for (const auto& prev : members)
                    if (prev.name == m.name) fail(m.loc, "duplicate member '" + m.name + "'");
                members.push_back({m.name, mt, 0});
            }
            resolving_.erase(n);
            const Type* st = types_.make_struct(n, std::move(members));
            structs_[n] = st;
            return st;
        }
        fail(t.loc, "unresolved type '" + n + "'");
    }

    bool has_runtime_array(const Type* t) const {
        if (t->kind == Type::Kind::Array) return t->count == 0;
        if (t->kind == Type::Kind::Struct) return has_runtime_array(t->members.back().type);
        return false;
    }

    // ---------------------------------------------------------------- module scope
    void lower_globals() {
        std::uint16_t slot = 0;
        for (const auto& g : m_.globals) {
            if (g.kind != GlobalDecl::Kind::Var) {
                if (!g.init) fail(g.loc, "'" + g.name + "' requires an initializer");
                Value v = rvalue(*g.init);
                if (!v.is_const()) fail(g.init->loc, "initializer of '" + g.name + "' is not a constant expression");
                if (g.type) v = convert(v, resolve_type(*g.type), g.init->loc);
                Symbol sym;
                sym.kind = Symbol::Kind::Const;
                sym.value = v;
                declare(g.loc, g.name, std::move(sym));
                continue;
            }
            if (!g.type) fail(g.loc, "module-scope variable '" + g.name + "' requires a type");
            const Type* type = resolve_type(*g.type);
            const std::string space = g.space.empty() ? "private" : g.space;
            Symbol sym;
            sym.kind = Symbol::Kind::Resource;
            if (space == "storage" || space == "uniform") {
                std::optional<std::int64_t> group, binding;
                for (const auto& a : g.attrs) {
                    if (a.name == "group" && a.args.size() == 1) group = const_int(*a.args[0]);
                    else if (a.name == "binding" && a.args.size() == 1) binding = const_int(*a.args[0]);
                    else fail(a.loc, "unexpected attribute '@" + a.name + "' on resource variable");
                }
                if (!group || !binding) fail(g.loc, "resource '" + g.name + "' requires @group and @binding");
                for (const auto& r : resources_) {
                    if (r.group == *group && r.binding == *binding) {
                        fail(g.loc, "binding collision at @group(" + std::to_string(*group) + ") @binding(" +
                                        std::to_string(*binding) + ")");
                    }
                }
                if (g.init) fail(g.init->loc, "resource variables cannot have initializers");
                ResourceBinding rb;
                rb.name = g.name;
                rb.group = static_cast<std::uint32_t>(*group);
                rb.binding = static_cast<std::uint32_t>(*binding);
                rb.space = space == "storage" ? AddressSpace::Storage : AddressSpace::Uniform;
                if (space == "uniform") {
                    if (!g.access.empty()) fail(g.loc, "uniform variables cannot specify an access mode");
                    if (has_runtime_array(type)) fail(g.loc, "uniform buffers cannot contain runtime-sized arrays");
                    rb.access = Access::Read;
                } else if (g.access.empty() || g.access == "read") {
                    rb.access = Access::Read;
                } else if (g.access == "read_write") {
                    rb.access = Access::ReadWrite;
                } else {
                    fail(g.loc, "invalid access mode '" + g.access + "' for storage");
                }
                if (has_runtime_array(type)) {
                    const Type* arr = type->kind == Type::Kind::Array ? type : type->members.back().type;
                    rb.runtime_stride = arr->elem->stride();
                    rb.min_words = type->kind == Type::Kind::Array ? 0 : type->members.back().offset;
                } else {
                    rb.min_words = type->size;
                }
                sym.resource = static_cast<int>(resources_.size());
                resources_.push_back(rb);
                sym.value.kind = Value::Kind::Mem;
                sym.value.type = type;
                sym.value.mem = MemRef{Space::Global, slot++, kNoReg, 0, rb.access == Access::ReadWrite};
            } else if (space == "workgroup") {
                if (g.init) fail(g.init->loc, "workgroup variables cannot have initializers");
                if (has_runtime_array(type)) fail(g.loc, "workgroup variables must have a fixed size");
                prog_.workgroup_words = round_up(prog_.workgroup_words, type->align);
                sym.value.kind = Value::Kind::Mem;
                sym.value.type = type;
                sym.value.mem = MemRef{Space::Workgroup, 0, kNoReg, prog_.workgroup_words, true};
                prog_.workgroup_words += type->size;
            } else if (space == "private") {
                if (has_runtime_array(type)) fail(g.loc, "private variables must have a fixed size");
                sym.kind = Symbol::Kind::Var;
                sym.value = make_variable(type, true);
                private_inits_.push_back({&g, sym.value});
            } else {
                fail(g.loc, "unsupported address space '" + space + "'");
            }
            declare(g.loc, g.name, std::move(sym));
        }
    }

    // Scalars and vectors live in registers; aggregates in per-invocation private memory.
    Value make_variable(const Type* type, bool module_scope) {
        Value v;
        v.type = type;
        if (type->is_numeric_vector_or_scalar()) {
            v.kind = Value::Kind::Regs;
            v.assignable = true;
            for (std::uint32_t k = 0; k < v.width(); ++k) v.r[k] = module_scope ? fresh_reg() : owned();
        } else {
            v.kind = Value::Kind::Mem;
            prog_.private_words = round_up(prog_.private_words, type->align);
            v.mem = MemRef{Space::Private, 0, kNoReg, prog_.private_words, true};
            prog_.private_words += type->size;
        }
        return v;
    }

    void emit_private_initializers() {
        begin_temps();
        for (auto& [decl, var] : private_inits_) {
            if (decl->init) {
                Value init = convert(rvalue(*decl->init), var.type, decl->init->loc);
                store(var, init, decl->loc);
            } else {
                zero_init(var);
            }
        }
        end_temps();
    }

    void zero_init(const Value& var) {
        if (var.kind == Value::Kind::Regs) {
            for (std::uint32_t k = 0; k < var.width(); ++k) emit(Op::MOVM, var.r[k], const_reg(0));
        } else {
            emit(Op::ZEROP, 0, 0, 0, static_cast<std::uint16_t>(var.type->size), var.mem.offset);
        }
    }

    void bind_builtin_param(const Param& p) {
        std::string builtin;
        for (const auto& a : p.attrs) {
            if (a.name == "builtin" && a.args.size() == 1 && a.args[0]->kind == Expr::Kind::Ident) builtin = a.args[0]->text;
            else fail(a.loc, "unsupported parameter attribute '@" + a.name + "'");
        }
        if (builtin.empty()) fail(p.loc, "entry point parameter '" + p.name + "' must be a @builtin");
        const Type* type = resolve_type(p.type);
        Value v;
        v.kind = Value::Kind::Regs;
        v.type = type;
        auto bind3 = [&](ir::Builtin first) {
            if (type != types_.vec(SK::U32, 3)) fail(p.loc, "@builtin(" + builtin + ") must have type vec3<u32>");
            for (int k = 0; k < 3; ++k) {
                auto idx = static_cast<std::size_t>(first) + static_cast<std::size_t>(k);
                if (prog_.builtins[idx] == kNoReg) prog_.builtins[idx] = fresh_reg();
                v.r[k] = prog_.builtins[idx];
            }
        };
        if (builtin == "global_invocation_id") bind3(ir::Builtin::GlobalIdX);
        else if (builtin == "local_invocation_id") bind3(ir::Builtin::LocalIdX);
        else if (builtin == "workgroup_id") bind3(ir::Builtin::WorkgroupIdX);
        else if (builtin == "num_workgroups") bind3(ir::Builtin::NumWorkgroupsX);
        else if (builtin == "local_invocation_index") {
            if (type != types_.scalar(SK::U32)) fail(p.loc, "@builtin(local_invocation_index) must have type u32");
            auto idx = static_cast<std::size_t>(ir::Builtin::LocalIndex);
            if (prog_.builtins[idx] == kNoReg) prog_.builtins[idx] = fresh_reg();
            v.r[0] = prog_.builtins[idx];
        } else {
            fail(p.loc, "unknown compute builtin '" + builtin + "'");
        }
        Symbol sym;
        sym.kind = Symbol::Kind::Builtin;
        sym.value = v;
        declare(p.loc, p.name, std::move(sym));
    }

    // ---------------------------------------------------------------- constants and conversion
    std::int64_t const_int(const Expr& e) {
        begin_temps();
        Value v = rvalue(e);
        end_temps();
        if (!v.is_const() || !v.type->is_scalar() || !is_integer(v.type->scalar)) {
            fail(e.loc, "expected a constant integer expression");
        }
        return v.c[0].i;
    }

    Value make_const(SK k, CVal c) {
        Value v;
        v.kind = Value::Kind::Const;
        v.type = types_.scalar(k);
        v.c[0] = c;
        return v;
    }

    // Converts an abstract scalar constant to the concrete scalar kind `to`.
    CVal convert_abstract(SK from, const CVal& c, SK to, Loc loc) {
        CVal out;
        if (from == SK::AInt) {
            switch (to) {
                case SK::I32:
                    if (c.i < INT32_MIN || c.i > INT32_MAX) fail(loc, "value " + std::to_string(c.i) + " cannot be represented as 'i32'");
                    out.i = c.i;
                    return out;
                case SK::U32:
                    if (c.i < 0 || c.i > UINT32_MAX) fail(loc, "value " + std::to_string(c.i) + " cannot be represented as 'u32'");
                    out.i = c.i;
                    return out;
                case SK::F32:
                case SK::AFloat: out.f = static_cast<double>(static_cast<float>(c.i)); return out;
                case SK::AInt: return c;
                default: break;
            }
        } else if (from == SK::AFloat) {
            if (to == SK::F32) {
                const float f = static_cast<float>(c.f);
                if (!std::isfinite(f) && std::isfinite(c.f)) fail(loc, "value cannot be represented as 'f32'");
                out.f = f;
                return out;
            }
            if (to == SK::AFloat) return c;
        }
        fail(loc, std::string("cannot convert '") + sk_name(from) + "' to '" + sk_name(to) + "'");
    }

    // Implicit conversion: only abstract values convert; concrete types must match exactly.
    Value convert(Value v, const Type* target, Loc loc) {
        if (v.type == target) return v;
        if (v.is_const() && v.type->is_scalar() && is_abstract(v.type->scalar)) {
            if (target->is_scalar()) {
                Value out = make_const(target->scalar, convert_abstract(v.type->scalar, v.c[0], target->scalar, loc));
                return out;
            }
        }
        fail(loc, "cannot use value of type '" + v.type->name + "' as '" + target->name + "'");
    }

    Value concretize(Value v, Loc loc) {
        if (v.type->is_scalar() && is_abstract(v.type->scalar)) {
            return convert(v, types_.scalar(v.type->scalar == SK::AInt ? SK::I32 : SK::F32), loc);
        }
        return v;
    }

    // Splat or select one component of a scalar/vector value as a scalar value.
    Value component(const Value& v, std::uint32_t k) {
        Value out;
        out.type = types_.scalar(v.type->scalar);
        const std::uint32_t idx = v.type->is_vector() ? k : 0;
        if (v.is_const()) {
            out.kind = Value::Kind::Const;
            out.c[0] = v.c[idx];
        } else {
            out.kind = Value::Kind::Regs;
            out.r[0] = v.r[idx];
        }
        return out;
    }

    std::uint16_t reg_of(const Value& scalar) {
        if (scalar.is_const()) return const_reg(to_word(scalar.type->scalar, scalar.c[0]));
        return scalar.r[0];
    }

    // Applies `op` per component; folds when every operand is constant.
    Value apply(Op op, const Type* result, std::initializer_list<Value> args) {
        const std::uint32_t width = result->is_vector() ? result->width : 1;
        bool all_const = true;
        for (const auto& a : args) all_const = all_const && a.is_const();
        Value out;
        out.type = result;
        out.kind = all_const ? Value::Kind::Const : Value::Kind::Regs;
        for (std::uint32_t k = 0; k < width; ++k) {
            std::array<Value, 3> comps;
            std::size_t n = 0;
            for (const auto& a : args) comps[n++] = component(a, k);
            if (all_const) {
                std::array<std::uint32_t, 3> w{};
                for (std::size_t j = 0; j < n; ++j) w[j] = to_word(comps[j].type->scalar, comps[j].c[0]);
                out.c[k] = from_word(result->scalar, ir::fold(op, w[0], w[1], w[2]));
            } else {
                const auto d = temp();
                emit(op, d, reg_of(comps[0]), n > 1 ? reg_of(comps[1]) : 0, n > 2 ? reg_of(comps[2]) : 0);
                out.r[k] = d;
            }
        }
        return out;
    }

    // ---------------------------------------------------------------- memory
    std::uint16_t address_reg(const MemRef& m) { return m.dyn == kNoReg ? const_reg(0) : m.dyn; }

    Op load_op(Space s) { return s == Space::Global ? Op::LDG : s == Space::Workgroup ? Op::LDW : Op::LDP; }
    Op store_op(Space s) { return s == Space::Global ? Op::STG : s == Space::Workgroup ? Op::STW : Op::STP; }

    Value load(Value v, Loc loc) {
        if (v.kind != Value::Kind::Mem) return v;
        if (!v.type->is_numeric_vector_or_scalar()) {
            fail(loc, "cannot load a value of type '" + v.type->name + "'; index or access a member first");
        }
        Value out;
        out.kind = Value::Kind::Regs;
        out.type = v.type;
        const auto addr = address_reg(v.mem);
        for (std::uint32_t k = 0; k < v.width(); ++k) {
            const auto d = temp();
            emit(load_op(v.mem.space), d, addr, v.mem.slot, 0, v.mem.offset + k);
            out.r[k] = d;
        }
        return out;
    }

    void store(const Value& dst, const Value& src, Loc loc) {
        if (dst.kind == Value::Kind::Regs) {
            std::array<std::uint16_t, 4> from{};
            bool aliased = false;
            for (std::uint32_t k = 0; k < dst.width(); ++k) {
                from[k] = reg_of(component(src, k));
                for (std::uint32_t j = 0; j < dst.width(); ++j) aliased = aliased || (j != k && from[k] == dst.r[j]);
            }
            if (aliased) {
                for (std::uint32_t k = 0; k < dst.width(); ++k) {
                    const auto t = temp();
                    emit(Op::MOV, t, from[k]);
                    from[k] = t;
                }
            }
            for (std::uint32_t k = 0; k < dst.width(); ++k) emit(Op::MOVM, dst.r[k], from[k]);
            return;
        }
        if (dst.kind != Value::Kind::Mem || !dst.type->is_numeric_vector_or_scalar()) {
            fail(loc, "cannot assign a value of type '" + dst.type->name + "'");
        }
        const auto addr = address_reg(dst.mem);
        for (std::uint32_t k = 0; k < dst.width(); ++k) {
            emit(store_op(dst.mem.space), 0, addr, dst.mem.slot, reg_of(component(src, k)), dst.mem.offset + k);
        }
    }

    // Adds index * stride to a memory reference.
    MemRef offset_by(MemRef m, const Value& index, std::uint32_t stride, std::uint32_t bound, Loc loc) {
        if (index.is_const()) {
            const auto i = index.c[0].i;
            if (i < 0 || (bound && i >= bound)) {
                fail(loc, "index " + std::to_string(i) + " out of bounds [0.." + std::to_string(bound ? bound - 1 : 0) + "]");
            }
            m.offset += static_cast<std::uint32_t>(i) * stride;
            return m;
        }
        std::uint16_t scaled = index.r[0];
        if (stride != 1) {
            scaled = temp();
            emit(Op::IMUL, scaled, index.r[0], const_reg(stride));
        }
        if (m.dyn == kNoReg) {
            m.dyn = scaled;
        } else {
            const auto sum = temp();
            emit(Op::IADD, sum, m.dyn, scaled);
            m.dyn = sum;
        }
        return m;
    }

    // ---------------------------------------------------------------- expressions
    Value rvalue(const Expr& e) { return load(expr(e), e.loc); }

    Value expr(const Expr& e) {
        switch (e.kind) {
            case Expr::Kind::IntLit: {
                if (e.suffix == 'i') {
                    if (e.int_value > INT32_MAX) fail(e.loc, "value cannot be represented as 'i32'");
                    return make_const(SK::I32, CVal{static_cast<std::int64_t>(e.int_value), 0});
                }
                if (e.suffix == 'u') {
                    if (e.int_value > UINT32_MAX) fail(e.loc, "value cannot be represented as 'u32'");
                    return make_const(SK::U32, CVal{static_cast<std::int64_t>(e.int_value), 0});
                }
                if (e.int_value > static_cast<std::uint64_t>(INT64_MAX)) fail(e.loc, "integer literal out of range");
                return make_const(SK::AInt, CVal{static_cast<std::int64_t>(e.int_value), 0});
            }
            case Expr::Kind::FloatLit:
                if (e.suffix == 'f') return make_const(SK::F32, CVal{0, static_cast<double>(static_cast<float>(e.float_value))});
                return make_const(SK::AFloat, CVal{0, e.float_value});
            case Expr::Kind::BoolLit: return make_const(SK::Bool, CVal{e.bool_value ? 1 : 0, 0});
            case Expr::Kind::Ident: {
                Symbol* s = lookup(e.text);
                if (!s) fail(e.loc, "unresolved identifier '" + e.text + "'");
                if (s->kind == Symbol::Kind::Resource && s->resource >= 0) resources_[static_cast<std::size_t>(s->resource)].used = true;
                return s->value;
            }
            case Expr::Kind::Unary: return unary(e);
            case Expr::Kind::Binary: {
                Value a = rvalue(*e.args[0]);
                Value b = rvalue(*e.args[1]);
                return binary(e.text, a, b, e.loc);
            }
            case Expr::Kind::Call: return call(e);
            case Expr::Kind::Index: return index(e);
            case Expr::Kind::Member: return member(e);
            case Expr::Kind::AddressOf: fail(e.loc, "'&' is only supported as the argument of arrayLength");
        }
        fail(e.loc, "unsupported expression");
    }

    Value unary(const Expr& e) {
        Value v = rvalue(*e.args[0]);
        const SK k = v.type->scalar;
        if (!v.type->is_numeric_vector_or_scalar()) fail(e.loc, "invalid operand for unary '" + e.text + "'");
        if (e.text == "-") {
            if (k == SK::AInt) return make_const(k, CVal{-v.c[0].i, 0});
            if (k == SK::AFloat) return make_const(k, CVal{0, -v.c[0].f});
            if (k == SK::F32) return apply(Op::FNEG, v.type, {v});
            if (k == SK::I32) return apply(Op::INEG, v.type, {v});
            fail(e.loc, std::string("no matching overload for unary '-' on '") + v.type->name + "'");
        }
        if (e.text == "!") {
            if (k != SK::Bool) fail(e.loc, "'!' requires a bool operand, found '" + v.type->name + "'");
            return apply(Op::BNOT, v.type, {v});
        }
        // '~'
        if (k == SK::AInt) return make_const(k, CVal{~v.c[0].i, 0});
        if (k != SK::I32 && k != SK::U32) fail(e.loc, "'~' requires an integer operand, found '" + v.type->name + "'");
        return apply(Op::NOT, v.type, {v});
    }

    Value fold_abstract(const std::string& op, Value a, Value b, Loc loc) {
        const bool flt = a.type->scalar == SK::AFloat || b.type->scalar == SK::AFloat;
        if (flt) {
            const double x = a.type->scalar == SK::AFloat ? a.c[0].f : static_cast<double>(a.c[0].i);
            const double y = b.type->scalar == SK::AFloat ? b.c[0].f : static_cast<double>(b.c[0].i);
            auto f = [&](double r) { return make_const(SK::AFloat, CVal{0, r}); };
            auto bl = [&](bool r) { return make_const(SK::Bool, CVal{r ? 1 : 0, 0}); };
            if (op == "+") return f(x + y);
            if (op == "-") return f(x - y);
            if (op == "*") return f(x * y);
            if (op == "/") return f(x / y);
            if (op == "%") return f(std::fmod(x, y));
            if (op == "<") return bl(x < y);
            if (op == "<=") return bl(x <= y);
            if (op == ">") return bl(x > y);
            if (op == ">=") return bl(x >= y);
            if (op == "==") return bl(x == y);
            if (op == "!=") return bl(x != y);
            fail(loc, "no matching overload for operator '" + op + "' on abstract-float");
        }
        const std::int64_t x = a.c[0].i, y = b.c[0].i;
        auto i = [&](std::int64_t r) { return make_const(SK::AInt, CVal{r, 0}); };
        auto bl = [&](bool r) { return make_const(SK::Bool, CVal{r ? 1 : 0, 0}); };
        if (op == "+") return i(x + y);
        if (op == "-") return i(x - y);
        if (op == "*") return i(x * y);
        if (op == "/" || op == "%") {
            if (y == 0) fail(loc, "integer division by zero in constant expression");
            return i(op == "/" ? x / y : x % y);
        }
        if (op == "&") return i(x & y);
        if (op == "|") return i(x | y);
        if (op == "^") return i(x ^ y);
        if (op == "<<") return i(x << (y & 63));
        if (op == ">>") return i(x >> (y & 63));
        if (op == "<") return bl(x < y);
        if (op == "<=") return bl(x <= y);
        if (op == ">") return bl(x > y);
        if (op == ">=") return bl(x >= y);
        if (op == "==") return bl(x == y);
        if (op == "!=") return bl(x != y);
        fail(loc, "no matching overload for operator '" + op + "' on abstract-int");
    }

    Value binary(const std::string& op, Value a, Value b, Loc loc) {
        if (!a.type->is_numeric_vector_or_scalar() || !b.type->is_numeric_vector_or_scalar()) {
            fail(loc, "invalid operands for binary '" + op + "'");
        }
        const SK ka = a.type->scalar, kb = b.type->scalar;
        if (a.is_const() && b.is_const() && is_abstract(ka) && is_abstract(kb) && a.type->is_scalar() &&
            b.type->is_scalar()) {
            return fold_abstract(op, a, b, loc);
        }
        const bool shift = op == "<<" || op == ">>";
        if (shift) {
            a = concretize(a, loc);
            if (is_abstract(kb)) b = convert(b, types_.vec(SK::U32, 1), loc);
            if (b.type->scalar != SK::U32) fail(loc, "shift amount must be 'u32', found '" + b.type->name + "'");
        } else {
            if (is_abstract(ka) && !is_abstract(kb)) a = convert(a, types_.scalar(kb), loc);
            else if (is_abstract(kb) && !is_abstract(ka)) b = convert(b, types_.scalar(ka), loc);
        }
        const SK k = a.type->scalar;
        if (!shift && k != b.type->scalar) {
            fail(loc, "no matching overload for operator '" + op + "' (" + a.type->name + ", " + b.type->name + ")");
        }
        // vector-scalar mixing is allowed for arithmetic operators only
        const Type* operand = a.type->is_vector() ? a.type : b.type;
        if (a.type->is_vector() && b.type->is_vector() && a.type->width != b.type->width) {
            fail(loc, "mismatched vector widths for operator '" + op + "'");
        }
        const bool arith = op == "+" || op == "-" || op == "*" || op == "/" || op == "%";
        if (a.type->is_vector() != b.type->is_vector() && !arith && !shift) {
            fail(loc, "no matching overload for operator '" + op + "' (" + a.type->name + ", " + b.type->name + ")");
        }
        const Type* bool_result = types_.vec(SK::Bool, operand->is_vector() ? operand->width : 1);
        auto bad = [&]() -> Value {
            fail(loc, "no matching overload for operator '" + op + "' (" + a.type->name + ", " + b.type->name + ")");
        };
        const bool f = k == SK::F32, s = k == SK::I32, u = k == SK::U32, bo = k == SK::Bool;
        if (op == "+") return f ? apply(Op::FADD, operand, {a, b}) : (s || u) ? apply(Op::IADD, operand, {a, b}) : bad();
        if (op == "-") return f ? apply(Op::FSUB, operand, {a, b}) : (s || u) ? apply(Op::ISUB, operand, {a, b}) : bad();
        if (op == "*") return f ? apply(Op::FMUL, operand, {a, b}) : (s || u) ? apply(Op::IMUL, operand, {a, b}) : bad();
        if (op == "/") return f ? apply(Op::FDIV, operand, {a, b}) : s ? apply(Op::SDIV, operand, {a, b}) : u ? apply(Op::UDIV, operand, {a, b}) : bad();
        if (op == "%") return f ? apply(Op::FMOD, operand, {a, b}) : s ? apply(Op::SMOD, operand, {a, b}) : u ? apply(Op::UMOD, operand, {a, b}) : bad();
        if (op == "==") return apply(f ? Op::FEQ : Op::IEQ, bool_result, {a, b});
        if (op == "!=") return apply(f ? Op::FNE : Op::INE, bool_result, {a, b});
        if (op == "<") return f ? apply(Op::FLT, bool_result, {a, b}) : s ? apply(Op::SLT, bool_result, {a, b}) : u ? apply(Op::ULT, bool_result, {a, b}) : bad();
        if (op == "<=") return f ? apply(Op::FLE, bool_result, {a, b}) : s ? apply(Op::SLE, bool_result, {a, b}) : u ? apply(Op::ULE, bool_result, {a, b}) : bad();
        if (op == ">") return f ? apply(Op::FGT, bool_result, {a, b}) : s ? apply(Op::SGT, bool_result, {a, b}) : u ? apply(Op::UGT, bool_result, {a, b}) : bad();
        if (op == ">=") return f ? apply(Op::FGE, bool_result, {a, b}) : s ? apply(Op::SGE, bool_result, {a, b}) : u ? apply(Op::UGE, bool_result, {a, b}) : bad();
        if (op == "&&") return bo ? apply(Op::AND, operand, {a, b}) : bad();
        if (op == "||") return bo ? apply(Op::OR, operand, {a, b}) : bad();
        if (op == "&") return (s || u || bo) ? apply(Op::AND, operand, {a, b}) : bad();
        if (op == "|") return (s || u || bo) ? apply(Op::OR, operand, {a, b}) : bad();
        if (op == "^") return (s || u || bo) ? apply(Op::XOR, operand, {a, b}) : bad();
        if (op == "<<") return (s || u) ? apply(Op::SHL, a.type, {a, b}) : bad();
        if (op == ">>") return s ? apply(Op::SSHR, a.type, {a, b}) : u ? apply(Op::USHR, a.type, {a, b}) : bad();
        return bad();
    }

    // Conversion constructor T(v) between scalar kinds, componentwise.
    Value convert_value(Value v, SK to, Loc loc) {
        const SK from = v.type->scalar;
        const Type* result = types_.vec(to, v.width());
        if (is_abstract(from)) {
            if (to == SK::Bool) {
                const bool nz = from == SK::AInt ? v.c[0].i != 0 : v.c[0].f != 0.0;
                return make_const(SK::Bool, CVal{nz ? 1 : 0, 0});
            }
            if (from == SK::AFloat && to != SK::F32) v = convert(v, types_.scalar(SK::F32), loc);
            else return convert(v, result, loc);
        }
        const SK f = v.type->scalar;
        if (f == to) return v;
        Op op = Op::MOV;
        if (to == SK::F32) op = f == SK::I32 ? Op::S2F : Op::U2F;
        else if (to == SK::I32) op = f == SK::F32 ? Op::F2S : Op::MOV;
        else if (to == SK::U32) op = f == SK::F32 ? Op::F2U : Op::MOV;
        else if (to == SK::Bool) op = f == SK::F32 ? Op::F2B : Op::I2B;
        return apply(op, result, {v});
    }

    Value construct_vector(const Expr& e, std::uint32_t width, std::optional<SK> elem) {
        std::vector<Value> comps;
        for (const auto& arg : e.args) {
            Value v = rvalue(*arg);
            if (!v.type->is_numeric_vector_or_scalar()) fail(arg->loc, "invalid vector constructor argument");
            for (std::uint32_t k = 0; k < v.width(); ++k) comps.push_back(component(v, k));
        }
        if (!elem) {
            if (comps.empty()) fail(e.loc, "cannot infer the element type of an empty vector constructor");
            std::optional<SK> concrete;
            for (const auto& c : comps)
                if (!is_abstract(c.type->scalar)) concrete = c.type->scalar;
            if (!concrete) {
                bool any_float = false;
                for (const auto& c : comps) any_float = any_float || c.type->scalar == SK::AFloat;
                concrete = any_float ? SK::F32 : SK::I32;
            }
            elem = concrete;
        }
        const Type* result = types_.vec(*elem, width);
        if (comps.empty()) {
            comps.assign(width, make_const(*elem, CVal{}));
        }
        if (comps.size() == 1 && width > 1) comps.assign(width, comps[0]);
        if (comps.size() != width) fail(e.loc, "wrong number of components for '" + result->name + "'");
        Value out;
        out.type = result;
        bool all_const = true;
        for (auto& c : comps) {
            c = convert(c, types_.scalar(*elem), e.loc);
            all_const = all_const && c.is_const();
        }
        out.kind = all_const ? Value::Kind::Const : Value::Kind::Regs;
        for (std::uint32_t k = 0; k < width; ++k) {
            if (all_const) out.c[k] = comps[k].c[0];
            else out.r[k] = reg_of(comps[k]);
        }
        return out;
    }

    // Brings abstract arguments to a common concrete type.
    void unify(std::vector<Value>& args, Loc loc, bool float_only = false) {
        std::optional<SK> concrete;
        bool any_float = false;
        for (const auto& a : args) {
            if (!a.type->is_numeric_vector_or_scalar()) fail(loc, "invalid builtin argument of type '" + a.type->name + "'");
            if (!is_abstract(a.type->scalar)) concrete = concrete.value_or(a.type->scalar);
            any_float = any_float || a.type->scalar == SK::AFloat;
        }
        const SK target = concrete.value_or(float_only || any_float ? SK::F32 : SK::I32);
        for (auto& a : args) {
            if (is_abstract(a.type->scalar)) a = convert(a, types_.scalar(target), loc);
        }
        const Type* widest = args[0].type;
        for (const auto& a : args) {
            if (a.type->scalar != target) {
                fail(loc, "no matching overload: mixed argument types '" + args[0].type->name + "' and '" + a.type->name + "'");
            }
            if (a.type->is_vector()) {
                if (widest->is_vector() && widest->width != a.type->width) fail(loc, "mismatched vector widths");
                widest = a.type;
            }
        }
        if (float_only && target != SK::F32) fail(loc, "builtin requires floating-point arguments");
    }

    Value call(const Expr& e) {
        const std::string& n = e.text;
        auto argc = [&](std::size_t k) {
            if (e.args.size() != k) {
                fail(e.loc, "'" + n + "' expects " + std::to_string(k) + " argument(s), got " + std::to_string(e.args.size()));
            }
        };
        auto args_rvalues = [&]() {
            std::vector<Value> v;
            for (const auto& a : e.args) v.push_back(rvalue(*a));
            return v;
        };
        auto result_type = [&](const std::vector<Value>& v) {
            const Type* t = v[0].type;
            for (const auto& a : v)
                if (a.type->is_vector()) t = a.type;
            return t;
        };

        if (e.callee_type) {
            if (n == "bitcast") {
                argc(1);
                const Type* to = resolve_type(e.callee_type->params.at(0));
                Value v = concretize(rvalue(*e.args[0]), e.loc);
                if (!to->is_numeric_vector_or_scalar() || to->scalar == SK::Bool || v.type->scalar == SK::Bool ||
                    v.width() != (to->is_vector() ? to->width : 1)) {
                    fail(e.loc, "invalid bitcast from '" + v.type->name + "' to '" + to->name + "'");
                }
                if (v.is_const()) {
                    Value out = v;
                    out.type = to;
                    for (std::uint32_t k = 0; k < v.width(); ++k) out.c[k] = from_word(to->scalar, to_word(v.type->scalar, v.c[k]));
                    return out;
                }
                Value out = v;
                out.type = to;
                out.assignable = false;
                return out;
            }
            if (n == "array") fail(e.loc, "array value constructors are not supported");
            const Type* t = resolve_type(*e.callee_type);
            if (e.args.size() == 1) {
                Value v = rvalue(*e.args[0]);
                if (v.type->is_vector() && v.type->width == t->width) return convert_value(v, t->scalar, e.loc);
            }
            return construct_vector(e, t->width, t->scalar);
        }

        if (n == "f32" || n == "i32" || n == "u32" || n == "bool") {
            const SK to = n == "f32" ? SK::F32 : n == "i32" ? SK::I32 : n == "u32" ? SK::U32 : SK::Bool;
            if (e.args.empty()) return make_const(to, CVal{});
            argc(1);
            Value v = rvalue(*e.args[0]);
            if (!v.type->is_scalar()) fail(e.loc, "'" + n + "' conversion requires a scalar argument");
            return convert_value(v, to, e.loc);
        }
        if (n == "vec2" || n == "vec3" || n == "vec4") return construct_vector(e, static_cast<std::uint32_t>(n[3] - '0'), std::nullopt);
        if (n.size() == 5 && n.rfind("vec", 0) == 0 && n[3] >= '2' && n[3] <= '4' && (n[4] == 'f' || n[4] == 'i' || n[4] == 'u')) {
            const SK k = n[4] == 'f' ? SK::F32 : n[4] == 'i' ? SK::I32 : SK::U32;
            return construct_vector(e, static_cast<std::uint32_t>(n[3] - '0'), k);
        }
        if (Symbol* s = lookup(n); s && s->kind != Symbol::Kind::Builtin) fail(e.loc, "'" + n + "' is not callable");

        static const std::unordered_map<std::string, Op> float_unary = {
            {"sqrt", Op::FSQRT},   {"inverseSqrt", Op::FINVSQRT}, {"exp", Op::FEXP},     {"exp2", Op::FEXP2},
            {"log", Op::FLOG},     {"log2", Op::FLOG2},           {"sin", Op::FSIN},     {"cos", Op::FCOS},
            {"tan", Op::FTAN},     {"asin", Op::FASIN},           {"acos", Op::FACOS},   {"atan", Op::FATAN},
            {"sinh", Op::FSINH},   {"cosh", Op::FCOSH},           {"tanh", Op::FTANH},   {"floor", Op::FFLOOR},
            {"ceil", Op::FCEIL},   {"round", Op::FROUND},         {"trunc", Op::FTRUNC}, {"fract", Op::FFRACT},
            {"sign", Op::FSIGN}};
        if (auto it = float_unary.find(n); it != float_unary.end()) {
            argc(1);
            auto v = args_rvalues();
            unify(v, e.loc, true);
            return apply(it->second, v[0].type, {v[0]});
        }
        if (n == "pow" || n == "atan2" || n == "step") {
            argc(2);
            auto v = args_rvalues();
            unify(v, e.loc, true);
            return apply(n == "pow" ? Op::FPOW : n == "atan2" ? Op::FATAN2 : Op::FSTEP, result_type(v), {v[0], v[1]});
        }
        if (n == "fma") {
            argc(3);
            auto v = args_rvalues();
            unify(v, e.loc, true);
            return apply(Op::FFMA, result_type(v), {v[0], v[1], v[2]});
        }
        if (n == "mix") {
            argc(3);
            auto v = args_rvalues();
            unify(v, e.loc, true);
            const Type* t = result_type(v);
            Value one = make_const(SK::F32, CVal{0, 1.0});
            Value inv = apply(Op::FSUB, v[2].type, {one, v[2]});
            return apply(Op::FADD, t, {apply(Op::FMUL, t, {v[0], inv}), apply(Op::FMUL, t, {v[1], v[2]})});
        }
        if (n == "abs") {
            argc(1);
            auto v = args_rvalues();
            unify(v, e.loc);
            const SK k = v[0].type->scalar;
            if (k == SK::U32) return v[0];
            return apply(k == SK::F32 ? Op::FABS : Op::SABS, v[0].type, {v[0]});
        }
        if (n == "min" || n == "max") {
            argc(2);
            auto v = args_rvalues();
            unify(v, e.loc);
            return apply(minmax_op(n == "min", v[0].type->scalar, e.loc), result_type(v), {v[0], v[1]});
        }
        if (n == "clamp") {
            argc(3);
            auto v = args_rvalues();
            unify(v, e.loc);
            const Type* t = result_type(v);
            const SK k = t->scalar;
            Value lo = apply(minmax_op(false, k, e.loc), t, {v[0], v[1]});
            return apply(minmax_op(true, k, e.loc), t, {lo, v[2]});
        }
        if (n == "select") {
            argc(3);
            std::vector<Value> v = {rvalue(*e.args[0]), rvalue(*e.args[1])};
            unify(v, e.loc);
            Value cond = rvalue(*e.args[2]);
            if (cond.type->scalar != SK::Bool) fail(e.args[2]->loc, "select condition must be bool");
            return apply(Op::SEL, result_type(v), {cond, v[1], v[0]});
        }
        if (n == "dot") {
            argc(2);
            auto v = args_rvalues();
            unify(v, e.loc);
            if (!v[0].type->is_vector() || v[0].type != v[1].type) fail(e.loc, "dot requires two vectors of the same type");
            const SK k = v[0].type->scalar;
            if (k == SK::Bool) fail(e.loc, "dot requires numeric vectors");
            const Type* st = types_.scalar(k);
            Value acc;
            for (std::uint32_t c = 0; c < v[0].width(); ++c) {
                Value p = apply(k == SK::F32 ? Op::FMUL : Op::IMUL, st, {component(v[0], c), component(v[1], c)});
                acc = c == 0 ? p : apply(k == SK::F32 ? Op::FADD : Op::IADD, st, {acc, p});
            }
            return acc;
        }
        if (n == "all" || n == "any") {
            argc(1);
            Value v = rvalue(*e.args[0]);
            if (v.type->scalar != SK::Bool) fail(e.loc, "'" + n + "' requires a bool argument");
            const Type* bt = types_.scalar(SK::Bool);
            Value acc = component(v, 0);
            for (std::uint32_t c = 1; c < v.width(); ++c) acc = apply(n == "all" ? Op::AND : Op::OR, bt, {acc, component(v, c)});
            return acc;
        }
        if (n == "arrayLength") {
            argc(1);
            const Expr& arg = *e.args[0];
            if (arg.kind != Expr::Kind::AddressOf) fail(arg.loc, "arrayLength expects a pointer argument '&buffer'");
            Value target = expr(*arg.args[0]);
            if (target.kind != Value::Kind::Mem || target.mem.space != Space::Global || target.type->kind != Type::Kind::Array ||
                target.type->count != 0) {
                fail(arg.loc, "arrayLength requires a runtime-sized storage array");
            }
            const auto d = temp();
            emit(Op::ARRLEN, d, 0, target.mem.slot, static_cast<std::uint16_t>(target.type->elem->stride()), target.mem.offset);
            Value out;
            out.kind = Value::Kind::Regs;
            out.type = types_.scalar(SK::U32);
            out.r[0] = d;
            return out;
        }
        if (n == "workgroupBarrier" || n == "storageBarrier") fail(e.loc, "'" + n + "' can only be called as a statement");
        fail(e.loc, "unresolved function '" + n + "'");
    }

    Op minmax_op(bool is_min, SK k, Loc loc) {
        switch (k) {
            case SK::F32: return is_min ? Op::FMIN : Op::FMAX;
            case SK::I32: return is_min ? Op::SMIN : Op::SMAX;
            case SK::U32: return is_min ? Op::UMIN : Op::UMAX;
            default: fail(loc, "min/max/clamp require numeric arguments");
        }
    }

    Value index(const Expr& e) {
        Value base = expr(*e.args[0]);
        Value idx = rvalue(*e.args[1]);
        if (!idx.type->is_scalar() || !is_integer(idx.type->scalar)) fail(e.args[1]->loc, "index must be an integer");
        if (idx.is_const() && idx.type->scalar == SK::AInt) idx = convert(idx, types_.scalar(SK::I32), e.loc);
        if (base.kind == Value::Kind::Mem) {
            if (base.type->kind == Type::Kind::Array) {
                Value out = base;
                out.type = base.type->elem;
                out.mem = offset_by(base.mem, idx, base.type->elem->stride(), base.type->count, e.loc);
                return out;
            }
            if (base.type->is_vector()) {
                Value out = base;
                out.type = types_.scalar(base.type->scalar);
                out.mem = offset_by(base.mem, idx, 1, base.type->width, e.loc);
                return out;
            }
            fail(e.loc, "cannot index a value of type '" + base.type->name + "'");
        }
        if (base.type->is_vector()) {
            if (!idx.is_const()) fail(e.args[1]->loc, "dynamic indexing of vector values is not supported");
            const auto i = idx.c[0].i;
            if (i < 0 || i >= base.type->width) fail(e.args[1]->loc, "vector index out of bounds");
            Value out = component(base, static_cast<std::uint32_t>(i));
            out.assignable = base.assignable;
            return out;
        }
        fail(e.loc, "cannot index a value of type '" + base.type->name + "'");
    }

    static int swizzle_index(char c) {
        switch (c) {
            case 'x': case 'r': return 0;
            case 'y': case 'g': return 1;
            case 'z': case 'b': return 2;
            case 'w': case 'a': return 3;
            default: return -1;
        }
    }

    Value member(const Expr& e) {
        Value base = expr(*e.args[0]);
        if (base.type->kind == Type::Kind::Struct) {
            if (base.kind != Value::Kind::Mem) fail(e.loc, "struct values are only supported in memory");
            for (const auto& m : base.type->members) {
                if (m.name == e.text) {
                    Value out = base;
                    out.type = m.type;
                    out.mem.offset += m.offset;
                    return out;
                }
            }
            fail(e.loc, "struct '" + base.type->name + "' has no member named '" + e.text + "'");
        }
        if (!base.type->is_vector()) fail(e.loc, "invalid member access '." + e.text + "' on '" + base.type->name + "'");
        std::vector<std::uint32_t> picks;
        for (char c : e.text) {
            const int k = swizzle_index(c);
            if (k < 0 || static_cast<std::uint32_t>(k) >= base.type->width) fail(e.loc, "invalid vector swizzle '" + e.text + "'");
            picks.push_back(static_cast<std::uint32_t>(k));
        }
        if (picks.size() > 4) fail(e.loc, "invalid vector swizzle '" + e.text + "'");
        if (picks.size() == 1) {
            if (base.kind == Value::Kind::Mem) {
                Value out = base;
                out.type = types_.scalar(base.type->scalar);
                out.mem.offset += picks[0];
                return out;
            }
            Value out = component(base, picks[0]);
            out.assignable = base.assignable;
            return out;
        }
        Value src = load(base, e.loc);
        Value out;
        out.type = types_.vec(base.type->scalar, static_cast<std::uint32_t>(picks.size()));
        out.kind = src.kind;
        for (std::size_t k = 0; k < picks.size(); ++k) {
            if (src.is_const()) out.c[k] = src.c[picks[k]];
            else out.r[k] = src.r[picks[k]];
        }
        return out;
    }

    // ---------------------------------------------------------------- statements
    void lower_block_body(const std::vector<StmtP>& body) {
        for (const auto& s : body) statement(*s);
    }

    void block(const std::vector<StmtP>& body) {
        push_scope();
        lower_block_body(body);
        pop_scope();
    }

    bool assignable(const Value& v) const {
        if (v.kind == Value::Kind::Regs) return v.assignable;
        if (v.kind == Value::Kind::Mem) return v.mem.writable;
        return false;
    }

    void statement(const Stmt& s) {
        begin_temps();
        switch (s.kind) {
            case Stmt::Kind::Empty: break;
            case Stmt::Kind::Block: block(s.body); break;
            case Stmt::Kind::Var: var_decl(s); break;
            case Stmt::Kind::Let:
            case Stmt::Kind::Const: let_decl(s); break;
            case Stmt::Kind::Assign: assign(s); break;
            case Stmt::Kind::Increment:
            case Stmt::Kind::Decrement: inc_dec(s); break;
            case Stmt::Kind::If: if_stmt(s); break;
            case Stmt::Kind::For:
            case Stmt::Kind::While: for_stmt(s); break;
            case Stmt::Kind::Loop: loop_stmt(s); break;
            case Stmt::Kind::Break:
                if (loops_.empty()) fail(s.loc, "'break' outside of a loop");
                if (loops_.back().in_continuing) fail(s.loc, "'break' is not allowed in a continuing block; use 'break if'");
                emit(Op::BREAK, 0, 0, loops_.back().frame, top_frame());
                break;
            case Stmt::Kind::Continue:
                if (loops_.empty()) fail(s.loc, "'continue' outside of a loop");
                if (loops_.back().in_continuing) fail(s.loc, "'continue' is not allowed in a continuing block");
                emit(Op::CONTINUE, 0, 0, loops_.back().frame, top_frame());
                break;
            case Stmt::Kind::Return:
                if (s.init) fail(s.loc, "compute entry points cannot return a value");
                if (!loops_.empty() && loops_.back().in_continuing) fail(s.loc, "'return' is not allowed in a continuing block");
                emit(Op::RETURN, 0, 0, 0, top_frame());
                break;
            case Stmt::Kind::Call: call_stmt(s); break;
            case Stmt::Kind::Phony: rvalue(*s.init); break;
            case Stmt::Kind::BreakIf: fail(s.loc, "unexpected 'break if'");
        }
        end_temps();
    }

    void var_decl(const Stmt& s) {
        const Type* type = nullptr;
        Value init;
        if (s.init) init = rvalue(*s.init);
        if (s.type) {
            type = resolve_type(*s.type);
            if (s.init) init = convert(init, type, s.init->loc);
        } else {
            if (!s.init) fail(s.loc, "'var' declaration requires a type or an initializer");
            init = concretize(init, s.init->loc);
            type = init.type;
        }
        if (has_runtime_array(type)) fail(s.loc, "function variables must have a fixed size");
        Value var = make_variable(type, false);
        if (s.init) {
            if (!type->is_numeric_vector_or_scalar()) fail(s.loc, "aggregate initializers are not supported");
            store(var, init, s.loc);
        } else {
            zero_init(var);
        }
        Symbol sym;
        sym.kind = Symbol::Kind::Var;
        sym.value = var;
        declare(s.loc, s.name, std::move(sym));
    }

    void let_decl(const Stmt& s) {
        Value v = rvalue(*s.init);
        if (s.type) v = convert(v, resolve_type(*s.type), s.init->loc);
        Symbol sym;
        if (s.kind == Stmt::Kind::Const) {
            if (!v.is_const()) fail(s.init->loc, "const initializer must be a constant expression");
            sym.kind = Symbol::Kind::Const;
        } else {
            v = concretize(v, s.init->loc);
            sym.kind = Symbol::Kind::Let;
            if (v.kind == Value::Kind::Regs) {
                for (std::uint32_t k = 0; k < v.width(); ++k) {
                    if (!adopt(v.r[k])) {
                        const auto r = owned();
                        emit(Op::MOV, r, v.r[k]);
                        v.r[k] = r;
                    }
                }
            }
        }
        v.assignable = false;
        sym.value = v;
        declare(s.loc, s.name, std::move(sym));
    }

    void assign(const Stmt& s) {
        Value lhs = expr(*s.lhs);
        if (!assignable(lhs)) fail(s.lhs->loc, "cannot assign to this expression (it is not a mutable variable or writable storage)");
        Value rhs = rvalue(*s.init);
        if (s.op != "=") {
            const std::string op = s.op.substr(0, s.op.size() - 1);
            rhs = binary(op, load(lhs, s.lhs->loc), rhs, s.loc);
        }
        rhs = convert(rhs, lhs.type, s.init->loc);
        store(lhs, rhs, s.loc);
    }

    void inc_dec(const Stmt& s) {
        Value lhs = expr(*s.lhs);
        if (!assignable(lhs)) fail(s.lhs->loc, "cannot modify this expression");
        if (!lhs.type->is_scalar() || (lhs.type->scalar != SK::I32 && lhs.type->scalar != SK::U32)) {
            fail(s.loc, "increment and decrement require an integer variable");
        }
        Value one = make_const(lhs.type->scalar, CVal{1, 0});
        Value r = apply(s.kind == Stmt::Kind::Increment ? Op::IADD : Op::ISUB, lhs.type, {load(lhs, s.loc), one});
        store(lhs, r, s.loc);
    }

    std::uint16_t condition(const Expr& e) {
        Value c = rvalue(e);
        if (!c.type->is_scalar() || c.type->scalar != SK::Bool) fail(e.loc, "condition must be 'bool', found '" + c.type->name + "'");
        return reg_of(c);
    }

    void if_stmt(const Stmt& s) {
        const auto c = condition(*s.cond);
        const auto f = push_frame();
        emit(Op::IF_BEGIN, 0, c, f);
        const auto skip_then = emit(Op::JZ);
        block(s.body);
        if (s.else_branch) {
            patch(skip_then);
            emit(Op::IF_ELSE, 0, 0, f);
            const auto skip_else = emit(Op::JZ);
            if (s.else_branch->kind == Stmt::Kind::If) {
                statement(*s.else_branch);
            } else {
                block(s.else_branch->body);
            }
            patch(skip_else);
        } else {
            patch(skip_then);
        }
        emit(Op::IF_END, 0, 0, f);
        pop_frame();
    }

    void for_stmt(const Stmt& s) {
        push_scope();
        if (s.for_init) statement(*s.for_init);
        const auto f = push_frame();
        emit(Op::LOOP_BEGIN, 0, 0, f);
        const auto top = pc();
        if (s.cond) {
            begin_temps();
            const auto c = condition(*s.cond);
            emit(Op::LOOP_TEST, 0, c, f);
            end_temps();
        }
        const auto exit_jump = emit(Op::JZ);
        loops_.push_back({f, false});
        block(s.body);
        loops_.pop_back();
        emit(Op::LOOP_CONTINUING, 0, 0, f);
        if (s.for_update) {
            loops_.push_back({f, true});
            statement(*s.for_update);
            loops_.pop_back();
        }
        emit(Op::JNZ, 0, 0, 0, 0, top);
        patch(exit_jump);
        emit(Op::LOOP_END, 0, 0, f);
        pop_frame();
        pop_scope();
    }

    void loop_stmt(const Stmt& s) {
        const auto f = push_frame();
        emit(Op::LOOP_BEGIN, 0, 0, f);
        const auto top = pc();
        const auto exit_jump = emit(Op::JZ);
        push_scope();
        loops_.push_back({f, false});
        lower_block_body(s.body);
        emit(Op::LOOP_CONTINUING, 0, 0, f);
        loops_.back().in_continuing = true;
        push_scope();
        lower_block_body(s.continuing);
        if (s.break_if) {
            begin_temps();
            const auto c = condition(*s.break_if);
            emit(Op::BREAK_IF, 0, c, f);
            end_temps();
        }
        pop_scope();
        loops_.pop_back();
        pop_scope();
        emit(Op::JNZ, 0, 0, 0, 0, top);
        patch(exit_jump);
        emit(Op::LOOP_END, 0, 0, f);
        pop_frame();
    }

    void call_stmt(const Stmt& s) {
        const Expr& c = *s.init;
        if (c.text == "workgroupBarrier" || c.text == "storageBarrier") {
            if (!c.args.empty()) fail(c.loc, "'" + c.text + "' takes no arguments");
            emit(Op::BARRIER);
            prog_.uses_barrier = true;
            return;
        }
        rvalue(c);
        fail(c.loc, "ignoring the return value of '" + c.text + "'");
    }

    const ModuleAst& m_;
    CompileOptions opt_;
    TypeTable types_;
    std::unordered_map<std::string, const StructDecl*> struct_decls_;
    std::unordered_map<std::string, const Type*> structs_;
    std::unordered_map<std::string, bool> resolving_;

    ir::Program prog_;
    std::uint32_t next_reg_ = 0;
    std::vector<std::uint16_t> free_regs_;
    std::map<std::uint32_t, std::uint16_t> const_regs_;
    std::vector<std::unordered_map<std::string, Symbol>> scopes_;
    std::vector<std::vector<std::uint16_t>> scope_regs_;
    std::vector<std::vector<std::uint16_t>> temps_;
    std::vector<ResourceBinding> resources_;
    std::vector<LoopCtx> loops_;
    std::uint32_t frames_ = 0;
    std::uint32_t max_frames_ = 0;
    std::vector<std::pair<const GlobalDecl*, Value>> private_inits_;
};

}  // namespace

std::vector<EntryPoint> lower(const ModuleAst& module, const CompileOptions& options) {
    std::vector<EntryPoint> out;
    bool found = false;
    for (const auto& fn : module.functions) {
        bool compute = false;
        for (const auto& a : fn.attrs) {
            if (a.name == "compute") compute = true;
            else if (a.name != "workgroup_size") fail(a.loc, "unsupported function attribute '@" + a.name + "'");
        }
        if (!compute) fail(fn.loc, "function '" + fn.name + "': only @compute entry points are supported (no helper functions)");
        for (const auto& prev : out)
            if (prev.name == fn.name) fail(fn.loc, "redeclaration of '" + fn.name + "'");
        Lowerer lowerer(module, options);
        out.push_back(lowerer.lower_entry(fn));
        found = true;
    }
    if (!found) fail(Loc{1, 1}, "module has no @compute entry point");
    return out;
}

}  // namespace ndgpu::soft::wgsl
