// SIMT interpreter: a batch of whole workgroups runs in lockstep, one lane per
// invocation, with per-lane execution masks for divergent control flow.

#include <algorithm>
#include <cstring>
#include <vector>

#include <omp.h>

#include "ir.hpp"
#include "ndgpu/soft/shader.hpp"

namespace ndgpu::soft {

namespace {

using namespace ir;

constexpr std::uint32_t kOn = 0xffffffffu;

struct Batch {
    const ir::Program& p;
    std::span<const BoundResource> res;
    std::array<std::uint32_t, 3> groups;
    std::uint32_t wg_size;
    std::uint32_t groups_per_batch;
    std::uint32_t W;

    std::vector<std::uint32_t> regs;
    std::vector<std::uint32_t> exec;
    std::vector<std::uint32_t> saved;  // frame_depth * W
    std::vector<std::uint32_t> aux;
    std::vector<std::uint32_t> wg_mem;
    std::vector<std::uint32_t> priv;
    std::vector<std::uint32_t> lane_wg_base;
    bool any = false;
    bool full = false;

    Batch(const ir::Program& prog, std::span<const BoundResource> r, std::array<std::uint32_t, 3> g, std::uint32_t gpb)
        : p(prog), res(r), groups(g) {
        wg_size = p.workgroup_size[0] * p.workgroup_size[1] * p.workgroup_size[2];
        groups_per_batch = gpb;
        W = wg_size * gpb;
        regs.assign(static_cast<std::size_t>(p.num_regs) * W, 0u);
        exec.assign(W, 0u);
        saved.assign(static_cast<std::size_t>(std::max<std::uint32_t>(p.frame_depth, 1)) * W, 0u);
        aux.assign(saved.size(), 0u);
        wg_mem.assign(static_cast<std::size_t>(p.workgroup_words) * gpb, 0u);
        priv.assign(static_cast<std::size_t>(p.private_words) * W, 0u);
        lane_wg_base.resize(W);
        for (std::uint32_t l = 0; l < W; ++l) lane_wg_base[l] = (l / wg_size) * p.workgroup_words;
        for (const auto& [reg, bits] : p.constants) std::fill_n(R(reg), W, bits);
    }

    std::uint32_t* R(std::uint16_t r) { return regs.data() + static_cast<std::size_t>(r) * W; }
    std::uint32_t* SV(std::uint16_t f) { return saved.data() + static_cast<std::size_t>(f) * W; }
    std::uint32_t* AX(std::uint16_t f) { return aux.data() + static_cast<std::size_t>(f) * W; }

    void update_flags() {
        std::uint32_t o = 0, a = kOn;
        for (std::uint32_t l = 0; l < W; ++l) {
            o |= exec[l];
            a &= exec[l];
        }
        any = o != 0;
        full = a == kOn;
    }

    void setup(std::uint64_t first_group, std::uint64_t total_groups) {
        const auto sx = p.workgroup_size[0], sy = p.workgroup_size[1];
        const auto gx = groups[0], gy = groups[1];
        std::fill(wg_mem.begin(), wg_mem.end(), 0u);
        for (std::uint32_t l = 0; l < W; ++l) {
            const std::uint64_t wg = first_group + l / wg_size;
            const std::uint32_t li = l % wg_size;
            exec[l] = wg < total_groups ? kOn : 0u;
            const std::uint32_t lid[3] = {li % sx, (li / sx) % sy, li / (sx * sy)};
            const std::uint32_t wid[3] = {static_cast<std::uint32_t>(wg % gx), static_cast<std::uint32_t>((wg / gx) % gy),
                                          static_cast<std::uint32_t>(wg / (static_cast<std::uint64_t>(gx) * gy))};
            for (int k = 0; k < 3; ++k) {
                const auto gid_reg = p.builtins[static_cast<std::size_t>(ir::Builtin::GlobalIdX) + k];
                const auto lid_reg = p.builtins[static_cast<std::size_t>(ir::Builtin::LocalIdX) + k];
                const auto wid_reg = p.builtins[static_cast<std::size_t>(ir::Builtin::WorkgroupIdX) + k];
                const auto num_reg = p.builtins[static_cast<std::size_t>(ir::Builtin::NumWorkgroupsX) + k];
                if (gid_reg != ir::kNoReg) R(gid_reg)[l] = wid[k] * p.workgroup_size[k] + lid[k];
                if (lid_reg != ir::kNoReg) R(lid_reg)[l] = lid[k];
                if (wid_reg != ir::kNoReg) R(wid_reg)[l] = wid[k];
                if (num_reg != ir::kNoReg) R(num_reg)[l] = groups[k];
            }
            const auto li_reg = p.builtins[static_cast<std::size_t>(ir::Builtin::LocalIndex)];
            if (li_reg != ir::kNoReg) R(li_reg)[l] = li;
        }
        update_flags();
    }

    void run() {
        const auto& code = p.code;
        const std::size_t n = code.size();
        std::uint32_t* ex = exec.data();
        std::size_t pc = 0;
        while (pc < n) {
            const ir::Instr& in = code[pc++];
            switch (in.op) {
#define NDGPU_X_UNARY(name, expr)                              \
    case Op::name: {                                           \
        std::uint32_t* d = R(in.d);                            \
        const std::uint32_t* A = R(in.a);                      \
        for (std::uint32_t l = 0; l < W; ++l) {                \
            const std::uint32_t x = A[l];                      \
            d[l] = (expr);                                     \
        }                                                      \
        break;                                                 \
    }
                NDGPU_IR_UNARY(NDGPU_X_UNARY)
#undef NDGPU_X_UNARY
#define NDGPU_X_BINARY(name, expr)                             \
    case Op::name: {                                           \
        std::uint32_t* d = R(in.d);                            \
        const std::uint32_t* A = R(in.a);                      \
        const std::uint32_t* Bv = R(in.b);                     \
        for (std::uint32_t l = 0; l < W; ++l) {                \
            const std::uint32_t x = A[l], y = Bv[l];           \
            d[l] = (expr);                                     \
        }                                                      \
        break;                                                 \
    }
                NDGPU_IR_BINARY(NDGPU_X_BINARY)
#undef NDGPU_X_BINARY
#define NDGPU_X_TERNARY(name, expr)                            \
    case Op::name: {                                           \
        std::uint32_t* d = R(in.d);                            \
        const std::uint32_t* A = R(in.a);                      \
        const std::uint32_t* Bv = R(in.b);                     \
        const std::uint32_t* C = R(in.c);                      \
        for (std::uint32_t l = 0; l < W; ++l) {                \
            const std::uint32_t x = A[l], y = Bv[l], z = C[l]; \
            d[l] = (expr);                                     \
        }                                                      \
        break;                                                 \
    }
                NDGPU_IR_TERNARY(NDGPU_X_TERNARY)
#undef NDGPU_X_TERNARY
                case Op::MOVM: {
                    std::uint32_t* d = R(in.d);
                    const std::uint32_t* A = R(in.a);
                    if (full) {
                        std::memmove(d, A, W * sizeof(std::uint32_t));
                    } else if (any) {
                        for (std::uint32_t l = 0; l < W; ++l) d[l] = (A[l] & ex[l]) | (d[l] & ~ex[l]);
                    }
                    break;
                }
                case Op::LDG: {
                    std::uint32_t* d = R(in.d);
                    const std::uint32_t* A = R(in.a);
                    const BoundResource& r = res[in.b];
                    const std::uint64_t size = r.words ? r.size_words : 0;
                    for (std::uint32_t l = 0; l < W; ++l) {
                        const std::uint64_t addr = static_cast<std::uint64_t>(A[l]) + in.imm;
                        d[l] = addr < size ? r.words[addr] : 0u;
                    }
                    break;
                }
                case Op::STG: {
                    if (!any) break;
                    const std::uint32_t* A = R(in.a);
                    const std::uint32_t* V = R(in.c);
                    const BoundResource& r = res[in.b];
                    const std::uint64_t size = r.words ? r.size_words : 0;
                    for (std::uint32_t l = 0; l < W; ++l) {
                        const std::uint64_t addr = static_cast<std::uint64_t>(A[l]) + in.imm;
                        if (ex[l] && addr < size) r.words[addr] = V[l];
                    }
                    break;
                }
                case Op::LDW: {
                    std::uint32_t* d = R(in.d);
                    const std::uint32_t* A = R(in.a);
                    const std::uint64_t size = p.workgroup_words;
                    for (std::uint32_t l = 0; l < W; ++l) {
                        const std::uint64_t addr = static_cast<std::uint64_t>(A[l]) + in.imm;
                        d[l] = addr < size ? wg_mem[lane_wg_base[l] + addr] : 0u;
                    }
                    break;
                }
                case Op::STW: {
                    if (!any) break;
                    const std::uint32_t* A = R(in.a);
                    const std::uint32_t* V = R(in.c);
                    const std::uint64_t size = p.workgroup_words;
                    for (std::uint32_t l = 0; l < W; ++l) {
                        const std::uint64_t addr = static_cast<std::uint64_t>(A[l]) + in.imm;
                        if (ex[l] && addr < size) wg_mem[lane_wg_base[l] + addr] = V[l];
                    }
                    break;
                }
                case Op::LDP: {
                    std::uint32_t* d = R(in.d);
                    const std::uint32_t* A = R(in.a);
                    const std::uint64_t size = p.private_words;
                    for (std::uint32_t l = 0; l < W; ++l) {
                        const std::uint64_t addr = static_cast<std::uint64_t>(A[l]) + in.imm;
                        d[l] = addr < size ? priv[addr * W + l] : 0u;
                    }
                    break;
                }
                case Op::STP: {
                    if (!any) break;
                    const std::uint32_t* A = R(in.a);
                    const std::uint32_t* V = R(in.c);
                    const std::uint64_t size = p.private_words;
                    for (std::uint32_t l = 0; l < W; ++l) {
                        const std::uint64_t addr = static_cast<std::uint64_t>(A[l]) + in.imm;
                        if (ex[l] && addr < size) priv[addr * W + l] = V[l];
                    }
                    break;
                }
                case Op::ZEROP: {
                    for (std::uint32_t k = 0; k < in.c; ++k) {
                        std::uint32_t* row = priv.data() + static_cast<std::size_t>(in.imm + k) * W;
                        for (std::uint32_t l = 0; l < W; ++l) row[l] &= ~ex[l];
                    }
                    break;
                }
                case Op::ARRLEN: {
                    const BoundResource& r = res[in.b];
                    const std::uint32_t size = r.words ? r.size_words : 0;
                    const std::uint32_t len = size > in.imm && in.c ? (size - in.imm) / in.c : 0u;
                    std::fill_n(R(in.d), W, len);
                    break;
                }
                case Op::IF_BEGIN: {
                    std::uint32_t* s = SV(in.b);
                    std::uint32_t* a = AX(in.b);
                    const std::uint32_t* c = R(in.a);
                    for (std::uint32_t l = 0; l < W; ++l) {
                        s[l] = ex[l];
                        a[l] = 0u - (c[l] & 1u);
                        ex[l] &= a[l];
                    }
                    update_flags();
                    break;
                }
                case Op::IF_ELSE: {
                    const std::uint32_t* s = SV(in.b);
                    const std::uint32_t* a = AX(in.b);
                    for (std::uint32_t l = 0; l < W; ++l) ex[l] = s[l] & ~a[l];
                    update_flags();
                    break;
                }
                case Op::IF_END:
                case Op::LOOP_END: {
                    std::memcpy(ex, SV(in.b), W * sizeof(std::uint32_t));
                    update_flags();
                    break;
                }
                case Op::LOOP_BEGIN: {
                    std::memcpy(SV(in.b), ex, W * sizeof(std::uint32_t));
                    std::memcpy(AX(in.b), ex, W * sizeof(std::uint32_t));
                    break;
                }
                case Op::LOOP_TEST: {
                    std::uint32_t* a = AX(in.b);
                    const std::uint32_t* c = R(in.a);
                    for (std::uint32_t l = 0; l < W; ++l) {
                        a[l] &= 0u - (c[l] & 1u);
                        ex[l] = a[l];
                    }
                    update_flags();
                    break;
                }
                case Op::LOOP_CONTINUING: {
                    std::memcpy(ex, AX(in.b), W * sizeof(std::uint32_t));
                    update_flags();
                    break;
                }
                case Op::BREAK_IF: {
                    std::uint32_t* a = AX(in.b);
                    const std::uint32_t* c = R(in.a);
                    for (std::uint32_t l = 0; l < W; ++l) {
                        a[l] &= ~(ex[l] & (0u - (c[l] & 1u)));
                        ex[l] = a[l];
                    }
                    update_flags();
                    break;
                }
                case Op::BREAK: {
                    if (!any) break;
                    for (std::uint32_t f = in.b + 1u; f <= in.c; ++f) {
                        std::uint32_t* s = SV(static_cast<std::uint16_t>(f));
                        std::uint32_t* a = AX(static_cast<std::uint16_t>(f));
                        for (std::uint32_t l = 0; l < W; ++l) {
                            s[l] &= ~ex[l];
                            a[l] &= ~ex[l];
                        }
                    }
                    std::uint32_t* a = AX(in.b);
                    for (std::uint32_t l = 0; l < W; ++l) a[l] &= ~ex[l];
                    std::fill_n(ex, W, 0u);
                    any = full = false;
                    break;
                }
                case Op::CONTINUE: {
                    if (!any) break;
                    for (std::uint32_t f = in.b + 1u; f <= in.c; ++f) {
                        std::uint32_t* s = SV(static_cast<std::uint16_t>(f));
                        for (std::uint32_t l = 0; l < W; ++l) s[l] &= ~ex[l];
                    }
                    std::fill_n(ex, W, 0u);
                    any = full = false;
                    break;
                }
                case Op::RETURN: {
                    if (!any) break;
                    if (in.c != ir::kNoReg) {
                        for (std::uint32_t f = 0; f <= in.c; ++f) {
                            std::uint32_t* s = SV(static_cast<std::uint16_t>(f));
                            std::uint32_t* a = AX(static_cast<std::uint16_t>(f));
                            for (std::uint32_t l = 0; l < W; ++l) {
                                s[l] &= ~ex[l];
                                a[l] &= ~ex[l];
                            }
                        }
                    }
                    std::fill_n(ex, W, 0u);
                    any = full = false;
                    if (in.c == ir::kNoReg) return;
                    break;
                }
                case Op::JMP: pc = in.imm; break;
                case Op::JZ:
                    if (!any) pc = in.imm;
                    break;
                case Op::JNZ:
                    if (any) pc = in.imm;
                    break;
                case Op::BARRIER: break;
            }
        }
    }
};

}  // namespace

void execute(const EntryPoint& entry, std::span<const BoundResource> resources, std::array<std::uint32_t, 3> groups,
             const ExecOptions& options) {
    const ir::Program& p = *entry.program;
    const std::uint64_t total = static_cast<std::uint64_t>(groups[0]) * groups[1] * groups[2];
    if (total == 0) return;
    const std::uint32_t wg_size = p.workgroup_size[0] * p.workgroup_size[1] * p.workgroup_size[2];
    std::uint32_t gpb = std::max<std::uint32_t>(1, options.target_batch_lanes / wg_size);
    gpb = static_cast<std::uint32_t>(std::min<std::uint64_t>(gpb, total));
    const std::int64_t batches = static_cast<std::int64_t>((total + gpb - 1) / gpb);
    int threads = options.max_threads > 0 ? options.max_threads : omp_get_max_threads();
    threads = static_cast<int>(std::min<std::int64_t>(threads, batches));

#pragma omp parallel num_threads(threads)
    {
        Batch batch(p, resources, groups, gpb);
#pragma omp for schedule(dynamic)
        for (std::int64_t b = 0; b < batches; ++b) {
            batch.setup(static_cast<std::uint64_t>(b) * gpb, total);
            batch.run();
        }
    }
}

std::string disassemble(const EntryPoint& entry) { return ir::disassemble(*entry.program); }

}  // namespace ndgpu::soft
