#pragma once

// Register IR executed by the software adapter. Every register holds one
// 32-bit word per lane; f32/i32/u32/bool share the representation (bool is 0/1).
// The op tables below are X-macros so the executor and the constant folder
// evaluate exactly the same expression for each opcode.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace ndgpu::soft::ir {

inline float F(std::uint32_t w) { return std::bit_cast<float>(w); }
inline std::uint32_t U(float f) { return std::bit_cast<std::uint32_t>(f); }
inline std::int32_t S(std::uint32_t w) { return static_cast<std::int32_t>(w); }
inline std::uint32_t B(bool b) { return b ? 1u : 0u; }

inline std::uint32_t f32_to_i32(std::uint32_t w) {
    const float f = F(w);
    if (std::isnan(f)) return 0u;
    if (f <= -2147483648.0f) return 0x80000000u;
    if (f >= 2147483647.0f) return 0x7fffffffu;
    return static_cast<std::uint32_t>(static_cast<std::int32_t>(f));
}

inline std::uint32_t f32_to_u32(std::uint32_t w) {
    const float f = F(w);
    if (std::isnan(f) || f <= 0.0f) return 0u;
    if (f >= 4294967295.0f) return 0xffffffffu;
    return static_cast<std::uint32_t>(f);
}

inline std::uint32_t sdiv(std::uint32_t x, std::uint32_t y) {
    if (y == 0u || (x == 0x80000000u && y == 0xffffffffu)) return x;
    return static_cast<std::uint32_t>(S(x) / S(y));
}

inline std::uint32_t smod(std::uint32_t x, std::uint32_t y) {
    if (y == 0u || (x == 0x80000000u && y == 0xffffffffu)) return 0u;
    return static_cast<std::uint32_t>(S(x) % S(y));
}

inline float fsign(float f) { return f > 0.0f ? 1.0f : (f < 0.0f ? -1.0f : 0.0f); }

// X(name, expression over x)
#define NDGPU_IR_UNARY(X)                                  \
    X(MOV, x)                                              \
    X(FNEG, U(-F(x)))                                      \
    X(FABS, U(std::fabs(F(x))))                            \
    X(FSQRT, U(std::sqrt(F(x))))                           \
    X(FINVSQRT, U(1.0f / std::sqrt(F(x))))                 \
    X(FEXP, U(std::exp(F(x))))                             \
    X(FEXP2, U(std::exp2(F(x))))                           \
    X(FLOG, U(std::log(F(x))))                             \
    X(FLOG2, U(std::log2(F(x))))                           \
    X(FSIN, U(std::sin(F(x))))                             \
    X(FCOS, U(std::cos(F(x))))                             \
    X(FTAN, U(std::tan(F(x))))                             \
    X(FASIN, U(std::asin(F(x))))                           \
    X(FACOS, U(std::acos(F(x))))                           \
    X(FATAN, U(std::atan(F(x))))                           \
    X(FSINH, U(std::sinh(F(x))))                           \
    X(FCOSH, U(std::cosh(F(x))))                           \
    X(FTANH, U(std::tanh(F(x))))                           \
    X(FFLOOR, U(std::floor(F(x))))                         \
    X(FCEIL, U(std::ceil(F(x))))                           \
    X(FROUND, U(std::nearbyint(F(x))))                     \
    X(FTRUNC, U(std::trunc(F(x))))                         \
    X(FFRACT, U(F(x) - std::floor(F(x))))                  \
    X(FSIGN, U(fsign(F(x))))                               \
    X(INEG, 0u - x)                                        \
    X(SABS, (x == 0x80000000u ? x : (S(x) < 0 ? 0u - x : x))) \
    X(NOT, ~x)                                             \
    X(BNOT, x ^ 1u)                                        \
    X(F2S, f32_to_i32(x))                                  \
    X(F2U, f32_to_u32(x))                                  \
    X(S2F, U(static_cast<float>(S(x))))                    \
    X(U2F, U(static_cast<float>(x)))                       \
    X(F2B, B(F(x) != 0.0f))                                \
    X(I2B, B(x != 0u))

// X(name, expression over x, y)
#define NDGPU_IR_BINARY(X)                                  \
    X(FADD, U(F(x) + F(y)))                                 \
    X(FSUB, U(F(x) - F(y)))                                 \
    X(FMUL, U(F(x) * F(y)))                                 \
    X(FDIV, U(F(x) / F(y)))                                 \
    X(FMOD, U(F(x) - F(y) * std::trunc(F(x) / F(y))))       \
    X(FMIN, U(F(y) < F(x) ? F(y) : F(x)))                   \
    X(FMAX, U(F(x) < F(y) ? F(y) : F(x)))                   \
    X(FPOW, U(std::pow(F(x), F(y))))                        \
    X(FATAN2, U(std::atan2(F(x), F(y))))                    \
    X(FSTEP, U(F(y) >= F(x) ? 1.0f : 0.0f))                 \
    X(FLT, B(F(x) < F(y)))                                  \
    X(FLE, B(F(x) <= F(y)))                                 \
    X(FGT, B(F(x) > F(y)))                                  \
    X(FGE, B(F(x) >= F(y)))                                 \
    X(FEQ, B(F(x) == F(y)))                                 \
    X(FNE, B(F(x) != F(y)))                                 \
    X(IADD, x + y)                                          \
    X(ISUB, x - y)                                          \
    X(IMUL, x * y)                                          \
    X(SDIV, sdiv(x, y))                                     \
    X(UDIV, (y == 0u ? x : x / y))                          \
    X(SMOD, smod(x, y))                                     \
    X(UMOD, (y == 0u ? 0u : x % y))                         \
    X(SMIN, (S(y) < S(x) ? y : x))                          \
    X(SMAX, (S(x) < S(y) ? y : x))                          \
    X(UMIN, (y < x ? y : x))                                \
    X(UMAX, (x < y ? y : x))                                \
    X(AND, x & y)                                           \
    X(OR, x | y)                                            \
    X(XOR, x ^ y)                                           \
    X(SHL, x << (y & 31u))                                  \
    X(SSHR, static_cast<std::uint32_t>(S(x) >> (y & 31u)))  \
    X(USHR, x >> (y & 31u))                                 \
    X(SLT, B(S(x) < S(y)))                                  \
    X(SLE, B(S(x) <= S(y)))                                 \
    X(SGT, B(S(x) > S(y)))                                  \
    X(SGE, B(S(x) >= S(y)))                                 \
    X(ULT, B(x < y))                                        \
    X(ULE, B(x <= y))                                       \
    X(UGT, B(x > y))                                        \
    X(UGE, B(x >= y))                                       \
    X(IEQ, B(x == y))                                       \
    X(INE, B(x != y))

// X(name, expression over x, y, z)
#define NDGPU_IR_TERNARY(X)              \
    X(SEL, (x != 0u ? y : z))            \
    X(FFMA, U(std::fma(F(x), F(y), F(z))))

enum class Op : std::uint16_t {
#define NDGPU_IR_ENUM(name, ...) name,
    NDGPU_IR_UNARY(NDGPU_IR_ENUM) NDGPU_IR_BINARY(NDGPU_IR_ENUM) NDGPU_IR_TERNARY(NDGPU_IR_ENUM)
#undef NDGPU_IR_ENUM
    // d = exec ? a : d
    MOVM,
    // memory: global (storage/uniform slot b), workgroup, private. address = reg a + imm.
    LDG,
    STG,  // value in c
    LDW,
    STW,
    LDP,
    STP,
    // d = (words(slot b) - imm) / c
    ARRLEN,
    // structured control; b = frame index, c = innermost frame index for BREAK/CONTINUE
    IF_BEGIN,  // a = condition
    IF_ELSE,
    IF_END,
    LOOP_BEGIN,
    LOOP_TEST,  // a = condition; lanes with false condition leave the loop
    LOOP_CONTINUING,
    BREAK_IF,  // a = condition
    LOOP_END,
    BREAK,
    CONTINUE,
    RETURN,  // c = innermost frame index or 0xffff when not nested
    JMP,     // imm = target
    JZ,      // jump when no lane is active
    JNZ,     // jump when any lane is active
    BARRIER,
    ZEROP,  // zero private words [imm, imm + c) for active lanes
};

inline constexpr std::uint16_t kNoReg = 0xffff;

struct Instr {
    Op op;
    std::uint16_t d = 0, a = 0, b = 0, c = 0;
    std::uint32_t imm = 0;
};

enum class Builtin : std::uint8_t {
    GlobalIdX, GlobalIdY, GlobalIdZ,
    LocalIdX, LocalIdY, LocalIdZ,
    WorkgroupIdX, WorkgroupIdY, WorkgroupIdZ,
    NumWorkgroupsX, NumWorkgroupsY, NumWorkgroupsZ,
    LocalIndex,
    Count
};

struct Program {
    std::vector<Instr> code;
    std::uint32_t num_regs = 0;
    std::vector<std::pair<std::uint16_t, std::uint32_t>> constants;
    std::array<std::uint16_t, static_cast<std::size_t>(Builtin::Count)> builtins{};
    std::array<std::uint32_t, 3> workgroup_size{1, 1, 1};
    std::uint32_t workgroup_words = 0;
    std::uint32_t private_words = 0;
    std::uint32_t frame_depth = 0;
    bool uses_barrier = false;
};

std::string disassemble(const Program& program);
const char* op_name(Op op);
// Evaluates a unary/binary/ternary opcode on single words; used for constant folding.
std::uint32_t fold(Op op, std::uint32_t x, std::uint32_t y = 0, std::uint32_t z = 0);

}  // namespace ndgpu::soft::ir
