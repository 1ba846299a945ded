#include "ir.hpp"

#include <fmt/format.h>

namespace ndgpu::soft::ir {

const char* op_name(Op op) {
    switch (op) {
#define NDGPU_IR_NAME(name, ...) \
    case Op::name: return #name;
        NDGPU_IR_UNARY(NDGPU_IR_NAME)
        NDGPU_IR_BINARY(NDGPU_IR_NAME)
        NDGPU_IR_TERNARY(NDGPU_IR_NAME)
#undef NDGPU_IR_NAME
        case Op::MOVM: return "MOVM";
        case Op::LDG: return "LDG";
        case Op::STG: return "STG";
        case Op::LDW: return "LDW";
        case Op::STW: return "STW";
        case Op::LDP: return "LDP";
        case Op::STP: return "STP";
        case Op::ARRLEN: return "ARRLEN";
        case Op::IF_BEGIN: return "IF_BEGIN";
        case Op::IF_ELSE: return "IF_ELSE";
        case Op::IF_END: return "IF_END";
        case Op::LOOP_BEGIN: return "LOOP_BEGIN";
        case Op::LOOP_TEST: return "LOOP_TEST";
        case Op::LOOP_CONTINUING: return "LOOP_CONTINUING";
        case Op::BREAK_IF: return "BREAK_IF";
        case Op::LOOP_END: return "LOOP_END";
        case Op::BREAK: return "BREAK";
        case Op::CONTINUE: return "CONTINUE";
        case Op::RETURN: return "RETURN";
        case Op::JMP: return "JMP";
        case Op::JZ: return "JZ";
        case Op::JNZ: return "JNZ";
        case Op::BARRIER: return "BARRIER";
        case Op::ZEROP: return "ZEROP";
    }
    return "?";
}

std::uint32_t fold(Op op, std::uint32_t x, std::uint32_t y, std::uint32_t z) {
    (void)y;
    (void)z;
    switch (op) {
#define NDGPU_IR_FOLD(name, expr) \
    case Op::name: return (expr);
        NDGPU_IR_UNARY(NDGPU_IR_FOLD)
        NDGPU_IR_BINARY(NDGPU_IR_FOLD)
        NDGPU_IR_TERNARY(NDGPU_IR_FOLD)
#undef NDGPU_IR_FOLD
        default: return 0;
    }
}

std::string disassemble(const Program& p) {
    std::string out = fmt::format("; regs={} frames={} workgroup_words={} private_words={} wg_size=({},{},{})\n",
                                  p.num_regs, p.frame_depth, p.workgroup_words, p.private_words, p.workgroup_size[0],
                                  p.workgroup_size[1], p.workgroup_size[2]);
    for (const auto& [reg, bits] : p.constants) out += fmt::format("; r{} = 0x{:08x}\n", reg, bits);
    for (std::size_t i = 0; i < p.builtins.size(); ++i) {
        if (p.builtins[i] != kNoReg) out += fmt::format("; r{} = builtin {}\n", p.builtins[i], i);
    }
    for (std::size_t pc = 0; pc < p.code.size(); ++pc) {
        const auto& in = p.code[pc];
        out += fmt::format("{:5}  {:<16} d=r{} a=r{} b={} c={} imm={}\n", pc, op_name(in.op), in.d, in.a, in.b, in.c, in.imm);
    }
    return out;
}

}  // namespace ndgpu::soft::ir
