#include "ndgpu/soft/shader.hpp"

#include <fmt/format.h>

#include "wgsl_ast.hpp"
#include "wgsl_lower.hpp"

namespace ndgpu::soft {

namespace {

std::string source_line(std::string_view source, int line) {
    int current = 1;
    std::size_t start = 0;
    for (std::size_t i = 0; i < source.size() && current < line; ++i) {
        if (source[i] == '\n') {
            ++current;
            start = i + 1;
        }
    }
    if (current != line) return {};
    const auto end = source.find('\n', start);
    return std::string(source.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
}

std::string format_diagnostic(std::string_view source, const std::string& label, const Diagnostic& d) {
    std::string out = fmt::format("{}:{}:{} error: {}\n", label, d.line, d.column, d.message);
    const std::string text = source_line(source, d.line);
    if (!text.empty()) {
        out += text + "\n";
        std::string caret;
        for (int i = 1; i < d.column && static_cast<std::size_t>(i - 1) < text.size(); ++i) caret += text[static_cast<std::size_t>(i - 1)] == '\t' ? '\t' : ' ';
        out += caret + "^\n";
    }
    return out;
}

}  // namespace

const EntryPoint* CompiledModule::find(std::string_view name) const {
    for (const auto& e : entry_points) {
        if (e.name == name) return &e;
    }
    return nullptr;
}

CompiledModule compile_wgsl(std::string_view source, const CompileOptions& options) {
    CompiledModule out;
    try {
        const wgsl::ModuleAst module = wgsl::parse(source);
        out.entry_points = wgsl::lower(module, options);
    } catch (const wgsl::SyntaxError& e) {
        Diagnostic d{e.loc.line, e.loc.col, e.message};
        out.formatted_diagnostics = format_diagnostic(source, options.label, d);
        out.diagnostics.push_back(std::move(d));
        out.entry_points.clear();
    }
    return out;
}

}  // namespace ndgpu::soft
