#pragma once

#include <vector>

#include "ndgpu/soft/shader.hpp"
#include "wgsl_ast.hpp"

namespace ndgpu::soft::wgsl {

// Type-checks the module and lowers every @compute entry point. Throws SyntaxError.
std::vector<EntryPoint> lower(const ModuleAst& module, const CompileOptions& options);

}  // namespace ndgpu::soft::wgsl
