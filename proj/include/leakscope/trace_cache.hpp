#pragma once

// Binary cache of preprocessed traces, so analysis can rerun without
// touching the raw traces. Host byte order; not meant for exchange.

#include <filesystem>
#include <iosfwd>
#include <memory>

#include "leakscope/trace_model.hpp"

namespace leakscope {

void write_trace_cache(std::ostream& out, const PreprocessedTrace& trace);
PreprocessedTrace read_trace_cache(std::istream& in, std::shared_ptr<const ImageTable> images);

void save_trace_cache(const std::filesystem::path& path, const PreprocessedTrace& trace);
PreprocessedTrace load_trace_cache(const std::filesystem::path& path, std::shared_ptr<const ImageTable> images);

}  // namespace leakscope
