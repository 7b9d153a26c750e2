#pragma once

#include <iosfwd>
#include <string>

#include <nlohmann/json.hpp>

#include "fedld/federation.hpp"

namespace fedld {

/// CSV with header `iteration,x0,...,x{d-1}` and one row per retained sample.
void write_trace_csv(std::ostream& out, const SampleTrace& trace);
void write_trace_csv(const std::string& path, const SampleTrace& trace);

/// Reads samples and iteration indices back; counters are left at zero.
/// Malformed content raises ParseError carrying the 1-based line number.
SampleTrace read_trace_csv(std::istream& in, const std::string& name = "<stream>");
SampleTrace read_trace_csv(const std::string& path);

nlohmann::json to_json(const SamplerConfig& cfg);
SamplerConfig sampler_config_from_json(const nlohmann::json& doc);

/// Counters, the config echo and moment estimates (when at least two samples).
nlohmann::json trace_summary(const SampleTrace& trace, const SamplerConfig& cfg);

}  // namespace fedld
