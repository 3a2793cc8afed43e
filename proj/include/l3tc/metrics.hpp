#pragma once

#include <cstdint>
#include <string>

#include "l3tc/common.hpp"

namespace l3tc {

/// Bytes charged per model parameter (float16 storage).
inline constexpr std::uint64_t kBytesPerParam = 2;

double compute_cr(std::uint64_t compressed_bytes, std::uint64_t raw_bytes);
double compute_acr(std::uint64_t compressed_bytes, std::uint64_t raw_bytes, std::uint64_t n_params);
/// ACR from a ratio already measured on `raw_bytes` of input.
double compute_acr_from_cr(double cr, std::uint64_t raw_bytes, std::uint64_t n_params);
double bit_saving(double candidate_acr, double baseline_acr);

struct MetricsReport {
    std::uint64_t raw_bytes = 0;
    std::uint64_t compressed_bytes = 0;
    std::uint64_t model_params = 0;
    double cr = 0.0;
    double acr = 0.0;
    double bits_saved_vs_baseline = 0.0;
    double decode_throughput = 0.0;  // raw bytes per second of decode wall time
};

MetricsReport make_report(std::uint64_t raw_bytes, std::uint64_t compressed_bytes, std::uint64_t model_params,
                          double baseline_acr, double decode_seconds);

/// Shannon entropy of the byte histogram, in bits per byte.
double order0_entropy_bits_per_byte(ByteView data);

enum class GzipBackend { SystemExecutable, Zlib };

struct GzipResult {
    std::uint64_t compressed_bytes = 0;
    GzipBackend backend = GzipBackend::Zlib;
};

/// gzip -9 size of `data`: the system executable when it is on PATH,
/// otherwise zlib's deflate with a gzip wrapper at level 9.
GzipResult gzip_size(ByteView data, bool allow_system = true);
std::uint64_t zlib_gzip_size(ByteView data);
std::string backend_name(GzipBackend backend);

/// "metric=<name> value=<decimal>"
std::string metric_line(const std::string& name, double value);

}  // namespace l3tc
