#include "l3tc/metrics.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <random>
#include <sys/wait.h>

#include <zlib.h>

#include "l3tc/io.hpp"

namespace l3tc {

double compute_cr(std::uint64_t compressed_bytes, std::uint64_t raw_bytes) {
    require(raw_bytes > 0, "compute_cr: raw size must be positive");
    return static_cast<double>(compressed_bytes) / static_cast<double>(raw_bytes);
}

double compute_acr(std::uint64_t compressed_bytes, std::uint64_t raw_bytes, std::uint64_t n_params) {
    require(raw_bytes > 0, "compute_acr: raw size must be positive");
    return static_cast<double>(compressed_bytes + kBytesPerParam * n_params) / static_cast<double>(raw_bytes);
}

double compute_acr_from_cr(double cr, std::uint64_t raw_bytes, std::uint64_t n_params) {
    require(raw_bytes > 0, "compute_acr: raw size must be positive");
    return cr + static_cast<double>(kBytesPerParam * n_params) / static_cast<double>(raw_bytes);
}

double bit_saving(double candidate_acr, double baseline_acr) {
    require(baseline_acr > 0.0, "bit_saving: baseline must be positive");
    return 1.0 - candidate_acr / baseline_acr;
}

MetricsReport make_report(std::uint64_t raw_bytes, std::uint64_t compressed_bytes, std::uint64_t model_params,
                          double baseline_acr, double decode_seconds) {
    MetricsReport r;
    r.raw_bytes = raw_bytes;
    r.compressed_bytes = compressed_bytes;
    r.model_params = model_params;
    r.cr = compute_cr(compressed_bytes, raw_bytes);
    r.acr = compute_acr(compressed_bytes, raw_bytes, model_params);
    r.bits_saved_vs_baseline = baseline_acr > 0.0 ? bit_saving(r.acr, baseline_acr) : 0.0;
    r.decode_throughput = decode_seconds > 0.0 ? static_cast<double>(raw_bytes) / decode_seconds : 0.0;
    return r;
}

double order0_entropy_bits_per_byte(ByteView data) {
    if (data.empty()) return 0.0;
    std::array<std::uint64_t, 256> hist{};
    for (std::uint8_t b : data) ++hist[b];
    const double n = static_cast<double>(data.size());
    double h = 0.0;
    for (std::uint64_t c : hist) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / n;
        h -= p * std::log2(p);
    }
    return h;
}

std::uint64_t zlib_gzip_size(ByteView data) {
    z_stream zs{};
    // windowBits 15 + 16 selects the gzip wrapper.
    if (deflateInit2(&zs, 9, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY) != Z_OK)
        fail(ErrorKind::Io, "zlib: deflateInit2 failed");
    std::vector<std::uint8_t> out(1 << 16);
    std::uint64_t total = 0;
    zs.next_in = const_cast<Bytef*>(data.data());
    zs.avail_in = static_cast<uInt>(data.size());
    int rc;
    do {
        zs.next_out = out.data();
        zs.avail_out = static_cast<uInt>(out.size());
        rc = deflate(&zs, Z_FINISH);
        total += out.size() - zs.avail_out;
    } while (rc == Z_OK || rc == Z_BUF_ERROR);
    deflateEnd(&zs);
    if (rc != Z_STREAM_END) fail(ErrorKind::Io, "zlib: deflate failed");
    return total;
}

namespace {

bool gzip_on_path() {
    const char* path = std::getenv("PATH");
    if (path == nullptr) return false;
    std::string_view rest(path);
    while (!rest.empty()) {
        const auto colon = rest.find(':');
        const std::filesystem::path dir(rest.substr(0, colon));
        std::error_code ec;
        if (!dir.empty() && std::filesystem::exists(dir / "gzip", ec)) return true;
        if (colon == std::string_view::npos) break;
        rest.remove_prefix(colon + 1);
    }
    return false;
}

std::optional<std::uint64_t> system_gzip_size(ByteView data) {
    const auto tmp = std::filesystem::temp_directory_path() /
                     ("l3tc-gzip-" + std::to_string(std::random_device{}()) + ".bin");
    write_file_atomic(tmp, data);
    const std::string cmd = "gzip -9 -c -n < '" + tmp.string() + "'";
    FILE* pipe = popen(cmd.c_str(), "r");
    std::optional<std::uint64_t> result;
    if (pipe != nullptr) {
        std::array<char, 1 << 16> buf;
        std::uint64_t total = 0;
        std::size_t got;
        while ((got = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) total += got;
        const int status = pclose(pipe);
        if (WIFEXITED(status) && WEXITSTATUS(status) == 0) result = total;
    }
    std::error_code ec;
    std::filesystem::remove(tmp, ec);
    return result;
}

}  // namespace

GzipResult gzip_size(ByteView data, bool allow_system) {
    if (allow_system && gzip_on_path()) {
        if (auto size = system_gzip_size(data)) return {*size, GzipBackend::SystemExecutable};
    }
    return {zlib_gzip_size(data), GzipBackend::Zlib};
}

std::string backend_name(GzipBackend backend) {
    return backend == GzipBackend::SystemExecutable ? "system-gzip" : "zlib";
}

std::string metric_line(const std::string& name, double value) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12f", value);
    return "metric=" + name + " value=" + buf;
}

}  // namespace l3tc
