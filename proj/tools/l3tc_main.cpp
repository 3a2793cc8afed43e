#include <chrono>
#include <cstdio>
#include <iostream>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "l3tc/container.hpp"
#include "l3tc/golden.hpp"
#include "l3tc/hira.hpp"
#include "l3tc/io.hpp"
#include "l3tc/metrics.hpp"
#include "l3tc/model_weights.hpp"
#include "l3tc/tokenizer.hpp"

using namespace l3tc;

namespace {

enum ExitCode { kOk = 0, kIoError = 1, kUsage = 2, kFormat = 3, kHashMismatch = 4 };

struct CodecPaths {
    std::string model;
    std::string vocab;
};

void add_codec_options(CLI::App* cmd, CodecPaths& paths) {
    cmd->add_option("--model", paths.model, "L3TW weights (merged)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--vocab", paths.vocab, "L3TV vocabulary")->required()->check(CLI::ExistingFile);
}

Codec load_codec(const CodecPaths& paths) {
    return Codec(load_vocabulary(read_file(paths.vocab)), load_model(read_file(paths.model)));
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void print_report(const MetricsReport& r, double gzip_cr, const std::string& backend) {
    std::printf("%-26s %14llu\n", "raw bytes", static_cast<unsigned long long>(r.raw_bytes));
    std::printf("%-26s %14llu\n", "compressed bytes", static_cast<unsigned long long>(r.compressed_bytes));
    std::printf("%-26s %14llu\n", "model params", static_cast<unsigned long long>(r.model_params));
    std::printf("%-26s %13.2f%%\n", "CR", 100.0 * r.cr);
    std::printf("%-26s %13.2f%%\n", "ACR", 100.0 * r.acr);
    if (gzip_cr > 0.0) {
        std::printf("%-26s %13.2f%%  (%s)\n", "gzip -9 CR", 100.0 * gzip_cr, backend.c_str());
        std::printf("%-26s %13.2f%%\n", "bits saved vs gzip", 100.0 * r.bits_saved_vs_baseline);
    }
    std::printf("%-26s %14.0f\n", "decode throughput (B/s)", r.decode_throughput);

    std::cout << metric_line("raw_bytes", static_cast<double>(r.raw_bytes)) << '\n'
              << metric_line("compressed_bytes", static_cast<double>(r.compressed_bytes)) << '\n'
              << metric_line("model_params", static_cast<double>(r.model_params)) << '\n'
              << metric_line("cr", r.cr) << '\n'
              << metric_line("acr", r.acr) << '\n';
    if (gzip_cr > 0.0)
        std::cout << metric_line("gzip_cr", gzip_cr) << '\n'
                  << metric_line("bits_saved_vs_baseline", r.bits_saved_vs_baseline) << '\n'
                  << "gzip_backend=" << backend << '\n';
    std::cout << metric_line("decode_throughput", r.decode_throughput) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"l3tc: learned lossless text compressor"};
    app.require_subcommand(1);

    // train-tokenizer
    std::string tok_input, tok_out;
    std::uint32_t tok_vocab_size = kDefaultVocabSize;
    double tok_coverage = kDefaultCoverage;
    auto* train_tok = app.add_subcommand("train-tokenizer", "Learn an outlier-aware BPE vocabulary");
    train_tok->add_option("--input", tok_input)->required()->check(CLI::ExistingFile);
    train_tok->add_option("--vocab-size", tok_vocab_size)->capture_default_str();
    train_tok->add_option("--coverage", tok_coverage)->capture_default_str()->check(CLI::Range(0.0, 1.0));
    train_tok->add_option("--out", tok_out)->required();

    // init-model
    std::string init_preset = "L3TC-200K", init_vocab, init_out;
    std::uint64_t init_seed = 1;
    bool init_zero = false;
    double init_rank_mult = 0.0;
    std::uint32_t init_branches = 1;
    auto* init = app.add_subcommand("init-model", "Write a randomly initialized (or all-zero) checkpoint");
    init->add_option("--preset", init_preset)->capture_default_str()->check(CLI::IsMember(preset_names()));
    init->add_option("--vocab", init_vocab, "vocabulary that fixes V")->required()->check(CLI::ExistingFile);
    init->add_option("--seed", init_seed)->capture_default_str();
    init->add_flag("--zero", init_zero, "all-zero weights (uniform predictions)");
    init->add_option("--hira-rank", init_rank_mult, "attach random HiRA branches with this rank multiplier");
    init->add_option("--hira-branches", init_branches)->capture_default_str();
    init->add_option("--out", init_out)->required();

    // compress / decompress
    CodecPaths comp_paths, decomp_paths;
    std::string comp_in, comp_out, decomp_in, decomp_out;
    std::uint32_t chunk_size = kDefaultChunkSize;
    unsigned comp_threads = 1, decomp_threads = 1;
    auto* comp = app.add_subcommand("compress", "Compress a file");
    add_codec_options(comp, comp_paths);
    comp->add_option("--chunk-size", chunk_size)->capture_default_str()->check(CLI::PositiveNumber);
    comp->add_option("--threads", comp_threads)->capture_default_str()->check(CLI::PositiveNumber);
    comp->add_option("--in", comp_in)->required()->check(CLI::ExistingFile);
    comp->add_option("--out", comp_out)->required();
    auto* decomp = app.add_subcommand("decompress", "Decompress an archive");
    add_codec_options(decomp, decomp_paths);
    decomp->add_option("--threads", decomp_threads)->capture_default_str()->check(CLI::PositiveNumber);
    decomp->add_option("--in", decomp_in)->required()->check(CLI::ExistingFile);
    decomp->add_option("--out", decomp_out)->required();

    // merge-hira
    std::string merge_in, merge_out;
    std::uint32_t merge_verify = 0;
    double merge_tol = 1e-4;
    auto* merge = app.add_subcommand("merge-hira", "Fold HiRA branches into their base projections");
    merge->add_option("--in", merge_in)->required()->check(CLI::ExistingFile);
    merge->add_option("--out", merge_out)->required();
    merge->add_option("--verify", merge_verify, "compare logits on this many random inputs")->capture_default_str();
    merge->add_option("--tolerance", merge_tol)->capture_default_str();

    // eval
    std::string eval_corpus, eval_model, eval_vocab;
    bool eval_gzip = false, eval_zlib_only = false;
    unsigned eval_threads = 1;
    auto* eval = app.add_subcommand("eval", "Report CR, ACR, bit saving and throughput on a corpus");
    eval->add_option("--corpus", eval_corpus)->required()->check(CLI::ExistingFile);
    auto* eval_model_opt = eval->add_option("--model", eval_model)->check(CLI::ExistingFile);
    auto* eval_vocab_opt = eval->add_option("--vocab", eval_vocab)->check(CLI::ExistingFile);
    eval_model_opt->needs(eval_vocab_opt);
    eval_vocab_opt->needs(eval_model_opt);
    eval->add_option("--chunk-size", chunk_size)->capture_default_str()->check(CLI::PositiveNumber);
    eval->add_option("--threads", eval_threads)->capture_default_str()->check(CLI::PositiveNumber);
    eval->add_flag("--gzip-baseline", eval_gzip, "also measure gzip -9 and report bit saving");
    eval->add_flag("--zlib-only", eval_zlib_only, "use embedded deflate even if gzip is installed");

    // bench
    CodecPaths bench_paths;
    std::string bench_corpus;
    std::vector<unsigned> bench_threads{1};
    auto* bench = app.add_subcommand("bench", "Measure decode throughput");
    add_codec_options(bench, bench_paths);
    bench->add_option("--corpus", bench_corpus)->required()->check(CLI::ExistingFile);
    bench->add_option("--threads", bench_threads, "one or more worker counts")->capture_default_str();

    // golden vectors
    std::string golden_model, golden_file;
    double golden_tol = 1e-3;
    std::uint32_t golden_cases = 16;
    std::uint64_t golden_seed = 1;
    auto* check = app.add_subcommand("check-golden", "Compare engine logits against a golden file");
    check->add_option("--model", golden_model)->required()->check(CLI::ExistingFile);
    check->add_option("--golden", golden_file)->required()->check(CLI::ExistingFile);
    check->add_option("--tolerance", golden_tol)->capture_default_str();
    auto* make = app.add_subcommand("make-golden", "Write golden logits produced by this engine");
    make->add_option("--model", golden_model)->required()->check(CLI::ExistingFile);
    make->add_option("--out", golden_file)->required();
    make->add_option("--cases", golden_cases)->capture_default_str();
    make->add_option("--seed", golden_seed)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        if (*train_tok) {
            const Bytes corpus = read_file(tok_input);
            const Vocabulary vocab = train_vocabulary(corpus, tok_vocab_size, tok_coverage);
            write_file_atomic(tok_out, save_vocabulary(vocab));
            std::printf("vocabulary: %zu tokens, %zu merges\n", static_cast<std::size_t>(vocab.size()), vocab.merges().size());
        } else if (*init) {
            const Vocabulary vocab = load_vocabulary(read_file(init_vocab));
            const ModelConfig config = preset(init_preset, vocab.size());
            ModelWeights w = init_zero ? zero_weights(config) : init_random_weights(config, init_seed);
            if (init_rank_mult > 0.0) w = hira::add_random_branches(w, init_rank_mult, init_branches, init_seed + 1);
            write_file_atomic(init_out, save_weights(w));
            std::printf("%s: %llu parameters\n", init_preset.c_str(),
                        static_cast<unsigned long long>(count_params(config)));
        } else if (*comp) {
            const Codec codec = load_codec(comp_paths);
            const Bytes input = read_file(comp_in);
            const Bytes archive = compress(input, codec, {chunk_size, comp_threads});
            write_file_atomic(comp_out, archive);
        } else if (*decomp) {
            const Codec codec = load_codec(decomp_paths);
            const Bytes output = decompress(read_file(decomp_in), codec, decomp_threads);
            write_file_atomic(decomp_out, output);
        } else if (*merge) {
            const ModelWeights branched = read_weights(read_file(merge_in));
            const ModelWeights merged = hira::merge_model(branched);
            if (merge_verify > 0) {
                const auto rep = hira::verify_equivalence(branched, merged, merge_verify, merge_tol, 1);
                std::printf("max |merged - branched| = %.3g over %zu steps\n", rep.max_abs_diff, static_cast<std::size_t>(rep.comparisons));
                if (!rep.pass) fail(ErrorKind::Format, "merged model does not match its branched form");
            }
            write_file_atomic(merge_out, save_weights(merged));
        } else if (*eval) {
            const Bytes corpus = read_file(eval_corpus);
            require(!corpus.empty(), "eval: corpus is empty");
            double gzip_cr = 0.0;
            std::string backend;
            if (eval_gzip) {
                const GzipResult g = gzip_size(corpus, !eval_zlib_only);
                gzip_cr = compute_cr(g.compressed_bytes, corpus.size());
                backend = backend_name(g.backend);
            }
            if (eval_model.empty()) {
                const double h0 = order0_entropy_bits_per_byte(corpus);
                std::printf("no model given: order-0 byte entropy baseline\n");
                std::printf("%-26s %14.4f\n", "order-0 bits/byte", h0);
                std::printf("%-26s %13.2f%%\n", "order-0 CR", 100.0 * h0 / 8.0);
                std::cout << metric_line("order0_bpb", h0) << '\n' << metric_line("order0_cr", h0 / 8.0) << '\n';
                if (eval_gzip)
                    std::cout << metric_line("gzip_cr", gzip_cr) << '\n' << "gzip_backend=" << backend << '\n';
                return kOk;
            }
            const Codec codec = load_codec({eval_model, eval_vocab});
            const Bytes archive = compress(corpus, codec, {chunk_size, eval_threads});
            const auto t0 = std::chrono::steady_clock::now();
            const Bytes restored = decompress(archive, codec, eval_threads);
            const double secs = seconds_since(t0);
            if (restored != corpus) fail(ErrorKind::Format, "eval: round trip mismatch");
            const MetricsReport r = make_report(corpus.size(), archive.size(), codec.model_params(), gzip_cr, secs);
            print_report(r, gzip_cr, backend);
        } else if (*bench) {
            const Codec codec = load_codec(bench_paths);
            const Bytes corpus = read_file(bench_corpus);
            const Bytes archive = compress(corpus, codec, {kDefaultChunkSize, std::thread::hardware_concurrency()});
            double base = 0.0;
            for (unsigned t : bench_threads) {
                require(t > 0, "bench: thread counts must be positive");
                const auto t0 = std::chrono::steady_clock::now();
                const Bytes restored = decompress(archive, codec, t);
                const double secs = seconds_since(t0);
                if (restored != corpus) fail(ErrorKind::Format, "bench: round trip mismatch");
                const double tput = static_cast<double>(corpus.size()) / secs;
                if (base == 0.0) base = tput;
                std::printf("threads=%u decode_throughput=%.0f B/s scaling=%.2fx\n", t, tput, tput / base);
                std::cout << metric_line("decode_throughput_t" + std::to_string(t), tput) << '\n';
            }
        } else if (*check) {
            const ModelWeights w = load_model(read_file(golden_model));
            const Model model(w);
            const auto cases = read_golden(read_file(golden_file), w.config.vocab_size);
            const GoldenReport rep = check_golden(cases, model);
            std::printf("%zu cases, max abs diff %.3g (tolerance %.3g)\n", rep.cases, rep.max_abs_diff, golden_tol);
            std::cout << metric_line("golden_max_abs_diff", rep.max_abs_diff) << '\n';
            if (rep.max_abs_diff > golden_tol) return kFormat;
        } else if (*make) {
            const ModelWeights w = load_model(read_file(golden_model));
            const Model model(w);
            write_file_atomic(golden_file, write_golden(make_golden(model, golden_cases, golden_seed)));
        }
    } catch (const Error& e) {
        std::cerr << "l3tc: " << e.what() << '\n';
        switch (e.kind()) {
            case ErrorKind::InvalidArgument: return kUsage;
            case ErrorKind::Format: return kFormat;
            case ErrorKind::HashMismatch: return kHashMismatch;
            case ErrorKind::Io: return kIoError;
        }
    } catch (const std::exception& e) {
        std::cerr << "l3tc: " << e.what() << '\n';
        return kIoError;
    }
    return kOk;
}
