// Copyright 2026 The CItruS Authors
// SPDX-License-Identifier: Apache-2.0

#include "citrus/cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "citrus/driver.hpp"
#include "citrus/error.hpp"
#include "citrus/harness.hpp"
#include "citrus/report.hpp"
#include "citrus/tokenizer.hpp"
#include "citrus/weights_io.hpp"

namespace citrus::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Flags shared by every subcommand that runs the pipeline. Unset optionals
// fall back to the config file, then to the built-in defaults.
struct CommonFlags {
    std::optional<std::string> config;
    std::optional<std::string> model;
    std::optional<std::string> document;
    std::optional<std::string> instruction;
    std::optional<std::string> instruction_text;
    std::optional<std::string> policy;
    std::optional<std::string> layout;
    std::optional<std::size_t> chunk_len;
    std::optional<std::size_t> budget;
    std::optional<std::size_t> sink_size;
    std::optional<std::size_t> window;
    std::optional<std::size_t> max_new;
    std::optional<std::uint64_t> seed;
    bool raw_row_scores = false;
    std::optional<std::string> output;
};

void add_common(CLI::App* app, CommonFlags& f, bool with_document) {
    app->add_option("--config", f.config, "JSON config file");
    app->add_option("--model", f.model, "Weights file written by gen-model or gen-affinity");
    if (with_document) {
        app->add_option("--document", f.document, "Document (.tok token file or text)");
    }
    app->add_option("--instruction", f.instruction, "Instruction file (.tok or text)");
    app->add_option("--instruction-text", f.instruction_text, "Instruction given inline");
    app->add_option("--policy", f.policy, "cse | tova | h2o | roco | streaming");
    app->add_option("--layout", f.layout, "standard | individual | shared");
    app->add_option("--l-s", f.chunk_len, "Chunk length");
    app->add_option("-k,--k", f.budget, "Slots kept per layer");
    app->add_option("--sink", f.sink_size, "Pinned initial slots");
    app->add_option("--window", f.window, "Streaming window (default k - sink)");
    app->add_option("--max-new", f.max_new, "Tokens to generate");
    app->add_option("--seed", f.seed, "Seed for generated models");
    app->add_flag("--raw-row-scores", f.raw_row_scores, "Average raw attention rows without renormalising");
    app->add_option("-o,--output", f.output, "Report path (default stdout)");
}

// A loaded config file plus the directory its relative paths resolve against.
struct FileConfig {
    json data = json::object();
    fs::path base;

    template <typename T>
    std::optional<T> get(const char* key) const {
        if (!data.contains(key) || data.at(key).is_null()) return std::nullopt;
        try {
            return data.at(key).get<T>();
        } catch (const json::exception& e) {
            raise(ErrorKind::Config, std::string("config key '") + key + "': " + e.what());
        }
    }

    fs::path resolve(const std::string& p) const {
        fs::path path(p);
        return path.is_relative() && !base.empty() ? base / path : path;
    }
};

FileConfig load_file_config(const std::optional<std::string>& path) {
    FileConfig fc;
    if (!path) return fc;
    std::ifstream in(*path);
    if (!in) raise(ErrorKind::Io, "cannot open config file " + *path);
    try {
        in >> fc.data;
    } catch (const json::exception& e) {
        raise(ErrorKind::Config, "config file " + *path + " is not valid JSON: " + e.what());
    }
    if (!fc.data.is_object()) raise(ErrorKind::Config, "config file must hold a JSON object");
    fc.base = fs::path(*path).parent_path();
    return fc;
}

template <typename T>
T pick(const std::optional<T>& flag, const std::optional<T>& file, T fallback) {
    if (flag) return *flag;
    if (file) return *file;
    return fallback;
}

RunConfig resolve_run_config(const CommonFlags& f, const FileConfig& fc) {
    RunConfig rc;
    if (auto p = f.policy ? f.policy : fc.get<std::string>("policy")) rc.policy = parse_policy(*p);
    if (auto l = f.layout ? f.layout : fc.get<std::string>("layout")) rc.layout = parse_layout(*l);
    rc.chunk_len = pick(f.chunk_len, fc.get<std::size_t>("l_s"), rc.chunk_len);
    rc.budget = pick(f.budget, fc.get<std::size_t>("k"), rc.budget);
    rc.sink_size = pick(f.sink_size, fc.get<std::size_t>("sink_size"), rc.sink_size);
    if (auto w = f.window ? f.window : fc.get<std::size_t>("window")) rc.window = *w;
    rc.max_new_tokens = pick(f.max_new, fc.get<std::size_t>("max_new_tokens"), rc.max_new_tokens);
    rc.seed = pick(f.seed, fc.get<std::uint64_t>("seed"), rc.seed);
    rc.raw_row_scores = f.raw_row_scores || fc.get<bool>("raw_row_scores").value_or(false);
    rc.validate();
    return rc;
}

struct ResolvedModel {
    ModelWeights weights;
    json source;
};

ResolvedModel resolve_model(const CommonFlags& f, const FileConfig& fc, std::uint64_t seed) {
    if (f.model) {
        return {load_weights(*f.model), json{{"path", *f.model}}};
    }
    if (fc.data.contains("model")) {
        const json& m = fc.data.at("model");
        if (m.is_string()) {
            const fs::path path = fc.resolve(m.get<std::string>());
            return {load_weights(path), json{{"path", path.string()}}};
        }
        ModelConfig cfg = model_config_from_json(m);
        return {init_model(cfg), json{{"inline", to_json(cfg)}}};
    }
    ModelConfig cfg;
    cfg.seed = seed;
    return {init_model(cfg), json{{"inline", to_json(cfg)}}};
}

std::optional<std::vector<Token>> resolve_tokens(const std::optional<std::string>& flag_path,
                                                 const std::optional<std::string>& flag_text, const FileConfig& fc,
                                                 const char* key) {
    if (flag_text) return tokenize(*flag_text);
    if (flag_path) return load_tokens(*flag_path);
    if (!fc.data.contains(key) || fc.data.at(key).is_null()) return std::nullopt;
    const json& v = fc.data.at(key);
    if (v.is_string()) return load_tokens(fc.resolve(v.get<std::string>()));
    if (v.is_object() && v.contains("text") && v.at("text").is_string()) {
        return tokenize(v.at("text").get<std::string>());
    }
    raise(ErrorKind::Config, std::string("config key '") + key + "' must be a path or {\"text\": ...}");
}

void emit(const json& report, const std::optional<std::string>& path, std::ostream& out) {
    const std::string text = report.dump(2, ' ', false, json::error_handler_t::replace) + "\n";
    if (!path) {
        out << text;
        return;
    }
    std::ofstream file(*path, std::ios::binary);
    if (!file) raise(ErrorKind::Io, "cannot write report to " + *path);
    file << text;
    if (!file) raise(ErrorKind::Io, "failed writing report to " + *path);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream file(path, std::ios::binary);
    if (!file) raise(ErrorKind::Io, "cannot write " + path);
    file << text;
}

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - m_start).count();
    }

private:
    std::chrono::steady_clock::time_point m_start = std::chrono::steady_clock::now();
};

json timing(const Stopwatch& watch) {
    return json{{"wall_seconds", watch.seconds()}};
}

// ---------------------------------------------------------------------------

struct ModelFlags {
    std::string backend = "tiny-transformer";
    ModelConfig cfg;
    std::string output;
};

json cmd_gen_model(const ModelFlags& f) {
    ModelConfig cfg = f.cfg;
    cfg.backend = parse_backend(f.backend);
    const ModelWeights w = init_model(cfg);
    save_weights(f.output, w);
    return json{{"command", "gen-model"}, {"model", to_json(cfg)}, {"path", f.output}};
}

struct AffinityFlags {
    ModelConfig cfg;
    std::string passkey = std::string(kDefaultPasskey);
    std::string needle_template = std::string(kDefaultNeedleTemplate);
    std::string instruction = std::string(kDefaultPasskeyInstruction);
    NeedleAffinity affinity;
    std::string output;
};

json cmd_gen_affinity(const AffinityFlags& f) {
    PasskeySpec spec;
    spec.passkey = f.passkey;
    spec.needle_template = f.needle_template;
    const auto instruction = tokenize(f.instruction);
    const ModelWeights w = make_needle_mock(f.cfg, spec, instruction, f.affinity);
    save_weights(f.output, w);
    return json{{"command", "gen-affinity"},
                {"model", to_json(w.config())},
                {"needle", render_needle(spec)},
                {"instruction", f.instruction},
                {"affinity", {{"attract", f.affinity.attract}, {"repel", f.affinity.repel}, {"chain", f.affinity.chain}}},
                {"path", f.output}};
}

json cmd_run(const CommonFlags& f, bool payload) {
    const Stopwatch watch;
    const FileConfig fc = load_file_config(f.config);
    const RunConfig rc = resolve_run_config(f, fc);
    const auto doc = resolve_tokens(f.document, std::nullopt, fc, "document");
    if (!doc) raise(ErrorKind::Config, "run needs a document");
    const auto instruction = resolve_tokens(f.instruction, f.instruction_text, fc, "instruction");
    if (!instruction || instruction->empty()) raise(ErrorKind::Config, "run needs a non-empty instruction");
    const ResolvedModel model = resolve_model(f, fc, rc.seed);

    EncodeResult enc = encode_document(model.weights, *doc, *instruction, rc);
    json result = to_json(enc, payload);
    const Generation gen =
        generate(model.weights, enc.cache, *instruction, rc.max_new_tokens, static_cast<Origin>(enc.tokens_seen));
    return json{{"command", "run"},
                {"config",
                 {{"model", to_json(model.weights.config())},
                  {"model_source", model.source},
                  {"run", to_json(rc)},
                  {"document_tokens", doc->size()},
                  {"instruction_tokens", *instruction}}},
                {"result", result},
                {"generated", {{"tokens", gen.tokens}, {"text", detokenize(gen.tokens)}}},
                {"timing", timing(watch)}};
}

struct ProbeFlags {
    std::optional<std::string> config;
    std::optional<std::string> model;
    std::string context1;
    std::string context2;
    std::string instruction;
    std::size_t k = kProbeBudget;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> output;
};

json cmd_probe(const ProbeFlags& f) {
    const Stopwatch watch;
    const FileConfig fc = load_file_config(f.config);
    CommonFlags common;
    common.model = f.model;
    const ResolvedModel model =
        resolve_model(common, fc, f.seed.value_or(fc.get<std::uint64_t>("seed").value_or(0)));
    const auto c1 = load_tokens(f.context1);
    const auto c2 = load_tokens(f.context2);
    const auto instr = load_tokens(f.instruction);
    const ProbeReport report = probe_intersection(model.weights, c1, c2, instr, f.k);
    return json{{"command", "probe"},
                {"config", {{"model", to_json(model.weights.config())}, {"model_source", model.source}, {"k", f.k}}},
                {"result", to_json(report)},
                {"timing", timing(watch)}};
}

json cmd_ppl(const CommonFlags& f, bool oracle) {
    const Stopwatch watch;
    const FileConfig fc = load_file_config(f.config);
    const RunConfig rc = resolve_run_config(f, fc);
    const auto stream = resolve_tokens(f.document, std::nullopt, fc, "document");
    if (!stream) raise(ErrorKind::Config, "ppl needs a document stream");
    const auto instruction = resolve_tokens(f.instruction, f.instruction_text, fc, "instruction");
    const ResolvedModel model = resolve_model(f, fc, rc.seed);
    const std::vector<Token> instr = instruction.value_or(std::vector<Token>{});

    json report{{"command", "ppl"},
                {"config",
                 {{"model", to_json(model.weights.config())},
                  {"model_source", model.source},
                  {"run", to_json(rc)},
                  {"stream_tokens", stream->size()},
                  {"instruction_tokens", instr}}},
                {"result", to_json(eval_perplexity(model.weights, *stream, rc, instr))}};
    if (oracle) report["oracle"] = to_json(oracle_perplexity(model.weights, *stream));
    report["timing"] = timing(watch);
    return report;
}

struct PasskeyFlags {
    PasskeySpec spec;
    bool sweep = false;
    std::vector<double> depths{0.1, 0.5, 0.9};
    std::vector<std::size_t> lengths{2048, 8192, 32768};
    std::optional<std::string> csv;
};

json cmd_passkey(const CommonFlags& f, const PasskeyFlags& p) {
    const Stopwatch watch;
    const FileConfig fc = load_file_config(f.config);
    const RunConfig rc = resolve_run_config(f, fc);
    const auto instruction = resolve_tokens(f.instruction, f.instruction_text, fc, "instruction")
                                 .value_or(tokenize(kDefaultPasskeyInstruction));

    std::vector<double> depths = p.sweep ? p.depths : std::vector<double>{p.spec.depth_fraction};
    std::vector<std::size_t> lengths = p.sweep ? p.lengths : std::vector<std::size_t>{p.spec.total_length};

    json source;
    std::optional<ModelWeights> weights;
    if (f.model || fc.data.contains("model")) {
        ResolvedModel m = resolve_model(f, fc, rc.seed);
        weights.emplace(std::move(m.weights));
        source = m.source;
    } else {
        ModelConfig cfg;
        std::size_t longest = 0;
        for (auto len : lengths) longest = std::max(longest, len);
        cfg.max_positions = std::max<std::size_t>(cfg.max_positions, longest + instruction.size() + rc.max_new_tokens);
        weights.emplace(make_needle_mock(cfg, p.spec, instruction));
        source = json{{"needle_mock", to_json(weights->config())}};
    }

    const PasskeySweep sweep = run_passkey_sweep(*weights, p.spec, depths, lengths, instruction, rc);
    if (p.csv) write_text(*p.csv, sweep_csv(sweep));
    return json{{"command", "passkey"},
                {"config",
                 {{"model", to_json(weights->config())},
                  {"model_source", source},
                  {"run", to_json(rc)},
                  {"passkey", p.spec.passkey},
                  {"needle", render_needle(p.spec)},
                  {"filler_seed", p.spec.filler_seed},
                  {"instruction_tokens", instruction}}},
                {"result", to_json(sweep)},
                {"timing", timing(watch)}};
}

void add_model_shape(CLI::App* app, ModelConfig& cfg) {
    app->add_option("--layers", cfg.n_layers, "Transformer layers")->capture_default_str();
    app->add_option("--heads", cfg.n_heads, "Attention heads")->capture_default_str();
    app->add_option("--d-model", cfg.d_model, "Hidden size")->capture_default_str();
    app->add_option("--d-head", cfg.d_head, "Head size")->capture_default_str();
    app->add_option("--vocab", cfg.vocab_size, "Vocabulary size")->capture_default_str();
    app->add_option("--max-positions", cfg.max_positions, "Position limit")->capture_default_str();
    app->add_option("--seed", cfg.seed, "Initialisation seed")->capture_default_str();
}

json error_object(std::string_view kind, const std::string& message) {
    return json{{"error", {{"kind", kind}, {"message", message}}}};
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Chunked KV-cache eviction experiments"};
    app.require_subcommand(1);

    ModelFlags model_flags;
    auto* gen_model = app.add_subcommand("gen-model", "Write seeded model weights");
    gen_model->add_option("--backend", model_flags.backend, "tiny-transformer | affinity-mock")->capture_default_str();
    add_model_shape(gen_model, model_flags.cfg);
    gen_model->add_option("-o,--output", model_flags.output, "Weights path")->required();

    AffinityFlags aff;
    aff.cfg.backend = Backend::AffinityMock;
    aff.cfg.max_positions = 65536;
    auto* gen_aff = app.add_subcommand("gen-affinity", "Write the needle affinity-mock table");
    gen_aff->add_option("--layers", aff.cfg.n_layers, "Layers")->capture_default_str();
    gen_aff->add_option("--heads", aff.cfg.n_heads, "Heads")->capture_default_str();
    gen_aff->add_option("--max-positions", aff.cfg.max_positions, "Position limit")->capture_default_str();
    gen_aff->add_option("--passkey", aff.passkey, "Digit passkey")->capture_default_str();
    gen_aff->add_option("--template", aff.needle_template, "Needle text with {key}")->capture_default_str();
    gen_aff->add_option("--instruction-text", aff.instruction, "Instruction text")->capture_default_str();
    gen_aff->add_option("--attract", aff.affinity.attract, "Instruction-to-needle logit")->capture_default_str();
    gen_aff->add_option("--repel", aff.affinity.repel, "Filler-to-needle logit")->capture_default_str();
    gen_aff->add_option("--chain", aff.affinity.chain, "Digit read-out logit")->capture_default_str();
    gen_aff->add_option("-o,--output", aff.output, "Weights path")->required();

    CommonFlags run_flags;
    bool payload = false;
    auto* run_cmd = app.add_subcommand("run", "Encode a document, evict, and generate");
    add_common(run_cmd, run_flags, true);
    run_cmd->add_flag("--payload", payload, "Include base64 KV payloads in the cache snapshot");

    ProbeFlags probe_flags;
    auto* probe = app.add_subcommand("probe", "Top-k intersection of context and instruction scores");
    probe->add_option("--config", probe_flags.config, "JSON config file");
    probe->add_option("--model", probe_flags.model, "Weights file");
    probe->add_option("--context1", probe_flags.context1, "Segment encoded as the cache")->required();
    probe->add_option("--context2", probe_flags.context2, "Context query segment")->required();
    probe->add_option("--instruction", probe_flags.instruction, "Instruction query segment")->required();
    probe->add_option("-k,--k", probe_flags.k, "Slots compared per layer")->capture_default_str();
    probe->add_option("--seed", probe_flags.seed, "Seed for a generated model");
    probe->add_option("-o,--output", probe_flags.output, "Report path");

    CommonFlags ppl_flags;
    bool oracle = false;
    auto* ppl = app.add_subcommand("ppl", "Streaming perplexity");
    add_common(ppl, ppl_flags, true);
    ppl->add_flag("--oracle", oracle, "Also report the un-evicted reference");

    CommonFlags pk_flags;
    PasskeyFlags pk;
    auto* passkey = app.add_subcommand("passkey", "Passkey retrieval");
    add_common(passkey, pk_flags, false);
    passkey->add_option("--length", pk.spec.total_length, "Document length")->capture_default_str();
    passkey->add_option("--depth", pk.spec.depth_fraction, "Needle depth in [0, 1]")->capture_default_str();
    passkey->add_option("--passkey", pk.spec.passkey, "Digit passkey")->capture_default_str();
    passkey->add_option("--filler-seed", pk.spec.filler_seed, "Filler seed")->capture_default_str();
    passkey->add_option("--template", pk.spec.needle_template, "Needle text with {key}")->capture_default_str();
    passkey->add_flag("--sweep", pk.sweep, "Run the depth x length grid");
    passkey->add_option("--depths", pk.depths, "Sweep depths")->delimiter(',');
    passkey->add_option("--lengths", pk.lengths, "Sweep lengths")->delimiter(',');
    passkey->add_option("--csv", pk.csv, "Write the exact-match matrix as CSV");

    std::uint64_t layers = 0;
    std::uint64_t window = 0;
    std::optional<std::string> reach_output;
    auto* reach = app.add_subcommand("reach", "Sliding-window reach l x w");
    reach->add_option("--layers", layers, "Layers")->required();
    reach->add_option("--window", window, "Window size")->required();
    reach->add_option("-o,--output", reach_output, "Report path");

    std::vector<std::string> argv_store{"citrus"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : argv_store) argv.push_back(a.data());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << error_object("ConfigError", e.what()).dump() << "\n";
        return 2;
    }

    try {
        if (*gen_model) {
            emit(cmd_gen_model(model_flags), std::nullopt, out);
        } else if (*gen_aff) {
            emit(cmd_gen_affinity(aff), std::nullopt, out);
        } else if (*run_cmd) {
            emit(cmd_run(run_flags, payload), run_flags.output, out);
        } else if (*probe) {
            emit(cmd_probe(probe_flags), probe_flags.output, out);
        } else if (*ppl) {
            emit(cmd_ppl(ppl_flags, oracle), ppl_flags.output, out);
        } else if (*passkey) {
            emit(cmd_passkey(pk_flags, pk), pk_flags.output, out);
        } else if (*reach) {
            emit(json{{"command", "reach"},
                      {"layers", layers},
                      {"window", window},
                      {"reach", window_reach(layers, window)}},
                 reach_output, out);
        }
    } catch (const Error& e) {
        err << error_object(to_string(e.kind()), e.what()).dump() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << error_object("InternalError", e.what()).dump() << "\n";
        return 1;
    }
    return 0;
}

int run(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

} // namespace citrus::cli
