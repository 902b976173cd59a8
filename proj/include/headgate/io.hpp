#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "headgate/attribution.hpp"
#include "headgate/bench/sweep.hpp"
#include "headgate/bench/timing.hpp"
#include "headgate/model.hpp"
#include "headgate/ratio.hpp"
#include "headgate/taxonomy.hpp"
#include "headgate/trace.hpp"

namespace headgate {

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// Shortest exact decimal form of a double.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// Model container. Binary little-endian layout:
//   bytes 0..7   magic "HGMODL01"
//   u32          format version (1)
//   i32 x7       num_layers, num_heads, d_model, d_k, d_v, d_ff, vocab_size
//   u8 x2        causal_mask, use_mlp
//   f64          norm_eps
//   f64[...]     embedding (vocab x d_model, row-major), then per layer:
//                per head w_q, w_k, w_v; w_o; when use_mlp: ff_w1, ff_b1,
//                ff_w2, ff_b2, norm_scale; finally unembedding.
// ---------------------------------------------------------------------------

inline constexpr char kModelMagic[8] = {'H', 'G', 'M', 'O', 'D', 'L', '0', '1'};
inline constexpr std::uint32_t kModelFormatVersion = 1;

namespace detail_io {

template <class T>
void write_raw(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_raw(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw io_error("model file truncated");
    return v;
}

inline void write_matrix(std::ostream& out, const Matrix& m) {
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(m.size() * sizeof(double)));
}

inline Matrix read_matrix(std::istream& in, std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!in) throw io_error("model file truncated");
    return m;
}

inline void write_vec(std::ostream& out, const Vec& v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
}

inline Vec read_vec(std::istream& in, std::size_t n) {
    Vec v(n);
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw io_error("model file truncated");
    return v;
}

} // namespace detail_io

inline void save_model(const std::string& path, const Model& model) {
    model.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open model file for writing: " + path);
    out.write(kModelMagic, 8);
    detail_io::write_raw(out, kModelFormatVersion);
    const ModelConfig& c = model.config;
    for (std::int32_t v : {c.num_layers, c.num_heads, c.d_model, c.d_k, c.d_v, c.d_ff, c.vocab_size})
        detail_io::write_raw(out, v);
    detail_io::write_raw(out, static_cast<std::uint8_t>(c.causal_mask ? 1 : 0));
    detail_io::write_raw(out, static_cast<std::uint8_t>(c.use_mlp ? 1 : 0));
    detail_io::write_raw(out, c.norm_eps);
    detail_io::write_matrix(out, model.embedding);
    for (const auto& layer : model.layers) {
        for (const auto& h : layer.heads) {
            detail_io::write_matrix(out, h.w_q);
            detail_io::write_matrix(out, h.w_k);
            detail_io::write_matrix(out, h.w_v);
        }
        detail_io::write_matrix(out, layer.w_o);
        if (c.use_mlp) {
            detail_io::write_matrix(out, layer.ff_w1);
            detail_io::write_vec(out, layer.ff_b1);
            detail_io::write_matrix(out, layer.ff_w2);
            detail_io::write_vec(out, layer.ff_b2);
            detail_io::write_vec(out, layer.norm_scale);
        }
    }
    detail_io::write_matrix(out, model.unembedding);
    if (!out) throw io_error("failed writing model file: " + path);
}

inline Model load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open model file: " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kModelMagic, 8) != 0)
        throw io_error("not a model file (bad magic): " + path);
    const auto version = detail_io::read_raw<std::uint32_t>(in);
    if (version != kModelFormatVersion)
        throw io_error("unsupported model format version in " + path);

    Model m;
    ModelConfig& c = m.config;
    c.num_layers = detail_io::read_raw<std::int32_t>(in);
    c.num_heads = detail_io::read_raw<std::int32_t>(in);
    c.d_model = detail_io::read_raw<std::int32_t>(in);
    c.d_k = detail_io::read_raw<std::int32_t>(in);
    c.d_v = detail_io::read_raw<std::int32_t>(in);
    c.d_ff = detail_io::read_raw<std::int32_t>(in);
    c.vocab_size = detail_io::read_raw<std::int32_t>(in);
    c.causal_mask = detail_io::read_raw<std::uint8_t>(in) != 0;
    c.use_mlp = detail_io::read_raw<std::uint8_t>(in) != 0;
    c.norm_eps = detail_io::read_raw<double>(in);
    c.validate();

    m.embedding = detail_io::read_matrix(in, c.vocab_size, c.d_model);
    m.layers.resize(c.num_layers);
    for (auto& layer : m.layers) {
        layer.heads.resize(c.num_heads);
        for (auto& h : layer.heads) {
            h.w_q = detail_io::read_matrix(in, c.d_model, c.d_k);
            h.w_k = detail_io::read_matrix(in, c.d_model, c.d_k);
            h.w_v = detail_io::read_matrix(in, c.d_model, c.d_v);
        }
        layer.w_o = detail_io::read_matrix(in, c.d_model, c.d_model);
        if (c.use_mlp) {
            layer.ff_w1 = detail_io::read_matrix(in, c.d_model, c.d_ff);
            layer.ff_b1 = detail_io::read_vec(in, c.d_ff);
            layer.ff_w2 = detail_io::read_matrix(in, c.d_ff, c.d_model);
            layer.ff_b2 = detail_io::read_vec(in, c.d_model);
            layer.norm_scale = detail_io::read_vec(in, c.d_model);
        }
    }
    m.unembedding = detail_io::read_matrix(in, c.d_model, c.vocab_size);
    m.validate();
    return m;
}

// ---------------------------------------------------------------------------
// CSV artifacts. Every file starts with two comment lines:
//   # generated <timestamp>      (excluded from byte comparisons)
//   # config_hash <hex>
// Layers and heads are printed 1-based.
// ---------------------------------------------------------------------------

inline std::string csv_payload_after_timestamp(const std::string& text) {
    const auto pos = text.find('\n');
    if (pos == std::string::npos) return text;
    return text.substr(pos + 1);
}

namespace detail_io {

inline std::string timestamp_line() {
    std::time_t t = std::time(nullptr);
    char buf[64];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return std::string("# generated ") + buf + "\n";
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open file for writing: " + path);
    out << text;
    if (!out) throw io_error("failed writing file: " + path);
}

} // namespace detail_io

inline std::string csv_header(std::uint64_t config_hash) {
    return detail_io::timestamp_line() + "# config_hash " + hex64(config_hash) + "\n";
}

inline std::string profile_csv(const RatioProfile& profile, std::uint64_t hash) {
    std::string s = csv_header(hash) + "layer,head,s_v\n";
    for (std::size_t l = 0; l < profile.num_layers(); ++l)
        for (std::size_t h = 0; h < profile.num_heads(); ++h)
            s += std::to_string(l + 1) + "," + std::to_string(h + 1) + "," +
                 format_double(profile.visual_ratio(l, h)) + "\n";
    return s;
}

inline std::string classification_csv(const RatioProfile& profile,
                                      const HeadClassification& cls, std::uint64_t hash) {
    std::string s = csv_header(hash) + "layer,head,s_v,label\n";
    for (std::size_t l = 0; l < profile.num_layers(); ++l)
        for (std::size_t h = 0; h < profile.num_heads(); ++h)
            s += std::to_string(l + 1) + "," + std::to_string(h + 1) + "," +
                 format_double(profile.visual_ratio(l, h)) + "," + label_name(cls.at(l, h)) + "\n";
    const auto counts = classification_counts(cls);
    s += "# perception " + std::to_string(counts.num_perception) + "\n";
    s += "# reasoning " + std::to_string(counts.num_reasoning) + "\n";
    s += "# unlabeled " + std::to_string(counts.num_unlabeled) + "\n";
    s += "# perc_last " + std::to_string(cls.boundaries.perc_last) + " reas_first " +
         std::to_string(cls.boundaries.reas_first) + " tau_perc " +
         format_double(cls.thresholds.tau_perc) + " tau_reas " +
         format_double(cls.thresholds.tau_reas) + "\n";
    return s;
}

inline std::string heatmap_csv(const GateGradient& grad, std::uint64_t hash) {
    const auto layer_map = importance(grad, NormalizationMode::layer_wise);
    const auto global_map = importance(grad, NormalizationMode::global);
    const auto ranking = rank_heads(global_map);
    Matrix rank(grad.num_layers(), grad.num_heads());
    for (std::size_t r = 0; r < ranking.size(); ++r)
        rank(ranking[r].layer, ranking[r].head) = static_cast<double>(r + 1);

    std::string s =
        csv_header(hash) + "layer,head,signed_s,importance_layerwise,importance_global,rank\n";
    for (std::size_t l = 0; l < grad.num_layers(); ++l)
        for (std::size_t h = 0; h < grad.num_heads(); ++h)
            s += std::to_string(l + 1) + "," + std::to_string(h + 1) + "," +
                 format_double(grad.signed_sensitivity(l, h)) + "," +
                 format_double(layer_map.normalized(l, h)) + "," +
                 format_double(global_map.normalized(l, h)) + "," +
                 std::to_string(static_cast<long>(rank(l, h))) + "\n";
    return s;
}

inline std::string grid_csv(const bench::SweepResult& result, std::uint64_t hash) {
    std::string s = csv_header(hash);
    for (const auto& axis : result.axes) s += axis.name + ",";
    s += "score,status\n";
    for (const auto& cell : result.cells) {
        for (double c : cell.coords) s += format_double(c) + ",";
        s += (cell.ok ? format_double(cell.score) : std::string("nan")) + ",";
        s += cell.ok ? "ok" : ("error:" + cell.error);
        s += "\n";
    }
    if (result.has_best) {
        s += "# best";
        for (double c : result.best().coords) s += " " + format_double(c);
        s += " score " + format_double(result.best().score) + "\n";
    }
    return s;
}

inline std::string timing_csv(const bench::TimingReport& report, std::uint64_t hash) {
    std::string s = csv_header(hash) + "n,mode,reps,mean_s,median_s,p25_s,p75_s,overhead\n";
    for (const auto& row : report.rows) {
        double overhead = 0.0;
        for (const auto& [n, o] : report.overhead)
            if (n == row.length) overhead = o;
        s += std::to_string(row.length) + "," + bench::timing_mode_name(row.mode) + "," +
             std::to_string(row.repetitions) + "," + format_double(row.mean_s) + "," +
             format_double(row.median_s) + "," + format_double(row.p25_s) + "," +
             format_double(row.p75_s) + ",";
        s += row.mode == bench::TimingMode::gated_ratio ? format_double(overhead) : "0";
        if (row.timer_warning) s += ",timer_resolution_warning";
        s += "\n";
    }
    for (const auto& [n, f] : report.flops) {
        s += "# flops n=" + std::to_string(n) + " t1 " + format_double(f.t1) + " t2 " +
             format_double(f.t2) + " t3 " + format_double(f.t3) + " t4 " + format_double(f.t4) +
             " t5 " + format_double(f.t5) + " mlp " + format_double(f.mlp) + " ratio_extra " +
             format_double(f.ratio_extra) + " gate_extra " + format_double(f.gate_extra) + "\n";
    }
    return s;
}

inline std::string logits_csv(const Matrix& logits, int top_k, std::uint64_t hash) {
    std::string s = csv_header(hash) + "position,rank,token,logit\n";
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        std::vector<std::pair<double, int>> scored;
        scored.reserve(logits.cols());
        for (std::size_t j = 0; j < logits.cols(); ++j)
            scored.push_back({logits(i, j), static_cast<int>(j)});
        std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
            return a.first > b.first;
        });
        const int k = std::min<int>(top_k, static_cast<int>(scored.size()));
        for (int r = 0; r < k; ++r)
            s += std::to_string(i) + "," + std::to_string(r + 1) + "," +
                 std::to_string(scored[r].second) + "," + format_double(scored[r].first) + "\n";
    }
    return s;
}

// One CSV per (layer, head) plus a manifest listing them.
inline void dump_trace(const std::string& dir, const AttentionTrace& trace, std::uint64_t hash) {
    std::string manifest = csv_header(hash) + "file,layer,head,rows,cols\n";
    for (std::size_t l = 0; l < trace.num_layers(); ++l)
        for (std::size_t h = 0; h < trace.num_heads(); ++h) {
            const Matrix& a = trace.attention[l][h];
            const std::string name =
                "attn_l" + std::to_string(l + 1) + "_h" + std::to_string(h + 1) + ".csv";
            std::string s = csv_header(hash);
            for (std::size_t i = 0; i < a.rows(); ++i) {
                for (std::size_t j = 0; j < a.cols(); ++j) {
                    if (j) s += ",";
                    s += format_double(a(i, j));
                }
                s += "\n";
            }
            detail_io::write_text_file(dir + "/" + name, s);
            manifest += name + "," + std::to_string(l + 1) + "," + std::to_string(h + 1) + "," +
                        std::to_string(a.rows()) + "," + std::to_string(a.cols()) + "\n";
        }
    detail_io::write_text_file(dir + "/manifest.csv", manifest);
}

// ---------------------------------------------------------------------------
// Input sequence file: plain text, '#' comments,
//   vision_range <start> <end>    0-based half-open position range
//   tokens <id> <id> ...          may repeat across lines
// ---------------------------------------------------------------------------

struct SequenceFile {
    std::vector<int> token_ids;
    long vision_start = 0;
    long vision_end = 0;
};

inline SequenceFile parse_sequence_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open sequence file: " + path);
    SequenceFile sf;
    bool have_range = false;
    std::string line;
    while (std::getline(in, line)) {
        const auto hash_pos = line.find('#');
        if (hash_pos != std::string::npos) line.resize(hash_pos);
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key)) continue;
        if (key == "vision_range") {
            if (!(ls >> sf.vision_start >> sf.vision_end))
                throw io_error("sequence file: malformed vision_range");
            have_range = true;
        } else if (key == "tokens") {
            int id;
            while (ls >> id) sf.token_ids.push_back(id);
        } else {
            throw io_error("sequence file: unknown directive '" + key + "'");
        }
    }
    if (sf.token_ids.empty()) throw io_error("sequence file: no tokens");
    if (!have_range) throw io_error("sequence file: missing vision_range");
    if (sf.vision_start < 0 || sf.vision_end < sf.vision_start ||
        sf.vision_end > static_cast<long>(sf.token_ids.size()))
        throw validation_error("sequence file: vision range out of bounds");
    return sf;
}

inline TokenSequence sequence_from_file(const SequenceFile& sf) {
    TokenSequence seq;
    seq.token_ids = sf.token_ids;
    seq.modality.assign(sf.token_ids.size(), Modality::text);
    for (long i = sf.vision_start; i < sf.vision_end; ++i)
        seq.modality[static_cast<std::size_t>(i)] = Modality::vision;
    return seq;
}

// ---------------------------------------------------------------------------
// Flat key/value config with [section] headers; keys become "section.key".
// ---------------------------------------------------------------------------

inline std::map<std::string, std::string> parse_ini_text(const std::string& text) {
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    std::string line, section;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        const auto hash_pos = line.find('#');
        if (hash_pos != std::string::npos) line.resize(hash_pos);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw io_error("config: malformed section header: " + line);
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw io_error("config: expected key = value: " + line);
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw io_error("config: empty key: " + line);
        out[section.empty() ? key : section + "." + key] = value;
    }
    return out;
}

inline std::map<std::string, std::string> parse_ini_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_ini_text(ss.str());
}

} // namespace headgate
