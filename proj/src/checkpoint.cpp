#include "seqee/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace seqee {

namespace {

constexpr char kMagic[8] = {'S', 'E', 'Q', 'E', 'E', 'C', 'K', '1'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

void put_u64(std::ostream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint64_t get_u64(std::istream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw IoError("truncated checkpoint");
    return v;
}

void put_string(std::ostream& out, const std::string& s) {
    put_u64(out, s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
    const std::uint64_t n = get_u64(in);
    if (n > (1u << 20)) throw IoError("implausible string length in checkpoint");
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    if (!in) throw IoError("truncated checkpoint");
    return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out.write(kMagic, sizeof kMagic);
    for (Index v : {ckpt.config.num_layers, ckpt.config.hidden_dim, ckpt.config.num_heads,
                    ckpt.config.ffn_dim, ckpt.config.num_labels, ckpt.config.vocab_size,
                    ckpt.config.max_len})
        put_u64(out, static_cast<std::uint64_t>(v));

    put_u64(out, ckpt.labels.schema == LabelSchema::bio ? 1 : 0);
    put_u64(out, ckpt.labels.names.size());
    for (const auto& n : ckpt.labels.names) put_string(out, n);
    put_u64(out, static_cast<std::uint64_t>(ckpt.tokens.unk_id + 1));  // 0 = none
    put_u64(out, ckpt.tokens.names.size());
    for (const auto& n : ckpt.tokens.names) put_string(out, n);

    const auto tensors = named_tensors(ckpt.weights);
    put_u64(out, tensors.size());
    for (const auto& t : tensors) {
        put_string(out, t.name);
        put_u64(out, static_cast<std::uint64_t>(t.rows));
        put_u64(out, static_cast<std::uint64_t>(t.cols));
        out.write(reinterpret_cast<const char*>(t.data),
                  static_cast<std::streamsize>(sizeof(Real) * t.rows * t.cols));
    }
    if (!out) throw IoError("failed while writing " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw IoError(path + " is not a SEQEECK1 checkpoint");

    Checkpoint ckpt;
    auto& cfg = ckpt.config;
    for (Index* v : {&cfg.num_layers, &cfg.hidden_dim, &cfg.num_heads, &cfg.ffn_dim,
                     &cfg.num_labels, &cfg.vocab_size, &cfg.max_len})
        *v = static_cast<Index>(get_u64(in));
    cfg.validate();

    ckpt.labels.schema = get_u64(in) == 1 ? LabelSchema::bio : LabelSchema::plain;
    ckpt.labels.names.resize(get_u64(in));
    for (auto& n : ckpt.labels.names) n = get_string(in);
    ckpt.tokens.unk_id = static_cast<int>(get_u64(in)) - 1;
    ckpt.tokens.names.resize(get_u64(in));
    for (auto& n : ckpt.tokens.names) n = get_string(in);

    // Build correctly-shaped storage, then overwrite tensor by tensor.
    ckpt.weights = EncoderWeights::random_init(cfg, 0);
    auto tensors = named_tensors(ckpt.weights);
    const std::uint64_t count = get_u64(in);
    if (count != tensors.size())
        throw IoError("checkpoint holds " + std::to_string(count) + " tensors, expected " +
                      std::to_string(tensors.size()));
    for (auto& t : tensors) {
        const std::string name = get_string(in);
        const auto rows = static_cast<Index>(get_u64(in));
        const auto cols = static_cast<Index>(get_u64(in));
        if (name != t.name || rows != t.rows || cols != t.cols)
            throw IoError("checkpoint tensor " + name + " (" + std::to_string(rows) + "x" +
                          std::to_string(cols) + ") does not match expected " + t.name + " (" +
                          std::to_string(t.rows) + "x" + std::to_string(t.cols) + ")");
        in.read(reinterpret_cast<char*>(t.data),
                static_cast<std::streamsize>(sizeof(Real) * t.rows * t.cols));
        if (!in) throw IoError("truncated checkpoint");
    }
    return ckpt;
}

}  // namespace seqee
