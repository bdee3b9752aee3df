#include "manetl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "manetl/error.hpp"

namespace manetl {

namespace {

constexpr char kMagic[] = "MNTLCKPT";
constexpr char kEndMagic[] = "MNTLEND!";

class Writer {
public:
    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out.insert(out.end(), b, b + n);
    }
    void u8(std::uint8_t v) { out.push_back(v); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        raw(s.data(), s.size());
    }
    void floats(std::span<const float> values) {
        for (float f : values) u32(std::bit_cast<std::uint32_t>(f));
    }
    std::vector<std::uint8_t> out;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    void section(std::string name) { section_ = std::move(name); }
    void need(std::size_t n) {
        if (bytes_.size() - pos_ < n) {
            throw FormatError("checkpoint truncated in " + section_ + " (need " + std::to_string(n) +
                              " bytes at offset " + std::to_string(pos_) + ", " +
                              std::to_string(bytes_.size() - pos_) + " left)");
        }
    }
    std::span<const std::uint8_t> take(std::size_t n) {
        need(n);
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    std::uint8_t u8() { return take(1)[0]; }
    std::uint32_t u32() {
        auto b = take(4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
        return v;
    }
    std::uint64_t u64() {
        auto b = take(8);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
        return v;
    }
    std::string str() {
        const std::uint32_t n = u32();
        auto b = take(n);
        return std::string(b.begin(), b.end());
    }
    std::vector<float> floats(std::uint64_t n) {
        if (n > (bytes_.size() - pos_) / 4) need(static_cast<std::size_t>(n) * 4);
        std::vector<float> v(static_cast<std::size_t>(n));
        for (float& f : v) f = std::bit_cast<float>(u32());
        return v;
    }
    bool done() const { return pos_ == bytes_.size(); }
    const std::string& current() const { return section_; }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
    std::string section_ = "header";
};

struct StoredTensor {
    std::string name;
    std::uint8_t kind = 0;
    Shape shape;
    std::vector<float> values;
};

void put_tensor(Writer& w, const std::string& name, std::uint8_t kind, const Tensor<float>& t) {
    w.str(name);
    w.u8(kind);
    w.u32(static_cast<std::uint32_t>(t.ndim()));
    for (std::size_t d : t.shape()) w.u64(d);
    w.floats(t.data());
}

}  // namespace

std::vector<std::uint8_t> save_checkpoint(Session& session, const RunSpec& spec) {
    RunSpec echo = spec;
    echo.model = session.model_config;
    echo.train = session.train_config;
    echo.preprocess.size = echo.model.input_size;

    Writer w;
    w.raw(kMagic, 8);
    w.u32(kCheckpointVersion);
    w.str(format_config(echo));
    w.u64(session.epoch);
    std::ostringstream rng;
    rng << session.rng;
    w.str(rng.str());

    std::vector<std::pair<std::string, std::pair<std::uint8_t, Tensor<float>>>> table;
    session.model.visit_params([&](const std::string& n, Tensor<float>& t) { table.push_back({n, {0, t}}); });
    session.model.visit_buffers([&](const std::string& n, Tensor<float>& t) { table.push_back({n, {1, t}}); });
    w.u32(static_cast<std::uint32_t>(table.size()));
    for (const auto& [name, entry] : table) put_tensor(w, name, entry.first, entry.second);

    w.u8(static_cast<std::uint8_t>(session.optimizer.kind()));
    w.u64(session.optimizer.steps());
    w.u32(static_cast<std::uint32_t>(session.optimizer.slots().size()));
    for (const OptimizerSlot& s : session.optimizer.slots()) {
        w.str(s.name);
        w.u64(s.values.size());
        w.floats(s.values);
    }
    w.raw(kEndMagic, 8);
    return std::move(w.out);
}

LoadedCheckpoint load_checkpoint(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    r.section("magic");
    const auto magic = r.take(8);
    if (std::memcmp(magic.data(), kMagic, 8) != 0) throw FormatError("checkpoint magic bytes are not MNTLCKPT");
    r.section("version");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw FormatError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
    }
    r.section("config echo");
    const std::string config_text = r.str();
    r.section("epoch counter");
    const std::uint64_t epoch = r.u64();
    r.section("rng state");
    const std::string rng_text = r.str();

    r.section("tensor table");
    const std::uint32_t count = r.u32();
    std::vector<StoredTensor> tensors;
    for (std::uint32_t i = 0; i < count; ++i) {
        r.section("tensor table (entry " + std::to_string(i) + ")");
        StoredTensor t;
        t.name = r.str();
        r.section("tensor table (entry " + std::to_string(i) + " '" + t.name + "')");
        t.kind = r.u8();
        const std::uint32_t rank = r.u32();
        if (rank > 8) throw FormatError("checkpoint tensor '" + t.name + "' has rank " + std::to_string(rank));
        std::uint64_t numel = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            t.shape.push_back(static_cast<std::size_t>(r.u64()));
            numel *= t.shape.back();
        }
        t.values = r.floats(numel);
        tensors.push_back(std::move(t));
    }

    r.section("optimizer state");
    const std::uint8_t kind = r.u8();
    if (kind > static_cast<std::uint8_t>(OptimizerKind::Adam)) {
        throw FormatError("checkpoint optimizer kind " + std::to_string(kind) + " is unknown");
    }
    const std::uint64_t steps = r.u64();
    const std::uint32_t slot_count = r.u32();
    std::vector<OptimizerSlot> slots;
    for (std::uint32_t i = 0; i < slot_count; ++i) {
        OptimizerSlot s;
        s.name = r.str();
        s.values = r.floats(r.u64());
        slots.push_back(std::move(s));
    }
    r.section("end marker");
    if (std::memcmp(r.take(8).data(), kEndMagic, 8) != 0) throw FormatError("checkpoint end marker is corrupt");
    if (!r.done()) throw FormatError("checkpoint has trailing bytes after the end marker");

    // Everything parsed; now build and fill.
    LoadedCheckpoint out;
    try {
        out.spec = parse_config(config_text);
    } catch (const ConfigError& e) {
        throw FormatError(std::string("checkpoint config echo is invalid: ") + e.what());
    }
    if (static_cast<OptimizerKind>(kind) != out.spec.train.optimizer) {
        throw FormatError("checkpoint optimizer state does not match the configured optimizer");
    }
    auto session = std::make_unique<Session>(out.spec.model, out.spec.train);
    std::size_t next = 0;
    auto fill = [&](std::uint8_t want_kind) {
        return [&, want_kind](const std::string& name, Tensor<float>& t) {
            if (next >= tensors.size()) throw FormatError("checkpoint is missing tensor '" + name + "'");
            const StoredTensor& s = tensors[next++];
            if (s.name != name || s.kind != want_kind || s.shape != t.shape()) {
                throw FormatError("checkpoint tensor '" + s.name + "' " + shape_string(s.shape) +
                                  " does not match model tensor '" + name + "' " + shape_string(t.shape()));
            }
            std::copy(s.values.begin(), s.values.end(), t.mutable_data().begin());
        };
    };
    session->model.visit_params(fill(0));
    session->model.visit_buffers(fill(1));
    if (next != tensors.size()) throw FormatError("checkpoint has tensors the model does not define");
    std::istringstream rng(rng_text);
    rng >> session->rng;
    if (!rng) throw FormatError("checkpoint rng state is unreadable");
    session->optimizer.restore(steps, std::move(slots));
    session->epoch = static_cast<std::size_t>(epoch);
    out.session = std::move(session);
    return out;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InputError("write failed: " + path.string());
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace manetl
