#include "rlad/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

namespace rlad::checkpoint {

namespace {

constexpr char kMagic[8] = {'R', 'L', 'A', 'D', 'C', 'K', 'P', 'T'};

void put_u32(std::string& buf, std::uint32_t v) {
    char bytes[4];
    std::memcpy(bytes, &v, 4);
    buf.append(bytes, 4);
}

void put_str(std::string& buf, const std::string& s) {
    put_u32(buf, static_cast<std::uint32_t>(s.size()));
    buf.append(s);
}

class Reader {
public:
    explicit Reader(const std::string& data) : data_(data) {}

    void bytes(void* out, std::size_t n) {
        if (pos_ + n > data_.size()) throw ShapeMismatch("checkpoint truncated");
        std::memcpy(out, data_.data() + pos_, n);
        pos_ += n;
    }
    std::uint32_t u32() {
        std::uint32_t v;
        bytes(&v, 4);
        return v;
    }
    std::string str() {
        const auto n = u32();
        if (pos_ + n > data_.size()) throw ShapeMismatch("checkpoint truncated");
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool at_end() const { return pos_ == data_.size(); }

private:
    const std::string& data_;
    std::size_t pos_ = 0;
};

}  // namespace

void save(const std::filesystem::path& path, const std::string& kind, const nlohmann::json& meta,
          const nn::ConstParamRefs& params) {
    std::string buf(kMagic, sizeof(kMagic));
    put_u32(buf, kFormatVersion);
    put_str(buf, kind);
    put_str(buf, meta.dump());
    put_u32(buf, static_cast<std::uint32_t>(params.size()));
    for (const auto* p : params) {
        put_str(buf, p->name);
        put_u32(buf, static_cast<std::uint32_t>(p->value.rows()));
        put_u32(buf, static_cast<std::uint32_t>(p->value.cols()));
        buf.append(reinterpret_cast<const char*>(p->value.data()),
                   static_cast<std::size_t>(p->value.size()) * sizeof(double));
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("short write on checkpoint " + path.string());
}

Checkpoint load(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw MissingFile("no such checkpoint: " + path.string());
    std::ifstream in(path, std::ios::binary);
    const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Reader r(data);
    char magic[8];
    r.bytes(magic, sizeof(magic));
    if (std::memcmp(magic, kMagic, sizeof(magic)) != 0) throw ShapeMismatch("not a checkpoint: " + path.string());
    const auto version = r.u32();
    if (version != kFormatVersion) throw ShapeMismatch("unsupported checkpoint version " + std::to_string(version));

    Checkpoint ckpt;
    ckpt.kind = r.str();
    try {
        ckpt.meta = nlohmann::json::parse(r.str());
    } catch (const nlohmann::json::exception&) {
        throw ShapeMismatch("checkpoint metadata is not valid JSON");
    }
    const auto count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
        nn::Param p;
        p.name = r.str();
        const auto rows = r.u32();
        const auto cols = r.u32();
        if (static_cast<std::uint64_t>(rows) * cols * sizeof(double) > data.size()) {
            throw ShapeMismatch("checkpoint tensor '" + p.name + "' larger than file");
        }
        p.value.resize(rows, cols);
        r.bytes(p.value.data(), static_cast<std::size_t>(rows) * cols * sizeof(double));
        p.grad = Eigen::MatrixXd::Zero(rows, cols);
        ckpt.params.push_back(std::move(p));
    }
    if (!r.at_end()) throw ShapeMismatch("trailing bytes in checkpoint " + path.string());
    return ckpt;
}

void restore(const Checkpoint& ckpt, const std::string& expected_kind, const nn::ParamRefs& params) {
    if (ckpt.kind != expected_kind) {
        throw ShapeMismatch("checkpoint holds '" + ckpt.kind + "', expected '" + expected_kind + "'");
    }
    if (ckpt.params.size() != params.size()) throw ShapeMismatch("checkpoint parameter count differs from model");
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& src = ckpt.params[i];
        auto* dst = params[i];
        if (src.name != dst->name || src.value.rows() != dst->value.rows() || src.value.cols() != dst->value.cols()) {
            throw ShapeMismatch("checkpoint tensor '" + src.name + "' does not match model tensor '" + dst->name + "'");
        }
    }
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = ckpt.params[i].value;
}

}  // namespace rlad::checkpoint
