#include "discover/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <string>

#include "discover/error.hpp"

namespace discover {

namespace {

constexpr char kMagic[4] = {'D', 'S', 'C', 'K'};
constexpr int kHistoryColumns = 12;

using Tensors = std::map<std::string, ag::Matrix>;

template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const char* what) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw FormatError(std::string("checkpoint truncated in ") + what);
    return v;
}

void put_string(std::ostream& os, const std::string& s) {
    put<std::uint64_t>(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is, const char* what) {
    const auto n = get<std::uint64_t>(is, what);
    if (n > (1u << 26)) throw FormatError(std::string("checkpoint string too long in ") + what);
    std::string s(n, '\0');
    if (!is.read(s.data(), static_cast<std::streamsize>(n))) throw FormatError(std::string("checkpoint truncated in ") + what);
    return s;
}

void collect(training::TrainState& s, Tensors& out) {
    for (auto* p : s.all_parameters()) out[p->name()] = p->value();
    for (auto* p : s.buffers()) out[p->name()] = p->value();
    auto moments = [&](Adam& opt, const std::string& tag) {
        for (std::size_t i = 0; i < opt.first_moments().size(); ++i) {
            out[tag + ".m." + std::to_string(i)] = opt.first_moments()[i];
            out[tag + ".v." + std::to_string(i)] = opt.second_moments()[i];
        }
    };
    moments(s.main_opt, "optim.main");
    moments(s.aux_opt, "optim.aux");

    ag::Matrix meta(1, 8);
    meta << s.epoch, static_cast<double>(s.step), static_cast<double>(s.main_opt.steps()),
        static_cast<double>(s.aux_opt.steps()), static_cast<double>(s.main_opt.first_moments().size()),
        static_cast<double>(s.aux_opt.first_moments().size()), s.encoder.feature_dim(), s.encoder.class_count();
    out["meta"] = meta;
    out["meta.clusters"] = ag::Matrix::Constant(1, 1, s.knowledge_classifier.out());

    ag::Matrix hist(static_cast<Eigen::Index>(s.history.size()), kHistoryColumns);
    for (std::size_t r = 0; r < s.history.size(); ++r) {
        const auto& h = s.history[r];
        hist.row(static_cast<Eigen::Index>(r)) << h.epoch, h.main.task, h.main.trans, h.main.mi, h.main.zcls, h.main.adv,
            h.main.total, h.aux.disc, h.aux.q, h.aux.zcls, h.aux.total, h.valid_map;
    }
    out["history"] = hist;
}

const ag::Matrix& need(const Tensors& t, const std::string& name) {
    auto it = t.find(name);
    if (it == t.end()) throw FormatError("checkpoint lacks tensor " + name);
    return it->second;
}

void assign(ag::Matrix& dst, const ag::Matrix& src, const std::string& name) {
    if (dst.rows() != src.rows() || dst.cols() != src.cols()) {
        throw FormatError("checkpoint tensor " + name + " has shape " + std::to_string(src.rows()) + "x" +
                          std::to_string(src.cols()) + ", expected " + std::to_string(dst.rows()) + "x" +
                          std::to_string(dst.cols()));
    }
    dst = src;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const training::TrainState& state) {
    training::TrainState copy = state;
    Tensors tensors;
    collect(copy, tensors);

    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw InputError("cannot write checkpoint " + path.string());
        os.write(kMagic, 4);
        put<std::uint32_t>(os, kCheckpointVersion);
        put<std::uint64_t>(os, state.config.digest());
        put_string(os, state.config.to_text());
        put<std::uint64_t>(os, tensors.size());
        for (const auto& [name, m] : tensors) {
            put_string(os, name);
            put<std::uint64_t>(os, static_cast<std::uint64_t>(m.rows()));
            put<std::uint64_t>(os, static_cast<std::uint64_t>(m.cols()));
            for (Eigen::Index i = 0; i < m.rows(); ++i)
                for (Eigen::Index j = 0; j < m.cols(); ++j) put<double>(os, m(i, j));
        }
        if (!os) throw InputError("failed writing checkpoint " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

training::TrainState load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InputError("cannot open checkpoint " + path.string());
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw FormatError("not a checkpoint: " + path.string());
    const auto version = get<std::uint32_t>(is, "version");
    if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
    const auto digest = get<std::uint64_t>(is, "digest");
    const std::string text = get_string(is, "config");
    Config cfg = Config::from_text(text);
    if (cfg.digest() != digest) throw FormatError("checkpoint config digest mismatch");

    Tensors tensors;
    const auto count = get<std::uint64_t>(is, "tensor count");
    for (std::uint64_t k = 0; k < count; ++k) {
        std::string name = get_string(is, "tensor name");
        const auto rows = get<std::uint64_t>(is, "tensor shape");
        const auto cols = get<std::uint64_t>(is, "tensor shape");
        if (rows > (1u << 24) || cols > (1u << 24)) throw FormatError("implausible tensor shape for " + name);
        ag::Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = get<double>(is, name.c_str());
        tensors.emplace(std::move(name), std::move(m));
    }
    if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after checkpoint");

    const ag::Matrix& meta = need(tensors, "meta");
    if (meta.rows() != 1 || meta.cols() != 8) throw FormatError("malformed checkpoint metadata");
    const int clusters = static_cast<int>(need(tensors, "meta.clusters")(0, 0));
    training::TrainState s(cfg, static_cast<int>(meta(0, 6)), static_cast<int>(meta(0, 7)), clusters);
    for (auto* p : s.all_parameters()) assign(p->value(), need(tensors, p->name()), p->name());
    for (auto* p : s.buffers()) assign(p->value(), need(tensors, p->name()), p->name());

    auto moments = [&](Adam& opt, const std::string& tag, double n, double steps) {
        opt.first_moments().clear();
        opt.second_moments().clear();
        for (int i = 0; i < static_cast<int>(n); ++i) {
            opt.first_moments().push_back(need(tensors, tag + ".m." + std::to_string(i)));
            opt.second_moments().push_back(need(tensors, tag + ".v." + std::to_string(i)));
        }
        opt.set_steps(static_cast<long>(steps));
    };
    moments(s.main_opt, "optim.main", meta(0, 4), meta(0, 2));
    moments(s.aux_opt, "optim.aux", meta(0, 5), meta(0, 3));
    s.epoch = static_cast<int>(meta(0, 0));
    s.step = static_cast<long>(meta(0, 1));

    const ag::Matrix& hist = need(tensors, "history");
    if (hist.rows() > 0 && hist.cols() != kHistoryColumns) throw FormatError("malformed checkpoint history");
    for (Eigen::Index r = 0; r < hist.rows(); ++r) {
        training::EpochRecord h;
        h.epoch = static_cast<int>(hist(r, 0));
        h.main = {hist(r, 1), hist(r, 2), hist(r, 3), hist(r, 4), hist(r, 5), hist(r, 6)};
        h.aux = {hist(r, 7), hist(r, 8), hist(r, 9), hist(r, 10)};
        h.valid_map = hist(r, 11);
        s.history.push_back(h);
    }
    return s;
}

}  // namespace discover
