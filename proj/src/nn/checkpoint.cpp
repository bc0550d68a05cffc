#include "lgdist/nn/checkpoint.hpp"

#include "lgdist/dataset.hpp"
#include "lgdist/error.hpp"

#include <bit>
#include <cstring>

namespace lgdist::nn {

namespace {

constexpr char kMagic[8] = {'L', 'G', 'D', 'C', 'K', 'P', 'T', '\n'};

} // namespace

const Matrix& Checkpoint::tensor(const std::string& name) const {
    for (const auto& [n, m] : tensors) {
        if (n == name) {
            return m;
        }
    }
    fail(ErrorKind::Checkpoint, "checkpoint (" + kind + ") has no tensor '" + name + "'");
}

bool Checkpoint::has_tensor(const std::string& name) const {
    for (const auto& t : tensors) {
        if (t.first == name) {
            return true;
        }
    }
    return false;
}

void save_checkpoint(const std::filesystem::path& file, const Checkpoint& ckpt) {
    nlohmann::json manifest = nlohmann::json::array();
    std::string blob;
    for (const auto& [name, m] : ckpt.tensors) {
        manifest.push_back({{"name", name}, {"shape", {m.rows(), m.cols()}}, {"offset", blob.size()}});
        const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> f = m.cast<float>();
        blob.append(reinterpret_cast<const char*>(f.data()), static_cast<std::size_t>(f.size()) * sizeof(float));
    }
    const nlohmann::json header = {{"format_version", kCheckpointFormatVersion},
                                   {"kind", ckpt.kind},
                                   {"config", ckpt.config},
                                   {"extras", ckpt.extras},
                                   {"dtype", "f32le"},
                                   {"tensors", manifest}};
    const std::string text = header.dump();
    std::string out(kMagic, sizeof(kMagic));
    const std::uint64_t len = text.size();
    out.append(reinterpret_cast<const char*>(&len), sizeof(len));
    out += text;
    out += blob;
    write_text(file, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& file) {
    const std::string bytes = read_text(file);
    require(bytes.size() >= 16 && std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) == 0, ErrorKind::Checkpoint,
            file.string() + " is not an lgdist checkpoint");
    std::uint64_t len = 0;
    std::memcpy(&len, bytes.data() + 8, sizeof(len));
    require(16 + len <= bytes.size(), ErrorKind::Checkpoint, file.string() + ": truncated header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.substr(16, len));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Checkpoint, file.string() + ": bad header: " + e.what());
    }
    require(header.value("format_version", -1) == kCheckpointFormatVersion, ErrorKind::Checkpoint,
            file.string() + ": unsupported checkpoint format version");
    Checkpoint ckpt;
    ckpt.kind = header.at("kind").get<std::string>();
    ckpt.config = header.at("config");
    ckpt.extras = header.at("extras");
    const std::size_t base = 16 + len;
    for (const auto& t : header.at("tensors")) {
        const auto rows = t.at("shape").at(0).get<Eigen::Index>();
        const auto cols = t.at("shape").at(1).get<Eigen::Index>();
        const auto offset = t.at("offset").get<std::size_t>();
        const std::size_t n = static_cast<std::size_t>(rows * cols);
        require(base + offset + n * sizeof(float) <= bytes.size(), ErrorKind::Checkpoint,
                file.string() + ": tensor '" + t.at("name").get<std::string>() + "' exceeds the file");
        Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> f(rows, cols);
        if (n > 0) {
            std::memcpy(f.data(), bytes.data() + base + offset, n * sizeof(float));
        }
        ckpt.tensors.emplace_back(t.at("name").get<std::string>(), f.cast<double>());
    }
    return ckpt;
}

void export_parameters(const ParameterSet& params, Checkpoint& ckpt) {
    for (const auto& p : params.items()) {
        ckpt.tensors.emplace_back(p.name, p.var.value());
    }
}

void export_optimizer(const ParameterSet& params, const AdamW& opt, Checkpoint& ckpt) {
    const auto& items = params.items();
    for (std::size_t i = 0; i < items.size(); ++i) {
        ckpt.tensors.emplace_back("adam.m/" + items[i].name, opt.first_moments()[i]);
        ckpt.tensors.emplace_back("adam.v/" + items[i].name, opt.second_moments()[i]);
    }
    ckpt.extras["optimizer_step"] = opt.steps();
}

void import_parameters(const Checkpoint& ckpt, ParameterSet& params) {
    for (auto& p : params.items()) {
        const Matrix& m = ckpt.tensor(p.name);
        require(m.rows() == p.var.rows() && m.cols() == p.var.cols(), ErrorKind::Checkpoint,
                "checkpoint tensor '" + p.name + "' has an incompatible shape");
        p.var.mutable_value() = m;
    }
}

void import_optimizer(const Checkpoint& ckpt, const ParameterSet& params, AdamW& opt) {
    const auto& items = params.items();
    for (std::size_t i = 0; i < items.size(); ++i) {
        opt.first_moments()[i] = ckpt.tensor("adam.m/" + items[i].name);
        opt.second_moments()[i] = ckpt.tensor("adam.v/" + items[i].name);
    }
    opt.set_steps(ckpt.extras.at("optimizer_step").get<std::uint64_t>());
}

} // namespace lgdist::nn
