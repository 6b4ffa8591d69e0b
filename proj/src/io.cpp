#include "eimtd/io.hpp"

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "eimtd/error.hpp"

namespace eimtd {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), "cannot read '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
    const std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << text;
}

json read_json(const std::string& path) {
    const std::string text = read_text(path);
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError("'" + path + "' is not valid JSON: " + e.what());
    }
}

void write_json(const std::string& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

json model_to_json(const DenseNet& net) {
    json layers = json::array();
    for (const Layer& l : net.layers()) {
        json rows = json::array();
        for (std::size_t i = 0; i < l.out; ++i) {
            json row = json::array();
            for (std::size_t j = 0; j < l.in; ++j) row.push_back(l.w(i, j));
            rows.push_back(std::move(row));
        }
        layers.push_back({{"activation", to_string(l.activation)}, {"weights", std::move(rows)}, {"bias", l.bias}});
    }
    return {{"input_dim", net.input_dim()}, {"num_classes", net.num_classes()}, {"layers", std::move(layers)}};
}

DenseNet model_from_json(const json& doc) {
    try {
        const std::size_t input_dim = doc.at("input_dim").get<std::size_t>();
        const std::size_t num_classes = doc.at("num_classes").get<std::size_t>();
        std::vector<Layer> layers;
        for (const json& jl : doc.at("layers")) {
            Layer l;
            l.activation = activation_from_string(jl.at("activation").get<std::string>());
            const json& rows = jl.at("weights");
            l.out = rows.size();
            l.in = l.out == 0 ? 0 : rows.front().size();
            for (const json& row : rows) {
                require(row.size() == l.in, "ragged weight matrix");
                for (const json& v : row) l.weights.push_back(v.get<double>());
            }
            l.bias = jl.at("bias").get<Vec>();
            layers.push_back(std::move(l));
        }
        return DenseNet(input_dim, num_classes, std::move(layers));
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed model document: ") + e.what());
    }
}

void save_model(const std::string& path, const DenseNet& net, const std::string& config_hash) {
    json doc = model_to_json(net);
    if (!config_hash.empty()) doc["config_hash"] = config_hash;
    write_json(path, doc);
}

DenseNet load_model(const std::string& path) { return model_from_json(read_json(path)); }

std::string config_hash(const json& config) {
    const std::string canon = config.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canon) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace eimtd
