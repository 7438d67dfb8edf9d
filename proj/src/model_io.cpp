#include "gridcrf/model_io.hpp"

#include <fstream>

#include <json.hpp>

namespace gridcrf {

using nlohmann::json;

std::string model_to_json(const GridModel& model, const Weights& weights) {
    model.validate();
    weights.validate();
    if (weights.num_labels() != model.num_labels() || weights.d_unary() != model.d_unary() ||
        weights.d_pairwise() != model.d_pairwise())
        throw std::invalid_argument("model_to_json: weights do not match model shape");

    json doc;
    doc["version"] = 1;
    doc["height"] = model.height();
    doc["width"] = model.width();
    doc["num_labels"] = model.num_labels();
    doc["d_unary"] = model.d_unary();
    doc["d_pairwise"] = model.d_pairwise();
    doc["symmetric_pairwise"] = weights.symmetric_pairwise();

    json uf = json::array();
    for (int n = 0; n < model.num_nodes(); ++n)
        for (double v : model.unary_features(n)) uf.push_back(v);
    doc["unary_features"] = std::move(uf);

    json pf = json::array();
    for (int e = 0; e < model.num_edges(); ++e)
        for (double v : model.pairwise_features(e)) pf.push_back(v);
    doc["pairwise_features"] = std::move(pf);

    doc["w_unary"] = weights.unary_flat();
    doc["w_pairwise"] = weights.pairwise_flat();
    return doc.dump();
}

std::pair<GridModel, Weights> model_from_json(const std::string& text) {
    const json doc = json::parse(text);
    if (!doc.contains("version") || doc.at("version").get<int>() != 1)
        throw std::invalid_argument("model document: unsupported version");

    const int height = doc.at("height").get<int>();
    const int width = doc.at("width").get<int>();
    const int K = doc.at("num_labels").get<int>();
    const int d_u = doc.at("d_unary").get<int>();
    const int d_p = doc.at("d_pairwise").get<int>();

    GridModel model(height, width, K, d_u, d_p);
    const auto uf = doc.at("unary_features").get<std::vector<double>>();
    if (uf.size() != static_cast<size_t>(model.num_nodes()) * d_u)
        throw std::invalid_argument("model document: unary_features size mismatch");
    for (int n = 0; n < model.num_nodes(); ++n) {
        auto dst = model.unary_features(n);
        for (int k = 0; k < d_u; ++k) dst[static_cast<size_t>(k)] = uf[static_cast<size_t>(n) * d_u + k];
    }
    const auto pf = doc.at("pairwise_features").get<std::vector<double>>();
    if (pf.size() != static_cast<size_t>(model.num_edges()) * d_p)
        throw std::invalid_argument("model document: pairwise_features size mismatch");
    for (int e = 0; e < model.num_edges(); ++e) {
        auto dst = model.pairwise_features(e);
        for (int k = 0; k < d_p; ++k) dst[static_cast<size_t>(k)] = pf[static_cast<size_t>(e) * d_p + k];
    }

    Weights weights(K, d_u, d_p, doc.at("symmetric_pairwise").get<bool>());
    auto wu = doc.at("w_unary").get<std::vector<double>>();
    auto wp = doc.at("w_pairwise").get<std::vector<double>>();
    if (wu.size() != weights.unary_flat().size() || wp.size() != weights.pairwise_flat().size())
        throw std::invalid_argument("model document: weight size mismatch");
    weights.unary_flat() = std::move(wu);
    weights.pairwise_flat() = std::move(wp);

    model.validate();
    weights.validate();
    return {std::move(model), std::move(weights)};
}

void save_model(const std::filesystem::path& path, const GridModel& model,
                const Weights& weights) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << model_to_json(model, weights) << '\n';
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::pair<GridModel, Weights> load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return model_from_json(text);
}

} // namespace gridcrf
