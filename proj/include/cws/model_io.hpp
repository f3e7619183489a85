#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "cws/data_io.hpp"
#include "cws/error.hpp"
#include "cws/model.hpp"

namespace cws {

namespace detail {

inline nlohmann::json matrix_json(Matrix const& m)
{
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"values", std::vector<double>(m.values().begin(), m.values().end())}};
}

inline Matrix matrix_from_json(nlohmann::json const& j)
{
    Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
    auto const values = j.at("values").get<std::vector<double>>();
    if (values.size() != m.size()) {
        throw ValidationError("matrix value count does not match its shape");
    }
    std::copy(values.begin(), values.end(), m.values().begin());
    return m;
}

inline std::string activation_name(Activation a)
{
    switch (a) {
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::softmax: return "softmax";
    case Activation::identity: return "identity";
    }
    return "identity";
}

inline Activation activation_from_name(std::string const& name)
{
    for (auto a : {Activation::relu, Activation::sigmoid, Activation::softmax, Activation::identity}) {
        if (activation_name(a) == name) {
            return a;
        }
    }
    throw ValidationError("unknown activation '" + name + "'");
}

inline nlohmann::json layers_json(std::vector<DenseLayer> const& layers)
{
    auto out = nlohmann::json::array();
    for (auto const& l : layers) {
        out.push_back({{"weights", matrix_json(l.weights)}, {"bias", l.bias}, {"activation", activation_name(l.activation)}});
    }
    return out;
}

inline std::vector<DenseLayer> layers_from_json(nlohmann::json const& j)
{
    std::vector<DenseLayer> out;
    for (auto const& l : j) {
        out.push_back({matrix_from_json(l.at("weights")), l.at("bias").get<Vector>(),
                       activation_from_name(l.at("activation").get<std::string>())});
    }
    return out;
}

}  // namespace detail

/// Parameters only; optimizer state is not saved.
inline nlohmann::json model_to_json(ModelParameters const& p)
{
    nlohmann::json j;
    j["task"] = to_string(p.task);
    j["embedding"] = detail::matrix_json(p.embedding.vectors);
    j["unk_index"] = p.embedding.unk_index;
    j["pad_index"] = p.embedding.pad_index ? nlohmann::json(*p.embedding.pad_index) : nlohmann::json();
    j["term_weights"] = p.term_weights.weights;
    auto filters = nlohmann::json::array();
    for (auto const& f : p.conv.filters) {
        filters.push_back(detail::matrix_json(f));
    }
    j["conv"] = {{"filters", filters}, {"bias", p.conv.bias}};
    j["supervision"] = detail::layers_json(p.supervision);
    j["confidence"] = detail::layers_json(p.confidence);
    return j;
}

inline ModelParameters model_from_json(nlohmann::json const& j)
{
    try {
        ModelParameters p;
        auto const task = j.at("task").get<std::string>();
        if (task != "ranking" && task != "sentiment") {
            throw ValidationError("unknown task '" + task + "'");
        }
        p.task = task == "ranking" ? TaskKind::ranking : TaskKind::sentiment;
        p.embedding.vectors = detail::matrix_from_json(j.at("embedding"));
        p.embedding.unk_index = j.at("unk_index").get<TokenId>();
        if (!j.at("pad_index").is_null()) {
            p.embedding.pad_index = j.at("pad_index").get<TokenId>();
        }
        p.term_weights.weights = j.at("term_weights").get<Vector>();
        for (auto const& f : j.at("conv").at("filters")) {
            p.conv.filters.push_back(detail::matrix_from_json(f));
        }
        p.conv.bias = j.at("conv").at("bias").get<Vector>();
        p.supervision = detail::layers_from_json(j.at("supervision"));
        p.confidence = detail::layers_from_json(j.at("confidence"));
        return p;
    } catch (nlohmann::json::exception const& e) {
        throw ValidationError(std::string("malformed model file: ") + e.what());
    }
}

inline void save_model(ModelParameters const& p, std::string const& path)
{
    auto out = open_output(path);
    out << model_to_json(p).dump() << '\n';
}

inline ModelParameters load_model(std::string const& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open '" + path + "'");
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (nlohmann::json::exception const& e) {
        throw ParseError(path, 1, e.what());
    }
    return model_from_json(j);
}

}  // namespace cws
