#include "llmcipher/network.hpp"

#include "llmcipher/base64.hpp"

namespace llmcipher {

using nlohmann::json;

json layers_to_json(const DenseNetwork<float>& net) {
    json layers = json::array();
    for (const auto& l : net.layers()) {
        layers.push_back({
            {"w_b64", base64::encode_f32({l.weight.data(), static_cast<std::size_t>(l.weight.size())})},
            {"b_b64", base64::encode_f32({l.bias.data(), static_cast<std::size_t>(l.bias.size())})},
        });
    }
    return layers;
}

DenseNetwork<float> layers_from_json(const std::vector<std::size_t>& dims, const json& layers) {
    DenseNetwork<float> net(dims);
    if (!layers.is_array() || layers.size() != net.layer_count())
        throw FormatError("artifact declares " + std::to_string(net.layer_count()) + " layers but stores " +
                          std::to_string(layers.is_array() ? layers.size() : 0));
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        const auto& entry = layers[l];
        if (!entry.contains("w_b64") || !entry.contains("b_b64") || !entry["w_b64"].is_string() ||
            !entry["b_b64"].is_string())
            throw FormatError("layer " + std::to_string(l) + " lacks w_b64/b_b64");
        const auto w = base64::decode_f32(entry["w_b64"].get<std::string>());
        const auto b = base64::decode_f32(entry["b_b64"].get<std::string>());
        auto& layer = net.layers()[l];
        if (w.size() != static_cast<std::size_t>(layer.weight.size()) ||
            b.size() != static_cast<std::size_t>(layer.bias.size()))
            throw FormatError("layer " + std::to_string(l) + " payload does not match layer_dims");
        std::copy(w.begin(), w.end(), layer.weight.data());
        std::copy(b.begin(), b.end(), layer.bias.data());
    }
    if (!net.parameters_finite()) throw DataError("artifact contains non-finite parameters");
    return net;
}

}  // namespace llmcipher
