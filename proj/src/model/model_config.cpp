#include "win/model_config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "win/errors.hpp"

namespace win {

using nlohmann::json;

std::size_t ModelConfig::total_blocks() const {
    std::size_t n = 0;
    for (auto d : depths) n += d;
    return n;
}

double ModelConfig::drop_path_rate(std::size_t global_block) const {
    const std::size_t n = total_blocks();
    if (n <= 1) return 0.0;
    return drop_path_max * static_cast<double>(global_block) / static_cast<double>(n - 1);
}

BlockConfig ModelConfig::block_config(std::size_t stage, std::size_t block, std::size_t map_h,
                                      std::size_t map_w) const {
    BlockConfig b;
    b.channels = stage_channels(stage);
    b.heads = heads.at(stage);
    b.window = window;
    b.mlp_ratio = mlp_ratio;
    b.conv_kernel = conv_kernel;
    b.conv_placement = conv_placement;
    b.conv_skip = conv_skip;
    b.pe_mode = pe_mode;
    b.shifted = shifted && block % 2 == 1 && std::min(map_h, map_w) > window;
    std::size_t global = block;
    for (std::size_t s = 0; s < stage; ++s) global += depths[s];
    b.drop_path_rate = drop_path_rate(global);
    return b;
}

void ModelConfig::validate() const {
    if (depths.empty()) throw ConfigError("depths must name at least one stage");
    if (heads.size() != depths.size()) {
        throw ConfigError("heads has " + std::to_string(heads.size()) + " entries but depths has " +
                          std::to_string(depths.size()));
    }
    for (auto d : depths)
        if (d == 0) throw ConfigError("every stage needs at least one block");
    if (base_channels == 0) throw ConfigError("base_channels must be positive");
    if (num_classes == 0) throw ConfigError("num_classes must be positive");
    if (!(drop_path_max >= 0.0 && drop_path_max < 1.0)) {
        throw ConfigError("drop_path_max must lie in [0, 1), got " + std::to_string(drop_path_max));
    }
    for (std::size_t s = 0; s < depths.size(); ++s) {
        try {
            block_config(s, 0, 0, 0).validate();
        } catch (const ConfigError& e) {
            throw ConfigError("stage " + std::to_string(s + 1) + ": " + e.what());
        }
    }
}

void ModelConfig::check_geometry(std::size_t h, std::size_t w) const {
    if (h == 0 || w == 0 || h % 4 != 0 || w % 4 != 0) {
        throw GeometryError("input " + std::to_string(h) + "x" + std::to_string(w) +
                            " is not divisible into 4x4 patches");
    }
    std::size_t mh = h / 4, mw = w / 4;
    for (std::size_t s = 0; s < depths.size(); ++s) {
        if (s > 0) {
            if (mh % 2 != 0 || mw % 2 != 0) {
                throw GeometryError("stage " + std::to_string(s + 1) + ": cannot merge a " + std::to_string(mh) +
                                    "x" + std::to_string(mw) + " map (odd extent) for input " +
                                    std::to_string(h) + "x" + std::to_string(w));
            }
            mh /= 2;
            mw /= 2;
        }
        if (mh % window != 0 || mw % window != 0) {
            throw GeometryError("stage " + std::to_string(s + 1) + ": " + std::to_string(mh) + "x" +
                                std::to_string(mw) + " map is not divisible into " + std::to_string(window) +
                                "x" + std::to_string(window) + " windows for input " + std::to_string(h) + "x" +
                                std::to_string(w));
        }
    }
}

bool is_preset(std::string_view name) {
    return name == "win_t" || name == "win-t" || name == "win_s" || name == "win-s" || name == "win_b" ||
           name == "win-b" || name == "tiny";
}

ModelConfig preset(std::string_view name) {
    ModelConfig c;
    if (name == "win_t" || name == "win-t") return c;
    if (name == "win_s" || name == "win-s") {
        c.name = "win_s";
        c.depths = {2, 2, 18, 2};
        c.drop_path_max = 0.3;
        return c;
    }
    if (name == "win_b" || name == "win-b") {
        c.name = "win_b";
        c.base_channels = 128;
        c.depths = {2, 2, 18, 2};
        c.heads = {4, 8, 16, 32};
        c.drop_path_max = 0.5;
        return c;
    }
    if (name == "tiny") {
        c.name = "tiny";
        c.input_h = c.input_w = 32;
        c.base_channels = 16;
        c.depths = {2, 2};
        c.heads = {2, 4};
        c.window = 4;
        c.drop_path_max = 0.0;
        c.num_classes = 4;
        return c;
    }
    throw ConfigError("unknown model preset '" + std::string(name) + "' (expected win-t|win-s|win-b|tiny)");
}

namespace {

template <typename V>
V get_as(const json& j, const char* key) {
    try {
        return j.get<V>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("model config key '") + key + "' has the wrong type: " + j.dump());
    }
}

std::size_t get_count(const json& j, const char* key) {
    if (!j.is_number_integer() || j.get<long long>() < 0) {
        throw ConfigError(std::string("model config key '") + key + "' must be a non-negative integer, got " +
                          j.dump());
    }
    return j.get<std::size_t>();
}

std::vector<std::size_t> get_counts(const json& j, const char* key) {
    if (!j.is_array()) throw ConfigError(std::string("model config key '") + key + "' must be an array");
    std::vector<std::size_t> out;
    for (const auto& v : j) out.push_back(get_count(v, key));
    return out;
}

}  // namespace

ModelConfig model_config_from_json(std::string_view text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("model config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("model config must be a JSON object");

    ModelConfig c;
    if (j.contains("name")) {
        const auto name = get_as<std::string>(j["name"], "name");
        if (is_preset(name)) c = preset(name);
        c.name = name;
    }
    for (const auto& [key, v] : j.items()) {
        if (key == "name") continue;
        if (key == "input_size") {
            if (v.is_array()) {
                auto hw = get_counts(v, "input_size");
                if (hw.size() != 2) throw ConfigError("input_size must be an integer or [H, W]");
                c.input_h = hw[0];
                c.input_w = hw[1];
            } else {
                c.input_h = c.input_w = get_count(v, "input_size");
            }
        } else if (key == "base_channels") {
            c.base_channels = get_count(v, "base_channels");
        } else if (key == "depths") {
            c.depths = get_counts(v, "depths");
        } else if (key == "heads") {
            c.heads = get_counts(v, "heads");
        } else if (key == "window") {
            c.window = get_count(v, "window");
        } else if (key == "mlp_ratio") {
            c.mlp_ratio = get_as<double>(v, "mlp_ratio");
        } else if (key == "conv_kernel") {
            c.conv_kernel = get_count(v, "conv_kernel");
        } else if (key == "conv_placement") {
            c.conv_placement = parse_conv_placement(get_as<std::string>(v, "conv_placement"));
        } else if (key == "conv_skip") {
            c.conv_skip = parse_conv_skip(get_as<std::string>(v, "conv_skip"));
        } else if (key == "pe_mode") {
            c.pe_mode = parse_pe_mode(get_as<std::string>(v, "pe_mode"));
        } else if (key == "shifted") {
            c.shifted = get_as<bool>(v, "shifted");
        } else if (key == "drop_path_max") {
            c.drop_path_max = get_as<double>(v, "drop_path_max");
        } else if (key == "num_classes") {
            c.num_classes = get_count(v, "num_classes");
        } else {
            throw ConfigError("unknown model config key '" + key + "'");
        }
    }
    c.validate();
    return c;
}

ModelConfig load_model_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open model config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return model_config_from_json(ss.str());
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

std::string to_json(const ModelConfig& c) {
    json j;
    j["name"] = c.name;
    j["input_size"] = {c.input_h, c.input_w};
    j["base_channels"] = c.base_channels;
    j["depths"] = c.depths;
    j["heads"] = c.heads;
    j["window"] = c.window;
    j["mlp_ratio"] = c.mlp_ratio;
    j["conv_kernel"] = c.conv_kernel;
    j["conv_placement"] = std::string(to_string(c.conv_placement));
    j["conv_skip"] = std::string(to_string(c.conv_skip));
    j["pe_mode"] = std::string(to_string(c.pe_mode));
    j["shifted"] = c.shifted;
    j["drop_path_max"] = c.drop_path_max;
    j["num_classes"] = c.num_classes;
    return j.dump(2);
}

}  // namespace win
