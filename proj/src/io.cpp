#include "s4c/io.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

#include "s4c/errors.hpp"

namespace s4c {

using nlohmann::json;

std::vector<int> encode_bytes(std::string_view bytes) {
    std::vector<int> out;
    out.reserve(bytes.size());
    for (unsigned char c : bytes) out.push_back(static_cast<int>(c) + 1);
    return out;
}

std::string decode_tokens(std::span<const int> tokens) {
    std::string out;
    out.reserve(tokens.size());
    for (int t : tokens) {
        if (t == kEotToken) break;
        if (t < 1 || t > 256) throw ArgError("decode: token outside byte range");
        out.push_back(static_cast<char>(t - 1));
    }
    return out;
}

std::string read_text_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    if (f.bad()) throw IoError("read failed: " + path);
    return ss.str();
}

void write_text_file(const std::string& path, std::string_view content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open file for writing: " + path);
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) throw IoError("write failed: " + path);
}

std::vector<int> load_corpus(const std::string& path) {
    return encode_bytes(read_text_file(path));
}

std::vector<std::vector<int>> load_prompt_tokens(const std::string& path) {
    json doc;
    try {
        doc = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw IoError("prompt file is not valid JSON: " + path + ": " + e.what());
    }
    if (!doc.is_array()) throw IoError("prompt file must hold a JSON list: " + path);
    std::vector<std::vector<int>> out;
    out.reserve(doc.size());
    for (const json& item : doc) {
        if (item.is_string()) {
            out.push_back(encode_bytes(item.get<std::string>()));
        } else if (item.is_array()) {
            std::vector<int> toks;
            for (const json& t : item) {
                if (!t.is_number_integer())
                    throw IoError("prompt token list must hold integers: " + path);
                toks.push_back(t.get<int>());
            }
            out.push_back(std::move(toks));
        } else {
            throw IoError("prompt entries must be strings or token lists: " + path);
        }
        if (out.back().empty()) throw IoError("empty prompt in " + path);
    }
    return out;
}

TrainConfig parse_train_config(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ArgError(std::string("train config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ArgError("train config must be a JSON object");
    TrainConfig cfg;
    for (auto& [key, value] : doc.items()) {
        if (key == "epochs") cfg.epochs = value.get<int>();
        else if (key == "lr") cfg.lr = value.get<double>();
        else if (key == "momentum") cfg.momentum = value.get<double>();
        else if (key == "window") cfg.window = value.get<int>();
        else if (key == "seed") cfg.seed = value.get<uint64_t>();
        else if (key == "weights") {
            if (!value.is_array() || value.size() != 3)
                throw ArgError("train config: weights must be [w1, w2, w3]");
            cfg.w1 = value[0].get<double>();
            cfg.w2 = value[1].get<double>();
            cfg.w3 = value[2].get<double>();
        } else {
            throw ArgError("train config: unknown key '" + key + "'");
        }
    }
    cfg.validate();
    return cfg;
}

} // namespace s4c
