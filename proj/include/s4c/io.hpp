#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "s4c/train.hpp"

namespace s4c {

// Byte-level codec: byte b maps to token b + 1; token 0 is the end-of-text id.
constexpr int kEotToken = 0;

std::vector<int> encode_bytes(std::string_view bytes);
// Inverse mapping; stops at the first end-of-text token.
std::string decode_tokens(std::span<const int> tokens);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view content);

// Raw corpus bytes tokenized with the byte codec.
std::vector<int> load_corpus(const std::string& path);

// JSON list whose elements are strings (byte-encoded) or arrays of token ids.
std::vector<std::vector<int>> load_prompt_tokens(const std::string& path);

// {epochs, lr, momentum, weights: [w1, w2, w3], window, seed}; all keys
// optional, unknown keys rejected.
TrainConfig parse_train_config(const std::string& text);

} // namespace s4c
