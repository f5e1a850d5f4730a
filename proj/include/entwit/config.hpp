#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "entwit/errors.hpp"
#include "entwit/model.hpp"
#include "entwit/optimizer.hpp"

namespace entwit {

/// Everything a training run needs; parsed from a flat key=value text file
/// ('#' starts a comment). Unknown keys are rejected.
struct TrainConfig {
    int n_qubits = 2;
    int epochs = 50;
    int batch_size = 256;
    std::uint64_t seed = 1;
    LossWeights weights;
    OptimizerConfig opt;
    std::string train_data;
    std::string checkpoint_path = "model.ckpt";
    int threads = 0;  // 0 = hardware default
    bool train_discriminator = true;

    void validate() const {
        if (epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
        if (batch_size < 2) throw std::invalid_argument("config: batch_size must be >= 2");
        if (train_data.empty()) throw std::invalid_argument("config: train_data is required");
        if (!(weights.w1 >= 0) || !(weights.w2 >= 0) || !(weights.wa >= 0))
            throw std::invalid_argument("config: loss weights must be non-negative finite");
    }
};

inline TrainConfig parse_train_config(std::istream& in) {
    TrainConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto first = line.find_first_not_of(" \t\r\n");
        if (first == std::string::npos) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key=value");
        auto trim = [](std::string s) {
            auto a = s.find_first_not_of(" \t\r\n");
            auto b = s.find_last_not_of(" \t\r\n");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        try {
            if (key == "n_qubits") cfg.n_qubits = std::stoi(val);
            else if (key == "epochs") cfg.epochs = std::stoi(val);
            else if (key == "batch_size") cfg.batch_size = std::stoi(val);
            else if (key == "seed") cfg.seed = std::stoull(val);
            else if (key == "learning_rate") cfg.opt.learning_rate = std::stod(val);
            else if (key == "rmsprop_decay") cfg.opt.decay = std::stod(val);
            else if (key == "clip") cfg.opt.clip = std::stod(val);
            else if (key == "weight_clip") cfg.opt.weight_clip = (val == "1" || val == "true");
            else if (key == "weight_clip_value") cfg.opt.weight_clip_value = std::stod(val);
            else if (key == "w1") cfg.weights.w1 = std::stod(val);
            else if (key == "w2") cfg.weights.w2 = std::stod(val);
            else if (key == "wa") cfg.weights.wa = std::stod(val);
            else if (key == "train_data") cfg.train_data = val;
            else if (key == "checkpoint") cfg.checkpoint_path = val;
            else if (key == "threads") cfg.threads = std::stoi(val);
            else if (key == "train_discriminator")
                cfg.train_discriminator = (val == "1" || val == "true");
            else
                throw std::invalid_argument("config: unknown key '" + key + "'");
        } catch (const std::invalid_argument&) {
            throw;
        } catch (const std::exception&) {
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": bad value for " + key);
        }
    }
    return cfg;
}

inline TrainConfig load_train_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open config: " + path);
    return parse_train_config(in);
}

}  // namespace entwit
