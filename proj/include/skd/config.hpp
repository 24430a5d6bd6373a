#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "skd/errors.hpp"
#include "skd/synthetic.hpp"

namespace skd {

// key = value configuration, '#' starts a comment, blank lines ignored
using KeyValues = std::vector<std::pair<std::string, std::string>>;

namespace detail {

inline std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t");
    return s.substr(begin, end - begin + 1);
}

}  // namespace detail

inline KeyValues parse_key_values(std::istream& in) {
    KeyValues out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
        out.emplace_back(key, value);
    }
    return out;
}

inline KeyValues load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IOFailure("cannot open config '" + path + "'");
    return parse_key_values(in);
}

struct ExperimentConfig {
    // dataset: "synthetic" or a directory holding pairs.csv + scan files
    std::string dataset = "synthetic";
    int pairs = 20;

    // scene generation (synthetic dataset)
    int scene_planes = 2;
    int scene_boxes = 2;
    int scene_poles = 2;
    int scene_points_per_primitive = 200;
    double scene_extent = 30.0;
    double noise_sigma = 0.02;
    double max_rotation_deg = 10.0;
    double max_translation_m = 2.0;

    // detection
    std::vector<std::string> detectors = {"skd", "random"};
    std::vector<int> k_values = {128, 256};
    int saliency_layer = 4;
    int neighborhood_k = 8;
    std::string checkpoint;  // required when detectors include "skd"
    double elf_nms_radius = 0.5;
    int elf_bins = 32;

    // metric parameters
    double tau = 0.5;
    double epsilon = 0.5;
    double overlap_radius = 0.5;
    double inlier_threshold = 0.5;
    double confidence = 0.99;
    int max_iterations = 10000;

    // training
    int train_pairs = 12;
    int epochs = 250;
    double learning_rate = 0.05;
    double momentum = 0.9;
    double pca_target = 0.9;
    int pretrain_epochs = 0;
    double pretrain_learning_rate = 0.02;

    std::uint64_t seed = 7;
    std::string output_dir = "out";

    SceneConfig scene_config(std::uint64_t pair_seed) const {
        SceneConfig s;
        s.seed = pair_seed;
        s.planes = scene_planes;
        s.boxes = scene_boxes;
        s.poles = scene_poles;
        s.points_per_primitive = scene_points_per_primitive;
        s.extent_m = scene_extent;
        s.noise_sigma = noise_sigma;
        s.max_rotation_deg = max_rotation_deg;
        s.max_translation_m = max_translation_m;
        return s;
    }

    static ExperimentConfig from_key_values(const KeyValues& kv);
    static ExperimentConfig from_file(const std::string& path) {
        return from_key_values(load_config_file(path));
    }
    KeyValues to_key_values() const;
};

namespace detail {

inline int parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': bad integer '" + value + "'");
    }
}

inline double parse_real(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': bad number '" + value + "'");
    }
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const std::uint64_t v = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': bad unsigned integer '" + value + "'");
    }
}

inline std::vector<std::string> parse_list(const std::string& value) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream ss(value);
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

}  // namespace detail

inline ExperimentConfig ExperimentConfig::from_key_values(const KeyValues& kv) {
    ExperimentConfig cfg;
    for (const auto& [key, value] : kv) {
        if (key == "dataset") cfg.dataset = value;
        else if (key == "pairs") cfg.pairs = detail::parse_int(key, value);
        else if (key == "scene_planes") cfg.scene_planes = detail::parse_int(key, value);
        else if (key == "scene_boxes") cfg.scene_boxes = detail::parse_int(key, value);
        else if (key == "scene_poles") cfg.scene_poles = detail::parse_int(key, value);
        else if (key == "scene_points_per_primitive") cfg.scene_points_per_primitive = detail::parse_int(key, value);
        else if (key == "scene_extent") cfg.scene_extent = detail::parse_real(key, value);
        else if (key == "noise_sigma") cfg.noise_sigma = detail::parse_real(key, value);
        else if (key == "max_rotation_deg") cfg.max_rotation_deg = detail::parse_real(key, value);
        else if (key == "max_translation_m") cfg.max_translation_m = detail::parse_real(key, value);
        else if (key == "detectors") cfg.detectors = detail::parse_list(value);
        else if (key == "k_values") {
            cfg.k_values.clear();
            for (const std::string& item : detail::parse_list(value))
                cfg.k_values.push_back(detail::parse_int(key, item));
        }
        else if (key == "saliency_layer") cfg.saliency_layer = detail::parse_int(key, value);
        else if (key == "neighborhood_k") cfg.neighborhood_k = detail::parse_int(key, value);
        else if (key == "checkpoint") cfg.checkpoint = value;
        else if (key == "elf_nms_radius") cfg.elf_nms_radius = detail::parse_real(key, value);
        else if (key == "elf_bins") cfg.elf_bins = detail::parse_int(key, value);
        else if (key == "tau") cfg.tau = detail::parse_real(key, value);
        else if (key == "epsilon") cfg.epsilon = detail::parse_real(key, value);
        else if (key == "overlap_radius") cfg.overlap_radius = detail::parse_real(key, value);
        else if (key == "inlier_threshold") cfg.inlier_threshold = detail::parse_real(key, value);
        else if (key == "confidence") cfg.confidence = detail::parse_real(key, value);
        else if (key == "max_iterations") cfg.max_iterations = detail::parse_int(key, value);
        else if (key == "train_pairs") cfg.train_pairs = detail::parse_int(key, value);
        else if (key == "epochs") cfg.epochs = detail::parse_int(key, value);
        else if (key == "learning_rate") cfg.learning_rate = detail::parse_real(key, value);
        else if (key == "momentum") cfg.momentum = detail::parse_real(key, value);
        else if (key == "pca_target") cfg.pca_target = detail::parse_real(key, value);
        else if (key == "pretrain_epochs") cfg.pretrain_epochs = detail::parse_int(key, value);
        else if (key == "pretrain_learning_rate") cfg.pretrain_learning_rate = detail::parse_real(key, value);
        else if (key == "seed") cfg.seed = detail::parse_u64(key, value);
        else if (key == "output_dir") cfg.output_dir = value;
        else throw ConfigError("unknown key '" + key + "'");
    }
    if (cfg.pairs < 1) throw ConfigError("pairs must be >= 1");
    if (cfg.k_values.empty()) throw ConfigError("k_values must not be empty");
    for (int k : cfg.k_values)
        if (k < 1) throw ConfigError("k_values entries must be >= 1");
    if (cfg.detectors.empty()) throw ConfigError("detectors must not be empty");
    for (const std::string& d : cfg.detectors)
        if (d != "skd" && d != "random" && d != "elf")
            throw ConfigError("unknown detector '" + d + "' (expected skd, random or elf)");
    return cfg;
}

inline KeyValues ExperimentConfig::to_key_values() const {
    KeyValues kv;
    auto add = [&kv](const std::string& k, const std::string& v) { kv.emplace_back(k, v); };
    add("dataset", dataset);
    add("pairs", std::to_string(pairs));
    add("scene_planes", std::to_string(scene_planes));
    add("scene_boxes", std::to_string(scene_boxes));
    add("scene_poles", std::to_string(scene_poles));
    add("scene_points_per_primitive", std::to_string(scene_points_per_primitive));
    auto add_real = [&](const std::string& k, double v) {
        std::ostringstream ss;
        ss << v;
        kv.emplace_back(k, ss.str());
    };
    add_real("scene_extent", scene_extent);
    add_real("noise_sigma", noise_sigma);
    add_real("max_rotation_deg", max_rotation_deg);
    add_real("max_translation_m", max_translation_m);
    std::string det;
    for (std::size_t i = 0; i < detectors.size(); ++i) det += (i ? "," : "") + detectors[i];
    add("detectors", det);
    std::string ks;
    for (std::size_t i = 0; i < k_values.size(); ++i) ks += (i ? "," : "") + std::to_string(k_values[i]);
    add("k_values", ks);
    add("saliency_layer", std::to_string(saliency_layer));
    add("neighborhood_k", std::to_string(neighborhood_k));
    add("checkpoint", checkpoint);
    add_real("elf_nms_radius", elf_nms_radius);
    add("elf_bins", std::to_string(elf_bins));
    add_real("tau", tau);
    add_real("epsilon", epsilon);
    add_real("overlap_radius", overlap_radius);
    add_real("inlier_threshold", inlier_threshold);
    add_real("confidence", confidence);
    add("max_iterations", std::to_string(max_iterations));
    add("train_pairs", std::to_string(train_pairs));
    add("epochs", std::to_string(epochs));
    add_real("learning_rate", learning_rate);
    add_real("momentum", momentum);
    add_real("pca_target", pca_target);
    add("pretrain_epochs", std::to_string(pretrain_epochs));
    add_real("pretrain_learning_rate", pretrain_learning_rate);
    add("seed", std::to_string(seed));
    add("output_dir", output_dir);
    return kv;
}

}  // namespace skd
