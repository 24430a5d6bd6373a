// Command-line front end: dataset synthesis, detector training, keypoint
// detection and the three evaluation metrics, all driven by key=value
// config files (see README for the key list and file formats).

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "skd/skd.hpp"

namespace fs = std::filesystem;

namespace {

skd::ExperimentConfig load_cfg(const std::string& path) {
    return skd::ExperimentConfig::from_file(path);
}

skd::SkdDetector load_detector_or_seeded(const std::string& checkpoint, std::uint64_t seed, int k,
                                         int layer) {
    if (!checkpoint.empty()) return skd::detector_from_checkpoint(skd::load_checkpoint(checkpoint));
    // no trained head available: descriptor-only detector for elf/random use
    skd::SkdDetector det;
    det.descriptor = skd::DescriptorModel::seeded(seed, k);
    det.saliency_layer = layer;
    return det;
}

skd::KeypointSet run_detect(const skd::SkdDetector& det, const std::string& method,
                            const skd::PointCloud& cloud, int K, double nms_radius, int bins,
                            std::uint64_t seed, int layer) {
    const int capped = std::min(K, cloud.size());
    if (method == "skd") return skd::detect_topk(det, cloud, capped);
    if (method == "random") return skd::random_detect(cloud, capped, seed);
    if (method == "elf") {
        const skd::InputGradient grads = skd::input_gradient(det.descriptor, cloud, layer);
        skd::KeypointSet kp = skd::elf3d_detect(grads, cloud, nms_radius, bins);
        if (kp.size() > capped) {
            kp.indices.resize(static_cast<std::size_t>(capped));
            kp.scores.resize(static_cast<std::size_t>(capped));
        }
        return kp;
    }
    throw skd::ConfigError("unknown method '" + method + "' (expected skd, random or elf)");
}

Eigen::MatrixXd keypoint_descriptors(const skd::SkdDetector& det, const skd::PointCloud& cloud,
                                     const skd::KeypointSet& kp) {
    const Eigen::MatrixXd features = skd::describe(det.descriptor, cloud);
    Eigen::MatrixXd out(kp.size(), features.cols());
    for (int i = 0; i < kp.size(); ++i) out.row(i) = features.row(kp.indices[static_cast<std::size_t>(i)]);
    return out;
}

int cmd_synth(const std::string& config_path, const std::string& out_dir_flag, int pairs_flag,
              const std::string& format) {
    skd::ExperimentConfig cfg = config_path.empty() ? skd::ExperimentConfig{} : load_cfg(config_path);
    const std::string out_dir = out_dir_flag.empty() ? cfg.output_dir : out_dir_flag;
    const int n_pairs = pairs_flag > 0 ? pairs_flag : cfg.pairs;
    fs::create_directories(out_dir);

    skd::CsvTable manifest{{"cloud_a", "cloud_b", "r00", "r01", "r02", "r10", "r11", "r12", "r20", "r21",
                            "r22", "tx", "ty", "tz"},
                           {}};
    for (int i = 0; i < n_pairs; ++i) {
        const skd::TrainingPair pair =
            skd::gen_synthetic_pair(cfg.scene_config(skd::pair_seed(cfg.seed, skd::kEvalSeedStream, i)));
        char stem[32];
        std::snprintf(stem, sizeof(stem), "pair_%04d", i);
        const std::string ext = format == "bin" ? ".bin" : ".ply";
        const std::string name_a = std::string(stem) + "_a" + ext;
        const std::string name_b = std::string(stem) + "_b" + ext;
        if (format == "bin") {
            skd::save_lidar_bin((fs::path(out_dir) / name_a).string(), pair.cloud_k);
            skd::save_lidar_bin((fs::path(out_dir) / name_b).string(), pair.cloud_l);
        } else {
            skd::save_ply_ascii((fs::path(out_dir) / name_a).string(), pair.cloud_k);
            skd::save_ply_ascii((fs::path(out_dir) / name_b).string(), pair.cloud_l);
        }
        skd::save_transform((fs::path(out_dir) / (std::string(stem) + "_truth.txt")).string(), pair.truth);
        std::vector<std::string> row{name_a, name_b};
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) row.push_back(skd::format_double(pair.truth.rotation(r, c)));
        for (int r = 0; r < 3; ++r) row.push_back(skd::format_double(pair.truth.translation(r)));
        manifest.rows.push_back(std::move(row));
    }
    skd::write_csv((fs::path(out_dir) / "pairs.csv").string(), manifest);
    std::cout << "wrote " << n_pairs << " pairs to " << out_dir << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_flag) {
    const skd::ExperimentConfig cfg = load_cfg(config_path);
    std::vector<double> trace;
    const skd::SkdDetector det = skd::train_from_config(cfg, &trace);

    fs::create_directories(cfg.output_dir);
    const std::string ckpt_path =
        !out_flag.empty() ? out_flag
                          : (!cfg.checkpoint.empty() ? cfg.checkpoint
                                                     : (fs::path(cfg.output_dir) / "detector.ckpt").string());
    skd::save_checkpoint(ckpt_path, skd::to_checkpoint(det));

    skd::CsvTable loss{{"epoch", "loss"}, {}};
    for (std::size_t e = 0; e < trace.size(); ++e)
        loss.rows.push_back({std::to_string(e + 1), skd::format_double(trace[e])});
    skd::write_csv((fs::path(cfg.output_dir) / "loss_trace.csv").string(), loss);

    std::cout << "checkpoint: " << ckpt_path << "\n";
    if (!trace.empty())
        std::cout << "loss: " << skd::format_double(trace.front()) << " -> "
                  << skd::format_double(trace.back()) << " over " << trace.size() << " epochs\n";
    return 0;
}

int cmd_detect(const std::string& checkpoint, const std::string& cloud_path, const std::string& method,
               int K, const std::string& out_path, double nms_radius, int bins, std::uint64_t seed,
               int layer, int k_neighbors) {
    const skd::PointCloud cloud = skd::load_cloud(cloud_path);
    const skd::SkdDetector det = load_detector_or_seeded(checkpoint, seed, k_neighbors, layer);
    if (method == "skd" && checkpoint.empty())
        throw skd::ConfigError("method 'skd' requires --checkpoint");
    const skd::KeypointSet kp = run_detect(det, method, cloud, K, nms_radius, bins, seed, det.saliency_layer);

    skd::CsvTable table{{"rank", "index", "score", "x", "y", "z"}, {}};
    for (int i = 0; i < kp.size(); ++i) {
        const skd::Point3& p = cloud[kp.indices[static_cast<std::size_t>(i)]];
        table.rows.push_back({std::to_string(i), std::to_string(kp.indices[static_cast<std::size_t>(i)]),
                              skd::format_double(kp.scores[static_cast<std::size_t>(i)]),
                              skd::format_double(p.x), skd::format_double(p.y), skd::format_double(p.z)});
    }
    if (out_path.empty())
        std::cout << skd::csv_to_string(table);
    else
        skd::write_csv(out_path, table);
    return 0;
}

struct PairArgs {
    std::string cloud_a, cloud_b, truth;
    std::string checkpoint, method = "skd";
    int K = 256;
    std::uint64_t seed = 7;
    int layer = 4, k_neighbors = 8;
    double nms_radius = 0.5;
    int bins = 32;
};

struct LoadedPair {
    skd::PointCloud a, b;
    skd::RigidTransform truth;
    skd::SkdDetector det;
    skd::KeypointSet kp_a, kp_b;
    Eigen::MatrixXd desc_a, desc_b;
};

LoadedPair prepare_pair(const PairArgs& args) {
    LoadedPair lp;
    lp.a = skd::load_cloud(args.cloud_a);
    lp.b = skd::load_cloud(args.cloud_b);
    lp.truth = skd::load_transform(args.truth);
    lp.det = load_detector_or_seeded(args.checkpoint, args.seed, args.k_neighbors, args.layer);
    if (args.method == "skd" && args.checkpoint.empty())
        throw skd::ConfigError("method 'skd' requires --checkpoint");
    lp.kp_a = run_detect(lp.det, args.method, lp.a, args.K, args.nms_radius, args.bins, args.seed,
                         lp.det.saliency_layer);
    lp.kp_b = run_detect(lp.det, args.method, lp.b, args.K, args.nms_radius, args.bins, args.seed + 1,
                         lp.det.saliency_layer);
    lp.desc_a = keypoint_descriptors(lp.det, lp.a, lp.kp_a);
    lp.desc_b = keypoint_descriptors(lp.det, lp.b, lp.kp_b);
    return lp;
}

void emit(const skd::CsvTable& table, const std::string& out_path) {
    if (out_path.empty())
        std::cout << skd::csv_to_string(table);
    else
        skd::write_csv(out_path, table);
}

int cmd_eval_matching(const PairArgs& args, double overlap_radius, const std::string& out_path) {
    const LoadedPair lp = prepare_pair(args);
    const skd::MatchingScoreCurve curve =
        skd::matching_score(lp.a, lp.kp_a, lp.desc_a, lp.b, lp.kp_b, lp.desc_b, lp.truth, overlap_radius,
                            skd::default_distance_grid());
    skd::CsvTable table{{"method", "K", "d", "precision"}, {}};
    for (std::size_t g = 0; g < curve.distances.size(); ++g)
        table.rows.push_back({args.method, std::to_string(args.K), skd::format_double(curve.distances[g]),
                              skd::format_double(curve.precision[g])});
    emit(table, out_path);
    std::cerr << "evaluated=" << curve.n_evaluated << " ignored_no_overlap=" << curve.n_ignored_no_overlap
              << "\n";
    return 0;
}

int cmd_eval_repeatability(const PairArgs& args, double epsilon, const std::string& out_path) {
    const LoadedPair lp = prepare_pair(args);
    const skd::RepeatabilityResult r = skd::repeatability(lp.a, lp.kp_a, lp.b, lp.kp_b, lp.truth, epsilon);
    skd::CsvTable table{{"method", "K", "epsilon", "repeatability"},
                        {{args.method, std::to_string(r.K), skd::format_double(r.epsilon),
                          skd::format_double(r.repeatability)}}};
    emit(table, out_path);
    return 0;
}

int cmd_register(const PairArgs& args, double inlier_threshold, double confidence, int max_iterations,
                 const std::string& out_path) {
    const LoadedPair lp = prepare_pair(args);
    skd::RansacParams rp;
    rp.inlier_threshold = inlier_threshold;
    rp.confidence = confidence;
    rp.max_iterations = max_iterations;
    rp.seed = args.seed;
    const skd::RegistrationResult r =
        skd::ransac_register(lp.a, lp.kp_a, lp.desc_a, lp.b, lp.kp_b, lp.desc_b, lp.truth, rp);
    skd::CsvTable table{{"method", "rte", "rre", "success", "iterations", "inlier_ratio"},
                        {{args.method, skd::format_double(r.rte), skd::format_double(r.rre),
                          r.success ? "1" : "0", std::to_string(r.iterations),
                          skd::format_double(r.inlier_ratio)}}};
    emit(table, out_path);
    return 0;
}

int cmd_layers(const std::string& config_path, const std::string& out_path, int K) {
    const skd::ExperimentConfig cfg = load_cfg(config_path);
    const std::vector<skd::TrainingPair> pairs = skd::make_pairs(cfg, cfg.pairs, skd::kEvalSeedStream);
    const skd::DescriptorModel model = skd::DescriptorModel::seeded(cfg.seed, cfg.neighborhood_k);
    const auto table = skd::evaluate_layers(model, pairs, K > 0 ? K : cfg.k_values.front(),
                                            cfg.overlap_radius);
    skd::CsvTable csv{{"layer", "precision_at_1m"}, {}};
    for (const auto& row : table)
        csv.rows.push_back({std::to_string(row.layer), skd::format_double(row.precision_at_1m)});
    fs::create_directories(cfg.output_dir);
    emit(csv, out_path.empty() ? (fs::path(cfg.output_dir) / "layers.csv").string() : out_path);
    return 0;
}

int cmd_report(const std::string& config_path) {
    const skd::ExperimentConfig cfg = load_cfg(config_path);
    const skd::PipelineReport report = skd::run_pipeline(cfg);
    for (const std::string& f : report.files) std::cout << "wrote " << f << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SKD: saliency-driven keypoint detection for point clouds"};
    app.require_subcommand(1);

    // synth
    std::string synth_config, synth_out, synth_format = "ply";
    int synth_pairs = 0;
    auto* synth = app.add_subcommand("synth", "generate synthetic point-cloud pairs");
    synth->add_option("--config", synth_config, "key=value config file");
    synth->add_option("--out-dir", synth_out, "output directory (default: config output_dir)");
    synth->add_option("--pairs", synth_pairs, "number of pairs (default: config pairs)");
    synth->add_option("--format", synth_format, "cloud file format: ply or bin")
        ->check(CLI::IsMember({"ply", "bin"}));

    // train
    std::string train_config, train_out;
    auto* train = app.add_subcommand("train", "train the keypoint detector");
    train->add_option("--config", train_config, "key=value config file")->required();
    train->add_option("--out", train_out, "checkpoint output path");

    // shared detection options
    auto add_pair_args = [](CLI::App* cmd, PairArgs& args) {
        cmd->add_option("--cloud-a", args.cloud_a, "first cloud (.ply or .bin)")->required();
        cmd->add_option("--cloud-b", args.cloud_b, "second cloud (.ply or .bin)")->required();
        cmd->add_option("--truth", args.truth, "ground-truth transform file (12 numbers)")->required();
        cmd->add_option("--checkpoint", args.checkpoint, "trained detector checkpoint");
        cmd->add_option("--method", args.method, "skd, random or elf")
            ->check(CLI::IsMember({"skd", "random", "elf"}));
        cmd->add_option("--K", args.K, "number of keypoints");
        cmd->add_option("--seed", args.seed, "seed for the random baseline / RANSAC");
        cmd->add_option("--layer", args.layer, "saliency layer for elf without checkpoint");
        cmd->add_option("--neighborhood-k", args.k_neighbors, "descriptor neighborhood size");
        cmd->add_option("--nms-radius", args.nms_radius, "elf NMS radius, meters");
        cmd->add_option("--bins", args.bins, "elf histogram bins");
    };

    // detect
    std::string det_checkpoint, det_cloud, det_method = "skd", det_out;
    int det_K = 256, det_bins = 32, det_layer = 4, det_kn = 8;
    double det_nms = 0.5;
    std::uint64_t det_seed = 7;
    auto* detect = app.add_subcommand("detect", "detect keypoints in one cloud");
    detect->add_option("--checkpoint", det_checkpoint, "trained detector checkpoint");
    detect->add_option("--cloud", det_cloud, "input cloud (.ply or .bin)")->required();
    detect->add_option("--method", det_method, "skd, random or elf")
        ->check(CLI::IsMember({"skd", "random", "elf"}));
    detect->add_option("--K", det_K, "number of keypoints");
    detect->add_option("--out", det_out, "output CSV (default: stdout)");
    detect->add_option("--nms-radius", det_nms, "elf NMS radius, meters");
    detect->add_option("--bins", det_bins, "elf histogram bins");
    detect->add_option("--seed", det_seed, "seed for the random baseline");
    detect->add_option("--layer", det_layer, "saliency layer for elf without checkpoint");
    detect->add_option("--neighborhood-k", det_kn, "descriptor neighborhood size");

    // eval-matching
    PairArgs match_args;
    double match_overlap = 0.5;
    std::string match_out;
    auto* eval_matching = app.add_subcommand("eval-matching", "matching-score curve for a pair");
    add_pair_args(eval_matching, match_args);
    eval_matching->add_option("--overlap-radius", match_overlap, "overlap radius, meters");
    eval_matching->add_option("--out", match_out, "output CSV (default: stdout)");

    // eval-repeatability
    PairArgs rep_args;
    double rep_epsilon = 0.5;
    std::string rep_out;
    auto* eval_rep = app.add_subcommand("eval-repeatability", "relative repeatability for a pair");
    add_pair_args(eval_rep, rep_args);
    eval_rep->add_option("--epsilon", rep_epsilon, "match distance, meters");
    eval_rep->add_option("--out", rep_out, "output CSV (default: stdout)");

    // register
    PairArgs reg_args;
    double reg_thr = 0.5, reg_conf = 0.99;
    int reg_max_iter = 10000;
    std::string reg_out;
    auto* reg = app.add_subcommand("register", "RANSAC registration for a pair");
    add_pair_args(reg, reg_args);
    reg->add_option("--inlier-threshold", reg_thr, "inlier distance, meters");
    reg->add_option("--confidence", reg_conf, "RANSAC stopping confidence");
    reg->add_option("--max-iterations", reg_max_iter, "RANSAC iteration cap");
    reg->add_option("--out", reg_out, "output CSV (default: stdout)");

    // layers
    std::string layers_config, layers_out;
    int layers_K = 0;
    auto* layers = app.add_subcommand("layers", "per-layer saliency matching sweep");
    layers->add_option("--config", layers_config, "key=value config file")->required();
    layers->add_option("--out", layers_out, "output CSV");
    layers->add_option("--K", layers_K, "keypoints per cloud (default: first k_values entry)");

    // report
    std::string report_config;
    auto* report = app.add_subcommand("report", "full pipeline: detect + all metrics + CSV/JSON reports");
    report->add_option("--config", report_config, "key=value config file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return cmd_synth(synth_config, synth_out, synth_pairs, synth_format);
        if (train->parsed()) return cmd_train(train_config, train_out);
        if (detect->parsed())
            return cmd_detect(det_checkpoint, det_cloud, det_method, det_K, det_out, det_nms, det_bins,
                              det_seed, det_layer, det_kn);
        if (eval_matching->parsed()) return cmd_eval_matching(match_args, match_overlap, match_out);
        if (eval_rep->parsed()) return cmd_eval_repeatability(rep_args, rep_epsilon, rep_out);
        if (reg->parsed()) return cmd_register(reg_args, reg_thr, reg_conf, reg_max_iter, reg_out);
        if (layers->parsed()) return cmd_layers(layers_config, layers_out, layers_K);
        if (report->parsed()) return cmd_report(report_config);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
