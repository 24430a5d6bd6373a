#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "skd/baselines.hpp"
#include "skd/config.hpp"
#include "skd/detector.hpp"
#include "skd/evaluation.hpp"
#include "skd/io.hpp"
#include "skd/synthetic.hpp"

namespace skd {

// stream ids keep pair seeds disjoint between training and evaluation runs
constexpr std::uint64_t kTrainSeedStream = 1;
constexpr std::uint64_t kEvalSeedStream = 2;

inline std::uint64_t pair_seed(std::uint64_t base, std::uint64_t stream, int index) {
    return base * 1000000u + stream * 100000u + static_cast<std::uint64_t>(index);
}

// ---------------------------------------------------------------------------
// dataset assembly
// ---------------------------------------------------------------------------

inline std::vector<TrainingPair> load_pairs_from_directory(const std::string& dir, int limit) {
    namespace fs = std::filesystem;
    const std::string manifest = (fs::path(dir) / "pairs.csv").string();
    if (!fs::exists(manifest)) throw IOFailure("dataset manifest '" + manifest + "' not found");
    const CsvTable table = read_csv(manifest);
    const std::vector<std::string> expected = {"cloud_a", "cloud_b", "r00", "r01", "r02", "r10", "r11",
                                               "r12",     "r20",     "r21", "r22", "tx",  "ty",  "tz"};
    if (table.header != expected) throw MalformedFile("unexpected pairs.csv header in '" + manifest + "'");
    std::vector<TrainingPair> pairs;
    for (const auto& row : table.rows) {
        if (limit >= 0 && static_cast<int>(pairs.size()) >= limit) break;
        TrainingPair pair;
        pair.cloud_k = load_cloud((fs::path(dir) / row[0]).string());
        pair.cloud_l = load_cloud((fs::path(dir) / row[1]).string());
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c)
                pair.truth.rotation(r, c) = parse_double(row[static_cast<std::size_t>(2 + 3 * r + c)]);
        for (int r = 0; r < 3; ++r) pair.truth.translation(r) = parse_double(row[static_cast<std::size_t>(11 + r)]);
        if (!pair.truth.is_rigid(1e-6)) throw MalformedFile("pairs.csv row holds a non-rigid transform");
        pairs.push_back(std::move(pair));
    }
    if (pairs.empty()) throw MalformedFile("dataset manifest '" + manifest + "' lists no pairs");
    return pairs;
}

inline std::vector<TrainingPair> make_pairs(const ExperimentConfig& cfg, int count, std::uint64_t stream) {
    if (cfg.dataset == "synthetic") {
        std::vector<TrainingPair> pairs;
        pairs.reserve(static_cast<std::size_t>(count));
        for (int i = 0; i < count; ++i)
            pairs.push_back(gen_synthetic_pair(cfg.scene_config(pair_seed(cfg.seed, stream, i))));
        return pairs;
    }
    return load_pairs_from_directory(cfg.dataset, count);
}

// ---------------------------------------------------------------------------
// training driver
// ---------------------------------------------------------------------------

// Builds the full detector stack from a config: seeded frozen descriptor,
// PCA fitted on the training features, then end-to-end head + encoder
// training on ground-truth-labelled pairs.
inline SkdDetector train_from_config(const ExperimentConfig& cfg, std::vector<double>* loss_trace = nullptr) {
    const std::vector<TrainingPair> pairs = make_pairs(cfg, cfg.train_pairs, kTrainSeedStream);

    SkdDetector det;
    det.descriptor = DescriptorModel::seeded(cfg.seed, cfg.neighborhood_k);
    det.saliency_layer = cfg.saliency_layer;

    Eigen::Index total_rows = 0;
    std::vector<Eigen::MatrixXd> features;
    features.reserve(pairs.size() * 2);
    for (const TrainingPair& pair : pairs) {
        features.push_back(describe(det.descriptor, pair.cloud_k));
        features.push_back(describe(det.descriptor, pair.cloud_l));
        total_rows += features[features.size() - 2].rows() + features.back().rows();
    }
    Eigen::MatrixXd stacked(total_rows, det.descriptor.feature_dim());
    Eigen::Index at = 0;
    for (const Eigen::MatrixXd& f : features) {
        stacked.middleRows(at, f.rows()) = f;
        at += f.rows();
    }
    det.pca = fit_pca(stacked, cfg.pca_target);

    det.encoder = ContextEncoder::seeded(cfg.seed + 1, cfg.neighborhood_k);
    det.head = KeypointHead::seeded(cfg.seed + 2, 1 + det.pca.output_dim() + 2);

    TrainConfig tc;
    tc.epochs = cfg.epochs;
    tc.learning_rate = cfg.learning_rate;
    tc.momentum = cfg.momentum;
    tc.match_radius = cfg.tau;
    tc.pretrain_epochs = cfg.pretrain_epochs;
    tc.pretrain_learning_rate = cfg.pretrain_learning_rate;
    const std::vector<double> trace = train_detector(det, pairs, tc);
    if (loss_trace) *loss_trace = trace;
    return det;
}

// ---------------------------------------------------------------------------
// evaluation driver
// ---------------------------------------------------------------------------

struct MethodKReport {
    std::string method;
    int K = 0;
    std::vector<double> distances;
    std::vector<double> precision;  // pooled over pairs
    double precision_at_1m = 0.0;
    double repeatability = 0.0;  // mean over pairs
    RegistrationSummary registration;
};

struct PipelineReport {
    std::vector<MethodKReport> cells;  // one per (method, K)
    std::vector<std::string> files;    // written artifacts
};

namespace detail {

struct DetectionContext {
    const ExperimentConfig* cfg = nullptr;
    const SkdDetector* skd = nullptr;           // null unless "skd" configured
    const DescriptorModel* descriptor = nullptr;  // shared by every method
};

inline KeypointSet detect_with_method(const DetectionContext& ctx, const std::string& method,
                                      const PointCloud& cloud, int K, int pair_index, int side) {
    const int capped = std::min(K, cloud.size());
    if (method == "skd") return detect_topk(*ctx.skd, cloud, capped);
    if (method == "random")
        return random_detect(cloud, capped,
                             pair_seed(ctx.cfg->seed, kEvalSeedStream + 7, pair_index * 2 + side));
    if (method == "elf") {
        const InputGradient grads = input_gradient(*ctx.descriptor, cloud, ctx.cfg->saliency_layer);
        KeypointSet kp = elf3d_detect(grads, cloud, ctx.cfg->elf_nms_radius, ctx.cfg->elf_bins);
        if (kp.size() > capped) {
            kp.indices.resize(static_cast<std::size_t>(capped));
            kp.scores.resize(static_cast<std::size_t>(capped));
        }
        return kp;
    }
    throw ConfigError("unknown detector '" + method + "'");
}

inline Eigen::MatrixXd rows_at(const Eigen::MatrixXd& features, const std::vector<int>& indices) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(indices.size()), features.cols());
    for (std::size_t i = 0; i < indices.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)) = features.row(indices[i]);
    return out;
}

inline std::string json_number(double v) {
    return std::isfinite(v) ? format_double(v) : "null";
}

}  // namespace detail

inline PipelineReport run_pipeline(const ExperimentConfig& cfg) {
    namespace fs = std::filesystem;

    detail::DetectionContext ctx;
    ctx.cfg = &cfg;
    SkdDetector loaded;
    DescriptorModel seeded_descriptor;
    const bool wants_skd =
        std::find(cfg.detectors.begin(), cfg.detectors.end(), "skd") != cfg.detectors.end();
    if (wants_skd || !cfg.checkpoint.empty()) {
        if (cfg.checkpoint.empty())
            throw ConfigError("detector 'skd' requires a checkpoint path in the config");
        if (!fs::exists(cfg.checkpoint))
            throw IOFailure("checkpoint '" + cfg.checkpoint + "' does not exist");
        loaded = detector_from_checkpoint(load_checkpoint(cfg.checkpoint));
        ctx.skd = &loaded;
        ctx.descriptor = &loaded.descriptor;
    } else {
        // every method consumes the same descriptor features
        seeded_descriptor = DescriptorModel::seeded(cfg.seed, cfg.neighborhood_k);
        ctx.descriptor = &seeded_descriptor;
    }

    const std::vector<TrainingPair> pairs = make_pairs(cfg, cfg.pairs, kEvalSeedStream);
    const std::vector<double> grid = default_distance_grid();

    PipelineReport report;
    CsvTable matching_csv{{"method", "K", "d", "precision"}, {}};
    CsvTable repeat_csv{{"method", "K", "epsilon", "repeatability"}, {}};
    CsvTable regist_csv{{"method", "rte", "rre", "success", "iterations", "inlier_ratio"}, {}};

    for (const std::string& method : cfg.detectors) {
        for (int K : cfg.k_values) {
            MethodKReport cell;
            cell.method = method;
            cell.K = K;
            cell.distances = grid;
            std::vector<double> pooled_correct(grid.size(), 0.0);
            double pooled_evaluated = 0.0;
            double repeat_sum = 0.0;
            std::vector<RegistrationResult> registrations;

            for (int p = 0; p < static_cast<int>(pairs.size()); ++p) {
                const TrainingPair& pair = pairs[static_cast<std::size_t>(p)];
                try {
                    const KeypointSet kp_a = detail::detect_with_method(ctx, method, pair.cloud_k, K, p, 0);
                    const KeypointSet kp_b = detail::detect_with_method(ctx, method, pair.cloud_l, K, p, 1);
                    const Eigen::MatrixXd feat_a = describe(*ctx.descriptor, pair.cloud_k);
                    const Eigen::MatrixXd feat_b = describe(*ctx.descriptor, pair.cloud_l);
                    const Eigen::MatrixXd desc_a = detail::rows_at(feat_a, kp_a.indices);
                    const Eigen::MatrixXd desc_b = detail::rows_at(feat_b, kp_b.indices);

                    const MatchingScoreCurve curve =
                        matching_score(pair.cloud_k, kp_a, desc_a, pair.cloud_l, kp_b, desc_b, pair.truth,
                                       cfg.overlap_radius, grid);
                    for (std::size_t g = 0; g < grid.size(); ++g)
                        pooled_correct[g] += curve.precision[g] * curve.n_evaluated;
                    pooled_evaluated += curve.n_evaluated;

                    repeat_sum += repeatability(pair.cloud_k, kp_a, pair.cloud_l, kp_b, pair.truth,
                                                cfg.epsilon)
                                      .repeatability;

                    RansacParams rp;
                    rp.inlier_threshold = cfg.inlier_threshold;
                    rp.confidence = cfg.confidence;
                    rp.max_iterations = cfg.max_iterations;
                    rp.seed = pair_seed(cfg.seed, kEvalSeedStream + 11, p);
                    registrations.push_back(ransac_register(pair.cloud_k, kp_a, desc_a, pair.cloud_l, kp_b,
                                                            desc_b, pair.truth, rp));
                } catch (const Error& e) {
                    throw PipelineError("pair " + std::to_string(p) + ", method '" + method + "', K=" +
                                        std::to_string(K) + ": " + e.what());
                }
            }

            for (std::size_t g = 0; g < grid.size(); ++g) {
                cell.precision.push_back(pooled_evaluated > 0.0 ? pooled_correct[g] / pooled_evaluated : 0.0);
                matching_csv.rows.push_back({method, std::to_string(K), format_double(grid[g]),
                                             format_double(cell.precision.back())});
            }
            cell.precision_at_1m = cell.precision.back();
            cell.repeatability = repeat_sum / static_cast<double>(pairs.size());
            repeat_csv.rows.push_back({method, std::to_string(K), format_double(cfg.epsilon),
                                       format_double(cell.repeatability)});
            for (const RegistrationResult& r : registrations)
                regist_csv.rows.push_back({method, format_double(r.rte), format_double(r.rre),
                                           r.success ? "1" : "0", std::to_string(r.iterations),
                                           format_double(r.inlier_ratio)});
            cell.registration = aggregate_registration(registrations);
            report.cells.push_back(std::move(cell));
        }
    }

    fs::create_directories(cfg.output_dir);
    const auto out = [&](const std::string& name) { return (fs::path(cfg.output_dir) / name).string(); };
    write_csv(out("matching.csv"), matching_csv);
    write_csv(out("repeatability.csv"), repeat_csv);
    write_csv(out("registration.csv"), regist_csv);

    nlohmann::ordered_json summary;
    summary["methods"] = nlohmann::ordered_json::array();
    for (const MethodKReport& cell : report.cells) {
        nlohmann::ordered_json entry;
        entry["method"] = cell.method;
        entry["K"] = cell.K;
        entry["precision_at_1m"] = cell.precision_at_1m;
        entry["repeatability"] = cell.repeatability;
        entry["success_rate"] = cell.registration.success_rate;
        const RegistrationSummary& rs = cell.registration;
        entry["rte_mean"] = std::isfinite(rs.rte_mean) ? nlohmann::ordered_json(rs.rte_mean)
                                                       : nlohmann::ordered_json(nullptr);
        entry["rte_std"] = std::isfinite(rs.rte_std) ? nlohmann::ordered_json(rs.rte_std)
                                                     : nlohmann::ordered_json(nullptr);
        entry["rre_mean"] = std::isfinite(rs.rre_mean) ? nlohmann::ordered_json(rs.rre_mean)
                                                       : nlohmann::ordered_json(nullptr);
        entry["rre_std"] = std::isfinite(rs.rre_std) ? nlohmann::ordered_json(rs.rre_std)
                                                     : nlohmann::ordered_json(nullptr);
        entry["avg_iterations"] = rs.mean_iterations;
        entry["inlier_ratio"] = rs.mean_inlier_ratio;
        summary["methods"].push_back(entry);
    }
    {
        std::ofstream js(out("summary.json"));
        if (!js) throw IOFailure("cannot open summary.json for writing");
        js << summary.dump(2) << '\n';
    }

    // run metadata lives apart from the data files so reruns stay byte-identical
    nlohmann::ordered_json meta;
    meta["tool"] = "skd";
    meta["version"] = "1.0.0";
    meta["timestamp_utc"] = []() {
        char buf[32];
        const std::time_t now = std::time(nullptr);
        std::tm tm_utc{};
        gmtime_r(&now, &tm_utc);
        std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
        return std::string(buf);
    }();
    meta["config"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : cfg.to_key_values()) meta["config"][k] = v;
    {
        std::ofstream js(out("metadata.json"));
        if (!js) throw IOFailure("cannot open metadata.json for writing");
        js << meta.dump(2) << '\n';
    }

    report.files = {out("matching.csv"), out("repeatability.csv"), out("registration.csv"),
                    out("summary.json"), out("metadata.json")};
    return report;
}

// ---------------------------------------------------------------------------
// layer sweep
// ---------------------------------------------------------------------------

struct LayerScore {
    int layer = 0;
    double precision_at_1m = 0.0;
};

// Saliency-only detection per layer: score, normalize, take top K, then
// measure matching precision at 1 m with the final descriptor features.
inline std::vector<LayerScore> evaluate_layers(const DescriptorModel& model,
                                               const std::vector<TrainingPair>& pairs, int K,
                                               double overlap_radius = 0.5) {
    if (pairs.empty()) throw EmptyInput("evaluate_layers: no pairs");
    const std::vector<double> grid = default_distance_grid();
    std::vector<LayerScore> table;
    for (int layer = 1; layer <= DescriptorModel::layer_count; ++layer) {
        double pooled_correct = 0.0, pooled_evaluated = 0.0;
        for (const TrainingPair& pair : pairs) {
            auto saliency_topk = [&](const PointCloud& cloud) {
                const LayerActivations acts = layer_activations(model, cloud, layer);
                const InputGradient grads = input_gradient(model, cloud, layer);
                const SaliencyScore score =
                    normalize_scores(saliency_score(initial_saliency(acts, grads), cloud));
                return top_k_by_score(score.values, std::min(K, cloud.size()));
            };
            const KeypointSet kp_a = saliency_topk(pair.cloud_k);
            const KeypointSet kp_b = saliency_topk(pair.cloud_l);
            const Eigen::MatrixXd desc_a = detail::rows_at(describe(model, pair.cloud_k), kp_a.indices);
            const Eigen::MatrixXd desc_b = detail::rows_at(describe(model, pair.cloud_l), kp_b.indices);
            const MatchingScoreCurve curve = matching_score(pair.cloud_k, kp_a, desc_a, pair.cloud_l, kp_b,
                                                            desc_b, pair.truth, overlap_radius, grid);
            pooled_correct += curve.precision.back() * curve.n_evaluated;
            pooled_evaluated += curve.n_evaluated;
        }
        table.push_back({layer, pooled_evaluated > 0.0 ? pooled_correct / pooled_evaluated : 0.0});
    }
    return table;
}

}  // namespace skd
