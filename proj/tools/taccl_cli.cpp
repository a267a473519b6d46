#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include <taccl/taccl.hpp>

namespace {

using namespace taccl;

std::vector<int> parse_ks(const std::string& s) {
    std::vector<int> ks;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            std::size_t used = 0;
            ks.push_back(std::stoi(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw Error(ErrorKind::InvalidConfig, "bad recall list '" + s + "'");
        }
    }
    if (ks.empty()) throw Error(ErrorKind::InvalidConfig, "empty recall list");
    return ks;
}

int cmd_gen_data(const std::string& config, const std::string& out, std::uint64_t seed, bool check) {
    const GeneratorConfig cfg = config.empty() ? GeneratorConfig{} : generator_config_from_json(read_json_file(config));
    const Dataset ds = generate(cfg, seed, check);
    save_dataset(out, ds);
    std::cout << nlohmann::json{{"images", ds.size()},
                                {"train", ds.manifest.train_ids.size()},
                                {"test", ds.manifest.test_ids.size()},
                                {"nn_accuracy", ds.manifest.nn_accuracy}}
                     .dump()
              << "\n";
    return 0;
}

int cmd_train(const std::string& config, const std::string& data, const std::string& out, std::uint64_t seed) {
    TrainConfig cfg = config.empty() ? TrainConfig{} : train_config_from_json(read_json_file(config));
    cfg.seed = seed;
    const Dataset ds = load_dataset(data);
    const TrainResult r = train(cfg, ds, out);
    std::cout << nlohmann::json{{"steps", r.steps},
                                {"reclusters", r.reclusters.size()},
                                {"matched_pairs", r.matched_pairs},
                                {"final_epoch_loss", r.epoch_mean_loss.empty() ? 0.0 : r.epoch_mean_loss.back()}}
                     .dump()
              << "\n";
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data, const std::string& recall, const std::string& out,
             int crop, int k, std::uint64_t seed) {
    const ModelParams p = load_checkpoint(checkpoint);
    const Dataset ds = load_dataset(data);
    EvalOptions opt;
    opt.ks = parse_ks(recall);
    opt.crop = crop;
    opt.k_clusters = k;
    opt.seed = seed;
    const EvalResult r = evaluate(p, ds, opt);
    if (!out.empty()) write_evaluation(out, r);
    std::cout << to_json(r.report).dump() << "\n";
    return 0;
}

int cmd_match(const std::string& data, double tau, const std::string& out, const std::string& pairs_out,
              std::uint64_t seed) {
    const Dataset ds = load_dataset(data);
    PairExtractionConfig cfg;
    cfg.tau = tau;
    cfg.ransac.seed = seed;
    const auto pairs = extract_pairs(ds.images, ds.manifest.train_ids, cfg);
    std::vector<KeypointMatchSet> sets;
    for (const auto& p : pairs) {
        KeypointMatchSet s{p.img_a, p.img_b, {}, MatchSource::Computed};
        for (const auto& m : p.keypoints.pairs)
            s.pairs.push_back({{m.a.u + p.box_a.x0, m.a.v + p.box_a.y0}, {m.b.u + p.box_b.x0, m.b.v + p.box_b.y0}, m.score});
        sets.push_back(std::move(s));
    }
    write_matches(out, sets);
    if (!pairs_out.empty()) {
        std::ofstream f(pairs_out);
        if (!f) throw Error(ErrorKind::IoError, "cannot write " + pairs_out);
        for (const auto& p : pairs) f << to_json(p).dump() << "\n";
    }
    std::cout << nlohmann::json{{"pairs", pairs.size()}}.dump() << "\n";
    return 0;
}

int cmd_ingest(const std::string& file, const std::string& data) {
    std::set<int> known;
    if (!data.empty()) {
        const Dataset ds = load_dataset(data);
        for (std::size_t i = 0; i < ds.size(); ++i) known.insert(static_cast<int>(i));
    }
    const auto sets = ingest_matches(file, data.empty() ? nullptr : &known);
    std::size_t total = 0;
    for (const auto& s : sets) total += s.pairs.size();
    std::cout << nlohmann::json{{"groups", sets.size()}, {"matches", total}}.dump() << "\n";
    return 0;
}

int cmd_gradcheck(const std::string& loss, int trials, double h, double tol, std::uint64_t seed) {
    const GradcheckReport r = gradcheck(loss, trials, h, seed);
    const bool ok = r.max_relative_error < tol;
    std::cout << nlohmann::json{{"loss", r.target},
                                {"trials", r.trials},
                                {"max_relative_error", r.max_relative_error},
                                {"tolerance", tol},
                                {"pass", ok}}
                     .dump()
              << "\n";
    return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Unsupervised metric learning with attention consistency and contrastive clustering"};
    app.require_subcommand(1);

    std::string config, out, data, checkpoint, recall = "1,2,4,8", file, loss, pairs_out;
    std::uint64_t seed = 0;
    double tau = 0.95, h = 1e-4, tol = 1e-4;
    int trials = 20, crop = -1, k = -1;
    bool no_check = false;

    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
    gen->add_option("--config", config, "Generator config (JSON)")->check(CLI::ExistingFile);
    gen->add_option("--out", out, "Output directory")->required();
    gen->add_option("--seed", seed, "Random seed");
    gen->add_flag("--no-check", no_check, "Skip the raw-pixel separability check");

    auto* tr = app.add_subcommand("train", "Train an encoder");
    tr->add_option("--config", config, "Training config (JSON)")->check(CLI::ExistingFile);
    tr->add_option("--data", data, "Dataset directory")->required();
    tr->add_option("--out", out, "Output directory")->required();
    tr->add_option("--seed", seed, "Random seed");

    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
    ev->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
    ev->add_option("--data", data, "Dataset directory")->required();
    ev->add_option("--recall", recall, "Comma-separated K values");
    ev->add_option("--out", out, "Directory for embeddings and the report");
    ev->add_option("--crop", crop, "Center-crop side (default: full image)");
    ev->add_option("--k", k, "Clusters for the contrastive ratio (default: test classes)");
    ev->add_option("--seed", seed, "Random seed");

    auto* ma = app.add_subcommand("match", "Extract matched sub-image pairs from the training split");
    ma->add_option("--data", data, "Dataset directory")->required();
    ma->add_option("--tau", tau, "Confidence threshold");
    ma->add_option("--out", out, "Match CSV")->required();
    ma->add_option("--pairs", pairs_out, "Pair manifest (JSON lines)");
    ma->add_option("--seed", seed, "Random seed");

    auto* in = app.add_subcommand("ingest-matches", "Validate a precomputed match file");
    in->add_option("--file", file, "Match CSV")->required();
    in->add_option("--data", data, "Dataset directory whose image ids the file must reference");

    auto* gc = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
    gc->add_option("--loss", loss, "Target")->required();
    gc->add_option("--trials", trials, "Random instances");
    gc->add_option("--step", h, "Finite-difference step");
    gc->add_option("--tol", tol, "Pass threshold on the max relative error");
    gc->add_option("--seed", seed, "Random seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*gen) return cmd_gen_data(config, out, seed, !no_check);
        if (*tr) return cmd_train(config, data, out, seed);
        if (*ev) return cmd_eval(checkpoint, data, recall, out, crop, k, seed);
        if (*ma) return cmd_match(data, tau, out, pairs_out, seed);
        if (*in) return cmd_ingest(file, data);
        if (*gc) return cmd_gradcheck(loss, trials, h, tol, seed);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return is_validation_error(e.kind()) ? 1 : 2;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
