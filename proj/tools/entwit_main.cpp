// Command-line front end: dataset generation, training, evaluation, scoring,
// GME labeling, and latent export.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "entwit/checkpoint.hpp"
#include "entwit/config.hpp"
#include "entwit/dataset.hpp"
#include "entwit/evaluate.hpp"
#include "entwit/gme.hpp"
#include "entwit/stateio.hpp"
#include "entwit/train.hpp"

namespace {

entwit::GenOptions parse_block(entwit::GenOptions opt, const std::string& block) {
    std::string b;
    for (char c : block) b += static_cast<char>(std::toupper(c));
    if (b == "A|BC") opt.block = {1, 2};
    else if (b == "B|AC") opt.block = {0, 2};
    else if (b == "C|AB") opt.block = {0, 1};
    else throw std::invalid_argument("--block must be one of A|BC, B|AC, C|AB");
    return opt;
}

int run(int argc, char** argv) {
    CLI::App app{"unsupervised entanglement detection with complex-valued networks"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "worker threads (0 = hardware default)");

    // gen
    auto* gen = app.add_subcommand("gen", "generate a dataset file");
    std::string gen_kind, gen_out, gen_block;
    std::int64_t gen_count = 0;
    int gen_qubits = 2;
    std::uint64_t gen_seed = 1;
    gen->add_option("--kind", gen_kind,
                    "separable_2q|separable_3q|biseparable|bipartition_mixture|"
                    "product_pure|entangled_2q|entangled_pure")
        ->required();
    gen->add_option("--count", gen_count, "number of records")->required();
    gen->add_option("--qubits", gen_qubits, "qubit count for pure-state kinds");
    gen->add_option("--seed", gen_seed, "base seed");
    gen->add_option("--block", gen_block, "entangled pair for biseparable (A|BC, B|AC, C|AB)");
    gen->add_option("--out", gen_out, "output path")->required();

    // train
    auto* tr = app.add_subcommand("train", "train a model from a config file");
    std::string tr_config;
    tr->add_option("--config", tr_config, "flat key=value config file")->required();

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a model on a labeled dataset");
    std::string ev_model, ev_test, ev_threshold = "eer", ev_json;
    ev->add_option("--model", ev_model, "checkpoint path")->required();
    ev->add_option("--test", ev_test, "test dataset path")->required();
    ev->add_option("--threshold", ev_threshold, "eer|max");
    ev->add_option("--json", ev_json, "also write the report as JSON");

    // score
    auto* sc = app.add_subcommand("score", "print anomaly scores for every record");
    std::string sc_model, sc_state;
    sc->add_option("--model", sc_model, "checkpoint path")->required();
    sc->add_option("--state", sc_state, "dataset file with the states to score")->required();

    // gme
    auto* gm = app.add_subcommand("gme", "label a pure state via its largest product overlap");
    std::string gm_state;
    int gm_restarts = 20;
    double gm_tol = 1e-10;
    gm->add_option("--state", gm_state, "pure state text file")->required();
    gm->add_option("--restarts", gm_restarts, "power iteration restarts");
    gm->add_option("--tol", gm_tol, "convergence tolerance");

    // export-latents
    auto* ex = app.add_subcommand("export-latents", "write latent vectors and scores as CSV");
    std::string ex_model, ex_data, ex_out;
    ex->add_option("--model", ex_model, "checkpoint path")->required();
    ex->add_option("--data", ex_data, "dataset path")->required();
    ex->add_option("--out", ex_out, "output CSV path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    if (threads > 0) entwit::set_num_threads(threads);

    if (*gen) {
        entwit::DatasetKind kind = entwit::dataset_kind_from_string(gen_kind);
        entwit::GenOptions opt;
        opt.n_qubits = gen_qubits;
        if (!gen_block.empty()) opt = parse_block(opt, gen_block);
        else if (kind == entwit::DatasetKind::biseparable)
            throw std::invalid_argument("gen --kind biseparable requires --block");
        entwit::Dataset ds = entwit::generate_dataset_file(kind, gen_count, gen_seed, gen_out, opt);
        std::printf("wrote %lld records (dim %u) to %s\n",
                    static_cast<long long>(ds.count()), ds.dim, gen_out.c_str());
    } else if (*tr) {
        entwit::TrainConfig cfg = entwit::load_train_config(tr_config);
        entwit::TrainResult res = entwit::train(cfg, &std::cout);
        std::printf("trained %d epochs; checkpoint at %s\n", cfg.epochs,
                    cfg.checkpoint_path.c_str());
    } else if (*ev) {
        entwit::ModelState model = entwit::load_checkpoint(ev_model);
        entwit::Dataset test = entwit::read_dataset(ev_test);
        entwit::Threshold::Method method;
        if (ev_threshold == "eer") method = entwit::Threshold::Method::eer;
        else if (ev_threshold == "max") method = entwit::Threshold::Method::max_separable;
        else throw std::invalid_argument("--threshold must be eer or max");
        entwit::EvalReport report = entwit::evaluate(model, test, method);
        std::cout << entwit::report_summary(report);
        if (!ev_json.empty()) {
            std::ofstream out(ev_json);
            if (!out) throw entwit::io_error("cannot open for writing: " + ev_json);
            out << entwit::report_to_json(report).dump(2) << "\n";
        }
    } else if (*sc) {
        entwit::ModelState model = entwit::load_checkpoint(sc_model);
        entwit::Dataset ds = entwit::read_dataset(sc_state);
        std::vector<double> scores = entwit::score_dataset(model, ds);
        for (double s : scores) std::printf("%.17g\n", s);
    } else if (*gm) {
        entwit::PureState psi = entwit::read_pure_state(gm_state);
        entwit::UEigenpairOptions opts;
        opts.tol = gm_tol;
        entwit::GmeResult res = entwit::gme_label(psi, gm_restarts, 1e-4, 12345, opts);
        std::printf("lambda_A = %.10f\n%s\n", res.lambda_a,
                    res.entangled ? "entangled" : "separable");
    } else if (*ex) {
        entwit::ModelState model = entwit::load_checkpoint(ex_model);
        entwit::Dataset ds = entwit::read_dataset(ex_data);
        entwit::export_latents(model, ds, ex_out);
        std::printf("wrote %lld rows to %s\n", static_cast<long long>(ds.count()),
                    ex_out.c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
