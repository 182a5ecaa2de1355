#include <cmath>
#include <cstdint>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dada/error.hpp"
#include "dada/gradcheck_suite.hpp"
#include "dada/harness.hpp"
#include "dada/models.hpp"

namespace {

int cmd_run(const std::string& config_path,
            const std::map<std::string, std::string>& overrides) {
    auto kv = dada::parse_config_file(config_path);
    for (const auto& [key, value] : overrides) kv[key] = value;
    auto spec = dada::spec_from_config(kv);
    auto result = dada::run_experiment(spec);

    int failed = 0;
    for (const auto& cell : result.cells) {
        if (!cell.ok) {
            ++failed;
            std::cerr << "cell " << dada::mode_name(cell.mode) << " n=" << cell.n_per_class
                      << " seed=" << cell.seed << " failed: " << cell.error << "\n";
        }
    }
    std::cout << "mode         n    mean_acc  std_acc  seeds\n";
    for (const auto& row : result.summary) {
        char line[128];
        std::snprintf(line, sizeof(line), "%-12s %-4d %-9.4f %-8.4f %d",
                      dada::mode_name(row.mode).c_str(), row.n_per_class, row.mean_acc,
                      row.std_acc, row.n_seeds);
        std::cout << line << "\n";
    }
    std::cout << result.cells.size() - static_cast<std::size_t>(failed) << "/"
              << result.cells.size() << " cells succeeded in " << result.wall_seconds
              << " s; results under " << spec.out_dir << "\n";
    return failed > 0 ? 2 : 0;
}

int cmd_gradcheck(std::uint64_t seed, int instances, double tol) {
    auto report = dada::run_gradient_suite(seed, instances, tol);
    std::cout << "family                   checks  failures  worst_rel_err\n";
    for (const auto& c : report.cases) {
        char line[160];
        std::snprintf(line, sizeof(line), "%-24s %-7d %-9d %.3e", c.name.c_str(),
                      c.instances, c.failures, c.worst_rel_err);
        std::cout << line << "\n";
        if (!c.note.empty()) std::cout << "  first failure: " << c.note << "\n";
    }
    const bool ok = report.all_passed();
    std::cout << "gradient suite: " << (ok ? "PASS" : "FAIL") << " ("
              << report.total_instances() << " checks, tol " << tol << ")\n";
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deep adversarial data augmentation experiments"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "run the experiment matrix from a config file");
    std::string config_path;
    run->add_option("--config", config_path, "flat key=value config file")->required();
    std::string modes_csv, n_csv, seeds_csv, out_dir;
    int workers = 0;
    run->add_option("--mode", modes_csv, "override modes (comma list)");
    run->add_option("--n-per-class", n_csv, "override n_per_class (comma list)");
    run->add_option("--seeds", seeds_csv, "override seeds (comma list)");
    run->add_option("--out", out_dir, "override output directory");
    run->add_option("--workers", workers, "override worker count");

    auto* curves = app.add_subcommand("curves", "emit the accuracy-vs-n CSV from a result");
    std::string result_path, curves_out;
    curves->add_option("--result", result_path, "result.json produced by run")->required();
    curves->add_option("--out", curves_out, "CSV output path")->required();

    auto* dump = app.add_subcommand("dump", "write generated samples from saved weights");
    std::string params_path, dump_out;
    std::int64_t d_z = 100, d_out = 0;
    int k = 0, count = 8;
    std::uint64_t dump_seed = 0;
    std::vector<std::int64_t> hidden;
    std::vector<std::int64_t> grid;
    dump->add_option("--params", params_path, "augmenter weight file")->required();
    dump->add_option("--out", dump_out, "output directory")->required();
    dump->add_option("--d-z", d_z, "latent width the net was built with")->required();
    dump->add_option("--k", k, "class count")->required();
    dump->add_option("--d-out", d_out, "sample width")->required();
    dump->add_option("--hidden", hidden, "hidden widths (space separated)");
    dump->add_option("--count", count, "samples per class");
    dump->add_option("--seed", dump_seed, "latent draw seed");
    dump->add_option("--grid", grid, "interpret samples as H W C images")->expected(3);

    auto* gradcheck =
        app.add_subcommand("gradcheck", "verify every loss gradient numerically");
    std::uint64_t gc_seed = 0;
    int gc_instances = 100;
    double gc_tol = 1e-4;
    gradcheck->add_option("--seed", gc_seed, "suite seed");
    gradcheck->add_option("--instances", gc_instances, "instances per op family");
    gradcheck->add_option("--tol", gc_tol, "relative-error tolerance");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (run->parsed()) {
            std::map<std::string, std::string> overrides;
            if (run->count("--mode")) overrides["modes"] = modes_csv;
            if (run->count("--n-per-class")) overrides["n_per_class"] = n_csv;
            if (run->count("--seeds")) overrides["seeds"] = seeds_csv;
            if (run->count("--out")) overrides["out"] = out_dir;
            if (run->count("--workers")) overrides["workers"] = std::to_string(workers);
            return cmd_run(config_path, overrides);
        }
        if (curves->parsed()) {
            dada::emit_curves(dada::load_result(result_path), curves_out);
            std::cout << "curves written to " << curves_out << "\n";
            return 0;
        }
        if (dump->parsed()) {
            auto aug = dada::AugmenterNet::make(d_z, k, hidden, d_out, 0);
            aug.load(params_path);
            if (grid.empty()) {
                dada::dump_generated(aug, count, dump_out, dump_seed);
            } else {
                dada::dump_generated(aug, count, dump_out, dump_seed, grid[0], grid[1],
                                     grid[2]);
            }
            std::cout << "wrote " << count << " samples per class under " << dump_out << "\n";
            return 0;
        }
        return cmd_gradcheck(gc_seed, gc_instances, gc_tol);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
