// condensation-lab train|spectrum|linearize|sweep --config <path> [--jobs N] [--out DIR]
#include "condlab/errors.hpp"
#include "condlab/experiment.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

namespace {

enum Exit { kOk = 0, kConfig = 2, kDivergence = 3, kIo = 4 };

int run(const std::string& command, const std::string& config_path, int jobs, const std::string& out) {
    using namespace condlab;
    ExperimentConfig cfg = load_experiment_config(config_path);
    if (const char* env = std::getenv("CONDLAB_SEED")) {
        KeyValueConfig kv = KeyValueConfig::parse(std::string("seed = ") + env, "CONDLAB_SEED");
        cfg.seed = kv.get_u64("seed");
    }
    const std::filesystem::path dir = out.empty() ? cfg.out_dir : std::filesystem::path(out);

    if (command == "train") {
        const TrainSummary s = cmd_train(cfg, dir);
        std::cout << "final loss " << fmt_double(s.trajectory.loss_history.back()) << "\n";
    } else if (command == "spectrum") {
        const SpectrumSummary s = cmd_spectrum(cfg, dir);
        std::cout << "lambda_1 " << fmt_double(s.lambda_mean.front()) << "\n";
        for (std::size_t c = 0; c < s.align_mean.size(); ++c)
            std::cout << "alignment channel " << c + 1 << ' ' << fmt_double(s.align_mean[c]) << " +- "
                      << fmt_double(s.align_std[c]) << "\n";
    } else if (command == "linearize") {
        const LinearizeSummary s = cmd_linearize(cfg, dir);
        std::cout << "projection_ratio " << fmt_double(s.final_projection_ratio) << "\n"
                  << "relative_change " << fmt_double(s.final_relative_change) << "\n"
                  << "t_eff " << (s.t_eff.t_eff ? fmt_double(*s.t_eff.t_eff) : std::string("censored")) << "\n";
    } else {
        const auto rows = cmd_sweep(cfg, dir, jobs);
        std::cout << sweep_header() << "\n";
        for (const SweepRow& r : rows) std::cout << format_sweep_row(r) << "\n";
    }
    std::cout << "wrote " << dir.string() << "\n";
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Trains small CNNs from tiny initialization and checks the linearized dynamics"};
    app.require_subcommand(1, 1);
    std::string config, out;
    int jobs = 1;
    const std::pair<const char*, const char*> subs[] = {
        {"train", "train a CNN, write the loss curve and condensation reports"},
        {"spectrum", "spectrum of Z over random subsamples"},
        {"linearize", "compare GD with the linearized flow; find T_eff"},
        {"sweep", "linearize over a (gamma, M) grid"},
    };
    for (auto [name, help] : subs) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config, "key = value config file")->required();
        sub->add_option("--jobs", jobs, "parallel sweep cells")->check(CLI::PositiveNumber);
        sub->add_option("--out", out, "output directory (overrides output.dir)");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfig;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        return run(command, config, jobs, out);
    } catch (const condlab::DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kDivergence;
    } catch (const condlab::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const condlab::IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kIo;
    } catch (const condlab::FormatError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kIo;
    } catch (const condlab::TruncationError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kIo;
    } catch (const condlab::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kDivergence;
    } catch (const condlab::Error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfig;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kIo;
    }
}
