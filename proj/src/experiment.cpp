#include "condlab/experiment.hpp"

#include "condlab/errors.hpp"
#include "condlab/rng.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <set>

namespace condlab {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
    mean = 0.0;
    for (double x : xs) mean += x;
    mean /= double(xs.size());
    double v = 0.0;
    for (double x : xs) v += (x - mean) * (x - mean);
    sd = std::sqrt(v / double(xs.size()));
}

std::vector<double> leading_direction(const ImageBatch& batch, std::size_t m) {
    const SpectralDecomposition dec = svd(build_Z(z_stats(batch), m));
    if (dec.rank < 1) return {};
    return dec.v(0);
}

} // namespace

RunSeeds run_seeds(std::uint64_t master) { return {derive_seed(master, "data"), derive_seed(master, "init")}; }

std::uint64_t cell_seed(std::uint64_t master, std::size_t cell_index) {
    return derive_seed(master, "cell", cell_index);
}

ImageBatch load_dataset_full(const DatasetSpec& spec, std::uint64_t seed) {
    LoadOptions opts;
    opts.label_kind = spec.label_kind;
    opts.num_classes = spec.classes;
    opts.pixel_offset = spec.offset;
    if (spec.source == "synthetic") {
        if (spec.label_kind != LabelKind::Scalar) throw ConfigError("synthetic data only has scalar labels");
        return synthesize(spec.n, spec.width, spec.height, spec.channels, spec.bound, seed, spec.sign);
    }
    if (spec.source == "idx") return load_idx(spec.path, spec.labels_path, opts);
    if (spec.source == "cifar10") return load_cifar10(spec.path, opts);
    if (spec.source == "csv") return read_batch_csv(spec.path);
    throw ConfigError("unknown dataset source '" + spec.source + "'");
}

ImageBatch load_dataset(const DatasetSpec& spec, std::uint64_t seed) {
    ImageBatch full = load_dataset_full(spec, seed);
    if (spec.source == "synthetic" || spec.n == 0 || spec.n == full.size()) return full;
    if (spec.n > full.size())
        throw ConfigError("dataset.n = " + std::to_string(spec.n) + " exceeds the " + std::to_string(full.size()) +
                          " samples in " + spec.path.string());
    return subsample(full, spec.n, derive_seed(seed, "subsample"));
}

CnnConfig fit_model_to(const CnnConfig& model, const ImageBatch& batch) {
    CnnConfig c = model;
    c.input_w = batch.images.w;
    c.input_h = batch.images.h;
    c.channels.at(0) = batch.images.c;
    if (c.head.kind == HeadSpec::Kind::Direct && batch.label_dim() != 1)
        throw ConfigError("the direct head has one output but labels have " + std::to_string(batch.label_dim()) +
                          " columns; use model.head = fc");
    if (c.head.kind == HeadSpec::Kind::Fc && c.head.out_dim != batch.label_dim())
        throw ConfigError("model.out_dim = " + std::to_string(c.head.out_dim) + " but labels have " +
                          std::to_string(batch.label_dim()) + " columns");
    try {
        c.validate();
    } catch (const Error& e) {
        throw ConfigError(std::string("model does not fit the data: ") + e.what());
    }
    return c;
}

// ---------------------------------------------------------------- train

TrainSummary run_train(const ExperimentConfig& cfg, std::uint64_t master_seed) {
    const RunSeeds seeds = run_seeds(master_seed);
    const ImageBatch batch = load_dataset(cfg.dataset, seeds.data);
    const CnnConfig model = fit_model_to(cfg.model, batch);

    TrainSummary s;
    s.trajectory = train(model, batch, cfg.optimizer, cfg.loss, seeds.init);
    if (!cfg.analysis.condense_report) return s;

    if (batch.label_kind == LabelKind::Scalar) s.v1 = leading_direction(batch, model.m);
    const std::vector<Kernel> w0 = theta_w(s.trajectory.snapshots.front().params);
    ReportOptions opts{cfg.analysis.include_bias, cfg.analysis.cluster_threshold};
    for (const Snapshot& snap : s.trajectory.snapshots)
        s.reports.push_back(condensation_report(snap.params, snap.step, snap.t, s.v1.empty() ? std::vector<Kernel>{} : w0,
                                                s.v1, opts));
    return s;
}

void write_train(const ExperimentConfig& cfg, const TrainSummary& s, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    open_out(dir / "config.txt") << cfg.source_text;
    write_trajectory(s.trajectory, dir);
    if (s.reports.empty()) return;

    {
        auto out = open_out(dir / "condensation.csv");
        out << kEpochNote << '\n';
        out << "step,t,layer,clusters,median_abs_cosine,min_abs_ones_alignment,mean_amplitude,relative_change,"
               "projection_ratio\n";
        for (const CondensationReport& r : s.reports)
            for (std::size_t l = 0; l < r.layers.size(); ++l) {
                const LayerReport& lr = r.layers[l];
                double min_align = 1.0, mean_amp = 0.0;
                for (double a : lr.ones_alignment) min_align = std::min(min_align, std::abs(a));
                for (double a : lr.amplitude) mean_amp += a;
                mean_amp /= double(lr.amplitude.size());
                out << r.step << ',' << fmt_double(r.t) << ',' << l + 1 << ',' << lr.clusters.count << ','
                    << fmt_double(median_abs_offdiagonal(lr.cosine)) << ',' << fmt_double(min_align) << ','
                    << fmt_double(mean_amp) << ',' << fmt_double(r.relative_change) << ','
                    << fmt_double(r.projection_ratio) << '\n';
            }
    }

    // Final-snapshot matrices: raw order plus an ordering that makes blocks contiguous.
    const CondensationReport& last = s.reports.back();
    const CnnParams& params = s.trajectory.snapshots.back().params;
    for (std::size_t l = 1; l <= last.layers.size(); ++l) {
        const Matrix& D = last.layers[l - 1].cosine;
        const std::vector<Kernel> ks = layer_kernels(params, l, cfg.analysis.include_bias);
        std::vector<double> dir_vec;
        if (l == 1 && !s.v1.empty()) {
            dir_vec = s.v1;
            if (!cfg.analysis.include_bias) dir_vec.pop_back();
        } else {
            dir_vec.assign(ks.front().size(), 1.0);
        }
        const Matrix sorted = permute(D, order_by_alignment(ks, dir_vec));
        const std::string tag = "layer" + std::to_string(l);
        write_cosine_csv(D, dir / ("cosine_" + tag + ".csv"));
        write_cosine_csv(sorted, dir / ("cosine_" + tag + "_sorted.csv"));
        write_heatmap_pgm(D, dir / ("heatmap_" + tag + "_raw.pgm"));
        write_heatmap_pgm(sorted, dir / ("heatmap_" + tag + ".pgm"));
    }
}

TrainSummary cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
    try {
        TrainSummary s = run_train(cfg, cfg.seed);
        write_train(cfg, s, dir);
        return s;
    } catch (const DivergenceError& e) {
        std::filesystem::create_directories(dir);
        write_trajectory(e.partial(), dir);
        throw;
    }
}

// ---------------------------------------------------------------- spectrum

SpectrumSummary run_spectrum(const ExperimentConfig& cfg, std::uint64_t master_seed) {
    const DatasetSpec& spec = cfg.dataset;
    const std::size_t T = cfg.analysis.trials, K = cfg.analysis.top_k, m = cfg.model.m;
    const bool file = spec.source != "synthetic";
    ImageBatch full;
    if (file) full = load_dataset_full(spec, derive_seed(master_seed, "data"));

    SpectrumSummary s;
    std::size_t min_rank = std::numeric_limits<std::size_t>::max();
    for (std::size_t t = 0; t < T; ++t) {
        const std::uint64_t seed = derive_seed(master_seed, "trial", t);
        ImageBatch batch;
        if (!file) {
            batch = load_dataset_full(spec, seed);
        } else if (spec.n == 0 || spec.n == full.size()) {
            batch = full;
        } else {
            if (spec.n > full.size()) throw ConfigError("dataset.n exceeds the samples in " + spec.path.string());
            batch = subsample(full, spec.n, seed);
        }
        SpectralDecomposition dec = svd(build_Z(z_stats(batch), m));
        SpectrumTrial tr;
        tr.rank = dec.rank;
        tr.lambda.assign(K, 0.0);
        for (std::size_t k = 0; k < std::min(K, dec.rank); ++k) tr.lambda[k] = dec.lambda[k];
        if (dec.rank >= 2) tr.gap = spectral_gap(dec);
        if (dec.rank >= 1) tr.alignment = leading_direction_alignment(dec, batch.images.c, m);
        min_rank = std::min(min_rank, dec.rank);
        if (t == 0) s.first = std::move(dec);
        s.trials.push_back(std::move(tr));
    }

    for (std::size_t k = 0; k < K; ++k) {
        std::vector<double> xs;
        for (const SpectrumTrial& tr : s.trials) xs.push_back(tr.lambda[k]);
        double mu, sd;
        mean_std(xs, mu, sd);
        s.lambda_mean.push_back(mu);
        s.lambda_std.push_back(sd);
        s.padded.push_back(k >= min_rank);
    }
    const std::size_t C = s.trials.front().alignment.per_channel.size();
    for (std::size_t c = 0; c < C; ++c) {
        std::vector<double> xs;
        for (const SpectrumTrial& tr : s.trials) xs.push_back(tr.alignment.per_channel.at(c));
        double mu, sd;
        mean_std(xs, mu, sd);
        s.align_mean.push_back(mu);
        s.align_std.push_back(sd);
    }
    return s;
}

void write_spectrum(const SpectrumSummary& s, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        auto out = open_out(dir / "spectrum.csv");
        out << "# singular values of Z over " << s.trials.size() << " trials (population std)\n";
        out << "k,lambda_mean,lambda_std,padded\n";
        for (std::size_t k = 0; k < s.lambda_mean.size(); ++k)
            out << k + 1 << ',' << fmt_double(s.lambda_mean[k]) << ',' << fmt_double(s.lambda_std[k]) << ','
                << (s.padded[k] ? 1 : 0) << '\n';
    }
    {
        auto out = open_out(dir / "trials.csv");
        out << "trial,rank,gap,ratio,degenerate";
        for (std::size_t c = 0; c < s.align_mean.size(); ++c) out << ",alignment_c" << c + 1;
        out << ",v1_bias\n";
        for (std::size_t t = 0; t < s.trials.size(); ++t) {
            const SpectrumTrial& tr = s.trials[t];
            out << t << ',' << tr.rank << ',';
            if (tr.gap)
                out << fmt_double(tr.gap->gap) << ',' << fmt_double(tr.gap->ratio) << ',' << (tr.gap->degenerate ? 1 : 0);
            else
                out << "undefined,undefined,0";
            for (double a : tr.alignment.per_channel) out << ',' << fmt_double(a);
            out << ',' << fmt_double(tr.alignment.bias) << '\n';
        }
    }
    {
        auto out = open_out(dir / "alignment.csv");
        out << "channel,mean,std\n";
        for (std::size_t c = 0; c < s.align_mean.size(); ++c)
            out << c + 1 << ',' << fmt_double(s.align_mean[c]) << ',' << fmt_double(s.align_std[c]) << '\n';
    }
    write_vectors_csv(s.first, dir / "vectors.csv");
}

SpectrumSummary cmd_spectrum(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
    SpectrumSummary s = run_spectrum(cfg, cfg.seed);
    for (std::size_t t = 0; t < s.trials.size(); ++t) {
        if (!s.trials[t].gap) std::cerr << "warning: trial " << t << " has rank < 2; spectral gap undefined\n";
        else if (s.trials[t].gap->degenerate)
            std::cerr << "warning: trial " << t << " has lambda_1 == lambda_2 (degenerate spectral gap)\n";
    }
    write_spectrum(s, dir);
    return s;
}

// ---------------------------------------------------------------- linearize

LinearizeSummary run_linearize(const ExperimentConfig& cfg, std::uint64_t seed) {
    if (cfg.model.init.kind != InitSpec::Kind::TheoryEps) throw ConfigError("linearize needs model.init = theory");
    if (cfg.loss != LossKind::Mse) throw ConfigError("linearize needs optim.loss = mse");
    if (cfg.optimizer.kind != OptimizerSpec::Kind::Gd) throw ConfigError("linearize needs optim.kind = gd");
    try {
        require_theory_config(cfg.model);
    } catch (const Unsupported& e) {
        throw ConfigError(std::string("linearize: ") + e.what());
    }

    const RunSeeds seeds = run_seeds(seed);
    const ImageBatch batch = load_dataset(cfg.dataset, seeds.data);
    const CnnConfig model = fit_model_to(cfg.model, batch);

    LinearizeSummary s;
    s.seed = seed;
    s.M = model.hidden_channels();
    const CnnParams p0 = init_params(model, seeds.init);
    s.eps = p0.scale;
    // With an explicit epsilon the exponent is the one it implies: eps = M^{-gamma/2}.
    s.gamma = model.init.epsilon >= 0 ? (s.eps > 0 && s.M > 1 ? -2.0 * std::log(s.eps) / std::log(double(s.M))
                                                              : std::numeric_limits<double>::infinity())
                                      : model.init.gamma;
    if (s.gamma <= 1.0) s.warnings.push_back("gamma <= 1 lies outside the condensed-regime hypothesis");

    const SpectralDecomposition dec = svd(build_Z(z_stats(batch), model.m));
    if (dec.rank == 0) throw NumericError("Z is zero; the linear dynamics are trivial");
    s.lambda1 = dec.lambda[0];
    if (dec.rank >= 2) {
        s.gap = spectral_gap(dec);
        if (s.gap->degenerate) s.warnings.push_back("degenerate spectral gap: lambda_1 == lambda_2");
    } else {
        s.warnings.push_back("rank(Z) < 2; spectral gap undefined");
    }
    const std::vector<double> v1 = dec.v(0);

    const Trajectory traj = train_from(p0, batch, cfg.optimizer, cfg.loss, seeds.init);

    const double rescale = s.eps > 0 ? s.eps : 1.0;
    const std::vector<ChannelVector> th0 = channel_vectors(p0, rescale);
    const std::vector<Kernel> w0 = theta_w(p0);
    double w0_norm = 0.0;
    for (const Kernel& k : w0) w0_norm += dot(k, k);

    std::vector<double> times, emax;
    for (const Snapshot& snap : traj.snapshots) {
        LinearizeRow row;
        row.step = snap.step;
        row.t = snap.t;
        const std::vector<ChannelVector> th = channel_vectors(snap.params, rescale);
        double dev2 = 0.0, lin2 = 0.0;
        for (std::size_t be = 0; be < th.size(); ++be) {
            const ChannelVector lin = closed_form(th0[be], dec, snap.t);
            for (std::size_t i = 0; i < lin.w.size(); ++i) {
                dev2 += (th[be].w[i] - lin.w[i]) * (th[be].w[i] - lin.w[i]);
                lin2 += lin.w[i] * lin.w[i];
            }
            for (std::size_t i = 0; i < lin.a.size(); ++i) {
                dev2 += (th[be].a[i] - lin.a[i]) * (th[be].a[i] - lin.a[i]);
                lin2 += lin.a[i] * lin.a[i];
            }
        }
        row.deviation = std::sqrt(dev2);
        row.linear_norm = std::sqrt(lin2);
        row.e_max = neuron_energy(th).max;
        if (w0_norm > 0) {
            const TheoremRatios r = theorem_ratios(theta_w(snap.params), w0, v1);
            row.relative_change = r.relative_change;
            row.projection_ratio = r.projection_ratio;
        } else {
            row.relative_change = row.projection_ratio = std::numeric_limits<double>::quiet_NaN();
        }
        times.push_back(row.t);
        emax.push_back(row.e_max);
        s.rows.push_back(row);
    }

    s.t_eff = detect_t_eff(times, emax, s.gamma, s.M, s.eps);
    for (std::size_t k = 0; k < s.rows.size(); ++k) s.rows[k].certificate = s.t_eff.certificate[k];
    s.t_lower_bound = t_eff_lower_bound(s.lambda1, s.gamma, s.M);

    std::size_t last = s.rows.size() - 1;
    if (s.t_eff.t_eff) {
        last = 0;
        for (std::size_t k = 0; k < s.rows.size(); ++k)
            if (s.rows[k].t <= *s.t_eff.t_eff) last = k;
    }
    s.final_projection_ratio = s.rows[last].projection_ratio;
    s.final_relative_change = s.rows[last].relative_change;
    return s;
}

void write_linearize(const LinearizeSummary& s, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        auto out = open_out(dir / "linearize.csv");
        out << kEpochNote << '\n';
        out << "# order-one units theta = eps * theta_bar; eps = " << fmt_double(s.eps) << ", gamma = "
            << fmt_double(s.gamma) << ", M = " << s.M << '\n';
        out << "step,t,relative_change,projection_ratio,deviation,linear_norm,e_max,certificate\n";
        for (const LinearizeRow& r : s.rows)
            out << r.step << ',' << fmt_double(r.t) << ',' << fmt_double(r.relative_change) << ','
                << fmt_double(r.projection_ratio) << ',' << fmt_double(r.deviation) << ','
                << fmt_double(r.linear_norm) << ',' << fmt_double(r.e_max) << ',' << fmt_double(r.certificate) << '\n';
    }
    {
        auto out = open_out(dir / "summary.csv");
        out << sweep_header() << '\n' << format_sweep_row(sweep_row(s)) << '\n';
    }
    {
        auto out = open_out(dir / "t_eff.txt");
        out << "gamma = " << fmt_double(s.gamma) << '\n';
        out << "M = " << s.M << '\n';
        out << "eps = " << fmt_double(s.eps) << '\n';
        out << "tau = " << fmt_double(s.t_eff.tau) << '\n';
        out << "threshold = " << fmt_double(s.t_eff.threshold) << '\n';
        out << "t_eff = " << (s.t_eff.t_eff ? fmt_double(*s.t_eff.t_eff) : std::string("censored")) << '\n';
        out << "t_lower_bound = " << fmt_double(s.t_lower_bound) << '\n';
        out << "lambda1 = " << fmt_double(s.lambda1) << '\n';
        if (s.gap) out << "gap = " << fmt_double(s.gap->gap) << '\n';
        for (const std::string& w : s.warnings) out << "warning = " << w << '\n';
    }
}

LinearizeSummary cmd_linearize(const ExperimentConfig& cfg, const std::filesystem::path& dir) {
    LinearizeSummary s = run_linearize(cfg, cell_seed(cfg.seed, 0));
    for (const std::string& w : s.warnings) std::cerr << "warning: " << w << '\n';
    write_linearize(s, dir);
    return s;
}

// ---------------------------------------------------------------- sweep

SweepRow sweep_row(const LinearizeSummary& s) {
    SweepRow r;
    r.gamma = s.gamma;
    r.M = s.M;
    r.seed = s.seed;
    r.ok = true;
    r.projection_ratio = s.final_projection_ratio;
    r.relative_change = s.final_relative_change;
    r.t_eff = s.t_eff.t_eff;
    return r;
}

std::string sweep_header() { return "gamma,M,seed,status,projection_ratio,relative_change,t_eff,error"; }

std::string format_sweep_row(const SweepRow& r) {
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    std::string line = fmt_double(r.gamma) + ',' + std::to_string(r.M) + ',' + std::to_string(r.seed) + ',' +
                       (r.ok ? "ok" : "failed") + ',';
    if (r.ok) {
        line += fmt_double(r.projection_ratio) + ',' + fmt_double(r.relative_change) + ',' +
                (r.t_eff ? fmt_double(*r.t_eff) : std::string("censored"));
    } else {
        line += ",,";
    }
    return line + ',' + err;
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, int jobs) {
    if (cfg.sweep.gammas.empty() || cfg.sweep.channel_counts.empty())
        throw ConfigError("sweep needs sweep.gammas and sweep.channels");
    const std::set<double> gs(cfg.sweep.gammas.begin(), cfg.sweep.gammas.end());
    const std::set<std::size_t> ms(cfg.sweep.channel_counts.begin(), cfg.sweep.channel_counts.end());
    std::vector<std::pair<double, std::size_t>> cells;
    for (double g : gs)
        for (std::size_t M : ms) cells.emplace_back(g, M);

    std::vector<SweepRow> rows(cells.size());
    const long ncell = long(cells.size());
#pragma omp parallel for num_threads(std::max(1, jobs)) schedule(dynamic, 1)
    for (long i = 0; i < ncell; ++i) {
        SweepRow& row = rows[std::size_t(i)];
        row.gamma = cells[std::size_t(i)].first;
        row.M = cells[std::size_t(i)].second;
        row.seed = cell_seed(cfg.seed, std::size_t(i));
        try {
            ExperimentConfig c = cfg;
            c.model.init.gamma = row.gamma;
            c.model.init.epsilon = -1.0;
            c.model.channels.at(1) = row.M;
            const LinearizeSummary s = run_linearize(c, row.seed);
            row = sweep_row(s);
        } catch (const std::exception& e) {
            row.ok = false;
            row.error = e.what();
        }
    }
    return rows;
}

std::vector<SweepRow> cmd_sweep(const ExperimentConfig& cfg, const std::filesystem::path& dir, int jobs) {
    const std::vector<SweepRow> rows = run_sweep(cfg, jobs);
    std::filesystem::create_directories(dir);
    auto out = open_out(dir / "sweep.csv");
    out << kEpochNote << '\n' << sweep_header() << '\n';
    for (const SweepRow& r : rows) {
        out << format_sweep_row(r) << '\n';
        if (!r.ok) std::cerr << "warning: sweep cell gamma=" << fmt_double(r.gamma) << " M=" << r.M << " failed: " << r.error << '\n';
    }
    return rows;
}

} // namespace condlab
