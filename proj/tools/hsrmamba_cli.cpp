#include <CLI11.hpp>

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "hsrmamba/hsrmamba.hpp"

namespace {

using namespace hsr;

enum Exit : int { kOk = 0, kNumeric = 1, kUsage = 2 };

/// Error that already knows its exit code and carries a file or flag name.
struct CliError : std::runtime_error {
    int code;
    CliError(int c, const std::string& msg) : std::runtime_error(msg), code(c) {}
};

HsiCube load_cube(const std::string& path) {
    try {
        return read_hsc(path);
    } catch (const FormatError& e) {
        throw CliError(kUsage, path + ": " + e.what());
    }
}

ModelWeights<float> load_weights(const std::string& path) {
    try {
        return load_checkpoint(path);
    } catch (const FormatError& e) {
        throw CliError(kUsage, path + ": " + e.what());
    }
}

template <class F>
void write_or_fail(F&& write) {
    try {
        write();
    } catch (const io::WriteError& e) {
        throw CliError(kUsage, e.what());
    }
}

void write_text(const std::string& path, const std::string& text) {
    write_or_fail([&] { io::write_file(path, std::vector<std::uint8_t>(text.begin(), text.end())); });
}

const auto kScaleCheck = CLI::IsMember({2, 4, 8});

// --- model flags shared by init, train and bench -------------------------

struct ModelFlags {
    std::size_t hidden = 64;
    std::size_t levels = 2;
    std::size_t stripe = 4;
    std::size_t state_dim = 16;
    std::size_t blocks = 1;
    std::string scan = "stripe";
    std::uint64_t seed = 0;

    void attach(CLI::App* app) {
        app->add_option("--hidden,-D", hidden, "Feature width D")->check(CLI::PositiveNumber);
        app->add_option("--levels,-K", levels, "Wavelet levels K")->check(CLI::PositiveNumber);
        app->add_option("--stripe,-L", stripe, "Stripe length L (window side for window scans)")
            ->check(CLI::PositiveNumber);
        app->add_option("--state-dim,-N", state_dim, "Selective-scan state size N")->check(CLI::PositiveNumber);
        app->add_option("--blocks", blocks, "Encoder/decoder blocks per level")->check(CLI::PositiveNumber);
        app->add_option("--scan", scan, "Scan order: stripe, raster (alias global) or window")
            ->check(CLI::IsMember({"stripe", "raster", "global", "window"}));
        app->add_option("--seed", seed, "Weight initialization seed");
    }

    ModelConfig config(std::size_t bands, std::size_t scale) const {
        ModelConfig c;
        c.hidden = hidden;
        c.levels = levels;
        c.stripe = stripe;
        c.state_dim = state_dim;
        c.blocks_per_level = blocks;
        c.scan = parse_scan_kind(scan);
        c.seed = seed;
        c.bands = bands;
        c.scale = scale;
        return c;
    }
};

// --- synth ----------------------------------------------------------------

struct SynthArgs {
    std::uint64_t seed = 0;
    std::size_t bands = 31;
    std::size_t size = 64;
    double smoothness = 0.5;
    std::string out;
};

int run_synth(const SynthArgs& a) {
    const auto cube = synth_cube(a.seed, a.bands, a.size, a.size, a.smoothness);
    write_or_fail([&] { write_hsc(cube, a.out); });
    std::cout << "wrote " << a.out << " (" << a.bands << " x " << a.size << " x " << a.size << ")\n";
    return kOk;
}

// --- degrade --------------------------------------------------------------

struct DegradeArgs {
    std::string in;
    std::size_t scale = 4;
    std::string out;
};

int run_degrade(const DegradeArgs& a) {
    const auto cube = load_cube(a.in);
    if (cube.height % a.scale || cube.width % a.scale)
        throw CliError(kUsage, a.in + ": " + std::to_string(cube.height) + "x" + std::to_string(cube.width) +
                                   " is not divisible by --scale " + std::to_string(a.scale));
    const auto lr = degrade(cube, a.scale);
    write_or_fail([&] { write_hsc(lr, a.out); });
    std::cout << "wrote " << a.out << " (" << lr.bands << " x " << lr.height << " x " << lr.width << ")\n";
    return kOk;
}

// --- init -----------------------------------------------------------------

struct InitArgs {
    ModelFlags model;
    std::size_t bands = 31;
    std::size_t scale = 4;
    bool zero_tail = false;
    std::string out;
};

int run_init(const InitArgs& a) {
    auto w = init_weights<float>(a.model.config(a.bands, a.scale));
    if (a.zero_tail) {
        for (auto& v : w.params.at(kGlobalTail + ".weight").data()) v = 0.0f;
        for (auto& v : w.params.at(kGlobalTail + ".bias").data()) v = 0.0f;
    }
    write_or_fail([&] { save_checkpoint(w, a.out); });
    std::cout << "wrote " << a.out << " (" << count_params(w) << " parameters)\n";
    return kOk;
}

// --- train ----------------------------------------------------------------

struct TrainArgs {
    ModelFlags model;
    std::string gt;
    std::size_t scale = 4;
    std::size_t steps = 500;
    std::size_t epochs = 0;
    std::size_t batch = 8;
    std::size_t patch = 0;
    std::size_t patches = 64;
    double lr = 1e-4;
    double weight_decay = 1e-4;
    double clip = 0.0;
    std::uint64_t data_seed = 0;
    std::size_t checkpoint_every = 0;
    std::size_t log_every = 50;
    std::string ckpt;
    std::string loss_csv;
};

int run_train(const TrainArgs& a) {
    const auto gt = load_cube(a.gt);
    if (gt.height % a.scale || gt.width % a.scale)
        throw CliError(kUsage, a.gt + ": dimensions not divisible by --scale " + std::to_string(a.scale));
    const ModelConfig mc = a.model.config(gt.bands, a.scale);

    TrainConfig tc;
    tc.lr = a.lr;
    tc.batch = a.batch;
    tc.patch = a.patch ? a.patch : std::min(default_patch_size(a.scale), std::min(gt.height, gt.width));
    tc.seed = a.data_seed;
    tc.weight_decay = a.weight_decay;
    tc.max_grad_norm = a.clip;
    tc.checkpoint_interval = a.checkpoint_every;
    tc.checkpoint_path = a.ckpt;
    if (a.epochs) {
        tc.epochs = a.epochs;
    } else {
        tc.max_steps = a.steps;
        const std::size_t per_epoch = (a.patches + a.batch - 1) / a.batch;
        tc.epochs = (a.steps + per_epoch - 1) / per_epoch;
    }
    try {
        tc.validate(mc);
    } catch (const ContractError& e) {
        throw CliError(kUsage, std::string("--patch: ") + e.what());
    }

    Rng rng(a.data_seed);
    const std::vector<CubePair> pairs{{degrade(gt, a.scale), gt}};
    const auto data = sample_patches(pairs, tc, a.scale, rng, a.patches);
    const auto result = train(data, tc, mc, [&](std::size_t step, double loss) {
        if (a.log_every && step % a.log_every == 0) std::cerr << "step " << step << " loss " << loss << "\n";
    });
    write_or_fail([&] { save_checkpoint(result.weights, a.ckpt); });
    if (!a.loss_csv.empty()) write_text(a.loss_csv, loss_curve_csv(result.loss_curve));
    std::cout << "trained " << result.loss_curve.size() << " steps";
    if (!result.loss_curve.empty())
        std::cout << ", loss " << result.loss_curve.front() << " -> " << result.loss_curve.back();
    std::cout << "; wrote " << a.ckpt << "\n";
    return kOk;
}

// --- infer ----------------------------------------------------------------

struct InferArgs {
    std::string in;
    std::string ckpt;
    std::string out;
    std::string rgb;
    std::vector<std::size_t> rgb_bands{kDefaultRgbBands.begin(), kDefaultRgbBands.end()};
};

int run_infer(const InferArgs& a) {
    const auto lr = load_cube(a.in);
    const auto w = load_weights(a.ckpt);
    if (lr.bands != w.config.bands)
        throw CliError(kUsage, a.in + ": " + std::to_string(lr.bands) + " bands, checkpoint " + a.ckpt + " expects " +
                                   std::to_string(w.config.bands));
    auto sr = HsiCube::from_tensor(forward(lr.tensor(), w), lr.lo, lr.hi);
    // Output stays in the input's value range, so reloading it is lossless.
    for (auto& v : sr.values) v = std::clamp(v, sr.lo, sr.hi);
    write_or_fail([&] { write_hsc(sr, a.out); });
    if (!a.rgb.empty()) {
        const auto img = pseudo_color(sr, a.rgb_bands[0], a.rgb_bands[1], a.rgb_bands[2]);
        write_or_fail([&] { write_ppm(img, a.rgb); });
    }
    std::cout << "wrote " << a.out << " (" << sr.bands << " x " << sr.height << " x " << sr.width << ")\n";
    return kOk;
}

// --- eval -----------------------------------------------------------------

struct EvalArgs {
    std::string pred;
    std::string gt;
    std::string csv;
    std::string sam_map;
    double scale = 4;
};

int run_eval(const EvalArgs& a) {
    const auto pred = load_cube(a.pred);
    const auto gt = load_cube(a.gt);
    if (pred.bands != gt.bands || pred.height != gt.height || pred.width != gt.width)
        throw CliError(kUsage, a.pred + " and " + a.gt + " have different dimensions");
    const auto report = evaluate(pred, gt, a.scale, static_cast<double>(gt.hi));
    const std::string text = std::string(kMetricCsvHeader) + "\n" + to_csv_row(report) + "\n";
    if (!a.csv.empty()) write_text(a.csv, text);
    if (!a.sam_map.empty()) {
        const auto img = render_sam_map(sam_error_map(gt, pred));
        write_or_fail([&] { write_ppm(img, a.sam_map); });
    }
    std::cout << text;
    return kOk;
}

// --- scan-viz -------------------------------------------------------------

struct ScanVizArgs {
    std::size_t height = 8;
    std::size_t width = 8;
    std::size_t stripe = 4;
    std::string kind = "stripe";
    int direction = 0;
    std::size_t cell = 16;
    std::string out;
};

std::array<std::uint8_t, 3> ramp(double t) {
    // Piecewise-linear dark blue -> teal -> yellow.
    static constexpr std::array<std::array<double, 3>, 3> stops{{{30, 30, 120}, {30, 160, 150}, {250, 230, 60}}};
    const double u = std::clamp(t, 0.0, 1.0) * 2.0;
    const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(u), 1);
    const double f = u - static_cast<double>(i);
    std::array<std::uint8_t, 3> c{};
    for (std::size_t k = 0; k < 3; ++k)
        c[k] = static_cast<std::uint8_t>(std::lround(stops[i][k] + f * (stops[i + 1][k] - stops[i][k])));
    return c;
}

int run_scan_viz(const ScanVizArgs& a) {
    const auto kind = parse_scan_kind(a.kind);
    const auto order = make_order(kind, a.height, a.width, a.stripe, a.direction);
    std::ostringstream grid;
    for (std::size_t y = 0; y < a.height; ++y) {
        for (std::size_t x = 0; x < a.width; ++x) grid << (x ? " " : "") << order.inv[y * a.width + x];
        grid << "\n";
    }
    std::cout << grid.str();
    if (!a.out.empty()) {
        write_text(a.out + ".txt", grid.str());
        const std::size_t n = order.length();
        RgbImage img{a.width * a.cell, a.height * a.cell, std::vector<std::uint8_t>(n * a.cell * a.cell * 3)};
        for (std::size_t py = 0; py < img.height; ++py)
            for (std::size_t px = 0; px < img.width; ++px) {
                const std::size_t t = order.inv[(py / a.cell) * a.width + px / a.cell];
                const auto c = ramp(n > 1 ? static_cast<double>(t) / static_cast<double>(n - 1) : 0.0);
                std::copy(c.begin(), c.end(), img.pixels.begin() + static_cast<std::ptrdiff_t>((py * img.width + px) * 3));
            }
        write_or_fail([&] { write_ppm(img, a.out + ".ppm"); });
    }
    return kOk;
}

// --- bench ----------------------------------------------------------------

struct BenchArgs {
    ModelFlags model;
    std::size_t bands = 31;
    std::size_t size = 16;
    std::size_t scale = 4;
    std::size_t repeats = 1;
};

int run_bench(const BenchArgs& a) {
    const auto mc = a.model.config(a.bands, a.scale);
    const auto w = init_weights<float>(mc);
    const auto x = synth_cube(a.model.seed, a.bands, a.size, a.size).tensor();
    double best = 1e300;
    for (std::size_t r = 0; r < a.repeats; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto y = forward(x, w);
        best = std::min(best, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
    }
    std::cout << "scan,params,flops,forward_ms\n"
              << to_string(mc.scan) << "," << count_params(w) << "," << estimate_flops(mc, a.size, a.size) << ","
              << format_number(best) << "\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hyperspectral super-resolution with wavelet-domain selective scans", "hsrmamba"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    app.set_version_flag("--version", "hsrmamba 0.1.0");

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "Generate a synthetic hyperspectral cube");
    s->add_option("--seed", synth.seed, "Generator seed");
    s->add_option("--bands", synth.bands, "Number of spectral bands")->check(CLI::Range(std::size_t{4}, std::size_t{1} << 16));
    s->add_option("--size", synth.size, "Spatial side length")->check(CLI::Range(std::size_t{4}, std::size_t{1} << 16));
    s->add_option("--smoothness", synth.smoothness, "Blob width relative to image size, in (0, 1]")
        ->check(CLI::Range(1e-6, 1.0));
    s->add_option("--out", synth.out, "Output HSC file")->required();

    DegradeArgs deg;
    auto* d = app.add_subcommand("degrade", "Blur (3x3 Gaussian, sigma 0.5) and decimate a cube");
    d->add_option("--in", deg.in, "Input HSC file")->required();
    d->add_option("--scale", deg.scale, "Downsampling factor")->check(kScaleCheck);
    d->add_option("--out", deg.out, "Output HSC file")->required();

    InitArgs ini;
    auto* i = app.add_subcommand("init", "Write a freshly initialized checkpoint");
    ini.model.attach(i);
    i->add_option("--bands", ini.bands, "Number of spectral bands")->check(CLI::PositiveNumber);
    i->add_option("--scale", ini.scale, "Upsampling factor")->check(kScaleCheck);
    i->add_flag("--zero-tail", ini.zero_tail, "Zero the global tail so the model reduces to bicubic upsampling");
    i->add_option("--out", ini.out, "Output HSRW checkpoint")->required();

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train on random aligned patches of one GT cube");
    tr.model.attach(t);
    t->add_option("--gt", tr.gt, "Ground-truth HSC file")->required();
    t->add_option("--scale", tr.scale, "Upsampling factor")->check(kScaleCheck);
    auto* steps = t->add_option("--steps", tr.steps, "Optimizer steps")->check(CLI::NonNegativeNumber);
    auto* epochs = t->add_option("--epochs", tr.epochs, "Full passes over the sampled patches (0: use --steps)");
    steps->excludes(epochs);
    t->add_option("--batch", tr.batch, "Patches per step")->check(CLI::PositiveNumber);
    t->add_option("--patch", tr.patch, "GT patch side (0: 64, or 128 at scale 8, capped by the cube)");
    t->add_option("--patches", tr.patches, "Number of patches sampled from the cube")->check(CLI::PositiveNumber);
    t->add_option("--lr", tr.lr, "AdamW learning rate")->check(CLI::PositiveNumber);
    t->add_option("--weight-decay", tr.weight_decay, "AdamW decoupled weight decay")->check(CLI::NonNegativeNumber);
    t->add_option("--clip", tr.clip, "Global gradient-norm clip (0: off)")->check(CLI::NonNegativeNumber);
    t->add_option("--data-seed", tr.data_seed, "Seed for patch sampling and shuffling");
    t->add_option("--checkpoint-every", tr.checkpoint_every, "Save --ckpt every N steps (0: only at the end)");
    t->add_option("--log-every", tr.log_every, "Print the loss every N steps to stderr (0: quiet)");
    t->add_option("--ckpt", tr.ckpt, "Output HSRW checkpoint")->required();
    t->add_option("--loss-csv", tr.loss_csv, "Write the per-step loss curve as CSV");

    InferArgs inf;
    auto* f = app.add_subcommand("infer", "Super-resolve a cube with a checkpoint");
    f->add_option("--in", inf.in, "Low-resolution HSC file")->required();
    f->add_option("--ckpt", inf.ckpt, "HSRW checkpoint")->required();
    f->add_option("--out", inf.out, "Output HSC file")->required();
    f->add_option("--rgb", inf.rgb, "Also write a pseudo-colour P6 preview");
    f->add_option("--rgb-bands", inf.rgb_bands, "Bands used for R, G, B")->expected(3);

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "Compute PSNR, SSIM, SAM and ERGAS against ground truth");
    e->add_option("--pred", ev.pred, "Predicted HSC file")->required();
    e->add_option("--gt", ev.gt, "Ground-truth HSC file")->required();
    e->add_option("--csv", ev.csv, "Write the metric row as CSV");
    e->add_option("--sam-map", ev.sam_map, "Write the per-pixel SAM error map as a P6 image");
    e->add_option("--scale", ev.scale, "Resolution ratio used by ERGAS")->check(CLI::PositiveNumber);

    ScanVizArgs sv;
    auto* v = app.add_subcommand("scan-viz", "Print the sequence index of every grid cell for a scan order");
    v->add_option("--height", sv.height, "Grid height")->check(CLI::PositiveNumber);
    v->add_option("--width", sv.width, "Grid width")->check(CLI::PositiveNumber);
    v->add_option("--stripe", sv.stripe, "Stripe length (window side for --kind window)")->check(CLI::PositiveNumber);
    v->add_option("--kind", sv.kind, "stripe, raster (alias global) or window")
        ->check(CLI::IsMember({"stripe", "raster", "global", "window"}));
    v->add_option("--direction", sv.direction, "Scan direction 0-3")->check(CLI::Range(0, 3));
    v->add_option("--cell", sv.cell, "Pixels per cell in the P6 image")->check(CLI::PositiveNumber);
    v->add_option("--out", sv.out, "Write PREFIX.txt and PREFIX.ppm");

    BenchArgs be;
    auto* b = app.add_subcommand("bench", "Report parameters, FLOPs and forward time");
    be.model.attach(b);
    b->add_option("--bands", be.bands, "Number of spectral bands")->check(CLI::Range(std::size_t{4}, std::size_t{1} << 16));
    b->add_option("--size", be.size, "Low-resolution side length")->check(CLI::Range(std::size_t{4}, std::size_t{1} << 16));
    b->add_option("--scale", be.scale, "Upsampling factor")->check(kScaleCheck);
    b->add_option("--repeats", be.repeats, "Timed forward passes (best is reported)")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int rc = app.exit(err);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        if (*s) return run_synth(synth);
        if (*d) return run_degrade(deg);
        if (*i) return run_init(ini);
        if (*t) return run_train(tr);
        if (*f) return run_infer(inf);
        if (*e) return run_eval(ev);
        if (*v) return run_scan_viz(sv);
        if (*b) return run_bench(be);
    } catch (const CliError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return err.code;
    } catch (const NumericError& err) {
        std::cerr << "numeric error: " << err.what() << "\n";
        return kNumeric;
    } catch (const ContractError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kUsage;
    } catch (const FormatError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kUsage;
    } catch (const io::WriteError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kUsage;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kNumeric;
    }
    return kUsage;
}
