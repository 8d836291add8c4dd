#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lamino/config.hpp"
#include "lamino/eval.hpp"
#include "lamino/fbp.hpp"
#include "lamino/io.hpp"
#include "lamino/parallel.hpp"
#include "lamino/phantom.hpp"
#include "lamino/preproc.hpp"
#include "lamino/projector.hpp"
#include "lamino/rng.hpp"
#include "lamino/solver.hpp"

using namespace lamino;
using nlohmann::json;

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

Dims parse_dims(const std::string& s) {
    Dims d;
    if (std::sscanf(s.c_str(), "%d,%d,%d", &d.nx, &d.ny, &d.nz) != 3)
        throw std::invalid_argument("expected dims as nx,ny,nz, got " + s);
    return d;
}

void write_shifts_csv(const std::string& path, const ShiftTable& table) {
    std::ostringstream o;
    o << "index,du_px,dv_px\n";
    for (int i = 0; i < table.size(); ++i)
        o << i << "," << fmt(table.du[static_cast<std::size_t>(i)]) << ","
          << fmt(table.dv[static_cast<std::size_t>(i)]) << "\n";
    write_text_file(path, o.str());
}

void write_trace_csv(const std::string& path,
                     const std::vector<TraceRow>& trace) {
    std::ostringstream o;
    o << "iteration,data_term,tv_term,total\n";
    for (const TraceRow& r : trace)
        o << r.iter << "," << fmt(r.data_term) << "," << fmt(r.tv_term) << ","
          << fmt(r.total) << "\n";
    write_text_file(path, o.str());
}

struct LoadedStack {
    ProjectionStack stack;
    LaminoGeometry geom;
    StackHeader header;
};

LoadedStack load_stack(const std::string& path) {
    LoadedStack s;
    s.stack = read_stack(path, &s.header, &s.geom);
    return s;
}

// Shared preprocessing for fbp/reconstruct: optional decimation to
// n_keep angles, optional phase-correlation alignment.
void prep_stack(LoadedStack& s, int n_keep, bool align, bool* align_skipped,
                const std::string& shifts_csv) {
    if (n_keep > 0)
        decimate_stack(s.stack, s.geom, n_keep);
    if (align) {
        AlignResult res = align_projections(s.stack);
        if (res.skipped_degenerate)
            std::cerr << "warning: alignment skipped (degenerate all-zero "
                         "projection)\n";
        if (align_skipped)
            *align_skipped = res.skipped_degenerate;
        s.stack = std::move(res.stack);
        if (!shifts_csv.empty())
            write_shifts_csv(shifts_csv, res.shifts);
    }
}

struct EvalOutput {
    MetricsRecord rec;
    GmmFit recon_fit;
    std::string ref_mode;
};

EvalOutput run_eval(const Volume& recon, const Volume& ref, double theta_deg,
                    bool proxy_ref) {
    if (!(recon.dims == ref.dims))
        throw std::invalid_argument(
            "eval: geometry mismatch: reconstruction is " +
            dims_to_string(recon.dims) + ", reference is " +
            dims_to_string(ref.dims));
    if (std::abs(recon.voxel_nm - ref.voxel_nm) > 1e-9 * ref.voxel_nm)
        throw std::invalid_argument(
            "eval: geometry mismatch: voxel sizes differ (" +
            std::to_string(recon.voxel_nm) + " vs " +
            std::to_string(ref.voxel_nm) + " nm)");

    EvalOutput out;
    auto [recon_bin, recon_fit] = binarize_em(recon);
    out.recon_fit = recon_fit;

    Volume ref_bin;
    if (proxy_ref) {
        ref_bin = binarize_em(ref).first;
        out.ref_mode = "em_proxy";
    } else {
        ref_bin = occupancy_mask(ref);
        out.ref_mode = "occupancy";
    }

    const int nz = recon.dims.nz;
    out.rec.ber_all = ber(recon_bin, ref_bin, z_range_all(nz));
    out.rec.ber_fine = ber(recon_bin, ref_bin, z_range_fine(nz));
    out.rec.pcc_all = pcc(recon, ref, z_range_all(nz));
    out.rec.cone_energy_ratio = cone_energy_ratio(psd(recon), theta_deg);
    return out;
}

std::string metrics_csv(const std::vector<std::pair<std::string,
                                                    MetricsRecord>>& rows) {
    std::ostringstream o;
    o << "name,ber_all,ber_fine,pcc,cone_energy_ratio,config_hash\n";
    for (const auto& [name, r] : rows)
        o << name << "," << fmt(r.ber_all) << "," << fmt(r.ber_fine) << ","
          << fmt(r.pcc_all) << "," << fmt(r.cone_energy_ratio) << ","
          << r.config_hash << "\n";
    return o.str();
}

json metrics_json(const std::string& name, const EvalOutput& ev,
                  double theta_deg) {
    json j;
    j["name"] = name;
    j["ber_all"] = ev.rec.ber_all;
    j["ber_fine"] = ev.rec.ber_fine;
    j["pcc"] = ev.rec.pcc_all;
    j["cone_energy_ratio"] = ev.rec.cone_energy_ratio;
    j["config_hash"] = ev.rec.config_hash;
    j["theta_deg"] = theta_deg;
    j["reference_binarization"] = ev.ref_mode;
    // BER compares EM-binarized volumes; PCC uses raw voxel values.
    j["ber_inputs"] = "binarized";
    j["pcc_inputs"] = "raw";
    j["em_fit"] = {{"threshold", ev.recon_fit.threshold},
                   {"mu0", ev.recon_fit.mu0},
                   {"mu1", ev.recon_fit.mu1},
                   {"var0", ev.recon_fit.var0},
                   {"var1", ev.recon_fit.var1},
                   {"w0", ev.recon_fit.w0},
                   {"w1", ev.recon_fit.w1},
                   {"iterations", ev.recon_fit.iterations}};
    j["z_range_fine_starts_at"] = "ceil(0.70 * nz)";
    return j;
}

int run(int argc, char** argv) {
    CLI::App app{"laminographic imaging toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path, "run-config file (key = value)");

    // --- phantom ---
    auto* cmd_phantom = app.add_subcommand(
        "phantom", "generate a synthetic multi-layer IC volume");
    std::string ph_out = "phantom.lmv";
    std::optional<std::uint64_t> ph_seed;
    std::optional<std::string> ph_dims;
    cmd_phantom->add_option("-o,--out", ph_out, "output volume (.lmv)");
    cmd_phantom->add_option("--seed", ph_seed, "phantom seed");
    cmd_phantom->add_option("--dims", ph_dims, "volume dims nx,ny,nz");

    // --- project ---
    auto* cmd_project = app.add_subcommand(
        "project", "synthesize a laminographic projection stack");
    std::string pr_in, pr_out = "stack.lms";
    std::optional<int> pr_angles;
    std::optional<double> pr_theta, pr_jitter;
    cmd_project->add_option("input", pr_in, "input volume (.lmv)")->required();
    cmd_project->add_option("-o,--out", pr_out, "output stack (.lms)");
    cmd_project->add_option("--angles", pr_angles, "number of angles");
    cmd_project->add_option("--theta", pr_theta, "laminographic angle (deg)");
    cmd_project->add_option("--jitter-sigma", pr_jitter,
                            "inject random shifts (px std dev)");

    // --- fbp ---
    auto* cmd_fbp =
        app.add_subcommand("fbp", "filtered backprojection baseline");
    std::string fb_in, fb_out = "fbp.lmv", fb_window = "none";
    std::optional<int> fb_angles;
    std::optional<std::string> fb_dims;
    bool fb_align = false;
    cmd_fbp->add_option("input", fb_in, "input stack (.lms)")->required();
    cmd_fbp->add_option("-o,--out", fb_out, "output volume (.lmv)");
    cmd_fbp->add_option("--window", fb_window, "ramp window: none|hann");
    cmd_fbp->add_option("--angles", fb_angles,
                        "decimate the dense scan to this many angles");
    cmd_fbp->add_option("--dims", fb_dims, "output dims nx,ny,nz");
    cmd_fbp->add_flag("--align", fb_align, "phase-correlation alignment");

    // --- reconstruct ---
    auto* cmd_rec = app.add_subcommand(
        "reconstruct", "self-supervised physics-regularized reconstruction");
    std::string rc_in, rc_out = "recon.lmv", rc_trace, rc_ablate,
                rc_snapshot_dir, rc_weights_out;
    std::optional<int> rc_angles, rc_iters;
    std::optional<std::uint64_t> rc_seed;
    bool rc_align = false;
    cmd_rec->add_option("input", rc_in, "input stack (.lms)")->required();
    cmd_rec->add_option("-o,--out", rc_out, "output volume (.lmv)");
    cmd_rec->add_option("--angles", rc_angles,
                        "decimate the dense scan to this many angles");
    cmd_rec->add_option("--ablate", rc_ablate, "ablation: no_hpf|no_tv");
    cmd_rec->add_option("--iters", rc_iters, "optimization iterations");
    cmd_rec->add_option("--seed", rc_seed,
                        "master seed (weights; noise seed derived)");
    cmd_rec->add_option("--trace", rc_trace,
                        "loss trace CSV (default <out>.trace.csv)");
    cmd_rec->add_option("--snapshot-dir", rc_snapshot_dir,
                        "write intermediate volumes here");
    cmd_rec->add_option("--weights-out", rc_weights_out,
                        "write final network weights (.lmv, kind=weights)");
    cmd_rec->add_flag("--align", rc_align, "phase-correlation alignment");

    // --- eval ---
    auto* cmd_eval = app.add_subcommand(
        "eval", "BER / PCC / missing-cone metrics against a reference");
    std::string ev_recon, ev_ref, ev_out = "metrics.csv", ev_json, ev_psd_out,
                ev_name = "recon";
    std::optional<double> ev_theta;
    bool ev_proxy = false;
    cmd_eval->add_option("recon", ev_recon, "reconstruction (.lmv)")
        ->required();
    cmd_eval->add_option("--ref", ev_ref, "reference volume (.lmv)")
        ->required();
    cmd_eval->add_option("-o,--out", ev_out, "metrics CSV");
    cmd_eval->add_option("--json", ev_json,
                         "JSON sidecar (default <out>.json)");
    cmd_eval->add_option("--psd-out", ev_psd_out,
                         "export the PSD as a volume (.lmv, kind=psd)");
    cmd_eval->add_option("--theta", ev_theta,
                         "laminographic angle for the cone mask (deg)");
    cmd_eval->add_option("--name", ev_name, "row label in the CSV");
    cmd_eval->add_flag("--proxy-ref", ev_proxy,
                       "EM-binarize the reference (dense-recon proxy "
                       "protocol) instead of using its occupancy mask");

    // --- ablate ---
    auto* cmd_abl = app.add_subcommand(
        "ablate", "run {full, no_hpf, no_tv} and compare");
    std::string ab_in, ab_ref, ab_out = "ablation.csv", ab_dir;
    std::optional<int> ab_angles, ab_iters;
    cmd_abl->add_option("input", ab_in, "input stack (.lms)")->required();
    cmd_abl->add_option("--ref", ab_ref, "reference volume (.lmv)")
        ->required();
    cmd_abl->add_option("-o,--out", ab_out, "comparison CSV");
    cmd_abl->add_option("--angles", ab_angles, "decimate to this many angles");
    cmd_abl->add_option("--iters", ab_iters, "optimization iterations");
    cmd_abl->add_option("--keep-volumes", ab_dir,
                        "directory for the three reconstructions");

    // --- slice ---
    auto* cmd_slice = app.add_subcommand(
        "slice", "export an axial layer or yz cut as 8-bit PGM");
    std::string sl_in, sl_out = "slice.pgm", sl_axis = "z";
    int sl_index = 0;
    cmd_slice->add_option("input", sl_in, "input volume (.lmv)")->required();
    cmd_slice->add_option("-o,--out", sl_out, "output image (.pgm)");
    cmd_slice->add_option("--axis", sl_axis, "z (layer) or x (yz cut)");
    cmd_slice->add_option("--index", sl_index, "slice index")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    RunConfig cfg;
    if (!config_path.empty())
        cfg = parse_config_file(config_path);

    // flag overrides, folded into the effective config before hashing
    if (cmd_phantom->parsed()) {
        if (ph_seed)
            cfg.phantom.seed = *ph_seed;
        if (ph_dims)
            cfg.phantom.dims = parse_dims(*ph_dims);
    }
    if (cmd_project->parsed()) {
        if (pr_angles)
            cfg.n_angles = *pr_angles;
        if (pr_theta)
            cfg.theta_deg = *pr_theta;
        if (pr_jitter)
            cfg.jitter_sigma_px = *pr_jitter;
    }
    if (cmd_rec->parsed()) {
        if (rc_iters)
            cfg.n_iters = *rc_iters;
        if (rc_seed) {
            cfg.weight_seed = *rc_seed;
            cfg.noise_seed = derive_seed(*rc_seed, 1);
        }
        if (rc_align)
            cfg.align = true;
        if (rc_ablate == "no_hpf")
            cfg.no_hpf = true;
        else if (rc_ablate == "no_tv")
            cfg.no_tv = true;
        else if (!rc_ablate.empty())
            throw std::invalid_argument("unknown ablation '" + rc_ablate +
                                        "' (expected no_hpf or no_tv)");
    }
    if (cmd_abl->parsed() && ab_iters)
        cfg.n_iters = *ab_iters;
    if (cmd_fbp->parsed() && fb_align)
        cfg.align = true;
    if (cmd_eval->parsed() && ev_theta)
        cfg.theta_deg = *ev_theta;

    set_num_threads(cfg.threads);
    const std::uint64_t hash = config_hash(cfg);

    if (cmd_phantom->parsed()) {
        PhantomLayout layout;
        Volume vol = generate_ic_phantom(cfg.phantom, &layout);
        write_volume(ph_out, vol, ValueKind::contrast,
                     {hash, cfg.phantom.seed});
        std::ostringstream meta;
        meta << "kind = phantom\n"
             << "config_hash = " << hash << "\n"
             << "layers = " << layout.layer_z.size() << "\n";
        for (std::size_t i = 0; i < layout.layer_z.size(); ++i)
            meta << "layer_" << i << " = z:" << layout.layer_z[i]
                 << " pitch:" << layout.layer_pitch[i]
                 << (layout.layer_is_fine[i] ? " fine" : " coarse") << "\n";
        meta << "vias = " << layout.vias.size() << "\n";
        meta << config_to_text(cfg);
        write_text_file(ph_out + ".meta", meta.str());
        std::cout << "wrote " << ph_out << " ("
                  << dims_to_string(cfg.phantom.dims) << ")\n";
        return 0;
    }

    if (cmd_project->parsed()) {
        Volume vol = read_volume(pr_in);
        LaminoGeometry geom;
        geom.theta_deg = cfg.theta_deg;
        geom.ray_step_frac = cfg.ray_step_frac;
        geom.angles_deg = evenly_spaced_angles(cfg.n_angles);
        if (cfg.det_nu > 0 && cfg.det_nv > 0) {
            geom.det_nu = cfg.det_nu;
            geom.det_nv = cfg.det_nv;
            geom.det_pixel_nm = vol.voxel_nm;
        } else {
            fit_detector(geom, vol.dims, vol.voxel_nm);
        }
        geom.validate();
        ProjectionStack stack = forward_project_all(vol, geom);
        if (cfg.jitter_sigma_px > 0.0) {
            auto [jittered, shifts] = jitter_projections(
                stack, cfg.jitter_sigma_px, cfg.jitter_seed);
            stack = std::move(jittered);
            write_shifts_csv(pr_out + ".shifts.csv", shifts);
        }
        write_stack(pr_out, stack, geom, {hash, cfg.phantom.seed});
        std::cout << "wrote " << pr_out << " (" << geom.n_angles()
                  << " angles, theta=" << geom.theta_deg << ")\n";
        return 0;
    }

    if (cmd_fbp->parsed()) {
        LoadedStack s = load_stack(fb_in);
        prep_stack(s, fb_angles.value_or(0), cfg.align, nullptr,
                   fb_out + ".shifts.csv");
        const Dims dims = fb_dims ? parse_dims(*fb_dims) : cfg.phantom.dims;
        FilterWindow window;
        if (fb_window == "none")
            window = FilterWindow::none;
        else if (fb_window == "hann")
            window = FilterWindow::hann;
        else
            throw std::invalid_argument("unknown window '" + fb_window +
                                        "' (expected none or hann)");
        Volume vol =
            fbp_reconstruct(s.stack, s.geom, dims, s.header.pixel_nm, window);
        write_volume(fb_out, vol, ValueKind::contrast, {hash, 0});
        std::cout << "wrote " << fb_out << " (" << s.geom.n_angles()
                  << " angles)\n";
        return 0;
    }

    if (cmd_rec->parsed()) {
        LoadedStack s = load_stack(rc_in);
        prep_stack(s, rc_angles.value_or(0), cfg.align, nullptr,
                   rc_out + ".shifts.csv");
        SolveOptions opt = cfg.make_solve_options(s.geom.det_nu);
        SolveResult res = reconstruct(s.stack, s.geom, cfg.phantom.dims,
                                      s.header.pixel_nm, opt);
        if (res.aborted) {
            if (!res.volume.values.empty())
                write_volume(rc_out + ".last.lmv", res.volume,
                             ValueKind::contrast, {hash, cfg.weight_seed});
            write_trace_csv(rc_trace.empty() ? rc_out + ".trace.csv"
                                             : rc_trace,
                            res.trace);
            throw std::runtime_error("reconstruction aborted: " +
                                     res.abort_reason);
        }
        write_volume(rc_out, res.volume, ValueKind::contrast,
                     {hash, cfg.weight_seed});
        write_trace_csv(rc_trace.empty() ? rc_out + ".trace.csv" : rc_trace,
                        res.trace);
        if (!rc_snapshot_dir.empty())
            for (const auto& [iter, snap] : res.snapshots)
                write_volume(rc_snapshot_dir + "/snap_" +
                                 std::to_string(iter) + ".lmv",
                             snap, ValueKind::contrast,
                             {hash, cfg.weight_seed});
        if (!rc_weights_out.empty()) {
            Volume w({static_cast<int>(res.final_params.size()), 1, 1}, 1.0);
            w.values = res.final_params;
            write_volume(rc_weights_out, w, ValueKind::weights,
                         {hash, cfg.weight_seed});
            DipNetwork net(opt.arch, cfg.phantom.dims, opt.weight_seed);
            std::ostringstream meta;
            meta << "kind = weights\nconfig_hash = " << hash << "\n";
            for (const ParamSlot& slot : net.param_slots())
                meta << slot.name << " = offset:" << slot.offset
                     << " count:" << slot.count << " in:" << slot.in_c
                     << " out:" << slot.out_c << " k:" << slot.k
                     << " stride:" << slot.stride << "\n";
            write_text_file(rc_weights_out + ".meta", meta.str());
        }
        std::cout << "wrote " << rc_out << " (" << res.trace.size()
                  << " iterations)\n";
        return 0;
    }

    if (cmd_eval->parsed()) {
        VolumeHeader recon_hdr;
        Volume recon = read_volume(ev_recon, &recon_hdr);
        Volume ref = read_volume(ev_ref);
        EvalOutput ev = run_eval(recon, ref, cfg.theta_deg, ev_proxy);
        ev.rec.config_hash = recon_hdr.config_hash;
        write_text_file(ev_out, metrics_csv({{ev_name, ev.rec}}));
        const std::string json_path =
            ev_json.empty() ? ev_out + ".json" : ev_json;
        write_text_file(json_path,
                        metrics_json(ev_name, ev, cfg.theta_deg).dump(2) +
                            "\n");
        if (!ev_psd_out.empty())
            write_volume(ev_psd_out, psd(recon), ValueKind::psd,
                         {recon_hdr.config_hash, 0});
        std::cout << metrics_csv({{ev_name, ev.rec}});
        return 0;
    }

    if (cmd_abl->parsed()) {
        LoadedStack s = load_stack(ab_in);
        prep_stack(s, ab_angles.value_or(0), cfg.align, nullptr, "");
        Volume ref = read_volume(ab_ref);
        std::vector<std::pair<std::string, MetricsRecord>> rows;
        for (const std::string variant : {"full", "no_hpf", "no_tv"}) {
            RunConfig vcfg = cfg;
            vcfg.no_hpf = variant == "no_hpf";
            vcfg.no_tv = variant == "no_tv";
            SolveOptions opt = vcfg.make_solve_options(s.geom.det_nu);
            SolveResult res = reconstruct(s.stack, s.geom, vcfg.phantom.dims,
                                          s.header.pixel_nm, opt);
            if (res.aborted)
                throw std::runtime_error("ablation variant " + variant +
                                         " aborted: " + res.abort_reason);
            EvalOutput ev =
                run_eval(res.volume, ref, vcfg.theta_deg, false);
            ev.rec.config_hash = config_hash(vcfg);
            rows.emplace_back(variant, ev.rec);
            if (!ab_dir.empty())
                write_volume(ab_dir + "/" + variant + ".lmv", res.volume,
                             ValueKind::contrast,
                             {ev.rec.config_hash, vcfg.weight_seed});
        }
        write_text_file(ab_out, metrics_csv(rows));
        std::cout << metrics_csv(rows);
        return 0;
    }

    if (cmd_slice->parsed()) {
        Volume vol = read_volume(sl_in);
        int width = 0, height = 0;
        std::vector<double> img;
        if (sl_axis == "z") {
            if (sl_index < 0 || sl_index >= vol.dims.nz)
                throw std::invalid_argument("slice index out of range");
            width = vol.dims.nx;
            height = vol.dims.ny;
            img.resize(static_cast<std::size_t>(width) * height);
            for (int y = 0; y < height; ++y)
                for (int x = 0; x < width; ++x)
                    img[static_cast<std::size_t>(y) * width + x] =
                        vol.at(x, y, sl_index);
        } else if (sl_axis == "x") {
            if (sl_index < 0 || sl_index >= vol.dims.nx)
                throw std::invalid_argument("slice index out of range");
            width = vol.dims.ny;
            height = vol.dims.nz;
            img.resize(static_cast<std::size_t>(width) * height);
            for (int z = 0; z < height; ++z)
                for (int y = 0; y < width; ++y)
                    img[static_cast<std::size_t>(z) * width + y] =
                        vol.at(sl_index, y, z);
        } else {
            throw std::invalid_argument("unknown axis '" + sl_axis +
                                        "' (expected z or x)");
        }
        // 2.5th / 80th percentile display window
        std::vector<double> sorted = img;
        std::sort(sorted.begin(), sorted.end());
        const auto pick = [&sorted](double p) {
            const std::size_t k = static_cast<std::size_t>(
                p * static_cast<double>(sorted.size() - 1) + 0.5);
            return sorted[k];
        };
        const double lo = pick(0.025);
        const double hi = pick(0.80);
        const double span = hi > lo ? hi - lo : 1.0;
        std::vector<std::uint8_t> gray(img.size());
        for (std::size_t i = 0; i < img.size(); ++i) {
            const double t = std::clamp((img[i] - lo) / span, 0.0, 1.0);
            gray[i] = static_cast<std::uint8_t>(std::lround(255.0 * t));
        }
        write_pgm(sl_out, width, height, gray);
        std::cout << "wrote " << sl_out << " (" << width << "x" << height
                  << ")\n";
        return 0;
    }

    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const std::exception& e) {
        std::string msg = e.what();
        for (char& c : msg)
            if (c == '\n')
                c = ' ';
        std::cerr << "error: " << msg << "\n";
        return 1;
    }
}
