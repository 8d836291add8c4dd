#include "lamino/config.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

#include "lamino/projector.hpp"

namespace lamino {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b])))
        ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1])))
        --e;
    return s.substr(b, e - b);
}

[[noreturn]] void fail(const std::string& origin, int line,
                       const std::string& msg) {
    throw std::invalid_argument("config " + origin + ": line " +
                                std::to_string(line) + ": " + msg);
}

double parse_double(const std::string& v, const std::string& origin, int line,
                    const std::string& key) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size())
            fail(origin, line, "invalid number for key '" + key + "': " + v);
        return d;
    } catch (const std::invalid_argument&) {
        fail(origin, line, "invalid number for key '" + key + "': " + v);
    } catch (const std::out_of_range&) {
        fail(origin, line, "number out of range for key '" + key + "': " + v);
    }
}

long long parse_int(const std::string& v, const std::string& origin, int line,
                    const std::string& key) {
    try {
        std::size_t pos = 0;
        const long long n = std::stoll(v, &pos);
        if (pos != v.size())
            fail(origin, line, "invalid integer for key '" + key + "': " + v);
        return n;
    } catch (const std::invalid_argument&) {
        fail(origin, line, "invalid integer for key '" + key + "': " + v);
    } catch (const std::out_of_range&) {
        fail(origin, line, "integer out of range for key '" + key + "': " + v);
    }
}

bool parse_bool(const std::string& v, const std::string& origin, int line,
                const std::string& key) {
    if (v == "true" || v == "1" || v == "yes" || v == "on")
        return true;
    if (v == "false" || v == "0" || v == "no" || v == "off")
        return false;
    fail(origin, line, "invalid boolean for key '" + key + "': " + v);
}

std::vector<int> parse_int_list(const std::string& v,
                                const std::string& origin, int line,
                                const std::string& key) {
    std::vector<int> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty())
            fail(origin, line, "empty list element for key '" + key + "'");
        out.push_back(static_cast<int>(parse_int(item, origin, line, key)));
    }
    if (out.empty())
        fail(origin, line, "empty list for key '" + key + "'");
    return out;
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace

LaminoGeometry RunConfig::make_geometry() const {
    LaminoGeometry geom;
    geom.theta_deg = theta_deg;
    geom.angles_deg = evenly_spaced_angles(n_angles);
    geom.ray_step_frac = ray_step_frac;
    if (det_nu > 0 && det_nv > 0) {
        geom.det_nu = det_nu;
        geom.det_nv = det_nv;
        geom.det_pixel_nm = phantom.voxel_nm;
    } else {
        fit_detector(geom, phantom.dims, phantom.voxel_nm);
    }
    geom.validate();
    return geom;
}

double RunConfig::hpf_sigma_for(int det_nu_actual) const {
    return hpf_sigma_px > 0.0 ? hpf_sigma_px
                              : hpf_sigma_frac * det_nu_actual;
}

ArchConfig RunConfig::make_arch() const {
    ArchConfig arch;
    arch.n_stages = n_stages;
    arch.channels = channels;
    arch.bottleneck = bottleneck;
    arch.bottleneck_convs = bottleneck_convs;
    arch.leaky_slope = leaky_slope;
    arch.xavier_gain = xavier_gain;
    arch.output_bound = kContrastBound;
    return arch;
}

SolveOptions RunConfig::make_solve_options(int det_nu_actual) const {
    SolveOptions opt;
    opt.n_iters = n_iters;
    opt.weight_seed = weight_seed;
    opt.noise_seed = noise_seed;
    opt.snapshot_stride = snapshot_stride;
    opt.arch = make_arch();
    opt.loss.no_hpf = no_hpf;
    opt.loss.no_tv = no_tv;
    opt.loss.symmetric_hpf = symmetric_hpf;
    opt.loss.normalize_data_term = normalize_data_term;
    opt.loss.hpf_sigma_px = hpf_sigma_for(det_nu_actual);
    opt.loss.lambda.z_split_frac = z_split_frac;
    opt.loss.lambda.lambda_coarse = lambda_coarse;
    opt.loss.lambda.lambda_fine = lambda_fine;
    opt.adam.lr_initial = lr_initial;
    opt.adam.halve_after = lr_halve_after;
    return opt;
}

RunConfig parse_config_text(const std::string& text,
                            const std::string& origin) {
    RunConfig cfg;
    using Setter = std::function<void(RunConfig&, const std::string&,
                                      const std::string&, int)>;
    // section.key -> setter
    std::map<std::string, Setter> keys;
    auto add = [&keys](const std::string& name, Setter fn) {
        keys[name] = std::move(fn);
    };

    add("geometry.theta_deg", [](RunConfig& c, const std::string& v,
                                 const std::string& o, int l) {
        c.theta_deg = parse_double(v, o, l, "geometry.theta_deg");
    });
    add("geometry.n_angles", [](RunConfig& c, const std::string& v,
                                const std::string& o, int l) {
        c.n_angles = static_cast<int>(parse_int(v, o, l, "geometry.n_angles"));
    });
    add("geometry.ray_step_frac", [](RunConfig& c, const std::string& v,
                                     const std::string& o, int l) {
        c.ray_step_frac = parse_double(v, o, l, "geometry.ray_step_frac");
    });
    add("geometry.det_nu", [](RunConfig& c, const std::string& v,
                              const std::string& o, int l) {
        c.det_nu = static_cast<int>(parse_int(v, o, l, "geometry.det_nu"));
    });
    add("geometry.det_nv", [](RunConfig& c, const std::string& v,
                              const std::string& o, int l) {
        c.det_nv = static_cast<int>(parse_int(v, o, l, "geometry.det_nv"));
    });

    add("phantom.seed", [](RunConfig& c, const std::string& v,
                           const std::string& o, int l) {
        c.phantom.seed =
            static_cast<std::uint64_t>(parse_int(v, o, l, "phantom.seed"));
    });
    add("phantom.dims", [](RunConfig& c, const std::string& v,
                           const std::string& o, int l) {
        const auto d = parse_int_list(v, o, l, "phantom.dims");
        if (d.size() != 3)
            fail(o, l, "phantom.dims needs nx,ny,nz");
        c.phantom.dims = {d[0], d[1], d[2]};
    });
    add("phantom.voxel_nm", [](RunConfig& c, const std::string& v,
                               const std::string& o, int l) {
        c.phantom.voxel_nm = parse_double(v, o, l, "phantom.voxel_nm");
    });
    add("phantom.z_split_frac", [](RunConfig& c, const std::string& v,
                                   const std::string& o, int l) {
        c.phantom.z_split_frac = parse_double(v, o, l, "phantom.z_split_frac");
    });
    add("phantom.coarse_pitch_px", [](RunConfig& c, const std::string& v,
                                      const std::string& o, int l) {
        c.phantom.coarse_pitch_px =
            static_cast<int>(parse_int(v, o, l, "phantom.coarse_pitch_px"));
    });
    add("phantom.fine_pitch_px", [](RunConfig& c, const std::string& v,
                                    const std::string& o, int l) {
        c.phantom.fine_pitch_px =
            static_cast<int>(parse_int(v, o, l, "phantom.fine_pitch_px"));
    });
    add("phantom.fill_frac", [](RunConfig& c, const std::string& v,
                                const std::string& o, int l) {
        c.phantom.fill_frac = parse_double(v, o, l, "phantom.fill_frac");
    });
    add("phantom.n_layers", [](RunConfig& c, const std::string& v,
                               const std::string& o, int l) {
        c.phantom.n_layers =
            static_cast<int>(parse_int(v, o, l, "phantom.n_layers"));
    });
    add("phantom.via_density", [](RunConfig& c, const std::string& v,
                                  const std::string& o, int l) {
        c.phantom.via_density = parse_double(v, o, l, "phantom.via_density");
    });

    add("preproc.hpf_sigma_px", [](RunConfig& c, const std::string& v,
                                   const std::string& o, int l) {
        c.hpf_sigma_px = parse_double(v, o, l, "preproc.hpf_sigma_px");
    });
    add("preproc.hpf_sigma_frac", [](RunConfig& c, const std::string& v,
                                     const std::string& o, int l) {
        c.hpf_sigma_frac = parse_double(v, o, l, "preproc.hpf_sigma_frac");
    });
    add("preproc.symmetric_hpf", [](RunConfig& c, const std::string& v,
                                    const std::string& o, int l) {
        c.symmetric_hpf = parse_bool(v, o, l, "preproc.symmetric_hpf");
    });
    add("preproc.jitter_sigma_px", [](RunConfig& c, const std::string& v,
                                      const std::string& o, int l) {
        c.jitter_sigma_px = parse_double(v, o, l, "preproc.jitter_sigma_px");
    });
    add("preproc.jitter_seed", [](RunConfig& c, const std::string& v,
                                  const std::string& o, int l) {
        c.jitter_seed = static_cast<std::uint64_t>(
            parse_int(v, o, l, "preproc.jitter_seed"));
    });
    add("preproc.align", [](RunConfig& c, const std::string& v,
                            const std::string& o, int l) {
        c.align = parse_bool(v, o, l, "preproc.align");
    });

    add("dipnet.n_stages", [](RunConfig& c, const std::string& v,
                              const std::string& o, int l) {
        c.n_stages = static_cast<int>(parse_int(v, o, l, "dipnet.n_stages"));
    });
    add("dipnet.channels", [](RunConfig& c, const std::string& v,
                              const std::string& o, int l) {
        c.channels = parse_int_list(v, o, l, "dipnet.channels");
    });
    add("dipnet.bottleneck", [](RunConfig& c, const std::string& v,
                                const std::string& o, int l) {
        c.bottleneck =
            static_cast<int>(parse_int(v, o, l, "dipnet.bottleneck"));
    });
    add("dipnet.bottleneck_convs", [](RunConfig& c, const std::string& v,
                                      const std::string& o, int l) {
        c.bottleneck_convs =
            static_cast<int>(parse_int(v, o, l, "dipnet.bottleneck_convs"));
    });
    add("dipnet.leaky_slope", [](RunConfig& c, const std::string& v,
                                 const std::string& o, int l) {
        c.leaky_slope = parse_double(v, o, l, "dipnet.leaky_slope");
    });
    add("dipnet.xavier_gain", [](RunConfig& c, const std::string& v,
                                 const std::string& o, int l) {
        c.xavier_gain = parse_double(v, o, l, "dipnet.xavier_gain");
    });
    add("dipnet.weight_seed", [](RunConfig& c, const std::string& v,
                                 const std::string& o, int l) {
        c.weight_seed = static_cast<std::uint64_t>(
            parse_int(v, o, l, "dipnet.weight_seed"));
    });
    add("dipnet.noise_seed", [](RunConfig& c, const std::string& v,
                                const std::string& o, int l) {
        c.noise_seed = static_cast<std::uint64_t>(
            parse_int(v, o, l, "dipnet.noise_seed"));
    });

    add("solver.n_iters", [](RunConfig& c, const std::string& v,
                             const std::string& o, int l) {
        c.n_iters = static_cast<int>(parse_int(v, o, l, "solver.n_iters"));
    });
    add("solver.lr_initial", [](RunConfig& c, const std::string& v,
                                const std::string& o, int l) {
        c.lr_initial = parse_double(v, o, l, "solver.lr_initial");
    });
    add("solver.lr_halve_after", [](RunConfig& c, const std::string& v,
                                    const std::string& o, int l) {
        c.lr_halve_after =
            static_cast<int>(parse_int(v, o, l, "solver.lr_halve_after"));
    });
    add("solver.lambda_coarse", [](RunConfig& c, const std::string& v,
                                   const std::string& o, int l) {
        c.lambda_coarse = parse_double(v, o, l, "solver.lambda_coarse");
    });
    add("solver.lambda_fine", [](RunConfig& c, const std::string& v,
                                 const std::string& o, int l) {
        c.lambda_fine = parse_double(v, o, l, "solver.lambda_fine");
    });
    add("solver.z_split_frac", [](RunConfig& c, const std::string& v,
                                  const std::string& o, int l) {
        c.z_split_frac = parse_double(v, o, l, "solver.z_split_frac");
    });
    add("solver.no_hpf", [](RunConfig& c, const std::string& v,
                            const std::string& o, int l) {
        c.no_hpf = parse_bool(v, o, l, "solver.no_hpf");
    });
    add("solver.no_tv", [](RunConfig& c, const std::string& v,
                           const std::string& o, int l) {
        c.no_tv = parse_bool(v, o, l, "solver.no_tv");
    });
    add("solver.normalize_data_term", [](RunConfig& c, const std::string& v,
                                         const std::string& o, int l) {
        c.normalize_data_term =
            parse_bool(v, o, l, "solver.normalize_data_term");
    });
    add("solver.snapshot_stride", [](RunConfig& c, const std::string& v,
                                     const std::string& o, int l) {
        c.snapshot_stride =
            static_cast<int>(parse_int(v, o, l, "solver.snapshot_stride"));
    });

    add("io.threads", [](RunConfig& c, const std::string& v,
                         const std::string& o, int l) {
        c.threads = static_cast<int>(parse_int(v, o, l, "io.threads"));
    });

    std::istringstream in(text);
    std::string line, section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos)
            line.erase(hash);
        line = trim(line);
        if (line.empty())
            continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                fail(origin, line_no, "unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty())
                fail(origin, line_no, "empty section name");
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            fail(origin, line_no, "expected key = value, got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            fail(origin, line_no, "missing key before '='");
        const std::string full =
            section.empty() ? key : section + "." + key;
        auto it = keys.find(full);
        if (it == keys.end())
            fail(origin, line_no, "unknown key '" + full + "'");
        it->second(cfg, value, origin, line_no);
    }
    return cfg;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f)
        throw std::runtime_error("config: cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str(), path);
}

std::string config_to_text(const RunConfig& c) {
    std::ostringstream o;
    o << "[geometry]\n";
    o << "theta_deg = " << fmt_double(c.theta_deg) << "\n";
    o << "n_angles = " << c.n_angles << "\n";
    o << "ray_step_frac = " << fmt_double(c.ray_step_frac) << "\n";
    o << "det_nu = " << c.det_nu << "\n";
    o << "det_nv = " << c.det_nv << "\n";
    o << "[phantom]\n";
    o << "seed = " << c.phantom.seed << "\n";
    o << "dims = " << c.phantom.dims.nx << "," << c.phantom.dims.ny << ","
      << c.phantom.dims.nz << "\n";
    o << "voxel_nm = " << fmt_double(c.phantom.voxel_nm) << "\n";
    o << "z_split_frac = " << fmt_double(c.phantom.z_split_frac) << "\n";
    o << "coarse_pitch_px = " << c.phantom.coarse_pitch_px << "\n";
    o << "fine_pitch_px = " << c.phantom.fine_pitch_px << "\n";
    o << "fill_frac = " << fmt_double(c.phantom.fill_frac) << "\n";
    o << "n_layers = " << c.phantom.n_layers << "\n";
    o << "via_density = " << fmt_double(c.phantom.via_density) << "\n";
    o << "[preproc]\n";
    o << "hpf_sigma_px = " << fmt_double(c.hpf_sigma_px) << "\n";
    o << "hpf_sigma_frac = " << fmt_double(c.hpf_sigma_frac) << "\n";
    o << "symmetric_hpf = " << (c.symmetric_hpf ? "true" : "false") << "\n";
    o << "jitter_sigma_px = " << fmt_double(c.jitter_sigma_px) << "\n";
    o << "jitter_seed = " << c.jitter_seed << "\n";
    o << "align = " << (c.align ? "true" : "false") << "\n";
    o << "[dipnet]\n";
    o << "n_stages = " << c.n_stages << "\n";
    o << "channels = ";
    for (std::size_t i = 0; i < c.channels.size(); ++i)
        o << (i ? "," : "") << c.channels[i];
    o << "\n";
    o << "bottleneck = " << c.bottleneck << "\n";
    o << "bottleneck_convs = " << c.bottleneck_convs << "\n";
    o << "leaky_slope = " << fmt_double(c.leaky_slope) << "\n";
    o << "xavier_gain = " << fmt_double(c.xavier_gain) << "\n";
    o << "weight_seed = " << c.weight_seed << "\n";
    o << "noise_seed = " << c.noise_seed << "\n";
    o << "[solver]\n";
    o << "n_iters = " << c.n_iters << "\n";
    o << "lr_initial = " << fmt_double(c.lr_initial) << "\n";
    o << "lr_halve_after = " << c.lr_halve_after << "\n";
    o << "lambda_coarse = " << fmt_double(c.lambda_coarse) << "\n";
    o << "lambda_fine = " << fmt_double(c.lambda_fine) << "\n";
    o << "z_split_frac = " << fmt_double(c.z_split_frac) << "\n";
    o << "no_hpf = " << (c.no_hpf ? "true" : "false") << "\n";
    o << "no_tv = " << (c.no_tv ? "true" : "false") << "\n";
    o << "normalize_data_term = "
      << (c.normalize_data_term ? "true" : "false") << "\n";
    o << "snapshot_stride = " << c.snapshot_stride << "\n";
    o << "[io]\n";
    o << "threads = " << c.threads << "\n";
    return o.str();
}

std::uint64_t fnv1a64(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t config_hash(const RunConfig& cfg) {
    return fnv1a64(config_to_text(cfg));
}

} // namespace lamino
