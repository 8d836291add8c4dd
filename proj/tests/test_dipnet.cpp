#include <doctest.h>

#include <cmath>
#include <numeric>

#include "lamino/dipnet.hpp"
#include "lamino/rng.hpp"

using namespace lamino;

namespace {

ArchConfig tiny_arch() {
    ArchConfig a;
    a.n_stages = 1;
    a.channels = {2};
    a.bottleneck = 2;
    a.bottleneck_convs = 1;
    return a;
}

// scalar objective for finite differences: weighted sum of the output
double probe(DipNetwork& net, const NoiseInput& z,
             const std::vector<double>& w) {
    const Volume out = net.forward(z);
    double s = 0.0;
    for (std::size_t i = 0; i < out.values.size(); ++i)
        s += w[i] * out.values[i];
    return s;
}

void check_network_gradients(const ArchConfig& arch, const Dims& dims,
                             int n_probe) {
    DipNetwork net(arch, dims, 5);
    const NoiseInput z = make_noise(dims, 1.0, 6);
    std::vector<double> cot(static_cast<std::size_t>(dims.count()));
    Rng rng(7);
    for (double& c : cot)
        c = rng.uniform(-1.0, 1.0);

    net.forward(z);
    const std::uint64_t base_sign = net.activation_sign_hash();
    Volume cot_vol(dims, 1.0, 0.0);
    cot_vol.values = cot;
    net.backward(cot_vol);
    const std::vector<double> analytic = net.grads();

    Rng pick(11);
    const double h = 1e-4;
    int checked = 0;
    int attempts = 0;
    while (checked < n_probe && attempts < 20 * n_probe) {
        ++attempts;
        const std::size_t p = pick.uniform_int(net.param_count());
        const double orig = net.params()[p];
        net.params()[p] = orig + h;
        net.invalidate_cache();
        const double up = probe(net, z, cot);
        const std::uint64_t sign_up = net.activation_sign_hash();
        net.params()[p] = orig - h;
        net.invalidate_cache();
        const double dn = probe(net, z, cot);
        const std::uint64_t sign_dn = net.activation_sign_hash();
        net.params()[p] = orig;
        net.invalidate_cache();
        // central differences are only valid when the probe interval
        // does not cross a leaky-ReLU kink
        if (sign_up != base_sign || sign_dn != base_sign)
            continue;
        ++checked;
        const double fd = (up - dn) / (2.0 * h);
        const double an = analytic[p];
        const double scale = std::max({std::abs(fd), std::abs(an), 1e-10});
        CHECK(std::abs(fd - an) / scale < 1e-3);
    }
    CHECK(checked == n_probe);
}

} // namespace

TEST_CASE("conv2d stride-1 gradient vs finite differences") {
    const int in_c = 2, out_c = 3, k = 3, h = 6, w = 6;
    Tensor in(in_c, h, w);
    Rng rng(1);
    for (double& v : in.v)
        v = rng.uniform(-1.0, 1.0);
    std::vector<double> weights(static_cast<std::size_t>(out_c) * in_c * k * k);
    std::vector<double> bias(static_cast<std::size_t>(out_c));
    for (double& v : weights)
        v = rng.uniform(-0.5, 0.5);
    for (double& v : bias)
        v = rng.uniform(-0.1, 0.1);

    Tensor out;
    conv2d_forward(in, weights.data(), bias.data(), out_c, k, 1, out);
    Tensor cot(out.c, out.h, out.w);
    for (double& v : cot.v)
        v = rng.uniform(-1.0, 1.0);

    Tensor grad_in;
    std::vector<double> gw(weights.size()), gb(bias.size());
    conv2d_backward(in, weights.data(), out_c, k, 1, cot, grad_in, gw.data(),
                    gb.data());

    auto objective = [&]() {
        Tensor o;
        conv2d_forward(in, weights.data(), bias.data(), out_c, k, 1, o);
        double s = 0.0;
        for (std::size_t i = 0; i < o.v.size(); ++i)
            s += cot.v[i] * o.v[i];
        return s;
    };
    const double h_fd = 1e-6;
    Rng pick(2);
    for (int t = 0; t < 30; ++t) {
        const std::size_t p = pick.uniform_int(weights.size());
        const double orig = weights[p];
        weights[p] = orig + h_fd;
        const double up = objective();
        weights[p] = orig - h_fd;
        const double dn = objective();
        weights[p] = orig;
        const double fd = (up - dn) / (2.0 * h_fd);
        CHECK(std::abs(fd - gw[p]) <
              1e-5 * std::max({std::abs(fd), std::abs(gw[p]), 1.0}));
    }
    for (int t = 0; t < 10; ++t) {
        const std::size_t p = pick.uniform_int(in.v.size());
        const double orig = in.v[p];
        in.v[p] = orig + h_fd;
        const double up = objective();
        in.v[p] = orig - h_fd;
        const double dn = objective();
        in.v[p] = orig;
        const double fd = (up - dn) / (2.0 * h_fd);
        CHECK(std::abs(fd - grad_in.v[p]) <
              1e-5 * std::max({std::abs(fd), std::abs(grad_in.v[p]), 1.0}));
    }
}

TEST_CASE("conv2d stride-2 gradient vs finite differences") {
    const int in_c = 2, out_c = 2, k = 3, h = 8, w = 8;
    Tensor in(in_c, h, w);
    Rng rng(3);
    for (double& v : in.v)
        v = rng.uniform(-1.0, 1.0);
    std::vector<double> weights(static_cast<std::size_t>(out_c) * in_c * k * k);
    std::vector<double> bias(static_cast<std::size_t>(out_c), 0.05);
    for (double& v : weights)
        v = rng.uniform(-0.5, 0.5);

    Tensor out;
    conv2d_forward(in, weights.data(), bias.data(), out_c, k, 2, out);
    REQUIRE(out.h == h / 2);
    REQUIRE(out.w == w / 2);
    Tensor cot(out.c, out.h, out.w);
    for (double& v : cot.v)
        v = rng.uniform(-1.0, 1.0);
    Tensor grad_in;
    std::vector<double> gw(weights.size()), gb(bias.size());
    conv2d_backward(in, weights.data(), out_c, k, 2, cot, grad_in, gw.data(),
                    gb.data());

    auto objective = [&]() {
        Tensor o;
        conv2d_forward(in, weights.data(), bias.data(), out_c, k, 2, o);
        double s = 0.0;
        for (std::size_t i = 0; i < o.v.size(); ++i)
            s += cot.v[i] * o.v[i];
        return s;
    };
    const double h_fd = 1e-6;
    Rng pick(4);
    for (int t = 0; t < 20; ++t) {
        const std::size_t p = pick.uniform_int(in.v.size());
        const double orig = in.v[p];
        in.v[p] = orig + h_fd;
        const double up = objective();
        in.v[p] = orig - h_fd;
        const double dn = objective();
        in.v[p] = orig;
        const double fd = (up - dn) / (2.0 * h_fd);
        CHECK(std::abs(fd - grad_in.v[p]) <
              1e-5 * std::max({std::abs(fd), std::abs(grad_in.v[p]), 1.0}));
    }
}

TEST_CASE("upsample, concat, and leaky-relu backward are exact adjoints") {
    Rng rng(5);

    SUBCASE("upsample2") {
        Tensor in(2, 3, 4);
        for (double& v : in.v)
            v = rng.uniform();
        Tensor out;
        upsample2_forward(in, out);
        REQUIRE(out.h == 6);
        REQUIRE(out.w == 8);
        Tensor cot(out.c, out.h, out.w);
        for (double& v : cot.v)
            v = rng.uniform();
        Tensor gin;
        upsample2_backward(cot, gin);
        // adjoint identity <U x, y> = <x, U^T y>
        double lhs = 0.0, rhs = 0.0;
        for (std::size_t i = 0; i < out.v.size(); ++i)
            lhs += out.v[i] * cot.v[i];
        for (std::size_t i = 0; i < in.v.size(); ++i)
            rhs += in.v[i] * gin.v[i];
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }

    SUBCASE("concat splits cotangents") {
        Tensor a(2, 3, 3), b(3, 3, 3);
        for (double& v : a.v)
            v = rng.uniform();
        for (double& v : b.v)
            v = rng.uniform();
        Tensor cat;
        concat_forward(a, b, cat);
        Tensor cot(cat.c, cat.h, cat.w);
        for (double& v : cot.v)
            v = rng.uniform();
        Tensor ga, gb;
        concat_backward(cot, a.c, ga, gb);
        for (std::size_t i = 0; i < ga.v.size(); ++i)
            CHECK(ga.v[i] == cot.v[i]);
        for (std::size_t i = 0; i < gb.v.size(); ++i)
            CHECK(gb.v[i] == cot.v[i + ga.v.size()]);
    }

    SUBCASE("leaky relu derivative") {
        Tensor pre(1, 2, 4);
        pre.v = {1.0, -2.0, 0.5, -0.1, 3.0, -3.0, 0.0, 2.0};
        Tensor grad(1, 2, 4);
        for (double& v : grad.v)
            v = 1.0;
        leaky_relu_backward(pre, 0.1, grad);
        for (std::size_t i = 0; i < pre.v.size(); ++i)
            CHECK(grad.v[i] == (pre.v[i] > 0.0 ? 1.0 : 0.1));
    }
}

TEST_CASE("xavier init statistics and determinism") {
    const Dims dims{8, 8, 4};

    SUBCASE("same seed, identical weights") {
        DipNetwork a(tiny_arch(), dims, 99);
        DipNetwork b(tiny_arch(), dims, 99);
        REQUIRE(a.param_count() == b.param_count());
        for (std::size_t i = 0; i < a.param_count(); ++i)
            CHECK(a.params()[i] == b.params()[i]);
    }

    SUBCASE("bound and spread of a 3x3 4->4 conv") {
        // fan_in = fan_out = 36, a = 0.2 sqrt(6/72) ~ 0.057735
        ArchConfig arch;
        arch.n_stages = 1;
        arch.channels = {4};
        arch.bottleneck = 4;
        arch.bottleneck_convs = 1;
        DipNetwork net(arch, {8, 8, 4}, 3);
        const double bound = 0.2 * std::sqrt(6.0 / 72.0);
        CHECK(bound == doctest::Approx(0.05774).epsilon(1e-3));
        // down0 is a 3x3 4->4 conv: find its slot
        const ParamSlot* slot = nullptr;
        for (const auto& s : net.param_slots())
            if (s.name == "down0.weight")
                slot = &s;
        REQUIRE(slot != nullptr);
        REQUIRE(slot->count == 4 * 4 * 9);
        double mx = 0.0, ss = 0.0;
        for (std::size_t i = 0; i < slot->count; ++i) {
            const double w = net.params()[slot->offset + i];
            mx = std::max(mx, std::abs(w));
            ss += w * w;
        }
        CHECK(mx <= bound);
        const double std_dev = std::sqrt(ss / static_cast<double>(slot->count));
        CHECK(std_dev == doctest::Approx(bound / std::sqrt(3.0)).epsilon(0.10));
    }

    SUBCASE("zero gain puts all weights at zero") {
        ArchConfig arch = tiny_arch();
        arch.xavier_gain = 0.0;
        DipNetwork net(arch, dims, 4);
        for (double p : net.params())
            CHECK(p == 0.0);
    }

    SUBCASE("biases start at zero") {
        DipNetwork net(tiny_arch(), dims, 12);
        for (const auto& s : net.param_slots())
            if (s.is_bias)
                for (std::size_t i = 0; i < s.count; ++i)
                    CHECK(net.params()[s.offset + i] == 0.0);
    }
}

TEST_CASE("indivisible lateral dims are rejected") {
    ArchConfig arch; // 2 stages -> needs divisibility by 4
    CHECK_THROWS_AS(DipNetwork(arch, {30, 32, 8}, 1), std::invalid_argument);
    CHECK_THROWS_AS(DipNetwork(arch, {32, 30, 8}, 1), std::invalid_argument);
    CHECK_NOTHROW(DipNetwork(arch, {32, 32, 8}, 1));
}

TEST_CASE("zeroed head gives exactly zero output") {
    const Dims dims{8, 8, 4};
    DipNetwork net(tiny_arch(), dims, 17);
    for (const auto& s : net.param_slots())
        if (s.name == "head.weight" || s.name == "head.bias")
            for (std::size_t i = 0; i < s.count; ++i)
                net.params()[s.offset + i] = 0.0;
    net.invalidate_cache();
    const Volume out = net.forward(make_noise(dims, 1.0, 18));
    for (double v : out.values)
        CHECK(v == 0.0);
}

TEST_CASE("output range is bounded for adversarial weights") {
    // tanh saturates to exactly 1.0 in doubles for huge activations,
    // so the representable range is the closed interval [-0.03, 0.03]
    const Dims dims{8, 8, 4};
    DipNetwork net(tiny_arch(), dims, 20);
    Rng rng(21);
    for (double& p : net.params())
        p = rng.uniform(-100.0, 100.0);
    net.invalidate_cache();
    const Volume out = net.forward(make_noise(dims, 1.0, 22));
    for (double v : out.values)
        CHECK(std::abs(v) <= kContrastBound);

    // moderate weights stay strictly inside
    DipNetwork mild(tiny_arch(), dims, 23);
    const Volume out2 = mild.forward(make_noise(dims, 1.0, 24));
    for (double v : out2.values)
        CHECK(std::abs(v) < kContrastBound);
}

TEST_CASE("noise input is uniform in [0, 0.1] and deterministic") {
    const NoiseInput z1 = make_noise({16, 16, 8}, 1.0, 55);
    const NoiseInput z2 = make_noise({16, 16, 8}, 1.0, 55);
    for (std::size_t i = 0; i < z1.values.size(); ++i) {
        CHECK(z1.values[i] >= 0.0);
        CHECK(z1.values[i] <= 0.1);
        CHECK(z1.values[i] == z2.values[i]);
    }
}

TEST_CASE("backward requires a fresh forward cache") {
    const Dims dims{8, 8, 4};
    DipNetwork net(tiny_arch(), dims, 30);
    Volume cot(dims, 1.0, 1.0);
    CHECK_THROWS_AS(net.backward(cot), std::logic_error);
    net.forward(make_noise(dims, 1.0, 31));
    CHECK_NOTHROW(net.backward(cot));
    net.params()[0] += 0.01;
    net.invalidate_cache();
    CHECK_THROWS_AS(net.backward(cot), std::logic_error);
}

TEST_CASE("zero cotangent gives zero gradients; backward is linear") {
    const Dims dims{8, 8, 4};
    DipNetwork net(tiny_arch(), dims, 40);
    const NoiseInput z = make_noise(dims, 1.0, 41);
    net.forward(z);

    Volume zero(dims, 1.0, 0.0);
    net.backward(zero);
    for (double g : net.grads())
        CHECK(g == 0.0);

    Volume g1(dims, 1.0, 0.0), g2(dims, 1.0, 0.0);
    Rng rng(42);
    for (std::size_t i = 0; i < g1.values.size(); ++i) {
        g1.values[i] = rng.uniform(-1.0, 1.0);
        g2.values[i] = rng.uniform(-1.0, 1.0);
    }
    net.backward(g1);
    std::vector<double> grad1 = net.grads();
    net.backward(g2);
    std::vector<double> grad2 = net.grads();
    Volume sum(dims, 1.0, 0.0);
    for (std::size_t i = 0; i < sum.values.size(); ++i)
        sum.values[i] = g1.values[i] + g2.values[i];
    net.backward(sum);
    const std::vector<double>& grad_sum = net.grads();
    double mx = 0.0;
    for (double v : grad_sum)
        mx = std::max(mx, std::abs(v));
    for (std::size_t i = 0; i < grad_sum.size(); ++i)
        CHECK(std::abs(grad_sum[i] - (grad1[i] + grad2[i])) <=
              1e-10 * std::max(1.0, mx));
}

TEST_CASE("whole-network gradients vs finite differences (tiny net)") {
    check_network_gradients(tiny_arch(), {8, 8, 4}, 60);
}

TEST_CASE("whole-network gradients for the two-stage default shape") {
    ArchConfig arch;
    arch.n_stages = 2;
    arch.channels = {3, 4};
    arch.bottleneck = 4;
    arch.bottleneck_convs = 2;
    check_network_gradients(arch, {16, 16, 4}, 40);
}
