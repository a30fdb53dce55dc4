#include "doctest.h"

#include <cmath>
#include <functional>
#include <vector>

#include "bcad/counters.hpp"
#include "bcad/hmlstm.hpp"
#include "bcad/oracle.hpp"
#include "support/hmlstm_closed_form.hpp"
#include "support/test_util.hpp"

using namespace bcad;
using testutil::close;
using testutil::tensors_close;
using testutil::tensors_identical;

namespace {

template <class Real>
CellInputs<Real> all_z(std::int64_t n, Rng& rng, Real z1, Real z2) {
    CellInputs<Real> in = random_cell_inputs<Real>(n, rng);
    for (std::int64_t e = 0; e < n; ++e) {
        in.z1[e] = z1;
        in.z2[e] = z2;
    }
    return in;
}

} // namespace

TEST_CASE("scalar update cases: UPDATE, COPY, FLUSH") {
    CHECK(cell_update_scalar(1.0, 0.0, 0.0, 0.0, 0.0, 1.0) == 0.5); // s(0)*1 + s(0)*tanh(0)
    CHECK(cell_update_scalar(7.0, 0.3, -0.2, 0.9, 0.0, 0.0) == 7.0);
    CHECK(cell_update_scalar(3.0, 0.1, 0.0, 0.0, 1.0, 1.0) == 0.0);
    // The combination the case table leaves open flushes as well.
    CHECK(cell_update_scalar(3.0, 0.1, 0.0, 0.0, 1.0, 0.0) == 0.0);
}

TEST_CASE("fused cell update matches a scalar loop cell-for-cell") {
    Rng rng(3);
    const std::int64_t n = 6;
    const CellInputs<double> in = random_cell_inputs<double>(n, rng);
    Tape<double> tape;
    const CellGraph<double> graph = cell_update_fused(tape, in, MixedPolicy::CacheForward);
    const Tensor<double>& out = tape.value(graph.out);
    CHECK(out.shape() == Shape{n, n});
    for (std::int64_t r = 0; r < n; ++r)
        for (std::int64_t c = 0; c < n; ++c)
            CHECK(out.at({r, c}) == cell_update_scalar(in.c_prev.at({r, c}), in.f.at({r, c}),
                                                       in.i.at({r, c}), in.g.at({r, c}), in.z1[r],
                                                       in.z2[r]));
}

TEST_CASE("all-COPY boundary input returns c_prev exactly") {
    Rng rng(5);
    const CellInputs<double> in = all_z<double>(5, rng, 0.0, 0.0);
    Tape<double> tape;
    const CellGraph<double> graph = cell_update_fused(tape, in, MixedPolicy::RecomputeReverse);
    CHECK(tensors_identical(tape.value(graph.out), in.c_prev));
}

TEST_CASE("all-UPDATE boundary input reduces to the gate formula") {
    Rng rng(7);
    const std::int64_t n = 4;
    const CellInputs<double> in = all_z<double>(n, rng, 0.0, 1.0);
    Tape<double> tape;
    const CellGraph<double> graph = cell_update_fused(tape, in, MixedPolicy::CacheForward);
    for (std::int64_t e = 0; e < n * n; ++e) {
        const double want = detail::raw_sigmoid(in.f[e]) * in.c_prev[e] +
                            detail::raw_sigmoid(in.i[e]) * std::tanh(in.g[e]);
        CHECK(tape.value(graph.out)[e] == want);
    }
}

TEST_CASE("unfused primal is bit-identical to the fused primal") {
    for (std::int64_t n : {std::int64_t{1}, std::int64_t{8}, std::int64_t{64}}) {
        Rng rng(static_cast<std::uint64_t>(n) + 100);
        const CellInputs<double> in = random_cell_inputs<double>(n, rng);

        Tape<double> fused_tape;
        const CellGraph<double> fused = cell_update_fused(fused_tape, in, MixedPolicy::CacheForward);
        Tape<double> unfused_tape;
        const CellGraph<double> unfused = cell_update_unfused(unfused_tape, in);

        CHECK(tensors_identical(fused_tape.value(fused.out), unfused_tape.value(unfused.out)));
    }
}

TEST_CASE("unfused node count is fixed, independent of n") {
    std::size_t count_small = 0;
    for (std::int64_t n : {std::int64_t{2}, std::int64_t{32}}) {
        Rng rng(9);
        const CellInputs<double> in = random_cell_inputs<double>(n, rng);
        Tape<double> tape;
        (void)cell_update_unfused(tape, in);
        if (n == 2)
            count_small = tape.size();
        else
            CHECK(tape.size() == count_small);
    }
    CHECK(count_small == 14); // 6 leaves + 8 tensor primitives
}

TEST_CASE("single-cell graph reproduces the scalar gradient examples") {
    CellInputs<double> in{Tensor<double>(Shape{1, 1}, 1.0), Tensor<double>(Shape{1, 1}, 0.0),
                          Tensor<double>(Shape{1, 1}, 0.0), Tensor<double>(Shape{1, 1}, 0.0),
                          Tensor<double>(Shape{1}, 0.0), Tensor<double>(Shape{1}, 1.0)};
    const Tensor<double> seed(Shape{1, 1}, 1.0);
    for (CellImpl impl :
         {CellImpl::FusedMixedCache, CellImpl::FusedMixedRecompute, CellImpl::ReverseUnfused}) {
        const CellGradients<double> g = cell_gradients(impl, in, seed);
        CHECK(g.c_prev[0] == 0.5);
        CHECK(g.f[0] == 0.25);
        CHECK(g.i[0] == 0.0);
        CHECK(g.g[0] == 0.5);
    }
}

TEST_CASE("gradient 4-tuples match the piecewise closed forms per cell") {
    for (std::uint64_t seed_id = 1; seed_id <= 6; ++seed_id) {
        Rng rng(seed_id * 13);
        const std::int64_t n = 8;
        const CellInputs<double> in = random_cell_inputs<double>(n, rng);
        const Tensor<double> seed = random_pm1<double>(Shape{n, n}, rng);
        const CellGradients<double> expected = testutil::closed_form_cell_gradients(in, seed);
        for (CellImpl impl :
             {CellImpl::FusedMixedCache, CellImpl::FusedMixedRecompute, CellImpl::ReverseUnfused}) {
            const CellGradients<double> got = cell_gradients(impl, in, seed);
            CHECK(tensors_close(got.c_prev, expected.c_prev, 1e-12, 1e-14));
            CHECK(tensors_close(got.f, expected.f, 1e-12, 1e-14));
            CHECK(tensors_close(got.i, expected.i, 1e-12, 1e-14));
            CHECK(tensors_close(got.g, expected.g, 1e-12, 1e-14));
        }
    }
}

TEST_CASE("gradients match finite differences through both implementations") {
    Rng rng(31);
    const std::int64_t n = 5;
    const CellInputs<double> in = random_cell_inputs<double>(n, rng);
    const Tensor<double> seed(Shape{n, n}, 1.0);

    const std::function<double(std::span<const Tensor<double>>)> h =
        [&](std::span<const Tensor<double>> probe) {
            double acc = 0;
            for (std::int64_t r = 0; r < n; ++r)
                for (std::int64_t c = 0; c < n; ++c)
                    acc += cell_update_scalar(probe[0].at({r, c}), probe[1].at({r, c}),
                                              probe[2].at({r, c}), probe[3].at({r, c}), in.z1[r],
                                              in.z2[r]);
            return acc;
        };
    const std::vector<Tensor<double>> probe_inputs = {in.c_prev, in.f, in.i, in.g};
    const auto fd = fd_gradient<double>(h, probe_inputs);

    for (CellImpl impl : {CellImpl::FusedMixedCache, CellImpl::ReverseUnfused}) {
        const CellGradients<double> got = cell_gradients(impl, in, seed);
        CHECK(tensors_close(got.c_prev, fd[0], 1e-5, 1e-7));
        CHECK(tensors_close(got.f, fd[1], 1e-5, 1e-7));
        CHECK(tensors_close(got.i, fd[2], 1e-5, 1e-7));
        CHECK(tensors_close(got.g, fd[3], 1e-5, 1e-7));
    }
}

TEST_CASE("no gradient flows to the boundary vectors") {
    Rng rng(37);
    const std::int64_t n = 4;
    const CellInputs<double> in = random_cell_inputs<double>(n, rng);
    const Tensor<double> seed(Shape{n, n}, 1.0);

    Tape<double> fused_tape;
    const CellGraph<double> fused = cell_update_fused(fused_tape, in, MixedPolicy::CacheForward);
    const auto fused_grads = fused_tape.backward(fused.out, seed);
    for (const Var<double>& z : {fused.z1, fused.z2})
        for (std::int64_t e = 0; e < n; ++e) CHECK(fused_grads.at(z)[e] == 0.0);

    Tape<double> unfused_tape;
    const CellGraph<double> unfused = cell_update_unfused(unfused_tape, in);
    const auto unfused_grads = unfused_tape.backward(unfused.out, seed);
    for (const Var<double>& z : {unfused.z1, unfused.z2})
        for (std::int64_t e = 0; e < n; ++e) CHECK(unfused_grads.at(z)[e] == 0.0);
}

TEST_CASE("untaken-branch accounting: all-COPY inputs") {
    Rng rng(41);
    const std::int64_t n = 16;
    const CellInputs<double> in = all_z<double>(n, rng, 0.0, 0.0);
    const Tensor<double> seed(Shape{n, n}, 1.0);

    const auto fused_before = counter_totals().transcendental_evals;
    (void)cell_gradients(CellImpl::FusedMixedCache, in, seed);
    const auto fused_evals = counter_totals().transcendental_evals - fused_before;

    const auto unfused_before = counter_totals().transcendental_evals;
    (void)cell_gradients(CellImpl::ReverseUnfused, in, seed);
    const auto unfused_evals = counter_totals().transcendental_evals - unfused_before;

    CHECK(fused_evals == 0);
    // Both sigmoids and the tanh are materialized for every cell.
    CHECK(unfused_evals == static_cast<std::uint64_t>(3 * n * n));
    CHECK(fused_evals < unfused_evals);
}

TEST_CASE("recompute policy pays the forward differentiation twice") {
    Rng rng(43);
    const std::int64_t n = 8;
    const CellInputs<double> in = random_cell_inputs<double>(n, rng);
    const Tensor<double> seed(Shape{n, n}, 1.0);

    const auto cache_before = counter_totals().transcendental_evals;
    (void)cell_gradients(CellImpl::FusedMixedCache, in, seed);
    const auto cache_evals = counter_totals().transcendental_evals - cache_before;

    const auto recompute_before = counter_totals().transcendental_evals;
    (void)cell_gradients(CellImpl::FusedMixedRecompute, in, seed);
    const auto recompute_evals = counter_totals().transcendental_evals - recompute_before;

    CHECK(recompute_evals == 2 * cache_evals);
}

TEST_CASE("cell input validation") {
    Rng rng(47);
    CellInputs<double> in = random_cell_inputs<double>(3, rng);
    CHECK_NOTHROW(in.validate());

    CellInputs<double> bad_shape = in;
    bad_shape.f = random_pm1<double>(Shape{3, 4}, rng);
    CHECK_THROWS_AS(bad_shape.validate(), ShapeMismatch);

    CellInputs<double> bad_z = in;
    bad_z.z1[0] = 0.5;
    CHECK_THROWS_AS(bad_z.validate(), Error);
}

TEST_CASE("32-bit path: fused and unfused agree") {
    Rng rng(53);
    const std::int64_t n = 6;
    const CellInputs<float> in = random_cell_inputs<float>(n, rng);
    const Tensor<float> seed(Shape{n, n}, 1.0f);
    const CellGradients<float> fused = cell_gradients(CellImpl::FusedMixedCache, in, seed);
    const CellGradients<float> unfused = cell_gradients(CellImpl::ReverseUnfused, in, seed);
    CHECK(tensors_close(fused.c_prev, unfused.c_prev, 1e-4, 1e-6));
    CHECK(tensors_close(fused.f, unfused.f, 1e-4, 1e-6));
    CHECK(tensors_close(fused.i, unfused.i, 1e-4, 1e-6));
    CHECK(tensors_close(fused.g, unfused.g, 1e-4, 1e-6));
}
