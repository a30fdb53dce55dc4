#include "doctest.h"

#include <atomic>
#include <cmath>
#include <functional>
#include <set>
#include <thread>
#include <vector>

#include "bcad/dual.hpp"
#include "bcad/hmlstm.hpp"
#include "support/test_util.hpp"

using namespace bcad;
using testutil::close;

namespace {

using D = Dual<double>;

D seeded1(double x, Tag t) {
    const double values[] = {x};
    return seed<double>(values, t)[0];
}

// Independent derivative probe for the primitive table.
double central_diff(const std::function<double(double)>& f, double x) {
    const double h = std::cbrt(2.2e-16) * std::max(1.0, std::fabs(x));
    return (f(x + h) - f(x - h)) / (2 * h);
}

} // namespace

TEST_CASE("fresh tags are unique, also across threads") {
    const Tag a = fresh_tag();
    const Tag b = fresh_tag();
    CHECK(!(a == b));

    std::vector<std::thread> threads;
    std::vector<std::vector<Tag>> collected(4);
    for (int t = 0; t < 4; ++t)
        threads.emplace_back([&collected, t] {
            for (int i = 0; i < 500; ++i) collected[static_cast<std::size_t>(t)].push_back(fresh_tag());
        });
    for (auto& th : threads) th.join();
    std::set<std::uint64_t> ids;
    for (const auto& list : collected)
        for (Tag tag : list) ids.insert(tag.id);
    CHECK(ids.size() == 2000);
}

TEST_CASE("seed produces orthogonal unit perturbations") {
    const Tag t = fresh_tag();
    const double values[] = {3.0, 5.0};
    const auto duals = seed<double>(values, t);
    REQUIRE(duals.size() == 2);
    CHECK(duals[0].primal() == 3.0);
    CHECK(duals[1].primal() == 5.0);
    CHECK(tg(duals[0], t) == std::vector<double>{1.0, 0.0});
    CHECK(tg(duals[1], t) == std::vector<double>{0.0, 1.0});

    const double one[] = {7.5};
    CHECK(tg(seed<double>(one, t)[0], t) == std::vector<double>{1.0});
}

TEST_CASE("lift is inert: zero partials through any primitive") {
    const Tag t = fresh_tag();
    const D c = lift(2.0, 3, t);
    CHECK(c.primal() == 2.0);
    CHECK(tg(c, t) == std::vector<double>{0.0, 0.0, 0.0});

    CHECK(tg(sigmoid(c), t) == std::vector<double>{0.0, 0.0, 0.0});
    CHECK(tg(tanh(c) * c + exp(c), t) == std::vector<double>{0.0, 0.0, 0.0});
}

TEST_CASE("lifted constant scales a seeded dual linearly") {
    const Tag t = fresh_tag();
    const D x = seeded1(1.25, t);
    const D scaled = lift(-3.0, 1, t) * x;
    CHECK(scaled.primal() == -3.75);
    CHECK(tg(scaled, t)[0] == -3.0);
}

TEST_CASE("product rule on orthogonal seeds") {
    const Tag t = fresh_tag();
    const double values[] = {3.0, 5.0};
    const auto xy = seed<double>(values, t);
    const D p = xy[0] * xy[1];
    CHECK(p.primal() == 15.0);
    CHECK(tg(p, t) == std::vector<double>{5.0, 3.0});
}

TEST_CASE("additive identity preserves partials") {
    const Tag t = fresh_tag();
    const D x = seeded1(0.4, t);
    const D same = x + lift(0.0, 1, t);
    CHECK(same.primal() == x.primal());
    CHECK(tg(same, t) == tg(x, t));
}

TEST_CASE("quotient rule against the finite-difference oracle") {
    const Tag t = fresh_tag();
    const D q = seeded1(1.0, t) / seeded1(2.0, t);
    CHECK(q.primal() == 0.5);
    CHECK(q.partial(0) == 0.25);

    // x/y at (1,2) along direction (1,1): both seeds carry the same epsilon.
    const double fd = central_diff([](double s) { return (1.0 + s) / (2.0 + s); }, 0.0);
    CHECK(close(q.partial(0), fd, 1e-8));
}

TEST_CASE("division by a zero primal is rejected") {
    const Tag t = fresh_tag();
    CHECK_THROWS_AS((void)(seeded1(1.0, t) / seeded1(0.0, t)), DivisionByZero);
    CHECK_THROWS_AS((void)(1.0 / D(0.0)), DivisionByZero);
}

TEST_CASE("unary primitive table matches central finite differences") {
    struct Entry {
        const char* name;
        std::function<D(const D&)> dual_fn;
        std::function<double(double)> real_fn;
        std::vector<double> samples;
    };
    const std::vector<Entry> table = {
        {"exp", [](const D& d) { return exp(d); }, [](double x) { return std::exp(x); }, {-1.2, 0.3, 2.0}},
        {"log", [](const D& d) { return log(d); }, [](double x) { return std::log(x); }, {0.2, 1.0, 7.5}},
        {"sin", [](const D& d) { return sin(d); }, [](double x) { return std::sin(x); }, {-2.0, 0.4, 1.9}},
        {"cos", [](const D& d) { return cos(d); }, [](double x) { return std::cos(x); }, {-2.0, 0.4, 1.9}},
        {"tanh", [](const D& d) { return tanh(d); }, [](double x) { return std::tanh(x); }, {-1.5, 0.3, 2.5}},
        {"sigmoid", [](const D& d) { return sigmoid(d); },
         [](double x) { return detail::raw_sigmoid(x); }, {-4.0, 0.0, 3.0}},
        {"sqrt", [](const D& d) { return sqrt(d); }, [](double x) { return std::sqrt(x); }, {0.3, 2.0, 9.0}},
        {"pow2.5", [](const D& d) { return pow(d, 2.5); }, [](double x) { return std::pow(x, 2.5); }, {0.4, 1.3}},
        {"neg", [](const D& d) { return -d; }, [](double x) { return -x; }, {-0.7, 1.1}},
        {"abs", [](const D& d) { return abs(d); }, [](double x) { return std::fabs(x); }, {-0.9, 0.8}},
    };
    for (const Entry& entry : table) {
        for (double x : entry.samples) {
            const Tag t = fresh_tag();
            const D y = entry.dual_fn(seeded1(x, t));
            CHECK_MESSAGE(close(y.primal(), entry.real_fn(x), 1e-15, 1e-300),
                          entry.name << " primal at " << x);
            CHECK_MESSAGE(close(tg(y, t)[0], central_diff(entry.real_fn, x), 1e-5),
                          entry.name << " derivative at " << x);
        }
    }
}

TEST_CASE("trig and sigmoid fixed points") {
    const Tag t = fresh_tag();
    const D c = cos(seeded1(0.0, t));
    CHECK(c.primal() == 1.0);
    CHECK(c.partial(0) == 0.0);

    const D s = sigmoid(seeded1(0.0, t));
    CHECK(s.primal() == 0.5);
    CHECK(s.partial(0) == 0.25);

    const D th = tanh(seeded1(0.3, t));
    CHECK(th.primal() == std::tanh(0.3));
    CHECK(close(th.partial(0), 1.0 - std::tanh(0.3) * std::tanh(0.3), 1e-15));
}

TEST_CASE("domain guards") {
    const Tag t = fresh_tag();
    CHECK_THROWS_AS((void)log(seeded1(-1.0, t)), DomainError);
    CHECK_THROWS_AS((void)log(seeded1(0.0, t)), DomainError);
    CHECK_THROWS_AS((void)sqrt(seeded1(-0.5, t)), DomainError);
    CHECK_THROWS_AS((void)abs(seeded1(0.0, t)), NonDifferentiablePoint);
    CHECK_THROWS_AS((void)pow(seeded1(-1.0, t), 0.5), DomainError);
}

TEST_CASE("comparisons act on primals and ignore partials") {
    const Tag t = fresh_tag();
    D big(0.7, 2, t);
    big.set_partial(0, 9.0);
    big.set_partial(1, 9.0);
    CHECK(big > 0.5);
    CHECK(big >= 0.7);
    CHECK(!(big < 0.5));
    CHECK(seeded1(0.0, t) == 0.0);

    // The branch a dual takes is decided exactly as for plain reals.
    const auto branchy = [](auto x) { return x > 0.5 ? 1 : -1; };
    for (double x : {0.2, 0.5, 0.51, 0.9})
        CHECK(branchy(seeded1(x, fresh_tag())) == branchy(x));
}

TEST_CASE("tangent extraction is guarded against foreign tags") {
    const Tag t1 = fresh_tag();
    const Tag t2 = fresh_tag();
    D d(7.0, 2, t1);
    d.set_partial(0, 2.0);
    d.set_partial(1, 3.0);
    CHECK(tg(d, t1) == std::vector<double>{2.0, 3.0});
    CHECK_THROWS_AS((void)tg(d, t2), TagMismatch);
}

TEST_CASE("every binary operation across distinct live tags raises TagMismatch") {
    const Tag t1 = fresh_tag();
    const Tag t2 = fresh_tag();
    const D a = seeded1(1.0, t1);
    const D b = seeded1(2.0, t2);
    CHECK_THROWS_AS((void)(a + b), TagMismatch);
    CHECK_THROWS_AS((void)(a - b), TagMismatch);
    CHECK_THROWS_AS((void)(a * b), TagMismatch);
    CHECK_THROWS_AS((void)(a / b), TagMismatch);
}

TEST_CASE("untagged scalars combine with any live tag") {
    const Tag t = fresh_tag();
    const D x = seeded1(2.0, t);
    const D y = 3.0 * x + 1.0;
    CHECK(y.primal() == 7.0);
    CHECK(tg(y, t)[0] == 3.0);
}

TEST_CASE("epsilon nilpotency: x*x at 0 has exactly zero tangent") {
    const Tag t = fresh_tag();
    const D x = seeded1(0.0, t);
    const D sq = x * x;
    CHECK(sq.primal() == 0.0);
    CHECK(sq.partial(0) == 0.0); // 2 * 0 * 1, no epsilon^2 residue
}

TEST_CASE("constant lifting is exact: primal path is bit-identical") {
    const Tag t = fresh_tag();
    // The fused cell update exercises branches and several primitives at once.
    const double cases[][6] = {
        {0.37, -0.83, 0.21, 0.64, 0.0, 1.0},
        {7.0, 0.1, -0.4, 0.9, 0.0, 0.0},
        {-0.2, 0.5, 0.33, -0.71, 1.0, 1.0},
    };
    for (const double* c : cases) {
        const double real = cell_update_scalar(c[0], c[1], c[2], c[3], c[4], c[5]);
        const D dual = cell_update_scalar(lift(c[0], 2, t), lift(c[1], 2, t), lift(c[2], 2, t),
                                          lift(c[3], 2, t), lift(c[4], 2, t), lift(c[5], 2, t));
        CHECK(dual.primal() == real);
        CHECK(tg(dual, t) == std::vector<double>{0.0, 0.0});
    }
}

TEST_CASE("directional seeding equals the weighted column sum") {
    const Tag t = fresh_tag();
    const auto f = [](const D& x, const D& y, const D& z) {
        return sigmoid(x) * y + tanh(z) * x;
    };
    const double p[3] = {0.3, -1.2, 0.8};
    const double v[3] = {0.5, 2.0, -1.5};

    const auto cols = seed<double>(p, t);
    const D columnwise = f(cols[0], cols[1], cols[2]);

    // One-epsilon duals seeded with the direction's components.
    const Tag td = fresh_tag();
    D dx = lift(p[0], 1, td);
    dx.set_partial(0, v[0]);
    D dy = lift(p[1], 1, td);
    dy.set_partial(0, v[1]);
    D dz = lift(p[2], 1, td);
    dz.set_partial(0, v[2]);
    const D directional = f(dx, dy, dz);

    double weighted = 0.0;
    for (int j = 0; j < 3; ++j) weighted += v[j] * columnwise.partial(j);
    CHECK(close(directional.partial(0), weighted, 1e-12));
}

TEST_CASE("one level of nesting: d/dx of d/dy (x*y) is 1") {
    using DD = Dual<Dual<double>>;
    for (double xv : {0.6, -1.7, 2.5}) {
        const Tag tx = fresh_tag();
        const Dual<double> x = seeded1(xv, tx);

        const Tag ty = fresh_tag();
        // Inner differentiation with respect to y at y = 2; x enters as a constant.
        DD y_inner(Dual<double>(2.0), 1, ty);
        y_inner.set_partial(0, Dual<double>(1.0));
        const DD x_inner = lift(x, 1, ty);

        const DD product = x_inner * y_inner;
        const Dual<double> inner_derivative = tg(product, ty)[0]; // d/dy (x*y) = x

        CHECK(inner_derivative.primal() == xv);
        CHECK(tg(inner_derivative, tx)[0] == 1.0);
    }
}

TEST_CASE("dual arithmetic in 32-bit") {
    using F = Dual<float>;
    const Tag t = fresh_tag();
    const float values[] = {3.0f, 5.0f};
    const auto xy = seed<float>(values, t);
    const F p = xy[0] * xy[1];
    CHECK(p.primal() == 15.0f);
    CHECK(p.partial(0) == 5.0f);
    CHECK(p.partial(1) == 3.0f);

    const float zero[] = {0.0f};
    const F s = sigmoid(seed<float>(zero, t)[0]);
    CHECK(s.primal() == 0.5f);
    CHECK(s.partial(0) == 0.25f);
}

TEST_CASE("seed and lift reject invalid widths") {
    const Tag t = fresh_tag();
    CHECK_THROWS_AS((void)lift(1.0, 0, t), ArityMismatch);
    CHECK_THROWS_AS((void)lift(1.0, kMaxPartials + 1, t), ArityMismatch);
    std::vector<double> too_many(static_cast<std::size_t>(kMaxPartials) + 1, 1.0);
    CHECK_THROWS_AS((void)seed<double>(too_many, t), ArityMismatch);
}
