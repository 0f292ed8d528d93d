#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "bc/rng.hpp"
#include "bc/tensor.hpp"

using namespace bc;

TEST_CASE("numel and shape strings") {
    CHECK(numel(Shape{}) == 1);
    CHECK(numel(Shape{3, 4}) == 12);
    CHECK(numel(Shape{2, 0, 5}) == 0);
    CHECK(shape_str(Shape{2, 3}) == "[2,3]");
}

TEST_CASE("constructor validates data length") {
    CHECK_NOTHROW(Tensor(Shape{2, 2}, {1, 2, 3, 4}));
    CHECK_THROWS_AS(Tensor(Shape{2, 2}, {1, 2, 3}), ShapeError);
}

TEST_CASE("scalar helpers") {
    Tensor s = Tensor::scalar(2.5);
    CHECK(s.is_scalar());
    CHECK(s[0] == 2.5);
    CHECK(s.rank() == 0);
}

TEST_CASE("2-D accessors are row-major") {
    Tensor t(Shape{2, 3}, {0, 1, 2, 3, 4, 5});
    CHECK(t.at(0, 2) == 2);
    CHECK(t.at(1, 0) == 3);
}

TEST_CASE("same_shape and all_finite") {
    Tensor a(Shape{2, 2});
    Tensor b(Shape{4});
    CHECK(same_shape(a, a));
    CHECK_FALSE(same_shape(a, b));
    CHECK(all_finite(a));
    a[3] = std::nan("");
    CHECK_FALSE(all_finite(a));
    a[3] = INFINITY;
    CHECK_FALSE(all_finite(a));
}

TEST_CASE("rng determinism") {
    Rng a(42), b(42), c(7);
    for (int i = 0; i < 100; ++i) CHECK(a.normal() == b.normal());
    bool differs = false;
    for (int i = 0; i < 10; ++i)
        if (a.uniform() != c.uniform()) differs = true;
    CHECK(differs);
    Tensor t = Rng(3).normal_tensor(Shape{5, 5});
    Tensor u = Rng(3).normal_tensor(Shape{5, 5});
    CHECK(t.data == u.data);
}
