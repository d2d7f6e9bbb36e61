#include <doctest.h>

#include <cmath>

#include "dcs/errors.hpp"
#include "dcs/losses.hpp"
#include "dcs/models.hpp"
#include "dcs/random.hpp"
#include "support/gradcheck.hpp"

using namespace dcs;
using dcs::testing::random_tensor;

namespace {

// Independent evaluators on raw arrays, no tensor code involved.
std::vector<double> naive_softmax(std::span<const double> row, double t) {
    double m = row[0];
    for (double v : row) {
        m = std::max(m, v);
    }
    std::vector<double> out(row.size());
    double z = 0.0;
    for (std::size_t i = 0; i < row.size(); ++i) {
        out[i] = std::exp((row[i] - m) / t);
        z += out[i];
    }
    for (auto& v : out) {
        v /= z;
    }
    return out;
}

double naive_ce(const Tensor& logits, std::span<const int> labels) {
    double total = 0.0;
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        const auto p = naive_softmax(logits.data().subspan(r * logits.cols(), logits.cols()), 1.0);
        total -= std::log(p[static_cast<std::size_t>(labels[r])]);
    }
    return total / static_cast<double>(logits.rows());
}

std::vector<double> naive_kd(const Tensor& teacher, const Tensor& student, double t) {
    std::vector<double> out;
    const std::size_t c = teacher.cols();
    for (std::size_t r = 0; r < teacher.rows(); ++r) {
        const auto p = naive_softmax(teacher.data().subspan(r * c, c), t);
        const auto q = naive_softmax(student.data().subspan(r * c, c), t);
        double acc = 0.0;
        for (std::size_t k = 0; k < c; ++k) {
            acc -= p[k] * std::log(q[k]);
        }
        out.push_back(acc);
    }
    return out;
}

double entropy(std::span<const double> p) {
    double h = 0.0;
    for (double v : p) {
        if (v > 0) {
            h -= v * std::log(v);
        }
    }
    return h;
}

}  // namespace

TEST_CASE("cross entropy hand values") {
    const std::vector<int> zero{0};
    CHECK(cross_entropy(Tensor::matrix(1, 2, {0, 0}), zero).item() == doctest::Approx(std::log(2.0)));
    const double confident = cross_entropy(Tensor::matrix(1, 2, {10, -10}), zero).item();
    CHECK(confident == doctest::Approx(std::log1p(std::exp(-20.0))).epsilon(1e-6));
    CHECK(confident < 3e-9);
}

TEST_CASE("cross entropy matches a naive evaluator") {
    Rng rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t b = 1 + rng.below(8), c = 2 + rng.below(4);
        const Tensor logits = random_tensor({b, c}, rng, -5.0, 5.0);
        std::vector<int> labels(b);
        for (auto& l : labels) {
            l = static_cast<int>(rng.below(c));
        }
        CHECK(std::abs(cross_entropy(logits, labels).item() - naive_ce(logits, labels)) < 1e-12);
    }
    const std::vector<int> bad{2};
    CHECK_THROWS_AS(cross_entropy(Tensor::matrix(1, 2, {0, 0}), bad), DataError);
}

TEST_CASE("kd loss hand values") {
    const Tensor uniform = Tensor::matrix(1, 2, {0, 0});
    auto kd = kd_loss(uniform, uniform, 1.0);
    CHECK(kd.per_sample[0] == doctest::Approx(std::log(2.0)));

    const Tensor peaked = Tensor::matrix(1, 2, {2, 0});
    kd = kd_loss(peaked, peaked, 1.0);
    const double e2 = std::exp(2.0);
    const std::vector<double> p{e2 / (e2 + 1), 1 / (e2 + 1)};
    CHECK(std::abs(kd.per_sample[0] - entropy(p)) < 1e-12);
    CHECK(std::abs(kd.per_sample[0] - 0.365334) < 1e-6);
}

TEST_CASE("kd loss matches naive evaluator and Gibbs' inequality") {
    Rng rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t c = 2 + rng.below(4);
        const double t = rng.uniform(0.5, 3.0);
        const Tensor teacher = random_tensor({1, c}, rng, -4.0, 4.0);
        const Tensor student = random_tensor({1, c}, rng, -4.0, 4.0);
        const auto kd = kd_loss(teacher, student, t);
        const auto expected = naive_kd(teacher, student, t);
        CHECK(std::abs(kd.per_sample[0] - expected[0]) < 1e-12);
        const auto p = naive_softmax(teacher.data(), t);
        CHECK(kd.per_sample[0] >= entropy(p) - 1e-12);
        // Equality when q == p.
        CHECK(std::abs(kd_loss(teacher, teacher, t).per_sample[0] - entropy(p)) < 1e-12);
    }
}

TEST_CASE("weighted kd hand arithmetic") {
    // A one-hot teacher and q0 = exp(-0.5) make each per-sample term exactly 0.5.
    const double q0 = std::exp(-0.5);
    const double gap = std::log((1.0 - q0) / q0);
    const Tensor teacher = Tensor::matrix(2, 2, {800, 0, 800, 0});
    const Tensor student = Tensor::matrix(2, 2, {0, gap, 0, gap});
    const auto plain = kd_loss(teacher, student, 1.0);
    CHECK(plain.per_sample[0] == doctest::Approx(0.5).epsilon(1e-12));
    const std::vector<double> w{1.0, 2.0};
    CHECK(weighted_kd_loss(teacher, student, w, 1.0).loss.item() == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("all-ones weights reproduce plain kd") {
    Rng rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t b = 1 + rng.below(8), c = 2 + rng.below(4);
        const double t = rng.uniform(0.5, 3.0);
        const Tensor teacher = random_tensor({b, c}, rng, -4.0, 4.0);
        const Tensor student = random_tensor({b, c}, rng, -4.0, 4.0);
        const std::vector<double> ones(b, 1.0);
        CHECK(std::abs(weighted_kd_loss(teacher, student, ones, t).loss.item() -
                       kd_loss(teacher, student, t).loss.item()) <= 1e-14);
    }
}

TEST_CASE("concordant batches ignore lambda") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const Tensor teacher = random_tensor({6, 3}, rng);
        const Tensor student = random_tensor({6, 3}, rng);
        const auto t_pred = argmax_rows(teacher);
        const auto s_pred = argmax_rows(student);
        std::vector<double> w(6, 1.0);
        const double lambda = rng.uniform(1.5, 6.0);
        for (std::size_t i = 0; i < 6; ++i) {
            w[i] = t_pred[i] == s_pred[i] ? 1.0 : lambda;
        }
        if (std::all_of(w.begin(), w.end(), [](double x) { return x == 1.0; })) {
            CHECK(weighted_kd_loss(teacher, student, w, 1.0).loss.item() == kd_loss(teacher, student, 1.0).loss.item());
        }
    }
    // A concordant batch built by construction.
    const Tensor teacher = Tensor::matrix(2, 2, {3, 0, 0, 2});
    const Tensor student = Tensor::matrix(2, 2, {1, 0, 0, 5});
    const std::vector<double> w(2, 1.0);
    CHECK(weighted_kd_loss(teacher, student, w, 1.0).loss.item() == kd_loss(teacher, student, 1.0).loss.item());
}

TEST_CASE("weighted kd decomposes into plain kd plus the discordant excess") {
    Rng rng(6);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t b = 2 + rng.below(10), c = 2 + rng.below(3);
        const Tensor teacher = random_tensor({b, c}, rng, -3.0, 3.0);
        const Tensor student = random_tensor({b, c}, rng, -3.0, 3.0);
        const double lambda = 2.0 + static_cast<double>(rng.below(5));
        const auto tp = argmax_rows(teacher);
        const auto sp = argmax_rows(student);
        std::vector<double> w(b);
        for (std::size_t i = 0; i < b; ++i) {
            w[i] = tp[i] == sp[i] ? 1.0 : lambda;
        }
        const auto per = naive_kd(teacher, student, 1.0);
        double plain = 0.0, discordant = 0.0;
        for (std::size_t i = 0; i < b; ++i) {
            plain += per[i];
            discordant += tp[i] == sp[i] ? 0.0 : per[i];
        }
        plain /= static_cast<double>(b);
        discordant /= static_cast<double>(b);
        CHECK(std::abs(weighted_kd_loss(teacher, student, w, 1.0).loss.item() -
                       (plain + (lambda - 1.0) * discordant)) <= 1e-10);
    }
}

TEST_CASE("weighted kd strictly increases with lambda") {
    Rng rng(7);
    const Tensor teacher = Tensor::matrix(3, 2, {2, 0, 0, 1, 1, 0});
    const Tensor student = Tensor::matrix(3, 2, {2, 1, 1, 0, 3, 0});
    // Row 1 is discordant.
    double previous = -1.0;
    for (double lambda = 1.5; lambda <= 6.0; lambda += 0.5) {
        const std::vector<double> w{1.0, lambda, 1.0};
        const double v = weighted_kd_loss(teacher, student, w, 1.0).loss.item();
        CHECK(v > previous);
        previous = v;
    }
}

TEST_CASE("total loss mixes the components") {
    const Tensor ce = Tensor::scalar(1.0);
    const Tensor kd = Tensor::scalar(0.6);
    CHECK(total_loss(ce, kd, 0.5).loss.item() == doctest::Approx(0.8));
    CHECK(total_loss(ce, kd, 1.0).loss.item() == ce.item());
    CHECK(total_loss(ce, kd, 0.0).loss.item() == kd.item());
    Rng rng(8);
    for (int trial = 0; trial < 200; ++trial) {
        const double c = rng.uniform(0.0, 5.0), k = rng.uniform(0.0, 5.0);
        for (int g = 0; g <= 100; ++g) {
            const double alpha = g / 100.0;
            const auto t = total_loss(Tensor::scalar(c), Tensor::scalar(k), alpha);
            CHECK(std::abs(t.loss.item() - (alpha * c + (1 - alpha) * k)) <= 1e-12);
            CHECK(t.breakdown.total >= 0.0);
        }
    }
    CHECK_THROWS_AS(total_loss(ce, kd, 1.5), ConfigError);
}

TEST_CASE("weight validation") {
    const Tensor logits = Tensor::matrix(2, 2, {0, 1, 1, 0});
    const std::vector<double> short_w{1.0};
    const std::vector<double> low_w{1.0, 0.5};
    CHECK_THROWS_AS(weighted_kd_loss(logits, logits, short_w, 1.0), ConfigError);
    CHECK_THROWS_AS(weighted_kd_loss(logits, logits, low_w, 1.0), ConfigError);
    CHECK_THROWS_AS(kd_loss(logits, logits, 0.0), ConfigError);
}

TEST_CASE("no gradient reaches the teacher logits") {
    Rng rng(9);
    Tensor teacher = random_tensor({4, 3}, rng);
    Tensor student = random_tensor({4, 3}, rng);
    teacher.set_requires_grad(true);
    student.set_requires_grad(true);
    const std::vector<double> w{1, 2, 1, 2};
    const std::vector<int> labels{0, 1, 2, 0};
    total_loss(cross_entropy(student, labels), weighted_kd_loss(teacher, student, w, 2.0).loss, 0.3).loss.backward();
    CHECK(student.has_grad());
    bool all_zero = true;
    if (teacher.has_grad()) {
        for (double g : teacher.grad()) {
            all_zero = all_zero && g == 0.0;
        }
    }
    CHECK(all_zero);
}
