#include "loci/polynomial.hpp"

#include <memory>

namespace loci {

namespace {

// Flattened exponents: z = (x, p), powers e[0..2n).
struct Term {
  double c;
  std::vector<int> e;
};

double ipow(double v, int k) {
  double r = 1.0;
  for (int i = 0; i < k; ++i) r *= v;
  return r;
}

// d^|d| / dz^d of c * z^e evaluated at z; d holds derivative orders per variable.
double derivative(const Term& t, const Vec& z, const std::vector<int>& d) {
  double v = t.c;
  for (std::size_t i = 0; i < t.e.size(); ++i) {
    const int k = t.e[i], m = d[i];
    if (m > k) return 0.0;
    for (int j = 0; j < m; ++j) v *= (k - j);
    v *= ipow(z[static_cast<Eigen::Index>(i)], k - m);
  }
  return v;
}

}  // namespace

PolynomialSpec parse_polynomial(const nlohmann::json& j) {
  PolynomialSpec s;
  s.dimension = j.at("dimension").get<int>();
  s.level = j.value("level", 0.0);
  if (s.dimension < 1) throw Error("polynomial: dimension must be positive");
  for (const auto& t : j.at("terms")) {
    Monomial m;
    m.coeff = t.at("coeff").get<double>();
    m.x_powers = t.value("x_powers", std::vector<int>(s.dimension, 0));
    m.p_powers = t.value("p_powers", std::vector<int>(s.dimension, 0));
    if (static_cast<int>(m.x_powers.size()) != s.dimension ||
        static_cast<int>(m.p_powers.size()) != s.dimension) {
      throw Error("polynomial: term exponent length differs from dimension");
    }
    for (int e : m.x_powers)
      if (e < 0) throw Error("polynomial: negative exponent");
    for (int e : m.p_powers)
      if (e < 0) throw Error("polynomial: negative exponent");
    s.terms.push_back(std::move(m));
  }
  return s;
}

nlohmann::json to_json(const PolynomialSpec& spec) {
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& m : spec.terms) {
    terms.push_back({{"coeff", m.coeff}, {"x_powers", m.x_powers}, {"p_powers", m.p_powers}});
  }
  return {{"dimension", spec.dimension}, {"level", spec.level}, {"terms", terms}};
}

HamiltonianModel polynomial_model(const PolynomialSpec& spec, std::string name) {
  const int n = spec.dimension;
  auto terms = std::make_shared<std::vector<Term>>();
  for (const auto& m : spec.terms) {
    Term t{m.coeff, m.x_powers};
    t.e.insert(t.e.end(), m.p_powers.begin(), m.p_powers.end());
    terms->push_back(std::move(t));
  }
  auto stack = [n](const Vec& x, const Vec& p) {
    Vec z(2 * n);
    z << x, p;
    return z;
  };
  auto grad = [terms, n, stack](const Vec& x, const Vec& p, int offset) {
    const Vec z = stack(x, p);
    Vec g = Vec::Zero(n);
    std::vector<int> d(2 * n, 0);
    for (int i = 0; i < n; ++i) {
      d[offset + i] = 1;
      for (const auto& t : *terms) g[i] += derivative(t, z, d);
      d[offset + i] = 0;
    }
    return g;
  };
  auto hess = [terms, n, stack](const Vec& x, const Vec& p, int oi, int oj) {
    const Vec z = stack(x, p);
    Mat h = Mat::Zero(n, n);
    std::vector<int> d(2 * n, 0);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        ++d[oi + i];
        ++d[oj + j];
        for (const auto& t : *terms) h(i, j) += derivative(t, z, d);
        --d[oi + i];
        --d[oj + j];
      }
    }
    return h;
  };
  HamiltonianModel::Evaluators ev;
  ev.H = [terms, n, stack](const Vec& x, const Vec& p) {
    const Vec z = stack(x, p);
    const std::vector<int> d(2 * n, 0);
    double v = 0.0;
    for (const auto& t : *terms) v += derivative(t, z, d);
    return v;
  };
  ev.grad_x = [grad](const Vec& x, const Vec& p) { return grad(x, p, 0); };
  ev.grad_p = [grad, n](const Vec& x, const Vec& p) { return grad(x, p, n); };
  ev.hess_xx = [hess](const Vec& x, const Vec& p) { return hess(x, p, 0, 0); };
  ev.hess_xp = [hess, n](const Vec& x, const Vec& p) { return hess(x, p, 0, n); };
  ev.hess_pp = [hess, n](const Vec& x, const Vec& p) { return hess(x, p, n, n); };
  HamiltonianModel m(std::move(name), n, spec.level, std::move(ev));
  m.set_declared_smoothness("C^infinity");
  return m;
}

}  // namespace loci
