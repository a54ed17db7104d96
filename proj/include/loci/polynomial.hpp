#pragma once

#include <vector>

#include "json.hpp"
#include "loci/hamiltonian.hpp"

namespace loci {

/// One monomial coeff * prod x_i^a_i * prod p_i^b_i.
struct Monomial {
  double coeff = 0.0;
  std::vector<int> x_powers;
  std::vector<int> p_powers;
};

struct PolynomialSpec {
  int dimension = 0;
  double level = 0.0;
  std::vector<Monomial> terms;
};

/// Parses {"dimension": n, "level": c, "terms": [{"coeff", "x_powers", "p_powers"}]}.
PolynomialSpec parse_polynomial(const nlohmann::json& j);
nlohmann::json to_json(const PolynomialSpec& spec);

/// Model with exact first and second derivatives of the polynomial.
HamiltonianModel polynomial_model(const PolynomialSpec& spec, std::string name = "polynomial");

}  // namespace loci
