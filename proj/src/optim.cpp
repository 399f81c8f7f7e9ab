#include "hypepull/optim.hpp"

#include <cmath>
#include <sstream>

#include "hypepull/errors.hpp"

namespace hypepull {

RiemannianAdam::RiemannianAdam(AdamConfig config, std::vector<ManifoldKind> kinds)
    : config_(config), kinds_(std::move(kinds)), m_(kinds_.size()), v_(kinds_.size()) {
  if (!(config_.lr >= 0.0)) throw ConfigError("learning rate must be non-negative");
  if (!(config_.beta1 >= 0.0 && config_.beta1 < 1.0) || !(config_.beta2 >= 0.0 && config_.beta2 < 1.0))
    throw ConfigError("Adam betas must lie in [0, 1)");
}

void RiemannianAdam::step(std::vector<Vector>& params, const std::vector<Vector>& grads) {
  if (params.size() != kinds_.size() || grads.size() != kinds_.size())
    throw DimensionError("Riemannian Adam: parameter/gradient count mismatch");
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, t_);
  const double c2 = 1.0 - std::pow(b2, t_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Vector& x = params[i];
    const Vector& g = grads[i];
    if (g.size() != x.size()) throw DimensionError("Riemannian Adam: gradient length mismatch");
    if (m_[i].size() == 0) {
      m_[i] = Vector::Zero(x.size());
      v_[i] = Vector::Zero(kinds_[i] == ManifoldKind::Hyperbolic ? 1 : x.size());
    }
    if (kinds_[i] == ManifoldKind::Euclidean) {
      m_[i] = b1 * m_[i] + (1.0 - b1) * g;
      v_[i] = b2 * v_[i] + (1.0 - b2) * g.cwiseAbs2();
      const Vector mhat = m_[i] / c1;
      const Vector vhat = v_[i] / c2;
      x -= config_.lr * (mhat.array() / (vhat.array().sqrt() + config_.eps)).matrix();
      continue;
    }
    if (!lorentz::is_tangent(x, g)) {
      std::ostringstream os;
      os << "Riemannian Adam: gradient of parameter " << i << " is not tangent";
      throw DomainError(os.str());
    }
    m_[i] = b1 * m_[i] + (1.0 - b1) * g;
    const double gn = std::max(0.0, lorentz::minkowski_inner(g, g));
    v_[i][0] = b2 * v_[i][0] + (1.0 - b2) * gn;
    const Vector mhat = m_[i] / c1;
    const double vhat = v_[i][0] / c2;
    const Vector dir = lorentz::tangent_component(x, -config_.lr * mhat / (std::sqrt(vhat) + config_.eps));
    if (lorentz::tangent_norm(dir) == 0.0) continue;
    const Vector next = lorentz::renormalize(lorentz::expmap(x, dir));
    m_[i] = lorentz::tangent_component(next, lorentz::parallel_transport(x, next, m_[i]));
    x = next;
  }
}

}  // namespace hypepull
