#include "impopt/problems.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "impopt/util.hpp"

namespace impopt::problems {

namespace {

const double KKT_TOL_EQ = 1e-10;
const double KKT_TOL_INEQ = 1e-9;
const double NEWTON_TOL = 1e-12;
const int NEWTON_MAX_ITER = 60;
const double RANK_FLOOR = 0.1;       // resample bar for generated matrices
const double BOUNDS_MARGIN = 0.05;   // widening of sampled spectral extremes
const double LOGISTIC_CURV = 0.25;   // max second derivative of log(1+e^u)

double log1pexp(double u) {
  // stable softplus: never exponentiates a large positive argument
  return (u > 0.0) ? u + std::log1p(std::exp(-u)) : std::log1p(std::exp(u));
}

double sigmoid(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double eu = std::exp(u);
  return eu / (1.0 + eu);
}

Matrix random_orthogonal(util::Rng& rng, int rows, int cols) {
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.normal();
  Eigen::HouseholderQR<Matrix> qr(m);
  Matrix q = qr.householderQ();
  return q.leftCols(cols);
}

double min_singular_value(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues().minCoeff();
}

}  // namespace

SpectralBounds bounds_from_singular_values(double lambda_lo, double lambda_hi,
                                           double sigma_lo, double sigma_hi) {
  if (!(lambda_lo > 0.0) || !(sigma_lo > 0.0) || lambda_lo > lambda_hi || sigma_lo > sigma_hi) {
    throw std::invalid_argument("bounds_from_singular_values: need 0 < lo <= hi for both ranges");
  }
  SpectralBounds b;
  b.lambda_lo = lambda_lo;
  b.lambda_hi = lambda_hi;
  b.mu_lo = sigma_lo * sigma_lo / lambda_hi;
  b.mu_hi = sigma_hi * sigma_hi / lambda_lo;
  return b;
}

QuadraticStream::QuadraticStream(StreamDef def) : def_(std::move(def)) {
  const Matrix& a1 = def_.a1;
  if (a1.rows() == 0 || a1.rows() != a1.cols()) {
    throw std::invalid_argument("stream: quadratic term must be square and non-empty");
  }
  const int dim = static_cast<int>(a1.rows());
  if ((a1 - a1.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, a1.cwiseAbs().maxCoeff())) {
    throw std::invalid_argument("stream: quadratic term must be symmetric");
  }
  if (def_.a2.size() > 0 && (def_.a2.rows() != dim || def_.a2.cols() != dim)) {
    throw std::invalid_argument("stream: modulation term has wrong dimensions");
  }
  if (def_.g1.size() > 0 && def_.g1.cols() != dim) {
    throw std::invalid_argument("stream: equality map has wrong column count");
  }
  if (def_.g2.size() > 0 &&
      (def_.g1.size() == 0 || def_.g2.rows() != def_.g1.rows() || def_.g2.cols() != dim)) {
    throw std::invalid_argument("stream: equality modulation has wrong dimensions");
  }
  if (def_.gp.size() > 0 && def_.gp.cols() != dim) {
    throw std::invalid_argument("stream: inequality map has wrong column count");
  }
  if (def_.nonquad_c.size() > 0) {
    if (def_.nonquad_c.size() != dim) {
      throw std::invalid_argument("stream: logistic direction has wrong length");
    }
    if (std::abs(def_.nonquad_c.norm() - 1.0) > 1e-9) {
      throw std::invalid_argument("stream: logistic direction must have unit norm");
    }
  }
  if (def_.b_spec.direction.size() != dim) {
    throw std::invalid_argument("stream: b direction must have length n");
  }
  if (def_.g1.size() > 0 && def_.h_spec.direction.size() != def_.g1.rows()) {
    throw std::invalid_argument("stream: h direction must have length p");
  }
  if (def_.gp.size() > 0 && def_.hp_spec.direction.size() != def_.gp.rows()) {
    throw std::invalid_argument("stream: hp direction must have length p'");
  }
  const SpectralBounds& sb = def_.bounds;
  if (!(sb.lambda_lo > 0.0) || sb.lambda_lo > sb.lambda_hi || !(sb.mu_lo > 0.0) ||
      sb.mu_lo > sb.mu_hi) {
    throw std::invalid_argument("stream: declared spectral bounds must satisfy 0 < lo <= hi");
  }

  // honesty check of the declared bounds over the modulation range (a single
  // evaluation when time-invariant)
  const int rows = p() + p_prime();
  const int grid = time_varying() ? 101 : 1;
  for (int i = 0; i < grid; ++i) {
    const double s = (grid == 1) ? 0.0 : -1.0 + 2.0 * static_cast<double>(i) / (grid - 1);
    Matrix a = def_.a1;
    if (def_.a2.size() > 0) a += s * def_.a2;
    const auto eig = linalg::sym_eigenvalues(a);
    if (eig.front() < sb.lambda_lo - 1e-9 || eig.back() > sb.lambda_hi + 1e-9) {
      throw std::invalid_argument("stream: declared curvature bounds are violated at modulation " +
                                  std::to_string(s));
    }
    if (rows > 0) {
      Matrix stack(rows, dim);
      if (p() > 0) {
        stack.topRows(p()) = def_.g1;
        if (def_.g2.size() > 0) stack.topRows(p()) += s * def_.g2;
      }
      if (p_prime() > 0) stack.bottomRows(p_prime()) = def_.gp;
      if (min_singular_value(stack) < 1e-8) {
        throw std::invalid_argument("stream: stacked constraint matrix loses row rank at modulation " +
                                    std::to_string(s));
      }
      // the declared mu range must cover G A^-1 G^T; skip for the logistic
      // case, whose bounds are intentionally widened for the extra curvature
      if (!has_nonquad()) {
        const Matrix op = stack * a.llt().solve(stack.transpose());
        const auto mu = linalg::sym_eigenvalues(0.5 * (op + op.transpose()));
        if (mu.front() < sb.mu_lo - 1e-9 || mu.back() > sb.mu_hi + 1e-9) {
          throw std::invalid_argument("stream: declared mu bounds are violated at modulation " +
                                      std::to_string(s));
        }
      }
    }
  }
}

double QuadraticStream::modulation(long k) const {
  if (!time_varying()) return 0.0;
  return std::sin(def_.tv_omega * static_cast<double>(k));
}

Matrix QuadraticStream::a_at(long k) const {
  Matrix out;
  a_into(k, out);
  return out;
}

void QuadraticStream::a_into(long k, Matrix& out) const {
  out = def_.a1;
  if (def_.a2.size() > 0) out += modulation(k) * def_.a2;
}

Vector QuadraticStream::b_at(long k) const { return signals::eval_signal(def_.b_spec, k); }

Matrix QuadraticStream::g_at(long k) const {
  Matrix out;
  g_into(k, out);
  return out;
}

void QuadraticStream::g_into(long k, Matrix& out) const {
  if (!has_eq()) throw std::logic_error("stream: no equality block");
  out = def_.g1;
  if (def_.g2.size() > 0) out += modulation(k) * def_.g2;
}

Vector QuadraticStream::h_at(long k) const {
  if (!has_eq()) throw std::logic_error("stream: no equality block");
  return signals::eval_signal(def_.h_spec, k);
}

Vector QuadraticStream::hp_at(long k) const {
  if (!has_ineq()) throw std::logic_error("stream: no inequality block");
  return signals::eval_signal(def_.hp_spec, k);
}

double QuadraticStream::nonquad_gain(long k) const {
  if (!has_nonquad()) return 0.0;
  return std::sin(def_.nonquad_omega * static_cast<double>(k));
}

QuadraticStream make_stream(const StreamRecipe& recipe) {
  if (recipe.n <= 0 || recipe.p < 0 || recipe.p_prime < 0) {
    throw std::invalid_argument("make_stream: bad dimensions");
  }
  util::Rng rng(recipe.seed);
  StreamDef def;

  // curvature: V diag(lambda) V^T with lambda drawn from the declared range
  Vector lam(recipe.n);
  for (int i = 0; i < recipe.n; ++i) lam(i) = rng.uniform(recipe.eig_lo, recipe.eig_hi);
  const Matrix v = random_orthogonal(rng, recipe.n, recipe.n);
  Matrix a1 = v * lam.asDiagonal() * v.transpose();
  def.a1 = 0.5 * (a1 + a1.transpose());

  // equality and inequality rows are one stacked draw, so streams that move
  // rows between the two blocks (but share a seed) see identical matrices
  const int rows = recipe.p + recipe.p_prime;
  if (rows > 0) {
    Vector sig(rows);
    for (int i = 0; i < rows; ++i) sig(i) = rng.uniform(recipe.sigma_lo, recipe.sigma_hi);
    const Matrix w = random_orthogonal(rng, recipe.n, rows);   // orthonormal columns
    const Matrix u = random_orthogonal(rng, rows, rows);
    const Matrix stacked = u * sig.asDiagonal() * w.transpose();
    if (recipe.p > 0) def.g1 = stacked.topRows(recipe.p);
    if (recipe.p_prime > 0) def.gp = stacked.bottomRows(recipe.p_prime);
  }

  if (recipe.time_varying) {
    def.tv_omega = recipe.tv_omega;
    // sparse symmetric perturbation of ones; resample until the modulated
    // curvature stays safely positive definite across the whole swing
    for (int attempt = 0;; ++attempt) {
      if (attempt >= 100) {
        throw std::runtime_error("make_stream: could not draw a curvature perturbation keeping "
                                 "the stream positive definite");
      }
      Matrix a2 = Matrix::Zero(recipe.n, recipe.n);
      for (int i = 0; i < recipe.n; ++i)
        for (int j = i; j < recipe.n; ++j)
          if (rng.bernoulli(recipe.tv_density)) a2(i, j) = a2(j, i) = 1.0;
      double worst = std::numeric_limits<double>::max();
      for (int gi = 0; gi <= 200; ++gi) {
        const double s = -1.0 + gi / 100.0;
        worst = std::min(worst, linalg::sym_eigenvalues(def.a1 + s * a2).front());
      }
      if (worst > RANK_FLOOR) {
        def.a2 = a2;
        break;
      }
    }
    if (recipe.p > 0) {
      for (int attempt = 0;; ++attempt) {
        if (attempt >= 100) {
          throw std::runtime_error("make_stream: could not draw a constraint perturbation keeping "
                                   "full row rank");
        }
        Matrix g2 = Matrix::Zero(recipe.p, recipe.n);
        for (int i = 0; i < recipe.p; ++i)
          for (int j = 0; j < recipe.n; ++j)
            if (rng.bernoulli(recipe.tv_density)) g2(i, j) = 1.0;
        double worst = std::numeric_limits<double>::max();
        for (int gi = 0; gi <= 200; ++gi) {
          const double s = -1.0 + gi / 100.0;
          worst = std::min(worst, min_singular_value(def.g1 + s * g2));
        }
        if (worst > RANK_FLOOR) {
          def.g2 = g2;
          break;
        }
      }
    }
  }

  if (recipe.nonquad) {
    Vector c(recipe.n);
    for (int i = 0; i < recipe.n; ++i) c(i) = rng.normal();
    def.nonquad_c = c / c.norm();
    def.nonquad_omega = recipe.nonquad_omega;
  }

  // declared spectral bounds: closed-form by default, sampled extremes with a
  // safety margin when the stream is modulated or the recipe asks for
  // measured bounds (the sampling loop degenerates to one repeated point for
  // time-invariant streams)
  if (!recipe.time_varying && !recipe.measured_bounds) {
    double lo = recipe.eig_lo, hi = recipe.eig_hi;
    if (recipe.nonquad) {
      lo -= LOGISTIC_CURV;
      hi += LOGISTIC_CURV;
      if (lo <= 0.0) throw std::invalid_argument("make_stream: logistic curvature would destroy "
                                                 "strong convexity; raise eig_lo");
    }
    def.bounds = (rows > 0) ? bounds_from_singular_values(lo, hi, recipe.sigma_lo, recipe.sigma_hi)
                            : SpectralBounds{lo, hi, 1.0, 1.0};
  } else {
    double lam_lo = std::numeric_limits<double>::max(), lam_hi = std::numeric_limits<double>::lowest();
    double mu_lo = lam_lo, mu_hi = lam_hi;
    double sig_lo = lam_lo, sig_hi = lam_hi;
    for (int gi = 0; gi <= 400; ++gi) {
      const double s = -1.0 + gi / 200.0;
      Matrix a = def.a1;
      if (def.a2.size() > 0) a += s * def.a2;
      const auto eig = linalg::sym_eigenvalues(a);
      lam_lo = std::min(lam_lo, eig.front());
      lam_hi = std::max(lam_hi, eig.back());
      if (rows > 0) {
        Matrix stack(rows, recipe.n);
        if (recipe.p > 0) {
          stack.topRows(recipe.p) = def.g1;
          if (def.g2.size() > 0) stack.topRows(recipe.p) += s * def.g2;
        }
        if (recipe.p_prime > 0) stack.bottomRows(recipe.p_prime) = def.gp;
        const Matrix op = stack * a.llt().solve(stack.transpose());
        const auto mu = linalg::sym_eigenvalues(0.5 * (op + op.transpose()));
        mu_lo = std::min(mu_lo, mu.front());
        mu_hi = std::max(mu_hi, mu.back());
        Eigen::JacobiSVD<Matrix> svd(stack);
        sig_lo = std::min(sig_lo, svd.singularValues().minCoeff());
        sig_hi = std::max(sig_hi, svd.singularValues().maxCoeff());
      }
    }
    lam_lo *= (1.0 - BOUNDS_MARGIN);
    lam_hi *= (1.0 + BOUNDS_MARGIN);
    if (recipe.nonquad) {
      lam_lo -= LOGISTIC_CURV;
      lam_hi += LOGISTIC_CURV;
      if (lam_lo <= 0.0) throw std::invalid_argument("make_stream: logistic curvature would destroy "
                                                     "strong convexity");
      if (rows > 0) {
        def.bounds = bounds_from_singular_values(lam_lo, lam_hi, sig_lo * (1.0 - BOUNDS_MARGIN),
                                                 sig_hi * (1.0 + BOUNDS_MARGIN));
      } else {
        def.bounds = SpectralBounds{lam_lo, lam_hi, 1.0, 1.0};
      }
    } else if (rows > 0) {
      def.bounds = SpectralBounds{lam_lo, lam_hi, mu_lo * (1.0 - BOUNDS_MARGIN),
                                  mu_hi * (1.0 + BOUNDS_MARGIN)};
    } else {
      def.bounds = SpectralBounds{lam_lo, lam_hi, 1.0, 1.0};
    }
  }

  def.b_spec = recipe.b_signal;
  def.h_spec = recipe.h_signal;
  def.hp_spec = recipe.hp_signal;
  if (def.b_spec.direction.size() == 0) def.b_spec.direction = Vector::Ones(recipe.n);
  if (recipe.p > 0 && def.h_spec.direction.size() == 0)
    def.h_spec.direction = Vector::Ones(recipe.p);
  if (recipe.p_prime > 0 && def.hp_spec.direction.size() == 0)
    def.hp_spec.direction = Vector::Ones(recipe.p_prime);

  return QuadraticStream(std::move(def));
}

LagrangianGradients lagrangian_gradients(const QuadraticStream& stream, long k,
                                         const Vector& x, const Vector& w, const Vector& wp) {
  if (x.size() != stream.n()) throw std::invalid_argument("lagrangian_gradients: bad x length");
  if (stream.has_eq() ? w.size() != stream.p() : w.size() != 0) {
    throw std::invalid_argument("lagrangian_gradients: bad w length");
  }
  if (stream.has_ineq() ? wp.size() != stream.p_prime() : wp.size() != 0) {
    throw std::invalid_argument("lagrangian_gradients: bad w' length");
  }

  LagrangianGradients g;
  g.e = stream.a_at(k) * x + stream.b_at(k);
  if (stream.has_nonquad()) {
    g.e += stream.nonquad_gain(k) * sigmoid(stream.nonquad_c().dot(x)) * stream.nonquad_c();
  }
  if (stream.has_eq()) {
    const Matrix gk = stream.g_at(k);
    g.e += gk.transpose() * w;
    g.f = gk * x - stream.h_at(k);
  }
  if (stream.has_ineq()) {
    g.e += stream.gp().transpose() * wp;
    g.fp = stream.gp() * x - stream.hp_at(k);
  }
  return g;
}

double nonquadratic_cost(const QuadraticStream& stream, long k, const Vector& x) {
  if (!stream.has_nonquad()) throw std::logic_error("nonquadratic_cost: stream has no logistic term");
  if (x.size() != stream.n()) throw std::invalid_argument("nonquadratic_cost: bad x length");
  const double quad = 0.5 * x.dot(stream.a_at(k) * x) + stream.b_at(k).dot(x);
  return quad + stream.nonquad_gain(k) * log1pexp(stream.nonquad_c().dot(x));
}

namespace {

// Solve min f_k(x) s.t. S x = t for a stacked equality map S (possibly with
// zero rows). Quadratic costs take one saddle solve; the logistic term is
// handled with damped Newton on the KKT residual.
void solve_stacked(const QuadraticStream& stream, long k, const Matrix& s, const Vector& t,
                   Vector& x, Vector& w) {
  const int n = stream.n();
  const int rows = static_cast<int>(s.rows());
  const Matrix a = stream.a_at(k);
  const Vector b = stream.b_at(k);

  Matrix kkt(n + rows, n + rows);
  Vector rhs(n + rows);
  const auto assemble = [&](const Matrix& hess) {
    kkt.topLeftCorner(n, n) = hess;
    if (rows > 0) {
      kkt.topRightCorner(n, rows) = s.transpose();
      kkt.bottomLeftCorner(rows, n) = s;
      kkt.bottomRightCorner(rows, rows).setZero();
    }
  };

  if (!stream.has_nonquad()) {
    assemble(a);
    rhs.head(n) = -b;
    rhs.tail(rows) = t;
    Vector sol;
    try {
      sol = linalg::solve(kkt, rhs);
    } catch (const linalg::SingularMatrixError& e) {
      throw std::runtime_error(std::string("oracle: saddle system is singular; the stream violates "
                                           "strong convexity or full row rank (") + e.what() + ")");
    }
    x = sol.head(n);
    w = sol.tail(rows);
    return;
  }

  // damped Newton from the provided warm start (falls back to zero vectors)
  if (x.size() != n) x = Vector::Zero(n);
  if (w.size() != rows) w = Vector::Zero(rows);
  const Vector& c = stream.nonquad_c();
  const double gain = stream.nonquad_gain(k);
  Vector res(n + rows);
  const auto residual = [&](const Vector& xx, const Vector& ww) {
    res.head(n) = a * xx + b + gain * sigmoid(c.dot(xx)) * c;
    if (rows > 0) {
      res.head(n) += s.transpose() * ww;
      res.tail(rows) = s * xx - t;
    }
    return res.norm();
  };

  double rn = residual(x, w);
  for (int iter = 0; iter < NEWTON_MAX_ITER; ++iter) {
    if (rn <= NEWTON_TOL) break;
    const double sg = sigmoid(c.dot(x));
    assemble(a + gain * sg * (1.0 - sg) * (c * c.transpose()));
    const Vector step = linalg::solve(kkt, res);
    double alpha = 1.0;
    for (int ls = 0; ls < 60; ++ls) {
      const Vector xx = x - alpha * step.head(n);
      const Vector ww = w - alpha * step.tail(rows);
      const double rn_new = residual(xx, ww);
      if (rn_new <= (1.0 - 1e-4 * alpha) * rn) {
        x = xx;
        w = ww;
        rn = rn_new;
        break;
      }
      alpha *= 0.5;
      if (ls == 59) throw std::runtime_error("oracle: Newton line search stalled");
    }
  }
  if (rn > NEWTON_TOL) throw std::runtime_error("oracle: Newton did not reach tolerance");
}

// Assemble the full KKT residual set and the active set; throws if any
// residual exceeds tol.
KktSolution finish_solution(const QuadraticStream& stream, long k, Vector x, Vector w, Vector wp,
                            double tol) {
  KktSolution sol;
  double worst = 0.0;

  Vector grad = stream.a_at(k) * x + stream.b_at(k);
  if (stream.has_nonquad()) {
    grad += stream.nonquad_gain(k) * sigmoid(stream.nonquad_c().dot(x)) * stream.nonquad_c();
  }
  if (stream.has_eq()) {
    const Matrix gk = stream.g_at(k);
    grad += gk.transpose() * w;
    worst = std::max(worst, (gk * x - stream.h_at(k)).cwiseAbs().maxCoeff());
  }
  if (stream.has_ineq()) {
    grad += stream.gp().transpose() * wp;
    const Vector slack = stream.gp() * x - stream.hp_at(k);
    for (int i = 0; i < slack.size(); ++i) {
      worst = std::max(worst, slack(i));                    // primal feasibility
      worst = std::max(worst, -wp(i));                      // dual feasibility
      worst = std::max(worst, std::abs(wp(i) * slack(i)));  // complementary slackness
      if (std::abs(slack(i)) <= tol) sol.active_set.push_back(i);
    }
  }
  worst = std::max(worst, grad.cwiseAbs().maxCoeff());

  if (worst > tol) {
    throw std::runtime_error("oracle: KKT residual " + std::to_string(worst) +
                             " exceeds tolerance at step " + std::to_string(k));
  }
  sol.x_star = std::move(x);
  sol.w_star = std::move(w);
  sol.wp_star = std::move(wp);
  sol.max_residual = worst;
  return sol;
}

// masks of inequality rows ordered by cardinality, then value
std::vector<unsigned> subset_order(int pp) {
  std::vector<unsigned> masks(1u << pp);
  for (unsigned m = 0; m < masks.size(); ++m) masks[m] = m;
  std::stable_sort(masks.begin(), masks.end(), [](unsigned a, unsigned b) {
    return __builtin_popcount(a) < __builtin_popcount(b);
  });
  return masks;
}

}  // namespace

KktSolution kkt_equality_oracle(const QuadraticStream& stream, long k) {
  if (!stream.has_eq()) {
    throw std::invalid_argument("kkt_equality_oracle: stream has no equality block");
  }
  Vector x, w;
  solve_stacked(stream, k, stream.g_at(k), stream.h_at(k), x, w);
  Vector wp = stream.has_ineq() ? Vector::Zero(stream.p_prime()) : Vector();
  // the equality oracle deliberately ignores the inequality block, so build
  // the solution against an equality-only view of the stream
  if (!stream.has_ineq()) {
    return finish_solution(stream, k, std::move(x), std::move(w), Vector(), KKT_TOL_EQ);
  }
  StreamDef eq_view = stream.def();
  eq_view.gp = Matrix();
  eq_view.hp_spec = signals::SignalSpec{};
  return finish_solution(QuadraticStream(std::move(eq_view)), k, std::move(x), std::move(w),
                         Vector(), KKT_TOL_EQ);
}

KktSolution inequality_oracle(const QuadraticStream& stream, long k) {
  if (!stream.has_ineq()) {
    if (!stream.has_eq()) {
      throw std::invalid_argument("inequality_oracle: stream has no constraints");
    }
    return kkt_equality_oracle(stream, k);
  }
  const int p = stream.p();
  const int pp = stream.p_prime();
  if (p + pp > 20) {
    throw std::invalid_argument("inequality_oracle: p + p' exceeds the enumeration envelope of 20");
  }

  const Matrix gp = stream.gp();
  const Vector hp = stream.hp_at(k);
  const Matrix g = stream.has_eq() ? stream.g_at(k) : Matrix(0, stream.n());
  const Vector h = stream.has_eq() ? stream.h_at(k) : Vector(0);

  for (unsigned mask : subset_order(pp)) {
    const int act = __builtin_popcount(mask);
    Matrix s(p + act, stream.n());
    Vector t(p + act);
    if (p > 0) {
      s.topRows(p) = g;
      t.head(p) = h;
    }
    int r = p;
    for (int i = 0; i < pp; ++i) {
      if (mask & (1u << i)) {
        s.row(r) = gp.row(i);
        t(r) = hp(i);
        ++r;
      }
    }

    Vector x, w;
    try {
      solve_stacked(stream, k, s, t, x, w);
    } catch (const std::runtime_error&) {
      continue;  // degenerate subset; a different active set will cover it
    }

    // candidate filter: inactive rows feasible, active multipliers nonnegative
    Vector wp = Vector::Zero(pp);
    bool ok = true;
    r = p;
    for (int i = 0; i < pp && ok; ++i) {
      if (mask & (1u << i)) {
        wp(i) = w(r++);
        if (wp(i) < -KKT_TOL_INEQ) ok = false;
      } else if (gp.row(i).dot(x) - hp(i) > KKT_TOL_INEQ) {
        ok = false;
      }
    }
    if (!ok) continue;

    return finish_solution(stream, k, std::move(x), p > 0 ? Vector(w.head(p)) : Vector(),
                           std::move(wp), KKT_TOL_INEQ);
  }
  throw std::runtime_error("inequality_oracle: no active set yields a KKT point (infeasible "
                           "problem or numerical breakdown) at step " + std::to_string(k));
}

std::vector<KktSolution> oracle_trajectory(const QuadraticStream& stream, long horizon) {
  if (horizon <= 0) throw std::invalid_argument("oracle_trajectory: horizon must be positive");
  if (stream.has_ineq() && stream.p() + stream.p_prime() > 20) {
    // same envelope the per-step oracle enforces; the affine fast path below
    // would otherwise enumerate subsets without the guard
    throw std::invalid_argument("oracle_trajectory: p + p' exceeds the enumeration envelope of 20");
  }
  std::vector<KktSolution> out;
  out.reserve(horizon);

  const bool fast = !stream.time_varying() && !stream.has_nonquad();
  if (!fast) {
    if (stream.has_ineq()) {
      for (long k = 0; k < horizon; ++k) out.push_back(inequality_oracle(stream, k));
    } else {
      // equality-only: keep a running warm start so the Newton branch takes
      // only a couple of iterations per step
      Vector x, w;
      for (long k = 0; k < horizon; ++k) {
        const Matrix s = stream.has_eq() ? stream.g_at(k) : Matrix(0, stream.n());
        const Vector t = stream.has_eq() ? stream.h_at(k) : Vector(0);
        solve_stacked(stream, k, s, t, x, w);
        out.push_back(finish_solution(stream, k, x, stream.has_eq() ? w : Vector(), Vector(),
                                      KKT_TOL_EQ));
      }
    }
    return out;
  }

  // Time-invariant quadratic stream: for each candidate active set the
  // solution is affine in the scalar waves (wb, wh, whp), so three basis
  // solves per subset cover the whole horizon.
  const int n = stream.n();
  const int p = stream.p();
  const int pp = stream.p_prime();
  const Matrix g = stream.has_eq() ? stream.g_at(0) : Matrix(0, n);
  const Matrix gp = stream.has_ineq() ? stream.gp() : Matrix(0, n);
  const Vector hdir = stream.has_eq() ? stream.h_dir() : Vector(0);
  const Vector hpdir = stream.has_ineq() ? stream.hp_dir() : Vector(0);
  const Matrix a = stream.a_at(0);

  struct SubsetBasis {
    unsigned mask;
    bool usable;
    Vector xb, xh, xhp;  // x responses to unit wb / wh / whp
    Vector wb, wh, whp;  // stacked multiplier responses
  };
  std::vector<SubsetBasis> bases;
  for (unsigned mask : subset_order(pp)) {
    const int act = __builtin_popcount(mask);
    Matrix s(p + act, n);
    Vector thp = Vector::Zero(p + act);  // indicator of hp rows, filled below
    if (p > 0) s.topRows(p) = g;
    int r = p;
    for (int i = 0; i < pp; ++i) {
      if (mask & (1u << i)) {
        s.row(r) = gp.row(i);
        thp(r) = hpdir(i);
        ++r;
      }
    }
    Matrix kkt = Matrix::Zero(n + p + act, n + p + act);
    kkt.topLeftCorner(n, n) = a;
    kkt.topRightCorner(n, p + act) = s.transpose();
    kkt.bottomLeftCorner(p + act, n) = s;

    SubsetBasis basis;
    basis.mask = mask;
    basis.usable = true;
    try {
      Vector rhs = Vector::Zero(n + p + act);
      rhs.head(n) = -stream.b_dir();
      Vector sol = linalg::solve(kkt, rhs);
      basis.xb = sol.head(n);
      basis.wb = sol.tail(p + act);

      rhs.setZero();
      if (p > 0) rhs.segment(n, p) = hdir;
      sol = linalg::solve(kkt, rhs);
      basis.xh = sol.head(n);
      basis.wh = sol.tail(p + act);

      rhs.setZero();
      rhs.tail(p + act) = thp;
      sol = linalg::solve(kkt, rhs);
      basis.xhp = sol.head(n);
      basis.whp = sol.tail(p + act);
    } catch (const std::exception&) {
      basis.usable = false;
    }
    bases.push_back(std::move(basis));
  }

  for (long k = 0; k < horizon; ++k) {
    const double wb = stream.b_wave(k);
    const double wh = stream.has_eq() ? stream.h_wave(k) : 0.0;
    const double whp = stream.has_ineq() ? stream.hp_wave(k) : 0.0;
    const Vector hp = stream.has_ineq() ? Vector(whp * hpdir) : Vector(0);

    bool done = false;
    for (const auto& basis : bases) {
      if (!basis.usable) continue;
      const Vector x = wb * basis.xb + wh * basis.xh + whp * basis.xhp;
      const Vector wfull = wb * basis.wb + wh * basis.wh + whp * basis.whp;

      Vector wp = Vector::Zero(pp);
      bool ok = true;
      int r = p;
      for (int i = 0; i < pp && ok; ++i) {
        if (basis.mask & (1u << i)) {
          wp(i) = wfull(r++);
          if (wp(i) < -KKT_TOL_INEQ) ok = false;
        } else if (gp.row(i).dot(x) - hp(i) > KKT_TOL_INEQ) {
          ok = false;
        }
      }
      if (!ok) continue;

      out.push_back(finish_solution(stream, k, x, p > 0 ? Vector(wfull.head(p)) : Vector(),
                                    stream.has_ineq() ? std::move(wp) : Vector(),
                                    stream.has_ineq() ? KKT_TOL_INEQ : KKT_TOL_EQ));
      done = true;
      break;
    }
    if (!done) {
      throw std::runtime_error("oracle_trajectory: no active set yields a KKT point at step " +
                               std::to_string(k));
    }
  }
  return out;
}

}  // namespace impopt::problems
