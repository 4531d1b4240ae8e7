//! Minimal-solution branch of `(-Δ)^s u = λ f(u)` in the radial Galerkin space:
//! monotone iteration, amplitude-parametrized Newton continuation through the fold,
//! linearized stability, and the two-sided estimate of `λ*`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{domain, Error, Result};
use crate::nonlinearity::Nonlinearity;
use crate::spectral::{torsion_at_origin, BallBasis, RadialCoeffs};

/// Solver tolerances and iteration limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Euclidean coefficient residual accepted by Newton, relative to `max(1, ‖(-Δ)^s u‖)`.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Sup-norm change between monotone iterates that counts as convergence.
    pub monotone_tol: f64,
    pub monotone_max_iter: usize,
    /// `u(0)` above this means the monotone iteration blew up.
    pub blowup: f64,
    pub eig_tol: f64,
    /// Relative width allowed for the `λ*` bracket.
    pub bracket_tol: f64,
    /// Order `q` of the spectral filter `σ_k = exp(-36 (k/M)^q)`, `M ≤ K`, applied to the reaction
    /// term; `0` turns it off. Without it the partial sums near `ρ = 0` are useless once
    /// `n ≥ 5`, because the boundary value of `f(u)` feeds a tail that grows like
    /// `k^{(n-3)/2 - 2s}`.
    pub filter_order: u32,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            newton_tol: 1e-10,
            newton_max_iter: 40,
            monotone_tol: 1e-9,
            monotone_max_iter: 200_000,
            blowup: 1e6,
            eig_tol: 1e-8,
            bracket_tol: 1e-3,
            filter_order: 6,
        }
    }
}

/// One converged point `(t = u(0), λ, u)` of the branch.
#[derive(Debug, Clone)]
pub struct BranchPoint {
    pub t: f64,
    pub lambda: f64,
    pub u: RadialCoeffs,
    /// Smallest eigenvalue of the linearized operator `(-Δ)^s - λ f'(u)`.
    pub nu1: f64,
    /// Euclidean norm of the coefficient residual.
    pub residual: f64,
    pub newton_iterations: usize,
}

/// Points ordered by amplitude, with the fold (largest `λ`) when one was passed.
#[derive(Debug, Clone, Default)]
pub struct Branch {
    pub points: Vec<BranchPoint>,
    /// Grid index of the largest `λ` once `λ` has started to decrease.
    pub fold_index: Option<usize>,
    /// Fold located to high accuracy between the grid points around `fold_index`.
    pub fold: Option<BranchPoint>,
    /// Why continuation stopped early, if it did.
    pub failure: Option<String>,
}

impl Branch {
    /// Violations of the ordering and semi-stability invariants.
    pub fn invariant_violations(&self, eig_tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        let fold = self.fold_index.unwrap_or(self.points.len());
        for (i, w) in self.points.windows(2).enumerate() {
            let rising = i < fold;
            if rising && !(w[1].lambda > w[0].lambda) {
                out.push(format!("λ not increasing between t = {} and t = {}", w[0].t, w[1].t));
            }
            if !rising && !(w[1].lambda < w[0].lambda) {
                out.push(format!("λ not decreasing after the fold at t = {}", w[1].t));
            }
        }
        for p in self.points.iter().take(fold) {
            if p.nu1 < -eig_tol {
                out.push(format!("ν₁ = {:e} < 0 before the fold at t = {}", p.nu1, p.t));
            }
        }
        out
    }

    /// Largest `λ` reached: the refined fold if available, else the best grid point.
    pub fn lambda_max(&self) -> Option<f64> {
        self.fold.as_ref().map(|p| p.lambda).or_else(|| self.points.iter().map(|p| p.lambda).reduce(f64::max))
    }
}

/// Why the monotone iteration was abandoned.
#[derive(Debug, Clone, PartialEq)]
pub enum DivergenceSignal {
    /// `u(0)` exceeded the blowup threshold.
    Blowup { iterations: usize, u0: f64 },
    NonFinite { iterations: usize },
    /// The iteration limit was reached without the Cauchy criterion being met.
    Stalled { iterations: usize, last_change: f64 },
}

#[derive(Debug, Clone)]
pub enum MonotoneOutcome {
    Converged { u: RadialCoeffs, iterations: usize },
    Diverged(DivergenceSignal),
}

impl MonotoneOutcome {
    pub fn converged(&self) -> bool {
        matches!(self, MonotoneOutcome::Converged { .. })
    }
}

/// Bracket `[lo, hi]` for `λ*` from bisection on the monotone iteration, together with
/// the fold value from continuation.
#[derive(Debug, Clone)]
pub struct LambdaStar {
    pub lo: f64,
    pub hi: f64,
    pub fold_lambda: f64,
    pub fold_t: f64,
    pub branch: Branch,
}

impl LambdaStar {
    /// Fold value inside the bracket and the bracket narrower than `rel_tol`.
    pub fn consistent(&self, rel_tol: f64) -> bool {
        let slack = 1e-9 * self.hi;
        self.fold_lambda >= self.lo - slack
            && self.fold_lambda <= self.hi + slack
            && (self.hi - self.lo) <= rel_tol * self.hi
    }

    pub fn relative_gap(&self) -> f64 {
        let mid = 0.5 * (self.lo + self.hi);
        (self.fold_lambda - mid).abs() / mid
    }
}

/// Settings for adaptive amplitude stepping towards the fold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceOptions {
    pub dt0: f64,
    pub dt_max: f64,
    pub dt_min: f64,
    /// Give up (without a fold) beyond this amplitude.
    pub t_limit: f64,
    /// Points kept after the fold is detected.
    pub post_fold: usize,
    pub max_points: usize,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self { dt0: 0.05, dt_max: 0.25, dt_min: 1e-6, t_limit: 60.0, post_fold: 3, max_points: 2000 }
    }
}

/// Galerkin solver for one basis and nonlinearity.
#[derive(Debug, Clone)]
pub struct Solver<'a> {
    basis: &'a BallBasis,
    f: &'a Nonlinearity,
    opts: SolverOptions,
    phi0: DVector<f64>,
    mu_s: DVector<f64>,
    sigma: DVector<f64>,
    sqrt_sigma: DVector<f64>,
    filter_scale: f64,
}

impl<'a> Solver<'a> {
    pub fn new(basis: &'a BallBasis, f: &'a Nonlinearity, opts: SolverOptions) -> Self {
        let phi0 = DVector::from_fn(basis.modes(), |k, _| basis.phi(k, 0.0));
        let mu_s = DVector::from_column_slice(basis.frac_eigenvalues());
        let (sigma, filter_scale) = filter_weights(basis, opts.filter_order)
            .unwrap_or_else(|_| (DVector::from_element(basis.modes(), 1.0), f64::INFINITY));
        let sqrt_sigma = sigma.map(f64::sqrt);
        Self { basis, f, opts, phi0, mu_s, sigma, sqrt_sigma, filter_scale }
    }

    /// Mode index `M` at which the filter reaches `e^{-36}`; infinite when it is off.
    pub fn filter_scale(&self) -> f64 {
        self.filter_scale
    }

    /// Filter weights `σ_k` multiplying the projected reaction term.
    pub fn filter(&self) -> &[f64] {
        self.sigma.as_slice()
    }

    pub fn basis(&self) -> &BallBasis {
        self.basis
    }

    pub fn nonlinearity(&self) -> &Nonlinearity {
        self.f
    }

    pub fn options(&self) -> &SolverOptions {
        &self.opts
    }

    fn nodal(&self, c: &DVector<f64>) -> DVector<f64> {
        self.basis.phi_at_nodes() * c
    }

    /// Filtered coefficients of `f(u)`, projected pseudo-spectrally from the quadrature nodes.
    fn forcing(&self, nodal: &DVector<f64>) -> DVector<f64> {
        let vals: Vec<f64> = nodal.iter().map(|&u| self.f.eval(u)).collect();
        self.basis.analyze_nodal(&vals).as_dvector().component_mul(&self.sigma)
    }

    /// Coefficients of `(-Δ)^s u - λ σ f(u)`.
    pub fn residual(&self, u: &RadialCoeffs, lambda: f64) -> RadialCoeffs {
        let c = u.as_dvector();
        let r = self.mu_s.component_mul(&c) - self.forcing(&self.nodal(&c)) * lambda;
        self.basis.coeffs(r.iter().copied().collect()).expect("mode count")
    }

    /// `∫ f'(u) φ_j φ_k dx` under the radial quadrature.
    fn tangent_gram(&self, nodal: &DVector<f64>) -> DMatrix<f64> {
        let w: Vec<f64> = nodal.iter().map(|&u| self.f.deriv(u)).collect();
        self.basis.weighted_gram(&w)
    }

    /// Smallest eigenvalue `ν₁` of `diag(μ_k^s) - λ F` with `F_{jk} = ∫ f'(u) φ_j φ_k dx`;
    /// `ν₁ ≥ 0` is semi-stability in the radial sector. With the filter on, `F` becomes
    /// `Σ^{1/2} F Σ^{1/2}`, which is similar to the Newton block `diag(μ^s) - λ Σ F`.
    pub fn stability_eigenvalue(&self, u: &RadialCoeffs, lambda: f64) -> Result<f64> {
        let nodal = self.nodal(&u.as_dvector());
        let d = DMatrix::from_diagonal(&self.sqrt_sigma);
        let mut m = &d * self.tangent_gram(&nodal) * &d * (-lambda);
        for k in 0..self.basis.modes() {
            m[(k, k)] += self.mu_s[k];
        }
        let m = (&m + m.transpose()) * 0.5;
        let eig = SymmetricEigen::try_new(m, f64::EPSILON, 10_000).ok_or(Error::NoConvergence {
            what: "symmetric eigensolver",
            detail: "QR sweep limit reached".into(),
        })?;
        Ok(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min))
    }

    /// Minimal solution by `u^{m+1} = λ (-Δ)^{-s} f(u^m)` from `u^0 = 0`.
    pub fn monotone_iterate(&self, lambda: f64) -> Result<MonotoneOutcome> {
        if !(lambda >= 0.0) {
            return Err(domain(format!("λ must be nonnegative, got {lambda}")));
        }
        let mut nodal = DVector::zeros(self.basis.quadrature().nodes.len());
        let mut u0 = 0.0;
        let mut change = f64::INFINITY;
        for m in 1..=self.opts.monotone_max_iter {
            let next = self.forcing(&nodal).component_div(&self.mu_s) * lambda;
            let next_nodal = self.nodal(&next);
            let next_u0 = self.phi0.dot(&next);
            if !next_u0.is_finite() || next_nodal.iter().any(|v| !v.is_finite()) {
                return Ok(MonotoneOutcome::Diverged(DivergenceSignal::NonFinite { iterations: m }));
            }
            if next_u0 > self.opts.blowup {
                return Ok(MonotoneOutcome::Diverged(DivergenceSignal::Blowup { iterations: m, u0: next_u0 }));
            }
            change = (&next_nodal - &nodal).amax().max((next_u0 - u0).abs());
            if change < self.opts.monotone_tol {
                let u = self.basis.coeffs(next.iter().copied().collect())?;
                return Ok(MonotoneOutcome::Converged { u, iterations: m });
            }
            nodal = next_nodal;
            u0 = next_u0;
        }
        Ok(MonotoneOutcome::Diverged(DivergenceSignal::Stalled {
            iterations: self.opts.monotone_max_iter,
            last_change: change,
        }))
    }

    /// Solves `{(-Δ)^s u = λ f(u), u(0) = t}` for `(u, λ)` by Newton's method on the
    /// bordered system, starting from `guess`.
    pub fn newton_solve(&self, t: f64, guess: (&RadialCoeffs, f64)) -> Result<BranchPoint> {
        if !(t >= 0.0) {
            return Err(domain(format!("amplitude must be nonnegative, got {t}")));
        }
        if t == 0.0 {
            return self.trivial_point();
        }
        let k = self.basis.modes();
        let mut c = guess.0.as_dvector();
        let mut lambda = guess.1;
        let eval_f = |c: &DVector<f64>, lambda: f64| -> (DVector<f64>, DVector<f64>, DVector<f64>) {
            let nodal = self.nodal(c);
            let b = self.forcing(&nodal);
            let r = self.mu_s.component_mul(c) - &b * lambda;
            (r, b, nodal)
        };
        let (mut r, mut b, mut nodal) = eval_f(&c, lambda);
        let merit = |r: &DVector<f64>, c: &DVector<f64>| r.norm_squared() + (self.phi0.dot(c) - t).powi(2);
        for it in 0..=self.opts.newton_max_iter {
            let scale = self.mu_s.component_mul(&c).norm().max(1.0);
            let constraint = (self.phi0.dot(&c) - t).abs();
            let roundoff = 16.0 * f64::EPSILON * self.phi0.component_mul(&c).abs().sum();
            if it > 0 && r.norm() <= self.opts.newton_tol * scale && constraint <= 1e-12 * (1.0 + t) + roundoff {
                let u = self.basis.coeffs(c.iter().copied().collect())?;
                let nu1 = self.stability_eigenvalue(&u, lambda)?;
                return Ok(BranchPoint { t, lambda, u, nu1, residual: r.norm(), newton_iterations: it });
            }
            if it == self.opts.newton_max_iter {
                break;
            }
            let mut jac = DMatrix::zeros(k + 1, k + 1);
            let sf = DMatrix::from_diagonal(&self.sigma) * self.tangent_gram(&nodal);
            jac.view_mut((0, 0), (k, k)).copy_from(&(sf * (-lambda)));
            for i in 0..k {
                jac[(i, i)] += self.mu_s[i];
                jac[(i, k)] = -b[i];
                jac[(k, i)] = self.phi0[i];
            }
            let mut rhs = DVector::zeros(k + 1);
            rhs.rows_mut(0, k).copy_from(&(-&r));
            rhs[k] = t - self.phi0.dot(&c);
            let step = jac.lu().solve(&rhs).ok_or(Error::NoConvergence {
                what: "Newton",
                detail: format!("singular bordered Jacobian at t = {t}"),
            })?;
            let m0 = merit(&r, &c);
            let mut alpha = 1.0;
            loop {
                let c_try = &c + step.rows(0, k) * alpha;
                let l_try = lambda + alpha * step[k];
                let (r_try, b_try, n_try) = eval_f(&c_try, l_try);
                let m1 = merit(&r_try, &c_try);
                if m1.is_finite() && (m1 < m0 || alpha < 1.0 / 64.0) {
                    c = c_try;
                    lambda = l_try;
                    r = r_try;
                    b = b_try;
                    nodal = n_try;
                    break;
                }
                alpha *= 0.5;
            }
            if !lambda.is_finite() {
                break;
            }
        }
        Err(Error::NoConvergence {
            what: "Newton",
            detail: format!("t = {t}: residual {:e} after {} steps", r.norm(), self.opts.newton_max_iter),
        })
    }

    fn trivial_point(&self) -> Result<BranchPoint> {
        let u = self.basis.zero();
        Ok(BranchPoint { t: 0.0, lambda: 0.0, nu1: self.mu_s[0], u, residual: 0.0, newton_iterations: 0 })
    }

    /// Filtered torsion function, the solution of the linearized problem per unit `λ f(0)`.
    pub fn torsion(&self) -> RadialCoeffs {
        let z = self.basis.torsion().as_dvector().component_mul(&self.sigma);
        self.basis.coeffs(z.iter().copied().collect()).expect("mode count")
    }

    /// First-order guess near `t = 0`: `u ≈ λ f(0) ζ_0` with `λ = t / (f(0) ζ_0(0))`.
    pub fn linearized_guess(&self, t: f64) -> (RadialCoeffs, f64) {
        let zeta = self.torsion();
        let f0 = self.f.eval(0.0);
        let lambda = t / (f0 * self.basis.eval_origin(&zeta));
        (zeta.scaled(lambda * f0), lambda)
    }

    fn predict(&self, points: &[BranchPoint], t: f64) -> (RadialCoeffs, f64) {
        let nontrivial: Vec<&BranchPoint> = points.iter().filter(|p| p.t > 0.0).collect();
        match nontrivial.as_slice() {
            [] => self.linearized_guess(t),
            [p] => {
                let (g, l) = self.linearized_guess(t);
                let ratio = t / p.t;
                if ratio > 0.0 && ratio.is_finite() {
                    (p.u.scaled(ratio), p.lambda * ratio)
                } else {
                    (g, l)
                }
            }
            [.., a, b] => {
                let w = (t - b.t) / (b.t - a.t);
                let u = b.u.combine(1.0 + w, &a.u, -w).expect("same basis");
                (u, b.lambda + w * (b.lambda - a.lambda))
            }
        }
    }

    /// Newton continuation over a strictly increasing amplitude grid starting at 0.
    ///
    /// Stops at the first non-convergent amplitude (recorded in `failure`) and after a
    /// second turning point, so the result holds at most one fold.
    pub fn continue_branch(&self, t_grid: &[f64]) -> Result<Branch> {
        if t_grid.first().is_some_and(|&t| t < 0.0) || t_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(domain("amplitude grid must be nonnegative and strictly increasing"));
        }
        let mut branch = Branch::default();
        for &t in t_grid {
            let (gu, gl) = self.predict(&branch.points, t);
            match self.newton_solve(t, (&gu, gl)) {
                Ok(p) => {
                    if !push_point(&mut branch, p) {
                        break;
                    }
                }
                Err(e) => {
                    branch.failure = Some(e.to_string());
                    break;
                }
            }
        }
        if branch.fold_index.is_some() {
            branch.fold = Some(self.refine_fold(&branch)?);
        }
        Ok(branch)
    }

    /// Adaptive amplitude stepping from 0 until `post_fold` points past the fold.
    pub fn trace_to_fold(&self, trace: &TraceOptions) -> Result<Branch> {
        let mut branch = Branch::default();
        branch.points.push(self.trivial_point()?);
        let mut dt = trace.dt0;
        let mut t = 0.0;
        let mut after = 0;
        while branch.points.len() < trace.max_points {
            let t_next = t + dt;
            if t_next > trace.t_limit {
                branch.failure = Some(format!("no fold below amplitude {}", trace.t_limit));
                break;
            }
            let (gu, gl) = self.predict(&branch.points, t_next);
            match self.newton_solve(t_next, (&gu, gl)) {
                Ok(p) => {
                    let iters = p.newton_iterations;
                    let had_fold = branch.fold_index.is_some();
                    if !push_point(&mut branch, p) {
                        break;
                    }
                    t = t_next;
                    if had_fold || branch.fold_index.is_some() {
                        after += 1;
                        if after >= trace.post_fold {
                            break;
                        }
                    }
                    if iters <= 4 {
                        dt = (dt * 1.5).min(trace.dt_max);
                    }
                }
                Err(e) => {
                    dt *= 0.5;
                    if dt < trace.dt_min {
                        branch.failure = Some(e.to_string());
                        break;
                    }
                }
            }
        }
        if branch.fold_index.is_some() {
            branch.fold = Some(self.refine_fold(&branch)?);
        }
        Ok(branch)
    }

    /// Maximizes `λ(t)` between the neighbours of the fold grid point by safeguarded
    /// parabolic interpolation (golden-section fallback).
    pub fn refine_fold(&self, branch: &Branch) -> Result<BranchPoint> {
        let i = branch.fold_index.ok_or(Error::NoFold)?;
        let pts = &branch.points;
        if i == 0 || i + 1 >= pts.len() {
            return Err(Error::NoFold);
        }
        let mut known: Vec<BranchPoint> = pts[i - 1..=i + 1].to_vec();
        let solve_at = |known: &[BranchPoint], t: f64| -> Result<BranchPoint> {
            let near = known
                .iter()
                .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
                .expect("non-empty");
            self.newton_solve(t, (&near.u, near.lambda))
        };
        let (mut a, mut b) = (known[0].t, known[2].t);
        let mut x = known[1].clone();
        let golden = 0.381_966_011_250_105_1;
        for _ in 0..60 {
            if (b - a) <= 1e-9 * x.t.max(1e-3) {
                break;
            }
            // parabola through the three best points around x
            known.sort_by(|p, q| p.t.total_cmp(&q.t));
            let j = known.iter().position(|p| p.t == x.t).expect("x is known");
            let mut cand = None;
            if j > 0 && j + 1 < known.len() {
                let (p, q, r) = (&known[j - 1], &known[j], &known[j + 1]);
                let d1 = (q.t - p.t) * (q.lambda - r.lambda);
                let d2 = (q.t - r.t) * (q.lambda - p.lambda);
                let den = 2.0 * (d1 - d2);
                if den != 0.0 {
                    let v = q.t - ((q.t - p.t) * d1 - (q.t - r.t) * d2) / den;
                    let margin = 1e-3 * (b - a);
                    if v > a + margin && v < b - margin && (v - q.t).abs() > 1e-12 * q.t {
                        cand = Some(v);
                    }
                }
            }
            let v = cand.unwrap_or(if x.t - a > b - x.t {
                x.t - golden * (x.t - a)
            } else {
                x.t + golden * (b - x.t)
            });
            let pv = solve_at(&known, v)?;
            if pv.lambda > x.lambda {
                if v < x.t {
                    b = x.t;
                } else {
                    a = x.t;
                }
                x = pv.clone();
            } else if v < x.t {
                a = v;
            } else {
                b = v;
            }
            known.retain(|p| p.t >= a && p.t <= b);
            known.push(pv);
            known.dedup_by(|p, q| p.t == q.t);
        }
        Ok(x)
    }

    /// Brackets `λ*` by bisection on convergence of the monotone iteration, and compares
    /// with the fold of the continued branch.
    pub fn estimate_lambda_star(&self, trace: &TraceOptions) -> Result<LambdaStar> {
        let branch = self.trace_to_fold(trace)?;
        let fold = branch.fold.clone().ok_or(Error::NoFold)?;
        let (lo, hi) = self.bisect_lambda_star(None)?;
        Ok(LambdaStar { lo, hi, fold_lambda: fold.lambda, fold_t: fold.t, branch })
    }

    /// Bisection bracket for `λ*` using only the monotone iteration; `hint` seeds the
    /// initial bracket search.
    pub fn bisect_lambda_star(&self, hint: Option<f64>) -> Result<(f64, f64)> {
        let zeta0 = self.basis.eval_origin(&self.torsion());
        let mut lo = 0.0;
        let mut hi = hint.unwrap_or(1.0 / (self.f.eval(0.0) * zeta0));
        let mut grow = 0;
        while self.monotone_iterate(hi)?.converged() {
            lo = hi;
            hi *= 2.0;
            grow += 1;
            if grow > 60 {
                return Err(Error::NoConvergence { what: "λ* bracketing", detail: "no divergence found".into() });
            }
        }
        let width = 0.25 * self.opts.bracket_tol;
        while hi - lo > width * hi {
            let mid = 0.5 * (lo + hi);
            if self.monotone_iterate(mid)?.converged() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok((lo, hi))
    }

    /// Relative defect of `μ_1^s ∫ u φ_1 = λ σ_1 ∫ f(u) φ_1`, with both sides integrated
    /// from pointwise values.
    pub fn phi1_identity_defect(&self, p: &BranchPoint) -> f64 {
        let b = self.basis;
        let lhs = b.frac_eigenvalues()[0] * b.integrate(|r| b.eval(&p.u, r) * b.phi(0, r));
        let rhs = p.lambda * self.sigma[0] * b.integrate(|r| self.f.eval(b.eval(&p.u, r)) * b.phi(0, r));
        (lhs - rhs).abs() / rhs.abs().max(f64::MIN_POSITIVE)
    }
}

/// Filter weights `exp(-36 (k/M)^q)`. The scale `M` starts at the mode count and is halved
/// until the filtered torsion at the origin matches its eigenfunction-free value to
/// `1e-5`; in high dimensions roundoff in the growing `φ_k(0)` otherwise swamps the
/// centre. Falls back to the most accurate scale tried.
fn filter_weights(basis: &BallBasis, order: u32) -> Result<(DVector<f64>, f64)> {
    let modes = basis.modes();
    if order == 0 {
        return Ok((DVector::from_element(modes, 1.0), f64::INFINITY));
    }
    let exact = torsion_at_origin(basis.dim(), basis.order())?;
    let z = basis.torsion();
    let terms: Vec<f64> = (0..modes).map(|k| z.c[k] * basis.phi(k, 0.0)).collect();
    let weights = |scale: f64| {
        DVector::from_fn(modes, |k, _| (-36.0 * ((k + 1) as f64 / scale).powi(order as i32)).exp())
    };
    let mut best = (f64::INFINITY, modes as f64);
    let mut scale = modes as f64;
    while scale >= 16.0 || scale == modes as f64 {
        let w = weights(scale);
        let sum: f64 = terms.iter().zip(w.iter()).map(|(t, w)| t * w).sum();
        let err = (sum - exact).abs() / exact;
        if err <= 1e-5 {
            return Ok((w, scale));
        }
        if err < best.0 {
            best = (err, scale);
        }
        scale *= 0.5;
    }
    Ok((weights(best.1), best.1))
}

/// Appends `p`, marking the fold when `λ` first drops. Returns false (dropping `p`)
/// when `λ` rises again after the fold.
fn push_point(branch: &mut Branch, p: BranchPoint) -> bool {
    let n = branch.points.len();
    if n > 0 {
        let last = branch.points[n - 1].lambda;
        match branch.fold_index {
            None if p.lambda < last => branch.fold_index = Some(n - 1),
            Some(_) if p.lambda >= last => return false,
            _ => {}
        }
    }
    branch.points.push(p);
    true
}

/// Largest `∂u/∂ρ` over `samples` equispaced interior radii.
pub fn max_radial_slope(basis: &BallBasis, u: &RadialCoeffs, samples: usize) -> f64 {
    (1..=samples)
        .map(|i| basis.eval_deriv(u, i as f64 / (samples + 1) as f64))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Amplitude `u*(0)` at the fold for bases with `modes` and `2·modes` modes.
#[derive(Debug, Clone, Copy)]
pub struct ExtremalRefinement {
    pub coarse: f64,
    pub fine: f64,
    pub lambda_coarse: f64,
    pub lambda_fine: f64,
}

impl ExtremalRefinement {
    pub fn relative_change(&self) -> f64 {
        (self.fine - self.coarse).abs() / self.fine.abs()
    }
}

/// The extremal candidate: the refined fold point.
pub fn extremal_solution(branch: &Branch) -> Result<&BranchPoint> {
    branch.fold.as_ref().ok_or(Error::NoFold)
}

/// Fold amplitude under `K → 2K` (quadrature order `4K` in both).
pub fn extremal_refinement(
    n: usize,
    s: f64,
    f: &Nonlinearity,
    modes: usize,
    opts: SolverOptions,
    trace: &TraceOptions,
) -> Result<ExtremalRefinement> {
    let fold_at = |k: usize| -> Result<BranchPoint> {
        let basis = BallBasis::build(n, s, k, 4 * k)?;
        let solver = Solver::new(&basis, f, opts);
        let branch = solver.trace_to_fold(trace)?;
        extremal_solution(&branch).cloned()
    };
    let coarse = fold_at(modes)?;
    let fine = fold_at(2 * modes)?;
    Ok(ExtremalRefinement {
        coarse: coarse.t,
        fine: fine.t,
        lambda_coarse: coarse.lambda,
        lambda_fine: fine.lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn setup(n: usize, s: f64, k: usize) -> (BallBasis, Nonlinearity) {
        (BallBasis::build(n, s, k, 4 * k).unwrap(), Nonlinearity::exponential())
    }

    #[test]
    fn residual_examples() {
        let (basis, f) = setup(3, 0.5, 16);
        let solver = Solver::new(&basis, &f, SolverOptions::default());
        let z = basis.zero();
        assert_eq!(solver.residual(&z, 0.0).norm_l2(), 0.0);
        let r = solver.residual(&z, 2.0);
        let want = basis.analyze(|_| 1.0).scaled(-2.0);
        for ((a, b), w) in r.c.iter().zip(&want.c).zip(solver.filter()) {
            assert_relative_eq!(a, &(b * w), epsilon = 1e-14);
        }
        let raw = Solver::new(&basis, &f, SolverOptions { filter_order: 0, ..Default::default() });
        assert!(raw.filter().iter().all(|&w| w == 1.0));
        assert!(solver.filter()[0] > 1.0 - 1e-5 && solver.filter()[15] < 1e-15);
        assert_eq!(solver.filter_scale(), 16.0);
    }

    #[test]
    fn stability_eigenvalue_examples() {
        let (basis, f) = setup(3, 0.5, 16);
        let solver = Solver::new(&basis, &f, SolverOptions { filter_order: 0, ..Default::default() });
        let mu1s = basis.frac_eigenvalues()[0];
        assert_relative_eq!(solver.stability_eigenvalue(&basis.zero(), 0.0).unwrap(), mu1s, max_relative = 1e-12);
        assert_relative_eq!(solver.stability_eigenvalue(&basis.zero(), 0.7).unwrap(), mu1s - 0.7, max_relative = 1e-8);
    }

    #[test]
    fn monotone_iteration_small_lambda() {
        let (basis, f) = setup(3, 0.5, 16);
        let solver = Solver::new(&basis, &f, SolverOptions::default());
        match solver.monotone_iterate(0.0).unwrap() {
            MonotoneOutcome::Converged { u, iterations } => {
                assert_eq!(iterations, 1);
                assert_eq!(u.norm_l2(), 0.0);
            }
            other => panic!("{other:?}"),
        }
        let lambda = 1e-3;
        let MonotoneOutcome::Converged { u, .. } = solver.monotone_iterate(lambda).unwrap() else {
            panic!("small λ must converge")
        };
        let zeta = solver.torsion();
        for rho in [0.0, 0.5, 0.9] {
            let first = lambda * basis.eval(&zeta, rho);
            assert!((basis.eval(&u, rho) - first).abs() <= 2.0 * lambda * first);
        }
    }

    #[test]
    fn newton_linearization_and_agreement() {
        let (basis, f) = setup(3, 0.5, 16);
        let solver = Solver::new(&basis, &f, SolverOptions::default());
        let p0 = solver.newton_solve(0.0, (&basis.zero(), 1.0)).unwrap();
        assert_eq!((p0.t, p0.lambda), (0.0, 0.0));
        let t = 1e-4;
        let (g, l) = solver.linearized_guess(t);
        let p = solver.newton_solve(t, (&g, l)).unwrap();
        assert_relative_eq!(p.lambda, l, max_relative = 1e-3);
        assert!(p.residual <= 1e-10);
        assert_relative_eq!(basis.eval_origin(&p.u), t, max_relative = 1e-9);
        let t = 0.5;
        let (g, l) = solver.linearized_guess(t);
        let p = solver.newton_solve(t, (&g, l)).unwrap();
        let MonotoneOutcome::Converged { u, .. } = solver.monotone_iterate(p.lambda).unwrap() else {
            panic!("below the fold the iteration converges")
        };
        assert!(u.combine(1.0, &p.u, -1.0).unwrap().norm_l2() < 1e-7);
        assert!(solver.phi1_identity_defect(&p) < 1e-8);
    }

    #[test]
    fn branch_folds_and_brackets_agree() {
        let (basis, f) = setup(3, 0.5, 24);
        let solver = Solver::new(&basis, &f, SolverOptions::default());
        let est = solver.estimate_lambda_star(&TraceOptions::default()).unwrap();
        let branch = &est.branch;
        assert!(branch.fold_index.is_some());
        assert!(branch.invariant_violations(1e-8).is_empty(), "{:?}", branch.invariant_violations(1e-8));
        let fold = branch.fold.as_ref().unwrap();
        assert!(fold.nu1.abs() < 1e-4, "ν₁ at fold = {}", fold.nu1);
        assert!(est.consistent(1e-3), "{} not in [{}, {}]", est.fold_lambda, est.lo, est.hi);
        assert!(!solver.monotone_iterate(2.0 * est.fold_lambda).unwrap().converged());
        assert!(solver.monotone_iterate(0.99 * est.lo).unwrap().converged());
    }

    #[test]
    fn continue_branch_on_grid() {
        let (basis, f) = setup(3, 0.5, 16);
        let solver = Solver::new(&basis, &f, SolverOptions::default());
        let single = solver.continue_branch(&[0.0]).unwrap();
        assert_eq!(single.points.len(), 1);
        let grid: Vec<f64> = (0..=20).map(|i| i as f64 * 0.05).collect();
        let b = solver.continue_branch(&grid).unwrap();
        assert_eq!(b.points.len(), 21);
        for w in b.points.windows(2) {
            for rho in [0.0, 0.3, 0.7, 0.95] {
                assert!(basis.eval(&w[1].u, rho) >= basis.eval(&w[0].u, rho) - 1e-8);
            }
        }
        assert!(solver.continue_branch(&[0.0, 0.2, 0.1]).is_err());
    }

    #[test]
    fn radial_slope_of_first_mode_is_negative() {
        let (basis, _) = setup(3, 0.5, 8);
        assert!(max_radial_slope(&basis, &basis.mode(0), 100) < 0.0);
        assert!(extremal_solution(&Branch::default()).is_err());
    }
}
