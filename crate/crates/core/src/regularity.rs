//! Exponents and constants from the regularity theory of extremal solutions, with the
//! numerical checks that go with them: decay fits near the origin and the boundary,
//! weighted reaction integrals, the constant `A_{n,s,β}` and the Riesz pointwise bound.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::extension::{linear_fit, poisson_constant, riesz_kernel_constant, riesz_potential_fn, RadialTable};
use crate::nonlinearity::Nonlinearity;
use crate::quad::{self, GaussLegendre};
use crate::specfun;
use crate::spectral::{BallBasis, RadialCoeffs};

/// `2(s + 2 + √(2(s+1)))`: below this dimension the extremal solution is bounded.
pub fn critical_dimension(s: f64) -> f64 {
    2.0 * (s + 2.0 + (2.0 * (s + 1.0)).sqrt())
}

/// `n/2 - 1 - √(n-1) - s`, the admissible decay exponents of a singular extremal
/// solution lie below it.
pub fn decay_exponent_bound(n: usize, s: f64) -> f64 {
    let nf = n as f64;
    nf / 2.0 - 1.0 - (nf - 1.0).sqrt() - s
}

/// Least-squares power law `u ≈ C ρ^{-μ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerFit {
    pub mu: f64,
    pub c: f64,
    pub r2: f64,
}

/// Fits `log u` against `log x` at `samples` log-spaced points of `[lo, hi]`; the slope is
/// returned with the sign flipped, so `mu` is a decay exponent when `x` is a radius.
pub fn fit_power_law<F: Fn(f64) -> f64>(u: F, lo: f64, hi: f64, samples: usize) -> Result<PowerFit> {
    if !(lo > 0.0 && hi > lo) || samples < 2 {
        return Err(domain(format!("fit needs 0 < lo < hi and two samples, got [{lo}, {hi}]")));
    }
    let mut xs = Vec::with_capacity(samples);
    let mut ys = Vec::with_capacity(samples);
    for i in 0..samples {
        let x = lo * (hi / lo).powf(i as f64 / (samples - 1) as f64);
        let v = u(x);
        if !(v > 0.0) {
            return Err(domain(format!("power-law fit needs positive samples, got {v} at {x}")));
        }
        xs.push(x.ln());
        ys.push(v.ln());
    }
    let (slope, intercept) = linear_fit(&xs, &ys);
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(PowerFit { mu: -slope, c: intercept.exp(), r2 })
}

/// Decay fit of `u` over `ρ ∈ [lo, hi]`.
pub fn fit_decay_exponent(basis: &BallBasis, u: &RadialCoeffs, lo: f64, hi: f64) -> Result<PowerFit> {
    fit_power_law(|r| basis.eval(u, r), lo, hi, 64)
}

/// Smallest `C` with `u(ρ) ≤ C ρ^{-μ}` at 200 log-spaced radii of `[lo, hi]`.
pub fn decay_envelope<F: Fn(f64) -> f64>(u: F, mu: f64, lo: f64, hi: f64) -> f64 {
    (0..200)
        .map(|i| {
            let r = lo * (hi / lo).powf(i as f64 / 199.0);
            u(r) * r.powf(mu)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Exponent `γ` in `u(ρ) ≈ C (1-ρ)^γ`, fitted on `ρ ∈ [0.99, 0.9999]`.
pub fn boundary_rate_fn<F: Fn(f64) -> f64>(u: F) -> Result<f64> {
    Ok(-fit_power_law(|d| u(1.0 - d), 1e-4, 1e-2, 41)?.mu)
}

pub fn boundary_decay_rate(basis: &BallBasis, u: &RadialCoeffs) -> Result<f64> {
    boundary_rate_fn(|r| basis.eval(u, r))
}

/// `A_{n,s,β}` with the quadrature error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AConstant {
    pub value: f64,
    pub error: f64,
}

impl AConstant {
    pub fn relative_error(&self) -> f64 {
        self.error / self.value.abs()
    }
}

/// `A_{n,s,β} = ∫_{R^n×(0,∞)} y^{3-2s} (|x|²+y²)^{-(β+2)/2} (y²+|x-e|²)^{-(n+2-2s)/2} dx dy`.
///
/// Polar coordinates about the origin of `R^{n+1}`: `y = r cos ψ`, `x = r sin ψ ω` with
/// `θ` the angle between `ω` and `e`. The radial integral
/// `R(c) = ∫_0^∞ r^{n+1-2s-β} (r² - 2rc + 1)^{-(n+2-2s)/2} dr`, `c = sin ψ cos θ`,
/// is split at `r = 1` and mapped to `[0, 1]` so that both endpoint powers become flat;
/// what is left is a two-dimensional adaptive integral over `(ψ, θ)`.
pub fn a_constant(n: usize, s: f64, beta: f64) -> Result<AConstant> {
    a_constant_tol(n, s, beta, 1e-5)
}

pub fn a_constant_tol(n: usize, s: f64, beta: f64, rel_tol: f64) -> Result<AConstant> {
    let nf = n as f64;
    check_beta(n, s, beta)?;
    let p = (nf + 2.0 - 2.0 * s) / 2.0;
    let m = nf + 1.0 - 2.0 * s - beta;
    let radial = |c: f64| -> Result<f64> {
        let q = |r: f64| (r * r - 2.0 * r * c + 1.0).powf(-p);
        let inner = quad::adaptive(|w| q(w.powf(1.0 / (m + 1.0))), 0.0, 1.0, 0.0, 1e-10, 400)?;
        let outer = quad::adaptive(|w| q(w.powf(1.0 / beta)), 0.0, 1.0, 0.0, 1e-10, 400)?;
        Ok(inner.value / (m + 1.0) + outer.value / beta)
    };
    let theta_part = |psi: f64| -> Result<f64> {
        let (sp, cp) = psi.sin_cos();
        let mut failure = None;
        let est = quad::adaptive(
            |theta| {
                let r = radial(sp * theta.cos()).unwrap_or_else(|e| {
                    failure.get_or_insert(e);
                    0.0
                });
                theta.sin().powf(nf - 2.0) * r
            },
            0.0,
            PI,
            0.0,
            0.1 * rel_tol,
            2000,
        )?;
        if let Some(e) = failure {
            return Err(e);
        }
        Ok(cp.powf(3.0 - 2.0 * s) * sp.powf(nf - 1.0) * est.value)
    };
    let mut failure = None;
    let est = quad::adaptive(
        |psi| {
            theta_part(psi).unwrap_or_else(|e| {
                failure.get_or_insert(e);
                0.0
            })
        },
        0.0,
        PI / 2.0,
        0.0,
        rel_tol,
        2000,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    let area = specfun::sphere_area(nf - 1.0);
    Ok(AConstant { value: area * est.value, error: area * est.error })
}

fn check_beta(n: usize, s: f64, beta: f64) -> Result<()> {
    if n < 2 || !(s > 0.0 && s < 1.0) {
        return Err(domain(format!("need n >= 2 and 0 < s < 1, got n = {n}, s = {s}")));
    }
    if !(beta > 0.0 && beta < n as f64) {
        return Err(domain(format!("β must lie in (0, n) = (0, {n}), got {beta}")));
    }
    Ok(())
}

/// Closed form of `A_{n,s,β}`, derived by integrating `r`, `θ` and `ψ` in turn:
/// `|S^{n-2}| · ½B((n-1)/2, 2-s) · √π Γ(p+½)/Γ(p+1) · (1/(n+2-2s-β) + 1/β)`,
/// `p = (n+2-2s)/2`. Used as an oracle for [`a_constant`].
pub fn a_constant_closed(n: usize, s: f64, beta: f64) -> Result<f64> {
    check_beta(n, s, beta)?;
    let nf = n as f64;
    let p = (nf + 2.0 - 2.0 * s) / 2.0;
    let b = specfun::gamma((nf - 1.0) / 2.0)? * specfun::gamma(2.0 - s)? / specfun::gamma((nf - 1.0) / 2.0 + 2.0 - s)?;
    let angular = PI.sqrt() * specfun::gamma(p + 0.5)? / specfun::gamma(p + 1.0)?;
    Ok(specfun::sphere_area(nf - 1.0) * 0.5 * b * angular * (1.0 / (nf + 2.0 - 2.0 * s - beta) + 1.0 / beta))
}

/// Margin `1 - β C_{n,s} A_{n,s,β}` from the quadrature value of `A`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LemmaAMargin {
    pub n: usize,
    pub s: f64,
    pub beta: f64,
    pub a: AConstant,
    pub margin: f64,
}

pub fn lemma_a_margin(n: usize, s: f64, beta: f64) -> Result<LemmaAMargin> {
    let a = a_constant(n, s, beta)?;
    let margin = 1.0 - beta * poisson_constant(n, s)? * a.value;
    Ok(LemmaAMargin { n, s, beta, a, margin })
}

/// The β-grid `{0.5, n/2, 0.9n}`.
pub fn lemma_a_betas(n: usize) -> [f64; 3] {
    let nf = n as f64;
    [0.5, nf / 2.0, 0.9 * nf]
}

/// Margins over `ns × ss × {0.5, n/2, 0.9n}`, evaluated in parallel, in grid order.
pub fn lemma_a_grid(ns: &[usize], ss: &[f64]) -> Vec<Result<LemmaAMargin>> {
    let cases: Vec<(usize, f64, f64)> = ns
        .iter()
        .flat_map(|&n| ss.iter().flat_map(move |&s| lemma_a_betas(n).into_iter().map(move |b| (n, s, b))))
        .collect();
    cases.into_par_iter().map(|(n, s, b)| lemma_a_margin(n, s, b)).collect()
}

/// `∫_{B_1} f(u) |x|^{-β} dx`, with `r = w^{1/(n-β)}` flattening the weight.
pub fn weighted_f_integral(basis: &BallBasis, u: &RadialCoeffs, f: &Nonlinearity, beta: f64) -> Result<f64> {
    let table = RadialTable::from_coeffs(basis, u, 4097);
    weighted_f_integral_fn(basis.dim(), |r| f.eval(table.eval(r)), beta)
}

/// [`weighted_f_integral`] for `h = f(u)` given directly as a function of the radius.
pub fn weighted_f_integral_fn<H: Fn(f64) -> f64>(n: usize, h: H, beta: f64) -> Result<f64> {
    let nf = n as f64;
    if !(beta < nf) {
        return Err(Error::Divergent(format!("∫ |x|^{{-β}} dx over B_1 needs β < n = {n}, got {beta}")));
    }
    let e = nf - beta;
    let gl = GaussLegendre::<f64>::new(32);
    let sum: f64 = (0..16).map(|i| gl.integrate(i as f64 / 16.0, (i + 1) as f64 / 16.0, |w| h(w.powf(1.0 / e)))).sum();
    Ok(specfun::sphere_area(nf) * sum / e)
}

/// Worst relative excess of `c ρ^{n-β} f(u(2ρ))` over `∫_{B_1} f(u) |x|^{-β} dx` for
/// `ρ ∈ (0, 1/2]`, where `c ρ^{n-β}` is the mass of `|x|^{-β}` on `B_{2ρ} \ B_ρ`.
///
/// `u` is radially nonincreasing, so `f(u) ≥ f(u(2ρ))` on that annulus. Returns 0 when
/// the bound holds everywhere.
pub fn step2_pointwise_bound(basis: &BallBasis, u: &RadialCoeffs, f: &Nonlinearity, beta: f64) -> Result<f64> {
    let total = weighted_f_integral(basis, u, f, beta)?;
    let n = basis.dim() as f64;
    let c = annulus_constant(basis.dim(), beta);
    let worst = (1..=200)
        .map(|i| {
            let rho = 0.5 * i as f64 / 200.0;
            c * rho.powf(n - beta) * f.eval(basis.eval(u, 2.0 * rho))
        })
        .fold(0.0, f64::max);
    Ok(((worst - total) / total).max(0.0))
}

/// `|S^{n-1}| (2^{n-β} - 1)/(n-β)`, so that `∫_{B_{2ρ}\B_ρ} |x|^{-β} = c ρ^{n-β}`.
pub fn annulus_constant(n: usize, beta: f64) -> f64 {
    let e = n as f64 - beta;
    specfun::sphere_area(n as f64) * (2f64.powf(e) - 1.0) / e
}

/// Outcome of the Riesz pointwise check `u(x) ≤ κ λ ∫ f(u(x̃)) |x - x̃|^{2s-n} dx̃`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RieszCheck {
    pub radii: Vec<f64>,
    /// `u(x) / (κ λ I(x))` per radius.
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    pub pass: bool,
}

/// Checks the Riesz bound at `points` radii `i/(points+1)` with slack `1 + slack`.
pub fn riesz_check(
    basis: &BallBasis,
    u: &RadialCoeffs,
    lambda: f64,
    f: &Nonlinearity,
    points: usize,
    slack: f64,
) -> Result<RieszCheck> {
    let table = RadialTable::from_coeffs(basis, u, 4097);
    riesz_check_fn(basis, u, |r| lambda * f.eval(table.eval(r)), points, slack)
}

/// [`riesz_check`] for `(-Δ)^s u = h` with `h` given as a function of the radius.
pub fn riesz_check_fn<H: Fn(f64) -> f64 + Sync>(
    basis: &BallBasis,
    u: &RadialCoeffs,
    h: H,
    points: usize,
    slack: f64,
) -> Result<RieszCheck> {
    let kappa = riesz_kernel_constant(basis.dim(), basis.order())?;
    let radii: Vec<f64> = (1..=points).map(|i| i as f64 / (points + 1) as f64).collect();
    let ratios = radii
        .par_iter()
        .map(|&r| {
            let pot = riesz_potential_fn(basis.dim(), basis.order(), &h, r)?;
            Ok(basis.eval(u, r) / (kappa * pot))
        })
        .collect::<Result<Vec<f64>>>()?;
    let max_ratio = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(RieszCheck { radii, ratios, max_ratio, pass: max_ratio <= 1.0 + slack })
}

/// Summary of the regularity diagnostics for one solution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityReport {
    pub n: usize,
    pub s: f64,
    pub critical_dim: f64,
    pub decay_bound: f64,
    pub fitted_interior_decay: Option<PowerFit>,
    pub fitted_boundary_rate: f64,
    pub lemma_a_margins: BTreeMap<String, f64>,
    pub weighted_f_values: BTreeMap<String, f64>,
    pub riesz_check: Option<RieszCheck>,
}

impl RegularityReport {
    /// Diagnostics for the solution `u` of `(-Δ)^s u = λ f(u)`; the Riesz check costs
    /// one adaptive double integral per radius and is skipped when `riesz_points` is 0.
    pub fn build(
        basis: &BallBasis,
        u: &RadialCoeffs,
        lambda: f64,
        f: &Nonlinearity,
        riesz_points: usize,
    ) -> Result<Self> {
        let (n, s) = (basis.dim(), basis.order());
        let interior = if n as f64 >= critical_dimension(s) { (1e-3, 0.3) } else { (1e-3, 0.1) };
        let fitted_interior_decay = fit_decay_exponent(basis, u, interior.0, interior.1).ok();
        let mut lemma_a_margins = BTreeMap::new();
        let mut weighted_f_values = BTreeMap::new();
        if s < 1.0 {
            for beta in lemma_a_betas(n) {
                lemma_a_margins.insert(format!("{beta}"), lemma_a_margin(n, s, beta)?.margin);
            }
        }
        for beta in [0.0, (n as f64 - 2.0 * s - 0.1).max(0.0)] {
            weighted_f_values.insert(format!("{beta}"), weighted_f_integral(basis, u, f, beta)?);
        }
        let riesz_check =
            if riesz_points > 0 && s < 1.0 { Some(riesz_check(basis, u, lambda, f, riesz_points, 1e-3)?) } else { None };
        Ok(Self {
            n,
            s,
            critical_dim: critical_dimension(s),
            decay_bound: decay_exponent_bound(n, s),
            fitted_interior_decay,
            fitted_boundary_rate: boundary_decay_rate(basis, u)?,
            lemma_a_margins,
            weighted_f_values,
            riesz_check,
        })
    }
}
