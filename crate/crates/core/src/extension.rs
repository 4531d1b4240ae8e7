//! Canonical extension `v(ρ,y) = Σ b_k φ_k(ρ) g_k(y)` of a radial function to the
//! half-cylinder `B_1 × (0,∞)`, its flux and energy, the half-space Poisson and Riesz
//! kernels, and the weighted integrals built on `v_ρ`.
//!
//! Every profile is a rescaling of one function, `g_k(y) = h(√μ_k y)` with
//! `h(t) = 2^{1-s}/Γ(s) · t^s K_s(t)`, so that `h(0) = 1` and `h(∞) = 0`.

use nalgebra::DMatrix;

use crate::error::{domain, Error, Result};
use crate::quad::{self, GaussLegendre, Rule};
use crate::spectral::{BallBasis, RadialCoeffs};
use crate::specfun;

/// Beyond this argument `t^s K_s(t)` underflows.
const PROFILE_CUTOFF: f64 = 700.0;

/// The universal profile `h(t) = 2^{1-s}/Γ(s) · t^s K_s(t)` and its derivative.
#[derive(Debug, Clone, Copy)]
pub struct Profile {
    s: f64,
    pref: f64,
}

impl Profile {
    pub fn new(s: f64) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return Err(domain(format!("extension needs s in (0,1), got {s}")));
        }
        Ok(Self { s, pref: 2f64.powf(1.0 - s) / specfun::gamma(s)? })
    }

    pub fn order(&self) -> f64 {
        self.s
    }

    pub fn value(&self, t: f64) -> f64 {
        if t <= 0.0 {
            1.0
        } else if t > PROFILE_CUTOFF {
            0.0
        } else if self.s == 0.5 {
            (-t).exp()
        } else {
            self.pref * t.powf(self.s) * specfun::bessel_k_raw(self.s, t)
        }
    }

    /// `h'(t) = -2^{1-s}/Γ(s) · t^s K_{1-s}(t)`.
    pub fn slope(&self, t: f64) -> f64 {
        if t > PROFILE_CUTOFF {
            0.0
        } else if self.s == 0.5 {
            -(-t).exp()
        } else {
            -self.pref * t.powf(self.s) * specfun::bessel_k_raw(1.0 - self.s, t)
        }
    }

    /// `y^{1-2s}`-weighted slope `-t^{1-2s} h'(t)`, finite at `t = 0`.
    pub fn flux_density(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return flux_constant(self.s).unwrap_or(f64::NAN);
        }
        -t.powf(1.0 - 2.0 * self.s) * self.slope(t)
    }
}

/// `g_k(y)` for the 0-based mode `k`.
pub fn profile(basis: &BallBasis, k: usize, y: f64) -> Result<f64> {
    if y < 0.0 {
        return Err(domain(format!("profile needs y >= 0, got {y}")));
    }
    Ok(Profile::new(basis.order())?.value(basis.frequencies()[k] * y))
}

/// Flux constant `c_s = 2^{1-2s} Γ(1-s)/Γ(s)`, the limit of `-y^{1-2s} g_k'(y)/μ_k^s`.
///
/// The paper writes it as `c_{n,s}`; it does not depend on the dimension.
pub fn flux_constant(s: f64) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) {
        return Err(domain(format!("flux constant needs s in (0,1), got {s}")));
    }
    Ok(2f64.powf(1.0 - 2.0 * s) * specfun::gamma(1.0 - s)? / specfun::gamma(s)?)
}

/// Extrapolated flux limit with the size of the last Richardson correction.
#[derive(Debug, Clone, Copy)]
pub struct FluxEstimate {
    pub value: f64,
    pub error: f64,
}

/// Estimates `lim_{y→0} -y^{1-2s} g'(y)/μ^s` for the profile with eigenvalue `mu`
/// without using the closed form.
///
/// Works with the one-sided difference `D(y) = 2s (g(0) - g(y)) / (μ^s y^{2s})`, whose
/// expansion in `y` has exponents `2-2s, 2, 4-2s, 4, ...`; those are removed by
/// Richardson extrapolation on a halving sequence of `y`.
pub fn flux_limit(s: f64, mu: f64) -> Result<FluxEstimate> {
    let profile = Profile::new(s)?;
    if !(mu > 0.0) {
        return Err(domain("eigenvalue must be positive"));
    }
    let levels = 7;
    let y0 = 0.25 / mu.sqrt();
    let mut exps = Vec::new();
    for m in 1..=levels {
        exps.push(2.0 * m as f64 - 2.0 * s);
        exps.push(2.0 * m as f64);
    }
    exps.sort_by(f64::total_cmp);
    exps.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let mut table: Vec<Vec<f64>> = Vec::with_capacity(levels);
    for i in 0..levels {
        let y = y0 / 2f64.powi(i as i32);
        let d = 2.0 * s * (1.0 - profile.value(mu.sqrt() * y)) / (mu.powf(s) * y.powf(2.0 * s));
        let mut row = vec![d];
        for j in 1..=i {
            let f = 2f64.powf(exps[j - 1]);
            let r = (f * row[j - 1] - table[i - 1][j - 1]) / (f - 1.0);
            row.push(r);
        }
        table.push(row);
    }
    let last = &table[levels - 1];
    let value = last[levels - 1];
    let error = (value - last[levels - 2]).abs();
    if !value.is_finite() || error > 1e-6 * value.abs() {
        return Err(Error::NoConvergence {
            what: "flux extrapolation",
            detail: format!("value {value:e}, last correction {error:e}"),
        });
    }
    Ok(FluxEstimate { value, error })
}

/// Vertical quadrature settings for the `y`-integrals.
#[derive(Debug, Clone, Copy)]
pub struct VerticalQuad {
    /// Gauss–Legendre points per panel.
    pub points: usize,
    /// Geometric growth of panel widths.
    pub ratio: f64,
    /// First panel ends at `inner / √μ_K`.
    pub inner: f64,
    /// Truncation `Y = depth / √μ_1`.
    pub depth: f64,
}

impl Default for VerticalQuad {
    fn default() -> Self {
        Self { points: 16, ratio: 2.0, inner: 1e-4, depth: 20.0 }
    }
}

/// Cutoff data for the test function `η = ρ^{1-α} ζ_ε(ρ) ψ_R(y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffSpec {
    pub alpha: f64,
    pub epsilon: f64,
    pub r: f64,
}

impl CutoffSpec {
    /// Largest weight exponent `α` allowed in the key estimate: `1 + √(n-1)`.
    pub fn alpha_limit(n: usize) -> f64 {
        1.0 + ((n - 1) as f64).sqrt()
    }

    /// `ζ_ε` and its derivative: 0 below `ε`, rising on `[ε,2ε]`, 1 up to `1/2`,
    /// falling to 0 on `[1/2,3/4]`.
    pub fn zeta(&self, rho: f64) -> (f64, f64) {
        let e = self.epsilon;
        let (up, dup) = smoothstep((rho - e) / e);
        let (down, ddown) = smoothstep((0.75 - rho) / 0.25);
        (up * down, dup / e * down - up * ddown / 0.25)
    }

    /// `ψ_R` and its derivative: 1 up to `R`, falling to 0 on `[R, R+1]`.
    pub fn psi(&self, y: f64) -> (f64, f64) {
        let (v, d) = smoothstep(self.r + 1.0 - y);
        (v, -d)
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.r > 0.0 && self.alpha.is_finite()) {
            return Err(domain(format!("invalid cutoff {self:?}")));
        }
        Ok(())
    }
}

/// `3x² - 2x³` clamped to `[0,1]`, with its derivative.
fn smoothstep(x: f64) -> (f64, f64) {
    if x <= 0.0 {
        (0.0, 0.0)
    } else if x >= 1.0 {
        (1.0, 0.0)
    } else {
        (x * x * (3.0 - 2.0 * x), 6.0 * x * (1.0 - x))
    }
}

/// The canonical extension of a radial trace `u`.
#[derive(Debug, Clone)]
pub struct ExtensionField<'a> {
    basis: &'a BallBasis,
    u: RadialCoeffs,
    profile: Profile,
    flux_const: f64,
}

impl<'a> ExtensionField<'a> {
    pub fn new(basis: &'a BallBasis, u: RadialCoeffs) -> Result<Self> {
        if u.basis_id() != basis.id() {
            return Err(Error::BasisMismatch);
        }
        let profile = Profile::new(basis.order())?;
        let flux_const = flux_constant(basis.order())?;
        Ok(Self { basis, u, profile, flux_const })
    }

    pub fn basis(&self) -> &BallBasis {
        self.basis
    }

    pub fn trace(&self) -> &RadialCoeffs {
        &self.u
    }

    pub fn flux_const(&self) -> f64 {
        self.flux_const
    }

    /// `g_k(y)` for the 0-based mode `k`.
    pub fn g(&self, k: usize, y: f64) -> f64 {
        self.profile.value(self.basis.frequencies()[k] * y)
    }

    /// `g_k'(y)`.
    pub fn dg(&self, k: usize, y: f64) -> f64 {
        let j = self.basis.frequencies()[k];
        j * self.profile.slope(j * y)
    }

    /// `v(ρ, y)`.
    pub fn eval(&self, rho: f64, y: f64) -> f64 {
        self.u
            .c
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(k, c)| c * self.basis.phi(k, rho) * self.g(k, y))
            .sum()
    }

    /// `∂_ρ v(ρ, y)`.
    pub fn eval_rho(&self, rho: f64, y: f64) -> f64 {
        self.u
            .c
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(k, c)| c * self.basis.dphi(k, rho) * self.g(k, y))
            .sum()
    }

    /// Indices of the modes with a nonzero coefficient.
    fn active(&self) -> Vec<usize> {
        self.u.c.iter().enumerate().filter(|(_, c)| **c != 0.0).map(|(k, _)| k).collect()
    }

    fn y_inner(&self, q: &VerticalQuad) -> f64 {
        q.inner / self.basis.frequencies()[self.basis.modes() - 1]
    }

    fn y_depth(&self, q: &VerticalQuad) -> f64 {
        q.depth / self.basis.frequencies()[0]
    }

    /// Values `M[(m, k)] = b_k · p(j_k y_m)` over the active modes.
    fn vertical_matrix<F: Fn(f64) -> f64>(&self, ys: &[f64], active: &[usize], p: F) -> DMatrix<f64> {
        let freq = self.basis.frequencies();
        DMatrix::from_fn(ys.len(), active.len(), |m, i| {
            let k = active[i];
            self.u.c[k] * p(freq[k] * ys[m])
        })
    }

    /// `∫_C y^{1-2s} |∇v|² dx dy` by tensor quadrature: the basis radial rule times graded
    /// vertical rules whose first panel absorbs the algebraic weight.
    pub fn energy(&self, q: &VerticalQuad) -> Result<f64> {
        let active = self.active();
        if active.is_empty() {
            return Ok(0.0);
        }
        let s = self.profile.order();
        let (inner, depth) = (self.y_inner(q), self.y_depth(q));
        // g·g carries y^{1-2s}; g'·g' behaves like y^{4s-2}, so the combined weight is y^{2s-1}.
        let rule_g = quad::graded_rule(1.0 - 2.0 * s, inner, depth, q.points, q.ratio);
        let rule_d = quad::graded_rule(2.0 * s - 1.0, inner, depth, q.points, q.ratio);
        let radial = self.basis.quadrature();
        let freq = self.basis.frequencies();
        let dphi = DMatrix::from_fn(radial.nodes.len(), active.len(), |i, a| self.basis.dphi(active[a], radial.nodes[i]));
        let phi = DMatrix::from_fn(radial.nodes.len(), active.len(), |i, a| {
            self.basis.phi_at_nodes()[(i, active[a])]
        });
        let g = self.vertical_matrix(&rule_g.nodes, &active, |t| self.profile.value(t));
        let profile = self.profile;
        let dg = DMatrix::from_fn(rule_d.nodes.len(), active.len(), |m, a| {
            let k = active[a];
            let y = rule_d.nodes[m];
            let t = freq[k] * y;
            // y^{1-2s} g_k'(y); squared it turns the y^{2s-1} rule weight into y^{1-2s}
            self.u.c[k] * freq[k] * profile.slope(t) * y.powf(1.0 - 2.0 * s)
        });
        let v_rho = &dphi * g.transpose();
        let v_y = &phi * dg.transpose();
        let mut total = 0.0;
        for (i, &w) in radial.weights.iter().enumerate() {
            let a: f64 = rule_g.weights.iter().enumerate().map(|(m, wy)| wy * v_rho[(i, m)].powi(2)).sum();
            let b: f64 = rule_d.weights.iter().enumerate().map(|(m, wy)| wy * v_y[(i, m)].powi(2)).sum();
            total += w * (a + b);
        }
        if !total.is_finite() {
            return Err(Error::NoConvergence { what: "extension energy", detail: format!("value {total}") });
        }
        Ok(total)
    }

    /// Fitted exponential rate `γ` in `|v(0,y)| ≈ C e^{-γ y}` on `[y_lo, y_hi]`
    /// (least squares on 41 equispaced samples of `log|v|`).
    pub fn axis_decay_rate(&self, y_lo: f64, y_hi: f64) -> Result<f64> {
        let ys: Vec<f64> = (0..=40).map(|i| y_lo + (y_hi - y_lo) * i as f64 / 40.0).collect();
        let mut logs = Vec::with_capacity(ys.len());
        for &y in &ys {
            let v = self.eval(0.0, y).abs();
            if !(v > 0.0) {
                return Err(domain(format!("extension vanishes at y = {y}")));
            }
            logs.push(v.ln());
        }
        let (slope, _) = linear_fit(&ys, &logs);
        Ok(-slope)
    }

    /// `∫_{ρ≤1/2} y^{1-2s} v_ρ² ρ^{-2α} dx dy` over the whole half-cylinder.
    ///
    /// `v_ρ = O(ρ)` at the axis, so the radial integrand is `ρ^{n+1-2α}` times a smooth
    /// function; the graded radial rule absorbs that power. The integral diverges when
    /// `n + 2 - 2α ≤ 0`; otherwise it is computed at two resolutions and must agree.
    pub fn weighted_vrho_integral(&self, spec: &CutoffSpec, q: &VerticalQuad) -> Result<f64> {
        let active = self.active();
        if active.is_empty() {
            return Ok(0.0);
        }
        let n = self.basis.dim() as f64;
        let a = n + 1.0 - 2.0 * spec.alpha;
        if a <= -1.0 {
            return Err(Error::Divergent(format!(
                "ρ-weight exponent {} is not integrable at the axis (α = {})",
                a - 2.0,
                spec.alpha
            )));
        }
        let coarse = self.vrho_integral_at(&active, a, 20, q)?;
        let fine = self.vrho_integral_at(&active, a, 28, q)?;
        if !fine.is_finite() || (fine - coarse).abs() > 1e-6 * fine.abs().max(1e-300) {
            return Err(Error::Divergent(format!(
                "weighted v_ρ integral did not stabilize: {coarse:e} vs {fine:e}"
            )));
        }
        Ok(fine)
    }

    fn vrho_integral_at(&self, active: &[usize], a: f64, points: usize, q: &VerticalQuad) -> Result<f64> {
        let s = self.profile.order();
        let jmax = self.basis.frequencies()[self.basis.modes() - 1];
        let radial = quad::graded_rule_capped(a, 1e-3, 0.5, points, 2.0, 2.0 / jmax);
        let area = self.basis.sphere_area();
        let q_rho = DMatrix::from_fn(radial.nodes.len(), active.len(), |i, k| {
            self.basis.dphi_over_rho(active[k], radial.nodes[i])
        });
        let vertical = quad::graded_rule(1.0 - 2.0 * s, self.y_inner(q), self.y_depth(q), q.points, q.ratio);
        let g = self.vertical_matrix(&vertical.nodes, active, |t| self.profile.value(t));
        let v = &q_rho * g.transpose();
        Ok(area * tensor_sum(&radial, &vertical, |i, m| v[(i, m)].powi(2)))
    }

    /// Both sides of the stability consequence
    /// `∫ y^{1-2s} v_ρ² |∇η|² ≥ (n-1) ∫ y^{1-2s} v_ρ² η²/ρ²` for `η = ρ^{1-α} ζ_ε ψ_R`.
    pub fn stability_weighted_inequality(&self, spec: &CutoffSpec, q: &VerticalQuad) -> Result<(f64, f64)> {
        spec.validate()?;
        let active = self.active();
        if active.is_empty() || spec.epsilon >= 0.75 {
            return Ok((0.0, 0.0));
        }
        let s = self.profile.order();
        let n = self.basis.dim();
        let jmax = self.basis.frequencies()[self.basis.modes() - 1];
        let width = 2.0 / jmax;
        let e = spec.epsilon;
        let mut edges = quad::geometric_edges(e, 2.0 * e, 2.0, width);
        if 2.0 * e < 0.5 {
            edges.extend(quad::geometric_edges(2.0 * e, 0.5, 2.0, width).into_iter().skip(1));
            edges.extend(quad::geometric_edges(0.5, 0.75, 2.0, width).into_iter().skip(1));
        } else {
            edges = quad::geometric_edges(e, 0.75, 2.0, width);
        }
        let radial = quad::panel_rule(&edges, 16);
        let area = self.basis.sphere_area();
        let alpha = spec.alpha;
        // ρ-factors, each already multiplied by |S^{n-1}| ρ^{n-1}.
        let mut w_grad = Vec::with_capacity(radial.len());
        let mut w_cut = Vec::with_capacity(radial.len());
        let mut w_hardy = Vec::with_capacity(radial.len());
        for &r in &radial.nodes {
            let (z, dz) = spec.zeta(r);
            let jac = area * r.powi(n as i32 - 1);
            let d_eta = (1.0 - alpha) * r.powf(-alpha) * z + r.powf(1.0 - alpha) * dz;
            w_grad.push(jac * d_eta * d_eta);
            w_cut.push(jac * r.powf(2.0 - 2.0 * alpha) * z * z);
            w_hardy.push(jac * (n as f64 - 1.0) * r.powf(-2.0 * alpha) * z * z);
        }
        let dphi = DMatrix::from_fn(radial.len(), active.len(), |i, k| self.basis.dphi(active[k], radial.nodes[i]));
        let inner = self.y_inner(q).min(spec.r / 2.0);
        let mut vertical = quad::graded_rule(1.0 - 2.0 * s, inner, spec.r, q.points, q.ratio);
        let top = GaussLegendre::<f64>::new(q.points);
        let (ys, ws) = top.mapped(spec.r, spec.r + 1.0);
        vertical.extend(&Rule { nodes: ys, weights: ws }, |y| y.powf(1.0 - 2.0 * s));
        let g = self.vertical_matrix(&vertical.nodes, &active, |t| self.profile.value(t));
        let v = &dphi * g.transpose();
        let psi: Vec<(f64, f64)> = vertical.nodes.iter().map(|&y| spec.psi(y)).collect();
        let lhs = tensor_sum(&radial, &vertical, |i, m| {
            let (p, dp) = psi[m];
            v[(i, m)].powi(2) * (w_grad[i] * p * p + w_cut[i] * dp * dp)
        });
        let rhs = tensor_sum(&radial, &vertical, |i, m| v[(i, m)].powi(2) * w_hardy[i] * psi[m].0.powi(2));
        Ok((lhs, rhs))
    }
}

/// `Σ_i Σ_m wρ_i wy_m F(i, m)`.
fn tensor_sum<F: Fn(usize, usize) -> f64>(radial: &Rule, vertical: &Rule, f: F) -> f64 {
    radial
        .weights
        .iter()
        .enumerate()
        .map(|(i, wr)| wr * vertical.weights.iter().enumerate().map(|(m, wy)| wy * f(i, m)).sum::<f64>())
        .sum()
}

/// Least-squares line `y ≈ slope·x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Half-space Poisson constant `C_{n,s} = Γ((n+2-2s)/2) / (π^{n/2} Γ(1-s))`, the
/// normalization of `y (|x|² + y²)^{-(n+2-2s)/2}`.
pub fn poisson_constant(n: usize, s: f64) -> Result<f64> {
    check_ns(n, s)?;
    let nf = n as f64;
    Ok(specfun::gamma((nf + 2.0 - 2.0 * s) / 2.0)? / (std::f64::consts::PI.powf(nf / 2.0) * specfun::gamma(1.0 - s)?))
}

/// `∫_{R^n} (1+|z|²)^{-(n+2-2s)/2} dz` by quadrature, independent of the closed form.
///
/// With `|z| = cot φ` the integral becomes `|S^{n-1}| ∫_0^{π/2} sin^{1-2s}φ cos^{n-1}φ dφ`.
pub fn poisson_normalization_integral(n: usize, s: f64) -> Result<f64> {
    check_ns(n, s)?;
    let a = 1.0 - 2.0 * s;
    let rule = quad::graded_rule(a, 1e-3, std::f64::consts::FRAC_PI_2, 24, 2.0);
    let inner = rule.apply(|p| {
        let sinc = if p == 0.0 { 1.0 } else { p.sin() / p };
        sinc.powf(a) * p.cos().powi(n as i32 - 1)
    });
    Ok(specfun::sphere_area(n as f64) * inner)
}

/// Sharp constant `κ` in `(-Δ)^{-s} h ≤ κ ∫ |h(x̃)| |x - x̃|^{2s-n} dx̃` for the spectral
/// operator: the whole-space Riesz kernel `Γ(n/2-s) / (4^s π^{n/2} Γ(s))`.
pub fn riesz_kernel_constant(n: usize, s: f64) -> Result<f64> {
    check_ns(n, s)?;
    let nf = n as f64;
    if nf <= 2.0 * s {
        return Err(domain("Riesz kernel requires n > 2s"));
    }
    Ok(specfun::gamma(nf / 2.0 - s)? / (4f64.powf(s) * std::f64::consts::PI.powf(nf / 2.0) * specfun::gamma(s)?))
}

fn check_ns(n: usize, s: f64) -> Result<()> {
    if n < 2 {
        return Err(domain(format!("dimension must be >= 2, got {n}")));
    }
    if !(s > 0.0 && s < 1.0) {
        return Err(domain(format!("s must lie in (0,1), got {s}")));
    }
    Ok(())
}

/// Split radius around the singular point of the Riesz kernel.
const RIESZ_DELTA: f64 = 1e-3;

/// `∫_{B_1} |h(|x̃|)| |x - x̃|^{2s-n} dx̃` for a radial `h` given as a function of the
/// radius, at a point with `|x| = x_mag < 1`.
///
/// Uses polar coordinates `x̃ = x + rω` centered at `x`; the axial symmetry leaves the
/// angle `θ` between `ω` and `x`, with the chord length `L(θ)` as upper limit in `r`.
/// The `r^{2s-1}` weight is absorbed exactly on `[0, δ]` and by geometric panels beyond.
pub fn riesz_potential_fn<H: Fn(f64) -> f64>(n: usize, s: f64, h: H, x_mag: f64) -> Result<f64> {
    check_ns(n, s)?;
    if !(0.0..1.0).contains(&x_mag) {
        return Err(domain(format!("Riesz potential needs |x| in [0,1), got {x_mag}")));
    }
    let a = 2.0 * s - 1.0;
    let gl = GaussLegendre::<f64>::new(12);
    let (taus, tws) = gl.mapped(0.0, 1.0);
    let inner_nodes: Vec<f64> = taus.iter().map(|t| t.powf(1.0 / (2.0 * s))).collect();
    let radial_part = |theta: f64| -> f64 {
        let (st, ct) = theta.sin_cos();
        let chord = -x_mag * ct + (1.0 - x_mag * x_mag * st * st).max(0.0).sqrt();
        let at = |r: f64| h((x_mag * x_mag + r * r + 2.0 * r * x_mag * ct).max(0.0).sqrt().min(1.0)).abs();
        let delta = RIESZ_DELTA.min(chord);
        let mut acc = delta.powf(2.0 * s) / (2.0 * s)
            * inner_nodes.iter().zip(&tws).map(|(&t, &w)| w * at(delta * t)).sum::<f64>();
        if chord > delta {
            let edges = quad::geometric_edges(delta, chord, 2.0, 0.1);
            for e in edges.windows(2) {
                acc += gl.integrate(e[0], e[1], |r| r.powf(a) * at(r));
            }
        }
        acc
    };
    let sphere_rest = specfun::sphere_area((n - 1) as f64);
    let est = quad::adaptive(
        |theta| theta.sin().powi(n as i32 - 2) * radial_part(theta),
        0.0,
        std::f64::consts::PI,
        1e-300,
        1e-10,
        400,
    )?;
    Ok(sphere_rest * est.value)
}

/// Radial function tabulated on a uniform grid and interpolated by local cubics.
#[derive(Debug, Clone)]
pub struct RadialTable {
    values: Vec<f64>,
}

impl RadialTable {
    pub fn new<F: Fn(f64) -> f64>(points: usize, f: F) -> Self {
        assert!(points >= 4);
        let values = (0..points).map(|i| f(i as f64 / (points - 1) as f64)).collect();
        Self { values }
    }

    /// Tabulates `u` from its coefficients.
    pub fn from_coeffs(basis: &BallBasis, u: &RadialCoeffs, points: usize) -> Self {
        Self::new(points, |r| basis.eval(u, r))
    }

    pub fn eval(&self, rho: f64) -> f64 {
        let m = self.values.len() - 1;
        let x = rho.clamp(0.0, 1.0) * m as f64;
        let i = (x.floor() as usize).clamp(1, m - 2);
        let t = x - i as f64;
        let (p0, p1, p2, p3) = (self.values[i - 1], self.values[i], self.values[i + 1], self.values[i + 2]);
        // Lagrange cubic through nodes i-1..i+2 evaluated at offset t from node i.
        -t * (t - 1.0) * (t - 2.0) / 6.0 * p0 + (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0 * p1
            - (t + 1.0) * t * (t - 2.0) / 2.0 * p2
            + (t + 1.0) * t * (t - 1.0) / 6.0 * p3
    }
}

/// Riesz potential of `h` given by coefficients; tabulates `h` once on a fine grid.
pub fn riesz_potential_radial(basis: &BallBasis, h: &RadialCoeffs, x_mag: f64) -> Result<f64> {
    let table = RadialTable::from_coeffs(basis, h, 4097);
    riesz_potential_fn(basis.dim(), basis.order(), |r| table.eval(r), x_mag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn half_order_profile_is_exponential() {
        let p = Profile::new(0.5).unwrap();
        for t in [1e-3, 0.5, 3.0, 20.0] {
            assert_relative_eq!(p.value(t), (-t).exp(), max_relative = 1e-14);
        }
        // generic path agrees with the closed form
        let generic = Profile { s: 0.5 + 1e-12, pref: 2f64.powf(0.5) / specfun::gamma(0.5).unwrap() };
        for t in [0.1, 1.0, 2.5, 10.0] {
            assert_relative_eq!(generic.value(t), (-t).exp(), max_relative = 1e-9);
        }
    }

    #[test]
    fn profile_normalized_and_decaying() {
        let basis = BallBasis::build(3, 0.3, 6, 24).unwrap();
        for k in 0..6 {
            let j = basis.frequencies()[k];
            assert_relative_eq!(profile(&basis, k, 1e-12).unwrap(), 1.0, epsilon = 1e-6);
            assert!(profile(&basis, k, 10.0 / j).unwrap() <= 1e-3);
        }
        for s in [0.25, 0.5, 0.75] {
            let p = Profile::new(s).unwrap();
            let mut prev = 1.0;
            for i in 1..300 {
                let v = p.value(i as f64 * 0.1);
                assert!(v >= 0.0 && v < prev);
                assert!(p.slope(i as f64 * 0.1) <= 0.0);
                prev = v;
            }
        }
    }

    #[test]
    fn slope_matches_finite_difference() {
        for s in [0.25, 0.6] {
            let p = Profile::new(s).unwrap();
            for t in [0.3, 1.7, 2.3, 6.0] {
                let h = 1e-5;
                let fd = (p.value(t + h) - p.value(t - h)) / (2.0 * h);
                assert_relative_eq!(p.slope(t), fd, max_relative = 1e-7);
            }
        }
    }

    #[test]
    fn flux_extrapolation_matches_closed_form() {
        assert_relative_eq!(flux_constant(0.5).unwrap(), 1.0, max_relative = 1e-15);
        for s in [0.25, 0.5, 0.75] {
            let c = flux_constant(s).unwrap();
            for mu in [PI * PI, 4.0 * PI * PI, 25.0 * PI * PI] {
                let est = flux_limit(s, mu).unwrap();
                assert_relative_eq!(est.value, c, max_relative = 1e-7);
            }
            let p = Profile::new(s).unwrap();
            assert_relative_eq!(p.flux_density(1e-14), c, max_relative = 1e-5);
        }
    }

    #[test]
    fn single_mode_energy() {
        let basis = BallBasis::build(3, 0.5, 4, 16).unwrap();
        let field = ExtensionField::new(&basis, basis.mode(0)).unwrap();
        let e = field.energy(&VerticalQuad::default()).unwrap();
        assert_relative_eq!(e, PI, max_relative = 1e-8);
        let zero = ExtensionField::new(&basis, basis.zero()).unwrap();
        assert_eq!(zero.energy(&VerticalQuad::default()).unwrap(), 0.0);
    }

    #[test]
    fn energy_identity_random_modes() {
        for (n, s) in [(2, 0.3), (3, 0.7), (5, 0.5)] {
            let basis = BallBasis::build(n, s, 8, 32).unwrap();
            let c: Vec<f64> = (0..8).map(|k| ((k * 7 + 3) % 5) as f64 - 2.0).collect();
            let u = basis.coeffs(c).unwrap();
            let field = ExtensionField::new(&basis, u.clone()).unwrap();
            let want = flux_constant(s).unwrap() * basis.h_norm(&u).powi(2);
            assert_relative_eq!(field.energy(&VerticalQuad::default()).unwrap(), want, max_relative = 1e-6);
        }
    }

    #[test]
    fn trace_and_separability() {
        let basis = BallBasis::build(3, 0.4, 6, 24).unwrap();
        let u = basis.coeffs(vec![1.0, -0.5, 0.25, 0.0, 0.1, 0.0]).unwrap();
        let field = ExtensionField::new(&basis, u.clone()).unwrap();
        for rho in [0.0, 0.3, 0.8] {
            assert_relative_eq!(field.eval(rho, 0.0), basis.eval(&u, rho), epsilon = 1e-12);
        }
        let single = ExtensionField::new(&basis, basis.mode(0)).unwrap();
        assert_relative_eq!(single.eval(0.4, 0.7), basis.phi(0, 0.4) * single.g(0, 0.7), max_relative = 1e-14);
    }

    #[test]
    fn axis_decay_rate_of_first_mode() {
        let basis = BallBasis::build(3, 0.5, 4, 16).unwrap();
        let field = ExtensionField::new(&basis, basis.mode(0)).unwrap();
        let rate = field.axis_decay_rate(2.0, 10.0).unwrap();
        assert_relative_eq!(rate, PI, max_relative = 1e-10);
        let field = ExtensionField::new(&basis, basis.torsion()).unwrap();
        assert!(field.axis_decay_rate(2.0, 10.0).unwrap() >= 0.9 * PI);
    }

    #[test]
    fn vrho_integral_behaviour() {
        let basis = BallBasis::build(3, 0.5, 8, 32).unwrap();
        let q = VerticalQuad::default();
        let zero = ExtensionField::new(&basis, basis.zero()).unwrap();
        let spec = CutoffSpec { alpha: 2.0, epsilon: 0.01, r: 2.0 };
        assert_eq!(zero.weighted_vrho_integral(&spec, &q).unwrap(), 0.0);
        let field = ExtensionField::new(&basis, basis.mode(0)).unwrap();
        let v = field.weighted_vrho_integral(&spec, &q).unwrap();
        // separable: (∫_{B_{1/2}} φ'^2 ρ^{-4} dx) (∫ y^0 e^{-2πy} dy)
        let radial = quad::adaptive(
            |r| basis.sphere_area() * r.powi(2) * basis.dphi(0, r).powi(2) * r.powi(-4),
            0.0,
            0.5,
            0.0,
            1e-12,
            200,
        )
        .unwrap()
        .value;
        assert_relative_eq!(v, radial / (2.0 * PI), max_relative = 1e-8);
        let bad = CutoffSpec { alpha: 3.1, ..spec };
        assert!(matches!(field.weighted_vrho_integral(&bad, &q), Err(Error::Divergent(_))));
    }

    #[test]
    fn stability_inequality_degenerate_cases() {
        let basis = BallBasis::build(3, 0.5, 8, 32).unwrap();
        let q = VerticalQuad::default();
        let field = ExtensionField::new(&basis, basis.torsion()).unwrap();
        let spec = CutoffSpec { alpha: 1.0, epsilon: 0.8, r: 2.0 };
        assert_eq!(field.stability_weighted_inequality(&spec, &q).unwrap(), (0.0, 0.0));
        let zero = ExtensionField::new(&basis, basis.zero()).unwrap();
        let spec = CutoffSpec { alpha: 1.0, epsilon: 0.05, r: 2.0 };
        assert_eq!(zero.stability_weighted_inequality(&spec, &q).unwrap(), (0.0, 0.0));
        let (lhs, rhs) = field.stability_weighted_inequality(&spec, &q).unwrap();
        assert!(lhs > 0.0 && rhs > 0.0);
    }

    #[test]
    fn cutoffs_are_c1() {
        let spec = CutoffSpec { alpha: 1.0, epsilon: 0.05, r: 3.0 };
        assert_eq!(spec.zeta(0.04).0, 0.0);
        assert_eq!(spec.zeta(0.3), (1.0, 0.0));
        assert_eq!(spec.zeta(0.8).0, 0.0);
        assert_eq!(spec.psi(2.0), (1.0, 0.0));
        assert_eq!(spec.psi(4.5), (0.0, 0.0));
        for x in [0.06, 0.09, 0.55, 0.7] {
            let h = 1e-6;
            let fd = (spec.zeta(x + h).0 - spec.zeta(x - h).0) / (2.0 * h);
            assert_relative_eq!(spec.zeta(x).1, fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn poisson_constant_examples() {
        assert_relative_eq!(poisson_constant(2, 0.5).unwrap(), 1.0 / (2.0 * PI), max_relative = 1e-14);
        for n in [2, 3, 5, 10] {
            for s in [0.25, 0.5, 0.75] {
                let c = poisson_constant(n, s).unwrap();
                assert_relative_eq!(c * poisson_normalization_integral(n, s).unwrap(), 1.0, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn riesz_potential_examples() {
        for (n, s) in [(2, 0.5), (3, 0.25), (3, 0.5), (5, 0.75)] {
            let area = specfun::sphere_area(n as f64);
            let got = riesz_potential_fn(n, s, |_| 1.0, 0.0).unwrap();
            assert_relative_eq!(got, area / (2.0 * s), max_relative = 1e-9);
        }
        assert_eq!(riesz_potential_fn(3, 0.5, |_| 0.0, 0.4).unwrap(), 0.0);
        // n=3, s=1/2, h≡1: ∫_{B_1} |x-x̃|^{-2} dx̃ = 2π + π(1-a²)/a · ln((1+a)/(1-a))
        for a in [0.3f64, 0.7, 0.9] {
            let want = 2.0 * PI + PI * (1.0 - a * a) / a * ((1.0 + a) / (1.0 - a)).ln();
            let got = riesz_potential_fn(3, 0.5, |_| 1.0, a).unwrap();
            assert_relative_eq!(got, want, max_relative = 1e-9);
        }
    }

    #[test]
    fn riesz_constant_half_order_three_dimensions() {
        assert_relative_eq!(riesz_kernel_constant(3, 0.5).unwrap(), 1.0 / (2.0 * PI * PI), max_relative = 1e-14);
    }

    #[test]
    fn table_interpolation() {
        let t = RadialTable::new(1025, |r| (3.0 * r).sin());
        for r in [0.0, 0.0004, 0.37, 0.999, 1.0] {
            assert_relative_eq!(t.eval(r), (3.0 * r).sin(), epsilon = 1e-11);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn riesz_is_linear_in_h(scale in 0.1f64..10.0, x in 0.0f64..0.95) {
            let base = riesz_potential_fn(3, 0.5, |r| 1.0 + r * r, x).unwrap();
            let scaled = riesz_potential_fn(3, 0.5, |r| scale * (1.0 + r * r), x).unwrap();
            prop_assert!((scaled - scale * base).abs() <= 1e-9 * scaled.abs());
        }

        #[test]
        fn energy_is_additive_over_modes(j in 0usize..4, k in 4usize..8) {
            let basis = BallBasis::build(3, 0.3, 8, 32).unwrap();
            let q = VerticalQuad::default();
            let e = |u: RadialCoeffs| ExtensionField::new(&basis, u).unwrap().energy(&q).unwrap();
            let sum = basis.mode(j).combine(1.0, &basis.mode(k), 1.0).unwrap();
            let lhs = e(sum);
            let rhs = e(basis.mode(j)) + e(basis.mode(k));
            prop_assert!((lhs - rhs).abs() <= 1e-6 * rhs);
        }
    }
}
