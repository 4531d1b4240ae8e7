//! Radial Dirichlet eigensystem of `-Δ` on the unit ball and the spectral fractional
//! Laplacian acting on eigenfunction coefficients.
//!
//! The radial eigenfunctions are `φ_k(ρ) = N_k ρ^{-ν} J_ν(j_{ν,k} ρ)` with `ν = n/2 - 1`
//! and eigenvalues `μ_k = j_{ν,k}^2`. They are evaluated through the regular function
//! `x^{-ν} J_ν(x)` so the axis `ρ = 0` needs no special handling beyond its series.

use std::hash::{Hash, Hasher};

use nalgebra::{DMatrix, DVector};

use crate::error::{domain, Error, Result};
use crate::quad::GaussLegendre;
use crate::specfun::{self, BesselOrder};

/// Radii below this use the series limit of `ρ^{-ν} J_ν(jρ)`.
const AXIS_CUTOFF: f64 = 1e-8;

/// Identifies the basis a coefficient vector was produced with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BasisId(u64);

/// Gauss–Legendre rule on `[0,1]` for `∫_{B_1} F(|x|) dx`; the weights carry
/// `|S^{n-1}| ρ^{n-1}`.
#[derive(Debug, Clone)]
pub struct RadialQuadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl RadialQuadrature {
    pub fn new(n: usize, order: usize) -> Self {
        let area = specfun::sphere_area(n as f64);
        let (nodes, w) = GaussLegendre::<f64>::new(order).mapped(0.0, 1.0);
        let weights = nodes
            .iter()
            .zip(w)
            .map(|(&r, w)| area * r.powi(n as i32 - 1) * w)
            .collect();
        Self { nodes, weights }
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&r, &w)| w * f(r)).sum()
    }
}

/// Radial sector of the Dirichlet eigensystem on `B_1 ⊂ R^n`.
#[derive(Debug, Clone)]
pub struct BallBasis {
    id: BasisId,
    n: usize,
    s: f64,
    nu: BesselOrder<f64>,
    freq: Vec<f64>,
    mu: Vec<f64>,
    mu_s: Vec<f64>,
    norm: Vec<f64>,
    amp: Vec<f64>,
    quad: RadialQuadrature,
    phi_nodes: DMatrix<f64>,
    weighted_phi_t: DMatrix<f64>,
}

/// A radial function `u = Σ c_k φ_k` stored by its eigenfunction coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialCoeffs {
    basis_id: BasisId,
    pub c: Vec<f64>,
}

impl RadialCoeffs {
    pub fn basis_id(&self) -> BasisId {
        self.basis_id
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self { basis_id: self.basis_id, c: self.c.iter().map(|x| a * x).collect() }
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if self.basis_id != other.basis_id {
            return Err(Error::BasisMismatch);
        }
        let c = self.c.iter().zip(&other.c).map(|(x, y)| a * x + b * y).collect();
        Ok(Self { basis_id: self.basis_id, c })
    }

    pub fn as_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.c)
    }

    pub fn norm_l2(&self) -> f64 {
        self.c.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

impl BallBasis {
    /// Builds the first `modes` radial eigenpairs with a `quad_order`-point radial rule.
    pub fn build(n: usize, s: f64, modes: usize, quad_order: usize) -> Result<Self> {
        validate(n, s, modes, quad_order)?;
        let nu = BesselOrder::radial(n)?;
        let zeros = specfun::bessel_j_zeros(nu, modes)?;
        Self::from_frequencies(n, s, zeros, quad_order)
    }

    /// Builds the basis from precomputed zeros `j_{ν,k}` (for example from a cache).
    pub fn from_zeros(n: usize, s: f64, zeros: Vec<f64>, quad_order: usize) -> Result<Self> {
        validate(n, s, zeros.len(), quad_order)?;
        if zeros.windows(2).any(|w| w[1] <= w[0]) || zeros.first().is_some_and(|&z| z <= 0.0) {
            return Err(domain("zeros must be positive and strictly increasing"));
        }
        Self::from_frequencies(n, s, zeros, quad_order)
    }

    fn from_frequencies(n: usize, s: f64, freq: Vec<f64>, quad_order: usize) -> Result<Self> {
        let nu = BesselOrder::radial(n)?;
        let area = specfun::sphere_area(n as f64);
        let nu1 = nu.value() + 1.0;
        let norm: Vec<f64> = freq
            .iter()
            .map(|&j| (2.0 / area).sqrt() / specfun::bessel_j_raw(nu1, j).abs())
            .collect();
        let amp: Vec<f64> = freq.iter().zip(&norm).map(|(&j, &nk)| nk * j.powf(nu.value())).collect();
        let mu: Vec<f64> = freq.iter().map(|j| j * j).collect();
        let mu_s = mu.iter().map(|m| m.powf(s)).collect();
        let quad = RadialQuadrature::new(n, quad_order);
        let modes = freq.len();
        let nq = quad.nodes.len();
        let mut phi_nodes = DMatrix::zeros(nq, modes);
        for k in 0..modes {
            for (i, &r) in quad.nodes.iter().enumerate() {
                phi_nodes[(i, k)] = amp[k] * specfun::scaled_j_raw(nu.value(), freq[k] * r);
            }
        }
        let mut weighted_phi_t = phi_nodes.transpose();
        for (i, &w) in quad.weights.iter().enumerate() {
            weighted_phi_t.column_mut(i).scale_mut(w);
        }
        let id = fingerprint(n, s, &freq, quad_order);
        Ok(Self { id, n, s, nu, freq, mu, mu_s, norm, amp, quad, phi_nodes, weighted_phi_t })
    }

    /// Test hook: rebuilds the basis with eigenvalue `k` (1-based) scaled by
    /// `1 + rel`, moving `φ_k` off the Dirichlet spectrum.
    pub fn with_perturbed_eigenvalue(&self, k: usize, rel: f64) -> Result<Self> {
        if k == 0 || k > self.modes() {
            return Err(domain(format!("mode index {k} out of range")));
        }
        let mut freq = self.freq.clone();
        freq[k - 1] *= (1.0 + rel).sqrt();
        let mut b = Self::from_frequencies(self.n, self.s, freq, self.quad.nodes.len())?;
        b.id = BasisId(b.id.0 ^ 0x9e37_79b9_7f4a_7c15);
        Ok(b)
    }

    pub fn id(&self) -> BasisId {
        self.id
    }
    pub fn dim(&self) -> usize {
        self.n
    }
    pub fn order(&self) -> f64 {
        self.s
    }
    pub fn modes(&self) -> usize {
        self.freq.len()
    }
    pub fn bessel_order(&self) -> BesselOrder<f64> {
        self.nu
    }
    /// `√μ_k = j_{ν,k}`.
    pub fn frequencies(&self) -> &[f64] {
        &self.freq
    }
    pub fn eigenvalues(&self) -> &[f64] {
        &self.mu
    }
    /// `μ_k^s`.
    pub fn frac_eigenvalues(&self) -> &[f64] {
        &self.mu_s
    }
    pub fn norm_consts(&self) -> &[f64] {
        &self.norm
    }
    pub fn quadrature(&self) -> &RadialQuadrature {
        &self.quad
    }
    /// `φ_k(ρ_i)` at the quadrature nodes, one column per mode.
    pub fn phi_at_nodes(&self) -> &DMatrix<f64> {
        &self.phi_nodes
    }
    pub fn sphere_area(&self) -> f64 {
        specfun::sphere_area(self.n as f64)
    }

    /// `φ_k(ρ)` for the 0-based mode index `k`.
    pub fn phi(&self, k: usize, rho: f64) -> f64 {
        let x = if rho < AXIS_CUTOFF { 0.0 } else { self.freq[k] * rho };
        self.amp[k] * specfun::scaled_j_raw(self.nu.value(), x)
    }

    /// `φ_k'(ρ) = -N_k j_k ρ^{-ν} J_{ν+1}(j_k ρ)`.
    pub fn dphi(&self, k: usize, rho: f64) -> f64 {
        let j = self.freq[k];
        let x = j * rho;
        -self.amp[k] * j * x * specfun::scaled_j_raw(self.nu.value() + 1.0, x)
    }

    /// `φ_k'(ρ)/ρ`, regular at the axis.
    pub fn dphi_over_rho(&self, k: usize, rho: f64) -> f64 {
        let j = self.freq[k];
        let x = if rho < AXIS_CUTOFF { 0.0 } else { j * rho };
        -self.amp[k] * j * j * specfun::scaled_j_raw(self.nu.value() + 1.0, x)
    }

    pub fn zero(&self) -> RadialCoeffs {
        RadialCoeffs { basis_id: self.id, c: vec![0.0; self.modes()] }
    }

    /// Unit coefficient vector of the 0-based mode `k`.
    pub fn mode(&self, k: usize) -> RadialCoeffs {
        let mut u = self.zero();
        u.c[k] = 1.0;
        u
    }

    pub fn coeffs(&self, c: Vec<f64>) -> Result<RadialCoeffs> {
        if c.len() != self.modes() {
            return Err(domain(format!("expected {} coefficients, got {}", self.modes(), c.len())));
        }
        Ok(RadialCoeffs { basis_id: self.id, c })
    }

    fn check(&self, u: &RadialCoeffs) {
        assert_eq!(u.basis_id, self.id, "coefficient vector belongs to a different basis");
    }

    /// `u(ρ) = Σ c_k φ_k(ρ)`.
    pub fn eval(&self, u: &RadialCoeffs, rho: f64) -> f64 {
        self.check(u);
        u.c.iter().enumerate().map(|(k, &c)| if c == 0.0 { 0.0 } else { c * self.phi(k, rho) }).sum()
    }

    /// `∂u/∂ρ` by term-wise differentiation.
    pub fn eval_deriv(&self, u: &RadialCoeffs, rho: f64) -> f64 {
        self.check(u);
        u.c.iter().enumerate().map(|(k, &c)| if c == 0.0 { 0.0 } else { c * self.dphi(k, rho) }).sum()
    }

    /// `u(0)`.
    pub fn eval_origin(&self, u: &RadialCoeffs) -> f64 {
        self.eval(u, 0.0)
    }

    /// Values of `u` at the radial quadrature nodes.
    pub fn eval_at_nodes(&self, u: &RadialCoeffs) -> Vec<f64> {
        self.check(u);
        (&self.phi_nodes * u.as_dvector()).iter().copied().collect()
    }

    /// Projects nodal values onto the basis: `c_k = Σ_i w_i f_i φ_k(ρ_i)`.
    pub fn analyze_nodal(&self, values: &[f64]) -> RadialCoeffs {
        assert_eq!(values.len(), self.quad.nodes.len());
        let v = DVector::from_column_slice(values);
        RadialCoeffs { basis_id: self.id, c: (&self.weighted_phi_t * v).iter().copied().collect() }
    }

    /// `c_k = ∫_{B_1} u φ_k dx` by the radial quadrature.
    pub fn analyze<F: Fn(f64) -> f64>(&self, f: F) -> RadialCoeffs {
        let values: Vec<f64> = self.quad.nodes.iter().map(|&r| f(r)).collect();
        self.analyze_nodal(&values)
    }

    /// `∫_{B_1} F(|x|) dx` with the basis quadrature.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, f: F) -> f64 {
        self.quad.integrate(f)
    }

    /// Matrix of `∫_{B_1} φ_j φ_k dx` under the radial quadrature.
    pub fn gram_matrix(&self) -> DMatrix<f64> {
        &self.weighted_phi_t * &self.phi_nodes
    }

    /// Matrix of `∫_{B_1} w(|x|) φ_j φ_k dx` for nodal weights `w`.
    pub fn weighted_gram(&self, nodal_weight: &[f64]) -> DMatrix<f64> {
        assert_eq!(nodal_weight.len(), self.quad.nodes.len());
        let mut scaled = self.phi_nodes.clone();
        for (i, &w) in nodal_weight.iter().enumerate() {
            scaled.row_mut(i).scale_mut(w);
        }
        &self.weighted_phi_t * scaled
    }

    /// `(-Δ)^s`: `c_k ↦ μ_k^s c_k`.
    pub fn frac_laplacian(&self, u: &RadialCoeffs) -> RadialCoeffs {
        self.check(u);
        let c = u.c.iter().zip(&self.mu_s).map(|(c, m)| c * m).collect();
        RadialCoeffs { basis_id: self.id, c }
    }

    /// `(-Δ)^{-s}`: `c_k ↦ μ_k^{-s} c_k`.
    pub fn inv_frac_laplacian(&self, h: &RadialCoeffs) -> RadialCoeffs {
        self.check(h);
        let c = h.c.iter().zip(&self.mu_s).map(|(c, m)| c / m).collect();
        RadialCoeffs { basis_id: self.id, c }
    }

    /// `‖u‖_H = (Σ μ_k^s c_k²)^{1/2}`.
    pub fn h_norm(&self, u: &RadialCoeffs) -> f64 {
        self.check(u);
        u.c.iter().zip(&self.mu_s).map(|(c, m)| m * c * c).sum::<f64>().sqrt()
    }

    /// `ζ_0 = (-Δ)^{-s} 1`, the torsion-like function used throughout.
    pub fn torsion(&self) -> RadialCoeffs {
        self.inv_frac_laplacian(&self.analyze(|_| 1.0))
    }
}

/// `ζ_0(0)` for `(-Δ)^s ζ_0 = 1`, computed without eigenfunctions from the Balakrishnan
/// formula and the radial resolvent `(τ - Δ)^{-1} 1 = (1 - ρ^{-ν} I_ν(√τ ρ)/I_ν(√τ))/τ`:
/// `ζ_0(0) = (sin πs/π) ∫_0^∞ 2 x^{-2s-1} (1 - 1/S(x)) dx`,
/// `S(x) = Σ_m (x²/4)^m / (m! (ν+1)_m)`.
pub fn torsion_at_origin(n: usize, s: f64) -> Result<f64> {
    if n < 2 || !(s > 0.0 && s <= 1.0) {
        return Err(domain(format!("need n >= 2 and 0 < s <= 1, got n = {n}, s = {s}")));
    }
    if s == 1.0 {
        return Ok(0.5 / n as f64);
    }
    let nu = 0.5 * n as f64 - 1.0;
    // (1 - 1/S)/x² = ((S - 1)/x²)/S, summed without cancellation
    let gap_over_x2 = |x: f64| -> f64 {
        let q = 0.25 * x * x;
        let mut term = 0.25 / (nu + 1.0);
        let mut tail = term;
        let mut m = 1.0;
        loop {
            term *= q / ((m + 1.0) * (nu + m + 1.0));
            tail += term;
            m += 1.0;
            if term < 1e-17 * tail || tail > 1e300 {
                break;
            }
        }
        tail / (1.0 + x * x * tail)
    };
    let cut: f64 = 600.0;
    let integrand = |x: f64| 2.0 * x.powf(1.0 - 2.0 * s) * gap_over_x2(x);
    // x = y^p with p = 1/(2-2s) removes the x^{1-2s} endpoint singularity on [0, 1]
    let p = 1.0 / (2.0 - 2.0 * s);
    let mut total = cut.powf(-2.0 * s) / s;
    total += crate::quad::adaptive(|y| 2.0 * p * gap_over_x2(y.powf(p)), 0.0, 1.0, 1e-14, 1e-13, 2000)?.value;
    for w in [1.0, 4.0, 16.0, 64.0, 200.0, cut].windows(2) {
        total += crate::quad::adaptive(integrand, w[0], w[1], 1e-14, 1e-13, 2000)?.value;
    }
    Ok((std::f64::consts::PI * s).sin() / std::f64::consts::PI * total)
}

fn validate(n: usize, s: f64, modes: usize, quad_order: usize) -> Result<()> {
    if n < 2 {
        return Err(domain(format!("dimension n must be >= 2, got {n}")));
    }
    if !(s > 0.0 && s <= 1.0) {
        return Err(domain(format!("order s must lie in (0,1], got {s}")));
    }
    if modes < 1 {
        return Err(domain("at least one mode is required"));
    }
    if quad_order < 2 * modes {
        return Err(domain(format!("quad_order {quad_order} must be >= 2K = {}", 2 * modes)));
    }
    Ok(())
}

fn fingerprint(n: usize, s: f64, freq: &[f64], quad_order: usize) -> BasisId {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    n.hash(&mut h);
    s.to_bits().hash(&mut h);
    quad_order.hash(&mut h);
    for f in freq {
        f.to_bits().hash(&mut h);
    }
    BasisId(h.finish())
}
