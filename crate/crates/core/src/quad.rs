//! Quadrature rules: Gauss–Legendre, graded rules for algebraic endpoint weights, and
//! a globally adaptive Gauss–Kronrod (7/15) integrator.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre<T> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Scalar> GaussLegendre<T> {
    /// `n`-point rule; nodes from Newton's method on `P_n` (ascending order).
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![T::zero(); n];
        let mut weights = vec![T::zero(); n];
        let nf = T::from_usize(n);
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut z = (T::PI() * (T::from_usize(i) + T::lit(0.75)) / (nf + T::lit(0.5))).cos();
            let mut pp = T::one();
            for _ in 0..100 {
                let (p, dp) = legendre_with_deriv(n, z);
                pp = dp;
                let dz = p / dp;
                z = z - dz;
                if dz.abs() <= T::lit(4.0) * T::epsilon() {
                    let (_, dp) = legendre_with_deriv(n, z);
                    pp = dp;
                    break;
                }
            }
            let w = T::lit(2.0) / ((T::one() - z * z) * pp * pp);
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = T::zero();
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped onto `[a, b]`.
    pub fn mapped(&self, a: T, b: T) -> (Vec<T>, Vec<T>) {
        let half = (b - a) / T::lit(2.0);
        let mid = (a + b) / T::lit(2.0);
        let xs = self.nodes.iter().map(|&x| mid + half * x).collect();
        let ws = self.weights.iter().map(|&w| half * w).collect();
        (xs, ws)
    }

    pub fn integrate<F: FnMut(T) -> T>(&self, a: T, b: T, mut f: F) -> T {
        let half = (b - a) / T::lit(2.0);
        let mid = (a + b) / T::lit(2.0);
        let mut acc = T::zero();
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            acc = acc + w * f(mid + half * x);
        }
        acc * half
    }
}

fn legendre_with_deriv<T: Scalar>(n: usize, z: T) -> (T, T) {
    let mut p0 = T::one();
    let mut p1 = z;
    for k in 2..=n {
        let kf = T::from_usize(k);
        let p2 = ((T::lit(2.0) * kf - T::one()) * z * p1 - (kf - T::one()) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (T::one(), T::zero());
    }
    let dp = T::from_usize(n) * (z * p1 - p0) / (z * z - T::one());
    (p1, dp)
}

/// A quadrature rule given as explicit nodes and weights (weights may include a weight
/// function).
#[derive(Debug, Clone, Default)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn apply<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Rule for `int_0^{upper} t^a F(t) dt` with `a > -1` and `F` smooth on every scale
/// between `inner` and `upper`.
///
/// `[0, inner]` uses the substitution `t = inner * tau^{1/(a+1)}`, which absorbs the
/// weight exactly; `[inner, upper]` is covered by panels growing geometrically by
/// `ratio`, each with a `points`-node Gauss–Legendre rule.
pub fn graded_rule(a: f64, inner: f64, upper: f64, points: usize, ratio: f64) -> Rule {
    graded_rule_capped(a, inner, upper, points, ratio, f64::INFINITY)
}

/// [`graded_rule`] with no panel wider than `max_width`, for integrands that
/// oscillate on a fixed scale.
pub fn graded_rule_capped(a: f64, inner: f64, upper: f64, points: usize, ratio: f64, max_width: f64) -> Rule {
    assert!(a > -1.0, "weight exponent must exceed -1");
    assert!(inner > 0.0 && upper > inner && ratio > 1.0 && max_width > 0.0);
    let gl = GaussLegendre::<f64>::new(points);
    let mut rule = Rule::default();
    let p = 1.0 / (a + 1.0);
    let scale = inner.powf(a + 1.0) / (a + 1.0);
    let (taus, ws) = gl.mapped(0.0, 1.0);
    for (tau, w) in taus.into_iter().zip(ws) {
        rule.nodes.push(inner * tau.powf(p));
        rule.weights.push(scale * w);
    }
    let edges = geometric_edges(inner, upper, ratio, max_width);
    rule.extend(&panel_rule(&edges, points), |x| x.powf(a));
    rule
}

/// Panel edges from `lo` to `hi`, widths growing by `ratio` but capped at `max_width`.
pub fn geometric_edges(lo: f64, hi: f64, ratio: f64, max_width: f64) -> Vec<f64> {
    assert!(hi > lo && lo > 0.0 && ratio > 1.0);
    let mut edges = vec![lo];
    let mut x = lo;
    while x < hi {
        let next = (x * ratio).min(x + max_width);
        x = if next >= hi * (1.0 - 1e-12) { hi } else { next };
        edges.push(x);
    }
    edges
}

/// Composite Gauss–Legendre rule with one `points`-node panel per edge interval.
pub fn panel_rule(edges: &[f64], points: usize) -> Rule {
    let gl = GaussLegendre::<f64>::new(points);
    let mut rule = Rule::default();
    for w in edges.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        let (xs, ws) = gl.mapped(w[0], w[1]);
        rule.nodes.extend(xs);
        rule.weights.extend(ws);
    }
    rule
}

impl Rule {
    /// Appends `other` with its weights multiplied by `weight(node)`.
    pub fn extend<F: Fn(f64) -> f64>(&mut self, other: &Rule, weight: F) {
        for (&x, &w) in other.nodes.iter().zip(&other.weights) {
            self.nodes.push(x);
            self.weights.push(w * weight(x));
        }
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

/// Globally adaptive Gauss–Kronrod integration on `[a, b]`: bisects the interval
/// with the largest error estimate until `error <= max(abs_tol, rel_tol * |value|)`.
pub fn adaptive<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> Result<Estimate> {
    let (v0, e0) = gk15(&mut f, a, b);
    let mut parts = vec![(a, b, v0, e0)];
    let mut evaluations = 15;
    loop {
        let value: f64 = parts.iter().map(|p| p.2).sum();
        let error: f64 = parts.iter().map(|p| p.3).sum();
        if error <= abs_tol.max(rel_tol * value.abs()) {
            return Ok(Estimate { value, error, evaluations });
        }
        if parts.len() >= max_intervals || !value.is_finite() {
            return Err(Error::NoConvergence {
                what: "adaptive quadrature",
                detail: format!("value {value:e}, error estimate {error:e} after {} intervals", parts.len()),
            });
        }
        let (idx, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty interval list");
        let (lo, hi, _, _) = parts.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        let (vl, el) = gk15(&mut f, lo, mid);
        let (vr, er) = gk15(&mut f, mid, hi);
        evaluations += 30;
        parts.push((lo, mid, vl, el));
        parts.push((mid, hi, vr, er));
    }
}
