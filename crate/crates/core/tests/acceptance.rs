//! Acceptance suite. Runs every criterion at its stated tolerance, prints one
//! `PASS`/`FAIL` line per criterion and exits nonzero if any failed.

use std::f64::consts::PI;
use std::time::Instant;

use frac_gelfand::branch::{self, Branch, BranchPoint, Solver, SolverOptions, TraceOptions};
use frac_gelfand::extension::{self, CutoffSpec, ExtensionField, VerticalQuad};
use frac_gelfand::nonlinearity::Nonlinearity;
use frac_gelfand::persist::{self, ConfigBuilder, ZeroCache};
use frac_gelfand::regularity;
use frac_gelfand::spectral::BallBasis;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

/// Branch shared by the criteria that refer to "the branch": `n = 3, s = 1/2, f = exp, K = 128`.
struct Reference {
    basis: BallBasis,
    f: Nonlinearity,
    branch: Branch,
}

impl Reference {
    fn new() -> Self {
        let basis = BallBasis::build(3, 0.5, 128, 512).unwrap();
        let f = Nonlinearity::exponential();
        let branch = Solver::new(&basis, &f, SolverOptions::default())
            .trace_to_fold(&TraceOptions::default())
            .unwrap();
        Self { basis, f, branch }
    }

    fn nontrivial(&self) -> impl Iterator<Item = &BranchPoint> {
        self.branch.points.iter().filter(|p| p.t > 0.0)
    }
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn spectral_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for n in [2, 3, 5] {
        let basis = BallBasis::build(n, 0.5, 32, 128).unwrap();
        for _ in 0..5 {
            let c: Vec<f64> = (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let u = basis.coeffs(c.clone()).unwrap();
            let back = basis.analyze_nodal(&basis.eval_at_nodes(&u));
            let err = back.c.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
                / c.iter().map(|x| x * x).sum::<f64>().sqrt();
            worst = worst.max(err);
        }
    }
    let b3 = BallBasis::build(3, 1.0, 32, 128).unwrap();
    let eig3 = (0..32).map(|k| rel(b3.eigenvalues()[k], ((k + 1) as f64 * PI).powi(2))).fold(0.0, f64::max);
    let b2 = BallBasis::build(2, 1.0, 1, 8).unwrap();
    let eig2 = rel(b2.eigenvalues()[0], 5.783185962947);
    check(
        worst <= 1e-8 && eig3 <= 1e-10 && eig2 <= 1e-9,
        format!("roundtrip {worst:.2e}, n=3 eigenvalues {eig3:.2e}, n=2 first eigenvalue {eig2:.2e}"),
    )
}

fn flux_constant() -> Outcome {
    let oracle = [(0.25, 0.477988797486125), (0.5, 1.0), (0.75, 2.0920992401062033)];
    let mut worst: f64 = 0.0;
    let mut half: f64 = 0.0;
    for (s, want) in oracle {
        for mu in [PI * PI, 4.0 * PI * PI, 25.0 * PI * PI] {
            let est = extension::flux_limit(s, mu).map_err(|e| e.to_string())?;
            worst = worst.max(rel(est.value, want));
            if s == 0.5 {
                half = half.max((est.value - 1.0).abs());
            }
        }
    }
    check(worst <= 1e-5 && half <= 1e-6, format!("max relative error {worst:.2e}, |c - 1| at s=1/2 {half:.2e}"))
}

fn energy_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for n in [2, 3, 5] {
        for s in [0.3, 0.5, 0.7] {
            let basis = BallBasis::build(n, s, 16, 64).unwrap();
            let c = extension::flux_constant(s).unwrap();
            for _ in 0..2 {
                let mut coeffs = vec![0.0; 16];
                for x in coeffs.iter_mut().take(8) {
                    *x = rng.gen_range(-1.0..1.0);
                }
                let u = basis.coeffs(coeffs).unwrap();
                let e = ExtensionField::new(&basis, u.clone()).unwrap().energy(&VerticalQuad::default());
                let e = e.map_err(|e| e.to_string())?;
                worst = worst.max(rel(e, c * basis.h_norm(&u).powi(2)));
            }
        }
    }
    check(worst <= 1e-4, format!("max relative error {worst:.2e}"))
}

fn max_principle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut lowest = f64::INFINITY;
    for i in 0..20 {
        let s = [0.25, 0.5, 0.75, 1.0][i % 4];
        let basis = BallBasis::build(3, s, 64, 256).unwrap();
        let bumps: Vec<(f64, f64, f64)> =
            (0..3).map(|_| (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.05..0.5))).collect();
        let h = basis.analyze(|r| bumps.iter().map(|(a, c, w)| a * (-((r - c) / w).powi(2)).exp()).sum());
        let u = basis.inv_frac_laplacian(&h);
        for k in 0..200 {
            lowest = lowest.min(basis.eval(&u, k as f64 / 199.0));
        }
    }
    check(lowest >= -1e-8, format!("minimum {lowest:.2e} over 20 right-hand sides"))
}

fn branch_and_fold(r: &Reference) -> Outcome {
    let b = &r.branch;
    let fold = b.fold.as_ref().ok_or("no fold")?;
    let violations = b.invariant_violations(1e-8);
    let single = b.fold_index.is_some_and(|i| b.points[i + 1..].windows(2).all(|w| w[1].lambda < w[0].lambda));
    let before = b.points.iter().filter(|p| p.t < fold.t).map(|p| p.nu1).fold(f64::INFINITY, f64::min);
    let solver = Solver::new(&r.basis, &r.f, SolverOptions::default());
    let (lo, hi) = solver.bisect_lambda_star(None).map_err(|e| e.to_string())?;
    let mid = 0.5 * (lo + hi);
    let gap = rel(fold.lambda, mid).max(rel(lo, hi));
    check(
        violations.is_empty() && single && before > 0.0 && fold.nu1.abs() <= 1e-3 && gap <= 1e-3,
        format!(
            "fold λ {:.6} at t {:.4}, ν1 there {:.1e}, min ν1 before {before:.3e}, bisection [{lo:.6}, {hi:.6}], gap {gap:.1e}",
            fold.lambda, fold.t, fold.nu1
        ),
    )
}

fn classical_limit() -> Outcome {
    let basis = BallBasis::build(2, 1.0, 128, 512).unwrap();
    let f = Nonlinearity::exponential();
    let est = Solver::new(&basis, &f, SolverOptions::default())
        .estimate_lambda_star(&TraceOptions::default())
        .map_err(|e| e.to_string())?;
    let err = rel(est.fold_lambda, 2.0).max(rel(est.lo, 2.0)).max(rel(est.hi, 2.0));
    check(err <= 0.01, format!("fold λ {:.8}, bisection [{:.6}, {:.6}]", est.fold_lambda, est.lo, est.hi))
}

fn bounded_extremals() -> Outcome {
    let cases: Vec<(usize, f64)> = (2..=6).flat_map(|n| [0.3, 0.5, 0.7].map(|s| (n, s))).collect();
    let f = Nonlinearity::exponential();
    let changes: Vec<Result<f64, String>> = cases
        .par_iter()
        .map(|&(n, s)| {
            branch::extremal_refinement(n, s, &f, 128, SolverOptions::default(), &TraceOptions::default())
                .map(|r| r.relative_change())
                .map_err(|e| format!("n={n} s={s}: {e}"))
        })
        .collect();
    let mut worst = (0.0, 0, 0.0);
    for (&(n, s), c) in cases.iter().zip(changes) {
        let c = c?;
        if c > worst.0 {
            worst = (c, n, s);
        }
    }
    check(worst.0 < 0.02, format!("largest change of u*(0) under K 128→256: {:.2e} at n={} s={}", worst.0, worst.1, worst.2))
}

fn supercritical_envelope() -> Outcome {
    let (n, s) = (20, 0.5);
    let mu = regularity::decay_exponent_bound(n, s) - 0.1;
    let f = Nonlinearity::exponential();
    let mut consts = Vec::new();
    for k in [128, 256] {
        let basis = BallBasis::build(n, s, k, 4 * k).unwrap();
        let branch = Solver::new(&basis, &f, SolverOptions::default())
            .trace_to_fold(&TraceOptions::default())
            .map_err(|e| e.to_string())?;
        let p = branch.fold.as_ref().or(branch.points.last()).ok_or("empty branch")?;
        let u = |r: f64| basis.eval(&p.u, r);
        let c = regularity::decay_envelope(u, mu, 1e-3, 0.3);
        let holds = (0..=1000).all(|i| {
            let r = 1e-3 * 300f64.powf(i as f64 / 1000.0);
            u(r) <= c * r.powf(-mu) * (1.0 + 1e-3)
        });
        if !holds {
            return Err(format!("K={k}: envelope C={c:.4e} violated between samples"));
        }
        consts.push(c);
    }
    let change = rel(consts[0], consts[1]);
    check(change <= 0.1, format!("μ = {mu:.4}, C = {:.6e} (K=128), {:.6e} (K=256), change {change:.2e}", consts[0], consts[1]))
}

fn lemma_a_sign() -> Outcome {
    let mut margin = f64::INFINITY;
    let mut err: f64 = 0.0;
    for r in regularity::lemma_a_grid(&[2, 3, 5, 10], &[0.25, 0.5, 0.75]) {
        let r = r.map_err(|e| e.to_string())?;
        margin = margin.min(r.margin);
        err = err.max(r.a.relative_error());
    }
    check(margin > 0.0 && err <= 1e-4, format!("smallest margin {margin:.4}, largest relative error {err:.2e}"))
}

fn riesz_bound(r: &Reference) -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    let mut count = 0;
    for p in r.nontrivial() {
        let c = regularity::riesz_check(&r.basis, &p.u, p.lambda, &r.f, 20, 1e-3).map_err(|e| e.to_string())?;
        worst = worst.max(c.max_ratio);
        count += 1;
    }
    check(worst <= 1.0 + 1e-3, format!("max ratio {worst:.6} over {count} branch points"))
}

fn key_estimate(r: &Reference) -> Outcome {
    let star = r.branch.fold.as_ref().ok_or("no fold")?.lambda;
    let mut pts: Vec<&BranchPoint> = r.nontrivial().collect();
    pts.sort_by(|a, b| (a.lambda - star).abs().total_cmp(&(b.lambda - star).abs()));
    let spec = CutoffSpec { alpha: CutoffSpec::alpha_limit(3) - 0.1, epsilon: 0.01, r: 2.0 };
    let q = VerticalQuad::default();
    let vals: Vec<f64> = pts[..2]
        .iter()
        .map(|p| ExtensionField::new(&r.basis, p.u.clone()).unwrap().weighted_vrho_integral(&spec, &q))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let factor = vals[0].max(vals[1]) / vals[0].min(vals[1]);
    check(
        factor < 2.0,
        format!("α = {:.4}, integrals {:.6e} and {:.6e} at t = {:.4}, {:.4}, factor {factor:.4}", spec.alpha, vals[0], vals[1], pts[0].t, pts[1].t),
    )
}

fn stability_inequality(r: &Reference) -> Outcome {
    let stable: Vec<&BranchPoint> = r.nontrivial().filter(|p| p.nu1 > 0.0).collect();
    if stable.len() < 5 {
        return Err(format!("only {} stable points", stable.len()));
    }
    let spec = CutoffSpec { alpha: 1.0, epsilon: 0.05, r: 2.0 };
    let mut worst = f64::INFINITY;
    for i in 0..5 {
        let p = stable[i * (stable.len() - 1) / 4];
        let (lhs, rhs) = ExtensionField::new(&r.basis, p.u.clone())
            .unwrap()
            .stability_weighted_inequality(&spec, &VerticalQuad::default())
            .map_err(|e| e.to_string())?;
        worst = worst.min((lhs - rhs) / rhs);
    }
    check(worst >= -1e-6, format!("smallest relative margin {worst:.4e} at 5 stable points"))
}

fn boundary_rate() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for s in [0.25, 0.5, 0.75] {
        let basis = BallBasis::build(3, s, 256, 1024).unwrap();
        let rate = regularity::boundary_decay_rate(&basis, &basis.torsion()).map_err(|e| e.to_string())?;
        let floor = (2.0 * s).min(1.0) - 0.05;
        ok &= rate >= floor;
        parts.push(format!("s={s}: {rate:.4} (floor {floor:.2})"));
    }
    check(ok, parts.join(", "))
}

fn monotonicity_and_decay(r: &Reference) -> Outcome {
    let slope = r.branch.points.iter().map(|p| branch::max_radial_slope(&r.basis, &p.u, 100)).fold(f64::NEG_INFINITY, f64::max);
    let floor = 0.9 * r.basis.eigenvalues()[0].sqrt();
    let mut rate = f64::INFINITY;
    for p in r.nontrivial() {
        let field = ExtensionField::new(&r.basis, p.u.clone()).unwrap();
        rate = rate.min(field.axis_decay_rate(1.0, 10.0).map_err(|e| e.to_string())?);
    }
    check(slope < 1e-8 && rate >= floor, format!("max ∂u/∂ρ {slope:.2e}, slowest y-decay rate {rate:.4} (floor {floor:.4})"))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let mut b = ConfigBuilder::new();
        b.apply_text("n=3\ns=0.5\nf=exp\nmodes=64\nt_max=2\nt_steps=21").unwrap();
        b.set("out_dir", dir.path().join(run).display().to_string()).unwrap();
        let cfg = b.build().unwrap();
        persist::run_branch(&cfg, &mut ZeroCache::in_memory()).map_err(|e| e.to_string())?;
        let csv = std::fs::read(cfg.out_dir.join("branch.csv")).unwrap();
        let json = std::fs::read(cfg.out_dir.join("summary.json")).unwrap();
        outputs.push((csv, json));
    }
    check(outputs[0] == outputs[1], format!("{} CSV bytes, {} JSON bytes", outputs[0].0.len(), outputs[0].1.len()))
}

fn main() {
    let start = Instant::now();
    let reference = Reference::new();
    let criteria: Vec<Criterion> = vec![
        ("1 spectral correctness", Box::new(spectral_correctness)),
        ("2 flux constant", Box::new(flux_constant)),
        ("3 energy identity", Box::new(energy_identity)),
        ("4 maximum principle", Box::new(max_principle)),
        ("5 branch and fold", Box::new(|| branch_and_fold(&reference))),
        ("6 classical limit", Box::new(classical_limit)),
        ("7 bounded extremals", Box::new(bounded_extremals)),
        ("8 supercritical decay envelope", Box::new(supercritical_envelope)),
        ("9 lemma A sign condition", Box::new(lemma_a_sign)),
        ("10 Riesz pointwise bound", Box::new(|| riesz_bound(&reference))),
        ("11 key weighted estimate", Box::new(|| key_estimate(&reference))),
        ("12 stability inequality", Box::new(|| stability_inequality(&reference))),
        ("13 boundary rate", Box::new(boundary_rate)),
        ("14 monotonicity and y-decay", Box::new(|| monotonicity_and_decay(&reference))),
        ("15 determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (name, run) in &criteria {
        let t0 = Instant::now();
        let outcome = run();
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS criterion {name} ({secs:.1} s): {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {name} ({secs:.1} s): {d}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed, {:.0} s total", criteria.len() - failed, start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
