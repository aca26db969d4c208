//! Built-in verification suite behind `gwg verify`.

use gwg_core::assembly::{GlobalSystem, ProblemSpec};
use gwg_core::femspace::dim_p;
use gwg_core::mesh::{uniform_triangulation_with, Diagonal, Point, Rect};
use gwg_core::solver::{self, SolveError, SolveStats};
use gwg_core::weakops::{
    build_delta_w, build_weak_gradient, commuting_check, weak_gradient_identity_residual, LocalElement, LocalOperatorSet,
    QuadratureSet,
};
use gwg_core::ElementConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cases;
use crate::run::{Check, RunError};

/// Identity and solvability tolerance.
pub const IDENTITY_TOL: f64 = 1e-10;

/// The element tuples of the numerical study, each with its default `mu`.
pub fn reference_elements() -> [ElementConfig; 5] {
    [
        ElementConfig::new(1, 0, 1, 0, 0),
        ElementConfig::new(2, 1, 1, 0, 0),
        ElementConfig::new(2, 1, 1, 1, 1),
        ElementConfig::new(2, 1, 0, 1, 1),
        ElementConfig::new(2, 1, 0, 2, 2).with_mu(1.0),
    ]
}

/// Random counter-clockwise triangle with vertices in the unit square and
/// minimum angle above 15 degrees.
pub fn random_triangle(rng: &mut impl Rng) -> [Point; 3] {
    loop {
        let mut t: [Point; 3] = std::array::from_fn(|_| [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]);
        let cross = (t[1][0] - t[0][0]) * (t[2][1] - t[0][1]) - (t[1][1] - t[0][1]) * (t[2][0] - t[0][0]);
        if cross < 0.0 {
            t.swap(1, 2);
        }
        if min_angle(&t) > 15f64.to_radians() {
            return t;
        }
    }
}

fn min_angle(t: &[Point; 3]) -> f64 {
    (0..3)
        .map(|i| {
            let (a, b, c) = (t[i], t[(i + 1) % 3], t[(i + 2) % 3]);
            let u = [b[0] - a[0], b[1] - a[1]];
            let v = [c[0] - a[0], c[1] - a[1]];
            let cos = (u[0] * v[0] + u[1] * v[1]) / ((u[0] * u[0] + u[1] * u[1]).sqrt() * (v[0] * v[0] + v[1] * v[1]).sqrt());
            cos.clamp(-1.0, 1.0).acos()
        })
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityReport {
    pub evaluations: usize,
    pub max_residual: f64,
}

/// `(grad_w v, phi) = -(v0, div phi) + <vb, phi n>` for random weak functions
/// and random `phi` in `[P_s]^{2x2}`, `s = min(j, l)`. With `flip_correction`
/// the weak gradient is built with the boundary correction negated.
pub fn identity_residuals(
    elements: &[ElementConfig],
    triangles: usize,
    draws: usize,
    seed: u64,
    flip_correction: bool,
) -> IdentityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = IdentityReport { evaluations: 0, max_residual: 0.0 };
    for cfg in elements {
        let rules = QuadratureSet::new(cfg).expect("reference elements have quadrature");
        for _ in 0..triangles {
            let tri = random_triangle(&mut rng);
            let local = LocalElement::standalone(tri, cfg, &rules);
            let mut delta = build_delta_w(&local, cfg);
            if flip_correction {
                delta = -delta;
            }
            let gradient = build_weak_gradient(&local, cfg, &delta);
            let s = cfg.s();
            for _ in 0..draws {
                let v: Vec<f64> = (0..local.layout.velocity_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let phi: Vec<f64> = (0..4 * dim_p(s)).map(|_| rng.random_range(-1.0..1.0)).collect();
                let r = weak_gradient_identity_residual(&local, &gradient, s, &rules, &v, &phi).abs();
                report.max_residual = report.max_residual.max(r);
                report.evaluations += 1;
            }
        }
    }
    report
}

/// Largest `|(grad_w Qh w, phi) - (grad w, phi) - ((I - Q0) w, div phi)|` for a
/// cubic `w` over the basis tensors of `[P_s]^{2x2}`.
pub fn commuting_residual(elements: &[ElementConfig], seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // cubic, so every term is integrated exactly
    let w = |[x, y]: Point| [x * x * y + y * y * y, x * x * x - 2.0 * x * y];
    let gw = |[x, y]: Point| [[2.0 * x * y, x * x + 3.0 * y * y], [3.0 * x * x - 2.0 * y, -2.0 * x]];
    let mut worst: f64 = 0.0;
    for cfg in elements {
        let rules = QuadratureSet::new(cfg).expect("reference elements have quadrature");
        let local = LocalElement::standalone(random_triangle(&mut rng), cfg, &rules);
        let ops = LocalOperatorSet::build(&local, cfg);
        for r in commuting_check(&w, &gw, &local, &ops, cfg, &rules) {
            worst = worst.max(r.abs());
        }
    }
    worst
}

/// `|Q0 Q0 v - Q0 v|` for interior polynomials: projecting an interpolant
/// again reproduces its coefficients.
pub fn projection_idempotence(elements: &[ElementConfig], seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for cfg in elements {
        let rules = QuadratureSet::new(cfg).expect("reference elements have quadrature");
        let local = LocalElement::standalone(random_triangle(&mut rng), cfg, &rules);
        let u = |[x, y]: Point| [(3.0 * x).exp() * y, (x - y).cos()];
        let once = local.interpolate(&u, &rules);
        let again = local.interpolate(&|p| local.eval_interior(&once, p), &rules);
        let dk = 2 * local.layout.dk;
        for (a, b) in once[..dk].iter().zip(&again[..dk]) {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixReport {
    /// `max |K - K^T| / max |K|`
    pub asymmetry: f64,
    /// Most negative Rayleigh quotient of the velocity block, relative to its
    /// largest entry.
    pub velocity_min_rayleigh: f64,
    /// Same for the pressure stabilizer block.
    pub pressure_min_rayleigh: f64,
}

pub fn matrix_properties(cfg: &ElementConfig, n: usize, samples: usize, seed: u64) -> Result<MatrixReport, RunError> {
    let mesh = uniform_triangulation_with(n, n, Rect::UNIT, Diagonal::Backward)?;
    let system = GlobalSystem::assemble(&mesh, cfg, &cases::polynomial_case())?;
    let scale = system.matrix.max_abs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rayleigh = |m: &gwg_core::sparse::CsrMatrix| {
        let s = m.max_abs().max(f64::MIN_POSITIVE);
        (0..samples)
            .map(|_| {
                let v: Vec<f64> = (0..m.ncols).map(|_| rng.random_range(-1.0..1.0)).collect();
                let mv = m.matvec(&v);
                let num: f64 = v.iter().zip(&mv).map(|(a, b)| a * b).sum();
                let den: f64 = v.iter().map(|a| a * a).sum();
                num / (den * s)
            })
            .fold(f64::INFINITY, f64::min)
    };
    let velocity_min_rayleigh = rayleigh(&system.velocity_block());
    let pressure = system.pressure_block();
    let pressure_min_rayleigh = if pressure.max_abs() == 0.0 { 0.0 } else { rayleigh(&pressure) };
    Ok(MatrixReport { asymmetry: system.matrix.asymmetry() / scale, velocity_min_rayleigh, pressure_min_rayleigh })
}

/// Solves the polynomial case on an `n x n` mesh.
pub fn solve_reference(cfg: &ElementConfig, n: usize) -> Result<SolveStats, RunError> {
    let mesh = uniform_triangulation_with(n, n, Rect::UNIT, Diagonal::Backward)?;
    let (_, solution) = crate::run::assemble_and_solve(&mesh, cfg, &cases::polynomial_case())?;
    Ok(solution.stats)
}

/// Outcome of forcing a solve outside the admissible regime.
#[derive(Debug)]
pub struct RefusalReport {
    /// Error from the configuration check.
    pub config_error: Option<String>,
    /// Result of assembling and factoring anyway.
    pub forced: Result<SolveStats, RunError>,
}

/// `(2,1,1,0,2)` with `mu = 0`: pressure richer than the edge velocity without
/// the jump stabilizer.
pub fn refusal_probe(n: usize) -> RefusalReport {
    let cfg = ElementConfig::new(2, 1, 1, 0, 2).with_mu(0.0);
    let config_error = cfg.check_regime().err().map(|e| e.to_string());
    let forced = (|| {
        let mesh = uniform_triangulation_with(n, n, Rect::UNIT, Diagonal::Backward)?;
        let system = GlobalSystem::assemble(&mesh, &cfg, &ProblemSpec::clone(&cases::polynomial_case()))?;
        Ok(solver::solve(&system)?.stats)
    })();
    RefusalReport { config_error, forced }
}

pub fn run_all(draws: usize, seed: u64) -> Result<Vec<Check>, RunError> {
    let elements = reference_elements();
    let mut checks = Vec::new();

    let id = identity_residuals(&elements, 3, draws, seed, false);
    checks.push(Check::new(
        "weak gradient identity",
        id.max_residual <= IDENTITY_TOL,
        format!("max residual {:.2e} over {} draws", id.max_residual, id.evaluations),
    ));
    let mutant = identity_residuals(&elements, 1, 10, seed, true);
    checks.push(Check::new(
        "identity detects a sign-flipped correction",
        mutant.max_residual > 1e3 * IDENTITY_TOL,
        format!("max residual {:.2e}", mutant.max_residual),
    ));
    let comm = commuting_residual(&elements, seed);
    checks.push(Check::new("commuting identity", comm <= IDENTITY_TOL, format!("max residual {comm:.2e}")));
    let idem = projection_idempotence(&elements, seed);
    checks.push(Check::new("projection idempotence", idem <= 1e-12, format!("max change {idem:.2e}")));

    for cfg in &elements {
        let m = matrix_properties(cfg, 4, 20, seed)?;
        let ok = m.asymmetry <= 1e-13 && m.velocity_min_rayleigh > 0.0 && m.pressure_min_rayleigh >= -1e-13;
        checks.push(Check::new(
            format!("symmetry and semi-definiteness {cfg}"),
            ok,
            format!(
                "asymmetry {:.1e}, velocity Rayleigh min {:.2e}, pressure Rayleigh min {:.2e}",
                m.asymmetry, m.velocity_min_rayleigh, m.pressure_min_rayleigh
            ),
        ));
    }
    for cfg in &elements {
        let stats = solve_reference(cfg, 8)?;
        checks.push(Check::new(
            format!("solvability {cfg}"),
            stats.regularized_pivots == 0 && stats.relative_residual <= solver::RESIDUAL_TOL,
            format!("{} regularized pivots, residual {:.1e}", stats.regularized_pivots, stats.relative_residual),
        ));
    }
    let probe = refusal_probe(8);
    let forced = match &probe.forced {
        Err(RunError::Solve(SolveError::Singular { .. })) => "factorization reports singular".to_string(),
        Err(e) => format!("forced solve failed: {e}"),
        Ok(s) => format!("forced solve succeeded with {} regularized pivots", s.regularized_pivots),
    };
    checks.push(Check::new(
        "regime refusal (2,1,1,0,2), mu = 0",
        probe.config_error.is_some(),
        format!("{}; {forced}", probe.config_error.as_deref().unwrap_or("accepted")),
    ));
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_triangles_are_shape_regular_and_counter_clockwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let t = random_triangle(&mut rng);
            let cross = (t[1][0] - t[0][0]) * (t[2][1] - t[0][1]) - (t[1][1] - t[0][1]) * (t[2][0] - t[0][0]);
            assert!(cross > 0.0);
            assert!(min_angle(&t) > 15f64.to_radians());
        }
    }

    #[test]
    fn sign_flip_breaks_identity() {
        let elements = reference_elements();
        assert!(identity_residuals(&elements, 2, 5, 1, false).max_residual <= IDENTITY_TOL);
        assert!(identity_residuals(&elements, 2, 5, 1, true).max_residual > 1e3 * IDENTITY_TOL);
    }

    #[test]
    fn refusal_probe_reports_regime_error() {
        let probe = refusal_probe(2);
        assert!(probe.config_error.unwrap().contains("n <= j"));
    }

    #[test]
    fn full_suite_passes() {
        let checks = run_all(10, 5).unwrap();
        assert!(checks.iter().all(|c| c.passed), "{checks:#?}");
    }
}
