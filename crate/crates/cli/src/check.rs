//! The acceptance suite behind `tflg check`: eleven checks over the
//! default configuration, from exact algebraic identities to the
//! experiment trend assertions. Heavy pipelines are computed once and
//! shared between checks through lazily initialized statics.

use std::fmt;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use tflg_core::dsignal::{gaussian_window, istft, stft, tf_shift, Signal, TFPoint};
use tflg_core::gabor::{GaborSystem, Lattice};
use tflg_core::localframe::{local_frame_bounds, subspace_frame_bounds, LocalSystem};
use tflg_core::numkernel::CMatrix;
use tflg_core::tfloc::{
    concentration, concentration_certificate, localization_op, projection_bound, DiskBoundary,
    Region,
};

use crate::boundsweep::{self, BoundsArtifacts};
use crate::config::RunConfig;
use crate::exp1::{self, Exp1Artifacts};
use crate::exp2::{self, Exp2Artifacts};
use crate::exp3::{self, Exp3Artifacts};
use crate::report::CheckItem;
use crate::table::{rng_stream, RunContext};

/// Outcome of one acceptance check.
pub struct CheckSummary {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for CheckSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(
            f,
            "{verdict} {} ({:.2} s): {}",
            self.name,
            self.elapsed.as_secs_f64(),
            self.detail
        )
    }
}

fn run_check(
    name: &'static str,
    body: impl FnOnce() -> anyhow::Result<(bool, String)>,
) -> CheckSummary {
    let start = Instant::now();
    let (passed, detail) = match body() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e:#}")),
    };
    CheckSummary {
        name,
        passed,
        detail,
        elapsed: start.elapsed(),
    }
}

fn failures(items: &[CheckItem]) -> Vec<String> {
    items
        .iter()
        .filter(|i| !i.passed)
        .map(|i| format!("{}: {}", i.name, i.detail))
        .collect()
}

fn exp1_artifacts() -> anyhow::Result<&'static Exp1Artifacts> {
    static CELL: OnceLock<Result<Exp1Artifacts, String>> = OnceLock::new();
    CELL.get_or_init(|| {
        let cfg = RunConfig::default();
        exp1::pipeline(cfg.l, &cfg.exp1, cfg.seed).map_err(|e| format!("{e:#}"))
    })
    .as_ref()
    .map_err(|e| anyhow::anyhow!("disk-cover pipeline failed: {e}"))
}

fn exp2_artifacts() -> anyhow::Result<&'static Exp2Artifacts> {
    static CELL: OnceLock<Result<Exp2Artifacts, String>> = OnceLock::new();
    CELL.get_or_init(|| {
        let cfg = RunConfig::default();
        exp2::pipeline(cfg.l, &cfg.exp2, cfg.seed).map_err(|e| format!("{e:#}"))
    })
    .as_ref()
    .map_err(|e| anyhow::anyhow!("ten-region pipeline failed: {e}"))
}

fn exp3_artifacts() -> anyhow::Result<&'static Exp3Artifacts> {
    static CELL: OnceLock<Result<Exp3Artifacts, String>> = OnceLock::new();
    CELL.get_or_init(|| {
        let cfg = RunConfig::default();
        exp3::pipeline(cfg.l, &cfg.exp3, cfg.seed).map_err(|e| format!("{e:#}"))
    })
    .as_ref()
    .map_err(|e| anyhow::anyhow!("overlap-sweep pipeline failed: {e}"))
}

fn bounds_artifacts() -> anyhow::Result<&'static BoundsArtifacts> {
    static CELL: OnceLock<Result<BoundsArtifacts, String>> = OnceLock::new();
    CELL.get_or_init(|| {
        let cfg = RunConfig::default();
        boundsweep::pipeline(cfg.l, &cfg.bounds, cfg.seed).map_err(|e| format!("{e:#}"))
    })
    .as_ref()
    .map_err(|e| anyhow::anyhow!("bound sweep failed: {e}"))
}

/// Sample counts of the default lattice restricted to the four disk
/// covers, against the expected values.
pub fn lattice_counts() -> CheckSummary {
    run_check("lattice counts", || {
        let start = Instant::now();
        let l = 480;
        let points = Lattice::new(l, 20, 20)?.points();
        let expected: [(f64, usize, usize); 4] =
            [(80.0, 45, 45), (100.0, 69, 81), (120.0, 109, 109), (140.0, 145, 145)];
        let mut counts = Vec::new();
        let mut ok = true;
        for (radius, lo, hi) in expected {
            let disk = Region::disk(l, TFPoint::new(0, 0), radius, DiskBoundary::Strict);
            let count = points.iter().filter(|&&z| disk.contains_point(z)).count();
            ok &= (lo..=hi).contains(&count);
            counts.push(count);
        }
        let elapsed = start.elapsed();
        let in_budget = elapsed < Duration::from_secs(1);
        Ok((
            ok && in_budget,
            format!(
                "counts {counts:?} expected [45, 69..=81, 109, 145] in {:.3} s",
                elapsed.as_secs_f64()
            ),
        ))
    })
}

fn max_identity_deviation(m: &CMatrix) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            let expected = if i == j {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            };
            worst = worst.max((m.get(i, j) - expected).norm());
        }
    }
    worst
}

/// Algebraic identities at full size: STFT inversion, the full-grid
/// localization operator, the tight frame operator, and canonical dual
/// reconstruction.
pub fn exactness() -> CheckSummary {
    run_check("exactness suite", || {
        let start = Instant::now();
        let l = 480;
        let tol = 1e-8;
        let window = gaussian_window(l);
        let mut rng = rng_stream(0, "check/exactness");
        let mut worst: Vec<(&str, f64)> = Vec::new();

        let mut stft_err = 0.0f64;
        for _ in 0..3 {
            let f = Signal::random_unit(l, &mut rng);
            let back = istft(&stft(&f, &window)?, &window)?;
            stft_err = stft_err.max(back.sub(&f).norm());
        }
        worst.push(("stft round trip", stft_err));

        let full = localization_op(&window, &Region::full(l))?;
        worst.push(("full-grid operator", max_identity_deviation(full.matrix())));

        let lattice = Lattice::new(l, 20, 20)?;
        let base = GaborSystem::new(window.clone(), lattice)?;
        let tight_sys = GaborSystem::new(base.tight_window()?, lattice)?;
        worst.push((
            "tight frame operator",
            max_identity_deviation(&tight_sys.frame_operator()),
        ));

        let dual_sys = GaborSystem::new(base.dual_window()?, lattice)?;
        let mut dual_err = 0.0f64;
        for _ in 0..3 {
            let f = Signal::random_unit(l, &mut rng);
            let recon = dual_sys.synthesis(&base.analysis(&f)?)?;
            dual_err = dual_err.max(recon.sub(&f).norm());
        }
        worst.push(("canonical dual reconstruction", dual_err));

        let elapsed = start.elapsed();
        let ok = worst.iter().all(|(_, e)| *e <= tol) && elapsed < Duration::from_secs(30);
        let listing: Vec<String> = worst
            .iter()
            .map(|(name, e)| format!("{name} {e:.2e}"))
            .collect();
        Ok((
            ok,
            format!("{} in {:.1} s", listing.join(", "), elapsed.as_secs_f64()),
        ))
    })
}

/// Truncation error strictly decreasing over the cover radii and small
/// at the largest cover, with the reference values reported alongside.
pub fn truncation_trend() -> CheckSummary {
    run_check("truncation error trend", || {
        let art = exp1_artifacts()?;
        let errors: Vec<f64> = art.rows.iter().map(|r| r.trunc_error).collect();
        let reference = [0.9650, 0.1105, 0.0194, 0.0031];
        let decreasing = errors.windows(2).all(|w| w[1] < w[0]);
        let small_tail = errors.last().is_some_and(|&e| e < 0.01);
        let in_budget = art.elapsed < Duration::from_secs(120);
        let shown: Vec<String> = errors.iter().map(|e| format!("{e:.4}")).collect();
        Ok((
            decreasing && small_tail && in_budget,
            format!(
                "errors [{}] vs reference {reference:?}, subspace dim {}, pipeline {:.1} s",
                shown.join(", "),
                art.n,
                art.elapsed.as_secs_f64()
            ),
        ))
    })
}

/// Iterative reconstruction converges geometrically at every cover, at a
/// rate bounded by the truncation error, faster for larger covers.
pub fn reconstruction() -> CheckSummary {
    run_check("reconstruction convergence", || {
        let art = exp1_artifacts()?;
        let mut problems = Vec::new();
        for row in &art.rows {
            if !(row.converged && row.final_error <= 1e-8) {
                problems.push(format!(
                    "radius {}: final error {:.2e} after {} iterations",
                    row.radius, row.final_error, row.iterations
                ));
            }
            if row.rate > row.trunc_error + 0.05 {
                problems.push(format!(
                    "radius {}: rate {:.4} above truncation error {:.4} + 0.05",
                    row.radius, row.rate, row.trunc_error
                ));
            }
        }
        let iters: Vec<usize> = art.rows.iter().map(|r| r.iterations).collect();
        if !iters.windows(2).all(|w| w[1] < w[0]) {
            problems.push(format!("iterations {iters:?} not decreasing"));
        }
        let in_budget = art.recon_elapsed < Duration::from_secs(60);
        if !in_budget {
            problems.push(format!(
                "reconstruction took {:.1} s",
                art.recon_elapsed.as_secs_f64()
            ));
        }
        let rates: Vec<String> = art.rows.iter().map(|r| format!("{:.4}", r.rate)).collect();
        Ok((
            problems.is_empty(),
            if problems.is_empty() {
                format!("iterations {iters:?}, rates [{}]", rates.join(", "))
            } else {
                problems.join("; ")
            },
        ))
    })
}

/// The concentration certificate agrees with the direct quadratic-form
/// test on every sampled signal and threshold.
pub fn certificate_equivalence() -> CheckSummary {
    run_check("concentration certificate equivalence", || {
        let art = exp1_artifacts()?;
        let mut rng = rng_stream(0, "check/certificate");
        let thresholds = [0.1, 0.25, 0.5, 0.75, 0.9];
        let signals = 100;
        let mut disagreements = 0;
        for _ in 0..signals {
            let f = Signal::random_unit(art.l, &mut rng);
            let conc = concentration(&art.op, &f)?;
            for &eps in &thresholds {
                let direct = conc >= 1.0 - eps;
                let cert = concentration_certificate(&art.eigen, &f, eps)?.holds;
                if direct != cert {
                    disagreements += 1;
                }
            }
        }
        Ok((
            disagreements == 0,
            format!(
                "{disagreements} disagreements over {signals} signals x {} thresholds",
                thresholds.len()
            ),
        ))
    })
}

/// Projection onto the leading eigenspace loses at most `c eps` of the
/// energy of every constructed concentrated signal.
pub fn projection_energy_bound() -> CheckSummary {
    run_check("projection energy bound", || {
        let art = exp1_artifacts()?;
        let mut rng = rng_stream(0, "check/projection");
        let rank = art.eigen.rank();
        let constants = [1.5, 2.0, 4.0];
        let signals = 50;
        let mut violations = 0;
        for _ in 0..signals {
            let head = rng.gen_range(3..=art.n);
            let spread = rng.gen_range(5..=40);
            let eta: f64 = rng.gen_range(1e-3..0.05);
            let mut coeffs = vec![Complex64::new(0.0, 0.0); art.l];
            fill_block(&mut coeffs[..head], (1.0 - eta).sqrt(), &mut rng);
            let tail_end = (head + spread).min(rank);
            fill_block(&mut coeffs[head..tail_end], eta.sqrt(), &mut rng);
            let f = Signal::new(art.eigen.vectors.matvec(&coeffs))?;
            for &c in &constants {
                if !projection_bound(&art.eigen, &f, c)?.holds {
                    violations += 1;
                }
            }
        }
        Ok((
            violations == 0,
            format!(
                "{violations} violations over {signals} signals x {} constants",
                constants.len()
            ),
        ))
    })
}

/// Scales a coefficient block of i.i.d. complex normals to the given
/// total norm.
fn fill_block(block: &mut [Complex64], norm: f64, rng: &mut impl Rng) {
    if block.is_empty() {
        return;
    }
    for c in block.iter_mut() {
        *c = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
    }
    let total: f64 = block.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if total > 0.0 {
        let scale = norm / total;
        for c in block.iter_mut() {
            *c *= scale;
        }
    }
}

/// Tail sums, decay envelopes, and the derived cover radius all hold.
pub fn bound_suite() -> CheckSummary {
    run_check("bound suite", || {
        let art = bounds_artifacts()?;
        let items = boundsweep::assertions(art);
        let failed = failures(&items);
        let passed = failed.is_empty();
        Ok((
            passed,
            if passed {
                format!(
                    "{} rows checked, decay max violation {:.2e}",
                    art.rows.len(),
                    art.decay_max_violation
                )
            } else {
                failed.join("; ")
            },
        ))
    })
}

/// Local frame bounds dominated by the truncation error on one side and
/// the full frame bounds on the other, and invariant under a random
/// time-frequency shift of the whole setup.
pub fn local_frame_invariance() -> CheckSummary {
    run_check("local frame bounds", || {
        let art = exp1_artifacts()?;
        let a = art.frame_bounds.lower;
        let b = art.frame_bounds.upper;
        let mut problems = Vec::new();
        let mut shown = Vec::new();
        for row in art.rows.iter().filter(|r| r.radius >= 100.0) {
            let floor = a * (1.0 - row.trunc_error).powi(2);
            shown.push(format!(
                "radius {}: [{:.4}, {:.4}] floor {:.4}",
                row.radius, row.lower, row.upper, floor
            ));
            if row.lower < floor - 1e-12 {
                problems.push(format!(
                    "radius {}: lower bound {:.6} below {:.6}",
                    row.radius, row.lower, floor
                ));
            }
            if row.upper > b + 1e-8 {
                problems.push(format!(
                    "radius {}: upper bound {:.6} above {:.6}",
                    row.radius, row.upper, b
                ));
            }
        }

        let row = art
            .rows
            .iter()
            .find(|r| r.radius >= 100.0)
            .ok_or_else(|| anyhow::anyhow!("no cover at radius 100 or beyond"))?;
        let cover = Region::disk(art.l, TFPoint::new(0, 0), row.radius, DiskBoundary::Strict);
        let ls = LocalSystem::restrict(&art.tight_system, &cover)?;
        let base = local_frame_bounds(&ls, &art.projector)?;

        let mut rng = rng_stream(0, "check/tf-shift");
        let shift = TFPoint::new(rng.gen_range(0..art.l), rng.gen_range(0..art.l));
        let basis = art.projector.basis();
        let shifted_cols: Vec<Signal> = (0..basis.cols())
            .map(|j| tf_shift(&Signal::new(basis.column(j)).expect("basis column"), shift))
            .collect();
        let shifted_basis = CMatrix::from_fn(art.l, basis.cols(), |i, j| {
            shifted_cols[j].get(i)
        });
        let shifted_atoms: Vec<Signal> =
            ls.atoms().iter().map(|g| tf_shift(g, shift)).collect();
        let moved = subspace_frame_bounds(&shifted_basis, &shifted_atoms)?;
        let drift = (moved.lower - base.lower)
            .abs()
            .max((moved.upper - base.upper).abs());
        if drift > 1e-8 {
            problems.push(format!(
                "bounds drift {drift:.2e} under shift ({}, {})",
                shift.x, shift.omega
            ));
        }

        let passed = problems.is_empty();
        Ok((
            passed,
            if passed {
                format!("{}; shift drift {drift:.2e}", shown.join("; "))
            } else {
                problems.join("; ")
            },
        ))
    })
}

/// Ten-region comparison: projection lowers the mean error, more overlap
/// with projection gives the best condition number, and the frame
/// algorithm converges in every cell.
pub fn quilted_frame_trends() -> CheckSummary {
    run_check("quilted frame trends", || {
        let art = exp2_artifacts()?;
        let cfg = RunConfig::default().exp2;
        let mut items = exp2::assertions(&cfg, art);
        items.push(CheckItem::new(
            "exp2 within runtime budget",
            art.elapsed < Duration::from_secs(600),
            format!("pipeline {:.1} s", art.elapsed.as_secs_f64()),
        ));
        let failed = failures(&items);
        let passed = failed.is_empty();
        let errors: Vec<String> = art
            .cells
            .iter()
            .map(|c| format!("{:.4}", c.mean_error))
            .collect();
        let conditions: Vec<String> = art
            .cells
            .iter()
            .map(|c| format!("{:.2}", c.condition))
            .collect();
        Ok((
            passed,
            if passed {
                format!(
                    "mean errors [{}], conditions [{}] in {:.0} s",
                    errors.join(", "),
                    conditions.join(", "),
                    art.elapsed.as_secs_f64()
                )
            } else {
                failed.join("; ")
            },
        ))
    })
}

/// Overlap sweep: projected error non-increasing in the margin and in
/// the eigenspace dimension, quilted error dips then grows.
pub fn overlap_sweep_trends() -> CheckSummary {
    run_check("overlap sweep trends", || {
        let art = exp3_artifacts()?;
        let mut items = exp3::assertions(art);
        items.push(CheckItem::new(
            "exp3 within runtime budget",
            art.elapsed < Duration::from_secs(600),
            format!("pipeline {:.1} s", art.elapsed.as_secs_f64()),
        ));
        let failed = failures(&items);
        let passed = failed.is_empty();
        let quilted: Vec<String> = art.rows.iter().map(|r| format!("{:.4}", r.quilted)).collect();
        Ok((
            passed,
            if passed {
                format!(
                    "quilted [{}] over margins, {} projected columns, {:.0} s",
                    quilted.join(", "),
                    art.eigen_counts.len(),
                    art.elapsed.as_secs_f64()
                )
            } else {
                failed.join("; ")
            },
        ))
    })
}

/// Two runs with the same configuration and seed write byte-identical
/// tables.
pub fn deterministic_outputs() -> CheckSummary {
    run_check("deterministic outputs", || {
        let cfg = RunConfig::default();
        let base = std::env::temp_dir().join(format!("tflg-determinism-{}", std::process::id()));
        let mut contents = Vec::new();
        for sub in ["a", "b"] {
            let dir = base.join(sub);
            std::fs::create_dir_all(&dir)?;
            let ctx = RunContext::new(&cfg, &dir);
            let report = boundsweep::run(&cfg, &ctx)?;
            let mut bytes = Vec::new();
            for table in &report.tables {
                let path = ctx.write_table(table)?;
                bytes.push((table.name().to_string(), std::fs::read(path)?));
            }
            contents.push(bytes);
        }
        let identical = contents[0] == contents[1];
        std::fs::remove_dir_all(&base).ok();
        let total: usize = contents[0].iter().map(|(_, b)| b.len()).sum();
        Ok((
            identical,
            if identical {
                format!(
                    "{} tables, {total} bytes, byte-identical across two runs",
                    contents[0].len()
                )
            } else {
                "tables differ between two identical runs".to_string()
            },
        ))
    })
}

/// Every check, in reporting order.
pub fn all() -> Vec<CheckSummary> {
    vec![
        lattice_counts(),
        exactness(),
        truncation_trend(),
        reconstruction(),
        certificate_equivalence(),
        projection_energy_bound(),
        bound_suite(),
        local_frame_invariance(),
        quilted_frame_trends(),
        overlap_sweep_trends(),
        deterministic_outputs(),
    ]
}
