//! Experiment 1: how well signals from the leading eigenspace of a disk
//! localization operator are captured by a tight Gabor system truncated
//! to growing disk covers, and how fast the iterative reconstruction
//! from the truncated samples converges.

use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use tflg_core::dsignal::{gaussian_window, Signal, TFPoint};
use tflg_core::gabor::{FrameBounds, GaborSystem, Lattice};
use tflg_core::localframe::{
    iterative_reconstruct, local_frame_bounds, trunc_error, LocalMode, LocalSystem, ReconTrace,
};
use tflg_core::numkernel::CMatrix;
use tflg_core::tfloc::{
    eigensystem, localization_op, DiskBoundary, EigenSystem, EigenspaceProjector, LocalizationOp,
    ProjectorMode, Region, DEFAULT_KERNEL_TOL,
};

use crate::config::{Exp1Config, RunConfig};
use crate::report::{CheckItem, ExpReport};
use crate::table::{rng_stream, Cell, RunContext};

/// Everything measured for one cover radius.
#[derive(Debug, Clone)]
pub struct RadiusRow {
    pub radius: f64,
    pub count: usize,
    pub trunc_error: f64,
    pub lower: f64,
    pub upper: f64,
    pub iterations: usize,
    pub final_error: f64,
    pub rate: f64,
    pub converged: bool,
    pub trace: ReconTrace,
}

/// The fixed setup (operator, eigensystem, tight system) plus the
/// per-radius measurements; shared between the runner and the
/// acceptance checks.
pub struct Exp1Artifacts {
    pub l: usize,
    pub n: usize,
    pub op: LocalizationOp,
    pub eigen: EigenSystem,
    pub projector: EigenspaceProjector,
    pub tight_system: GaborSystem,
    pub frame_bounds: FrameBounds,
    pub rows: Vec<RadiusRow>,
    pub recon_elapsed: Duration,
    pub elapsed: Duration,
}

/// A unit-norm random signal in the column span of `basis`, with i.i.d.
/// standard complex normal coefficients.
pub fn random_span_signal(basis: &CMatrix, rng: &mut impl Rng) -> Signal {
    let coeffs: Vec<Complex64> = (0..basis.cols())
        .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let mut f = Signal::new(basis.matvec(&coeffs)).expect("basis has rows");
    let norm = f.norm();
    assert!(norm > 0.0, "span signal must be nonzero");
    f.scale(1.0 / norm);
    f
}

pub fn pipeline(l: usize, cfg: &Exp1Config, seed: u64) -> anyhow::Result<Exp1Artifacts> {
    let start = Instant::now();
    let window = gaussian_window(l);
    let region = Region::disk(
        l,
        TFPoint::new(0, 0),
        cfg.region_radius,
        DiskBoundary::Strict,
    );
    let op = localization_op(&window, &region)?;
    let eigen = eigensystem(&op, DEFAULT_KERNEL_TOL)?;
    let n = eigen.count_above(cfg.eigen_threshold);
    let projector = EigenspaceProjector::from_eigen(&eigen, n, ProjectorMode::Exact)?;

    let lattice = Lattice::new(l, cfg.lattice[0], cfg.lattice[1])?;
    let base = GaborSystem::new(window, lattice)?;
    let tight_system = GaborSystem::new(base.tight_window()?, lattice)?;
    let frame_bounds = tight_system.frame_bounds()?;

    let mut rows = Vec::new();
    let mut recon_elapsed = Duration::ZERO;
    for &radius in &cfg.cover_radii {
        let cover = Region::disk(l, TFPoint::new(0, 0), radius, DiskBoundary::Strict);
        let ls = LocalSystem::restrict(&tight_system, &cover)?;
        let count = ls.active().len();
        let err = trunc_error(&ls, &projector, LocalMode::Tight)?;
        let local = local_frame_bounds(&ls, &projector)?;

        let recon_start = Instant::now();
        let mut rng = rng_stream(seed, &format!("exp1/recon/radius-{radius}"));
        let truth = random_span_signal(projector.basis(), &mut rng);
        let samples = ls.analyze(&truth)?;
        let (_, trace) = iterative_reconstruct(
            &ls,
            &projector,
            &samples,
            LocalMode::Tight,
            Some(&truth),
            cfg.recon_max_iter,
            cfg.recon_tol,
        )?;
        recon_elapsed += recon_start.elapsed();

        rows.push(RadiusRow {
            radius,
            count,
            trunc_error: err,
            lower: local.lower,
            upper: local.upper,
            iterations: trace.iterates.len() - 1,
            final_error: *trace.iterates.last().expect("trace is nonempty"),
            rate: trace.rate,
            converged: trace.converged,
            trace,
        });
    }

    Ok(Exp1Artifacts {
        l,
        n,
        op,
        eigen,
        projector,
        tight_system,
        frame_bounds,
        rows,
        recon_elapsed,
        elapsed: start.elapsed(),
    })
}

/// Expected sample count when the default disk-and-lattice geometry is
/// configured; the radius-100 disk boundary is grazed by lattice points,
/// so that count is only pinned to a range.
fn expected_count(radius: f64) -> Option<(usize, usize)> {
    if radius == 80.0 {
        Some((45, 45))
    } else if radius == 100.0 {
        Some((69, 81))
    } else if radius == 120.0 {
        Some((109, 109))
    } else if radius == 140.0 {
        Some((145, 145))
    } else {
        None
    }
}

pub fn assertions(l: usize, cfg: &Exp1Config, art: &Exp1Artifacts) -> Vec<CheckItem> {
    let mut items = Vec::new();
    let errors: Vec<f64> = art.rows.iter().map(|r| r.trunc_error).collect();

    if l == 480 && cfg.region_radius == 80.0 && cfg.lattice == [20, 20] {
        for row in &art.rows {
            if let Some((lo, hi)) = expected_count(row.radius) {
                items.push(CheckItem::new(
                    format!("exp1 sample count at radius {}", row.radius),
                    (lo..=hi).contains(&row.count),
                    format!("count {} expected in [{lo}, {hi}]", row.count),
                ));
            }
        }
    }

    items.push(CheckItem::new(
        "exp1 truncation error strictly decreasing",
        errors.windows(2).all(|w| w[1] < w[0]),
        format!("errors {errors:?}"),
    ));
    let last = *errors.last().expect("at least one radius");
    items.push(CheckItem::new(
        "exp1 truncation error below 0.01 at largest cover",
        last < 0.01,
        format!("error {last:.6} at radius {}", art.rows.last().unwrap().radius),
    ));

    for row in &art.rows {
        items.push(CheckItem::new(
            format!("exp1 reconstruction at radius {} converged", row.radius),
            row.converged && row.final_error <= cfg.recon_tol,
            format!(
                "final error {:.3e} after {} iterations (tol {:.1e})",
                row.final_error, row.iterations, cfg.recon_tol
            ),
        ));
        items.push(CheckItem::new(
            format!("exp1 convergence rate at radius {} bounded", row.radius),
            row.rate <= row.trunc_error + 0.05,
            format!(
                "fitted rate {:.4} vs truncation error {:.4} + 0.05",
                row.rate, row.trunc_error
            ),
        ));
    }

    let iters: Vec<usize> = art.rows.iter().map(|r| r.iterations).collect();
    items.push(CheckItem::new(
        "exp1 larger covers converge in fewer iterations",
        iters.windows(2).all(|w| w[1] < w[0]),
        format!("iterations {iters:?}"),
    ));

    items
}

pub fn run(cfg: &RunConfig, ctx: &RunContext) -> anyhow::Result<ExpReport> {
    let art = pipeline(cfg.l, &cfg.exp1, ctx.seed())?;

    let mut counts = ctx.table(
        "counts_and_errors",
        &[
            "radius",
            "count",
            "trunc_error",
            "lower_bound",
            "upper_bound",
            "iterations",
            "final_error",
            "rate",
        ],
    );
    counts.set_meta("experiment", "exp1");
    counts.set_meta("l", art.l);
    counts.set_meta("subspace_dim", art.n);
    for row in &art.rows {
        counts.push_row(vec![
            Cell::num(row.radius),
            Cell::int(row.count),
            Cell::num(row.trunc_error),
            Cell::num(row.lower),
            Cell::num(row.upper),
            Cell::int(row.iterations),
            Cell::num(row.final_error),
            Cell::num(row.rate),
        ]);
    }

    let mut recon = ctx.table("recon_convergence", &["radius", "iteration", "error"]);
    recon.set_meta("experiment", "exp1");
    for row in &art.rows {
        for (i, e) in row.trace.iterates.iter().enumerate() {
            recon.push_row(vec![Cell::num(row.radius), Cell::int(i), Cell::num(*e)]);
        }
    }

    let mut masks = vec![(
        "exp1_region".to_string(),
        Region::disk(
            cfg.l,
            TFPoint::new(0, 0),
            cfg.exp1.region_radius,
            DiskBoundary::Strict,
        ),
    )];
    for &radius in &cfg.exp1.cover_radii {
        masks.push((
            format!("exp1_cover_{radius}"),
            Region::disk(cfg.l, TFPoint::new(0, 0), radius, DiskBoundary::Strict),
        ));
    }

    let items = assertions(cfg.l, &cfg.exp1, &art);
    Ok(ExpReport {
        tables: vec![counts, recon],
        masks,
        items,
    })
}
