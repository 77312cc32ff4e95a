//! Experiment 2: a ten-region partition of the phase plane quilted into
//! one global frame, comparing raw and eigenspace-projected atoms under
//! two cover sizes: mean reconstruction error of one operator pass,
//! condition numbers, and frame-algorithm convergence.

use std::time::{Duration, Instant};

use tflg_core::dsignal::{gaussian_window, Signal};
use tflg_core::gabor::Lattice;
use tflg_core::localframe::ReconTrace;
use tflg_core::quilt::{
    prepare, FamilyMember, NRule, NormRatios, PreparedFamily, ProjectionMode, RegionFamily,
};
use tflg_core::tfloc::Region;

use crate::config::{Exp2Config, RunConfig};
use crate::report::{CheckItem, ExpReport};
use crate::table::{rng_stream, Cell, RunContext};

/// Relative error the frame algorithm must reach for the convergence
/// assertion, independent of the configured stopping tolerance.
const ALG_TARGET: f64 = 1e-8;

/// Measurements for one (overlap, projection) cell of the comparison.
pub struct Exp2Cell {
    pub more_overlap: bool,
    pub projected: bool,
    pub mean_error: f64,
    pub condition: f64,
    pub iterations: usize,
    pub final_error: f64,
    pub converged: bool,
    pub trace: ReconTrace,
}

pub struct Exp2Artifacts {
    /// Cells ordered (less, raw), (less, projected), (more, raw),
    /// (more, projected).
    pub cells: Vec<Exp2Cell>,
    /// Eigenspace dimension resolved per region.
    pub dims: Vec<usize>,
    /// Subspace coefficient energy extremes over random unit signals.
    pub norm_ratios: NormRatios,
    pub elapsed: Duration,
}

/// The ten regions: two time halves crossed with five frequency bands,
/// indexed time-major to match the configured lattice order.
pub fn regions(l: usize) -> Vec<Region> {
    let mut out = Vec::with_capacity(10);
    for t in 0..2 {
        for band in 0..5 {
            out.push(
                Region::rect(
                    l,
                    t * l / 2,
                    (t + 1) * l / 2,
                    band * l / 5,
                    (band + 1) * l / 5,
                )
                .expect("half/band bounds are valid"),
            );
        }
    }
    out
}

fn family(l: usize, cfg: &Exp2Config, margin: usize) -> anyhow::Result<RegionFamily> {
    let window = gaussian_window(l);
    let members = regions(l)
        .into_iter()
        .zip(cfg.lattices.iter())
        .map(|(region, &[a, b])| {
            let cover = region.dilate(margin);
            Ok(FamilyMember {
                region,
                cover,
                lattice: Lattice::new(l, a, b)?,
                window: window.clone(),
                tighten: true,
                n_rule: NRule::Threshold(cfg.eigen_threshold),
                mode: ProjectionMode::Exact,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok(RegionFamily::new(members, window, 1)?)
}

fn mean_error(
    frame: &tflg_core::quilt::GlobalFrame,
    trials: usize,
    seed: u64,
    label: &str,
) -> anyhow::Result<f64> {
    let mut rng = rng_stream(seed, label);
    let mut sum = 0.0;
    for _ in 0..trials {
        let f = Signal::random_unit(frame.l(), &mut rng);
        sum += frame.apply_and_error(&f)?;
    }
    Ok(sum / trials as f64)
}

fn run_cell(
    prep: &PreparedFamily,
    more_overlap: bool,
    projected: bool,
    cfg: &Exp2Config,
    seed: u64,
) -> anyhow::Result<Exp2Cell> {
    let mode = if projected {
        ProjectionMode::Exact
    } else {
        ProjectionMode::None
    };
    let frame = prep.build_global(Some(mode), None)?;
    let overlap = if more_overlap { "more" } else { "less" };
    let proj = if projected { "with" } else { "without" };
    let mean = mean_error(
        &frame,
        cfg.trials,
        seed,
        &format!("exp2/error/{overlap}/{proj}"),
    )?;
    let condition = frame.condition_number()?;

    let mut rng = rng_stream(seed, &format!("exp2/alg/{overlap}/{proj}"));
    let f = Signal::random_unit(frame.l(), &mut rng);
    let (_, trace) = frame.frame_algorithm(&f, cfg.alg_max_iter, cfg.alg_tol)?;
    Ok(Exp2Cell {
        more_overlap,
        projected,
        mean_error: mean,
        condition,
        iterations: trace.iterates.len() - 1,
        final_error: *trace.iterates.last().expect("trace is nonempty"),
        converged: trace.converged,
        trace,
    })
}

pub fn pipeline(l: usize, cfg: &Exp2Config, seed: u64) -> anyhow::Result<Exp2Artifacts> {
    let start = Instant::now();
    let mut cells = Vec::with_capacity(4);
    let mut dims = Vec::new();
    let mut norm_ratios = NormRatios {
        min_ratio: 0.0,
        max_ratio: 0.0,
    };
    for more_overlap in [false, true] {
        let margin = if more_overlap {
            cfg.overlap_margin
        } else {
            cfg.less_overlap_margin
        };
        let prep = prepare(family(l, cfg, margin)?)?;
        if !more_overlap {
            dims = prep.resolved_dims(None);
            let mut rng = rng_stream(seed, "exp2/norm-equivalence");
            norm_ratios = prep.norm_equivalence_check(500, None, &mut rng);
        }
        for projected in [false, true] {
            cells.push(run_cell(&prep, more_overlap, projected, cfg, seed)?);
        }
    }
    Ok(Exp2Artifacts {
        cells,
        dims,
        norm_ratios,
        elapsed: start.elapsed(),
    })
}

pub fn assertions(cfg: &Exp2Config, art: &Exp2Artifacts) -> Vec<CheckItem> {
    let mut items = Vec::new();
    let cell = |more: bool, proj: bool| {
        art.cells
            .iter()
            .find(|c| c.more_overlap == more && c.projected == proj)
            .expect("all four cells present")
    };

    for more in [false, true] {
        let overlap = if more { "more" } else { "less" };
        items.push(CheckItem::new(
            format!("exp2 projection reduces mean error ({overlap} overlap)"),
            cell(more, true).mean_error < cell(more, false).mean_error,
            format!(
                "with projection {:.4} vs without {:.4}",
                cell(more, true).mean_error,
                cell(more, false).mean_error
            ),
        ));
    }

    let best = cell(true, true).condition;
    let others: Vec<f64> = art
        .cells
        .iter()
        .filter(|c| !(c.more_overlap && c.projected))
        .map(|c| c.condition)
        .collect();
    items.push(CheckItem::new(
        "exp2 more overlap with projection has smallest condition number",
        others.iter().all(|&c| best < c),
        format!("condition {best:.4} vs others {others:?}"),
    ));

    for c in &art.cells {
        let overlap = if c.more_overlap { "more" } else { "less" };
        let proj = if c.projected { "with" } else { "without" };
        items.push(CheckItem::new(
            format!("exp2 frame algorithm converges ({overlap} overlap, {proj} projection)"),
            c.converged && c.final_error <= ALG_TARGET,
            format!(
                "final error {:.3e} after {} iterations (target {ALG_TARGET:.0e})",
                c.final_error, c.iterations
            ),
        ));
    }

    let finite = art.norm_ratios.min_ratio.is_finite()
        && art.norm_ratios.min_ratio > 0.0
        && art.norm_ratios.max_ratio.is_finite();
    items.push(CheckItem::new(
        "exp2 subspace norm equivalence is positive and finite",
        finite,
        format!(
            "min {:.4}, max {:.4} over 500 signals (dims {:?}, trials {})",
            art.norm_ratios.min_ratio, art.norm_ratios.max_ratio, art.dims, cfg.trials
        ),
    ));

    items
}

pub fn run(cfg: &RunConfig, ctx: &RunContext) -> anyhow::Result<ExpReport> {
    let art = pipeline(cfg.l, &cfg.exp2, ctx.seed())?;

    let stamp = |t: &mut crate::table::ResultTable| {
        t.set_meta("experiment", "exp2");
        t.set_meta("l", cfg.l);
        t.set_meta("region_dims", format!("{:?}", art.dims).replace(", ", " "));
    };

    let mut errors = ctx.table("avg_error", &["overlap", "projection", "mean_error"]);
    stamp(&mut errors);
    let mut conditions = ctx.table("condition_numbers", &["overlap", "projection", "condition"]);
    stamp(&mut conditions);
    let mut alg = ctx.table(
        "frame_alg_convergence",
        &["overlap", "projection", "iteration", "error"],
    );
    stamp(&mut alg);

    for c in &art.cells {
        let overlap = if c.more_overlap { "more" } else { "less" };
        let proj = if c.projected { "with" } else { "without" };
        errors.push_row(vec![
            Cell::text(overlap),
            Cell::text(proj),
            Cell::num(c.mean_error),
        ]);
        conditions.push_row(vec![
            Cell::text(overlap),
            Cell::text(proj),
            Cell::num(c.condition),
        ]);
        for (i, e) in c.trace.iterates.iter().enumerate() {
            alg.push_row(vec![
                Cell::text(overlap),
                Cell::text(proj),
                Cell::int(i),
                Cell::num(*e),
            ]);
        }
    }

    let mut masks: Vec<(String, Region)> = regions(cfg.l)
        .into_iter()
        .enumerate()
        .map(|(i, r)| (format!("exp2_region_{i}"), r))
        .collect();
    for (i, r) in regions(cfg.l).into_iter().enumerate() {
        masks.push((
            format!("exp2_cover_less_{i}"),
            r.dilate(cfg.exp2.less_overlap_margin),
        ));
    }
    for (i, r) in regions(cfg.l).into_iter().enumerate() {
        masks.push((
            format!("exp2_cover_more_{i}"),
            r.dilate(cfg.exp2.overlap_margin),
        ));
    }

    let items = assertions(&cfg.exp2, &art);
    Ok(ExpReport {
        tables: vec![errors, conditions, alg],
        masks,
        items,
    })
}
