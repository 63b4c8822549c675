//! Named experiment pipelines. Each has a typed entry point (used directly by
//! the acceptance suite) and a config-driven wrapper that writes tables,
//! plot files and a JSON summary under a run directory.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use gff_core::capacity::{dual_ratio, equilibrium_capacity, primal_capacity};
use gff_core::conditioner::{
    estimate_log_avoid_probability, AisOptions, Avoid, AvoidanceSpec, BoundaryCondition,
    ChainOptions, Conditioned,
};
use gff_core::gaussian::{sample_with_basis, BoxHarmonic, FieldParams};
use gff_core::ising::{from_field, glauber_magnetization};
use gff_core::lattice::{box_side_for, LatticeDomain, MesoGrid, Shape};
use gff_core::linalg::SineBasis;
use gff_core::observables::{grid_sign_and_interface, hole_scan, spin_correlation};
use gff_core::rng::Stream;
use gff_core::stats::{fitted_slope, iid_estimate, Estimate};
use gff_core::uniqueness::{dobrushin_k, find_r0};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Config, Resolved};
use crate::error::{value_err, CoreContext, LabError, Result};
use crate::io::StreamWriter;
use crate::manifest::RunManifest;
use crate::parse;
use crate::table::{emit_plotdata, histogram, PlotKind, Table};

pub const EXPERIMENTS: &[&str] = &[
    "repulsion",
    "massive-flatness",
    "no-hole",
    "freezing",
    "phase-transition",
    "capacity",
    "dobrushin",
];

fn domain(d: usize, n: usize, shape: Option<Shape>) -> Result<Arc<LatticeDomain>> {
    let dom = match shape {
        Some(s) => LatticeDomain::build(d, n, s),
        None => LatticeDomain::full_box(d, n),
    };
    Ok(Arc::new(dom.ctx("lattice")?))
}

/// Independent seed for one `(stage, index)` pair of a run.
fn sub_seed(seed: u64, stage: u64, index: u64) -> u64 {
    let s = Stream::new(seed).split(stage).split(index);
    let mut r = s.rng(0, 0);
    let lo = (r.open01() * 4_294_967_296.0) as u64;
    let hi = (r.open01() * 4_294_967_296.0) as u64;
    (hi << 32) | lo
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

// ---------------------------------------------------------------- repulsion

/// Chain settings shared by the conditioned-field experiments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainSetup {
    pub d: usize,
    pub params: FieldParams,
    pub avoid: Avoid,
    pub shape: Option<Shape>,
    pub bc: BoundaryCondition,
    pub sweeps: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub options: ChainOptions,
}

impl ChainSetup {
    fn model(&self, dom: &Arc<LatticeDomain>) -> Result<Conditioned> {
        Conditioned::new(
            self.params,
            dom.clone(),
            &AvoidanceSpec::on_region(self.avoid),
            self.bc,
            self.options,
        )
        .ctx("conditioner")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepulsionRow {
    pub n: usize,
    /// `E|φ(0)|` with an autocorrelation-aware error.
    pub origin_norm: Estimate,
    /// `E|φ(0)| / log n`.
    pub ratio: f64,
    pub ratio_se: f64,
    pub tau: f64,
    pub mh_acceptance: Option<f64>,
    pub flagged: bool,
}

/// Origin norm of the conditioned field for each size. With `stream_dir`
/// set, retained states go to `stream_n{n}.gffs` there.
pub fn repulsion_scan(
    setup: &ChainSetup,
    sizes: &[usize],
    seed: u64,
    stream_dir: Option<&Path>,
) -> Result<Vec<RepulsionRow>> {
    sizes
        .par_iter()
        .map(|&n| {
            let dom = domain(setup.d, n, setup.shape)?;
            let model = setup.model(&dom)?;
            let stream = Stream::new(seed).split(n as u64);
            let mut writer = match stream_dir {
                Some(dir) => Some(StreamWriter::create(&dir.join(format!("stream_n{n}.gffs")))?),
                None => None,
            };
            let mut io_err = None;
            let s = model
                .run_with(setup.sweeps, setup.burn_in, setup.thin, stream, |t, st| {
                    if let Some(w) = writer.as_mut() {
                        if let Err(e) = w.push(t, st) {
                            io_err.get_or_insert(e);
                        }
                    }
                })
                .ctx("conditioned run")?;
            if let Some(e) = io_err {
                return Err(e);
            }
            if let Some(w) = writer {
                w.finish(json!({ "n": n, "seed": seed, "sweeps": setup.sweeps, "burn_in": setup.burn_in, "thin": setup.thin }))?;
            }
            let ln = (n as f64).ln();
            Ok(RepulsionRow {
                n,
                origin_norm: s.origin_norm,
                ratio: s.origin_norm.mean / ln,
                ratio_se: s.origin_norm.se / ln,
                tau: s.tau_origin,
                mh_acceptance: s.mh_acceptance,
                flagged: s.flagged,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepulsionVerdict {
    pub strictly_increasing: bool,
    /// Least-squares slope of `E|φ(0)|/log n` against `log n`.
    pub slope: f64,
    pub passed: bool,
}

pub fn repulsion_verdict(rows: &[RepulsionRow]) -> RepulsionVerdict {
    let strictly_increasing = rows.windows(2).all(|w| w[1].ratio > w[0].ratio);
    let x: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    let slope = fitted_slope(&x, &y);
    RepulsionVerdict {
        strictly_increasing,
        slope,
        passed: strictly_increasing && slope > 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlatnessVerdict {
    /// Largest over smallest `E|φ(0)|`.
    pub spread: f64,
    pub passed: bool,
}

pub fn flatness_verdict(rows: &[RepulsionRow], tolerance: f64) -> FlatnessVerdict {
    let m: Vec<f64> = rows.iter().map(|r| r.origin_norm.mean).collect();
    let lo = m.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = m.iter().cloned().fold(0.0, f64::max);
    let spread = hi / lo;
    FlatnessVerdict {
        spread,
        passed: spread < 1.0 + tolerance,
    }
}

fn repulsion_table(rows: &[RepulsionRow]) -> Table {
    let mut t = Table::new(&[
        ("n", "lattice size"),
        ("value", "mean |phi(0)| / log n under the conditioning"),
        ("se", "standard error of value"),
        ("mean", "mean |phi(0)|"),
        ("mean_se", "standard error of mean"),
        (
            "tau",
            "integrated autocorrelation time of |phi(0)| in sweeps",
        ),
        (
            "mh_acceptance",
            "acceptance rate of Metropolis site updates (nan when unused)",
        ),
        ("flagged", "1 when mixing diagnostics flagged the chain"),
    ]);
    for r in rows {
        t.push(vec![
            r.n.to_string(),
            fmt(r.ratio),
            fmt(r.ratio_se),
            fmt(r.origin_norm.mean),
            fmt(r.origin_norm.se),
            fmt(r.tau),
            fmt(r.mh_acceptance.unwrap_or(f64::NAN)),
            (r.flagged as u8).to_string(),
        ]);
    }
    t
}

// ------------------------------------------------------------------ no-hole

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoleSetup {
    pub spin: usize,
    pub m2: f64,
    /// `|t| = shift · 2 log n`, along the first coordinate.
    pub shift: f64,
    pub target: Avoid,
    /// Scan radius as a fraction of `n`.
    pub radius: f64,
    pub draws: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HoleRow {
    pub n: usize,
    /// `|t| / log n`.
    pub shift_ratio: f64,
    pub holes: u64,
    pub draws: u64,
    pub frequency: Estimate,
}

/// Frequency of a hole around the origin over exact draws on the full box.
pub fn hole_frequencies(setup: &HoleSetup, sizes: &[usize], seed: u64) -> Result<Vec<HoleRow>> {
    let p = FieldParams::with_default_coupling(setup.spin, setup.m2).ctx("field parameters")?;
    sizes
        .par_iter()
        .map(|&n| {
            let dom = domain(2, n, None)?;
            let basis = SineBasis::new(2, dom.side(), p.g, p.m2);
            let ln = (n as f64).ln();
            let mut t = vec![0.0; setup.spin];
            t[0] = setup.shift * 2.0 * ln;
            let base = Stream::new(seed).split(n as u64);
            let mut hits = Vec::with_capacity(setup.draws as usize);
            for k in 0..setup.draws {
                let s = sample_with_basis(p, &dom, &basis, base.split(k));
                let hole = hole_scan(&s, dom.origin(), &t, setup.radius * n as f64, setup.target)
                    .ctx("hole scan")?;
                hits.push(hole as u8 as f64);
            }
            let frequency = iid_estimate(&hits);
            Ok(HoleRow {
                n,
                shift_ratio: t[0] / ln,
                holes: hits.iter().sum::<f64>() as u64,
                draws: setup.draws,
                frequency,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HoleVerdict {
    pub decreasing: bool,
    pub last_frequency: f64,
    pub ceiling: f64,
    pub passed: bool,
}

pub fn hole_verdict(rows: &[HoleRow], ceiling: f64) -> HoleVerdict {
    let decreasing = rows
        .windows(2)
        .all(|w| w[1].frequency.mean < w[0].frequency.mean);
    let last = rows.last().map(|r| r.frequency.mean).unwrap_or(f64::NAN);
    HoleVerdict {
        decreasing,
        last_frequency: last,
        ceiling,
        passed: decreasing && last <= ceiling,
    }
}

// ----------------------------------------------------------------- freezing

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreezeSetup {
    pub n: usize,
    pub shape: Option<Shape>,
    /// Radius of the ball (vector field) and half-width of the interval (scalar field).
    pub radius: f64,
    pub sweeps: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub box_side: usize,
    /// Separation at which the spin correlation is judged.
    pub separation: usize,
}

impl FreezeSetup {
    pub fn for_size(n: usize, shape: Option<Shape>) -> Self {
        let sep = (n as f64).sqrt().round() as usize;
        FreezeSetup {
            n,
            shape,
            radius: 1.0,
            sweeps: 2_100,
            burn_in: 100,
            thin: 20,
            box_side: box_side_for(n, 0.5),
            separation: sep,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FreezeResult {
    /// `(separation, E[σ(x)·σ(y)])` along the first axis, for the vector field.
    pub correlations: Vec<(usize, Estimate)>,
    pub target_correlation: Estimate,
    /// Minority-box fraction per retained scalar draw.
    pub minority: Vec<f64>,
    pub boxes: usize,
    /// Fraction of draws with at most 10% minority boxes.
    pub frozen_fraction: f64,
}

fn axis_pair(dom: &LatticeDomain, s: usize) -> Option<(usize, usize)> {
    let h = (s / 2) as i64;
    let x = dom.index(&[-h, 0, 0])?;
    let y = dom.index(&[s as i64 - h, 0, 0])?;
    (dom.in_region(x) && dom.in_region(y)).then_some((x, y))
}

pub fn freezing(setup: &FreezeSetup, seed: u64) -> Result<FreezeResult> {
    let dom = domain(2, setup.n, setup.shape)?;
    let options = ChainOptions::default();
    let vector = ChainSetup {
        d: 2,
        params: FieldParams::massless(2),
        avoid: Avoid::Ball {
            radius: setup.radius,
        },
        shape: setup.shape,
        bc: BoundaryCondition::DirichletZero,
        sweeps: setup.sweeps,
        burn_in: setup.burn_in,
        thin: setup.thin,
        options,
    };
    let scalar = ChainSetup {
        params: FieldParams::massless(1),
        avoid: Avoid::Interval {
            a: -setup.radius,
            b: setup.radius,
        },
        ..vector
    };
    let (vec_states, scalar_states) = rayon::join(
        || {
            vector
                .model(&dom)?
                .run(
                    setup.sweeps,
                    setup.burn_in,
                    setup.thin,
                    Stream::new(seed).split(1),
                )
                .ctx("vector run")
        },
        || {
            scalar
                .model(&dom)?
                .run(
                    setup.sweeps,
                    setup.burn_in,
                    setup.thin,
                    Stream::new(seed).split(2),
                )
                .ctx("scalar run")
        },
    );
    let (vec_states, _) = vec_states?;
    let (scalar_states, _) = scalar_states?;
    let seps: Vec<usize> = (1..=2 * setup.separation)
        .filter(|&s| axis_pair(&dom, s).is_some())
        .collect();
    let pairs: Vec<(usize, usize)> = seps.iter().map(|&s| axis_pair(&dom, s).unwrap()).collect();
    let corr = spin_correlation(&vec_states, &pairs).ctx("spin correlation")?;
    let correlations: Vec<(usize, Estimate)> = seps
        .iter()
        .zip(&corr)
        .map(|(&s, c)| (s, c.estimate))
        .collect();
    let target_correlation = correlations
        .iter()
        .find(|(s, _)| *s == setup.separation)
        .map(|c| c.1)
        .ok_or_else(|| value_err("run.separation", "separation does not fit in the region"))?;
    let grid = MesoGrid::with_side(&dom, setup.box_side, &[0, 0]).ctx("grid")?;
    let bh = BoxHarmonic::new(2, setup.box_side, FieldParams::massless(1), &[[0; 3]])
        .ctx("box harmonic")?;
    let minority: Vec<f64> = scalar_states
        .iter()
        .map(|s| grid_sign_and_interface(s, &grid, &bh).map(|r| r.minority_fraction))
        .collect::<gff_core::Result<_>>()
        .ctx("sign report")?;
    let frozen =
        minority.iter().filter(|&&f| f <= 0.1).count() as f64 / minority.len().max(1) as f64;
    Ok(FreezeResult {
        correlations,
        target_correlation,
        minority,
        boxes: grid.len(),
        frozen_fraction: frozen,
    })
}

// --------------------------------------------------------- phase transition

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseSetup {
    pub m2: f64,
    pub r: f64,
    pub sweeps: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub glauber_sweeps: u64,
    pub glauber_burn_in: u64,
}

impl Default for PhaseSetup {
    fn default() -> Self {
        PhaseSetup {
            m2: 1.0,
            r: 3.0,
            sweeps: 1_100,
            burn_in: 100,
            thin: 50,
            glauber_sweeps: 300,
            glauber_burn_in: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseRow {
    pub n: usize,
    /// Origin magnetization of the sign model over annulus-clamped draws.
    pub plus_magnetization: Estimate,
    /// Mean sign of `φ(0)` under zero boundary values.
    pub zero_sign: Estimate,
    pub plus_ok: bool,
    pub zero_ok: bool,
}

pub fn phase_transition(setup: &PhaseSetup, sizes: &[usize], seed: u64) -> Result<Vec<PhaseRow>> {
    let p = FieldParams::with_default_coupling(1, setup.m2).ctx("field parameters")?;
    let avoid = Avoid::Interval {
        a: -setup.r,
        b: setup.r,
    };
    sizes
        .par_iter()
        .map(|&n| {
            let dom = domain(2, n, None)?;
            let chain = |bc| ChainSetup {
                d: 2,
                params: p,
                avoid,
                shape: None,
                bc,
                sweeps: setup.sweeps,
                burn_in: setup.burn_in,
                thin: setup.thin,
                options: ChainOptions::default(),
            };
            let clamped = chain(BoundaryCondition::ClampAnnulus { level: setup.r }).model(&dom)?;
            let (states, _) = clamped
                .run(
                    setup.sweeps,
                    setup.burn_in,
                    setup.thin,
                    Stream::new(seed).split(n as u64).split(1),
                )
                .ctx("clamped run")?;
            let mut mags = Vec::with_capacity(states.len());
            for (k, st) in states.iter().enumerate() {
                let inst = from_field(st, Some(dom.clone()), setup.r, setup.r).ctx("sign model")?;
                let m = glauber_magnetization(
                    &inst,
                    setup.glauber_sweeps,
                    setup.glauber_burn_in,
                    sub_seed(seed, n as u64, k as u64),
                )
                .ctx("glauber")?;
                mags.push(m.mean);
            }
            let zero = chain(BoundaryCondition::DirichletZero).model(&dom)?;
            let (zstates, _) = zero
                .run(
                    setup.sweeps,
                    setup.burn_in,
                    setup.thin,
                    Stream::new(seed).split(n as u64).split(2),
                )
                .ctx("zero run")?;
            let signs: Vec<f64> = zstates
                .iter()
                .map(|s| s.at(dom.origin())[0].signum())
                .collect();
            let plus = iid_estimate(&mags);
            let zs = iid_estimate(&signs);
            Ok(PhaseRow {
                n,
                plus_magnetization: plus,
                zero_sign: zs,
                plus_ok: plus.mean > 0.9,
                zero_ok: zs.mean.abs() <= 4.0 * zs.se.max(f64::MIN_POSITIVE),
            })
        })
        .collect()
}

// ----------------------------------------------------------------- capacity

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CapacityRow {
    pub n: usize,
    pub method: String,
    pub value: f64,
    /// Primal: complementarity residual. Equilibrium: relative CG residual.
    /// Dual: relative gap to the primal energy.
    pub residual: f64,
}

pub fn capacity_scan(
    shape: Shape,
    sizes: &[usize],
    methods: &[String],
    tol: f64,
) -> Result<Vec<CapacityRow>> {
    for m in methods {
        if !["primal", "dual", "equilibrium"].contains(&m.as_str()) {
            return Err(value_err("run.methods", format!("unknown method `{m}`")));
        }
    }
    let per_n: Vec<Vec<CapacityRow>> = sizes
        .par_iter()
        .map(|&n| {
            let mut rows = Vec::new();
            let want = |m: &str| methods.iter().any(|x| x == m);
            let primal = if want("primal") || want("dual") {
                Some(primal_capacity(shape, n, tol).ctx("obstacle problem")?)
            } else {
                None
            };
            if let (true, Some(p)) = (want("primal"), &primal) {
                rows.push(CapacityRow {
                    n,
                    method: "primal".into(),
                    value: p.energy,
                    residual: p.residual,
                });
            }
            if want("dual") {
                let p = primal.as_ref().unwrap();
                let dom = LatticeDomain::build(2, n, shape).ctx("lattice")?;
                let v = dual_ratio(&dom, &p.charge(&dom)).ctx("dual ratio")?;
                rows.push(CapacityRow {
                    n,
                    method: "dual".into(),
                    value: v,
                    residual: (v - p.energy).abs() / p.energy,
                });
            }
            if want("equilibrium") {
                let e = equilibrium_capacity(shape, n).ctx("equilibrium charge")?;
                rows.push(CapacityRow {
                    n,
                    method: "equilibrium".into(),
                    value: e.value,
                    residual: e.relative_residual,
                });
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(per_n.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AisRow {
    pub n: usize,
    pub log_p: f64,
    pub se: f64,
    /// `-log P / log² n`.
    pub rate: f64,
    /// `(2/π) · capacity` at the same `n`.
    pub capacity_rate: f64,
    pub ratio: f64,
}

/// Avoidance probability on the region by annealed importance sampling,
/// next to the capacity prediction for the `log² n` rate.
pub fn ais_comparison(
    shape: Shape,
    avoid: Avoid,
    sizes: &[usize],
    seed: u64,
) -> Result<Vec<AisRow>> {
    sizes
        .par_iter()
        .map(|&n| {
            let dom = domain(2, n, Some(shape))?;
            let spec = AvoidanceSpec::on_region(avoid);
            let est = estimate_log_avoid_probability(
                FieldParams::massless(1),
                dom,
                &spec,
                AisOptions::default(),
                sub_seed(seed, 3, n as u64),
            )
            .ctx("annealed importance sampling")?;
            let cap = equilibrium_capacity(shape, n)
                .ctx("equilibrium charge")?
                .value;
            let ln = (n as f64).ln();
            let rate = -est.log_p / (ln * ln);
            let capacity_rate = 2.0 / std::f64::consts::PI * cap;
            Ok(AisRow {
                n,
                log_p: est.log_p,
                se: est.se,
                rate,
                capacity_rate,
                ratio: rate / capacity_rate,
            })
        })
        .collect()
}

// ---------------------------------------------------------------- dobrushin

/// Verdict of the single-site criterion plus the threshold radius.
pub fn dobrushin_json(d: usize, m2: f64, avoid: Avoid) -> Result<Value> {
    let (a, b) = avoid.scalar_cuts();
    let rep = dobrushin_k(d, m2, a, b).ctx("dobrushin criterion")?;
    let thr = find_r0(d, m2).ctx("threshold search")?;
    Ok(json!({
        "d": d,
        "mass2": m2,
        "avoid": parse::avoid_to_string(&avoid),
        "supVar": rep.sup_var,
        "argmax": rep.argmax,
        "K": rep.k,
        "verdict": rep.verdict,
        "multimodal": rep.multimodal,
        "R0": thr.r0,
        "R0AtBracketEnd": thr.at_bracket_end,
        "sufficientThreshold": thr.sufficient_threshold,
    }))
}

// ------------------------------------------------------------ config layer

type Schema = &'static [(&'static str, Option<&'static str>)];

const CHAIN_KEYS: Schema = &[
    ("experiment", None),
    ("seed", None),
    ("model.d", Some("2")),
    ("model.spin", Some("1")),
    ("model.g", Some("default")),
    ("model.avoid", Some("interval:-1,1")),
    ("model.shape", Some("disc:0.25")),
    ("model.bc", Some("zero")),
    ("run.sizes", Some("16,32,64")),
    ("run.sweeps", Some("40000")),
    ("run.burnin", Some("200")),
    ("run.thin", Some("1")),
    ("run.mode_cutoff", Some("3")),
    ("run.save_streams", Some("false")),
];

fn schema(experiment: &str) -> Result<Vec<(&'static str, Option<&'static str>)>> {
    let mut s: Vec<(&str, Option<&str>)> = Vec::new();
    match experiment {
        "repulsion" => {
            s.extend_from_slice(CHAIN_KEYS);
            s.push(("model.mass2", Some("0")));
        }
        "massive-flatness" => {
            s.extend_from_slice(CHAIN_KEYS);
            s.push(("model.mass2", Some("1")));
            s.push(("run.tolerance", Some("0.1")));
        }
        "no-hole" => s.extend_from_slice(&[
            ("experiment", None),
            ("seed", None),
            ("model.spin", Some("2")),
            ("model.mass2", Some("0")),
            ("model.target", Some("ball:0.5")),
            ("run.sizes", Some("64,128")),
            ("run.draws", Some("200")),
            ("run.shifts", Some("0.5")),
            ("run.radius", Some("0.125")),
            ("run.ceiling", Some("0.2")),
        ]),
        "freezing" => s.extend_from_slice(&[
            ("experiment", None),
            ("seed", None),
            ("model.n", Some("64")),
            ("model.shape", Some("square:0.5")),
            ("model.radius", Some("1")),
            ("run.sweeps", Some("2100")),
            ("run.burnin", Some("100")),
            ("run.thin", Some("20")),
            ("run.alpha", Some("0.5")),
            ("run.separation", Some("auto")),
        ]),
        "phase-transition" => s.extend_from_slice(&[
            ("experiment", None),
            ("seed", None),
            ("model.mass2", Some("1")),
            ("model.r", Some("3")),
            ("run.sizes", Some("16,32")),
            ("run.sweeps", Some("1100")),
            ("run.burnin", Some("100")),
            ("run.thin", Some("50")),
            ("run.glauber_sweeps", Some("300")),
            ("run.glauber_burnin", Some("50")),
        ]),
        "capacity" => s.extend_from_slice(&[
            ("experiment", None),
            ("seed", Some("0")),
            ("model.shape", Some("disc:0.25")),
            ("run.sizes", Some("64,128,256")),
            ("run.methods", Some("primal,dual,equilibrium")),
            ("run.tol", Some("1e-10")),
            ("run.ais_sizes", Some("")),
            ("run.ais_avoid", Some("halfline:0")),
        ]),
        "dobrushin" => s.extend_from_slice(&[
            ("experiment", None),
            ("model.d", Some("2")),
            ("model.mass2", Some("1")),
            ("model.r", Some("0.01")),
            ("model.avoid", Some("auto")),
        ]),
        other => return Err(LabError::UnknownExperiment(other.to_string())),
    }
    Ok(s)
}

fn flag(r: &Resolved, key: &str) -> Result<bool> {
    match r.str(key) {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        v => Err(value_err(key, format!("`{v}` is not a boolean"))),
    }
}

fn field_params(r: &Resolved) -> Result<FieldParams> {
    let spin: usize = r.parse("model.spin")?;
    let m2: f64 = r.parse("model.mass2")?;
    let p = match r.str("model.g") {
        "default" => FieldParams::with_default_coupling(spin, m2),
        _ => FieldParams::new(spin, m2, r.parse("model.g")?),
    };
    p.map_err(|e| value_err("model", e.to_string()))
}

fn chain_setup(r: &Resolved) -> Result<ChainSetup> {
    Ok(ChainSetup {
        d: r.parse("model.d")?,
        params: field_params(r)?,
        avoid: parse::avoid(r.str("model.avoid"))?,
        shape: parse::shape(r.str("model.shape"))?,
        bc: parse::boundary(r.str("model.bc"))?,
        sweeps: r.parse("run.sweeps")?,
        burn_in: r.parse("run.burnin")?,
        thin: r.parse("run.thin")?,
        options: ChainOptions {
            mode_cutoff: r.parse("run.mode_cutoff")?,
            ..ChainOptions::default()
        },
    })
}

/// Writes files under the run directory and keeps the manifest current.
struct RunDir {
    dir: PathBuf,
    manifest: RunManifest,
    started: Instant,
}

impl RunDir {
    fn write(&mut self, rel: &str, contents: &str) -> Result<()> {
        std::fs::write(self.dir.join(rel), contents)?;
        self.manifest.record(&self.dir, rel)?;
        self.manifest.write(&self.dir.join("manifest.json"))
    }

    fn table(&mut self, stem: &str, t: &Table, plot: Option<(PlotKind, &str)>) -> Result<()> {
        self.write(&format!("{stem}.csv"), &t.to_csv())?;
        if let Some((kind, title)) = plot {
            self.write(
                &format!("{stem}.{}.dat", kind.name()),
                &emit_plotdata(t, kind, title)?,
            )?;
        }
        Ok(())
    }

    fn json(&mut self, rel: &str, v: &Value) -> Result<()> {
        let mut s = serde_json::to_string_pretty(v)?;
        s.push('\n');
        self.write(rel, &s)
    }
}

/// Run a configured experiment into `out_dir`. The manifest is written
/// before any work starts and refreshed as each output lands.
pub fn run_experiment(config: &Config, out_dir: &Path) -> Result<RunManifest> {
    let name = config.experiment()?.to_string();
    let resolved = config.resolve(&schema(&name)?)?;
    let seed: Option<u64> = match resolved.values.get("seed") {
        Some(_) => Some(resolved.parse("seed")?),
        None => None,
    };
    std::fs::create_dir_all(out_dir)?;
    let mut run = RunDir {
        dir: out_dir.to_path_buf(),
        manifest: RunManifest::new(&name, resolved.to_json(), seed),
        started: Instant::now(),
    };
    run.manifest.write(&out_dir.join("manifest.json"))?;
    run.write(
        "config.txt",
        &Config {
            entries: resolved.values.clone(),
        }
        .to_text(),
    )?;
    let seed = seed.unwrap_or(0);
    let summary = match name.as_str() {
        "repulsion" | "massive-flatness" => {
            let setup = chain_setup(&resolved)?;
            let sizes: Vec<usize> = resolved.list("run.sizes")?;
            let streams = flag(&resolved, "run.save_streams")?.then_some(out_dir);
            let rows = repulsion_scan(&setup, &sizes, seed, streams)?;
            if let Some(dir) = streams {
                for n in &sizes {
                    for ext in ["gffs", "gffs.idx", "gffs.json"] {
                        let rel = format!("stream_n{n}.{ext}");
                        if dir.join(&rel).exists() {
                            run.manifest.record(dir, &rel)?;
                        }
                    }
                }
            }
            run.table(
                "results",
                &repulsion_table(&rows),
                Some((
                    PlotKind::Scaling,
                    "conditioned origin norm against lattice size",
                )),
            )?;
            let verdict = if name == "repulsion" {
                serde_json::to_value(repulsion_verdict(&rows))?
            } else {
                serde_json::to_value(flatness_verdict(&rows, resolved.parse("run.tolerance")?))?
            };
            json!({ "rows": rows, "verdict": verdict })
        }
        "no-hole" => {
            let sizes: Vec<usize> = resolved.list("run.sizes")?;
            let shifts: Vec<f64> = resolved.list("run.shifts")?;
            let spin: usize = resolved.parse("model.spin")?;
            let mut table = Table::new(&[
                ("n", "lattice size"),
                ("shift", "|t| / log n"),
                (
                    "value",
                    "frequency of a hole of the target set around the origin",
                ),
                ("se", "standard error of value"),
                ("holes", "draws with a hole"),
                ("draws", "number of draws"),
            ]);
            let mut all = Vec::new();
            for (k, &shift) in shifts.iter().enumerate() {
                let setup = HoleSetup {
                    spin,
                    m2: resolved.parse("model.mass2")?,
                    shift,
                    target: parse::avoid(resolved.str("model.target"))?,
                    radius: resolved.parse("run.radius")?,
                    draws: resolved.parse("run.draws")?,
                };
                let rows = hole_frequencies(&setup, &sizes, sub_seed(seed, 4, k as u64))?;
                for r in &rows {
                    table.push(vec![
                        r.n.to_string(),
                        fmt(r.shift_ratio),
                        fmt(r.frequency.mean),
                        fmt(r.frequency.se),
                        r.holes.to_string(),
                        r.draws.to_string(),
                    ]);
                }
                let verdict = hole_verdict(&rows, resolved.parse("run.ceiling")?);
                all.push(json!({ "shift": shift, "rows": rows, "verdict": verdict }));
            }
            run.table(
                "results",
                &table,
                Some((PlotKind::Scaling, "hole frequency against lattice size")),
            )?;
            json!({ "scans": all })
        }
        "freezing" => {
            let n: usize = resolved.parse("model.n")?;
            let mut setup = FreezeSetup::for_size(n, parse::shape(resolved.str("model.shape"))?);
            setup.radius = resolved.parse("model.radius")?;
            setup.sweeps = resolved.parse("run.sweeps")?;
            setup.burn_in = resolved.parse("run.burnin")?;
            setup.thin = resolved.parse("run.thin")?;
            setup.box_side = box_side_for(n, resolved.parse("run.alpha")?);
            if resolved.str("run.separation") != "auto" {
                setup.separation = resolved.parse("run.separation")?;
            }
            let res = freezing(&setup, seed)?;
            let mut corr = Table::new(&[
                ("x", "separation |x - y| along the first axis"),
                ("value", "spin correlation E[sigma(x) . sigma(y)]"),
                ("se", "standard error of value"),
            ]);
            for (s, e) in &res.correlations {
                corr.push(vec![s.to_string(), fmt(e.mean), fmt(e.se)]);
            }
            run.table(
                "spin_correlation",
                &corr,
                Some((PlotKind::Profile, "spin correlation against separation")),
            )?;
            let hist = histogram(
                &res.minority,
                10,
                "draws whose minority-box fraction falls in the bin",
            );
            run.table(
                "minority",
                &hist,
                Some((
                    PlotKind::Histogram,
                    "minority-box fraction of the scalar field",
                )),
            )?;
            json!({
                "separation": setup.separation,
                "target_correlation": res.target_correlation,
                "boxes": res.boxes,
                "frozen_fraction": res.frozen_fraction,
                "verdict": { "correlation_ok": res.target_correlation.mean >= 0.8, "minority_ok": res.frozen_fraction >= 0.9 },
            })
        }
        "phase-transition" => {
            let setup = PhaseSetup {
                m2: resolved.parse("model.mass2")?,
                r: resolved.parse("model.r")?,
                sweeps: resolved.parse("run.sweeps")?,
                burn_in: resolved.parse("run.burnin")?,
                thin: resolved.parse("run.thin")?,
                glauber_sweeps: resolved.parse("run.glauber_sweeps")?,
                glauber_burn_in: resolved.parse("run.glauber_burnin")?,
            };
            let rows = phase_transition(&setup, &resolved.list("run.sizes")?, seed)?;
            let mut t = Table::new(&[
                ("n", "lattice size"),
                (
                    "value",
                    "origin magnetization of the sign model, plus boundary",
                ),
                ("se", "standard error of value"),
                (
                    "zero_sign",
                    "mean sign of phi(0) under zero boundary values",
                ),
                ("zero_sign_se", "standard error of zero_sign"),
            ]);
            for r in &rows {
                t.push(vec![
                    r.n.to_string(),
                    fmt(r.plus_magnetization.mean),
                    fmt(r.plus_magnetization.se),
                    fmt(r.zero_sign.mean),
                    fmt(r.zero_sign.se),
                ]);
            }
            run.table(
                "results",
                &t,
                Some((PlotKind::Scaling, "magnetization against lattice size")),
            )?;
            let passed = rows.iter().all(|r| r.plus_ok && r.zero_ok);
            json!({ "rows": rows, "verdict": { "passed": passed } })
        }
        "capacity" => {
            let shape = parse::shape(resolved.str("model.shape"))?.ok_or_else(|| {
                value_err("model.shape", "capacity needs a shape, not the whole box")
            })?;
            let sizes: Vec<usize> = resolved.list("run.sizes")?;
            let methods: Vec<String> = resolved.list("run.methods")?;
            let rows = capacity_scan(shape, &sizes, &methods, resolved.parse("run.tol")?)?;
            let mut t = Table::new(&[
                ("n", "lattice size"),
                ("method", "solver"),
                (
                    "value",
                    "relative capacity with the 1/2 |grad f|^2 normalization",
                ),
                (
                    "residual",
                    "solver residual (dual: relative gap to the primal energy)",
                ),
            ]);
            for r in &rows {
                t.push(vec![
                    r.n.to_string(),
                    r.method.clone(),
                    fmt(r.value),
                    fmt(r.residual),
                ]);
            }
            run.table("results", &t, None)?;
            let ais_sizes: Vec<usize> = resolved.list("run.ais_sizes")?;
            let ais = if ais_sizes.is_empty() {
                Vec::new()
            } else {
                let rows = ais_comparison(
                    shape,
                    parse::avoid(resolved.str("run.ais_avoid"))?,
                    &ais_sizes,
                    seed,
                )?;
                let mut t = Table::new(&[
                    ("n", "lattice size"),
                    (
                        "value",
                        "-log P / log^2 n from annealed importance sampling",
                    ),
                    ("capacity_rate", "(2/pi) capacity"),
                    ("ratio", "value / capacity_rate"),
                    ("log_p", "log P"),
                    ("se", "standard error of log P"),
                ]);
                for r in &rows {
                    t.push(vec![
                        r.n.to_string(),
                        fmt(r.rate),
                        fmt(r.capacity_rate),
                        fmt(r.ratio),
                        fmt(r.log_p),
                        fmt(r.se),
                    ]);
                }
                run.table(
                    "ais",
                    &t,
                    Some((PlotKind::Scaling, "avoidance rate against lattice size")),
                )?;
                rows
            };
            json!({ "rows": rows, "ais": ais })
        }
        "dobrushin" => {
            let r: f64 = resolved.parse("model.r")?;
            let avoid = match resolved.str("model.avoid") {
                "auto" => Avoid::Interval { a: -r, b: r },
                s => parse::avoid(s)?,
            };
            dobrushin_json(
                resolved.parse("model.d")?,
                resolved.parse("model.mass2")?,
                avoid,
            )?
        }
        _ => unreachable!("schema accepted an unknown experiment"),
    };
    run.json("summary.json", &summary)?;
    run.manifest.wall_time_s = run.started.elapsed().as_secs_f64();
    run.manifest.write(&out_dir.join("manifest.json"))?;
    Ok(run.manifest)
}

/// Repeat the run described by a manifest into `out_dir`.
pub fn rerun(manifest: &RunManifest, out_dir: &Path) -> Result<RunManifest> {
    let config = Config::from_json(&manifest.parameters)?;
    run_experiment(&config, out_dir)
}
