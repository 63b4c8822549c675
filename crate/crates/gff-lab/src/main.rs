use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gff_core::conditioner::{AvoidanceSpec, ChainOptions, Conditioned};
use gff_core::gaussian::{sample_with_basis, BoxHarmonic, FieldParams, FieldState};
use gff_core::ising::{from_field, glauber_magnetization, IsingBoundary, IsingInstance};
use gff_core::lattice::{LatticeDomain, MesoGrid};
use gff_core::linalg::SineBasis;
use gff_core::observables::{grid_sign_and_interface, hole_scan, norm_profile, spin_correlation};
use gff_core::rng::Stream;
use gff_core::stats::iid_estimate;
use gff_lab::config::Config;
use gff_lab::experiments::{capacity_scan, dobrushin_json, rerun, run_experiment};
use gff_lab::io::{read_stream, StreamWriter};
use gff_lab::manifest::RunManifest;
use gff_lab::parse;
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "gfflab",
    version,
    about = "Conditioned lattice Gaussian free field experiments"
)]
struct Cli {
    /// Worker threads for parallel stages (results do not depend on it).
    #[arg(long, global = true, env = gff_lab::WORKERS_ENV)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct FieldArgs {
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long)]
    n: usize,
    /// Components per site.
    #[arg(long, default_value_t = 1)]
    spin: usize,
    #[arg(long, default_value_t = 0.0)]
    mass2: f64,
    /// Coupling in front of the Laplacian; defaults to 1/(2π) without mass and 1 with mass.
    #[arg(long)]
    g: Option<f64>,
    /// `box`, `disc:r`, `square:s` or `annulus:inner,outer`.
    #[arg(long)]
    shape: Option<String>,
}

impl FieldArgs {
    fn params(&self) -> Result<FieldParams> {
        Ok(match self.g {
            Some(g) => FieldParams::new(self.spin, self.mass2, g)?,
            None => FieldParams::with_default_coupling(self.spin, self.mass2)?,
        })
    }

    fn domain(&self, default_shape: &str) -> Result<Arc<LatticeDomain>> {
        let shape = parse::shape(self.shape.as_deref().unwrap_or(default_shape))?;
        Ok(Arc::new(match shape {
            Some(s) => LatticeDomain::build(self.d, self.n, s)?,
            None => LatticeDomain::full_box(self.d, self.n)?,
        }))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Observable {
    /// Mean and quantiles of |φ(x)| / log n at one site.
    Profile,
    /// Spin correlation against separation along the first axis.
    Spin,
    /// Popular-vote sign and minority fraction per frame.
    Sign,
    /// Hole indicator per frame for a shifted target set.
    Hole,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Primal,
    Dual,
    Equilibrium,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum IsingBc {
    Plus,
    Free,
}

#[derive(Subcommand)]
enum Command {
    /// Exact draws of the unconditioned field, written as a field stream.
    Sample {
        #[command(flatten)]
        field: FieldArgs,
        #[arg(long, default_value_t = 1)]
        count: u64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Gibbs sampling of the field conditioned to avoid a set at every site of the region.
    Condition {
        #[command(flatten)]
        field: FieldArgs,
        /// `ball:R`, `interval:a,b` or `halfline:b`.
        #[arg(long)]
        avoid: String,
        /// `zero`, `annulus:R` or `clamp:R`.
        #[arg(long, default_value = "zero")]
        bc: String,
        #[arg(long, default_value_t = 10_000)]
        sweeps: u64,
        #[arg(long, default_value_t = 200)]
        burnin: u64,
        #[arg(long, default_value_t = 10)]
        thin: u64,
        /// Largest per-axis index of the global mode moves (0 disables them).
        #[arg(long, default_value_t = 3)]
        mode_cutoff: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Observables over a stored field stream, as CSV on stdout.
    Observe {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        observable: Observable,
        /// Site as comma-separated coordinates (default: the origin).
        #[arg(long)]
        probe: Option<String>,
        /// Window half-width around 2 for the profile.
        #[arg(long, default_value_t = 0.5)]
        beta: f64,
        /// Largest separation for the spin correlation.
        #[arg(long, default_value_t = 8)]
        max_separation: usize,
        /// Box side exponent for the sign report.
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        /// Hole shift as a multiple of 2 log n, along the first coordinate.
        #[arg(long, default_value_t = 0.5)]
        shift: f64,
        /// Hole scan radius as a fraction of n.
        #[arg(long, default_value_t = 0.125)]
        radius: f64,
        #[arg(long, default_value = "ball:0.5")]
        target: String,
    },
    /// Relative capacity of a shape: CSV of (n, method, value, residual).
    Capacity {
        #[arg(long, default_value = "disc:0.25")]
        shape: String,
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value = "all")]
        method: Method,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Single-site uniqueness criterion as a JSON report.
    Dobrushin {
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long)]
        mass2: f64,
        #[arg(long)]
        avoid: String,
    },
    /// Origin magnetization of an Ising model with constant or field-derived couplings.
    Ising {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        d: usize,
        /// `const:J` or `from-field:PATH` (first frame unless --frame is given).
        #[arg(long)]
        coupling: String,
        #[arg(long, value_enum, default_value = "plus")]
        bc: IsingBc,
        #[arg(long, default_value_t = 1_000)]
        sweeps: u64,
        #[arg(long, default_value_t = 100)]
        burnin: u64,
        #[arg(long, default_value_t = 0)]
        frame: usize,
        /// Smallest admissible |field| for field-derived couplings.
        #[arg(long, default_value_t = 0.0)]
        r_min: f64,
        /// |field| assumed on boundary sites missing from the stored state.
        #[arg(long)]
        boundary_norm: Option<f64>,
        #[arg(long)]
        seed: u64,
    },
    /// Run a named experiment from a config file, or repeat one from its manifest.
    Experiment {
        #[arg(
            long,
            conflicts_with = "manifest",
            required_unless_present = "manifest"
        )]
        config: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    use std::io::Write;
    match writeln!(
        std::io::stdout().lock(),
        "{}",
        serde_json::to_string_pretty(v)?
    ) {
        // A closed pipe (`| head`) is not an error worth reporting.
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn site(dom: &LatticeDomain, probe: Option<&str>) -> Result<usize> {
    let Some(p) = probe else {
        return Ok(dom.origin());
    };
    let c: Vec<i64> = parse::list("probe", p)?;
    if c.len() != dom.d() {
        bail!("probe needs {} coordinates", dom.d());
    }
    dom.index(&c).context("probe outside the domain")
}

fn observe(states: &[FieldState], cmd: &Command) -> Result<String> {
    let Command::Observe {
        observable,
        probe,
        beta,
        max_separation,
        alpha,
        shift,
        radius,
        target,
        ..
    } = cmd
    else {
        unreachable!()
    };
    let dom = &states[0].domain;
    let mut out = String::new();
    match observable {
        Observable::Profile => {
            let x = site(dom, probe.as_deref())?;
            out.push_str("site,mean,se,q10,q50,q90,outside_window\n");
            for e in norm_profile(states, &[x], *beta)? {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    e.site,
                    e.estimate.mean,
                    e.estimate.se,
                    e.q10,
                    e.q50,
                    e.q90,
                    e.outside_window as u8
                ));
            }
        }
        Observable::Spin => {
            out.push_str("separation,mean,se,skipped\n");
            for s in 1..=*max_separation {
                let h = (s / 2) as i64;
                let (Some(x), Some(y)) = (dom.index(&[-h, 0, 0]), dom.index(&[s as i64 - h, 0, 0]))
                else {
                    break;
                };
                let c = spin_correlation(states, &[(x, y)])?;
                out.push_str(&format!(
                    "{s},{},{},{}\n",
                    c[0].estimate.mean, c[0].estimate.se, c[0].skipped
                ));
            }
        }
        Observable::Sign => {
            let grid = MesoGrid::build(dom, *alpha, &[0, 0])?;
            let bh = BoxHarmonic::new(dom.d(), grid.box_side, states[0].params, &[[0; 3]])?;
            out.push_str("frame,sign,minority_fraction,interface_edges,boxes\n");
            for (k, s) in states.iter().enumerate() {
                let r = grid_sign_and_interface(s, &grid, &bh)?;
                out.push_str(&format!(
                    "{k},{},{},{},{}\n",
                    r.sign,
                    r.minority_fraction,
                    r.interface.len(),
                    grid.len()
                ));
            }
        }
        Observable::Hole => {
            let n = dom.n() as f64;
            let avoid = parse::avoid(target)?;
            let mut t = vec![0.0; states[0].params.spin];
            t[0] = shift * 2.0 * n.ln();
            out.push_str("frame,hole\n");
            let mut hits = Vec::new();
            for (k, s) in states.iter().enumerate() {
                let h = hole_scan(s, dom.origin(), &t, radius * n, avoid)?;
                hits.push(h as u8 as f64);
                out.push_str(&format!("{k},{}\n", h as u8));
            }
            let e = iid_estimate(&hits);
            out.push_str(&format!("# frequency {} se {}\n", e.mean, e.se));
        }
    }
    Ok(out)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    gff_lab::configure_workers(cli.workers)?;
    match &cli.command {
        Command::Sample {
            field,
            count,
            seed,
            out,
        } => {
            let p = field.params()?;
            let dom = field.domain("box")?;
            let basis = SineBasis::new(dom.d(), dom.side(), p.g, p.m2);
            let mut w = StreamWriter::create(out)?;
            let base = Stream::new(*seed);
            for k in 0..*count {
                w.push(k, &sample_with_basis(p, &dom, &basis, base.split(k)))?;
            }
            let frames = w.frames();
            w.finish(json!({ "kind": "exact", "seed": seed, "count": count }))?;
            print_json(&json!({ "path": out, "frames": frames }))?;
        }
        Command::Condition {
            field,
            avoid,
            bc,
            sweeps,
            burnin,
            thin,
            mode_cutoff,
            seed,
            out,
        } => {
            let p = field.params()?;
            let dom = field.domain("disc:0.25")?;
            let avoid = parse::avoid(avoid)?;
            let bc = parse::boundary(bc)?;
            let options = ChainOptions {
                mode_cutoff: *mode_cutoff,
                ..ChainOptions::default()
            };
            let model = Conditioned::new(p, dom, &AvoidanceSpec::on_region(avoid), bc, options)?;
            let mut w = StreamWriter::create(out)?;
            let mut err = None;
            let summary = model.run_with(*sweeps, *burnin, *thin, Stream::new(*seed), |t, s| {
                if let Err(e) = w.push(t, s) {
                    err.get_or_insert(e);
                }
            })?;
            if let Some(e) = err {
                return Err(e.into());
            }
            let record = json!({
                "kind": "conditioned",
                "avoid": parse::avoid_to_string(&avoid),
                "bc": parse::boundary_to_string(&bc),
                "inner_n": model.inner_n(),
                "seed": seed,
                "sweeps": sweeps,
                "burn_in": burnin,
                "thin": thin,
                "summary": summary,
            });
            w.finish(record.clone())?;
            if summary.flagged {
                eprintln!("warning: mixing diagnostics flagged this chain");
            }
            print_json(&record)?;
        }
        cmd @ Command::Observe { input, .. } => {
            let (_, states) = read_stream(input)?;
            if states.is_empty() {
                bail!("{} holds no frames", input.display());
            }
            std::io::stdout().write_all(observe(&states, cmd)?.as_bytes())?;
        }
        Command::Capacity {
            shape,
            n,
            method,
            tol,
        } => {
            let shape =
                parse::shape(shape)?.context("capacity needs a shape, not the whole box")?;
            let methods: Vec<String> = match method {
                Method::Primal => vec!["primal".into()],
                Method::Dual => vec!["dual".into()],
                Method::Equilibrium => vec!["equilibrium".into()],
                Method::All => vec!["primal".into(), "dual".into(), "equilibrium".into()],
            };
            println!("n,method,value,residual");
            for r in capacity_scan(shape, &[*n], &methods, *tol)? {
                println!("{},{},{},{}", r.n, r.method, r.value, r.residual);
            }
        }
        Command::Dobrushin { d, mass2, avoid } => {
            print_json(&dobrushin_json(*d, *mass2, parse::avoid(avoid)?)?)?;
        }
        Command::Ising {
            n,
            d,
            coupling,
            bc,
            sweeps,
            burnin,
            frame,
            r_min,
            boundary_norm,
            seed,
        } => {
            let dom = Arc::new(LatticeDomain::full_box(*d, *n)?);
            let boundary = match bc {
                IsingBc::Plus => IsingBoundary::Plus,
                IsingBc::Free => IsingBoundary::Free,
            };
            let inst = match coupling.split_once(':') {
                Some(("const", j)) => IsingInstance::homogeneous(
                    dom,
                    j.parse().context("coupling constant")?,
                    boundary,
                )?,
                Some(("from-field", path)) => {
                    let (_, states) = read_stream(path.as_ref())?;
                    let s = states
                        .get(*frame)
                        .with_context(|| format!("frame {frame} not in {path}"))?;
                    let mut inst =
                        from_field(s, Some(dom), boundary_norm.unwrap_or(*r_min), *r_min)?;
                    inst.boundary = boundary;
                    inst
                }
                _ => bail!("coupling must be const:J or from-field:PATH"),
            };
            let m = glauber_magnetization(&inst, *sweeps, *burnin, *seed)?;
            print_json(&json!({ "magnetization": m, "min_coupling": inst.min_coupling() }))?;
        }
        Command::Experiment {
            config,
            manifest,
            seed,
            out,
        } => {
            let m = match (config, manifest) {
                (Some(path), _) => {
                    let text = std::fs::read_to_string(path)
                        .with_context(|| format!("reading {}", path.display()))?;
                    let mut c = Config::parse(&text)?;
                    if let Some(s) = seed {
                        c.set("seed", s.to_string());
                    }
                    run_experiment(&c, out)?
                }
                (None, Some(path)) => {
                    let m = RunManifest::from_json(&std::fs::read_to_string(path)?)?;
                    if seed.is_some() {
                        bail!("--seed cannot override a manifest");
                    }
                    rerun(&m, out)?
                }
                (None, None) => unreachable!("clap requires one of them"),
            };
            println!("{}", m.to_json()?);
        }
    }
    Ok(())
}
