mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use chaoslab::chaos::{moment_p_exact_with_budget, DEFAULT_MOMENT_BITS};
use chaoslab::forms::DEFAULT_NORM_BITS;
use chaoslab::lab::{BoundReport, Lab};
use chaoslab::search::{estimate_a1, exponent_sweep, maximize_ratio, SearchConfig, Strategy};
use chaoslab::{
    build_rm, fit_exponent, ksz_search, moment_p_mc, CoefficientTensor, MixedNormSpec,
    SparseMultilinearForm, VectorTensor,
};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use report::{Recorder, RunManifest};

const EXIT_VIOLATION: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;

/// Moments of multiple Rademacher sums, extremal multilinear forms and
/// Khinchin-type inequality checks.
#[derive(Parser, Debug)]
#[command(name = "chaoslab", version)]
struct Cli {
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Print a JSON report with a run manifest instead of text.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MomentModeArg {
    Exact,
    Mc,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Which {
    Multik,
    Theorem1,
    Mixed,
    Prop,
    Contraction,
    Kahane,
    Hilbert,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// L_p moment of the chaos with coefficients from a tensor file.
    Moment {
        tensor: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        #[arg(long, value_enum, default_value = "exact")]
        mode: MomentModeArg,
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Exact sup norm of a multilinear form file, with a maximizing vertex.
    Supnorm { form: PathBuf },
    /// Writes the recursive ±1 form R_m.
    Rm {
        #[arg(long)]
        m: usize,
        /// Form file to write; the form is printed when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Smallest-norm random ±1 form on the full n^m grid.
    Ksz {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 100)]
        budget: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Form file for the best form.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Checks one inequality on a tensor file; exits 1 on a violation.
    Bound {
        #[arg(long, value_enum)]
        which: Which,
        tensor: PathBuf,
        #[arg(long)]
        r: Option<f64>,
        /// Comma-separated exponents for `mixed`, innermost axis first.
        #[arg(long, value_delimiter = ',')]
        mixed: Vec<f64>,
        /// Treat the last axis as vector components of this length
        /// (`contraction`, `kahane`, `hilbert`).
        #[arg(long)]
        ambient: Option<usize>,
        #[arg(long, default_value_t = 200_000)]
        mc_samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Lower bound for the optimal constant from the last-index slices.
    Slices {
        #[arg(long)]
        form: PathBuf,
        #[arg(long)]
        r: f64,
    },
    /// Least-squares exponent of a two-column `n,value` CSV.
    Fit { csv: PathBuf },
    /// Maximizes ℓ_r / moment_p over coefficient tensors.
    Search {
        #[command(flatten)]
        search: SearchArgs,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 4)]
        restarts: u32,
        /// CSV of the trace (`step,ratio`).
        #[arg(long)]
        trace_csv: Option<PathBuf>,
    },
    /// Runs the search for each n and fits the growth exponent.
    Sweep {
        #[command(flatten)]
        search: SearchArgs,
        /// Comma-separated sizes.
        #[arg(long, value_delimiter = ',', required = true)]
        ns: Vec<usize>,
        /// CSV of the fitted points (`n,value`).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Smallest L_1/L_2 Khinchin ratio found over real vectors of length n.
    A1 {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 2000)]
        budget: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(clap::Args, Debug)]
struct SearchArgs {
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 1.0)]
    r: f64,
    #[arg(long, default_value_t = 1.0)]
    p: f64,
    #[arg(long, default_value = "sign-coordinate-ascent")]
    strategy: Strategy,
    #[arg(long, default_value_t = 1000)]
    budget: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Exact-enumeration caps, overridable through `CHAOSLAB_MAX_BITS`.
#[derive(Clone, Copy)]
struct Budgets {
    moment: u32,
    norm: u32,
    overridden: Option<u32>,
}

impl Budgets {
    fn from_env() -> Result<Self> {
        match std::env::var("CHAOSLAB_MAX_BITS") {
            Ok(v) => {
                let bits: u32 = v
                    .trim()
                    .parse()
                    .with_context(|| format!("CHAOSLAB_MAX_BITS = {v:?} is not a bit count"))?;
                if bits > 40 {
                    bail!("CHAOSLAB_MAX_BITS = {bits} exceeds 40");
                }
                Ok(Self {
                    moment: bits,
                    norm: bits,
                    overridden: Some(bits),
                })
            }
            Err(_) => Ok(Self {
                moment: DEFAULT_MOMENT_BITS,
                norm: DEFAULT_NORM_BITS,
                overridden: None,
            }),
        }
    }
}

/// A finished command: the JSON result, its text rendering and exit code.
struct Outcome {
    json: serde_json::Value,
    text: String,
    code: u8,
}

impl Outcome {
    fn ok<T: Serialize>(value: &T, text: String) -> Result<Self> {
        Ok(Self {
            json: serde_json::to_value(value)?,
            text,
            code: 0,
        })
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use chaoslab::Error as E;
    match err.downcast_ref::<chaoslab::Error>() {
        Some(E::BudgetExceeded { .. } | E::SizeLimit(_)) => EXIT_INFEASIBLE,
        _ => EXIT_INPUT,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INPUT);
        }
    }
    let budgets = match Budgets::from_env() {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_INPUT);
        }
    };
    let mut rec = Recorder::new(budgets.overridden);
    match run(cli.command, budgets, &mut rec) {
        Ok(out) => {
            let manifest = rec.manifest();
            let report = match write_sidecars(&manifest, &out.json) {
                Ok(report) => report,
                Err(e) => {
                    eprintln!("error: {e:#}");
                    return ExitCode::from(EXIT_INPUT);
                }
            };
            if cli.json {
                emit(&format!("{report}\n"));
            } else {
                emit(&out.text);
            }
            ExitCode::from(out.code)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Renders the JSON report and stores a copy beside every output file.
fn write_sidecars(manifest: &RunManifest, result: &serde_json::Value) -> Result<String> {
    let report = report::to_json(manifest, result)?;
    for output in &manifest.outputs {
        let path = report::sidecar_path(output);
        std::fs::write(&path, format!("{report}\n"))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(report)
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|()| out.flush());
}

fn read_tensor(rec: &mut Recorder, path: &Path) -> Result<CoefficientTensor> {
    let text = rec.read(path)?;
    CoefficientTensor::parse(&text)
        .map_err(|e| anyhow!(e).context(format!("parsing {}", path.display())))
}

fn read_form(rec: &mut Recorder, path: &Path) -> Result<SparseMultilinearForm> {
    let text = rec.read(path)?;
    SparseMultilinearForm::parse(&text)
        .map_err(|e| anyhow!(e).context(format!("parsing {}", path.display())))
}

fn fmt_opt<T: std::fmt::Display>(label: &str, v: &Option<T>) -> String {
    v.as_ref()
        .map_or_else(String::new, |v| format!("{label} = {v}\n"))
}

fn run(command: Command, budgets: Budgets, rec: &mut Recorder) -> Result<Outcome> {
    match command {
        Command::Moment {
            tensor,
            p,
            mode,
            samples,
            seed,
        } => {
            let a = read_tensor(rec, &tensor)?;
            let res = match mode {
                MomentModeArg::Exact => moment_p_exact_with_budget(&a, p, budgets.moment)?,
                MomentModeArg::Mc => {
                    rec.seed(seed);
                    moment_p_mc(&a, p, samples, seed)?
                }
            };
            let text = format!(
                "p = {}\nvalue = {}\n{}{}{}{}",
                res.p,
                res.value,
                fmt_opt("exact", &res.exact_power),
                fmt_opt("pattern_bits", &res.pattern_bits),
                fmt_opt("samples", &res.sample_count),
                fmt_opt("stderr", &res.stderr),
            );
            Outcome::ok(&res, text)
        }
        Command::Supnorm { form } => {
            let f = read_form(rec, &form)?;
            let cert = f.sup_norm_with_budget(budgets.norm)?;
            let mut text = format!(
                "norm = {}\nvertices_walked = {}\nwitness:\n",
                cert.value, cert.vertices_walked
            );
            for (j, row) in cert.witness.to_rows().iter().enumerate() {
                let signs: Vec<&str> = row.iter().map(|&s| if s > 0 { "+" } else { "-" }).collect();
                text.push_str(&format!("  x{} = {}\n", j + 1, signs.join(" ")));
            }
            Outcome::ok(&cert, text)
        }
        Command::Rm { m, out } => {
            let f = build_rm(m)?;
            let body = f.to_text();
            let text = match &out {
                Some(path) => {
                    rec.write(path, &body)?;
                    format!(
                        "wrote R_{m} ({} monomials) to {}\n",
                        f.len(),
                        path.display()
                    )
                }
                None => body,
            };
            Outcome::ok(&f, text)
        }
        Command::Ksz {
            m,
            n,
            budget,
            seed,
            out,
        } => {
            rec.seed(seed);
            let cert = ksz_search(m, n, budget, seed)?;
            if let Some(path) = &out {
                rec.write(path, &cert.form.to_text())?;
            }
            let text = format!(
                "m = {m}\nn = {n}\ncertified_norm = {}\nk_hat = {}\nbest_trial = {}\ntrials = {}\n",
                cert.certified_norm, cert.k_hat, cert.best_trial, cert.trials_run
            );
            Outcome::ok(&cert, text)
        }
        Command::Bound {
            which,
            tensor,
            r,
            mixed,
            ambient,
            mc_samples,
            seed,
        } => {
            let a = read_tensor(rec, &tensor)?;
            let lab = Lab {
                moment_bits: budgets.moment,
                mc_samples,
                seed,
            };
            let need_r = || r.ok_or_else(|| anyhow!("--r is required for {which:?}"));
            let vector = || -> Result<VectorTensor> {
                match ambient {
                    None => Ok(VectorTensor::from_scalar(&a)),
                    Some(d) => {
                        let (last, head) = a.dims().split_last().expect("order ≥ 1");
                        if *last != d || head.is_empty() {
                            bail!("--ambient {d} needs a tensor of order ≥ 2 whose last dimension is {d}");
                        }
                        Ok(VectorTensor::new(head.to_vec(), d, a.entries().to_vec())?)
                    }
                }
            };
            let rep: BoundReport = match which {
                Which::Multik => lab.verify_multik(&a)?,
                Which::Theorem1 => lab.verify_theorem1(&a, need_r()?)?,
                Which::Mixed => lab.verify_mixed(&a, &MixedNormSpec::new(mixed)?)?,
                Which::Prop => lab.verify_prop(&a, need_r()?)?,
                Which::Contraction => lab.verify_contraction(&vector()?)?,
                Which::Kahane => lab.verify_multiple_kahane(&vector()?, 1.0, 2.0)?,
                Which::Hilbert => lab.verify_hilbert_prop(&vector()?, need_r()?)?,
            };
            if rep
                .moment
                .as_ref()
                .is_some_and(|mu| mu.sample_count.is_some())
            {
                rec.seed(seed);
            }
            let mut text = format!(
                "lhs = {}\nrhs = {}\nconstant = {}\nexponent = {}\nratio = {}\nholds = {}\n",
                rep.lhs, rep.rhs, rep.constant_used, rep.exponent_used, rep.ratio, rep.holds
            );
            if let Some(ex) = &rep.exact {
                text.push_str(&format!(
                    "exact: lhs^{q} = {} <= rhs^{q} = {} : {}\n",
                    ex.lhs_power,
                    ex.rhs_power,
                    ex.holds,
                    q = ex.power
                ));
            }
            let mut out = Outcome::ok(&rep, text)?;
            if !rep.holds {
                out.code = EXIT_VIOLATION;
            }
            Ok(out)
        }
        Command::Slices { form, r } => {
            let f = read_form(rec, &form)?;
            let lab = Lab {
                moment_bits: budgets.moment,
                ..Lab::default()
            };
            let rep = lab.lower_bound_from_slices(&f, r)?;
            let s = rep.slices.as_ref().expect("slice reports carry slice data");
            let mut text = format!(
                "bound = {}\nL = {}\nM = {}\nceiling = {}\nslices = {}\n",
                rep.lhs, s.ell_sum, s.moment_sum, rep.rhs, s.slices
            );
            if let Some(root) = &s.exact_root {
                text.push_str(&format!(
                    "exact: bound^{} = {}/{}\n",
                    root.root, root.numerator, root.denominator
                ));
            }
            Outcome::ok(&rep, text)
        }
        Command::Fit { csv } => {
            let body = rec.read(&csv)?;
            let points =
                read_points(&body).with_context(|| format!("parsing {}", csv.display()))?;
            let fit = fit_exponent(&points)?;
            let text = format!(
                "slope = {}\nintercept = {}\nmax_residual = {}\npoints = {}\n",
                fit.slope,
                fit.intercept,
                fit.max_residual,
                fit.points.len()
            );
            Outcome::ok(&fit, text)
        }
        Command::Search {
            search,
            n,
            restarts,
            trace_csv,
        } => {
            rec.seed(search.seed);
            let mut cfg = search.config(n, budgets);
            cfg.restarts = restarts;
            let res = maximize_ratio(&cfg)?;
            if let Some(path) = &trace_csv {
                let rows = res.trace.iter().map(|(step, ratio)| (*step as f64, *ratio));
                rec.write(path, &two_column_csv(["step", "ratio"], rows)?)?;
            }
            let text = format!(
                "best_ratio = {}\nevaluations = {}\nbest_tensor:\n{}",
                res.best_ratio,
                res.evaluations,
                res.best_tensor.to_text()
            );
            Outcome::ok(&res, text)
        }
        Command::Sweep { search, ns, csv } => {
            rec.seed(search.seed);
            let fit = exponent_sweep(
                search.m,
                search.r,
                search.p,
                &ns,
                search.strategy,
                search.budget,
                search.seed,
            )?;
            if let Some(path) = &csv {
                rec.write(
                    path,
                    &two_column_csv(["n", "value"], fit.points.iter().copied())?,
                )?;
            }
            let text = format!(
                "slope = {}\nintercept = {}\nmax_residual = {}\npoints = {}\n",
                fit.slope,
                fit.intercept,
                fit.max_residual,
                fit.points.len()
            );
            Outcome::ok(&fit, text)
        }
        Command::A1 { n, budget, seed } => {
            rec.seed(seed);
            let res = estimate_a1(n, budget, seed)?;
            let text = format!(
                "ratio = {}\nvector = {:?}\n",
                res.best_ratio,
                res.best_tensor.entries()
            );
            Outcome::ok(&res, text)
        }
    }
}

impl SearchArgs {
    fn config(&self, n: usize, budgets: Budgets) -> SearchConfig {
        let mut cfg = SearchConfig::new(self.m, n, self.r, self.p, self.strategy);
        cfg.budget = self.budget;
        cfg.seed = self.seed;
        cfg.moment_bits = budgets.moment;
        cfg
    }
}

#[derive(serde::Deserialize)]
struct Point {
    n: f64,
    value: f64,
}

fn read_points(body: &str) -> Result<Vec<(f64, f64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    reader
        .deserialize::<Point>()
        .map(|row| Ok(row.map(|p| (p.n, p.value))?))
        .collect()
}

fn two_column_csv(header: [&str; 2], rows: impl IntoIterator<Item = (f64, f64)>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for (a, b) in rows {
        w.write_record([a.to_string(), b.to_string()])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}
