use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::json;

use ule_lab::config::{sweep_grid, sweep_point, GeneratorKind, RunConfig, SweepRow};
use ule_lab::hull::{condition_a, hulls_isomorphic, maximalize, parse_chain_list, FrequencyChain, GroupElement};
use ule_lab::locreport::{dynloc_kernel, dynloc_report, envelope_ratio, ule_report, write_kernel_csv};
use ule_lab::sampling::{evaluate_at_exact, write_potential_csv};
use ule_lab::specops::{
    construct_dressed_potential, eigensystem, eigenvectors_json, match_eigenvalues, run_dressing,
    write_eigensystem_csv, Form,
};
use ule_lab::{Error, Result};

#[derive(Parser)]
#[command(name = "ule-lab", version, about = "Limit-periodic Schrödinger operator laboratory")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Frequency-chain predicates.
    #[command(subcommand)]
    Hull(HullCmd),
    /// Write the sampled potential as CSV.
    Potential(RunArgs),
    /// Diagonalize one window and write the eigensystem.
    Spectrum {
        #[command(flatten)]
        run: RunArgs,
        /// Also write every eigenvector as JSON.
        #[arg(long)]
        vectors: bool,
    },
    /// Construct the dressed potential and write the iteration trace.
    Dress(RunArgs),
    /// Uniform localization report.
    Ule(RunArgs),
    /// Dominating kernel and its exponential envelope.
    Dynloc(RunArgs),
    /// Summary over the (eps, N, t) grid.
    Sweep(RunArgs),
}

#[derive(Subcommand)]
enum HullCmd {
    Maximalize {
        #[arg(long)]
        chain: String,
        #[arg(long)]
        pattern: Option<String>,
        #[arg(long)]
        depth: Option<usize>,
    },
    Isomorphic {
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
        /// Growth pattern applied to both chains.
        #[arg(long)]
        pattern: Option<String>,
        #[arg(long)]
        pattern_a: Option<String>,
        #[arg(long)]
        pattern_b: Option<String>,
        #[arg(long, default_value_t = 8)]
        depth: usize,
    },
    ConditionA {
        #[arg(long)]
        chain: String,
        #[arg(long)]
        pattern: Option<String>,
    },
}

/// Config file plus overrides; flags win.
#[derive(Args, Clone, Default)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    chain: Option<String>,
    #[arg(long)]
    pattern: Option<String>,
    #[arg(long)]
    m: Option<u32>,
    /// LEMMA44 or POESCHEL.
    #[arg(long)]
    generator: Option<String>,
    /// Comma-separated couplings.
    #[arg(long)]
    eps: Option<String>,
    /// Comma-separated window sizes.
    #[arg(long = "N")]
    sizes: Option<String>,
    /// Comma-separated phase shifts.
    #[arg(long = "t", allow_hyphen_values = true)]
    shifts: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    offset: Option<i64>,
    #[arg(long)]
    k_layers: Option<usize>,
    #[arg(long)]
    poeschel_depth: Option<u32>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    floor: Option<f64>,
    #[arg(long)]
    margin: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    exact: bool,
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|x| x.trim().parse::<T>().map_err(|_| Error::Parse(format!("bad {what} entry {x:?}"))))
        .collect()
}

fn load_config(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?
        }
        None => RunConfig::default(),
    };
    if let Some(c) = &args.chain {
        cfg.chain.elements = parse_chain_list(c)?;
        cfg.chain.pattern = None;
    }
    if let Some(p) = &args.pattern {
        cfg.chain.pattern = Some(p.clone());
    }
    if let Some(m) = args.m {
        cfg.m = m;
    }
    if let Some(g) = &args.generator {
        cfg.generator = match g.to_ascii_uppercase().as_str() {
            "LEMMA44" => GeneratorKind::Lemma44,
            "POESCHEL" => GeneratorKind::Poeschel,
            other => return Err(Error::Parse(format!("unknown generator {other:?}"))),
        };
    }
    if let Some(e) = &args.eps {
        cfg.eps = parse_list(e, "eps")?;
    }
    if let Some(n) = &args.sizes {
        cfg.sizes = parse_list(n, "N")?;
    }
    if let Some(t) = &args.shifts {
        cfg.shifts = parse_list(t, "t")?;
    }
    cfg.offset = args.offset.unwrap_or(cfg.offset);
    cfg.k_layers = args.k_layers.unwrap_or(cfg.k_layers);
    cfg.poeschel_depth = args.poeschel_depth.unwrap_or(cfg.poeschel_depth);
    cfg.tol = args.tol.unwrap_or(cfg.tol);
    cfg.floor = args.floor.unwrap_or(cfg.floor);
    cfg.interior_margin = args.margin.or(cfg.interior_margin);
    cfg.max_iter = args.max_iter.unwrap_or(cfg.max_iter);
    if let Some(o) = &args.out {
        cfg.output_dir = o.clone();
    }
    cfg.exact |= args.exact;
    cfg.validate()?;
    Ok(cfg)
}

/// Creates `name` under the output directory.
fn create(cfg: &RunConfig, name: &str) -> Result<(PathBuf, BufWriter<fs::File>)> {
    let dir = Path::new(&cfg.output_dir);
    fs::create_dir_all(dir).map_err(|e| Error::InvalidInput(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    let file = fs::File::create(&path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    Ok((path, BufWriter::new(file)))
}

fn io(e: std::io::Error) -> Error {
    Error::InvalidInput(format!("write failed: {e}"))
}

fn write_csv(cfg: &RunConfig, name: &str, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<PathBuf> {
    let (path, mut w) = create(cfg, name)?;
    writeln!(w, "{}", cfg.csv_header()).map_err(io)?;
    body(&mut w).map_err(io)?;
    w.flush().map_err(io)?;
    Ok(path)
}

fn write_json(cfg: &RunConfig, name: &str, mut value: serde_json::Value) -> Result<PathBuf> {
    value["meta"] = cfg.meta();
    let (path, mut w) = create(cfg, name)?;
    serde_json::to_writer_pretty(&mut w, &value).map_err(|e| Error::InvalidInput(e.to_string()))?;
    writeln!(w).map_err(io)?;
    w.flush().map_err(io)?;
    Ok(path)
}

fn chain_arg(list: &str, pattern: Option<&str>) -> Result<FrequencyChain> {
    FrequencyChain::from_parts(parse_chain_list(list)?, pattern)
}

fn run_hull(cmd: HullCmd) -> Result<serde_json::Value> {
    match cmd {
        HullCmd::Maximalize { chain, pattern, depth } => {
            let c = chain_arg(&chain, pattern.as_deref())?;
            let m = maximalize(&c, depth.unwrap_or(c.depth()))?;
            Ok(json!({ "chain": m.elements(), "pattern": m.pattern().map(|p| p.to_string()) }))
        }
        HullCmd::Isomorphic { a, b, pattern, pattern_a, pattern_b, depth } => {
            let ca = chain_arg(&a, pattern_a.as_deref().or(pattern.as_deref()))?;
            let cb = chain_arg(&b, pattern_b.as_deref().or(pattern.as_deref()))?;
            Ok(serde_json::to_value(hulls_isomorphic(&ca, &cb, depth)?).expect("verdict serializes"))
        }
        HullCmd::ConditionA { chain, pattern } => {
            let c = chain_arg(&chain, pattern.as_deref())?;
            Ok(serde_json::to_value(condition_a(&c)?).expect("report serializes"))
        }
    }
}

fn first<T: Copy>(xs: &[T]) -> T {
    xs[0]
}

fn cmd_potential(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let series = cfg.series()?;
    let (n, t) = (first(&cfg.sizes), first(&cfg.shifts));
    let w = cfg.window(&series, 0.0, n, t, Form::Poeschel)?;
    let g = GroupElement::orbit_point(series.chain().clone(), t as i128);
    let rows = (0..n)
        .map(|j| {
            let site = cfg.offset + j as i64;
            let exact =
                if cfg.exact { Some(evaluate_at_exact(&series, &g, site as i128, cfg.layers())?) } else { None };
            Ok((site, exact, w.diagonal[j]))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(vec![write_csv(cfg, "potential.csv", |w| write_potential_csv(w, &rows))?])
}

fn cmd_spectrum(cfg: &RunConfig, vectors: bool) -> Result<Vec<PathBuf>> {
    let series = cfg.series()?;
    let w = cfg.window(&series, first(&cfg.eps), first(&cfg.sizes), first(&cfg.shifts), Form::Poeschel)?;
    let e = eigensystem(&w)?;
    let rates: Vec<f64> = ule_report(&e, cfg.floor).per_vector.iter().map(|v| v.r).collect();
    let mut out = vec![write_csv(cfg, "spectrum.csv", |w| write_eigensystem_csv(w, &e, &rates))?];
    if vectors {
        let value: serde_json::Value = serde_json::from_str(&eigenvectors_json(&e)).expect("valid json");
        out.push(write_json(cfg, "vectors.json", value)?);
    }
    Ok(out)
}

fn cmd_dress(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let series = cfg.series()?;
    let (eps, n) = (first(&cfg.eps), first(&cfg.sizes));
    let w = cfg.window(&series, 0.0, n, first(&cfg.shifts), Form::Poeschel)?;
    let d = run_dressing(w.offset, &w.diagonal, eps, &cfg.dressing(n))?;
    let path = write_json(cfg, "dress.json", serde_json::to_value(&d).expect("dressing serializes"))?;
    if !d.converged {
        // surfaces the failure with its exit code; the trace is already on disk
        construct_dressed_potential(w.offset, &w.diagonal, eps, &cfg.dressing(n))?;
    }
    if eps > 0.0 {
        // independent re-check of the written potential
        let e = eigensystem(&d.window())?;
        let targets: Vec<f64> = w.diagonal.iter().map(|x| x / eps).collect();
        let m = match_eigenvalues(&e, &targets, cfg.margin(n))?;
        if m.max_interior_mismatch > cfg.tol || m.unmatched_interior > 0 {
            return Err(Error::DressingNotConverged { iterations: d.iterations, mismatch: m.max_interior_mismatch });
        }
    }
    Ok(vec![path])
}

fn cmd_ule(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let series = cfg.series()?;
    let w = cfg.window(&series, first(&cfg.eps), first(&cfg.sizes), first(&cfg.shifts), Form::Poeschel)?;
    let e = eigensystem(&w)?;
    let report = ule_report(&e, cfg.floor);
    let mut value = serde_json::to_value(&report).expect("report serializes");
    value["certified_ratio"] = json!(envelope_ratio(&e, &report));
    Ok(vec![write_json(cfg, "ule.json", value)?])
}

fn cmd_dynloc(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let series = cfg.series()?;
    let n = first(&cfg.sizes);
    let w = cfg.window(&series, first(&cfg.eps), n, first(&cfg.shifts), Form::Poeschel)?;
    let e = eigensystem(&w)?;
    let kernel = dynloc_kernel(&e);
    let lo = n.saturating_sub(64) / 2;
    let report = dynloc_report(&e, &kernel, cfg.floor, &[0.0, 1.0, 10.0, 100.0], lo..lo + 64);
    Ok(vec![
        write_json(cfg, "dynloc.json", serde_json::to_value(&report).expect("report serializes"))?,
        write_csv(cfg, "kernel.csv", |w| write_kernel_csv(w, &kernel))?,
    ])
}

fn cmd_sweep(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let series = cfg.series()?;
    let rows = sweep_grid(cfg)
        .into_par_iter()
        .map(|(eps, n, t)| sweep_point(cfg, &series, eps, n, t))
        .collect::<Result<Vec<SweepRow>>>()?;
    let path = write_csv(cfg, "sweep.csv", |w| {
        writeln!(w, "eps,N,t,uniform_c,uniform_r,kernel_C,kernel_r,max_mismatch,iters")?;
        for r in &rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                r.eps, r.n, r.t, r.uniform_c, r.uniform_r, r.kernel_c, r.kernel_r, r.max_mismatch, r.iters
            )?;
        }
        Ok(())
    })?;
    Ok(vec![path])
}

fn run(cli: Cli) -> Result<serde_json::Value> {
    let written = match cli.cmd {
        Cmd::Hull(cmd) => return run_hull(cmd),
        Cmd::Potential(a) => cmd_potential(&load_config(&a)?)?,
        Cmd::Spectrum { run, vectors } => cmd_spectrum(&load_config(&run)?, vectors)?,
        Cmd::Dress(a) => cmd_dress(&load_config(&a)?)?,
        Cmd::Ule(a) => cmd_ule(&load_config(&a)?)?,
        Cmd::Dynloc(a) => cmd_dynloc(&load_config(&a)?)?,
        Cmd::Sweep(a) => cmd_sweep(&load_config(&a)?)?,
    };
    Ok(json!({ "written": written }))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = std::env::var("ULE_LAB_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // only fails if a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    match run(cli) {
        Ok(value) => {
            println!("{value}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{}", json!({ "error": err.kind(), "message": err.to_string(), "exit_code": err.exit_code() }));
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
