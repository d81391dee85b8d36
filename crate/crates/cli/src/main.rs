//! `quantlab` command-line driver.
//!
//! Exit codes: 0 success, 1 runtime error, 2 unreadable or invalid config,
//! 3 certification failure or a precondition of the requested check not
//! met (no density, coincident clusters).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use quantlab::config::{ConfigDocument, PD_REL_TOL};
use quantlab::prelude::*;
use serde_json::json;
use sha2::{Digest, Sha256};

type Outcome<T> = std::result::Result<T, Failure>;

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(
    name = "quantlab",
    version,
    about = "Quantization risk, Hessian and rate experiments"
)]
struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a rate experiment and write rates.csv, fit.json and plot.csv.
    Rates {
        config: PathBuf,
        /// Overrides the seed of the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the sufficient conditions that apply to the distribution.
    Conditions {
        config: PathBuf,
        /// Also write conditions.json into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Boundary-integral Hessian with its finite-difference check.
    Hessian {
        config: PathBuf,
        /// `optimal`, or a codebook such as `0.25;0.75` or `-0.5,0;0.5,0`.
        #[arg(long, default_value = "optimal", allow_hyphen_values = true)]
        at: String,
        #[arg(long, default_value_t = 1e-3)]
        fd_step: f64,
        /// Also write hessian.csv into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Risk and distance along the heavy-tail trajectory (0, n, n^2).
    Counterexample {
        #[arg(long, value_delimiter = ',', default_value = "100,200,1000,10000")]
        n_list: Vec<u64>,
        /// Also write trajectory.csv into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Certification(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Runtime(_) => 1,
            Failure::Config(_) => 2,
            Failure::Certification(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Certification(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NoDensity | Error::DuplicateClusters { .. } | Error::CertificationFailed(_) => {
                Failure::Certification(e.to_string())
            }
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

struct Loaded {
    doc: ConfigDocument,
    dist: SourceDistribution,
    hash: String,
}

fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

fn load(path: &Path) -> Outcome<Loaded> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let doc = ConfigDocument::from_json(&text)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let dist = SourceDistribution::new(doc.distribution.clone())
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let hash = sha256_hex(&doc.canonical_json());
    Ok(Loaded { doc, dist, hash })
}

fn header(hash: &str, seed: Option<u64>) -> String {
    let seed = seed.map_or_else(|| "none".to_string(), |s| s.to_string());
    format!("# quantlab {VERSION}\n# config_sha256 {hash}\n# seed {seed}\n")
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Outcome<()> {
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| io_failure(&path, e))
}

fn rates(config: &Path, seed: Option<u64>, out: &Path) -> Outcome<String> {
    let loaded = load(config)?;
    let mut cfg =
        ExperimentConfig::from_document(&loaded.doc).map_err(|e| Failure::Config(e.to_string()))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let table = run_rate_experiment(&cfg)?;
    let head = header(&loaded.hash, Some(cfg.seed));
    write_file(out, "rates.csv", &format!("{head}{}", table.to_csv()))?;
    write_file(out, "plot.csv", &format!("{head}{}", table.plot_csv()))?;
    let fit = fit_loglog_slope(&table)?;
    let spread = table.scaled_loss_spread();
    let doc = json!({
        "version": VERSION,
        "config_sha256": loaded.hash,
        "seed": cfg.seed,
        "slope": fit.slope,
        "intercept": fit.intercept,
        "r_squared": fit.r_squared,
        "points": fit.points,
        "scaled_loss_spread": spread,
        "optimal_risk": table.optimal_risk,
        "optimal_set": table.optimal_set,
    });
    let text = serde_json::to_string_pretty(&doc).map_err(|e| Failure::Runtime(e.to_string()))?;
    write_file(out, "fit.json", &format!("{text}\n"))?;
    Ok(format!(
        "{} rows written to {}\nslope {:.6} (r^2 {:.4}), max n*loss / min over upper half {:.4}\n",
        table.rows.len(),
        out.display(),
        fit.slope,
        fit.r_squared,
        spread
    ))
}

fn conditions(config: &Path, out: Option<&Path>) -> Outcome<String> {
    let loaded = load(config)?;
    let dist = &loaded.dist;
    if dist.is_atomic() {
        return Err(Error::NoDensity.into());
    }
    let opt = optimal_clusters(dist, loaded.doc.experiment.k)?;
    let mut reports = vec![check_boundary_density(dist, &opt)?];
    match dist.spec() {
        DistributionSpec::BallMixture { .. } => reports.push(check_ball_separation_for(dist)?),
        DistributionSpec::QuasiGaussianMixture { .. } => {
            reports.push(check_mixture_polarization(dist)?);
            reports.push(verify_means_proximity(dist, &opt)?);
        }
        _ => {}
    }
    let mut text = header(&loaded.hash, Some(loaded.doc.experiment.seed));
    for c in opt.members() {
        let _ = writeln!(text, "# optimal codebook {:?}", c.to_nested());
    }
    for r in &reports {
        let _ = writeln!(text, "{}", r.summary());
        for (key, value) in &r.details {
            let _ = writeln!(text, "  {key} = {value:.16e}");
        }
        for note in &r.notes {
            let _ = writeln!(text, "  note: {note}");
        }
    }
    if let Some(dir) = out {
        let doc = json!({
            "version": VERSION,
            "config_sha256": loaded.hash,
            "optimal_risk": opt.risk(),
            "optimal_set": opt.members().iter().map(|c| c.to_nested()).collect::<Vec<_>>(),
            "reports": reports,
        });
        let json =
            serde_json::to_string_pretty(&doc).map_err(|e| Failure::Runtime(e.to_string()))?;
        write_file(dir, "conditions.json", &format!("{json}\n"))?;
    }
    Ok(text)
}

fn parse_codebook(spec: &str) -> Outcome<ClusterVector> {
    let points = spec
        .split(';')
        .map(|p| {
            p.split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
        })
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Failure::Config(format!("codebook `{spec}`: {e}")))?;
    ClusterVector::new(points).map_err(|e| Failure::Config(format!("codebook `{spec}`: {e}")))
}

fn hessian(config: &Path, at: &str, fd_step: f64, out: Option<&Path>) -> Outcome<String> {
    let loaded = load(config)?;
    let dist = &loaded.dist;
    let codebooks = if at == "optimal" {
        if dist.is_atomic() {
            return Err(Error::NoDensity.into());
        }
        optimal_clusters(dist, loaded.doc.experiment.k)?
            .members()
            .to_vec()
    } else {
        let c = parse_codebook(at)?;
        c.check_distinct()?;
        vec![c]
    };
    let mut text = header(&loaded.hash, Some(loaded.doc.experiment.seed));
    for c in &codebooks {
        let h = analytic_hessian(c, dist, OffDiagonalSign::Derived)?;
        let fd = finite_difference_hessian(c, dist, fd_step)?;
        let verdict = is_positive_definite(&h, PD_REL_TOL)?;
        let _ = writeln!(text, "# codebook {:?}", c.to_nested());
        text.push_str(&h.to_csv());
        let _ = writeln!(text, "# min_eigenvalue {:.16e}", verdict.min_eigenvalue);
        let _ = writeln!(text, "# positive_definite {}", verdict.positive_definite);
        let _ = writeln!(
            text,
            "# fd_step {fd_step:e} max_fd_deviation {:.16e}",
            h.max_abs_diff(&fd)
        );
    }
    if let Some(dir) = out {
        write_file(dir, "hessian.csv", &text)?;
    }
    Ok(text)
}

fn counterexample(n_list: &[u64], out: Option<&Path>) -> Outcome<String> {
    let traj = counterexample_trajectory(n_list).map_err(|e| match e {
        Error::InvalidInput(m) => Failure::Config(m),
        other => other.into(),
    })?;
    let params = json!({ "eta": 2.0, "r": 10.0, "n_list": n_list });
    let mut text = header(&sha256_hex(&params.to_string()), None);
    let _ = writeln!(text, "# second_moment {:.16e}", traj.second_moment);
    let _ = writeln!(text, "# optimal_risk {:.16e}", traj.optimal_risk);
    let _ = writeln!(text, "# loss_limit {:.16e}", traj.loss_limit);
    text.push_str(&traj.to_csv());
    if let Some(dir) = out {
        write_file(dir, "trajectory.csv", &text)?;
    }
    Ok(text)
}

fn run(cli: Cli) -> Outcome<String> {
    match cli.command {
        Command::Rates { config, seed, out } => rates(&config, seed, &out),
        Command::Conditions { config, out } => conditions(&config, out.as_deref()),
        Command::Hessian {
            config,
            at,
            fd_step,
            out,
        } => hessian(&config, &at, fd_step, out.as_deref()),
        Command::Counterexample { n_list, out } => counterexample(&n_list, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        builder = builder.num_threads(t);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match pool.install(|| run(cli)) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
