//! Command-line front end: reproducible batch experiments over the tree
//! martingale machinery, with JSON/CSV artifacts.
//!
//! Exit codes: 0 success, 1 validation/usage error, 2 identity-check failure.
//! All failures also emit a machine-readable JSON object on stderr.

use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::json;

use treemart::limit_lab::{self, ExperimentConfig};
use treemart::tree_sim::{self, TreeState};
use treemart::{ctbrw, exact, oracle, profile_poly, ModelParams, ReplicaSeed};

/// Environment variable overriding the default worker count (the `--threads`
/// flag wins over it).
pub const THREADS_ENV: &str = "TREEMART_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "treemart",
    about = "Simulation and statistical experiments for path-length martingales in linear recursive random trees",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Model selector: `bst`, `rt`, `port`, `p-oriented:<p>`, `mary:<m>` or
/// `custom:<beta>,<m>`.
#[derive(Debug, Clone, Copy)]
struct ModelArg(ModelParams);

impl FromStr for ModelArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let params = match s {
            "bst" => ModelParams::bst(),
            "rt" => ModelParams::rt(),
            "port" => ModelParams::port(),
            _ => {
                if let Some(p) = s.strip_prefix("p-oriented:") {
                    let p: u32 = p.parse().map_err(|_| format!("bad p in '{s}'"))?;
                    ModelParams::p_oriented(p)
                } else if let Some(m) = s.strip_prefix("mary:") {
                    let m: u32 = m.parse().map_err(|_| format!("bad m in '{s}'"))?;
                    ModelParams::mary(m).map_err(|e| e.to_string())?
                } else if let Some(rest) = s.strip_prefix("custom:") {
                    let (beta, m) = rest
                        .split_once(',')
                        .ok_or_else(|| format!("custom model needs '<beta>,<m>', got '{s}'"))?;
                    let beta: f64 = beta
                        .trim()
                        .parse()
                        .map_err(|_| format!("bad beta in '{s}'"))?;
                    let m: u32 = m.trim().parse().map_err(|_| format!("bad m in '{s}'"))?;
                    ModelParams::new(beta, m).map_err(|e| e.to_string())?
                } else {
                    return Err(format!(
                        "unknown model '{s}' (expected bst|rt|port|p-oriented:<p>|mary:<m>|custom:<beta>,<m>)"
                    ));
                }
            }
        };
        Ok(ModelArg(params))
    }
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// Write the artifact to this path instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the artifact into this directory under an auto-generated name
    /// embedding model, sizes and seed.
    #[arg(long, conflicts_with = "out")]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Grow one tree and export its martingale trajectory as CSV.
    Grow {
        #[arg(long)]
        model: ModelArg,
        #[arg(long)]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Replica index of the deterministic substream.
        #[arg(long, default_value_t = 0)]
        replica: u64,
        /// Record only these sizes (comma separated); default records every
        /// step for small trees.
        #[arg(long, value_delimiter = ',')]
        checkpoints: Vec<u64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Closed-form moments and asymptotic constants as JSON.
    Exact {
        #[arg(long)]
        model: ModelArg,
        #[arg(long)]
        n: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Exact distributions from exhaustive history enumeration (n <= 8).
    Oracle {
        #[arg(long)]
        model: ModelArg,
        #[arg(long)]
        n: u64,
        #[arg(long, value_parser = ["path-length", "depth-of-last", "profile-vector"])]
        statistic: String,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Profile polynomial along one trajectory at a complex point, as CSV.
    Profile {
        #[arg(long)]
        model: ModelArg,
        #[arg(long)]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        replica: u64,
        #[arg(long, default_value_t = 1.0)]
        z_re: f64,
        #[arg(long, default_value_t = 0.0)]
        z_im: f64,
        /// Evaluation sizes; default is the decade grid up to n.
        #[arg(long, value_delimiter = ',')]
        checkpoints: Vec<u64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Continuous-time branching random walk embedding, as JSON.
    Ctbrw {
        #[arg(long)]
        model: ModelArg,
        #[arg(long)]
        deaths: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        replica: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Central-limit experiment for the scaled martingale tail sum.
    Clt {
        #[arg(long)]
        model: ModelArg,
        #[arg(long)]
        n: u64,
        #[arg(long)]
        horizon: u64,
        #[arg(long)]
        replicas: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        threads: Option<usize>,
        /// Embed the raw samples in the JSON report.
        #[arg(long)]
        keep_samples: bool,
        /// Also write the sample vector as a flat CSV.
        #[arg(long)]
        samples_csv: Option<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Law-of-the-iterated-logarithm tracking experiment.
    Lil {
        #[arg(long)]
        model: ModelArg,
        #[arg(long)]
        horizon: u64,
        #[arg(long)]
        replicas: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Tracking window; defaults to [20, horizon/100], every size.
        #[arg(long)]
        from: Option<u64>,
        #[arg(long)]
        to: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Scaled absolute-moment estimates against the Gaussian targets.
    Moments {
        #[arg(long)]
        model: ModelArg,
        #[arg(long)]
        n: u64,
        #[arg(long)]
        horizon: u64,
        #[arg(long)]
        replicas: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_delimiter = ',', default_values_t = vec![2u32, 3, 4, 6])]
        orders: Vec<u32>,
        #[arg(long)]
        threads: Option<usize>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run the exact identity and diagnostic suite; exit 2 on any failure.
    Check {
        /// Restrict to one model (default: the five-model matrix).
        #[arg(long)]
        model: Option<ModelArg>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

/// Entry point; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successes.
            if e.use_stderr() {
                eprintln!("{e}");
                emit_error_json("usage", &e.to_string());
                return 1;
            }
            print!("{e}");
            return 0;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            emit_error_json(error_kind(&e), &e.to_string());
            1
        }
    }
}

#[derive(Debug)]
enum CliError {
    Model(treemart::Error),
    Io(std::io::Error),
    Invalid(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Model(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "{e}"),
            CliError::Invalid(m) => write!(f, "{m}"),
        }
    }
}

impl From<treemart::Error> for CliError {
    fn from(e: treemart::Error) -> Self {
        CliError::Model(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

fn error_kind(e: &CliError) -> &'static str {
    match e {
        CliError::Model(_) => "validation",
        CliError::Io(_) => "io",
        CliError::Invalid(_) => "validation",
    }
}

fn emit_error_json(kind: &str, message: &str) {
    eprintln!(
        "{}",
        json!({ "error": { "kind": kind, "message": message } })
    );
}

fn with_pool<F: FnOnce() -> Result<i32, CliError> + Send>(
    threads: Option<usize>,
    f: F,
) -> Result<i32, CliError> {
    let threads = threads.or_else(|| {
        std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
    });
    match threads {
        None | Some(0) => f(),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::Invalid(format!("thread pool: {e}")))?
            .install(f),
    }
}

fn write_artifact(output: &OutputArgs, default_name: &str, content: &str) -> Result<(), CliError> {
    match (&output.out, &output.out_dir) {
        (Some(path), _) => {
            std::fs::write(path, content)?;
        }
        (None, Some(dir)) => {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join(default_name), content)?;
        }
        (None, None) => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(content.as_bytes())?;
            if !content.ends_with('\n') {
                writeln!(stdout)?;
            }
        }
    }
    Ok(())
}

fn to_pretty_json<S: Serialize>(value: &S) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serialization");
    s.push('\n');
    s
}

fn decade_grid(n: u64) -> Vec<u64> {
    let mut grid = Vec::new();
    let mut d = 1u64;
    while d <= n {
        grid.push(d);
        d = d.saturating_mul(10);
    }
    if grid.last() != Some(&n) {
        grid.push(n);
    }
    grid
}

fn float17(x: f64) -> String {
    format!("{x:.16e}")
}

fn dispatch(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Grow {
            model,
            n,
            seed,
            replica,
            checkpoints,
            output,
        } => {
            let (traj, _) =
                tree_sim::grow(&model.0, n, ReplicaSeed::new(seed, replica), &checkpoints)?;
            let mut buf = Vec::new();
            traj.to_csv(&mut buf)?;
            let name = format!("grow_{}_n{}_seed{}_{}.csv", model.0.tag(), n, seed, replica);
            write_artifact(&output, &name, &String::from_utf8(buf).expect("utf8 csv"))?;
            Ok(0)
        }
        Command::Exact { model, n, output } => {
            let p = &model.0;
            if n < 1 {
                return Err(CliError::Invalid("n must be >= 1".into()));
            }
            let expansion = exact::mean_expansion(p);
            let report = json!({
                "model": p,
                "n": n,
                "depth_mean": exact::depth_mean(p, n),
                "depth_var": exact::depth_variance(p, n),
                "path_mean": exact::mean_path(p, n),
                "path_var": exact::var_path(p, n),
                "sigma2": exact::variance_constant(p),
                "a": expansion.nlogn,
                "b": expansion.linear,
            });
            let name = format!("exact_{}_n{}.json", p.tag(), n);
            write_artifact(&output, &name, &format!("{report:#}\n"))?;
            Ok(0)
        }
        Command::Oracle {
            model,
            n,
            statistic,
            output,
        } => {
            let p = &model.0;
            let report = match statistic.as_str() {
                "path-length" | "depth-of-last" => {
                    let stat = if statistic == "path-length" {
                        oracle::Statistic::PathLength
                    } else {
                        oracle::Statistic::DepthOfLast
                    };
                    let pmf = oracle::exact_distribution(p, n, stat)?;
                    json!({
                        "model": p,
                        "n": n,
                        "statistic": statistic,
                        "support": pmf.support(),
                        "probs": pmf.probs(),
                    })
                }
                "profile-vector" => {
                    let law = oracle::external_profile_law(p, n)?;
                    let support: Vec<&Vec<u64>> = law.iter().map(|(k, _)| k).collect();
                    let probs: Vec<f64> = law.iter().map(|(_, q)| *q).collect();
                    json!({
                        "model": p,
                        "n": n,
                        "statistic": statistic,
                        "support": support,
                        "probs": probs,
                    })
                }
                _ => unreachable!("clap restricts the statistic values"),
            };
            let name = format!("oracle_{}_n{}_{}.json", p.tag(), n, statistic);
            write_artifact(&output, &name, &format!("{report:#}\n"))?;
            Ok(0)
        }
        Command::Profile {
            model,
            n,
            seed,
            replica,
            z_re,
            z_im,
            checkpoints,
            output,
        } => {
            let p = &model.0;
            let z = Complex64::new(z_re, z_im);
            let marks = if checkpoints.is_empty() {
                decade_grid(n)
            } else {
                let mut m = checkpoints;
                m.sort_unstable();
                m.dedup();
                m
            };
            let mut cproduct = profile_poly::NormalizerProduct::new(p, z)?;
            let mut state = TreeState::with_capacity(p, n as usize);
            let mut rng = ReplicaSeed::new(seed, replica).rng();
            let mut rows = String::from("n,re_z,im_z,re_W,im_W,re_M,im_M\n");
            let mut emit = |state: &TreeState, c: Complex64| {
                let w = profile_poly::eval_w(state, z);
                let m_val = w / c;
                rows.push_str(&format!(
                    "{},{},{},{},{},{},{}\n",
                    state.size(),
                    float17(z.re),
                    float17(z.im),
                    float17(w.re),
                    float17(w.im),
                    float17(m_val.re),
                    float17(m_val.im)
                ));
            };
            if marks.contains(&1) {
                emit(&state, cproduct.eval());
            }
            while state.size() < n {
                state.insert_step(&mut rng);
                cproduct.advance();
                if marks.binary_search(&state.size()).is_ok() {
                    emit(&state, cproduct.eval());
                }
            }
            let name = format!("profile_{}_n{}_seed{}_{}.csv", p.tag(), n, seed, replica);
            write_artifact(&output, &name, &rows)?;
            Ok(0)
        }
        Command::Ctbrw {
            model,
            deaths,
            seed,
            replica,
            output,
        } => {
            let state = ctbrw::simulate(&model.0, deaths, ReplicaSeed::new(seed, replica))?;
            let occupancy: std::collections::BTreeMap<String, u64> = state
                .occupancy()
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(k, &c)| (k.to_string(), c))
                .collect();
            let report = json!({
                "model": model.0,
                "n_deaths": deaths,
                "occupancy": occupancy,
                "tau": state.death_times(),
            });
            let name = format!(
                "ctbrw_{}_d{}_seed{}_{}.json",
                model.0.tag(),
                deaths,
                seed,
                replica
            );
            write_artifact(&output, &name, &format!("{report:#}\n"))?;
            Ok(0)
        }
        Command::Clt {
            model,
            n,
            horizon,
            replicas,
            seed,
            threads,
            keep_samples,
            samples_csv,
            output,
        } => with_pool(threads, move || {
            let config = ExperimentConfig::new(model.0, n, horizon, replicas, seed);
            config.validate_proxy_guard()?;
            let report = limit_lab::clt_experiment(&config, keep_samples || samples_csv.is_some())?;
            if let Some(path) = &samples_csv {
                let samples = report.samples.as_ref().expect("samples kept");
                let mut csv = String::from("z\n");
                for z in samples {
                    csv.push_str(&float17(*z));
                    csv.push('\n');
                }
                std::fs::write(path, csv)?;
            }
            let mut report = report;
            if !keep_samples {
                report.samples = None;
            }
            let name = format!(
                "clt_{}_n{}_N{}_seed{}.json",
                model.0.tag(),
                n,
                horizon,
                seed
            );
            write_artifact(&output, &name, &to_pretty_json(&report))?;
            Ok(0)
        }),
        Command::Lil {
            model,
            horizon,
            replicas,
            seed,
            from,
            to,
            threads,
            output,
        } => with_pool(threads, move || {
            let start = std::time::Instant::now();
            let lo = from.unwrap_or(20);
            let hi = to.unwrap_or(horizon / 100);
            if lo >= hi {
                return Err(CliError::Invalid(format!(
                    "empty tracking window [{lo}, {hi}]"
                )));
            }
            let mut config = ExperimentConfig::new(model.0, lo, horizon, replicas, seed);
            config.checkpoints = limit_lab::dense_checkpoints(lo, hi);
            config.validate_lil()?;
            let lil = limit_lab::lil_experiment(&config)?;
            let report = limit_lab::ExperimentReport {
                kind: "lil".into(),
                config: ExperimentConfig {
                    checkpoints: vec![lo, hi], // window summary, not the dense list
                    ..config
                },
                sample_mean: None,
                sample_sd: None,
                ks_distance: None,
                ks_p_value: None,
                moment_estimates: None,
                moment_targets: None,
                lil: Some(lil),
                conditions: None,
                samples: None,
                meta: limit_lab::RunMeta {
                    wall_time_secs: start.elapsed().as_secs_f64(),
                },
            };
            let name = format!("lil_{}_N{}_seed{}.json", model.0.tag(), horizon, seed);
            write_artifact(&output, &name, &to_pretty_json(&report))?;
            Ok(0)
        }),
        Command::Moments {
            model,
            n,
            horizon,
            replicas,
            seed,
            orders,
            threads,
            output,
        } => with_pool(threads, move || {
            let mut config = ExperimentConfig::new(model.0, n, horizon, replicas, seed);
            config.moment_orders = orders;
            config.validate_proxy_guard()?;
            if !model.0.is_integer_beta() {
                eprintln!(
                    "note: beta = {} is not an integer; the higher-moment limit is outside \
                     the proven hypothesis and results are exploratory",
                    model.0.beta()
                );
            }
            let mut report = limit_lab::clt_experiment(&config, false)?;
            report.kind = "moments".into();
            let name = format!(
                "moments_{}_n{}_N{}_seed{}.json",
                model.0.tag(),
                n,
                horizon,
                seed
            );
            write_artifact(&output, &name, &to_pretty_json(&report))?;
            Ok(0)
        }),
        Command::Check { model, threads } => with_pool(threads, move || {
            let models = match model {
                Some(m) => vec![m.0],
                None => vec![
                    ModelParams::bst(),
                    ModelParams::rt(),
                    ModelParams::port(),
                    ModelParams::new(0.5, 1).expect("valid"),
                    ModelParams::new(-1.0, 3).expect("valid"),
                ],
            };
            Ok(run_check_suite(&models))
        }),
    }
}

fn run_check_suite(models: &[ModelParams]) -> i32 {
    let mut failures = 0u32;
    let mut check = |name: &str, ok: bool, detail: String| {
        if ok {
            println!("PASS  {name}: {detail}");
        } else {
            failures += 1;
            println!("FAIL  {name}: {detail}");
        }
    };

    for p in models {
        let tag = p.tag();

        // Exact formulas against exhaustive enumeration.
        let mut worst_mean = 0.0f64;
        let mut worst_var = 0.0f64;
        for n in 1..=6u64 {
            let law = oracle::exact_distribution(p, n, oracle::Statistic::PathLength)
                .expect("enumeration in range");
            worst_mean = worst_mean.max((law.mean() - exact::mean_path(p, n)).abs());
            worst_var = worst_var.max((law.variance() - exact::var_path(p, n)).abs());
        }
        check(
            &format!("{tag}/path-moments-vs-enumeration"),
            worst_mean <= 1e-10 && worst_var <= 1e-10,
            format!("max |mean dev| = {worst_mean:.2e}, max |var dev| = {worst_var:.2e}"),
        );

        // Martingale property.
        let mut worst = 0.0f64;
        for n in 2..=6u64 {
            worst = worst.max(oracle::check_martingale_property(p, n).expect("in range"));
        }
        check(
            &format!("{tag}/martingale-property"),
            worst <= 1e-12,
            format!("max deviation = {worst:.2e}"),
        );

        // Depth law vs Poisson-binomial convolution.
        let mut worst = 0.0f64;
        for n in 2..=6u64 {
            worst = worst.max(oracle::check_depth_bernoulli_law(p, n).expect("in range"));
        }
        check(
            &format!("{tag}/depth-law"),
            worst <= 1e-12,
            format!("max TV distance = {worst:.2e}"),
        );

        // Conditional-variance identity.
        let mut worst = 0.0f64;
        for n in 2..=6u64 {
            worst = worst.max(oracle::check_conditional_variance_identity(p, n).expect("in range"));
        }
        check(
            &format!("{tag}/conditional-variance-identity"),
            worst <= 1e-10,
            format!("max deviation = {worst:.2e}"),
        );

        // Profile identities along a simulated run.
        let (_, state) = tree_sim::grow(p, 20_000, ReplicaSeed::new(1234, 0), &[20_000])
            .expect("growth in range");
        let residual = state.profile_residuals().max();
        check(
            &format!("{tag}/profile-identities"),
            residual == 0.0,
            format!("max residual over run to 2e4 = {residual:.2e}"),
        );

        // Asymptotic consistency of the closed forms at n = 1e6.
        let n = 1_000_000u64;
        let expansion = exact::mean_expansion(p);
        let b_hat = (exact::mean_path(p, n) - p.theta() * n as f64 * (n as f64).ln()) / n as f64;
        let mean_gap = ((b_hat - expansion.linear) / expansion.linear).abs();
        let sigma2 = exact::variance_constant(p);
        let var_gap = ((exact::var_path(p, n) / (n as f64 * n as f64) - sigma2) / sigma2).abs();
        check(
            &format!("{tag}/asymptotic-consistency"),
            mean_gap <= 0.01 && var_gap <= 0.01,
            format!("mean-coeff gap = {mean_gap:.2e}, variance-coeff gap = {var_gap:.2e}"),
        );
    }

    if failures == 0 {
        println!("all checks passed");
        0
    } else {
        println!("{failures} check(s) failed");
        emit_error_json("check", &format!("{failures} identity check(s) failed"));
        2
    }
}
