use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use bksef_core::cost::DEFAULT_BYTES_PER_WEIGHT;
use bksef_core::objective::EmpiricalAccuracy;
use bksef_core::optimizer::{self, ProfileRegistry};
use bksef_core::report::{self, FormatRegistry, OptimizationReport, Report};
use bksef_core::{Error, Gamma, KernelCandidates, NetworkSpec, ObjectiveWeights, OptimizationConfig};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

const EXIT_USAGE: u8 = 1;
const EXIT_INVALID_SPEC: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;

/// Kernel-size selection and cost analysis for CNN architecture descriptors.
#[derive(Debug, Parser)]
#[command(name = "bksef", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Shape trace, receptive fields and cost of a resolved network.
    Analyze {
        spec: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
        #[arg(long, default_value_t = DEFAULT_BYTES_PER_WEIGHT)]
        bytes_per_weight: u64,
    },
    /// Choose kernel sizes for every layer marked "free".
    Optimize {
        spec: PathBuf,
        #[command(flatten)]
        objective: ObjectiveArgs,
        /// Hard cap on total MACs; enforced by greedy kernel downgrading.
        #[arg(long)]
        budget_macs: Option<u64>,
        /// Minimum receptive field of the final layer, in input pixels.
        #[arg(long)]
        rf_floor: Option<u64>,
        /// JSON object mapping kernel size to an accuracy estimate; replaces
        /// the exponential accuracy curve.
        #[arg(long)]
        accuracy_table: Option<PathBuf>,
        /// Where to write the resolved descriptor. Defaults to
        /// `<out stem>.optimized.json` next to `--out`.
        #[arg(long)]
        descriptor_out: Option<PathBuf>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Compare totals and per-layer kernels of two resolved networks.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
        #[arg(long, default_value_t = DEFAULT_BYTES_PER_WEIGHT)]
        bytes_per_weight: u64,
    },
    /// Optimize once per (weights, gamma) grid point.
    Sweep {
        spec: PathBuf,
        /// File with one `lambda1,lambda2,lambda3` row per line; `#` starts a comment.
        #[arg(long)]
        lambda_grid: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        gamma_grid: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        candidates: Option<Vec<u32>>,
        #[arg(long, default_value = "csv")]
        format: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct OutputArgs {
    /// text, csv or json.
    #[arg(long, default_value = "text")]
    format: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ObjectiveArgs {
    /// Named weight preset (balanced, cloud, edge, or one from --profiles).
    #[arg(long, conflicts_with = "weights")]
    profile: Option<String>,
    /// Explicit weights `lambda1,lambda2,lambda3`.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    weights: Option<Vec<f64>>,
    /// JSON object of extra or overriding presets: `{"name": [l1, l2, l3]}`.
    #[arg(long)]
    profiles: Option<PathBuf>,
    #[arg(long, default_value_t = bksef_core::objective::DEFAULT_GAMMA)]
    gamma: f64,
    #[arg(long, value_delimiter = ',')]
    candidates: Option<Vec<u32>>,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_infeasible() {
            EXIT_INFEASIBLE
        } else if e.is_invalid_spec() {
            EXIT_INVALID_SPEC
        } else {
            EXIT_USAGE
        };
        Failure { code, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_USAGE, message: message.into() }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))
}

fn load_spec(path: &Path) -> Result<NetworkSpec, Failure> {
    let text = read(path)?;
    report::parse_spec(&text).map_err(|e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    })
}

fn candidates(list: Option<Vec<u32>>) -> Result<KernelCandidates, Failure> {
    Ok(match list {
        Some(v) => KernelCandidates::new(v)?,
        None => KernelCandidates::default(),
    })
}

fn weights_from(objective: &ObjectiveArgs) -> Result<ObjectiveWeights, Failure> {
    let mut registry = ProfileRegistry::builtin();
    if let Some(path) = &objective.profiles {
        registry.apply_overrides_json(&read(path)?)?;
    }
    match (&objective.profile, &objective.weights) {
        (Some(name), _) => Ok(registry.get(name)?),
        (None, Some(w)) => match w.as_slice() {
            &[a, b, c] => Ok(ObjectiveWeights::new(a, b, c)?),
            _ => Err(usage(format!("--weights needs exactly three values, got {}", w.len()))),
        },
        (None, None) => Ok(registry.get(optimizer::profile::BALANCED)?),
    }
}

fn parse_lambda_grid(text: &str) -> Result<Vec<ObjectiveWeights>, Failure> {
    let mut grid = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let values = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| usage(format!("lambda grid line {}: {e}", n + 1)))?;
        let &[a, b, c] = values.as_slice() else {
            return Err(usage(format!("lambda grid line {}: expected 3 values, got {}", n + 1, values.len())));
        };
        grid.push(ObjectiveWeights::new(a, b, c).map_err(|e| usage(format!("lambda grid line {}: {e}", n + 1)))?);
    }
    if grid.is_empty() {
        return Err(usage("lambda grid is empty"));
    }
    Ok(grid)
}

fn render(report: &Report, format: &str) -> Result<String, Failure> {
    Ok(FormatRegistry::builtin().get(format)?.render(report)?)
}

fn deliver(document: &str, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, document).map_err(|e| usage(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{document}");
            Ok(())
        }
    }
}

fn sibling_descriptor(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
    out.with_file_name(format!("{stem}.optimized.json"))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Analyze { spec, output, bytes_per_weight } => {
            let spec = load_spec(&spec)?;
            let analysis = report::analyze(&spec, bytes_per_weight)?;
            deliver(&render(&Report::Analysis(analysis), &output.format)?, output.out.as_deref())
        }
        Command::Optimize { spec, objective, budget_macs, rf_floor, accuracy_table, descriptor_out, output } => {
            // Resolve the writer first so a bad --format fails before any work.
            FormatRegistry::builtin().get(&output.format)?;
            let spec = load_spec(&spec)?;
            let mut config = OptimizationConfig::new(
                candidates(objective.candidates.clone())?,
                weights_from(&objective)?,
                Gamma::new(objective.gamma)?,
            );
            config.budget_macs = budget_macs;
            config.rf_floor = rf_floor;
            if let Some(path) = accuracy_table {
                let table: BTreeMap<u32, f64> = serde_json::from_str(&read(&path)?)
                    .map_err(|e| usage(format!("{}: {e}", path.display())))?;
                config.accuracy = Some(Arc::new(EmpiricalAccuracy::new(table)?));
            }
            let result = optimizer::optimize_network(&spec, &config)?;
            let descriptor = report::emit_spec(&result.optimized_spec);
            let rep = Report::Optimization(OptimizationReport::new(&spec.name, &config, result));
            let mut document = render(&rep, &output.format)?;

            let descriptor_path = descriptor_out.or_else(|| output.out.as_deref().map(sibling_descriptor));
            match &descriptor_path {
                Some(path) => deliver(&descriptor, Some(path))?,
                None if output.format == "text" => {
                    document.push_str("\noptimized descriptor:\n");
                    document.push_str(&descriptor);
                }
                None => {}
            }
            deliver(&document, output.out.as_deref())
        }
        Command::Compare { a, b, output, bytes_per_weight } => {
            let (a, b) = (load_spec(&a)?, load_spec(&b)?);
            let cmp = report::compare_with(&a, &b, bytes_per_weight)?;
            deliver(&render(&Report::Comparison(cmp), &output.format)?, output.out.as_deref())
        }
        Command::Sweep { spec, lambda_grid, gamma_grid, candidates: cands, format, out } => {
            FormatRegistry::builtin().get(&format)?;
            let spec = load_spec(&spec)?;
            let lambdas = parse_lambda_grid(&read(&lambda_grid)?)?;
            let gammas = gamma_grid.into_iter().map(Gamma::new).collect::<Result<Vec<_>, _>>()?;
            let result = optimizer::sweep(&spec, &lambdas, &gammas, &candidates(cands)?)?;
            deliver(&render(&Report::Sweep(result), &format)?, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
