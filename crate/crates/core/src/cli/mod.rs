//! Command-line front end.

pub mod bench;
pub mod format;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::inference::{Combinator, Eta, InferenceOptions, Predicate, Solution};
use crate::losses::{build_loss, GroundTruth, LossKind};
use crate::model::{AuxVector, Model};
use crate::oracle::{brute_force, OracleBudget, DEFAULT_BUDGET};
use crate::tasks::{self, LossPath, Mode, ScoreChain, SolveOptions};

use bench::{fit_slope, parse_range, run_bench, to_csv, BenchConfig};
use format::{parse_model, ModelFile};

#[derive(Debug, Parser)]
#[command(
    name = "gmap",
    version,
    about = "Exact MAP inference with global statistics on clique trees"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve max_y H(F(y), G(y)) by constrained message passing.
    Solve(SolveArgs),
    /// Solve the same problem by exhaustive enumeration.
    Oracle(OracleArgs),
    /// Print the model summary and its clique tree.
    Inspect(InspectArgs),
    /// Time inference on synthetic chains and print CSV.
    Bench(BenchArgs),
    /// Loss-augmented inference against a ground truth.
    LossAug(LossAugArgs),
    /// MAP with exactly `count` binary variables set to 1.
    LabelCount(LabelCountArgs),
    /// MAP on a seeded score chain with the score restricted to a range.
    ObjectiveRange(ObjectiveRangeArgs),
    /// MAP excluding a set of complete assignments.
    Exclude(ExcludeArgs),
    /// Sequential diverse K-best assignments.
    Kbest(KbestArgs),
    /// Maximal F1 loss among outputs violating the Hamming margin.
    GenBound(GenBoundArgs),
}

#[derive(Debug, Clone, Args)]
pub struct TreeArgs {
    /// Root clique of the elimination tree.
    #[arg(long)]
    pub root: Option<usize>,
    /// Keep high-degree cliques instead of splitting them into chains.
    #[arg(long)]
    pub no_reduce: bool,
    /// Regroup children that share a sepset.
    #[arg(long)]
    pub reshape: bool,
    /// Break ties inside messages instead of returning the lexicographically smallest optimum.
    #[arg(long)]
    pub local_ties: bool,
    /// Compute independent messages in parallel.
    #[arg(long)]
    pub parallel: bool,
}

impl TreeArgs {
    fn options(&self) -> SolveOptions {
        SolveOptions {
            reduce: !self.no_reduce,
            reshape: self.reshape,
            root: self.root,
            inference: InferenceOptions {
                canonical: !self.local_ties,
                parallel: self.parallel,
            },
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    #[arg(long)]
    pub json: bool,
    /// Append message statistics.
    #[arg(long)]
    pub diagnostics: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Margin,
    Slack,
    Gate,
    General,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EtaArg {
    Zero,
    One,
    /// Sum of all statistic dimensions.
    Identity,
}

#[derive(Debug, Clone, Args)]
pub struct ProblemArgs {
    pub file: PathBuf,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Loss whose statistics replace the model's (needs --truth).
    #[arg(long)]
    pub loss: Option<String>,
    /// Ground-truth states, separated by spaces or commas.
    #[arg(long)]
    pub truth: Option<String>,
    /// Labels counted as positive (default: every label but 0).
    #[arg(long)]
    pub positive: Option<String>,
    /// η over the model's own statistics when no loss is given.
    #[arg(long, value_enum)]
    pub loss_eta: Option<EtaArg>,
    /// Gate predicate on l: eq:<v>, ge:<v> or le:<v>, one value per dimension or one for all.
    #[arg(long)]
    pub gate: Option<String>,
    #[command(flatten)]
    pub tree: TreeArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

pub type SolveArgs = ProblemArgs;

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    /// Largest joint state count to enumerate.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    pub budget: u128,
}

#[derive(Debug, Clone, Args)]
pub struct InspectArgs {
    pub file: PathBuf,
    #[command(flatten)]
    pub tree: TreeArgs,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// plain-map, margin-hamming, slack-hamming, slack-fbeta, label-count or zero-one.
    pub task: String,
    /// Chain lengths as start:stop:step.
    #[arg(long = "M", default_value = "20:200:20")]
    pub sizes: String,
    /// Labels per variable.
    #[arg(long = "N", default_value_t = 2)]
    pub labels: usize,
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Print the log-log slope of median time against M to stderr.
    #[arg(long)]
    pub fit: bool,
    /// Report zero seconds so the output is reproducible.
    #[arg(long)]
    pub no_timing: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossModeArg {
    Margin,
    Slack,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PathArg {
    Auto,
    General,
    Folded,
}

#[derive(Debug, Clone, Args)]
pub struct LossAugArgs {
    pub file: PathBuf,
    #[arg(long)]
    pub loss: String,
    #[arg(long)]
    pub truth: String,
    #[arg(long)]
    pub positive: Option<String>,
    #[arg(long, value_enum, default_value_t = LossModeArg::Margin)]
    pub mode: LossModeArg,
    #[arg(long, value_enum, default_value_t = PathArg::Auto)]
    pub path: PathArg,
    #[command(flatten)]
    pub tree: TreeArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct LabelCountArgs {
    pub file: PathBuf,
    #[arg(long)]
    pub count: usize,
    #[command(flatten)]
    pub tree: TreeArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ObjectiveRangeArgs {
    #[arg(long = "M", default_value_t = 6)]
    pub length: usize,
    #[arg(long = "N", default_value_t = 2)]
    pub states: usize,
    #[arg(long = "D", default_value_t = 2)]
    pub observations: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, allow_negative_numbers = true, default_value_t = f64::NEG_INFINITY)]
    pub lower: f64,
    #[arg(long, allow_negative_numbers = true, default_value_t = f64::INFINITY)]
    pub upper: f64,
    #[arg(long, default_value_t = tasks::DEFAULT_PRECISION)]
    pub precision: u32,
    #[command(flatten)]
    pub tree: TreeArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ExcludeArgs {
    pub file: PathBuf,
    /// Assignment to exclude; repeat for several.
    #[arg(long = "pattern")]
    pub patterns: Vec<String>,
    #[command(flatten)]
    pub tree: TreeArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct KbestArgs {
    pub file: PathBuf,
    #[arg(long)]
    pub k: usize,
    /// K-1 minimum Hamming distances.
    #[arg(long, default_value = "")]
    pub margins: String,
    #[command(flatten)]
    pub tree: TreeArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct GenBoundArgs {
    pub file: PathBuf,
    #[arg(long)]
    pub truth: String,
    /// Model score of the ground truth.
    #[arg(long, allow_negative_numbers = true)]
    pub truth_score: f64,
    #[arg(long)]
    pub positive: Option<String>,
    #[command(flatten)]
    pub tree: TreeArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Result of a command: text for each stream and the process exit code.
#[derive(Debug, Default, PartialEq)]
pub struct Output {
    pub stdout: String,
    pub stderr: String,
    pub code: i32,
}

impl Output {
    fn ok(stdout: String) -> Self {
        Output {
            stdout,
            ..Output::default()
        }
    }
}

pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Infeasible => EXIT_INFEASIBLE,
        _ => EXIT_ERROR,
    }
}

pub fn parse_states(s: &str) -> Result<Vec<usize>> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse()
                .map_err(|_| Error::Value(format!("invalid state '{t}' in '{s}'")))
        })
        .collect()
}

fn truth_for(model: &Model, truth: &str, positive: Option<&str>) -> Result<GroundTruth> {
    let labels = parse_states(truth)?;
    match positive {
        Some(p) => GroundTruth::with_positive(model, labels, &parse_states(p)?),
        None => GroundTruth::new(model, labels),
    }
}

/// Predicate from `eq:`, `ge:` or `le:` followed by one value or one per dimension.
pub fn parse_gate(spec: &str, dim: usize) -> Result<Predicate> {
    let (op, rest) = spec
        .split_once(':')
        .ok_or_else(|| Error::Value(format!("gate '{spec}' needs eq:, ge: or le:")))?;
    let vals: Vec<i64> = rest
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse()
                .map_err(|_| Error::Value(format!("invalid gate value '{t}'")))
        })
        .collect::<Result<_>>()?;
    let target: Vec<i64> = match vals.len() {
        1 => vec![vals[0]; dim],
        n if n == dim => vals,
        n => {
            return Err(Error::Length {
                expected: dim,
                got: n,
            })
        }
    };
    let cmp: fn(i64, i64) -> bool = match op {
        "eq" => |a, b| a == b,
        "ge" => |a, b| a >= b,
        "le" => |a, b| a <= b,
        other => return Err(Error::Value(format!("unknown gate operator '{other}'"))),
    };
    Ok(Arc::new(move |l: &AuxVector| {
        l.as_slice().iter().zip(&target).all(|(&a, &b)| cmp(a, b))
    }))
}

fn setting<'a>(
    flag: Option<&'a str>,
    h: &'a BTreeMap<String, String>,
    key: &str,
) -> Option<&'a str> {
    flag.or_else(|| h.get(key).map(String::as_str))
}

/// Model and combinator from a model file plus overriding flags.
pub fn build_problem(file: &ModelFile, args: &ProblemArgs) -> Result<(Model, Combinator)> {
    let h = &file.h;
    let loss = setting(args.loss.as_deref(), h, "loss");
    let truth = setting(args.truth.as_deref(), h, "truth");
    let positive = setting(args.positive.as_deref(), h, "positive");
    let gate = setting(args.gate.as_deref(), h, "gate");
    let eta_name = match args.loss_eta {
        Some(EtaArg::Zero) => Some("zero"),
        Some(EtaArg::One) => Some("one"),
        Some(EtaArg::Identity) => Some("identity"),
        None => h.get("eta").map(String::as_str),
    };
    let mode = match args.mode {
        Some(m) => Some(m),
        None => h
            .get("mode")
            .map(|m| {
                ModeArg::from_str(m, false).map_err(|_| Error::Value(format!("unknown mode '{m}'")))
            })
            .transpose()?,
    };

    let (model, eta, explicit_eta): (Model, Eta, bool) = match loss {
        Some(name) => {
            let truth = truth.ok_or_else(|| Error::Value("a loss needs --truth".into()))?;
            let gt = truth_for(&file.model, truth, positive)?;
            let spec = build_loss(&name.parse::<LossKind>()?, &gt)?;
            (spec.attach(&file.model)?, spec.eta, true)
        }
        None => {
            let eta: Eta = match eta_name {
                None | Some("zero") => Arc::new(|_| 0.0),
                Some("one") => Arc::new(|_| 1.0),
                Some("identity") => {
                    Arc::new(|l: &AuxVector| l.as_slice().iter().sum::<i64>() as f64)
                }
                Some(other) => return Err(Error::Value(format!("unknown eta '{other}'"))),
            };
            (file.model.clone(), eta, eta_name.is_some())
        }
    };

    let mode = mode.unwrap_or(if gate.is_some() {
        ModeArg::Gate
    } else {
        ModeArg::Margin
    });
    let combinator = match mode {
        ModeArg::Margin => Combinator::Sum(eta),
        ModeArg::Slack => Combinator::Product(eta),
        ModeArg::Gate => {
            let spec = gate.ok_or_else(|| Error::Value("gate mode needs --gate".into()))?;
            Combinator::Gate {
                predicate: parse_gate(spec, model.stat_dim())?,
                eta: explicit_eta.then_some(eta),
            }
        }
        ModeArg::General => Combinator::General {
            h: Arc::new(move |f: f64, l: &AuxVector| f + eta(l)),
            monotonicity: crate::inference::Monotonicity::NonDecreasing,
        },
    };
    Ok((model, combinator))
}

fn render(solution: &Solution, output: &OutputArgs) -> String {
    if output.json {
        return format!("{}\n", solution.to_json());
    }
    let mut s = format!("{solution}\n");
    if output.diagnostics {
        let d = &solution.diagnostics;
        let _ = writeln!(s, "messages {}", d.message_count());
        let _ = writeln!(s, "max_l_states {}", d.max_l_states());
        let _ = writeln!(s, "work {}", d.total_work());
    }
    s
}

fn inspect(file: &ModelFile, tree: &TreeArgs) -> Result<String> {
    let model = &file.model;
    let t = tasks::prepare_tree(model, &tree.options())?;
    let ops: Vec<String> = model
        .accumulation()
        .ops()
        .iter()
        .map(|o| o.to_string())
        .collect();
    let mut s = String::new();
    let _ = writeln!(s, "vars {}", model.num_vars());
    let _ = writeln!(s, "energy_factors {}", model.energy_factors().len());
    let _ = writeln!(s, "statistic_factors {}", model.statistic_factors().len());
    let _ = writeln!(s, "stat_dim {} {}", model.stat_dim(), ops.join(" "));
    let _ = writeln!(s, "{t}");
    Ok(s)
}

fn random_score_chain(args: &ObjectiveRangeArgs) -> Result<ScoreChain> {
    if args.length == 0 || args.states == 0 || args.observations == 0 {
        return Err(Error::Value("M, N and D must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    // Weights on a 0.25 grid, so they scale to integers exactly.
    let mut w = |rows: usize, cols: usize| -> Vec<Vec<f64>> {
        (0..rows)
            .map(|_| {
                (0..cols)
                    .map(|_| rng.gen_range(-4i32..=4) as f64 * 0.25)
                    .collect()
            })
            .collect()
    };
    let emission = w(args.observations, args.states);
    let transition = w(args.states, args.states);
    let observations = (0..args.length)
        .map(|_| rng.gen_range(0..args.observations))
        .collect();
    Ok(ScoreChain {
        observations,
        num_states: args.states,
        emission,
        transition,
    })
}

pub fn run(cli: &Cli) -> Result<Output> {
    match &cli.command {
        Command::Solve(a) => {
            let file = parse_model(&a.file)?;
            let (model, comb) = build_problem(&file, a)?;
            let s = tasks::solve(&model, &comb, &a.tree.options())?;
            Ok(Output::ok(render(&s, &a.output)))
        }
        Command::Oracle(a) => {
            let p = &a.problem;
            let file = parse_model(&p.file)?;
            let (model, comb) = build_problem(&file, p)?;
            let s = brute_force(&model, &comb, OracleBudget(a.budget))?;
            Ok(Output::ok(render(&s, &p.output)))
        }
        Command::Inspect(a) => Ok(Output::ok(inspect(&parse_model(&a.file)?, &a.tree)?)),
        Command::Bench(a) => {
            let config = BenchConfig {
                task: a.task.parse()?,
                sizes: parse_range(&a.sizes)?,
                num_labels: a.labels,
                reps: a.reps.max(1),
                seed: a.seed,
                timing: !a.no_timing,
            };
            let records = run_bench(&config)?;
            let mut out = Output::ok(to_csv(&records));
            if a.fit {
                out.stderr = match fit_slope(&records) {
                    Some(s) => format!("slope {s:.4}\n"),
                    None => "slope unavailable (no timings)\n".into(),
                };
            }
            Ok(out)
        }
        Command::LossAug(a) => {
            let file = parse_model(&a.file)?;
            let gt = truth_for(&file.model, &a.truth, a.positive.as_deref())?;
            let loss = build_loss(&a.loss.parse::<LossKind>()?, &gt)?;
            let mode = match a.mode {
                LossModeArg::Margin => Mode::Margin,
                LossModeArg::Slack => Mode::Slack,
            };
            let path = match a.path {
                PathArg::Auto => LossPath::Auto,
                PathArg::General => LossPath::General,
                PathArg::Folded => LossPath::Folded,
            };
            let s = tasks::loss_augmented(&file.model, &loss, mode, path, &a.tree.options())?;
            Ok(Output::ok(render(&s, &a.output)))
        }
        Command::LabelCount(a) => {
            let file = parse_model(&a.file)?;
            let s = tasks::label_count_constrained(&file.model, a.count, &a.tree.options())?;
            Ok(Output::ok(render(&s, &a.output)))
        }
        Command::ObjectiveRange(a) => {
            let chain = random_score_chain(a)?;
            let s = tasks::objective_range_constrained(
                &chain,
                a.lower,
                a.upper,
                a.precision,
                &a.tree.options(),
            )?;
            let score = tasks::chain_score(&chain, &s.y, a.precision)?;
            let mut text = format!(
                "observations {}\n",
                chain
                    .observations
                    .iter()
                    .map(|o| o.to_string())
                    .collect::<Vec<_>>()
                    .join(" ")
            );
            let _ = writeln!(text, "score {score}");
            text.push_str(&render(&s, &a.output));
            Ok(Output::ok(text))
        }
        Command::Exclude(a) => {
            let file = parse_model(&a.file)?;
            let patterns = a
                .patterns
                .iter()
                .map(|p| parse_states(p))
                .collect::<Result<Vec<_>>>()?;
            let s = tasks::exclude_patterns(&file.model, &patterns, &a.tree.options())?;
            Ok(Output::ok(render(&s, &a.output)))
        }
        Command::Kbest(a) => {
            let file = parse_model(&a.file)?;
            let margins = parse_states(&a.margins)?;
            let r = tasks::diverse_kbest(&file.model, a.k, &margins, &a.tree.options())?;
            let mut out = Output::default();
            for (i, s) in r.solutions.iter().enumerate() {
                let _ = writeln!(out.stdout, "solution {}", i + 1);
                out.stdout.push_str(&render(s, &a.output));
            }
            if let Some(round) = r.infeasible_round {
                out.stderr = format!("infeasible at round {round}\n");
                out.code = EXIT_INFEASIBLE;
            }
            Ok(out)
        }
        Command::GenBound(a) => {
            let file = parse_model(&a.file)?;
            let gt = truth_for(&file.model, &a.truth, a.positive.as_deref())?;
            let r = tasks::generalization_bound_term(
                &file.model,
                a.truth_score,
                &gt,
                &a.tree.options(),
            )?;
            let mut text = format!("term {}\n", r.value);
            text.push_str(&render(&r.solution, &a.output));
            Ok(Output::ok(text))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gates() {
        let g = parse_gate("ge:1", 2).unwrap();
        assert!(g(&AuxVector::from_slice(&[1, 2])));
        assert!(!g(&AuxVector::from_slice(&[0, 2])));
        let g = parse_gate("eq:1,0", 2).unwrap();
        assert!(g(&AuxVector::from_slice(&[1, 0])));
        assert!(parse_gate("eq:1,0,0", 2).is_err());
        assert!(parse_gate("ne:1", 1).is_err());
        assert!(parse_gate("1", 1).is_err());
    }

    #[test]
    fn states() {
        assert_eq!(parse_states("0 1,2").unwrap(), vec![0, 1, 2]);
        assert!(parse_states("0 x").is_err());
        assert_eq!(parse_states("").unwrap(), Vec::<usize>::new());
    }
}
