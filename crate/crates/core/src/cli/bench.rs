//! Synthetic chain benchmarks for run-time scaling.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::inference::{run_constrained_mp, Combinator, InferenceOptions, Solution};
use crate::losses::{f_beta, hamming, zero_one, GroundTruth};
use crate::model::{AccumulationSpec, EnergyFactor, Model};
use crate::tasks::{label_count_model, prepare_tree, SolveOptions};

pub const CSV_HEADER: &str = "task,M,N,seconds,max_l_states,messages";

/// Minimum wall time per measurement; short runs are repeated and averaged.
const MIN_SAMPLE: Duration = Duration::from_millis(10);

/// Timed passes over every instance.
pub const TIMING_ROUNDS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchTask {
    PlainMap,
    MarginHamming,
    SlackHamming,
    SlackFbeta,
    LabelCount,
    ZeroOne,
}

impl BenchTask {
    pub const ALL: [BenchTask; 6] = [
        BenchTask::PlainMap,
        BenchTask::MarginHamming,
        BenchTask::SlackHamming,
        BenchTask::SlackFbeta,
        BenchTask::LabelCount,
        BenchTask::ZeroOne,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchTask::PlainMap => "plain-map",
            BenchTask::MarginHamming => "margin-hamming",
            BenchTask::SlackHamming => "slack-hamming",
            BenchTask::SlackFbeta => "slack-fbeta",
            BenchTask::LabelCount => "label-count",
            BenchTask::ZeroOne => "zero-one",
        }
    }
}

impl fmt::Display for BenchTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BenchTask::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Value(format!("unknown bench task '{s}'")))
    }
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub task: BenchTask,
    pub sizes: Vec<usize>,
    pub num_labels: usize,
    pub reps: usize,
    pub seed: u64,
    /// When false, seconds are reported as 0 so output is reproducible.
    pub timing: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRecord {
    pub task: BenchTask,
    pub m: usize,
    pub n: usize,
    pub seconds: f64,
    pub max_l_states: usize,
    pub messages: usize,
}

/// `start:stop:step`, inclusive of `stop` when reached; a single number is one size.
pub fn parse_range(s: &str) -> Result<Vec<usize>> {
    let parts: Vec<usize> = s
        .split(':')
        .map(|p| p.trim().parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Value(format!("bad range '{s}'")))?;
    let (start, stop, step) = match parts[..] {
        [a] => (a, a, 1),
        [a, b] => (a, b, 1),
        [a, b, c] => (a, b, c),
        _ => return Err(Error::Value(format!("bad range '{s}'"))),
    };
    if start == 0 || step == 0 || stop < start {
        return Err(Error::Value(format!("bad range '{s}'")));
    }
    Ok((start..=stop).step_by(step).collect())
}

/// Chain of `m` variables with `n` states and uniform energies in `[-1, 1)`.
pub fn synthetic_chain(m: usize, n: usize, rng: &mut impl Rng) -> Model {
    let cards = vec![n; m];
    let mut energy: Vec<EnergyFactor> = (0..m)
        .map(|t| EnergyFactor::new(vec![t], (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()))
        .collect();
    energy.extend((1..m).map(|t| {
        EnergyFactor::new(
            vec![t - 1, t],
            (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
    }));
    Model::new(cards, energy, vec![], AccumulationSpec::default()).expect("valid chain")
}

fn instance_rng(seed: u64, m: usize, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((m as u64) << 32) | rep as u64);
    rng
}

fn problem(task: BenchTask, chain: &Model, rng: &mut impl Rng) -> Result<(Model, Combinator)> {
    let n = chain.max_cardinality();
    let labels: Vec<usize> = (0..chain.num_vars()).map(|_| rng.gen_range(0..n)).collect();
    let truth = GroundTruth::new(chain, labels)?;
    Ok(match task {
        BenchTask::PlainMap => (chain.clone(), Combinator::plain()),
        BenchTask::MarginHamming => {
            let loss = hamming(&truth);
            (loss.attach(chain)?, Combinator::Sum(loss.eta))
        }
        BenchTask::SlackHamming => {
            let loss = hamming(&truth);
            (loss.attach(chain)?, Combinator::Product(loss.eta))
        }
        BenchTask::SlackFbeta => {
            let loss = f_beta(1.0, &truth);
            (loss.attach(chain)?, Combinator::Product(loss.eta))
        }
        BenchTask::ZeroOne => {
            let loss = zero_one(&truth);
            (loss.attach(chain)?, Combinator::Product(loss.eta))
        }
        BenchTask::LabelCount => {
            let b = (chain.num_vars() / 2) as i64;
            (
                label_count_model(chain)?,
                Combinator::gate(move |l| l.get(0) == b),
            )
        }
    })
}

/// Mean wall time per call of `run` over a batch long enough to fill [`MIN_SAMPLE`].
fn time_batch(mut run: impl FnMut() -> Result<Solution>) -> Result<f64> {
    let start = Instant::now();
    let mut count = 0u32;
    loop {
        run()?;
        count += 1;
        let elapsed = start.elapsed();
        if elapsed >= MIN_SAMPLE {
            return Ok(elapsed.as_secs_f64() / count as f64);
        }
    }
}

/// One record per (size, repetition). Only message passing and backtracking
/// are timed; model and tree construction are excluded.
///
/// Timing makes [`TIMING_ROUNDS`] passes over all instances in turn and keeps
/// the fastest batch of each, so that slow drift of the machine spreads over
/// every size instead of skewing a few.
pub fn run_bench(config: &BenchConfig) -> Result<Vec<BenchRecord>> {
    if config.num_labels < 2 {
        return Err(Error::Value("bench needs at least two labels".into()));
    }
    let options = InferenceOptions::local();
    let mut problems = Vec::with_capacity(config.sizes.len() * config.reps);
    for &m in &config.sizes {
        for rep in 0..config.reps {
            let mut rng = instance_rng(config.seed, m, rep);
            let chain = synthetic_chain(m, config.num_labels, &mut rng);
            problems.push((m, problem(config.task, &chain, &mut rng)?));
        }
    }
    let trees = problems
        .iter()
        .map(|(_, (model, _))| prepare_tree(model, &SolveOptions::default()))
        .collect::<Result<Vec<_>>>()?;

    let mut out = Vec::with_capacity(problems.len());
    for ((m, (_, combinator)), tree) in problems.iter().zip(&trees) {
        let sol = run_constrained_mp(tree, combinator, &options)?;
        out.push(BenchRecord {
            task: config.task,
            m: *m,
            n: config.num_labels,
            seconds: if config.timing { f64::INFINITY } else { 0.0 },
            max_l_states: sol.diagnostics.max_l_states(),
            messages: sol.diagnostics.message_count(),
        });
    }
    if config.timing {
        for _ in 0..TIMING_ROUNDS {
            for (((_, (_, combinator)), tree), record) in problems.iter().zip(&trees).zip(&mut out)
            {
                let t = time_batch(|| run_constrained_mp(tree, combinator, &options))?;
                record.seconds = record.seconds.min(t);
            }
        }
    }
    Ok(out)
}

pub fn to_csv(records: &[BenchRecord]) -> String {
    let mut s = format!("{CSV_HEADER}\n");
    for r in records {
        s.push_str(&format!(
            "{},{},{},{:.9},{},{}\n",
            r.task, r.m, r.n, r.seconds, r.max_l_states, r.messages
        ));
    }
    s
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Least-squares slope of log median time against log `M` over the distinct
/// sizes. `None` without two positive timings.
pub fn fit_slope(records: &[BenchRecord]) -> Option<f64> {
    let mut sizes: Vec<usize> = records.iter().map(|r| r.m).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let points: Vec<(f64, f64)> = sizes
        .iter()
        .map(|&m| {
            let t = median(
                records
                    .iter()
                    .filter(|r| r.m == m)
                    .map(|r| r.seconds)
                    .collect(),
            );
            ((m as f64).ln(), t.ln())
        })
        .filter(|(_, y)| y.is_finite())
        .collect();
    if points.len() < 2 {
        return None;
    }
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = points.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(parse_range("20:100:20").unwrap(), vec![20, 40, 60, 80, 100]);
        assert_eq!(parse_range("5").unwrap(), vec![5]);
        assert!(parse_range("10:5").is_err());
        assert!(parse_range("a:b").is_err());
    }

    #[test]
    fn slope_of_power_law() {
        let recs: Vec<BenchRecord> = [10usize, 20, 40, 80]
            .iter()
            .map(|&m| BenchRecord {
                task: BenchTask::PlainMap,
                m,
                n: 2,
                seconds: 1e-6 * (m as f64).powi(3),
                max_l_states: 0,
                messages: 0,
            })
            .collect();
        assert!((fit_slope(&recs).unwrap() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn untimed_runs_are_reproducible() {
        let cfg = BenchConfig {
            task: BenchTask::SlackFbeta,
            sizes: vec![4, 8],
            num_labels: 2,
            reps: 2,
            seed: 7,
            timing: false,
        };
        let a = to_csv(&run_bench(&cfg).unwrap());
        assert_eq!(a, to_csv(&run_bench(&cfg).unwrap()));
        assert!(a.starts_with(CSV_HEADER));
        assert_eq!(a.lines().count(), 5);
    }
}
