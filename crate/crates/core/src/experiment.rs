//! Experiment drivers: strategy comparisons, scaling sweeps, and timing.

use std::io::{self, Read, Write};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::payload::simulate_bytes;
use crate::reduce::{simulate_reduce, Placement};
use crate::scenario::{
    derive_seed, gen_complete_binary, gen_loads, rng_from_seed, KRule, LoadDist, RateScheme,
    ScenarioConfig, ScenarioError, TopologyKind,
};
use crate::soar::{budget_curve, color, gather_with, GatherOptions};
use crate::strategies;
use crate::topology::TreeNetwork;

/// Largest complete binary network the scaling sweep accepts.
pub const SCALING_MAX_N: usize = 1 << 13;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub strategy: String,
    pub n: usize,
    pub k: usize,
    pub trial: usize,
    pub seed: u64,
    pub rate_scheme: String,
    pub load_dist: String,
    pub use_case: String,
    pub utilization: f64,
    pub normalized_vs_allred: f64,
    pub bytes: Option<u64>,
    pub bytes_normalized: Option<f64>,
    pub runtime_ms: f64,
    /// Empty unless the strategy could not run on this instance.
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub strategy: String,
    pub k: usize,
    pub trials: usize,
    pub mean_normalized: f64,
    pub std_normalized: f64,
    pub mean_bytes_normalized: Option<f64>,
    pub std_bytes_normalized: Option<f64>,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        1.0
    } else {
        num / den
    }
}

/// Row tagging a whole trial that could not be run.
pub const TRIAL_FAILURE: &str = "*";

/// Runs every strategy and budget of `cfg` on each trial instance.
///
/// Configuration problems are reported before any trial runs. A trial that
/// fails later yields a single row with strategy [`TRIAL_FAILURE`] and the
/// remaining trials still run; a strategy that cannot handle an instance
/// yields a row with its error.
pub fn run_experiment(cfg: &ScenarioConfig) -> Result<Vec<ExperimentRow>, ScenarioError> {
    validate(cfg)?;
    let mut rows = Vec::new();
    for trial in 0..cfg.trials {
        if let Err(e) = run_trial(cfg, trial, &mut rows) {
            let mut row = blank_row(cfg, trial, TRIAL_FAILURE, 0);
            row.error = e.to_string();
            rows.push(row);
        }
    }
    Ok(rows)
}

fn validate(cfg: &ScenarioConfig) -> Result<(), ScenarioError> {
    if cfg.trials == 0 || cfg.k.is_empty() || cfg.strategies.is_empty() {
        return Err(ScenarioError::BadParams(
            "need at least one trial, budget, and strategy".into(),
        ));
    }
    let tree: TreeNetwork<f64> = cfg.instance(0)?;
    cfg.payloads(&tree, 0)?;
    Ok(())
}

fn blank_row(cfg: &ScenarioConfig, trial: usize, strategy: &str, k: usize) -> ExperimentRow {
    ExperimentRow {
        strategy: strategy.to_string(),
        n: cfg.n,
        k,
        trial,
        seed: cfg.trial_seed(trial),
        rate_scheme: cfg.rate_scheme.name().to_string(),
        load_dist: cfg.load_dist.name().to_string(),
        use_case: cfg.use_case.name().to_string(),
        utilization: f64::NAN,
        normalized_vs_allred: f64::NAN,
        bytes: None,
        bytes_normalized: None,
        runtime_ms: 0.0,
        error: String::new(),
    }
}

fn run_trial(
    cfg: &ScenarioConfig,
    trial: usize,
    rows: &mut Vec<ExperimentRow>,
) -> Result<(), ScenarioError> {
    let tree: TreeNetwork<f64> = cfg.instance(trial)?;
    let payloads = cfg.payloads(&tree, trial)?;
    let red = Placement::empty();
    let red_cost = simulate_reduce(&tree, &red)?.total;
    let red_bytes = match &payloads {
        Some(m) => Some(simulate_bytes(&tree, &red, m)?.total),
        None => None,
    };
    // budget rules see the node count with the destination included
    let n = match cfg.topology {
        TopologyKind::CompleteBinary => cfg.n,
        TopologyKind::Rpa => cfg.n + 1,
    };
    let mut out = Vec::new();
    for rule in &cfg.k {
        let k = rule.budget(n);
        for &kind in &cfg.strategies {
            let mut row = blank_row(cfg, trial, kind.name(), k);
            let start = Instant::now();
            let placed = strategies::place(kind, &tree, k);
            row.runtime_ms = start.elapsed().as_secs_f64() * 1e3;
            match placed {
                Ok(u) => {
                    row.utilization = simulate_reduce(&tree, &u)?.total;
                    row.normalized_vs_allred = ratio(row.utilization, red_cost);
                    if let (Some(m), Some(rb)) = (&payloads, red_bytes) {
                        let b = simulate_bytes(&tree, &u, m)?.total;
                        row.bytes = Some(b);
                        row.bytes_normalized = Some(ratio(b as f64, rb as f64));
                    }
                }
                Err(e) => row.error = e.to_string(),
            }
            out.push(row);
        }
    }
    rows.append(&mut out);
    Ok(())
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

/// Mean and sample standard deviation per (strategy, k), skipping failed rows.
pub fn summarize(rows: &[ExperimentRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, usize)> = Vec::new();
    for r in rows.iter().filter(|r| r.strategy != TRIAL_FAILURE) {
        let key = (r.strategy.clone(), r.k);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .filter_map(|(strategy, k)| {
            let group: Vec<&ExperimentRow> = rows
                .iter()
                .filter(|r| r.strategy == strategy && r.k == k && r.error.is_empty())
                .collect();
            if group.is_empty() {
                return None;
            }
            let norm: Vec<f64> = group.iter().map(|r| r.normalized_vs_allred).collect();
            let (mean_normalized, std_normalized) = mean_std(&norm);
            let bytes: Vec<f64> = group.iter().filter_map(|r| r.bytes_normalized).collect();
            let (mb, sb) = if bytes.is_empty() {
                (None, None)
            } else {
                let (m, s) = mean_std(&bytes);
                (Some(m), Some(s))
            };
            Some(SummaryRow {
                strategy,
                k,
                trials: group.len(),
                mean_normalized,
                std_normalized,
                mean_bytes_normalized: mb,
                std_bytes_normalized: sb,
            })
        })
        .collect()
}

pub fn write_csv<T: Serialize, W: Write>(rows: &[T], out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()
}

pub fn read_csv<T: for<'de> Deserialize<'de>, R: Read>(input: R) -> csv::Result<Vec<T>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

// ---------------------------------------------------------------------------
// scaling

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingConfig {
    /// Network sizes, destination included; powers of two.
    pub sizes: Vec<usize>,
    pub k_rules: Vec<KRule>,
    /// Fractional cost reductions whose smallest sufficient budget is reported.
    pub reductions: Vec<f64>,
    pub seed: u64,
    pub trials: usize,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig {
            sizes: (4..=12).map(|e| 1usize << e).collect(),
            k_rules: vec![KRule::Fraction(0.01), KRule::LogN, KRule::SqrtN],
            reductions: vec![0.3, 0.5, 0.7],
            seed: 0,
            trials: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: usize,
    pub trial: usize,
    pub seed: u64,
    pub k_rule: String,
    pub k: usize,
    pub normalized: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlueFractionRow {
    pub n: usize,
    pub trial: usize,
    pub seed: u64,
    pub reduction: f64,
    /// Smallest budget reaching the reduction, if any does.
    pub min_k: Option<usize>,
    pub blue_fraction: Option<f64>,
}

/// SOAR on complete binary trees with constant rates and power-law loads.
pub fn run_scaling(
    cfg: &ScalingConfig,
) -> Result<(Vec<ScalingRow>, Vec<BlueFractionRow>), ScenarioError> {
    let mut scaling = Vec::new();
    let mut fractions = Vec::new();
    for &n in &cfg.sizes {
        if n > SCALING_MAX_N {
            return Err(ScenarioError::TooLarge(format!(
                "scaling sweep is limited to n <= {SCALING_MAX_N}, got {n}"
            )));
        }
        let base: TreeNetwork<f64> = gen_complete_binary(n, RateScheme::Constant)?;
        for trial in 0..cfg.trials {
            let seed = derive_seed(derive_seed(cfg.seed, n as u64), trial as u64);
            let mut rng = rng_from_seed(seed);
            let loads = gen_loads(&base, &LoadDist::PowerLaw, &mut rng)?;
            let tree = base.with_loads(loads)?;
            let hardest = cfg.reductions.iter().copied().fold(0.0, f64::max);

            let rule_max = cfg.k_rules.iter().map(|r| r.budget(n)).max().unwrap_or(0);
            let mut k_max = rule_max.max(16).min(tree.len());
            let mut curve = budget_curve(&tree, k_max);
            while k_max < tree.len() && curve[k_max] > (1.0 - hardest) * curve[0] {
                k_max = (2 * k_max).min(tree.len());
                curve = budget_curve(&tree, k_max);
            }

            for rule in &cfg.k_rules {
                let k = rule.budget(n).min(k_max);
                scaling.push(ScalingRow {
                    n,
                    trial,
                    seed,
                    k_rule: rule.label(),
                    k,
                    normalized: ratio(curve[k], curve[0]),
                });
            }
            for &reduction in &cfg.reductions {
                let target = (1.0 - reduction) * curve[0];
                let idx = curve.partition_point(|&c| c > target);
                let min_k = (idx < curve.len()).then_some(idx);
                fractions.push(BlueFractionRow {
                    n,
                    trial,
                    seed,
                    reduction,
                    min_k,
                    blue_fraction: min_k.map(|k| k as f64 / n as f64),
                });
            }
        }
    }
    Ok((scaling, fractions))
}

// ---------------------------------------------------------------------------
// timing

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    pub k: usize,
    pub reps: usize,
    pub gather_ms: f64,
    pub color_ms: f64,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

/// Median gather and color times of SOAR on a complete binary tree with
/// power-law loads.
pub fn bench(n: usize, k: usize, reps: usize, seed: u64) -> Result<BenchRow, ScenarioError> {
    if reps == 0 {
        return Err(ScenarioError::BadParams(
            "bench needs at least one repetition".into(),
        ));
    }
    let base: TreeNetwork<f64> = gen_complete_binary(n, RateScheme::Constant)?;
    let loads = gen_loads(&base, &LoadDist::PowerLaw, &mut rng_from_seed(seed))?;
    let tree = base.with_loads(loads)?;
    let mut gathers = Vec::with_capacity(reps);
    let mut colors = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        let tables = gather_with(&tree, k, GatherOptions::default());
        gathers.push(start.elapsed().as_secs_f64() * 1e3);
        let start = Instant::now();
        let placement = color(&tree, &tables, k).expect("tables built for this tree");
        colors.push(start.elapsed().as_secs_f64() * 1e3);
        std::hint::black_box(placement);
    }
    Ok(BenchRow {
        n,
        k,
        reps,
        gather_ms: median(gathers),
        color_ms: median(colors),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::UseCase;
    use crate::strategies::StrategyKind;

    fn small_config() -> ScenarioConfig {
        ScenarioConfig {
            topology: TopologyKind::CompleteBinary,
            n: 32,
            load_dist: LoadDist::Uniform,
            rate_scheme: RateScheme::Constant,
            k: vec![KRule::Fixed(2), KRule::Fixed(4)],
            strategies: vec![
                StrategyKind::Soar,
                StrategyKind::Top,
                StrategyKind::AllRed,
                StrategyKind::BruteForce,
            ],
            use_case: UseCase::Gradient,
            payload: Some(crate::scenario::PayloadSpec::Gradient {
                features: 200,
                dropout: 0.5,
            }),
            corpus: None,
            entry_bytes: 8,
            seed: 7,
            trials: 3,
        }
    }

    #[test]
    fn rows_and_summary() {
        let cfg = small_config();
        let rows = run_experiment(&cfg).unwrap();
        assert_eq!(rows.len(), 3 * 2 * 4);
        for r in rows.iter().filter(|r| r.strategy == "allred") {
            assert_eq!(r.normalized_vs_allred, 1.0);
            assert_eq!(r.bytes_normalized, Some(1.0));
        }
        for r in rows.iter().filter(|r| r.strategy == "bruteforce") {
            assert!(r.error.is_empty());
            let soar = rows
                .iter()
                .find(|s| s.strategy == "soar" && s.trial == r.trial && s.k == r.k)
                .unwrap();
            assert!((soar.utilization - r.utilization).abs() < 1e-9);
        }
        let summary = summarize(&rows);
        assert_eq!(summary.len(), 2 * 4);
        assert!(summary.iter().all(|s| s.trials == 3));
        assert!(
            rows == run_experiment(&cfg)
                .unwrap()
                .into_iter()
                .map(|mut r| {
                    r.runtime_ms = rows
                        .iter()
                        .find(|o| o.strategy == r.strategy && o.trial == r.trial && o.k == r.k)
                        .unwrap()
                        .runtime_ms;
                    r
                })
                .collect::<Vec<_>>()
        );
    }

    #[test]
    fn csv_round_trip() {
        let rows = run_experiment(&small_config()).unwrap();
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let back: Vec<ExperimentRow> = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn failures_are_recorded() {
        let mut cfg = small_config();
        cfg.topology = TopologyKind::Rpa;
        cfg.use_case = UseCase::None;
        cfg.strategies = vec![StrategyKind::Level, StrategyKind::Soar];
        let rows = run_experiment(&cfg).unwrap();
        assert!(rows
            .iter()
            .filter(|r| r.strategy == "level")
            .all(|r| !r.error.is_empty()));
        assert!(rows
            .iter()
            .filter(|r| r.strategy == "soar")
            .all(|r| r.error.is_empty()));
    }

    #[test]
    fn config_errors_surface_before_trials() {
        let mut cfg = small_config();
        cfg.n = 100;
        assert!(matches!(
            run_experiment(&cfg),
            Err(ScenarioError::BadSize(100))
        ));
        let mut cfg = small_config();
        cfg.trials = 0;
        assert!(run_experiment(&cfg).is_err());
    }

    #[test]
    fn scaling_is_monotone_in_reduction() {
        let cfg = ScalingConfig {
            sizes: vec![64, 256],
            trials: 2,
            ..ScalingConfig::default()
        };
        let (rows, fractions) = run_scaling(&cfg).unwrap();
        assert_eq!(rows.len(), 2 * 2 * 3);
        assert!(rows.iter().all(|r| r.normalized <= 1.0));
        for chunk in fractions.chunks(3) {
            let ks: Vec<usize> = chunk.iter().map(|f| f.min_k.unwrap()).collect();
            assert!(ks[0] <= ks[1] && ks[1] <= ks[2], "{ks:?}");
        }
        let too_big = ScalingConfig {
            sizes: vec![1 << 14],
            ..ScalingConfig::default()
        };
        assert!(matches!(
            run_scaling(&too_big),
            Err(ScenarioError::TooLarge(_))
        ));
    }

    #[test]
    fn bench_reports_medians() {
        let row = bench(64, 4, 3, 1).unwrap();
        assert_eq!(row.reps, 3);
        assert!(row.gather_ms >= 0.0 && row.color_ms >= 0.0);
        assert!(bench(64, 4, 0, 1).is_err());
    }
}
