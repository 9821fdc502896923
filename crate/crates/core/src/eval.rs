//! Monte-Carlo evaluation harness: ranking-function threshold calibration,
//! detector-versus-ranking batch runs over a configuration grid, per-time
//! F1 scores, and the rate-tracking table.
//!
//! Batches are independent work units fanned out across threads when the
//! `parallel` feature is enabled. Every worker owns a derived [`RngStream`]
//! and aggregation sums integer counts in batch order, so parallel and
//! sequential runs produce identical results.

use crate::detector::{Detector, DetectorConfig};
use crate::error::{Error, Result};
use crate::posterior::{DiscountFactor, GammaPosterior, PriorSpec};
use crate::rfs::{ranking_log_score, PoissonRfsParams, PointPattern};
use crate::simulate::{
    fig1_rate, gen_batch, gen_contaminated_observation, RngStream, ScenarioKind, ScenarioSpec,
    FIG1_HORIZON,
};
use rand::Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use std::io::{self, Write};

/// Stream-id salts for the independent sub-streams of one experiment.
const SALT_RF_CALIBRATION: u64 = 0xFFFF_FFFF_0000_0001;
const SALT_IC: u64 = 0;
const SALT_SCENARIO_BASE: u64 = 1;

fn map_batches<T: Send>(count: u64, parallel: bool, f: impl Fn(u64) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        if parallel {
            return (0..count).into_par_iter().map(f).collect();
        }
    }
    let _ = parallel;
    (0..count).map(f).collect()
}

/// Calibrated alarm cutoff for the ranking-function baseline: scores below
/// the stored cutoff alarm.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct RfThreshold {
    /// Quantile level the cutoff was calibrated to.
    pub level: f64,
    pub cutoff: f64,
    pub samples: u64,
    pub rate: f64,
    pub dim: usize,
}

impl RfThreshold {
    pub fn alarms(&self, log_score: f64) -> bool {
        log_score < self.cutoff
    }
}

/// Draws `n_samples` in-control patterns, scores them, and returns the
/// empirical `level`-quantile of the log score as the alarm cutoff.
///
/// `level = 0` yields a never-alarming sentinel and `level = 1` the sample
/// maximum.
pub fn calibrate_rf_threshold(
    params: &PoissonRfsParams,
    level: f64,
    n_samples: u64,
    stream: &RngStream,
) -> Result<RfThreshold> {
    calibrate_rf_threshold_impl(params, level, n_samples, stream, true)
}

/// Sequential variant of [`calibrate_rf_threshold`]; same output.
pub fn calibrate_rf_threshold_seq(
    params: &PoissonRfsParams,
    level: f64,
    n_samples: u64,
    stream: &RngStream,
) -> Result<RfThreshold> {
    calibrate_rf_threshold_impl(params, level, n_samples, stream, false)
}

fn calibrate_rf_threshold_impl(
    params: &PoissonRfsParams,
    level: f64,
    n_samples: u64,
    stream: &RngStream,
    parallel: bool,
) -> Result<RfThreshold> {
    if !(0.0..=1.0).contains(&level) {
        return Err(Error::Domain(format!("quantile level must be in [0,1], got {level}")));
    }
    if n_samples == 0 {
        return Err(Error::Domain("calibration needs at least one sample".into()));
    }
    let mut scores = sample_rf_scores(params, n_samples, stream, parallel)?;
    let cutoff = if level == 0.0 {
        f64::NEG_INFINITY
    } else {
        scores.sort_unstable_by(f64::total_cmp);
        let k = ((level * n_samples as f64) as usize).min(scores.len() - 1);
        scores[k]
    };
    Ok(RfThreshold {
        level,
        cutoff,
        samples: n_samples,
        rate: params.rate(),
        dim: params.gauss().dim(),
    })
}

/// Scores `n_samples` fresh in-control draws; exposed so calibration can be
/// validated on a hold-out stream.
pub fn sample_rf_scores(
    params: &PoissonRfsParams,
    n_samples: u64,
    stream: &RngStream,
    parallel: bool,
) -> Result<Vec<f64>> {
    const CHUNK: u64 = 4096;
    let chunks = n_samples.div_ceil(CHUNK);
    let results = map_batches(chunks, parallel, |chunk| -> Result<Vec<f64>> {
        let mut rng = stream.child(chunk).rng();
        let lo = chunk * CHUNK;
        let hi = ((chunk + 1) * CHUNK).min(n_samples);
        let mut out = Vec::with_capacity((hi - lo) as usize);
        for _ in lo..hi {
            let n = crate::simulate::sample_poisson(params.rate(), &mut rng)?;
            let mut coords = Vec::with_capacity(n as usize * params.gauss().dim());
            for _ in 0..n {
                coords.extend(crate::simulate::sample_mvn(params.gauss(), &mut rng));
            }
            let x = PointPattern::new(1, params.gauss().dim(), coords)?;
            out.push(ranking_log_score(&x, params)?);
        }
        Ok(out)
    });
    let mut scores = Vec::with_capacity(n_samples as usize);
    for r in results {
        scores.extend(r?);
    }
    Ok(scores)
}

/// One detector configuration in the evaluation grid.
#[derive(Debug, Clone)]
pub struct PcConfigSpec {
    /// Short prior label used in result tables ("jeffreys", "informative").
    pub prior_label: String,
    pub alpha0: f64,
    pub prior: PriorSpec,
}

/// The six-detector grid: two priors crossed with three discount factors.
pub fn default_grid() -> Vec<PcConfigSpec> {
    let mut grid = Vec::new();
    for (label, prior) in [
        ("jeffreys", PriorSpec::jeffreys()),
        ("informative", PriorSpec::informative_bivariate()),
    ] {
        for alpha0 in [1.0, 0.9, 0.8] {
            grid.push(PcConfigSpec {
                prior_label: label.to_string(),
                alpha0,
                prior: prior.clone(),
            });
        }
    }
    grid
}

/// Index of a grid entry by prior label and discount factor.
pub fn grid_position(grid: &[PcConfigSpec], prior_label: &str, alpha0: f64) -> Option<usize> {
    grid.iter()
        .position(|c| c.prior_label == prior_label && c.alpha0 == alpha0)
}

#[derive(Debug, Clone)]
pub struct F1Options {
    pub horizon: u64,
    /// False-alarm rate for the detectors and quantile level for the
    /// ranking-function cutoff.
    pub alpha: f64,
    /// Sample count for the ranking-function calibration.
    pub rf_samples: u64,
}

impl Default for F1Options {
    fn default() -> Self {
        F1Options {
            horizon: 30,
            alpha: 0.01,
            rf_samples: 1_000_000,
        }
    }
}

/// Raw outcome of an F1 experiment: per-batch alarm indicators for every
/// method, scenario, and tested time, plus the calibrated ranking cutoff.
///
/// Method indices `0..grid.len()` are the detector configurations in grid
/// order; index `grid.len()` is the ranking-function baseline.
#[derive(Debug, Clone)]
pub struct F1Experiment {
    pub grid: Vec<PcConfigSpec>,
    pub scenarios: Vec<ScenarioKind>,
    pub horizon: u64,
    pub batches: u64,
    pub rf_threshold: RfThreshold,
    // Flattened [batch][method][scenario][t-2] and [batch][method][t-2].
    tp_flags: Vec<bool>,
    fp_flags: Vec<bool>,
}

impl F1Experiment {
    pub fn n_methods(&self) -> usize {
        self.grid.len() + 1
    }

    pub fn rf_index(&self) -> usize {
        self.grid.len()
    }

    fn n_times(&self) -> usize {
        (self.horizon - 1) as usize
    }

    fn tp_idx(&self, batch: usize, method: usize, scenario: usize, ti: usize) -> usize {
        ((batch * self.n_methods() + method) * self.scenarios.len() + scenario) * self.n_times()
            + ti
    }

    fn fp_idx(&self, batch: usize, method: usize, ti: usize) -> usize {
        (batch * self.n_methods() + method) * self.n_times() + ti
    }

    /// Fraction of contaminated batches alarming at time `t`.
    pub fn tp_rate(&self, method: usize, scenario: usize, t: u64) -> f64 {
        let ti = (t - 2) as usize;
        let hits = (0..self.batches as usize)
            .filter(|&b| self.tp_flags[self.tp_idx(b, method, scenario, ti)])
            .count();
        hits as f64 / self.batches as f64
    }

    /// Fraction of in-control batches alarming at time `t`.
    pub fn fp_rate(&self, method: usize, t: u64) -> f64 {
        let ti = (t - 2) as usize;
        let hits = (0..self.batches as usize)
            .filter(|&b| self.fp_flags[self.fp_idx(b, method, ti)])
            .count();
        hits as f64 / self.batches as f64
    }

    pub fn f1(&self, method: usize, scenario: usize, t: u64) -> f64 {
        let tp = self.tp_rate(method, scenario, t);
        let fp = self.fp_rate(method, t);
        f1_score(tp, fp, 1.0 - tp)
    }

    /// Flattens the experiment into result rows.
    pub fn table(&self) -> F1Table {
        let mut rows = Vec::new();
        for (mi, label) in self.method_labels().into_iter().enumerate() {
            for (si, scenario) in self.scenarios.iter().enumerate() {
                for t in 2..=self.horizon {
                    let tp = self.tp_rate(mi, si, t);
                    let fp = self.fp_rate(mi, t);
                    rows.push(F1Row {
                        method: label.0.clone(),
                        prior: label.1.clone(),
                        alpha0: label.2,
                        scenario: scenario.name().to_string(),
                        t,
                        tp,
                        fp,
                        fn_rate: 1.0 - tp,
                        f1: f1_score(tp, fp, 1.0 - tp),
                    });
                }
            }
        }
        F1Table { rows }
    }

    fn method_labels(&self) -> Vec<(String, String, Option<f64>)> {
        let mut labels: Vec<(String, String, Option<f64>)> = self
            .grid
            .iter()
            .map(|c| ("pc".to_string(), c.prior_label.clone(), Some(c.alpha0)))
            .collect();
        labels.push(("rf".to_string(), "-".to_string(), None));
        labels
    }

    /// Mean-over-time F1 difference (`base` minus `other`) on one scenario,
    /// with a paired bootstrap over batches.
    pub fn bootstrap_mean_f1_diff(
        &self,
        base: usize,
        other: usize,
        scenario: usize,
        resamples: u64,
        stream: &RngStream,
    ) -> BootstrapDiff {
        let b = self.batches as usize;
        let nt = self.n_times();
        let observed = self.mean_f1_diff_for(base, other, scenario, None);
        let mut rng = stream.rng();
        let mut draws = Vec::with_capacity(resamples as usize);
        let mut sample = vec![0usize; b];
        for _ in 0..resamples {
            for s in sample.iter_mut() {
                *s = rng.gen_range(0..b);
            }
            draws.push(self.mean_f1_diff_for(base, other, scenario, Some(&sample)));
        }
        draws.sort_unstable_by(f64::total_cmp);
        let q = |p: f64| draws[((p * resamples as f64) as usize).min(draws.len() - 1)];
        let _ = nt;
        BootstrapDiff {
            observed,
            quantile_05: q(0.05),
            quantile_95: q(0.95),
        }
    }

    fn mean_f1_diff_for(
        &self,
        base: usize,
        other: usize,
        scenario: usize,
        sample: Option<&[usize]>,
    ) -> f64 {
        let b = self.batches as usize;
        let nt = self.n_times();
        let mut acc = 0.0;
        for ti in 0..nt {
            let mut counts = [0usize; 4]; // tp_base, fp_base, tp_other, fp_other
            let bump = |batch: usize, counts: &mut [usize; 4]| {
                counts[0] += self.tp_flags[self.tp_idx(batch, base, scenario, ti)] as usize;
                counts[1] += self.fp_flags[self.fp_idx(batch, base, ti)] as usize;
                counts[2] += self.tp_flags[self.tp_idx(batch, other, scenario, ti)] as usize;
                counts[3] += self.fp_flags[self.fp_idx(batch, other, ti)] as usize;
            };
            match sample {
                Some(idx) => idx.iter().for_each(|&batch| bump(batch, &mut counts)),
                None => (0..b).for_each(|batch| bump(batch, &mut counts)),
            }
            let n = sample.map(|s| s.len()).unwrap_or(b) as f64;
            let (tp1, fp1) = (counts[0] as f64 / n, counts[1] as f64 / n);
            let (tp2, fp2) = (counts[2] as f64 / n, counts[3] as f64 / n);
            acc += f1_score(tp1, fp1, 1.0 - tp1) - f1_score(tp2, fp2, 1.0 - tp2);
        }
        acc / nt as f64
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BootstrapDiff {
    pub observed: f64,
    pub quantile_05: f64,
    pub quantile_95: f64,
}

/// `F1 = 2 tp / (2 tp + fp + fn)`, zero when the denominator vanishes.
pub fn f1_score(tp: f64, fp: f64, fn_rate: f64) -> f64 {
    let den = 2.0 * tp + fp + fn_rate;
    if den <= 0.0 {
        0.0
    } else {
        2.0 * tp / den
    }
}

#[derive(Debug, Clone)]
pub struct F1Row {
    pub method: String,
    pub prior: String,
    pub alpha0: Option<f64>,
    pub scenario: String,
    pub t: u64,
    pub tp: f64,
    pub fp: f64,
    pub fn_rate: f64,
    pub f1: f64,
}

#[derive(Debug, Clone)]
pub struct F1Table {
    pub rows: Vec<F1Row>,
}

pub const F1_CSV_SCHEMA: &str = "# rfsmon-f1-csv/1";

impl F1Table {
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{F1_CSV_SCHEMA}")?;
        writeln!(w, "method,prior,alpha0,scenario,t,tp,fp,fn,f1")?;
        for r in &self.rows {
            let alpha0 = r.alpha0.map(|a| a.to_string()).unwrap_or_else(|| "-".into());
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                r.method, r.prior, alpha0, r.scenario, r.t, r.tp, r.fp, r.fn_rate, r.f1
            )?;
        }
        Ok(())
    }
}

/// Runs the paired experiment: every batch draws one in-control sequence,
/// and at each tested time the contaminated observation replaces the
/// in-control one against the posterior accumulated so far.
pub fn run_f1_experiment(
    grid: &[PcConfigSpec],
    scenarios: &[ScenarioKind],
    batches: u64,
    opts: &F1Options,
    stream: &RngStream,
) -> Result<F1Experiment> {
    run_f1_experiment_impl(grid, scenarios, batches, opts, stream, true)
}

/// Sequential variant of [`run_f1_experiment`]; same output.
pub fn run_f1_experiment_seq(
    grid: &[PcConfigSpec],
    scenarios: &[ScenarioKind],
    batches: u64,
    opts: &F1Options,
    stream: &RngStream,
) -> Result<F1Experiment> {
    run_f1_experiment_impl(grid, scenarios, batches, opts, stream, false)
}

fn run_f1_experiment_impl(
    grid: &[PcConfigSpec],
    scenarios: &[ScenarioKind],
    batches: u64,
    opts: &F1Options,
    stream: &RngStream,
    parallel: bool,
) -> Result<F1Experiment> {
    if batches == 0 {
        return Err(Error::InvalidConfig("batches must be >= 1".into()));
    }
    if opts.horizon < 2 {
        return Err(Error::InvalidConfig("horizon must be >= 2".into()));
    }
    for s in scenarios {
        if s.contamination().is_none() {
            return Err(Error::InvalidScenario(format!(
                "scenario {} has no contamination to evaluate",
                s.name()
            )));
        }
    }

    let ic_params = PoissonRfsParams::new(
        crate::simulate::IC_RATE,
        crate::rfs::GaussParams::standard(crate::simulate::IC_DIM),
    )?;
    let rf_threshold = calibrate_rf_threshold_impl(
        &ic_params,
        opts.alpha,
        opts.rf_samples,
        &stream.child(SALT_RF_CALIBRATION),
        parallel,
    )?;

    let n_methods = grid.len() + 1;
    let n_times = (opts.horizon - 1) as usize;
    let tp_per_batch = n_methods * scenarios.len() * n_times;
    let fp_per_batch = n_methods * n_times;

    let results = map_batches(batches, parallel, |batch| -> Result<(Vec<bool>, Vec<bool>)> {
        run_one_batch(
            grid,
            scenarios,
            opts,
            &ic_params,
            &rf_threshold,
            &stream.child(batch),
        )
    });

    let mut tp_flags = Vec::with_capacity(batches as usize * tp_per_batch);
    let mut fp_flags = Vec::with_capacity(batches as usize * fp_per_batch);
    for r in results {
        let (tp, fp) = r?;
        debug_assert_eq!(tp.len(), tp_per_batch);
        debug_assert_eq!(fp.len(), fp_per_batch);
        tp_flags.extend(tp);
        fp_flags.extend(fp);
    }

    Ok(F1Experiment {
        grid: grid.to_vec(),
        scenarios: scenarios.to_vec(),
        horizon: opts.horizon,
        batches,
        rf_threshold,
        tp_flags,
        fp_flags,
    })
}

fn run_one_batch(
    grid: &[PcConfigSpec],
    scenarios: &[ScenarioKind],
    opts: &F1Options,
    ic_params: &PoissonRfsParams,
    rf_threshold: &RfThreshold,
    batch_stream: &RngStream,
) -> Result<(Vec<bool>, Vec<bool>)> {
    let n_methods = grid.len() + 1;
    let n_times = (opts.horizon - 1) as usize;
    let mut tp = vec![false; n_methods * scenarios.len() * n_times];
    let mut fp = vec![false; n_methods * n_times];
    let tp_at = |method: usize, scenario: usize, ti: usize| {
        (method * scenarios.len() + scenario) * n_times + ti
    };
    let fp_at = |method: usize, ti: usize| method * n_times + ti;

    let ic_seq = gen_batch(
        &ScenarioSpec::ic(opts.horizon)?,
        &batch_stream.child(SALT_IC),
    )?;

    // Pre-draw one contaminated observation per (scenario, tested time).
    let mut contaminated: Vec<Vec<PointPattern>> = Vec::with_capacity(scenarios.len());
    for (si, kind) in scenarios.iter().enumerate() {
        let mut rng = batch_stream.child(SALT_SCENARIO_BASE + si as u64).rng();
        let per_t: Result<Vec<PointPattern>> = (2..=opts.horizon)
            .map(|t| gen_contaminated_observation(*kind, t, &mut rng))
            .collect();
        contaminated.push(per_t?);
    }

    let mut detectors: Vec<Detector> = grid
        .iter()
        .map(|c| {
            Detector::new(
                DetectorConfig::jeffreys(crate::simulate::IC_DIM)
                    .with_prior(c.prior.clone())
                    .with_alpha0(DiscountFactor::new(c.alpha0)?)
                    .with_alpha(opts.alpha),
            )
        })
        .collect::<Result<_>>()?;

    for det in &mut detectors {
        det.observe(&ic_seq[0])?;
    }

    for t in 2..=opts.horizon {
        let ti = (t - 2) as usize;
        let x_ic = &ic_seq[(t - 1) as usize];
        for (mi, det) in detectors.iter_mut().enumerate() {
            for si in 0..scenarios.len() {
                let x_ooc = &contaminated[si][ti];
                let alarmed = det.check_only(x_ooc)?.map(|c| c.alarm).unwrap_or(false);
                tp[tp_at(mi, si, ti)] = alarmed;
            }
            let step = det.observe(x_ic)?;
            fp[fp_at(mi, ti)] = step.alarmed();
        }
        let rf_mi = grid.len();
        for si in 0..scenarios.len() {
            let score = ranking_log_score(&contaminated[si][ti], ic_params)?;
            tp[tp_at(rf_mi, si, ti)] = rf_threshold.alarms(score);
        }
        fp[fp_at(rf_mi, ti)] = rf_threshold.alarms(ranking_log_score(x_ic, ic_params)?);
    }
    Ok((tp, fp))
}

/// One row of the rate-tracking table: the smooth-rate sequence with the
/// posterior rate mean per discount factor, always-update policy.
#[derive(Debug, Clone)]
pub struct TrackRow {
    pub t: u64,
    pub n: u64,
    pub rate: f64,
    pub means: Vec<f64>,
}

pub const TRACK_CSV_SCHEMA: &str = "# rfsmon-track-csv/1";

/// Runs one smooth-rate sequence and records the posterior rate mean per
/// discount factor after each observation.
pub fn track_rate_table(alpha0s: &[f64], stream: &RngStream) -> Result<Vec<TrackRow>> {
    let factors: Vec<DiscountFactor> = alpha0s
        .iter()
        .map(|&a| DiscountFactor::new(a))
        .collect::<Result<_>>()?;
    let batch = gen_batch(&ScenarioSpec::fig1(), stream)?;
    let mut posteriors: Vec<GammaPosterior> =
        factors.iter().map(|_| GammaPosterior::new(0.5, 0.0)).collect();
    let mut rows = Vec::with_capacity(FIG1_HORIZON as usize);
    for x in &batch {
        let n = x.len() as u64;
        let mut means = Vec::with_capacity(factors.len());
        for (g, a) in posteriors.iter_mut().zip(&factors) {
            g.update(n, *a);
            means.push(g.rate_mean()?);
        }
        rows.push(TrackRow {
            t: x.t(),
            n,
            rate: fig1_rate(x.t()),
            means,
        });
    }
    Ok(rows)
}

pub fn write_track_csv<W: Write>(rows: &[TrackRow], alpha0s: &[f64], mut w: W) -> io::Result<()> {
    writeln!(w, "{TRACK_CSV_SCHEMA}")?;
    let cols: Vec<String> = alpha0s.iter().map(|a| format!("mean_a{a}")).collect();
    writeln!(w, "t,n,lambda,{}", cols.join(","))?;
    for r in rows {
        let means: Vec<String> = r.means.iter().map(|m| m.to_string()).collect();
        writeln!(w, "{},{},{},{}", r.t, r.n, r.rate, means.join(","))?;
    }
    Ok(())
}
