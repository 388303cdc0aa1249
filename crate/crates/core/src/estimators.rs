//! Monte Carlo experiments over a scaling grid, distances to normality,
//! variance scaling fits, and empirical Mecke and p-Poincaré checks.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{CostContext, FunctionalSpec, Weight};
use crate::geometry::ConvexBody;
use crate::graphs::{Family, GridIndex};
use crate::sampling::{sample_poisson, sample_poisson_with_marks, sample_uniform, MarkedPoint, MarkedPointConfig, RngStream};

// ---------------------------------------------------------------------------
// Normal distribution

/// Standard normal distribution function.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

// Acklam's rational approximation, relative error below 1.2e-9.
const QA: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_69e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239,
];
const QB: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const QC: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838,
    -2.549_732_539_343_734,
    4.374_664_141_464_968,
    2.938_163_982_698_783,
];
const QD: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996,
    3.754_408_661_907_416,
];

fn quantile_rational(p: f64) -> f64 {
    const LOW: f64 = 0.024_25;
    let tail = |q: f64| {
        (((((QC[0] * q + QC[1]) * q + QC[2]) * q + QC[3]) * q + QC[4]) * q + QC[5])
            / ((((QD[0] * q + QD[1]) * q + QD[2]) * q + QD[3]) * q + 1.0)
    };
    if p < LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p > 1.0 - LOW {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((QA[0] * r + QA[1]) * r + QA[2]) * r + QA[3]) * r + QA[4]) * r + QA[5]) * q
            / (((((QB[0] * r + QB[1]) * r + QB[2]) * r + QB[3]) * r + QB[4]) * r + 1.0)
    }
}

/// Standard normal quantile: a symmetric rational approximation refined by
/// one Newton step.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::arg(format!("quantile level must be in (0,1), got {p}")));
    }
    let z = quantile_rational(p);
    let dens = normal_pdf(z);
    if dens > 0.0 {
        Ok(z - (normal_cdf(z) - p) / dens)
    } else {
        Ok(z)
    }
}

// ---------------------------------------------------------------------------
// Basic sample statistics

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Jackknife standard error of the unbiased sample variance, using the
/// closed-form leave-one-out variances. For two samples the normal-theory
/// value `var · sqrt(2 / (n − 1))` is returned.
pub fn variance_jackknife_se(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let v = sample_variance(xs);
    if n == 2 {
        return v * (2.0f64 / (n as f64 - 1.0)).sqrt();
    }
    let m = mean(xs);
    let c: Vec<f64> = xs.iter().map(|x| x - m).collect();
    let s1: f64 = c.iter().sum();
    let s2: f64 = c.iter().map(|x| x * x).sum();
    let nf = n as f64;
    let loo: Vec<f64> = c
        .iter()
        .map(|&x| {
            let mi = (s1 - x) / (nf - 1.0);
            (s2 - x * x - (nf - 1.0) * mi * mi) / (nf - 2.0)
        })
        .collect();
    let lm = mean(&loo);
    ((nf - 1.0) / nf * loo.iter().map(|l| (l - lm) * (l - lm)).sum::<f64>()).sqrt()
}

/// Standardizes by the sample mean and the population standard deviation
/// (divisor `n`).
pub fn standardize(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.len() < 2 {
        return Err(Error::arg("at least two samples are needed"));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::numeric("non-finite sample"));
    }
    let m = mean(samples);
    let var = samples.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / samples.len() as f64;
    if !(var > 0.0) {
        return Err(Error::numeric("samples have zero variance"));
    }
    let sd = var.sqrt();
    Ok(samples.iter().map(|x| (x - m) / sd).collect())
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

/// Kolmogorov distance between the standardized empirical distribution and
/// the standard normal: the largest gap at either one-sided limit of each
/// jump of the empirical distribution function.
pub fn kolmogorov_to_normal(samples: &[f64]) -> Result<f64> {
    let z = sorted(standardize(samples)?);
    let n = z.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &zi) in z.iter().enumerate() {
        let f = normal_cdf(zi);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    Ok(d.clamp(0.0, 1.0))
}

/// Quantile-coupling estimate `(1/n) Σ |z_(i) − Φ⁻¹((i − ½)/n)|` of the
/// Wasserstein-1 distance to the standard normal.
pub fn wasserstein1_to_normal(samples: &[f64]) -> Result<f64> {
    let z = sorted(standardize(samples)?);
    let n = z.len() as f64;
    let mut s = 0.0;
    for (i, &zi) in z.iter().enumerate() {
        s += (zi - normal_quantile((i as f64 + 0.5) / n)?).abs();
    }
    Ok(s / n)
}

/// Bootstrap standard error of the Kolmogorov distance.
pub fn kolmogorov_bootstrap_se(samples: &[f64], resamples: usize, stream: RngStream) -> Result<f64> {
    let mut rng = stream.rng();
    let n = samples.len();
    let mut stats = Vec::with_capacity(resamples);
    let mut buf = vec![0.0; n];
    for _ in 0..resamples {
        for b in buf.iter_mut() {
            *b = samples[rng.random_range(0..n)];
        }
        // a degenerate resample carries no information about the spread
        if let Ok(d) = kolmogorov_to_normal(&buf) {
            stats.push(d);
        }
    }
    if stats.len() < 2 {
        return Err(Error::numeric("bootstrap produced too few usable resamples"));
    }
    Ok(sample_variance(&stats).sqrt())
}

// ---------------------------------------------------------------------------
// Scaling fits

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    /// `var / (t^d log t^d)` per grid point.
    pub log_corrected_ratio: Vec<f64>,
}

/// Least-squares fit of `log var` on `log t`.
pub fn fit_variance_scaling(ts: &[f64], vars: &[f64], d: usize) -> Result<ScalingFit> {
    if ts.len() != vars.len() {
        return Err(Error::arg("grid and variances differ in length"));
    }
    if ts.len() < 3 {
        return Err(Error::arg("a scaling fit needs at least three grid points"));
    }
    if let Some(v) = vars.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::numeric(format!("nonpositive variance {v}")));
    }
    if ts.iter().any(|t| !(*t > 1.0)) {
        return Err(Error::arg("grid points must exceed 1 for the log-corrected ratio"));
    }
    let x: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let y: Vec<f64> = vars.iter().map(|v| v.ln()).collect();
    let mx = mean(&x);
    let my = mean(&y);
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = x
        .iter()
        .zip(&y)
        .map(|(a, b)| {
            let r = b - intercept - slope * a;
            r * r
        })
        .sum();
    let slope_stderr = (ssr / (x.len() as f64 - 2.0) / sxx).sqrt();
    let df = d as f64;
    let log_corrected_ratio = ts
        .iter()
        .zip(vars)
        .map(|(t, v)| {
            let td = t.powf(df);
            v / (td * td.ln())
        })
        .collect();
    Ok(ScalingFit {
        slope,
        intercept,
        slope_stderr,
        log_corrected_ratio,
    })
}

/// `(max − min) / max` of a positive sequence.
pub fn relative_variation(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    (max - min) / max
}

/// Indices `i` where `xs[i]` exceeds `xs[i-1]` by more than `k` standard
/// errors of the difference; empty when the sequence is nonincreasing up to
/// Monte Carlo noise.
pub fn increases_beyond(xs: &[f64], ses: &[f64], k: f64) -> Vec<usize> {
    (1..xs.len().min(ses.len()))
        .filter(|&i| xs[i] - xs[i - 1] > k * (ses[i] * ses[i] + ses[i - 1] * ses[i - 1]).sqrt())
        .collect()
}

// ---------------------------------------------------------------------------
// Experiments

/// Connection radius of the Gilbert graph as a function of `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum EpsilonRule {
    Constant { epsilon: f64 },
    /// `ε_t^d = t^{−θ}`.
    Power { theta: f64 },
}

impl EpsilonRule {
    pub fn epsilon(&self, t: f64, d: usize) -> f64 {
        match *self {
            EpsilonRule::Constant { epsilon } => epsilon,
            EpsilonRule::Power { theta } => t.powf(-theta / d as f64),
        }
    }
}

/// A Monte Carlo experiment over a grid of scaling parameters.
///
/// For the Gilbert graph `t` scales the intensity (`tλ` on the window); for
/// the other families `t` dilates the window (`λ` on `tH`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub functional: FunctionalSpec,
    pub body: ConvexBody,
    pub t_grid: Vec<f64>,
    pub intensity: f64,
    pub epsilon_rule: Option<EpsilonRule>,
    pub replicates: usize,
    pub base_seed: u64,
    /// Task tag folded into the stream ids.
    pub stream_tag: u8,
    pub max_points: usize,
    /// Worker threads; 0 means the rayon default.
    pub workers: usize,
    /// Bootstrap resamples for the Kolmogorov standard error; 0 disables.
    pub bootstrap: usize,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.functional.validate(self.body.dim())?;
        if self.t_grid.is_empty() {
            return Err(Error::arg("t grid is empty"));
        }
        if self.t_grid.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            return Err(Error::arg("t grid values must be positive"));
        }
        if self.t_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::arg("t grid must be strictly increasing"));
        }
        if !(self.intensity > 0.0) || !self.intensity.is_finite() {
            return Err(Error::arg("intensity must be positive"));
        }
        if self.replicates < 2 {
            return Err(Error::arg("at least two replicates are needed"));
        }
        if let Some(EpsilonRule::Constant { epsilon }) = self.epsilon_rule {
            if !(epsilon > 0.0) {
                return Err(Error::arg("epsilon must be positive"));
            }
        }
        Ok(())
    }

    /// Functional, window and intensity at scaling parameter `t`.
    pub fn setting_at(&self, t: f64) -> Result<(FunctionalSpec, ConvexBody, f64)> {
        let d = self.body.dim();
        match self.functional.family {
            Family::Gilbert { epsilon } => {
                let eps = self.epsilon_rule.map_or(epsilon, |r| r.epsilon(t, d));
                let f = FunctionalSpec::new(Family::Gilbert { epsilon: eps }, self.functional.weight);
                Ok((f, self.body.clone(), t * self.intensity))
            }
            _ => Ok((self.functional, self.body.scale(t)?, self.intensity)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TRow {
    pub t: f64,
    pub epsilon: Option<f64>,
    pub n_mean: f64,
    pub mean: f64,
    pub mean_se: f64,
    pub var: f64,
    pub var_se: f64,
    pub d_k: f64,
    pub d_k_se: Option<f64>,
    pub d_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub rows: Vec<TRow>,
    pub fit: Option<ScalingFit>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub report: EstimateReport,
    /// Functional values per grid point, in replicate order.
    pub samples: Vec<Vec<f64>>,
    /// Point counts per grid point, in replicate order.
    pub counts: Vec<Vec<usize>>,
}

pub(crate) fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::arg(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

fn check_capacity(cfg: &MarkedPointConfig, cap: usize) -> Result<()> {
    if cfg.len() > cap {
        return Err(Error::Capacity {
            points: cfg.len(),
            cap,
        });
    }
    Ok(())
}

/// Summary statistics of one grid point.
pub fn summarize(t: f64, epsilon: Option<f64>, values: &[f64], counts: &[usize], bootstrap: Option<(usize, RngStream)>) -> Result<TRow> {
    let n = values.len() as f64;
    let var = sample_variance(values);
    let d_k = kolmogorov_to_normal(values)?;
    let d_k_se = match bootstrap {
        Some((b, stream)) if b > 0 => Some(kolmogorov_bootstrap_se(values, b, stream)?),
        _ => None,
    };
    Ok(TRow {
        t,
        epsilon,
        n_mean: counts.iter().sum::<usize>() as f64 / n,
        mean: mean(values),
        mean_se: (var / n).sqrt(),
        var,
        var_se: variance_jackknife_se(values),
        d_k,
        d_k_se,
        d_w: wasserstein1_to_normal(values)?,
    })
}

/// Runs the experiment; deterministic in `base_seed` and independent of the
/// worker count.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let marked = spec.functional.family == Family::Onng;
    let mut rows = Vec::new();
    let mut all_samples = Vec::new();
    let mut all_counts = Vec::new();
    for (ti, &t) in spec.t_grid.iter().enumerate() {
        let (functional, window, lambda) = spec.setting_at(t)?;
        let results: Vec<(f64, usize)> = with_workers(spec.workers, || {
            (0..spec.replicates)
                .into_par_iter()
                .map(|rep| {
                    let stream = RngStream::derive(spec.base_seed, spec.stream_tag, ti, rep);
                    let cfg = sample_poisson(&window, lambda, marked, stream)?;
                    check_capacity(&cfg, spec.max_points)?;
                    let value = CostContext::new(functional, &cfg)?.value()?;
                    Ok((value, cfg.len()))
                })
                .collect::<Result<Vec<_>>>()
        })??;
        let values: Vec<f64> = results.iter().map(|r| r.0).collect();
        let counts: Vec<usize> = results.iter().map(|r| r.1).collect();
        let eps = match functional.family {
            Family::Gilbert { epsilon } => Some(epsilon),
            _ => None,
        };
        // bootstrap streams sit in replicate slot 2^32 − 1 of their grid index
        let boot = (spec.bootstrap > 0).then(|| {
            (
                spec.bootstrap,
                RngStream::derive(spec.base_seed, spec.stream_tag, ti, u32::MAX as usize),
            )
        });
        rows.push(summarize(t, eps, &values, &counts, boot)?);
        all_samples.push(values);
        all_counts.push(counts);
    }
    let fit = if rows.len() >= 3 && spec.t_grid.iter().all(|&t| t > 1.0) {
        let vars: Vec<f64> = rows.iter().map(|r| r.var).collect();
        Some(fit_variance_scaling(&spec.t_grid, &vars, spec.body.dim())?)
    } else {
        None
    };
    Ok(ExperimentOutput {
        report: EstimateReport { rows, fit },
        samples: all_samples,
        counts: all_counts,
    })
}

// ---------------------------------------------------------------------------
// Mecke formula

/// Bounded test functions `h(χ, w)` for the Mecke check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "h", rename_all = "snake_case")]
pub enum MeckeFn {
    One,
    /// `min(1, distance from w to the nearest other point)`.
    NearestCapped,
    /// Indicator that another point lies within `radius` of `w`.
    NeighbourWithin { radius: f64 },
}

impl MeckeFn {
    pub fn catalogue() -> Vec<MeckeFn> {
        vec![
            MeckeFn::One,
            MeckeFn::NearestCapped,
            MeckeFn::NeighbourWithin { radius: 0.25 },
        ]
    }

    /// `h` at `w` given the distance to the nearest other point.
    fn eval(&self, nearest: Option<f64>) -> f64 {
        match *self {
            MeckeFn::One => 1.0,
            MeckeFn::NearestCapped => nearest.map_or(1.0, |d| d.min(1.0)),
            MeckeFn::NeighbourWithin { radius } => {
                if nearest.is_some_and(|d| d < radius) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub lhs: f64,
    pub lhs_se: f64,
    pub rhs: f64,
    pub rhs_se: f64,
    /// Standard error of `margin`.
    pub pooled_se: f64,
    /// `rhs − lhs`.
    pub margin: f64,
    pub pass: bool,
}

/// Standard error of the mean.
pub fn mean_se(xs: &[f64]) -> f64 {
    (sample_variance(xs) / xs.len() as f64).sqrt()
}

/// Number of uniform probe points per replicate for the integral sides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckSettings {
    pub replicates: usize,
    pub probes: usize,
    pub base_seed: u64,
    pub stream_tag: u8,
    pub workers: usize,
}

/// Compares `E Σ_{w∈χ} h(χ, w)` with `E ∫ h(χ + δ_w, w) λ dw`.
pub fn mecke_check(h: MeckeFn, body: &ConvexBody, intensity: f64, settings: CheckSettings) -> Result<CheckReport> {
    if settings.replicates < 2 || settings.probes == 0 {
        return Err(Error::arg("need at least two replicates and one probe"));
    }
    let mass = intensity * body.volume();
    let per_rep: Vec<(f64, f64)> = with_workers(settings.workers, || {
        (0..settings.replicates)
            .into_par_iter()
            .map(|rep| {
                let stream = RngStream::derive(settings.base_seed, settings.stream_tag, 0, rep);
                let mut rng: ChaCha8Rng = stream.rng();
                let cfg = sample_poisson_with_marks(body, intensity, None, &mut rng)?;
                let grid = GridIndex::with_all(body, cfg.coords(), 0.0);
                let lhs: f64 = (0..cfg.len())
                    .map(|i| h.eval(grid.nearest(cfg.position(i), |j| j != i).map(|n| n.dist)))
                    .sum();
                let mut rhs = 0.0;
                for _ in 0..settings.probes {
                    let w = sample_uniform(body, &mut rng);
                    rhs += h.eval(grid.nearest(&w, |_| true).map(|n| n.dist));
                }
                Ok((lhs, rhs * mass / settings.probes as f64))
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let l: Vec<f64> = per_rep.iter().map(|p| p.0).collect();
    let r: Vec<f64> = per_rep.iter().map(|p| p.1).collect();
    // both sides come from the same configuration and are negatively
    // correlated (more points: larger sum, closer neighbours), so the
    // margin's error is taken from the paired differences
    let diffs: Vec<f64> = per_rep.iter().map(|p| p.1 - p.0).collect();
    Ok(check_report(mean(&l), mean_se(&l), mean(&r), mean_se(&r), mean_se(&diffs), |m, s| {
        m.abs() <= 3.0 * s
    }))
}

fn check_report(
    lhs: f64,
    lhs_se: f64,
    rhs: f64,
    rhs_se: f64,
    pooled_se: f64,
    pass: impl Fn(f64, f64) -> bool,
) -> CheckReport {
    let margin = rhs - lhs;
    CheckReport {
        lhs,
        lhs_se,
        rhs,
        rhs_se,
        pooled_se,
        margin,
        pass: pass(margin, pooled_se),
    }
}

// ---------------------------------------------------------------------------
// p-Poincaré inequality

/// Functionals for the p-Poincaré check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PoincareFunctional {
    /// Number of points; its add-one cost is identically one.
    Count,
    Graph { spec: FunctionalSpec },
}

impl PoincareFunctional {
    fn marked(&self) -> bool {
        matches!(self, PoincareFunctional::Graph { spec } if spec.family == Family::Onng)
    }
}

/// Catalogue used by the verification suites, with the window each entry
/// is checked on.
pub fn poincare_catalogue() -> Vec<(PoincareFunctional, ConvexBody)> {
    let ball = |d: usize, r: f64| ConvexBody::ball(vec![0.0; d], r).expect("valid ball");
    vec![
        (PoincareFunctional::Count, ConvexBody::unit_cube(2)),
        (
            PoincareFunctional::Graph {
                spec: FunctionalSpec::power(Family::Onng, 0.3),
            },
            ConvexBody::cuboid(vec![0.0], vec![20.0]).expect("valid box"),
        ),
        (
            PoincareFunctional::Graph {
                spec: FunctionalSpec::power(Family::Gilbert { epsilon: 0.3 }, 1.0),
            },
            ConvexBody::unit_cube(2),
        ),
        (
            PoincareFunctional::Graph {
                spec: FunctionalSpec::new(Family::Knn { k: 2 }, Weight::PhiExp),
            },
            ConvexBody::cuboid(vec![0.0, 0.0], vec![4.0, 4.0]).expect("valid box"),
        ),
        (
            PoincareFunctional::Graph {
                spec: FunctionalSpec::new(Family::Rst, Weight::PhiExp),
            },
            ball(2, 2.5),
        ),
    ]
}

/// Jackknife standard error of `mean|F|^p − |mean F|^p`.
fn poincare_lhs_jackknife(fs: &[f64], p: f64) -> f64 {
    let n = fs.len() as f64;
    let s1: f64 = fs.iter().sum();
    let sp: f64 = fs.iter().map(|f| f.abs().powf(p)).sum();
    let loo: Vec<f64> = fs
        .iter()
        .map(|f| (sp - f.abs().powf(p)) / (n - 1.0) - ((s1 - f) / (n - 1.0)).abs().powf(p))
        .collect();
    let m = mean(&loo);
    ((n - 1.0) / n * loo.iter().map(|l| (l - m) * (l - m)).sum::<f64>()).sqrt()
}

/// Checks `E|F|^p − |E F|^p ≤ 2^{2−p} E ∫ |D_x F|^p λ(dx)`, passing when the
/// margin is at least `−3` pooled standard errors.
pub fn poincare_check(
    functional: PoincareFunctional,
    p: f64,
    body: &ConvexBody,
    intensity: f64,
    settings: CheckSettings,
) -> Result<CheckReport> {
    if !(1.0..=2.0).contains(&p) {
        return Err(Error::arg(format!("p must lie in [1,2], got {p}")));
    }
    if settings.replicates < 3 || settings.probes == 0 {
        return Err(Error::arg("need at least three replicates and one probe"));
    }
    let marked = functional.marked();
    let mass = intensity * body.volume();
    let per_rep: Vec<(f64, f64)> = with_workers(settings.workers, || {
        (0..settings.replicates)
            .into_par_iter()
            .map(|rep| {
                let stream = RngStream::derive(settings.base_seed, settings.stream_tag, 0, rep);
                let mut rng: ChaCha8Rng = stream.rng();
                let cfg = sample_poisson_with_marks(body, intensity, marked.then_some((0.0, 1.0)), &mut rng)?;
                match functional {
                    PoincareFunctional::Count => Ok((cfg.len() as f64, mass)),
                    PoincareFunctional::Graph { spec } => {
                        let ctx = CostContext::new(spec, &cfg)?;
                        let f = ctx.value()?;
                        let mut acc = 0.0;
                        for _ in 0..settings.probes {
                            let x = sample_uniform(body, &mut rng);
                            let s = marked.then(|| rng.random::<f64>());
                            let d = ctx.add_one_cost(&MarkedPoint::new(x, s))?.first_order;
                            acc += d.abs().powf(p);
                        }
                        Ok((f, acc * mass / settings.probes as f64))
                    }
                }
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let fs: Vec<f64> = per_rep.iter().map(|r| r.0).collect();
    let ds: Vec<f64> = per_rep.iter().map(|r| r.1).collect();
    let lhs = mean(&fs.iter().map(|f| f.abs().powf(p)).collect::<Vec<_>>()) - mean(&fs).abs().powf(p);
    let c = 2f64.powf(2.0 - p);
    let (lhs_se, rhs_se) = (poincare_lhs_jackknife(&fs, p), c * mean_se(&ds));
    Ok(check_report(
        lhs,
        lhs_se,
        c * mean(&ds),
        rhs_se,
        lhs_se.hypot(rhs_se),
        |m, s| m >= -3.0 * s,
    ))
}

// ---------------------------------------------------------------------------
// Conditional add-one cost

/// Nested Monte Carlo estimate of `E[|D_{(x,s)} F| | points with mark < s]`:
/// the points of `cfg` with mark below `s` are kept and the remaining
/// marks in `[s, 1]` are resampled `inner_replicates` times.
pub fn conditional_cost_estimator(
    spec: &FunctionalSpec,
    cfg: &MarkedPointConfig,
    intensity: f64,
    probe: &MarkedPoint,
    inner_replicates: usize,
    stream: RngStream,
) -> Result<f64> {
    let s = probe
        .mark
        .ok_or_else(|| Error::arg("probe needs a mark"))?;
    if !(s > 0.0 && s <= 1.0) {
        return Err(Error::arg(format!("probe mark must lie in (0,1], got {s}")));
    }
    if inner_replicates == 0 {
        return Err(Error::arg("need at least one inner replicate"));
    }
    let marks = cfg.marks().ok_or_else(|| Error::arg("configuration must be marked"))?;
    let past = cfg.filter(|i| marks[i] < s);
    let mut rng = stream.rng();
    let mut acc = 0.0;
    for _ in 0..inner_replicates {
        let future = sample_poisson_with_marks(cfg.body(), intensity, Some((s, 1.0)), &mut rng)?;
        let full = past.concat(&future)?;
        acc += CostContext::new(*spec, &full)?.add_one_cost(probe)?.first_order.abs();
    }
    Ok(acc / inner_replicates as f64)
}

// ---------------------------------------------------------------------------
// Compound Poisson example

/// Values of `Σ_{i ≤ N(T)} X_i` with `X_i = ±1` read off uniform marks on a
/// Poisson process of unit intensity on `[0, T]`.
pub fn compound_poisson_samples(horizon: f64, replicates: usize, base_seed: u64, stream_tag: u8, workers: usize) -> Result<Vec<f64>> {
    let body = ConvexBody::cuboid(vec![0.0], vec![horizon])?;
    with_workers(workers, || {
        (0..replicates)
            .into_par_iter()
            .map(|rep| {
                let cfg = sample_poisson(&body, 1.0, true, RngStream::derive(base_seed, stream_tag, 0, rep))?;
                let marks = cfg.marks().expect("marked");
                Ok(marks.iter().map(|&m| if m < 0.5 { 1.0 } else { -1.0 }).sum())
            })
            .collect::<Result<Vec<f64>>>()
    })?
}
