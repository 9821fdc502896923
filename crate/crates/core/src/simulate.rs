//! Seedable generators for the in-control process, the out-of-control
//! scenarios, and the smooth-rate tracking sequence.
//!
//! Every generator draws from an [`RngStream`], a (seed, stream id) pair.
//! Distinct stream ids yield independent sequences and the same pair always
//! reproduces the same draws, so batches can fan out across threads without
//! losing determinism.

use crate::error::{Error, Result};
use crate::rfs::{GaussParams, PointPattern};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Baseline in-control process: Pois(10) cardinality, standard bivariate
/// features.
pub const IC_RATE: f64 = 10.0;
pub const IC_DIM: usize = 2;

/// A reproducible random stream. The generator seed is derived from the
/// (seed, id) pair with a splitmix64-style avalanche mixer, so ids may be
/// assigned in any order (e.g. one per parallel batch).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
    id: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, id: u64) -> Self {
        RngStream { seed, id }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    /// Child stream for a sub-task; mixing is not commutative in (id, salt)
    /// so distinct derivation paths stay distinct.
    pub fn child(&self, salt: u64) -> RngStream {
        RngStream {
            seed: splitmix64(self.seed ^ splitmix64(self.id)),
            id: salt,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(splitmix64(self.seed ^ splitmix64(self.id)))
    }
}

/// Exact Poisson sampler by inversion (sequential search along the CDF).
/// Suited to the moderate rates used here; the running product underflows
/// for rates beyond ~700.
pub fn sample_poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> Result<u64> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::Domain(format!("rate must be positive, got {lambda}")));
    }
    if lambda > 700.0 {
        return Err(Error::Domain(format!(
            "inversion sampler limited to rates <= 700, got {lambda}"
        )));
    }
    let u: f64 = rng.gen();
    let mut pmf = (-lambda).exp();
    let mut cdf = pmf;
    let mut k = 0u64;
    while u > cdf {
        k += 1;
        pmf *= lambda / k as f64;
        cdf += pmf;
        if pmf < f64::MIN_POSITIVE && u > cdf {
            // Beyond representable tail mass; u was astronomically unlucky.
            break;
        }
    }
    Ok(k)
}

/// Exact multivariate normal sampler: mean plus the Cholesky factor applied
/// to standard-normal draws.
pub fn sample_mvn<R: Rng + ?Sized>(g: &GaussParams, rng: &mut R) -> Vec<f64> {
    let z: Vec<f64> = (0..g.dim()).map(|_| rng.sample(StandardNormal)).collect();
    let mut x = g.chol().multiply_lower(&z);
    for (xi, mi) in x.iter_mut().zip(g.mean()) {
        *xi += mi;
    }
    x
}

/// The monitored scenario families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenarioKind {
    /// In-control throughout.
    Ic,
    /// Mean shift to (1, 1).
    S1,
    /// Rate increase to 20.
    S2,
    /// Rate decrease to 2.
    S3,
    /// Rate increase to 15 with mean shift to (1, 1).
    S4,
    /// Rate decrease to 5 with mean shift to (1, 1).
    S5,
    /// Smooth rate path 10 -> 12 -> 5 for adaptation studies; in-control
    /// features throughout.
    Fig1,
    /// The worked single-stream example: five in-control steps, then rate
    /// 16 with mean shift to (1, 0.5) at the sixth.
    Fig2,
}

impl ScenarioKind {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "ic" => ScenarioKind::Ic,
            "s1" => ScenarioKind::S1,
            "s2" => ScenarioKind::S2,
            "s3" => ScenarioKind::S3,
            "s4" => ScenarioKind::S4,
            "s5" => ScenarioKind::S5,
            "fig1" => ScenarioKind::Fig1,
            "fig2" => ScenarioKind::Fig2,
            other => {
                return Err(Error::InvalidScenario(format!(
                    "unknown scenario '{other}' (expected ic, s1..s5, fig1, fig2)"
                )))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::Ic => "ic",
            ScenarioKind::S1 => "s1",
            ScenarioKind::S2 => "s2",
            ScenarioKind::S3 => "s3",
            ScenarioKind::S4 => "s4",
            ScenarioKind::S5 => "s5",
            ScenarioKind::Fig1 => "fig1",
            ScenarioKind::Fig2 => "fig2",
        }
    }

    /// Out-of-control overrides `(rate, mean)` applied at the change time,
    /// `None` for the unconteminated kinds.
    pub fn contamination(&self) -> Option<(f64, [f64; 2])> {
        match self {
            ScenarioKind::S1 => Some((10.0, [1.0, 1.0])),
            ScenarioKind::S2 => Some((20.0, [0.0, 0.0])),
            ScenarioKind::S3 => Some((2.0, [0.0, 0.0])),
            ScenarioKind::S4 => Some((15.0, [1.0, 1.0])),
            ScenarioKind::S5 => Some((5.0, [1.0, 1.0])),
            ScenarioKind::Fig2 => Some((16.0, [1.0, 0.5])),
            ScenarioKind::Ic | ScenarioKind::Fig1 => None,
        }
    }
}

/// Full description of a generation run: scenario family, horizon, and the
/// change time for the contaminated kinds. The contamination is a single
/// out-of-control observation at `change_time`; every other step is drawn
/// from the in-control process.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    kind: ScenarioKind,
    horizon: u64,
    change_time: Option<u64>,
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind, horizon: u64, change_time: Option<u64>) -> Result<Self> {
        match kind {
            ScenarioKind::Ic => {
                if change_time.is_some() {
                    return Err(Error::InvalidScenario(
                        "change time is not applicable to the ic scenario".into(),
                    ));
                }
                if horizon == 0 {
                    return Err(Error::InvalidScenario("horizon must be >= 1".into()));
                }
            }
            ScenarioKind::Fig1 => {
                if change_time.is_some() {
                    return Err(Error::InvalidScenario(
                        "change time is not applicable to the fig1 scenario".into(),
                    ));
                }
                if horizon != FIG1_HORIZON {
                    return Err(Error::InvalidScenario(format!(
                        "fig1 runs a fixed horizon of {FIG1_HORIZON}"
                    )));
                }
            }
            ScenarioKind::Fig2 => {
                if horizon != 6 || change_time.map(|t| t != 6).unwrap_or(false) {
                    return Err(Error::InvalidScenario(
                        "fig2 runs a fixed horizon of 6 with the change at t=6".into(),
                    ));
                }
            }
            _ => {
                let tc = change_time.ok_or_else(|| {
                    Error::InvalidScenario(format!(
                        "scenario {} requires a change time",
                        kind.name()
                    ))
                })?;
                if tc < 2 || tc > horizon {
                    return Err(Error::InvalidScenario(format!(
                        "change time must satisfy 2 <= t_c <= {horizon}, got {tc}"
                    )));
                }
            }
        }
        Ok(ScenarioSpec {
            kind,
            horizon,
            change_time,
        })
    }

    pub fn ic(horizon: u64) -> Result<Self> {
        Self::new(ScenarioKind::Ic, horizon, None)
    }

    pub fn fig1() -> Self {
        ScenarioSpec {
            kind: ScenarioKind::Fig1,
            horizon: FIG1_HORIZON,
            change_time: None,
        }
    }

    pub fn fig2() -> Self {
        ScenarioSpec {
            kind: ScenarioKind::Fig2,
            horizon: 6,
            change_time: Some(6),
        }
    }

    pub fn kind(&self) -> ScenarioKind {
        self.kind
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn change_time(&self) -> Option<u64> {
        match self.kind {
            ScenarioKind::Fig2 => Some(6),
            _ => self.change_time,
        }
    }
}

pub const FIG1_HORIZON: u64 = 100;

/// The smooth rate path: 10 for fifty steps, a linear climb to 12 over
/// thirty steps, then a linear descent to 5 over twenty.
pub fn fig1_rate(t: u64) -> f64 {
    debug_assert!((1..=FIG1_HORIZON).contains(&t));
    if t <= 50 {
        10.0
    } else if t <= 80 {
        10.0 + 2.0 * (t - 50) as f64 / 30.0
    } else {
        12.0 - 7.0 * (t - 80) as f64 / 20.0
    }
}

/// Draws one full batch for the scenario.
pub fn gen_batch(spec: &ScenarioSpec, stream: &RngStream) -> Result<Vec<PointPattern>> {
    let mut rng = stream.rng();
    let ic_gauss = GaussParams::standard(IC_DIM);
    let mut out = Vec::with_capacity(spec.horizon() as usize);
    for t in 1..=spec.horizon() {
        let (rate, gauss) = step_params(spec, t, &ic_gauss)?;
        let n = sample_poisson(rate, &mut rng)?;
        let mut coords = Vec::with_capacity(n as usize * IC_DIM);
        for _ in 0..n {
            coords.extend(sample_mvn(gauss.as_ref().unwrap_or(&ic_gauss), &mut rng));
        }
        out.push(PointPattern::new(t, IC_DIM, coords)?);
    }
    Ok(out)
}

fn step_params(
    spec: &ScenarioSpec,
    t: u64,
    _ic: &GaussParams,
) -> Result<(f64, Option<GaussParams>)> {
    if spec.kind() == ScenarioKind::Fig1 {
        return Ok((fig1_rate(t), None));
    }
    if Some(t) == spec.change_time() {
        if let Some((rate, mean)) = spec.kind().contamination() {
            let gauss = GaussParams::new(mean.to_vec(), crate::numerics::SmallMatrix::identity(2))?;
            return Ok((rate, Some(gauss)));
        }
    }
    Ok((IC_RATE, None))
}

/// Draws a single out-of-control observation for a contaminated scenario
/// kind, independent of any batch.
pub fn gen_contaminated_observation<R: Rng + ?Sized>(
    kind: ScenarioKind,
    t: u64,
    rng: &mut R,
) -> Result<PointPattern> {
    let (rate, mean) = kind.contamination().ok_or_else(|| {
        Error::InvalidScenario(format!("scenario {} has no contamination", kind.name()))
    })?;
    let gauss = GaussParams::new(mean.to_vec(), crate::numerics::SmallMatrix::identity(2))?;
    let n = sample_poisson(rate, rng)?;
    let mut coords = Vec::with_capacity(n as usize * IC_DIM);
    for _ in 0..n {
        coords.extend(sample_mvn(&gauss, rng));
    }
    PointPattern::new(t, IC_DIM, coords)
}
