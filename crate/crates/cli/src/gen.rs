//! Seeded random instances.

use std::str::FromStr;

use anyhow::{bail, Context};
use bagsched::model::Instance;
use bagsched::rational::{int, ratio, Rational};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Denominator of every generated size and probability.
const DENOM: i64 = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SizeDist {
    /// Sizes uniform on `(0, 10]`.
    Uniform,
    /// `2^g · u` with `g` uniform in `0..=5` and `u` uniform on `(0, 1]`.
    Geometric,
    /// One job in four is large (`[5, 10]`), the rest small (`(0, 1]`).
    TwoTier,
}

impl FromStr for SizeDist {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        Ok(match s {
            "uniform" => Self::Uniform,
            "geometric" => Self::Geometric,
            "twotier" => Self::TwoTier,
            _ => bail!("unknown size distribution {s:?} (uniform, geometric, twotier)"),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScenarioDist {
    /// `1/m` each.
    Uniform,
    /// All mass on one machine count.
    Point(usize),
    /// `q_k = 2^-k`, the last count takes the rest.
    Geometric,
}

impl FromStr for ScenarioDist {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        if let Some(k) = s.strip_prefix("point:") {
            let k = k.parse().with_context(|| format!("bad machine count in {s:?}"))?;
            return Ok(Self::Point(k));
        }
        Ok(match s {
            "uniform" => Self::Uniform,
            "geometric" => Self::Geometric,
            _ => bail!("unknown scenario distribution {s:?} (uniform, point:K, geometric)"),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GenParams {
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub sizes: SizeDist,
    pub scenarios: ScenarioDist,
}

pub fn generate(params: &GenParams) -> anyhow::Result<Instance> {
    let GenParams { n, m, seed, sizes, scenarios } = *params;
    if n == 0 {
        bail!("--n must be positive");
    }
    if m < 2 {
        bail!("--m must be at least 2");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jobs = (0..n).map(|_| draw_size(&mut rng, sizes)).collect();
    let q = scenario_probabilities(m, scenarios)?;
    Ok(Instance::new(jobs, q)?)
}

fn draw_size(rng: &mut ChaCha8Rng, dist: SizeDist) -> Rational {
    let thousandths = match dist {
        SizeDist::Uniform => rng.random_range(1..=10 * DENOM),
        SizeDist::Geometric => rng.random_range(1..=DENOM) << rng.random_range(0..=5),
        SizeDist::TwoTier => {
            if rng.random_range(0..4) == 0 {
                rng.random_range(5 * DENOM..=10 * DENOM)
            } else {
                rng.random_range(1..=DENOM)
            }
        }
    };
    ratio(thousandths, DENOM)
}

fn scenario_probabilities(m: usize, dist: ScenarioDist) -> anyhow::Result<Vec<Rational>> {
    let mut q = match dist {
        ScenarioDist::Point(k) => {
            if k == 0 || k > m {
                bail!("point:{k} outside 1..={m}");
            }
            let mut q = vec![int(0); m];
            q[k - 1] = int(1);
            return Ok(q);
        }
        ScenarioDist::Uniform => vec![ratio(DENOM / m as i64, DENOM); m],
        ScenarioDist::Geometric => (1..=m).map(|k| ratio(DENOM >> k.min(62), DENOM)).collect(),
    };
    let head: Rational = q[..m - 1].iter().sum();
    q[m - 1] = int(1) - head;
    Ok(q)
}
