//! Sample generators for the simulation experiments.

use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Bernoulli, Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::Sample;
use crate::rng::{stream_rng, Rng};

/// A per-coordinate parameter given either as one value for every coordinate
/// or as an explicit vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Param {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Param {
    fn expand(&self, dim: usize, what: &str) -> Result<Vec<f64>> {
        match self {
            Param::Scalar(v) => Ok(vec![*v; dim]),
            Param::Vector(v) if v.len() == dim => Ok(v.clone()),
            Param::Vector(v) => Err(Error::invalid(format!(
                "{what} has {} entries, dimension is {dim}",
                v.len()
            ))),
        }
    }
}

fn zero() -> Param {
    Param::Scalar(0.0)
}

fn one() -> Param {
    Param::Scalar(1.0)
}

fn unit_variance_laplace_scale() -> f64 {
    std::f64::consts::FRAC_1_SQRT_2
}

fn unit() -> f64 {
    1.0
}

/// Mixture component with diagonal covariance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    #[serde(default = "zero")]
    pub mean: Param,
    #[serde(default = "one")]
    pub variance: Param,
}

/// Named generator with parameters, as written in experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum GeneratorSpec {
    /// Gaussian with diagonal covariance.
    Gaussian {
        dim: usize,
        #[serde(default = "zero")]
        mean: Param,
        #[serde(default = "one")]
        variance: Param,
    },
    /// Independent zero-mean Laplace coordinates; the default scale gives unit variance.
    Laplace {
        dim: usize,
        #[serde(default = "unit_variance_laplace_scale")]
        scale: f64,
    },
    /// Independent exponential coordinates.
    Exponential {
        dim: usize,
        #[serde(default = "unit")]
        mean: f64,
    },
    GaussianMixture { dim: usize, components: Vec<Component> },
    /// Unit-variance Gaussian whose mean grows linearly on a random sparse
    /// support: the `i`-th draw (from 1) has mean `rate * i` on `support`
    /// randomly chosen coordinates.
    Slope { dim: usize, rate: f64, support: usize },
    /// Erdős–Rényi graphs as flattened upper-triangular adjacency vectors.
    ErdosRenyi { nodes: usize, p: f64 },
}

impl GeneratorSpec {
    /// Sample dimension.
    pub fn dim(&self) -> usize {
        match self {
            GeneratorSpec::Gaussian { dim, .. }
            | GeneratorSpec::Laplace { dim, .. }
            | GeneratorSpec::Exponential { dim, .. }
            | GeneratorSpec::GaussianMixture { dim, .. }
            | GeneratorSpec::Slope { dim, .. } => *dim,
            GeneratorSpec::ErdosRenyi { nodes, .. } => nodes * nodes.saturating_sub(1) / 2,
        }
    }

    /// Validates parameters and fixes any per-run randomness (the slope support).
    pub fn instantiate(&self, rng: &mut Rng) -> Result<Generator> {
        let dim = self.dim();
        if dim == 0 {
            return Err(Error::invalid("generator dimension must be positive"));
        }
        let kind = match self {
            GeneratorSpec::Gaussian { mean, variance, .. } => {
                let mean = mean.expand(dim, "mean")?;
                let sd = sqrt_positive(variance.expand(dim, "variance")?)?;
                Kind::Gaussian { mean, sd }
            }
            GeneratorSpec::Laplace { scale, .. } => {
                positive(*scale, "Laplace scale")?;
                Kind::Laplace { scale: *scale }
            }
            GeneratorSpec::Exponential { mean, .. } => {
                positive(*mean, "exponential mean")?;
                Kind::Exponential { mean: *mean }
            }
            GeneratorSpec::GaussianMixture { components, .. } => {
                if components.is_empty() {
                    return Err(Error::invalid("mixture needs at least one component"));
                }
                let total: f64 = components.iter().map(|c| c.weight).sum();
                if components.iter().any(|c| !(c.weight >= 0.0)) || !(total > 0.0) {
                    return Err(Error::invalid("mixture weights must be non-negative with a positive sum"));
                }
                let mut cumulative = Vec::with_capacity(components.len());
                let mut acc = 0.0;
                let mut parts = Vec::with_capacity(components.len());
                for c in components {
                    acc += c.weight / total;
                    cumulative.push(acc);
                    parts.push((c.mean.expand(dim, "mean")?, sqrt_positive(c.variance.expand(dim, "variance")?)?));
                }
                Kind::Mixture { cumulative, parts }
            }
            GeneratorSpec::Slope { rate, support, .. } => {
                if *support > dim {
                    return Err(Error::invalid(format!("slope support {support} exceeds dimension {dim}")));
                }
                if !rate.is_finite() {
                    return Err(Error::invalid("slope rate must be finite"));
                }
                let mut coords = index::sample(rng, dim, *support).into_vec();
                coords.sort_unstable();
                Kind::Slope {
                    rate: *rate,
                    support: coords,
                    drawn: 0,
                }
            }
            GeneratorSpec::ErdosRenyi { p, .. } => {
                let edge = Bernoulli::new(*p)
                    .map_err(|_| Error::invalid(format!("edge probability must lie in [0, 1], got {p}")))?;
                Kind::ErdosRenyi { edge }
            }
        };
        Ok(Generator { dim, kind })
    }
}

fn positive(v: f64, what: &str) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} must be positive, got {v}")))
    }
}

fn sqrt_positive(v: Vec<f64>) -> Result<Vec<f64>> {
    v.into_iter()
        .map(|x| positive(x, "variance").map(|_| x.sqrt()))
        .collect()
}

#[derive(Clone, Debug)]
enum Kind {
    Gaussian { mean: Vec<f64>, sd: Vec<f64> },
    Laplace { scale: f64 },
    Exponential { mean: f64 },
    Mixture { cumulative: Vec<f64>, parts: Vec<(Vec<f64>, Vec<f64>)> },
    Slope { rate: f64, support: Vec<usize>, drawn: usize },
    ErdosRenyi { edge: Bernoulli },
}

/// An instantiated generator. Stateful only for the slope model.
#[derive(Clone, Debug)]
pub struct Generator {
    dim: usize,
    kind: Kind,
}

impl Generator {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sample(&mut self, rng: &mut Rng) -> Sample {
        let d = self.dim;
        let values: Vec<f64> = match &mut self.kind {
            Kind::Gaussian { mean, sd } => mean
                .iter()
                .zip(sd.iter())
                .map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal))
                .collect(),
            Kind::Laplace { scale } => (0..d)
                .map(|_| {
                    let e: f64 = rng.sample(Exp1);
                    if rng.random::<bool>() {
                        *scale * e
                    } else {
                        -*scale * e
                    }
                })
                .collect(),
            Kind::Exponential { mean } => (0..d).map(|_| *mean * rng.sample::<f64, _>(Exp1)).collect(),
            Kind::Mixture { cumulative, parts } => {
                let u: f64 = rng.random();
                let pick = cumulative.iter().position(|&c| u < c).unwrap_or(parts.len() - 1);
                let (mean, sd) = &parts[pick];
                mean.iter()
                    .zip(sd.iter())
                    .map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            }
            Kind::Slope { rate, support, drawn } => {
                *drawn += 1;
                let shift = *rate * *drawn as f64;
                let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                for &j in support.iter() {
                    v[j] += shift;
                }
                v
            }
            Kind::ErdosRenyi { edge } => (0..d)
                .map(|_| if edge.sample(rng) { 1.0 } else { 0.0 })
                .collect(),
        };
        Sample::from_generated(values)
    }

    pub fn draw(&mut self, rng: &mut Rng, count: usize) -> Vec<Sample> {
        (0..count).map(|_| self.sample(rng)).collect()
    }
}

/// `count` samples from `spec`, deterministic in `seed`.
pub fn generate(spec: &GeneratorSpec, count: usize, seed: u64) -> Result<Vec<Sample>> {
    let mut rng = stream_rng(seed, 0);
    let mut g = spec.instantiate(&mut rng)?;
    Ok(g.draw(&mut rng, count))
}

/// Unit-covariance Gaussian with every coordinate of the mean equal to `shift`.
pub fn gaussian_shift(dim: usize, shift: f64) -> GeneratorSpec {
    GeneratorSpec::Gaussian {
        dim,
        mean: Param::Scalar(shift),
        variance: Param::Scalar(1.0),
    }
}
