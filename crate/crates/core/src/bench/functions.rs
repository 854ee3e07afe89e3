//! Analytic test functions, their grids, and low-rank constructions for
//! grids too large to materialize.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::network::TreeNetwork;
use crate::tensor::DenseTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Function {
    Dixon,
    Pathological,
    Pinter,
    Qing,
    Schaffer,
    Trigonometric,
    ReciprocalL2,
    Hilbert,
    SyntheticSeparable,
}

impl Function {
    /// The eight analytic benchmark functions.
    pub const ANALYTIC: [Function; 8] = [
        Function::Dixon,
        Function::Pathological,
        Function::Pinter,
        Function::Qing,
        Function::Schaffer,
        Function::Trigonometric,
        Function::ReciprocalL2,
        Function::Hilbert,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Function::Dixon => "dixon",
            Function::Pathological => "pathological",
            Function::Pinter => "pinter",
            Function::Qing => "qing",
            Function::Schaffer => "schaffer",
            Function::Trigonometric => "trigonometric",
            Function::ReciprocalL2 => "reciprocal_l2",
            Function::Hilbert => "hilbert",
            Function::SyntheticSeparable => "synthetic_separable",
        }
    }

    pub fn parse(s: &str) -> Option<Function> {
        Self::ANALYTIC
            .into_iter()
            .chain([Function::SyntheticSeparable])
            .find(|f| f.name() == s)
    }

    /// Default box `[lo, hi]` applied to every coordinate.
    pub fn default_domain(self) -> (f64, f64) {
        match self {
            Function::ReciprocalL2 | Function::Hilbert => (0.5, 1.5),
            _ => (-1.0, 1.0),
        }
    }

    /// Value at `x` (1-based formulas, neighbours wrap around).
    pub fn eval(self, x: &[f64]) -> Result<f64> {
        let d = x.len();
        let prev = |i: usize| x[(i + d - 1) % d];
        let next = |i: usize| x[(i + 1) % d];
        let v = match self {
            Function::Dixon => {
                (x[0] - 1.0).powi(2)
                    + (1..d)
                        .map(|i| (i + 1) as f64 * (2.0 * x[i] * x[i] - x[i - 1]).powi(2))
                        .sum::<f64>()
            }
            Function::Pathological => (0..d.saturating_sub(1))
                .map(|i| {
                    let num = (100.0 * x[i] * x[i] + prev(i).powi(2)).sqrt().sin().powi(2) - 0.5;
                    let den = 1.0
                        + 0.001 * (x[i] * x[i] - 2.0 * x[i] * next(i) + next(i).powi(2)).powi(2);
                    0.5 + num / den
                })
                .sum(),
            Function::Pinter => (0..d)
                .map(|i| {
                    let w = (i + 1) as f64;
                    let a = prev(i) * x[i].sin() + next(i).sin();
                    let b = prev(i).powi(2) - 2.0 * x[i] + 3.0 * next(i) - x[i].cos() + 1.0;
                    w * x[i] * x[i] + 20.0 * w * a.sin().powi(2) + w * (1.0 + w * b * b).log10()
                })
                .sum(),
            Function::Qing => (0..d).map(|i| (x[i] * x[i] - (i + 1) as f64).powi(2)).sum(),
            Function::Schaffer => (0..d.saturating_sub(1))
                .map(|i| {
                    let num = (x[i] * x[i] + prev(i).powi(2)).sqrt().sin().powi(2) - 0.5;
                    let den = 1.0 + 0.001 * (x[i] * x[i] + next(i).powi(2)).powi(2);
                    0.5 + num / den
                })
                .sum(),
            Function::Trigonometric => {
                let cos_sum: f64 = x.iter().map(|v| v.cos()).sum();
                (0..d)
                    .map(|i| {
                        (d as f64 - cos_sum + (i + 1) as f64 * (1.0 - x[i].cos() - x[i].sin()))
                            .powi(2)
                    })
                    .sum()
            }
            Function::ReciprocalL2 => {
                let s: f64 = x.iter().map(|v| v * v).sum();
                if s == 0.0 {
                    return Err(Error::Domain(
                        "reciprocal_l2 is singular at the origin".into(),
                    ));
                }
                s.powf(-0.5)
            }
            Function::Hilbert => {
                let s: f64 = x.iter().sum();
                if s == 0.0 {
                    return Err(Error::Domain(
                        "hilbert is singular where the coordinates sum to 0".into(),
                    ));
                }
                1.0 / s
            }
            Function::SyntheticSeparable => {
                return invalid(
                    "synthetic_separable is defined on a flattened grid, not pointwise",
                );
            }
        };
        Ok(v)
    }
}

/// `grid` equispaced points on `[lo, hi]`, end points included.
pub fn grid_points(domain: (f64, f64), grid: usize) -> Vec<f64> {
    let (lo, hi) = domain;
    (0..grid)
        .map(|k| {
            if grid == 1 {
                lo
            } else {
                lo + (hi - lo) * k as f64 / (grid - 1) as f64
            }
        })
        .collect()
}

/// Function values on the tensor grid.
pub fn discretize(f: Function, dim: usize, grid: usize, domain: (f64, f64)) -> Result<DenseTensor> {
    if grid < 2 {
        return invalid("grid needs at least 2 points");
    }
    if dim == 0 {
        return invalid("dimension must be >= 1");
    }
    let pts = grid_points(domain, grid);
    let shape = vec![grid; dim];
    let volume = crate::tensor::checked_volume(&shape)
        .filter(|&v| v <= crate::network::DENSE_CAP)
        .ok_or(Error::TooLarge {
            entries: (grid as u128).saturating_pow(dim as u32),
            cap: crate::network::DENSE_CAP as u128,
        })?;
    let mut values = Vec::with_capacity(volume as usize);
    let mut idx = vec![0usize; dim];
    let mut x = vec![pts[0]; dim];
    for _ in 0..volume {
        values.push(f.eval(&x)?);
        for ax in (0..dim).rev() {
            idx[ax] += 1;
            if idx[ax] < grid {
                x[ax] = pts[idx[ax]];
                break;
            }
            idx[ax] = 0;
            x[ax] = pts[0];
        }
    }
    DenseTensor::new(shape, values)
}

/// `g(x) h(y)` on an `nx x ny` grid flattened into one index of size
/// `nx * ny` (x major), times smooth factors on `extra_dims` further
/// indices of size `extra_size`.
pub fn synthetic_separable(
    nx: usize,
    ny: usize,
    extra_dims: usize,
    extra_size: usize,
) -> Result<DenseTensor> {
    if nx < 2 || ny < 2 {
        return invalid("synthetic_separable needs nx, ny >= 2");
    }
    let g = |k: usize| (0.5 + 2.5 * k as f64 / nx as f64).sin();
    let h = |k: usize| (0.8 * k as f64 / ny as f64).exp();
    let e = |k: usize| 1.0 + 0.5 * (k as f64 / extra_size as f64).cos();
    let mut shape = vec![nx * ny];
    shape.extend(std::iter::repeat_n(extra_size, extra_dims));
    Ok(DenseTensor::from_fn(shape, |i| {
        g(i[0] / ny) * h(i[0] % ny) * i[1..].iter().map(|&k| e(k)).product::<f64>()
    }))
}

/// Tensor train of a sum of separable exponentials,
/// `sum_k weight_k prod_i exp(-rate_k * phi(x_i))`, on the grid.
fn exp_sum_chain(
    weights: &[f64],
    rates: &[f64],
    axis_values: &[f64],
    dim: usize,
) -> Result<TreeNetwork> {
    let n = axis_values.len();
    let r = weights.len();
    let phi = |k: usize, j: usize| (-rates[k] * axis_values[j]).exp();
    if dim == 1 {
        let v = (0..n)
            .map(|j| (0..r).map(|k| weights[k] * phi(k, j)).sum())
            .collect();
        return TreeNetwork::chain(vec![DenseTensor::new(vec![n], v)?]);
    }
    let mut cores = Vec::with_capacity(dim);
    cores.push(DenseTensor::from_fn(vec![n, r], |i| {
        weights[i[1]] * phi(i[1], i[0])
    }));
    for _ in 1..dim - 1 {
        cores.push(DenseTensor::from_fn(vec![r, n, r], |i| {
            if i[0] == i[2] {
                phi(i[0], i[1])
            } else {
                0.0
            }
        }));
    }
    cores.push(DenseTensor::from_fn(vec![r, n], |i| phi(i[0], i[1])));
    TreeNetwork::chain(cores)
}

/// Trapezoid nodes for `1/s = int exp(u - s e^u) du` (power 1) or
/// `s^{-1/2} = 2/sqrt(pi) int exp(u - s e^{2u}) du` (power 1/2), accurate to
/// about 1e-12 relative for `s` in `[s_min, s_max]`.
fn exp_sum_nodes(s_min: f64, s_max: f64, half_power: bool) -> (Vec<f64>, Vec<f64>) {
    let scale = if half_power { 2.0 } else { 1.0 };
    let h = 0.3 / scale;
    let u_min = (1e-13 / s_max.max(1.0)).ln() - 2.0;
    let u_max = (45.0 / s_min).ln() / scale + 1.0;
    let steps = ((u_max - u_min) / h).ceil() as usize;
    let mut weights = Vec::with_capacity(steps + 1);
    let mut rates = Vec::with_capacity(steps + 1);
    let lead = if half_power {
        2.0 / std::f64::consts::PI.sqrt()
    } else {
        1.0
    };
    for k in 0..=steps {
        let u = u_min + h * k as f64;
        weights.push(lead * h * u.exp());
        rates.push((scale * u).exp());
    }
    (weights, rates)
}

/// Exact-structure tensor train for `hilbert` and `reciprocal_l2` on grids
/// of any dimension, built from an exponential sum.
pub fn reciprocal_chain(
    f: Function,
    dim: usize,
    grid: usize,
    domain: (f64, f64),
) -> Result<TreeNetwork> {
    let pts = grid_points(domain, grid);
    match f {
        Function::Hilbert => {
            if domain.0 <= 0.0 {
                return Err(Error::Domain(
                    "exp-sum construction needs a positive domain".into(),
                ));
            }
            let (w, r) = exp_sum_nodes(dim as f64 * domain.0, dim as f64 * domain.1, false);
            exp_sum_chain(&w, &r, &pts, dim)
        }
        Function::ReciprocalL2 => {
            let sq: Vec<f64> = pts.iter().map(|p| p * p).collect();
            let lo = sq.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = sq.iter().cloned().fold(0.0, f64::max);
            if lo <= 0.0 {
                return Err(Error::Domain(
                    "exp-sum construction needs a grid avoiding 0".into(),
                ));
            }
            let (w, r) = exp_sum_nodes(dim as f64 * lo, dim as f64 * hi, true);
            exp_sum_chain(&w, &r, &sq, dim)
        }
        _ => invalid(format!("{} has no exp-sum construction", f.name())),
    }
}
