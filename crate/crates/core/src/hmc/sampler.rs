use std::io::{Read, Write};

use ndarray::{s, Array2, ArrayView2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::diagnostics::{ess, split_rhat};
use super::{find_reasonable_step_size, hmc_step, jittered_steps, DualAveraging, TargetDensity};
use crate::seed::{derive_seed, stream, tags};
use crate::{Error, Result};

/// Sampler settings.
///
/// `iterations` counts every iteration of a chain, warmup included; each
/// chain contributes `iterations − warmup` retained draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmcConfig {
    /// Initial step size; refined during warmup.
    pub step_size: f64,
    /// Base trajectory length L.
    pub num_leapfrog: usize,
    /// Diagonal of the momentum covariance V. `None` starts from identity.
    pub mass_diag: Option<Vec<f64>>,
    pub warmup: usize,
    pub iterations: usize,
    pub chains: usize,
    pub target_accept: f64,
    pub seed: u64,
    /// Jitter the trajectory length per iteration.
    pub jitter: bool,
    /// Re-estimate the diagonal mass matrix during warmup, at one half and
    /// four fifths of the way through.
    pub adapt_mass: bool,
}

impl Default for HmcConfig {
    fn default() -> Self {
        Self {
            step_size: 0.1,
            num_leapfrog: 32,
            mass_diag: None,
            warmup: 1000,
            iterations: 2000,
            chains: 2,
            target_accept: 0.8,
            seed: 0,
            jitter: true,
            adapt_mass: true,
        }
    }
}

impl HmcConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let bad = |f: &str, m: String| Err(Error::config(f, m));
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad("step_size", format!("must be positive, got {}", self.step_size));
        }
        if self.num_leapfrog == 0 {
            return bad("num_leapfrog", "must be positive".into());
        }
        if self.iterations == 0 {
            return bad("iterations", "must be positive".into());
        }
        if self.iterations <= self.warmup {
            return bad(
                "iterations",
                format!(
                    "must exceed warmup ({}) to retain any draws, got {}",
                    self.warmup, self.iterations
                ),
            );
        }
        if self.chains == 0 {
            return bad("chains", "must be positive".into());
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return bad(
                "target_accept",
                format!("must lie in (0, 1), got {}", self.target_accept),
            );
        }
        if let Some(m) = &self.mass_diag {
            if m.len() != dim {
                return Err(Error::LengthMismatch {
                    expected: dim,
                    got: m.len(),
                });
            }
            if m.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return bad("mass_diag", "entries must be positive".into());
            }
        }
        Ok(())
    }

    pub fn draws_per_chain(&self) -> usize {
        self.iterations - self.warmup
    }
}

/// Where chains start.
#[derive(Debug, Clone)]
pub enum Init {
    /// Uniform on (−2, 2) in every coordinate.
    Random,
    /// Uniform jitter of the given radius around a point.
    Jittered { point: Vec<f64>, radius: f64 },
    /// One explicit starting point per chain.
    PerChain(Vec<Vec<f64>>),
}

const INIT_ATTEMPTS: usize = 100;

/// Retained draws from all chains plus per-chain sampler statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSample {
    /// `chains × draws_per_chain` rows, chain-major.
    pub draws: Array2<f64>,
    pub chains: usize,
    pub accept_rate: Vec<f64>,
    pub divergent_count: Vec<usize>,
    pub step_size: Vec<f64>,
    pub mass_diag: Vec<Vec<f64>>,
    /// Split-R̂ per coordinate; present only with two or more chains.
    pub rhat: Option<Vec<f64>>,
    pub ess: Vec<f64>,
}

impl PosteriorSample {
    /// Builds a sample from per-chain draw matrices, computing diagnostics.
    pub fn from_chains(chains: Vec<Array2<f64>>) -> Result<Self> {
        let n_chains = chains.len();
        if n_chains == 0 {
            return Err(Error::Domain("no chains".into()));
        }
        let (rows, dim) = chains[0].dim();
        for c in &chains {
            if c.ncols() != dim {
                return Err(Error::LengthMismatch {
                    expected: dim,
                    got: c.ncols(),
                });
            }
            if c.nrows() != rows {
                return Err(Error::LengthMismatch {
                    expected: rows,
                    got: c.nrows(),
                });
            }
        }
        let mut draws = Array2::zeros((rows * n_chains, dim));
        for (k, c) in chains.iter().enumerate() {
            draws.slice_mut(s![k * rows..(k + 1) * rows, ..]).assign(c);
        }
        let mut sample = Self {
            draws,
            chains: n_chains,
            accept_rate: vec![f64::NAN; n_chains],
            divergent_count: vec![0; n_chains],
            step_size: vec![f64::NAN; n_chains],
            mass_diag: vec![vec![]; n_chains],
            rhat: None,
            ess: vec![],
        };
        sample.compute_diagnostics();
        Ok(sample)
    }

    fn compute_diagnostics(&mut self) {
        let dim = self.dim();
        let per = self.draws_per_chain();
        let columns: Vec<Vec<Vec<f64>>> = (0..dim)
            .map(|j| {
                (0..self.chains)
                    .map(|c| {
                        self.draws
                            .slice(s![c * per..(c + 1) * per, j])
                            .iter()
                            .copied()
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let views = |j: usize| columns[j].iter().map(|v| v.as_slice()).collect::<Vec<_>>();
        self.ess = (0..dim).map(|j| ess(&views(j))).collect();
        self.rhat = (self.chains >= 2).then(|| (0..dim).map(|j| split_rhat(&views(j))).collect());
    }

    pub fn dim(&self) -> usize {
        self.draws.ncols()
    }

    pub fn len(&self) -> usize {
        self.draws.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.nrows() == 0
    }

    pub fn draws_per_chain(&self) -> usize {
        self.draws.nrows() / self.chains
    }

    pub fn chain(&self, c: usize) -> ArrayView2<'_, f64> {
        let per = self.draws_per_chain();
        self.draws.slice(s![c * per..(c + 1) * per, ..])
    }

    pub fn max_rhat(&self) -> Option<f64> {
        self.rhat
            .as_ref()
            .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }

    pub fn mean(&self) -> Vec<f64> {
        self.draws
            .mean_axis(ndarray::Axis(0))
            .map(|m| m.to_vec())
            .unwrap_or_default()
    }

    /// Writes one chain as CSV with a header of parameter names.
    pub fn write_chain_csv<W: Write>(&self, c: usize, names: &[String], w: W) -> Result<()> {
        if names.len() != self.dim() {
            return Err(Error::LengthMismatch {
                expected: self.dim(),
                got: names.len(),
            });
        }
        let mut wtr = csv::Writer::from_writer(w);
        let csv_err = |e: csv::Error| Error::Domain(format!("csv write: {e}"));
        wtr.write_record(names).map_err(csv_err)?;
        for row in self.chain(c).rows() {
            wtr.write_record(row.iter().map(|v| format!("{v:e}")))
                .map_err(csv_err)?;
        }
        wtr.flush().map_err(|e| Error::Domain(format!("csv write: {e}")))?;
        Ok(())
    }
}

/// Reads a draws CSV written by [`PosteriorSample::write_chain_csv`].
pub fn read_chain_csv<R: Read>(
    r: R,
    path: &std::path::Path,
) -> Result<(Vec<String>, Array2<f64>)> {
    let mut rdr = csv::Reader::from_reader(r);
    let err = |line: u64, message: String| Error::Csv {
        path: path.to_path_buf(),
        line,
        message,
    };
    let names: Vec<String> = rdr
        .headers()
        .map_err(|e| err(1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut values = Vec::new();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        for field in rec.iter() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| err(line, format!("not a number: `{field}`")))?;
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(err(1, "no draws".into()));
    }
    let arr = Array2::from_shape_vec((rows, names.len()), values)
        .map_err(|e| err(0, e.to_string()))?;
    Ok((names, arr))
}

fn initial_point<T: TargetDensity + ?Sized, R: Rng>(
    target: &T,
    init: &Init,
    chain: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let d = target.dim();
    let mut candidate = |attempt: usize| -> Vec<f64> {
        match init {
            Init::Random => (0..d).map(|_| rng.random_range(-2.0..2.0)).collect(),
            Init::Jittered { point, radius } => point
                .iter()
                .map(|p| p + radius * rng.random_range(-1.0..1.0))
                .collect(),
            Init::PerChain(points) => {
                let p = &points[chain];
                if attempt == 0 {
                    p.clone()
                } else {
                    p.iter().map(|v| v + 0.1 * rng.random_range(-1.0..1.0)).collect()
                }
            }
        }
    };
    for attempt in 0..INIT_ATTEMPTS {
        let q = candidate(attempt);
        let mut g = vec![0.0; d];
        let lp = target.log_density_and_grad(&q, &mut g);
        if lp.is_finite() && g.iter().all(|v| v.is_finite()) {
            return Ok(q);
        }
    }
    Err(Error::InitFailure {
        attempts: INIT_ATTEMPTS,
    })
}

struct ChainOutput {
    draws: Array2<f64>,
    accept_rate: f64,
    divergent: usize,
    step_size: f64,
    mass: Vec<f64>,
}

/// Regularized variance, shrunk towards 1e-3 for short windows.
fn mass_from_window(window: &[Vec<f64>], d: usize) -> Vec<f64> {
    let n = window.len() as f64;
    (0..d)
        .map(|j| {
            let m = window.iter().map(|q| q[j]).sum::<f64>() / n;
            let v = window.iter().map(|q| (q[j] - m).powi(2)).sum::<f64>() / (n - 1.0);
            let reg = (n / (n + 5.0)) * v + 1e-3 * (5.0 / (n + 5.0));
            1.0 / reg
        })
        .collect()
}

fn run_chain<T: TargetDensity + ?Sized>(
    target: &T,
    cfg: &HmcConfig,
    init: &Init,
    chain: usize,
) -> Result<ChainOutput> {
    let d = target.dim();
    let mut rng = stream(derive_seed(cfg.seed, tags::CHAIN, chain as u64));
    let mut theta = initial_point(target, init, chain, &mut rng)?;
    let mut mass = cfg.mass_diag.clone().unwrap_or_else(|| vec![1.0; d]);
    let steps = |rng: &mut crate::seed::StreamRng| {
        if cfg.jitter {
            jittered_steps(cfg.num_leapfrog, rng)
        } else {
            cfg.num_leapfrog
        }
    };

    let mut eps = cfg.step_size;
    if cfg.warmup > 0 {
        eps = find_reasonable_step_size(&theta, eps, &mass, target, &mut rng);
    }
    let mut da = DualAveraging::new(eps, cfg.target_accept);
    // Mass re-estimated at the end of each window; the last fifth of warmup
    // is left for step-size adaptation under the final metric.
    let windows = [
        (cfg.warmup / 4, cfg.warmup / 2),
        (cfg.warmup / 2, cfg.warmup * 4 / 5),
    ];
    let mut window: Vec<Vec<f64>> = Vec::new();

    for it in 0..cfg.warmup {
        let l = steps(&mut rng);
        let tr = hmc_step(&theta, eps, l, &mass, target, &mut rng);
        theta = tr.position;
        eps = da.update(tr.accept_prob);
        if !cfg.adapt_mass {
            continue;
        }
        for &(start, end) in &windows {
            if it >= start && it < end {
                window.push(theta.clone());
            }
            if it + 1 == end && window.len() >= 10 {
                mass = mass_from_window(&window, d);
                window.clear();
                eps = find_reasonable_step_size(&theta, eps, &mass, target, &mut rng);
                da = DualAveraging::new(eps, cfg.target_accept);
            }
        }
    }
    if cfg.warmup > 0 {
        eps = da.final_step();
    }

    let n = cfg.draws_per_chain();
    let mut draws = Array2::zeros((n, d));
    let mut accept_sum = 0.0;
    let mut divergent = 0;
    for i in 0..n {
        let l = steps(&mut rng);
        let tr = hmc_step(&theta, eps, l, &mass, target, &mut rng);
        accept_sum += tr.accept_prob;
        divergent += tr.divergent as usize;
        theta = tr.position;
        draws.row_mut(i).assign(&ndarray::ArrayView1::from(&theta));
    }
    Ok(ChainOutput {
        draws,
        accept_rate: accept_sum / n as f64,
        divergent,
        step_size: eps,
        mass,
    })
}

/// Runs `cfg.chains` independent chains in parallel.
///
/// Chain `c` draws from its own stream seeded by `(cfg.seed, c)`, so output is
/// identical for any thread count.
pub fn run_chains<T: TargetDensity + ?Sized>(
    target: &T,
    cfg: &HmcConfig,
    init: &Init,
) -> Result<PosteriorSample> {
    cfg.validate(target.dim())?;
    if let Init::PerChain(points) = init {
        if points.len() != cfg.chains {
            return Err(Error::LengthMismatch {
                expected: cfg.chains,
                got: points.len(),
            });
        }
    }
    let outputs: Vec<ChainOutput> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| run_chain(target, cfg, init, c))
        .collect::<Result<_>>()?;
    let mut accept_rate = Vec::new();
    let mut divergent_count = Vec::new();
    let mut step_size = Vec::new();
    let mut mass_diag = Vec::new();
    let mut chains = Vec::new();
    for o in outputs {
        accept_rate.push(o.accept_rate);
        divergent_count.push(o.divergent);
        step_size.push(o.step_size);
        mass_diag.push(o.mass);
        chains.push(o.draws);
    }
    let mut sample = PosteriorSample::from_chains(chains)?;
    sample.accept_rate = accept_rate;
    sample.divergent_count = divergent_count;
    sample.step_size = step_size;
    sample.mass_diag = mass_diag;
    Ok(sample)
}

/// Largest relative discrepancy between the analytic gradient and central
/// finite differences with `h = 1e−5 (1 + |θ_j|)`.
///
/// The relative error is `|fd − analytic| / max(1, |fd|, |analytic|)`.
pub fn gradient_check<T: TargetDensity + ?Sized>(target: &T, points: &[Vec<f64>]) -> f64 {
    let d = target.dim();
    let mut worst: f64 = 0.0;
    let mut grad = vec![0.0; d];
    for p in points {
        target.log_density_and_grad(p, &mut grad);
        let mut q = p.clone();
        for j in 0..d {
            let h = 1e-5 * (1.0 + p[j].abs());
            q[j] = p[j] + h;
            let up = target.log_density(&q);
            q[j] = p[j] - h;
            let down = target.log_density(&q);
            q[j] = p[j];
            let fd = (up - down) / (2.0 * h);
            let scale = fd.abs().max(grad[j].abs()).max(1.0);
            let err = (fd - grad[j]).abs() / scale;
            worst = if err.is_nan() { f64::INFINITY } else { worst.max(err) };
        }
    }
    worst
}
