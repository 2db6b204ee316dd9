//! Hamiltonian Monte Carlo with a diagonal metric.
//!
//! The potential is `U(θ) = −log π(θ)` and the kinetic energy is
//! `K(φ) = ½ φ' V⁻¹ φ` with `V = diag(mass_diag)`, so that momenta drawn from
//! `N(0, V)` are exactly the kinetic marginal. Trajectories are integrated
//! with the leapfrog scheme and corrected by a Metropolis step.

mod adapt;
pub mod diagnostics;
mod sampler;

pub use adapt::{adapt_step_size, find_reasonable_step_size, DualAveraging};
pub use sampler::{gradient_check, read_chain_csv, run_chains, HmcConfig, Init, PosteriorSample};

use rand::Rng;
use rand_distr::StandardNormal;

/// Energy error beyond which a transition is declared divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1000.0;

/// An unnormalized log density on ℝ^d with its gradient.
///
/// Implementations are shared read-only between sampler threads.
pub trait TargetDensity: Sync {
    fn dim(&self) -> usize;

    fn log_density(&self, theta: &[f64]) -> f64;

    /// Writes `∇ log π(θ)` into `grad` and returns `log π(θ)`.
    fn log_density_and_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64;
}

impl<T: TargetDensity + ?Sized> TargetDensity for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn log_density(&self, theta: &[f64]) -> f64 {
        (**self).log_density(theta)
    }
    fn log_density_and_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        (**self).log_density_and_grad(theta, grad)
    }
}

/// A point in phase space with its cached energies and potential gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub position: Vec<f64>,
    pub momentum: Vec<f64>,
    pub potential: f64,
    pub kinetic: f64,
    /// ∇U at `position`.
    pub grad_potential: Vec<f64>,
}

impl PhaseState {
    pub fn new<T: TargetDensity + ?Sized>(
        target: &T,
        position: Vec<f64>,
        momentum: Vec<f64>,
        mass_diag: &[f64],
    ) -> Self {
        let mut grad = vec![0.0; position.len()];
        let logp = target.log_density_and_grad(&position, &mut grad);
        grad.iter_mut().for_each(|g| *g = -*g);
        let kinetic = kinetic_energy(&momentum, mass_diag);
        Self {
            position,
            momentum,
            potential: -logp,
            kinetic,
            grad_potential: grad,
        }
    }

    pub fn hamiltonian(&self) -> f64 {
        self.potential + self.kinetic
    }

    pub fn is_finite(&self) -> bool {
        self.hamiltonian().is_finite() && self.grad_potential.iter().all(|g| g.is_finite())
    }

    pub fn negate_momentum(&mut self) {
        self.momentum.iter_mut().for_each(|p| *p = -*p);
    }
}

pub fn kinetic_energy(momentum: &[f64], mass_diag: &[f64]) -> f64 {
    0.5 * momentum
        .iter()
        .zip(mass_diag)
        .map(|(p, m)| p * p / m)
        .sum::<f64>()
}

#[derive(Debug, Clone)]
pub struct LeapfrogOutcome {
    pub state: PhaseState,
    /// The potential or its gradient became non-finite mid-trajectory.
    pub divergent: bool,
}

/// Runs `n_steps` leapfrog updates of size `eps`.
pub fn leapfrog<T: TargetDensity + ?Sized>(
    state: &PhaseState,
    eps: f64,
    n_steps: usize,
    target: &T,
    mass_diag: &[f64],
) -> LeapfrogOutcome {
    let mut s = state.clone();
    let mut grad = vec![0.0; s.position.len()];
    for _ in 0..n_steps {
        for (p, g) in s.momentum.iter_mut().zip(&s.grad_potential) {
            *p -= 0.5 * eps * g;
        }
        for ((q, p), m) in s.position.iter_mut().zip(&s.momentum).zip(mass_diag) {
            *q += eps * p / m;
        }
        let logp = target.log_density_and_grad(&s.position, &mut grad);
        s.potential = -logp;
        for (gu, g) in s.grad_potential.iter_mut().zip(&grad) {
            *gu = -g;
        }
        if !s.potential.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            s.kinetic = kinetic_energy(&s.momentum, mass_diag);
            return LeapfrogOutcome {
                state: s,
                divergent: true,
            };
        }
        for (p, g) in s.momentum.iter_mut().zip(&s.grad_potential) {
            *p -= 0.5 * eps * g;
        }
    }
    s.kinetic = kinetic_energy(&s.momentum, mass_diag);
    LeapfrogOutcome {
        divergent: !s.is_finite(),
        state: s,
    }
}

#[derive(Debug, Clone)]
pub struct Transition {
    pub position: Vec<f64>,
    pub accepted: bool,
    /// min(1, exp(H_start − H_end)), zero for divergent trajectories.
    pub accept_prob: f64,
    /// H_end − H_start.
    pub energy_error: f64,
    pub divergent: bool,
}

/// Draws a momentum from `N(0, diag(mass_diag))`.
pub fn sample_momentum<R: Rng + ?Sized>(mass_diag: &[f64], rng: &mut R) -> Vec<f64> {
    mass_diag
        .iter()
        .map(|m| m.sqrt() * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// One HMC transition from `theta` with a fixed number of leapfrog steps.
pub fn hmc_step<T: TargetDensity + ?Sized, R: Rng + ?Sized>(
    theta: &[f64],
    eps: f64,
    n_leapfrog: usize,
    mass_diag: &[f64],
    target: &T,
    rng: &mut R,
) -> Transition {
    let momentum = sample_momentum(mass_diag, rng);
    let start = PhaseState::new(target, theta.to_vec(), momentum, mass_diag);
    let out = leapfrog(&start, eps, n_leapfrog, target, mass_diag);
    let energy_error = out.state.hamiltonian() - start.hamiltonian();
    let divergent = out.divergent
        || !energy_error.is_finite()
        || energy_error.abs() > DIVERGENCE_THRESHOLD;
    let accept_prob = if divergent {
        0.0
    } else {
        (-energy_error).exp().min(1.0)
    };
    let accepted = !divergent && rng.random::<f64>() < accept_prob;
    Transition {
        position: if accepted {
            out.state.position
        } else {
            theta.to_vec()
        },
        accepted,
        accept_prob,
        energy_error,
        divergent,
    }
}

/// Number of leapfrog steps for one iteration, jittered uniformly over
/// `⌈0.8 L⌉ ..= ⌈1.2 L⌉`.
pub fn jittered_steps<R: Rng + ?Sized>(base: usize, rng: &mut R) -> usize {
    let lo = (0.8 * base as f64).ceil().max(1.0) as usize;
    let hi = (1.2 * base as f64).ceil().max(1.0) as usize;
    rng.random_range(lo..=hi)
}

#[cfg(test)]
pub(crate) mod test_targets {
    use super::TargetDensity;

    /// Independent Gaussian with per-coordinate scales.
    pub struct Gaussian {
        pub mean: Vec<f64>,
        pub sd: Vec<f64>,
    }

    impl Gaussian {
        pub fn standard(d: usize) -> Self {
            Self {
                mean: vec![0.0; d],
                sd: vec![1.0; d],
            }
        }
    }

    impl TargetDensity for Gaussian {
        fn dim(&self) -> usize {
            self.mean.len()
        }
        fn log_density(&self, theta: &[f64]) -> f64 {
            let mut g = vec![0.0; theta.len()];
            self.log_density_and_grad(theta, &mut g)
        }
        fn log_density_and_grad(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
            let mut lp = 0.0;
            for j in 0..theta.len() {
                let z = (theta[j] - self.mean[j]) / self.sd[j];
                lp -= 0.5 * z * z;
                grad[j] = -z / self.sd[j];
            }
            lp
        }
    }
}

#[cfg(test)]
mod tests {
    use super::test_targets::Gaussian;
    use super::*;
    use crate::seed::stream;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_step_size_is_identity() {
        let g = Gaussian::standard(1);
        let s = PhaseState::new(&g, vec![1.0], vec![0.0], &[1.0]);
        let out = leapfrog(&s, 0.0, 5, &g, &[1.0]);
        assert_eq!(out.state, s);
    }

    #[test]
    fn single_step_matches_hand_execution() {
        let g = Gaussian::standard(1);
        let s = PhaseState::new(&g, vec![0.0], vec![1.0], &[1.0]);
        let out = leapfrog(&s, 0.1, 1, &g, &[1.0]).state;
        assert_abs_diff_eq!(out.position[0], 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(out.momentum[0], 0.995, epsilon = 1e-15);
        assert_abs_diff_eq!(out.potential, 0.005, epsilon = 1e-15);
        assert_abs_diff_eq!(out.kinetic, 0.5 * 0.995 * 0.995, epsilon = 1e-15);
    }

    #[test]
    fn leapfrog_is_reversible() {
        let g = Gaussian {
            mean: vec![0.5, -1.0, 2.0],
            sd: vec![1.0, 0.3, 2.5],
        };
        let mass = [1.0, 4.0, 0.5];
        let s = PhaseState::new(&g, vec![0.3, -0.2, 1.0], vec![0.7, -1.1, 0.4], &mass);
        let mut fwd = leapfrog(&s, 0.05, 20, &g, &mass).state;
        fwd.negate_momentum();
        let mut back = leapfrog(&fwd, 0.05, 20, &g, &mass).state;
        back.negate_momentum();
        for j in 0..3 {
            assert_abs_diff_eq!(back.position[j], s.position[j], epsilon = 1e-10);
            assert_abs_diff_eq!(back.momentum[j], s.momentum[j], epsilon = 1e-10);
        }
    }

    #[test]
    fn leapfrog_preserves_volume() {
        let g = Gaussian {
            mean: vec![0.0],
            sd: vec![0.7],
        };
        let map = |q: f64, p: f64| {
            let s = PhaseState::new(&g, vec![q], vec![p], &[1.3]);
            let o = leapfrog(&s, 0.2, 1, &g, &[1.3]).state;
            (o.position[0], o.momentum[0])
        };
        let (q, p, h) = (0.4, -0.9, 1e-6);
        let dq = (map(q + h, p).0 - map(q - h, p).0) / (2.0 * h);
        let dqp = (map(q, p + h).0 - map(q, p - h).0) / (2.0 * h);
        let dpq = (map(q + h, p).1 - map(q - h, p).1) / (2.0 * h);
        let dp = (map(q, p + h).1 - map(q, p - h).1) / (2.0 * h);
        let det = dq * dp - dqp * dpq;
        assert!((det - 1.0).abs() < 1e-6, "det = {det}");
    }

    #[test]
    fn zero_step_size_always_accepts() {
        let g = Gaussian::standard(2);
        let mut rng = stream(3);
        for _ in 0..50 {
            let t = hmc_step(&[0.4, -2.0], 0.0, 10, &[1.0, 1.0], &g, &mut rng);
            assert!(t.accepted);
            assert_eq!(t.position, vec![0.4, -2.0]);
        }
    }

    #[test]
    fn acceptance_rate_on_standard_normal() {
        let g = Gaussian::standard(2);
        let mut rng = stream(11);
        let mut theta = vec![0.0, 0.0];
        let mut accepted = 0;
        for _ in 0..10_000 {
            let t = hmc_step(&theta, 0.5, 8, &[1.0, 1.0], &g, &mut rng);
            accepted += t.accepted as usize;
            theta = t.position;
        }
        let rate = accepted as f64 / 10_000.0;
        assert!(rate > 0.6 && rate < 0.999, "rate = {rate}");
    }

    #[test]
    fn energy_error_is_second_order() {
        // fixed integration time: halving eps doubles the step count
        let g = Gaussian::standard(2);
        let mean_abs_error = |eps: f64, steps: usize| {
            let mut rng = stream(5);
            let mut total = 0.0;
            for _ in 0..2000 {
                let q: Vec<f64> = sample_momentum(&[1.0, 1.0], &mut rng);
                let p = sample_momentum(&[1.0, 1.0], &mut rng);
                let s = PhaseState::new(&g, q, p, &[1.0, 1.0]);
                let o = leapfrog(&s, eps, steps, &g, &[1.0, 1.0]).state;
                total += (o.hamiltonian() - s.hamiltonian()).abs();
            }
            total / 2000.0
        };
        let ratio = mean_abs_error(0.2, 6) / mean_abs_error(0.1, 12);
        assert!((ratio - 4.0).abs() < 1.2, "ratio = {ratio}");
    }

    #[test]
    fn jitter_range() {
        let mut rng = stream(1);
        for _ in 0..1000 {
            let l = jittered_steps(32, &mut rng);
            assert!((26..=39).contains(&l));
        }
        assert!((1..=2).contains(&jittered_steps(1, &mut rng)));
    }

    #[test]
    fn non_finite_potential_is_divergent() {
        struct Wall;
        impl TargetDensity for Wall {
            fn dim(&self) -> usize {
                1
            }
            fn log_density(&self, t: &[f64]) -> f64 {
                if t[0] > 1.0 {
                    f64::NEG_INFINITY
                } else {
                    -0.5 * t[0] * t[0]
                }
            }
            fn log_density_and_grad(&self, t: &[f64], g: &mut [f64]) -> f64 {
                g[0] = -t[0];
                self.log_density(t)
            }
        }
        let s = PhaseState::new(&Wall, vec![0.9], vec![5.0], &[1.0]);
        assert!(leapfrog(&s, 0.1, 10, &Wall, &[1.0]).divergent);
        let mut rng = stream(2);
        let t = hmc_step(&[0.9], 0.5, 10, &[1.0], &Wall, &mut rng);
        if t.divergent {
            assert!(!t.accepted);
            assert_eq!(t.position, vec![0.9]);
        }
    }
}
