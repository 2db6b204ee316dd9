//! Step-size adaptation by dual averaging on the acceptance statistic.

use rand::Rng;

use super::{leapfrog, sample_momentum, PhaseState, TargetDensity};

const MIN_STEP: f64 = 1e-8;
const MAX_STEP: f64 = 1e3;

/// Nesterov dual averaging of `log ε` towards a target mean acceptance.
///
/// The shrinkage point `mu` is `log ε₀`, so an acceptance history sitting
/// exactly on target leaves the step size where it started.
#[derive(Debug, Clone)]
pub struct DualAveraging {
    mu: f64,
    target: f64,
    gamma: f64,
    t0: f64,
    kappa: f64,
    t: u64,
    h_bar: f64,
    log_step: f64,
    log_step_bar: f64,
}

impl DualAveraging {
    pub fn new(initial_step: f64, target_accept: f64) -> Self {
        let log0 = initial_step.clamp(MIN_STEP, MAX_STEP).ln();
        Self {
            mu: log0,
            target: target_accept,
            gamma: 0.05,
            t0: 10.0,
            kappa: 0.75,
            t: 0,
            h_bar: 0.0,
            log_step: log0,
            log_step_bar: log0,
        }
    }

    /// Feeds one acceptance statistic and returns the step size to use next.
    pub fn update(&mut self, accept_stat: f64) -> f64 {
        self.t += 1;
        let t = self.t as f64;
        let w = 1.0 / (t + self.t0);
        let a = if accept_stat.is_finite() {
            accept_stat.clamp(0.0, 1.0)
        } else {
            0.0
        };
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - a);
        self.log_step = (self.mu - t.sqrt() / self.gamma * self.h_bar)
            .clamp(MIN_STEP.ln(), MAX_STEP.ln());
        let eta = t.powf(-self.kappa);
        self.log_step_bar = eta * self.log_step + (1.0 - eta) * self.log_step_bar;
        self.log_step.exp()
    }

    pub fn current(&self) -> f64 {
        self.log_step.exp()
    }

    /// The averaged step size, frozen once warmup ends.
    pub fn final_step(&self) -> f64 {
        self.log_step_bar.exp().clamp(MIN_STEP, MAX_STEP)
    }
}

/// Replays an acceptance history through [`DualAveraging`] and returns the
/// step size after each update.
pub fn adapt_step_size(history: &[f64], initial_step: f64, target_accept: f64) -> Vec<f64> {
    let mut da = DualAveraging::new(initial_step, target_accept);
    history.iter().map(|&a| da.update(a)).collect()
}

/// Doubles or halves `initial` until a single leapfrog step crosses an
/// acceptance ratio of one half.
pub fn find_reasonable_step_size<T: TargetDensity + ?Sized, R: Rng + ?Sized>(
    theta: &[f64],
    initial: f64,
    mass_diag: &[f64],
    target: &T,
    rng: &mut R,
) -> f64 {
    let mut eps = initial.clamp(MIN_STEP, MAX_STEP);
    let momentum = sample_momentum(mass_diag, rng);
    let start = PhaseState::new(target, theta.to_vec(), momentum, mass_diag);
    let h0 = start.hamiltonian();
    let log_ratio = |eps: f64| {
        let out = leapfrog(&start, eps, 1, target, mass_diag);
        let d = h0 - out.state.hamiltonian();
        if out.divergent || !d.is_finite() {
            f64::NEG_INFINITY
        } else {
            d
        }
    };
    let half = 0.5f64.ln();
    let direction = if log_ratio(eps) > half { 1.0 } else { -1.0 };
    for _ in 0..100 {
        let lr = log_ratio(eps);
        if direction * lr <= direction * half {
            break;
        }
        let next = eps * 2f64.powf(direction);
        if !(MIN_STEP..=MAX_STEP).contains(&next) {
            break;
        }
        eps = next;
    }
    eps
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmc::test_targets::Gaussian;
    use crate::seed::stream;
    use approx::assert_relative_eq;

    #[test]
    fn on_target_history_is_a_fixed_point() {
        let steps = adapt_step_size(&[0.8; 500], 0.37, 0.8);
        for s in &steps {
            assert_relative_eq!(*s, 0.37, max_relative = 1e-12);
        }
        let mut da = DualAveraging::new(0.37, 0.8);
        for _ in 0..500 {
            da.update(0.8);
        }
        assert_relative_eq!(da.final_step(), 0.37, max_relative = 1e-12);
    }

    #[test]
    fn all_reject_history_shrinks_monotonically() {
        let steps = adapt_step_size(&[0.0; 200], 1.0, 0.8);
        let mut prev = 1.0;
        for s in steps {
            // strictly decreasing until the lower clamp is reached
            assert!(s < prev || s <= MIN_STEP * (1.0 + 1e-12), "{s} !< {prev}");
            prev = s;
        }
    }

    #[test]
    fn step_is_clamped() {
        let steps = adapt_step_size(&[0.0; 100_000], 1.0, 0.99);
        assert!(*steps.last().unwrap() >= 1e-8 * (1.0 - 1e-12));
        let steps = adapt_step_size(&[1.0; 100_000], 1.0, 0.01);
        assert!(*steps.last().unwrap() <= 1e3 * (1.0 + 1e-12));
    }

    #[test]
    fn reasonable_step_is_order_of_target_scale() {
        let g = Gaussian {
            mean: vec![0.0, 0.0],
            sd: vec![0.01, 0.01],
        };
        let mut rng = stream(9);
        let eps = find_reasonable_step_size(&[0.0, 0.0], 1.0, &[1.0, 1.0], &g, &mut rng);
        assert!(eps < 0.1 && eps > 1e-4, "eps = {eps}");
    }
}
