//! Split-R̂ and effective sample size.
//!
//! Both operate on split chains: every chain is cut into two halves (the
//! middle draw is dropped for odd lengths) and the halves are treated as
//! separate chains. ESS uses Geyer's initial monotone sequence on the
//! multi-chain autocorrelation estimate.

fn split(chains: &[&[f64]]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let half = c.len() / 2;
        out.push(c[..half].to_vec());
        out.push(c[c.len() - half..].to_vec());
    }
    out
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Split-R̂ for one scalar quantity. Returns NaN for chains shorter than 4.
pub fn split_rhat(chains: &[&[f64]]) -> f64 {
    if chains.is_empty() || chains.iter().any(|c| c.len() < 4) {
        return f64::NAN;
    }
    let halves = split(chains);
    let n = halves[0].len() as f64;
    let means: Vec<f64> = halves.iter().map(|c| mean(c)).collect();
    let within = mean(&halves.iter().map(|c| sample_variance(c)).collect::<Vec<_>>());
    let between_over_n = sample_variance(&means);
    if within <= 0.0 {
        return if between_over_n == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n - 1.0) / n * within + between_over_n;
    (var_plus / within).sqrt()
}

/// Autocovariance at `lag` with divisor n.
fn autocov(x: &[f64], m: f64, lag: usize) -> f64 {
    let n = x.len();
    x[..n - lag]
        .iter()
        .zip(&x[lag..])
        .map(|(a, b)| (a - m) * (b - m))
        .sum::<f64>()
        / n as f64
}

/// Multi-chain effective sample size for one scalar quantity.
pub fn ess(chains: &[&[f64]]) -> f64 {
    if chains.is_empty() || chains.iter().any(|c| c.len() < 8) {
        return f64::NAN;
    }
    let halves = split(chains);
    let m = halves.len() as f64;
    let n = halves[0].len();
    let nf = n as f64;
    let means: Vec<f64> = halves.iter().map(|c| mean(c)).collect();
    let vars: Vec<f64> = halves
        .iter()
        .zip(&means)
        .map(|(c, &mu)| autocov(c, mu, 0) * nf / (nf - 1.0))
        .collect();
    let mean_var = mean(&vars);
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if halves.len() > 1 {
        var_plus += sample_variance(&means);
    }
    if !(var_plus > 0.0) {
        return f64::NAN;
    }
    let rho = |lag: usize| {
        let acov = halves
            .iter()
            .zip(&means)
            .map(|(c, &mu)| autocov(c, mu, lag))
            .sum::<f64>()
            / m;
        1.0 - (mean_var - acov) / var_plus
    };

    let mut rho_hat = vec![0.0; n];
    rho_hat[0] = 1.0;
    let mut even = 1.0;
    let mut odd = rho(1);
    rho_hat[1] = odd;
    let mut t = 1;
    while t + 4 < n && even + odd > 0.0 {
        even = rho(t + 1);
        odd = rho(t + 2);
        if even + odd >= 0.0 {
            rho_hat[t + 1] = even;
            rho_hat[t + 2] = odd;
        }
        t += 2;
    }
    let max_t = t;
    if even > 0.0 && max_t + 1 < n {
        rho_hat[max_t + 1] = even;
    }
    // initial monotone sequence
    let mut t = 1;
    while t + 3 <= max_t {
        if rho_hat[t + 1] + rho_hat[t + 2] > rho_hat[t - 1] + rho_hat[t] {
            rho_hat[t + 1] = 0.5 * (rho_hat[t - 1] + rho_hat[t]);
            rho_hat[t + 2] = rho_hat[t + 1];
        }
        t += 2;
    }
    let tail = if max_t + 1 < n { rho_hat[max_t + 1] } else { 0.0 };
    let tau = -1.0 + 2.0 * rho_hat[..max_t].iter().sum::<f64>() + tail;
    let total = m * nf;
    (total / tau).min(total * total.log10())
}
