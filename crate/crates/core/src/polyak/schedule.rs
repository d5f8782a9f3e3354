//! Step-size rules and the dampening bound for the moving-target method.

use crate::error::{argument, Result};

/// Largest admissible dampening `(2n+1)/(2n+3)` for which the growth
/// constant `(1−λ)(2n+1)` bounds the target component.
pub fn lambda_max(n: usize) -> f64 {
    let n = n as f64;
    (2.0 * n + 1.0) / (2.0 * n + 3.0)
}

/// Fixed-point coefficient `(1−λ)n / (λ + (1−λ)n)` of the target update.
pub fn motaps_tau_coeff(lambda: f64, n: usize) -> Result<f64> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(argument(format!("lambda must lie in [0, 1), got {lambda}")));
    }
    if n == 0 {
        return Err(argument("n must be at least 1"));
    }
    let m = (1.0 - lambda) * n as f64;
    Ok(m / (lambda + m))
}

/// Dampening that makes the additive error at most `ε/2`, kept strictly
/// inside the admissible range by a 0.99 factor.
pub fn choose_lambda(epsilon: f64, mu: f64, n: usize, f_star: f64) -> Result<f64> {
    if !(epsilon > 0.0) || !(mu > 0.0) {
        return Err(argument("epsilon and mu must be positive"));
    }
    if n == 0 || !(f_star >= 0.0) {
        return Err(argument("need n >= 1 and f_star >= 0"));
    }
    let cap = lambda_max(n);
    let bound = if f_star == 0.0 {
        cap
    } else {
        (mu * (n as f64 + 1.0) * epsilon / (2.0 * f_star * f_star)).min(cap)
    };
    Ok(0.99 * bound)
}

/// Iteration at which the decreasing schedule leaves its constant phase:
/// `2(2n+1)·⌈(1−λ)/μ⌉`.
pub fn switch_point(lambda: f64, mu: f64, n: usize) -> u64 {
    let m = 2 * n as u64 + 1;
    2 * m * ((1.0 - lambda) / mu).ceil() as u64
}

/// Step size `γ_t`: constant `1/((1−λ)(2n+1))` up to the switch point, then
/// `((t+1)² − t²) / (μ(t+1)²)`.
pub fn decreasing_schedule(t: u64, lambda: f64, mu: f64, n: usize) -> f64 {
    if t <= switch_point(lambda, mu, n) {
        1.0 / ((1.0 - lambda) * (2 * n + 1) as f64)
    } else {
        let t1 = (t + 1) as f64;
        let tt = t as f64;
        (t1 * t1 - tt * tt) / (mu * t1 * t1)
    }
}

/// `(γ, γ_τ) = (1/(1 + σe^σ/4), 1 − γ)`.
pub fn rule_of_thumb(sigma: f64) -> (f64, f64) {
    let gamma = 1.0 / (1.0 + 0.25 * sigma * sigma.exp());
    (gamma, 1.0 - gamma)
}

/// `γ_τ = γ(λ + (1−λ)n)`: the rate that makes the target update an exact
/// gradient step with step `γ` on the target component.
pub fn coupled_gamma_tau(gamma: f64, lambda: f64, n: usize) -> f64 {
    gamma * (lambda + (1.0 - lambda) * n as f64)
}

/// Conservative constant stepsizes `γ = 1/(2(1−λ)(2n+1))`, `γ_τ` coupled.
pub fn conservative_stepsizes(lambda: f64, n: usize) -> (f64, f64) {
    let gamma = 1.0 / (2.0 * (1.0 - lambda) * (2 * n + 1) as f64);
    (gamma, coupled_gamma_tau(gamma, lambda, n))
}

/// Full constant stepsizes `γ = 1/((1−λ)(2n+1))`, `γ_τ` coupled.
pub fn full_stepsizes(lambda: f64, n: usize) -> (f64, f64) {
    let gamma = 1.0 / ((1.0 - lambda) * (2 * n + 1) as f64);
    (gamma, coupled_gamma_tau(gamma, lambda, n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_max_values() {
        assert_eq!(lambda_max(1), 0.6);
        assert_eq!(lambda_max(49), 99.0 / 101.0);
        assert!(lambda_max(1_000_000) < 1.0);
        assert!(lambda_max(1_000_000) > 0.999_99);
    }

    #[test]
    fn tau_coeff_values() {
        assert_eq!(motaps_tau_coeff(0.0, 7).unwrap(), 1.0);
        assert!((motaps_tau_coeff(0.1, 9).unwrap() - 8.1 / 8.2).abs() < 1e-15);
        assert!((motaps_tau_coeff(0.6, 1).unwrap() - 0.4).abs() < 1e-15);
        assert!(motaps_tau_coeff(1.0, 3).is_err());
    }

    #[test]
    fn choose_lambda_values() {
        assert_eq!(
            choose_lambda(1.0, 1.0, 4, 0.0).unwrap(),
            0.99 * lambda_max(4)
        );
        assert!((choose_lambda(2.0, 1.0, 1, 1.0).unwrap() - 0.594).abs() < 1e-15);
        let a = choose_lambda(1e-6, 1.0, 3, 2.0).unwrap();
        let b = choose_lambda(2e-6, 1.0, 3, 2.0).unwrap();
        assert!((b / a - 2.0).abs() < 1e-12);
        assert!(choose_lambda(0.0, 1.0, 1, 1.0).is_err());
        assert!(choose_lambda(1.0, -1.0, 1, 1.0).is_err());
    }

    #[test]
    fn decreasing_schedule_values() {
        assert_eq!(decreasing_schedule(0, 0.2, 0.5, 3), 1.0 / (0.8 * 7.0));
        assert_eq!(switch_point(0.0, 1.0, 1), 6);
        assert_eq!(decreasing_schedule(6, 0.0, 1.0, 1), 1.0 / 3.0);
        assert_eq!(decreasing_schedule(7, 0.0, 1.0, 1), 15.0 / 64.0);
        let t = 1_000_000u64;
        let g = decreasing_schedule(t, 0.0, 1.0, 1);
        assert!((g * t as f64 / 2.0 - 1.0).abs() < 1e-5);
    }

    #[test]
    fn rule_of_thumb_values() {
        assert_eq!(rule_of_thumb(0.0), (1.0, 0.0));
        let (g, gt) = rule_of_thumb(1.0);
        assert!((g - 1.0 / (1.0 + 0.25 * std::f64::consts::E)).abs() < 1e-15);
        assert!((g - 0.5954).abs() < 1e-4);
        assert!((gt - 0.4046).abs() < 1e-4);
        let (g, gt) = rule_of_thumb(50.0);
        assert!(g < 1e-20 && (gt - 1.0).abs() < 1e-15);
    }

    #[test]
    fn presets_are_coupled() {
        let (g, gt) = conservative_stepsizes(0.1, 50);
        assert!((g - 1.0 / (2.0 * 0.9 * 101.0)).abs() < 1e-16);
        assert!((gt - g * (0.1 + 0.9 * 50.0)).abs() < 1e-15);
        let (g2, _) = full_stepsizes(0.1, 50);
        assert!((g2 - 2.0 * g).abs() < 1e-16);
    }
}
