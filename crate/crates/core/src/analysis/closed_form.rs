//! Closed-form comparison bounds and the two-block blow-up family.

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::expr::LipschitzVector;

/// Cyclic block descent bound with `γ_ℓ = 1/L_ℓ` in the cycle-end radius setting:
/// `4 L_max (1 + p³ L_max² / L_min²) R_a² / (K + 8/p)`.
pub fn beck_ccd_bound(p: usize, k: usize, l: &LipschitzVector, r_a: f64) -> f64 {
    let (lmax, lmin) = (l.max(), l.min());
    let pf = p as f64;
    4.0 * lmax * (1.0 + pf.powi(3) * lmax * lmax / (lmin * lmin)) * r_a * r_a / (k as f64 + 8.0 / pf)
}

/// Two-block alternating minimization bound `2 min(L_1, L_2) R_a² / (K − 1)`.
pub fn am_bound(k: usize, l: &LipschitzVector, r_a: f64) -> Result<f64> {
    if l.len() != 2 {
        return invalid(format!("the alternating minimization bound is for two blocks, got {}", l.len()));
    }
    if k < 2 {
        return invalid("the alternating minimization bound needs K ≥ 2");
    }
    Ok(2.0 * l.min() * r_a * r_a / (k as f64 - 1.0))
}

/// Expected-gap bound of the randomized accelerated method:
/// `4p²R²/(N − 1 + 2p)²` with `R² = (1 − 1/p)·gap + ½·dist²`.
pub fn racd_expected_bound(p: usize, n: usize, f0_gap: f64, init_l_dist_sq: f64) -> Result<f64> {
    if n == 0 {
        return invalid("at least one step is required");
    }
    let pf = p as f64;
    let r2 = (1.0 - 1.0 / pf) * f0_gap + 0.5 * init_l_dist_sq;
    let d = n as f64 - 1.0 + 2.0 * pf;
    Ok(4.0 * pf * pf * r2 / (d * d))
}

/// The same bound under an `L`-norm ball of radius `r_i` around the minimizer,
/// where the initial gap is at most `(p/2) r_i²`.
pub fn racd_comparator_init(p: usize, n: usize, r_i: f64) -> Result<f64> {
    racd_expected_bound(p, n, 0.5 * p as f64 * r_i * r_i, r_i * r_i)
}

/// Per-cycle bounds `(1/C)·R²/(k + m)` with `m = 2/(p L_max C)`, for `k = 1..=K`.
pub fn semi_analytic_bound(c: f64, p: usize, k: usize, l: &LipschitzVector, r: f64) -> Result<Vec<f64>> {
    if !(c.is_finite() && c > 0.0) {
        return invalid(format!("descent constant must be positive, got {c}"));
    }
    let m = 2.0 / (p as f64 * l.max() * c);
    Ok((1..=k).map(|k| r * r / (c * (k as f64 + m))).collect())
}

/// Descent constant that reproduces the cyclic bound's envelope.
pub fn beck_descent_constant(p: usize, l: &LipschitzVector) -> f64 {
    let (lmax, lmin) = (l.max(), l.min());
    1.0 / (4.0 * lmax * (1.0 + (p as f64).powi(3) * lmax * lmax / (lmin * lmin)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlowupReport {
    pub eps: f64,
    /// `(x, y)` at the start and after each cycle.
    pub iterates: Vec<(f64, f64)>,
    /// Distances to the minimizer at the cycle ends.
    pub distances: Vec<f64>,
    /// `max_k` cycle-end distance.
    pub r_a: f64,
    pub final_gap: f64,
    pub beck_bound: f64,
    /// Cyclic bound divided by the attained gap.
    pub inflation: f64,
}

/// `f_ε(x, y) = (x − y)² + ε(x² + y²)`, started at `(1, −1)` with steps `1/(2(1 + ε))`.
pub fn blowup_function(eps: f64, x: f64, y: f64) -> f64 {
    (x - y).powi(2) + eps * (x * x + y * y)
}

pub fn blowup_example(eps: f64, k: usize) -> Result<BlowupReport> {
    if !(eps.is_finite() && eps > 0.0) {
        return invalid(format!("ε must be positive, got {eps}"));
    }
    if k == 0 {
        return invalid("at least one cycle is required");
    }
    let s = 1.0 + eps;
    let mut iterates = vec![(1.0, -1.0)];
    for _ in 0..k {
        let (_, y) = *iterates.last().expect("non-empty");
        iterates.push((y / s, y / (s * s)));
    }
    let distances: Vec<f64> = iterates[1..].iter().map(|(x, y)| x.hypot(*y)).collect();
    let r_a = distances.iter().fold(0.0f64, |a, d| a.max(*d));
    let (x, y) = iterates[k];
    let final_gap = blowup_function(eps, x, y);
    let l = LipschitzVector::uniform(2, 2.0 * s)?;
    let beck = beck_ccd_bound(2, k, &l, r_a);
    Ok(BlowupReport { eps, iterates, distances, r_a, final_gap, beck_bound: beck, inflation: beck / final_gap })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(p: usize) -> LipschitzVector {
        LipschitzVector::uniform(p, 1.0).unwrap()
    }

    #[test]
    fn beck_values() {
        assert!((beck_ccd_bound(2, 1, &unit(2), 1.0) - 7.2).abs() < 1e-12);
        assert!((beck_ccd_bound(1, 1, &unit(1), 1.0) - 8.0 / 9.0).abs() < 1e-12);
        let a = beck_ccd_bound(3, 2, &LipschitzVector::new(vec![1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert!(
            (beck_ccd_bound(3, 2, &LipschitzVector::new(vec![1.0, 2.0, 3.0]).unwrap(), 2.0) - 4.0 * a).abs() < 1e-12
        );
    }

    #[test]
    fn am_values() {
        assert_eq!(am_bound(2, &unit(2), 1.0).unwrap(), 2.0);
        assert_eq!(am_bound(3, &LipschitzVector::new(vec![2.0, 3.0]).unwrap(), 1.0).unwrap(), 2.0);
        let ab = am_bound(4, &LipschitzVector::new(vec![0.5, 7.0]).unwrap(), 1.5).unwrap();
        let ba = am_bound(4, &LipschitzVector::new(vec![7.0, 0.5]).unwrap(), 1.5).unwrap();
        assert_eq!(ab, ba);
        assert!(am_bound(1, &unit(2), 1.0).is_err());
        assert!(am_bound(3, &unit(3), 1.0).is_err());
    }

    #[test]
    fn racd_values() {
        assert!((racd_expected_bound(2, 4, 0.0, 2.0).unwrap() - 16.0 / 49.0).abs() < 1e-15);
        // p = 1: the gap term drops out
        assert_eq!(racd_expected_bound(1, 3, 123.0, 2.0).unwrap(), racd_expected_bound(1, 3, 0.0, 2.0).unwrap());
        let a = racd_expected_bound(3, 5, 0.7, 0.4).unwrap();
        let b = racd_expected_bound(3, 5, 1.4, 0.8).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-15);
        assert!(racd_expected_bound(2, 0, 0.0, 1.0).is_err());
        // (p/2) R² under the L-ball
        assert!((racd_comparator_init(2, 4, 1.0).unwrap() - 16.0 / 49.0).abs() < 1e-15);
    }

    #[test]
    fn semi_analytic_values() {
        let b = semi_analytic_bound(0.38, 2, 5, &unit(2), 1.0).unwrap();
        let m: f64 = 2.0 / (2.0 * 0.38);
        assert!((m - 2.6316).abs() < 1e-4);
        assert!((b[0] - 0.7246).abs() < 1e-4);
        assert!(b.windows(2).all(|w| w[1] < w[0]));
        assert!(semi_analytic_bound(0.0, 2, 1, &unit(2), 1.0).is_err());
    }

    #[test]
    fn semi_analytic_with_beck_constant_tracks_envelope() {
        // with C from the cyclic bound: (1/C)/(k + m) against 4L(1+p³)/(k + 8/p); only the offset differs
        for p in [2usize, 3] {
            let l = unit(p);
            let c = beck_descent_constant(p, &l);
            let s = semi_analytic_bound(c, p, 50, &l, 1.0).unwrap();
            for (k, v) in s.iter().enumerate() {
                let beck = beck_ccd_bound(p, k + 1, &l, 1.0);
                let m = 2.0 / (p as f64 * c);
                let offset = (k as f64 + 1.0 + 8.0 / p as f64) / (k as f64 + 1.0 + m);
                assert!((v / beck - offset).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn blowup_first_cycle() {
        let r = blowup_example(1.0, 1).unwrap();
        assert_eq!(r.iterates[1], (-0.5, -0.25));
        assert!((r.r_a - 0.5 * (1.0f64 + 0.25).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn blowup_matches_numeric_ccd() {
        // run block gradient steps directly on f_ε
        let eps = 0.3;
        let r = blowup_example(eps, 4).unwrap();
        let step = 1.0 / (2.0 * (1.0 + eps));
        let (mut x, mut y) = (1.0f64, -1.0f64);
        for k in 1..=4 {
            x -= step * (2.0 * (x - y) + 2.0 * eps * x);
            y -= step * (-2.0 * (x - y) + 2.0 * eps * y);
            assert!((x - r.iterates[k].0).abs() < 1e-14 && (y - r.iterates[k].1).abs() < 1e-14);
        }
    }

    #[test]
    fn blowup_limits() {
        let small: Vec<f64> = [1.0, 0.1, 0.01, 0.001].iter().map(|e| blowup_example(*e, 5).unwrap().r_a).collect();
        assert!(small.windows(2).all(|w| w[1] > w[0]));
        assert!((small[3] - 2f64.sqrt()).abs() < 1e-2);
        // the inflation diverges once ε is small enough for the iterates to barely contract
        let infl: Vec<f64> =
            [0.1, 0.01, 0.001, 0.0001].iter().map(|e| blowup_example(*e, 5).unwrap().inflation).collect();
        assert!(infl.windows(2).all(|w| w[1] > w[0]));
        let big = blowup_example(1e8, 3).unwrap();
        assert!(big.r_a < 1e-7 && big.iterates[1].0.abs() < 1e-7);
        assert!(blowup_example(0.0, 1).is_err());
    }
}
