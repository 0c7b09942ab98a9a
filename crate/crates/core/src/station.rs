//! Chance-constrained station sizing and the station charging-load model.
//!
//! Arrivals of each class at a station are Poisson; their sum is approximated
//! by a normal distribution, so the service-probability requirement becomes
//! `y ≥ Σ Tλγ + Φ⁻¹(α)·sqrt(Σ Tλγ²)`, a second-order cone in `(y, γ)`.

use std::collections::BTreeMap;

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::conic::LinExpr;
use crate::error::{Error, Result};
use crate::transport::{PevClass, StationSitingVars};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationSizingParams {
    /// Required probability that every arriving vehicle finds a free spot.
    pub alpha: f64,
    /// Rated power of one charging spot.
    pub p_sp_kw: f64,
}

impl Default for StationSizingParams {
    fn default() -> Self {
        Self {
            alpha: 0.8,
            p_sp_kw: 44.0,
        }
    }
}

impl StationSizingParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.5..1.0).contains(&self.alpha) {
            return Err(Error::validation("sizing", format!("alpha must lie in [0.5, 1), got {}", self.alpha)));
        }
        if !(self.p_sp_kw > 0.0) {
            return Err(Error::validation("sizing", "p_sp_kw must be positive"));
        }
        Ok(())
    }
}

/// Arrival rates (vehicles per hour) for one (scenario, hour), keyed by
/// (path, node, class). Missing keys mean zero.
pub type TrafficSlice = BTreeMap<(usize, usize, usize), f64>;

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// `Φ⁻¹(alpha)`, polished with Newton steps on [`normal_cdf`].
pub fn normal_quantile(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Input(format!("quantile level must lie in (0, 1), got {alpha}")));
    }
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    let mut z = std.inverse_cdf(alpha);
    for _ in 0..3 {
        let density = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        if density < 1e-300 {
            break;
        }
        z -= (normal_cdf(z) - alpha) / density;
    }
    Ok(z)
}

/// `(Σ T_k λ γ, Σ T_k λ γ²)` at `node`.
pub fn weighted_demand(
    traffic: &TrafficSlice,
    classes: &[PevClass],
    gamma: impl Fn(usize, usize, usize) -> f64,
    node: usize,
) -> (f64, f64) {
    traffic
        .iter()
        .filter(|((_, i, _), _)| *i == node)
        .fold((0.0, 0.0), |(lin, sq), (&(q, i, k), &lambda)| {
            let g = gamma(q, i, k);
            let w = classes[k].charge_hours * lambda;
            (lin + w * g, sq + w * g * g)
        })
}

/// Spots needed at `node` to serve the selected flows with probability
/// `params.alpha`.
pub fn required_spots(
    traffic: &TrafficSlice,
    classes: &[PevClass],
    gamma: impl Fn(usize, usize, usize) -> f64,
    node: usize,
    params: &StationSizingParams,
) -> Result<f64> {
    let z = normal_quantile(params.alpha)?;
    let (lin, sq) = weighted_demand(traffic, classes, gamma, node);
    Ok(lin + z * sq.max(0.0).sqrt())
}

/// Average charging load at `node` in kW: `p_sp Σ T_k λ γ`.
pub fn charging_load_kw(
    traffic: &TrafficSlice,
    classes: &[PevClass],
    gamma: impl Fn(usize, usize, usize) -> f64,
    node: usize,
    params: &StationSizingParams,
) -> f64 {
    params.p_sp_kw * weighted_demand(traffic, classes, gamma, node).0
}

/// The (scenario, hour) slot with the largest total `Σ T_k λ` at `node`.
///
/// `slices` must be ordered by scenario, then hour; ties keep the first one.
pub fn peak_anchor(
    slices: &[((usize, usize), &TrafficSlice)],
    classes: &[PevClass],
    node: usize,
) -> Option<(usize, usize)> {
    let mut best: Option<((usize, usize), f64)> = None;
    for &(slot, slice) in slices {
        let load = weighted_demand(slice, classes, |_, _, _| 1.0, node).0;
        match best {
            Some((_, b)) if load <= b => {}
            _ => best = Some((slot, load)),
        }
    }
    best.map(|(slot, _)| slot)
}

/// Cone rows for the sizing constraint at `node` evaluated on `traffic`:
/// `‖(z·sqrt(T_k λ)·γ)_{q,k}‖₂ ≤ y − Σ T_k λ γ` over first-stage indices.
///
/// Returns `None` when `node` carries no traffic in `traffic`.
pub fn sizing_cone(
    traffic: &TrafficSlice,
    classes: &[PevClass],
    node: usize,
    params: &StationSizingParams,
    vars: &StationSitingVars,
) -> Result<Option<(Vec<LinExpr>, LinExpr)>> {
    let z = normal_quantile(params.alpha)?;
    let y = match vars.y_cs.get(node).copied().flatten() {
        Some(y) => y,
        None => return Ok(None),
    };
    let mut rows = Vec::new();
    let mut bound = LinExpr::var(y, 1.0);
    for (&(q, i, k), &lambda) in traffic.iter().filter(|((_, i, _), l)| *i == node && **l > 0.0) {
        let Some(&g) = vars.gamma.get(&(q, i, k)) else {
            continue;
        };
        let w = classes[k].charge_hours * lambda;
        rows.push(LinExpr::var(g, z * w.sqrt()));
        bound = bound.term(g, -w);
    }
    if rows.is_empty() {
        return Ok(None);
    }
    Ok(Some((rows, bound)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Poisson};

    fn classes() -> Vec<PevClass> {
        vec![
            PevClass {
                id: "a".into(),
                range_km: 200.0,
                charge_hours: 1.0,
                share: 0.5,
            },
            PevClass {
                id: "b".into(),
                range_km: 300.0,
                charge_hours: 0.5,
                share: 0.5,
            },
        ]
    }

    /// Φ by Simpson quadrature of the density from 0, independent of erfc.
    fn cdf_by_quadrature(z: f64) -> f64 {
        let n = 20_000;
        let h = z / n as f64;
        let f = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = f(0.0) + f(z);
        for i in 1..n {
            let t = i as f64 * h;
            s += if i % 2 == 1 { 4.0 * f(t) } else { 2.0 * f(t) };
        }
        0.5 + s * h / 3.0
    }

    fn quantile_by_bisection(p: f64) -> f64 {
        let (mut lo, mut hi) = (-10.0, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if cdf_by_quadrature(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn quantile_at_median_and_eighty_percent() {
        assert!(normal_quantile(0.5).unwrap().abs() < 1e-12);
        let oracle = quantile_by_bisection(0.8);
        assert!((oracle - 0.841621).abs() < 1e-6);
        assert!((normal_quantile(0.8).unwrap() - oracle).abs() < 1e-9);
    }

    #[test]
    fn quantile_round_trips() {
        for p in [0.6, 0.9, 0.99] {
            let z = normal_quantile(p).unwrap();
            assert!((cdf_by_quadrature(z) - p).abs() < 1e-9, "p = {p}");
        }
    }

    #[test]
    fn quantile_domain() {
        for bad in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(normal_quantile(bad).is_err());
        }
    }

    #[test]
    fn spots_formula() {
        let params = StationSizingParams::default();
        let cls = classes();
        let traffic: TrafficSlice = [((0, 3, 0), 60.0), ((1, 3, 1), 80.0)].into_iter().collect();
        assert_eq!(required_spots(&traffic, &cls, |_, _, _| 0.0, 3, &params).unwrap(), 0.0);
        // Σ Tλγ = 60 + 40 = 100 vehicle-hours.
        let spots = required_spots(&traffic, &cls, |_, _, _| 1.0, 3, &params).unwrap();
        let z = quantile_by_bisection(0.8);
        assert!((spots - (100.0 + z * 10.0)).abs() < 1e-6);
        assert!((spots - 108.416).abs() < 1e-3);
    }

    #[test]
    fn spots_monotone_in_rate_and_alpha() {
        let cls = classes();
        let mut params = StationSizingParams::default();
        let mut traffic: TrafficSlice = [((0, 0, 0), 5.0)].into_iter().collect();
        let a = required_spots(&traffic, &cls, |_, _, _| 1.0, 0, &params).unwrap();
        traffic.insert((0, 0, 0), 6.0);
        let b = required_spots(&traffic, &cls, |_, _, _| 1.0, 0, &params).unwrap();
        params.alpha = 0.95;
        let c = required_spots(&traffic, &cls, |_, _, _| 1.0, 0, &params).unwrap();
        assert!(a <= b && b <= c);
    }

    #[test]
    fn load_formula() {
        let params = StationSizingParams::default();
        let cls = classes();
        let one: TrafficSlice = [((0, 1, 0), 10.0)].into_iter().collect();
        assert_eq!(charging_load_kw(&one, &cls, |_, _, _| 0.0, 1, &params), 0.0);
        assert!((charging_load_kw(&one, &cls, |_, _, _| 1.0, 1, &params) - 440.0).abs() < 1e-12);
        let two: TrafficSlice = [((1, 1, 1), 7.0)].into_iter().collect();
        let both: TrafficSlice = one.iter().chain(two.iter()).map(|(k, v)| (*k, *v)).collect();
        let sum = charging_load_kw(&one, &cls, |_, _, _| 1.0, 1, &params)
            + charging_load_kw(&two, &cls, |_, _, _| 1.0, 1, &params);
        assert!((charging_load_kw(&both, &cls, |_, _, _| 1.0, 1, &params) - sum).abs() < 1e-9);
    }

    #[test]
    fn peak_anchor_ties_and_spike() {
        let cls = classes();
        let flat: TrafficSlice = [((0, 0, 0), 3.0)].into_iter().collect();
        let slices: Vec<((usize, usize), &TrafficSlice)> =
            (0..3).flat_map(|w| (0..24).map(move |t| (w, t))).map(|s| (s, &flat)).collect();
        assert_eq!(peak_anchor(&slices, &cls, 0), Some((0, 0)));

        let spike: TrafficSlice = [((0, 0, 0), 9.0)].into_iter().collect();
        let slices: Vec<((usize, usize), &TrafficSlice)> = (0..3)
            .flat_map(|w| (0..24).map(move |t| (w, t)))
            .map(|s| (s, if s == (2, 17) { &spike } else { &flat }))
            .collect();
        assert_eq!(peak_anchor(&slices, &cls, 0), Some((2, 17)));
        assert_eq!(peak_anchor(&[], &cls, 0), None);
    }

    #[test]
    fn peak_anchor_matches_exhaustive_scan() {
        use rand::Rng;
        let cls = classes();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<((usize, usize), TrafficSlice)> = (0..4)
            .flat_map(|w| (0..6).map(move |t| (w, t)))
            .map(|s| {
                let slice: TrafficSlice = (0..3)
                    .map(|q| ((q, 2, q % 2), rng.gen_range(0..5) as f64))
                    .collect();
                (s, slice)
            })
            .collect();
        let slices: Vec<_> = data.iter().map(|(s, t)| (*s, t)).collect();
        let totals: Vec<f64> = data
            .iter()
            .map(|(_, t)| t.iter().map(|(&(_, _, k), l)| cls[k].charge_hours * l).sum())
            .collect();
        let max = totals.iter().cloned().fold(f64::MIN, f64::max);
        let first = totals.iter().position(|&v| v == max).unwrap();
        assert_eq!(peak_anchor(&slices, &cls, 2), Some(data[first].0));
    }

    #[test]
    fn poisson_service_probability() {
        let params = StationSizingParams::default();
        let cls = classes();
        let traffic: TrafficSlice = [((0, 0, 0), 12.0), ((1, 0, 1), 30.0)].into_iter().collect();
        let spots = required_spots(&traffic, &cls, |_, _, _| 1.0, 0, &params).unwrap().ceil();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let a = Poisson::new(12.0 * 1.0).unwrap();
        let b = Poisson::new(30.0 * 0.5).unwrap();
        let trials = 100_000;
        let ok = (0..trials)
            .filter(|_| a.sample(&mut rng) + b.sample(&mut rng) <= spots)
            .count();
        assert!(ok as f64 / trials as f64 >= params.alpha - 0.02);
    }

    #[test]
    fn cone_agrees_with_formula_at_binary_points() {
        let params = StationSizingParams::default();
        let cls = classes();
        let traffic: TrafficSlice = [((0, 0, 0), 12.0), ((1, 0, 1), 30.0)].into_iter().collect();
        let mut vars = StationSitingVars::default();
        vars.gamma.insert((0, 0, 0), 0);
        vars.gamma.insert((1, 0, 1), 1);
        vars.x_cs = vec![Some(2)];
        vars.y_cs = vec![Some(3)];
        let (rows, bound) = sizing_cone(&traffic, &cls, 0, &params, &vars).unwrap().unwrap();
        for (g0, g1) in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)] {
            let gamma = |q: usize, _: usize, _: usize| if q == 0 { g0 } else { g1 };
            let need = required_spots(&traffic, &cls, gamma, 0, &params).unwrap();
            // At y = need the cone is tight.
            let x = [g0, g1, 1.0, need];
            let norm = rows.iter().map(|r| r.eval(&x).powi(2)).sum::<f64>().sqrt();
            assert!((bound.eval(&x) - norm).abs() < 1e-9);
        }
    }
}
