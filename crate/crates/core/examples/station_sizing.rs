//! Sizes one charging station with the normal-approximation rule and checks
//! the resulting service level against simulated Poisson occupancy.
//!
//!     cargo run --release --example station_sizing

use pevplan::station::{required_spots, StationSizingParams, TrafficSlice};
use pevplan::transport::PevClass;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

fn main() -> pevplan::Result<()> {
    let classes = vec![
        PevClass { id: "short".into(), range_km: 200.0, charge_hours: 0.7, share: 0.6 },
        PevClass { id: "long".into(), range_km: 300.0, charge_hours: 1.05, share: 0.4 },
    ];
    // Arrivals per hour at node 0 from three paths.
    let mut slice = TrafficSlice::new();
    for (q, lambda) in [(0, 4.0), (1, 2.5), (2, 1.2)] {
        slice.insert((q, 0, 0), 0.6 * lambda);
        slice.insert((q, 0, 1), 0.4 * lambda);
    }
    let all = |_: usize, _: usize, _: usize| 1.0;
    let mean: f64 = slice.iter().map(|(&(_, _, k), &l)| classes[k].charge_hours * l).sum();
    let occupancy = Poisson::new(mean).expect("positive mean");
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    println!("mean vehicles in service {mean:.3}");
    println!("{:>6} {:>10} {:>7} {:>10}", "alpha", "required", "built", "coverage");
    for alpha in [0.5, 0.7, 0.8, 0.9, 0.95, 0.99] {
        let params = StationSizingParams { alpha, ..StationSizingParams::default() };
        let need = required_spots(&slice, &classes, all, 0, &params)?;
        let built = need.ceil();
        let trials = 100_000;
        let ok = (0..trials).filter(|_| occupancy.sample(&mut rng) <= built).count();
        println!("{alpha:>6} {need:>10.3} {built:>7} {:>10.4}", ok as f64 / trials as f64);
    }
    Ok(())
}
