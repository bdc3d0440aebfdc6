use std::f64::consts::PI;

use hlcompete_core::jump::{jump_at, simulate_ensemble, simulate_stream, SimulationOptions, DEFAULT_ABSORPTION_EPS, JUMP_BOUND_A};
use hlcompete_core::rng::{draw_event, seeded};
use hlcompete_core::stats::mean_stderr;
use hlcompete_core::SizeProfile;

#[test]
fn equal_sizes_give_a_martingale() {
    let p = SizeProfile::hl0();
    let paths = simulate_ensemble(&p, 1e-2, 1.0, 21, 10_000, &SimulationOptions::sampled(0.1)).unwrap();
    for t in [0.1, 0.5, 1.0] {
        let xs: Vec<f64> = paths.iter().map(|tr| tr.value_at(t)).collect();
        let (mean, se) = mean_stderr(&xs);
        assert!((mean - 1.0).abs() <= 4.0 * se, "t={t}: mean {mean}, se {se}");
    }
}

#[test]
fn red_particles_arrive_with_frequency_x_over_two() {
    let p = SizeProfile::builtin("section4").unwrap();
    let mut rng = seeded(5, 0);
    let n = 200_000;
    for x in [0.3, 1.0, 1.7] {
        let red = (0..n)
            .filter(|_| jump_at(&p, 1e-3, x, draw_event(&mut rng, 1.0).theta_prime).unwrap().0)
            .count();
        let (f, q) = (red as f64 / n as f64, x / 2.0);
        assert!((f - q).abs() <= 4.0 * (q * (1.0 - q) / n as f64).sqrt(), "x={x}: {f}");
    }
}

#[test]
fn every_jump_respects_the_frozen_bound() {
    for (name, c) in [("hl0", 1e-2), ("section4", 1e-2), ("section4", 1e-3), ("ode-fixed-point", 1e-2)] {
        let p = SizeProfile::builtin(name).unwrap();
        let opts = SimulationOptions {
            record_events: true,
            ..SimulationOptions::sampled(1.0)
        };
        for stream in 0..8 {
            let tr = simulate_stream(&p, c, 0.5, 2, stream, &opts).unwrap();
            for w in tr.events.unwrap().windows(2) {
                let x = w[0].x;
                let s = p.s_plus(x, c).max(p.s_minus(x, c));
                let dx = (w[1].x - x).abs();
                // Analytic supremum of a single displacement; settling onto an
                // end moves x by at most the absorption threshold.
                let sup = 4.0 / PI * (c * s).exp_m1().sqrt().atan();
                assert!(dx <= sup * (1.0 + 1e-12) + DEFAULT_ABSORPTION_EPS, "{name} c={c}: {dx} > {sup}");
                assert!(dx <= JUMP_BOUND_A * (c * s).sqrt());
            }
        }
    }
}
