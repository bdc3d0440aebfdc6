use hlcompete_core::cluster::{evaluate_map, grow, grow_stream, Colour, GrowthLimit};
use hlcompete_core::slit_map::gamma_rotated;
use hlcompete_core::stats::mean_stderr;
use hlcompete_core::{ComplexPoint, SizeProfile};
use num_complex::Complex64;

fn pt(re: f64, im: f64) -> ComplexPoint {
    ComplexPoint::Finite(Complex64::new(re, im))
}

#[test]
fn composed_arc_lengths_still_sum_to_two() {
    let cl = grow(&SizeProfile::builtin("section4").unwrap(), 1e-2, GrowthLimit::Particles(300), 17).unwrap();
    let compose = |x: f64| cl.particles.iter().fold(x, |y, p| gamma_rotated(p.capacity, p.theta, y));
    let cuts: Vec<f64> = (0..=37).map(|k| -1.0 + 2.0 * (k as f64 / 37.0).powf(1.3)).collect();
    let images: Vec<f64> = cuts.iter().map(|&x| compose(x)).collect();
    let lengths: Vec<f64> = images.windows(2).map(|w| w[1] - w[0]).collect();
    assert!(lengths.iter().all(|&l| l >= 0.0));
    assert!((lengths.iter().sum::<f64>() - 2.0).abs() <= 1e-12);
}

#[test]
fn leading_coefficient_is_the_total_capacity() {
    let cl = grow(&SizeProfile::hl0(), 5e-3, GrowthLimit::Particles(120), 4).unwrap();
    let total: f64 = cl.particles.iter().map(|p| p.capacity.get()).sum();
    let r = 1e6;
    let w = evaluate_map(&cl, cl.particles.len(), pt(r, 0.0)).unwrap().finite().unwrap();
    assert!(((w / r).norm() / total.exp() - 1.0).abs() < 0.01);
}

#[test]
fn identity_for_no_particles_and_domain_errors_inside_the_disk() {
    let cl = grow(&SizeProfile::hl0(), 1e-2, GrowthLimit::Particles(5), 1).unwrap();
    assert_eq!(evaluate_map(&cl, 0, pt(1.5, -0.2)).unwrap(), pt(1.5, -0.2));
    assert!(evaluate_map(&cl, 5, pt(0.5, 0.1)).is_err());
    assert!(evaluate_map(&cl, 5, ComplexPoint::Infinity).unwrap().is_infinite());
}

#[test]
fn symmetric_competition_colours_half_the_particles_red() {
    // X is a martingale with X_0 = 1, so each arrival is red with probability 1/2.
    let p = SizeProfile::hl0();
    let fractions: Vec<f64> = (0..200)
        .map(|s| {
            let cl = grow_stream(&p, 1e-3, GrowthLimit::Particles(1000), 8, s).unwrap();
            cl.particles.iter().filter(|q| q.colour == Colour::Red).count() as f64 / 1000.0
        })
        .collect();
    let (mean, se) = mean_stderr(&fractions);
    assert!((mean - 0.5).abs() <= 4.0 * se, "{mean} +/- {se}");
}

#[test]
fn one_colour_takes_over_after_absorption() {
    let p = SizeProfile::hl0();
    let mut seen = 0;
    for seed in 0..40 {
        let cl = grow(&p, 0.3, GrowthLimit::Particles(400), seed).unwrap();
        let Some(k) = cl.trace.iter().position(|&x| x == 0.0 || x == 2.0) else {
            continue;
        };
        seen += 1;
        let winner = if cl.trace[k] == 0.0 { Colour::Blue } else { Colour::Red };
        assert!(cl.particles[k + 1..].iter().all(|q| q.colour == winner));
        assert!(cl.trace[k..].iter().all(|&x| x == cl.trace[k]));
    }
    assert!(seen > 0);
}
