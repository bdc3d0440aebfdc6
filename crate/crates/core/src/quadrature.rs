//! Globally adaptive Gauss-Kronrod (7/15) quadrature.
//!
//! The interval with the largest error estimate is bisected until the summed
//! estimate meets `max(abs_tol, rel_tol * |I|)`. Breakpoints passed to
//! [`Quadrature::integrate_with_breaks`] seed the initial partition so that
//! known kinks and boundary layers never straddle a panel.

use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the odd-indexed Kronrod nodes 1, 3, 5, 7.
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Clone, Copy, Debug)]
pub struct Quadrature {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            rel_tol: 1e-12,
            max_subdivisions: 4000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub subdivisions: usize,
}

#[derive(Clone, Copy, Debug)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Panel {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(centre);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(centre - dx) + f(centre + dx);
        kron += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Panel {
        a,
        b,
        value: kron * half,
        error: ((kron - gauss) * half).abs(),
    }
}

impl Quadrature {
    pub fn new(abs_tol: f64, rel_tol: f64) -> Self {
        Self {
            abs_tol,
            rel_tol,
            ..Self::default()
        }
    }

    /// Integral over `[a, b]`; `b < a` gives the oriented (negated) value.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> Result<QuadResult> {
        if b < a {
            let r = self.integrate_with_breaks(f, &[b, a])?;
            return Ok(QuadResult { value: -r.value, ..r });
        }
        self.integrate_with_breaks(f, &[a, b])
    }

    /// Integrates over `[points[0], points[last]]`, treating interior points as
    /// fixed panel boundaries. Points must be non-decreasing; empty panels are
    /// dropped.
    pub fn integrate_with_breaks<F: Fn(f64) -> f64>(&self, f: F, points: &[f64]) -> Result<QuadResult> {
        if points.len() < 2 {
            return Err(Error::Parameter("quadrature needs at least two points".into()));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::Parameter("quadrature limits must be finite".into()));
        }
        if points.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Parameter("quadrature breakpoints must be sorted".into()));
        }
        let mut heap = BinaryHeap::new();
        let mut total = 0.0;
        let mut total_err = 0.0;
        for w in points.windows(2) {
            if w[1] > w[0] {
                let p = kronrod(&f, w[0], w[1]);
                total += p.value;
                total_err += p.error;
                heap.push(p);
            }
        }
        let mut subdivisions = 0;
        loop {
            let target = self.abs_tol.max(self.rel_tol * total.abs());
            if total_err <= target {
                break;
            }
            if !total.is_finite() || !total_err.is_finite() || subdivisions >= self.max_subdivisions {
                return Err(Error::Quadrature {
                    a: points[0],
                    b: points[points.len() - 1],
                    estimate: total,
                    error: total_err,
                    subdivisions,
                });
            }
            let worst = heap.pop().expect("at least one panel");
            let mid = 0.5 * (worst.a + worst.b);
            if mid <= worst.a || mid >= worst.b {
                // Panel is at machine resolution; its error cannot shrink further.
                return Err(Error::Quadrature {
                    a: worst.a,
                    b: worst.b,
                    estimate: total,
                    error: total_err,
                    subdivisions,
                });
            }
            let left = kronrod(&f, worst.a, mid);
            let right = kronrod(&f, mid, worst.b);
            total += left.value + right.value - worst.value;
            total_err += left.error + right.error - worst.error;
            heap.push(left);
            heap.push(right);
            subdivisions += 1;
        }
        // Re-sum to shed the drift of incremental updates.
        let value = heap.iter().map(|p| p.value).sum();
        let error = heap.iter().map(|p| p.error).sum();
        Ok(QuadResult {
            value,
            error,
            subdivisions,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_are_exact_to_degree_21() {
        let q = Quadrature::default();
        for deg in 0..=21 {
            let r = q.integrate(|x| x.powi(deg), 0.0, 1.0).unwrap();
            assert!((r.value - 1.0 / (deg as f64 + 1.0)).abs() < 1e-14, "degree {deg}");
            if deg <= 13 {
                assert_eq!(r.subdivisions, 0, "degree {deg}");
            }
        }
    }

    #[test]
    fn reversed_limits_flip_sign() {
        let q = Quadrature::default();
        let r = q.integrate(|x| x * x, 2.0, -1.0).unwrap();
        assert!((r.value + 3.0).abs() < 1e-14);
    }

    #[test]
    fn gauss_rule_is_exact_to_degree_13() {
        // A single panel reports zero error for polynomials the 7-point rule integrates exactly.
        let p = kronrod(&|x: f64| x.powi(13) + x.powi(2), -1.0, 2.0);
        assert!(p.error < 1e-10);
        let p = kronrod(&|x: f64| x.powi(16), -1.0, 2.0);
        assert!(p.error > 1e-6);
    }

    #[test]
    fn handles_sqrt_endpoint_singularity() {
        let q = Quadrature::new(1e-12, 1e-12);
        let r = q.integrate(|x| 1.0 / x.sqrt(), 0.0, 1.0).unwrap();
        assert!((r.value - 2.0).abs() < 1e-10);
    }

    #[test]
    fn breakpoints_partition_kinks() {
        let q = Quadrature::default();
        let r = q
            .integrate_with_breaks(|x: f64| (x - 0.3).abs(), &[0.0, 0.3, 1.0])
            .unwrap();
        assert!((r.value - (0.045 + 0.245)).abs() < 1e-14);
    }

    #[test]
    fn divergent_integral_reports_diagnostics() {
        let q = Quadrature {
            max_subdivisions: 50,
            ..Quadrature::default()
        };
        match q.integrate(|x| 1.0 / x, 0.0, 1.0) {
            Err(Error::Quadrature { subdivisions, .. }) => assert!(subdivisions <= 50),
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn unsorted_breaks_are_rejected() {
        let q = Quadrature::default();
        assert!(q.integrate_with_breaks(|x| x, &[0.0, 1.0, 0.5]).is_err());
    }
}
