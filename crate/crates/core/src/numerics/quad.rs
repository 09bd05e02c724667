//! Globally adaptive Gauss–Kronrod (7/15) quadrature.
//!
//! Integration domains are given as an ordered list of breakpoints, which
//! may start at `-∞` and end at `+∞`. Kinks and jumps of the integrand
//! should be passed as interior breakpoints so that no panel straddles them.
//! Semi-infinite panels are mapped onto `(0, 1]` with `x = a ± (1 - t) / t`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Tolerances for [`Quadrature`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_panels: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 0.0,
            max_panels: 4000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
enum Map {
    Finite,
    // x = origin + (1 - t) / t, t ∈ (0, 1]
    Upper(f64),
    // x = origin - (1 - t) / t
    Lower(f64),
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    lo: f64,
    hi: f64,
    map: Map,
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
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn eval_mapped(f: &impl Fn(f64) -> f64, map: Map, t: f64) -> f64 {
    let y = match map {
        Map::Finite => f(t),
        Map::Upper(a) => {
            if t <= 0.0 {
                0.0
            } else {
                f(a + (1.0 - t) / t) / (t * t)
            }
        }
        Map::Lower(b) => {
            if t <= 0.0 {
                0.0
            } else {
                f(b - (1.0 - t) / t) / (t * t)
            }
        }
    };
    if y.is_finite() {
        y
    } else {
        0.0
    }
}

fn gk15(f: &impl Fn(f64) -> f64, map: Map, lo: f64, hi: f64) -> (f64, f64) {
    let c = 0.5 * (lo + hi);
    let h = 0.5 * (hi - lo);
    let fc = eval_mapped(f, map, c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = eval_mapped(f, map, c - dx) + eval_mapped(f, map, c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    let value = kron * h;
    let error = ((kron - gauss) * h).abs();
    (value, error)
}

impl Quadrature {
    pub fn with_abs_tol(abs_tol: f64) -> Self {
        Self {
            abs_tol,
            ..Self::default()
        }
    }

    /// Integrate over `[a, b]` (either end may be infinite).
    pub fn integrate(&self, f: impl Fn(f64) -> f64, a: f64, b: f64) -> QuadResult {
        self.integrate_breaks(f, &[a, b])
    }

    /// Integrate over the whole real line with interior breakpoints.
    pub fn integrate_real_line(&self, f: impl Fn(f64) -> f64, breaks: &[f64]) -> QuadResult {
        let mut pts = Vec::with_capacity(breaks.len() + 2);
        pts.push(f64::NEG_INFINITY);
        pts.extend(breaks.iter().copied().filter(|x| x.is_finite()));
        pts.push(f64::INFINITY);
        self.integrate_breaks(f, &pts)
    }

    /// Integrate over `[pts[0], pts[last]]`, splitting at every listed point.
    /// Points are sorted and deduplicated; an orientation flip is applied
    /// when the first point exceeds the last.
    pub fn integrate_breaks(&self, f: impl Fn(f64) -> f64, pts: &[f64]) -> QuadResult {
        if pts.len() < 2 {
            return QuadResult {
                value: 0.0,
                error: 0.0,
                evaluations: 0,
                converged: true,
            };
        }
        let (a, b) = (pts[0], pts[pts.len() - 1]);
        let sign = if a > b { -1.0 } else { 1.0 };
        let (lo, hi) = if a > b { (b, a) } else { (a, b) };
        let mut knots: Vec<f64> = pts
            .iter()
            .copied()
            .filter(|x| !x.is_nan() && *x >= lo && *x <= hi)
            .collect();
        knots.push(lo);
        knots.push(hi);
        knots.sort_by(f64::total_cmp);
        knots.dedup();

        let mut heap = BinaryHeap::new();
        let mut evals = 0;
        for w in knots.windows(2) {
            let (l, r) = (w[0], w[1]);
            let panel = match (l.is_finite(), r.is_finite()) {
                (true, true) => Some((l, r, Map::Finite)),
                (true, false) => Some((0.0, 1.0, Map::Upper(l))),
                (false, true) => Some((0.0, 1.0, Map::Lower(r))),
                (false, false) => None,
            };
            match panel {
                Some((pl, ph, map)) => {
                    let (value, error) = gk15(&f, map, pl, ph);
                    evals += 15;
                    heap.push(Panel {
                        lo: pl,
                        hi: ph,
                        map,
                        value,
                        error,
                    });
                }
                None => {
                    // (-∞, ∞): split at zero.
                    for map in [Map::Lower(0.0), Map::Upper(0.0)] {
                        let (value, error) = gk15(&f, map, 0.0, 1.0);
                        evals += 15;
                        heap.push(Panel {
                            lo: 0.0,
                            hi: 1.0,
                            map,
                            value,
                            error,
                        });
                    }
                }
            }
        }

        let mut converged = false;
        loop {
            let (total, err): (f64, f64) = heap
                .iter()
                .fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error));
            let target = self.abs_tol.max(self.rel_tol * total.abs());
            if err <= target {
                converged = true;
            }
            if converged || heap.len() >= self.max_panels {
                return QuadResult {
                    value: sign * total,
                    error: err,
                    evaluations: evals,
                    converged,
                };
            }
            let worst = heap.pop().expect("non-empty panel set");
            let mid = 0.5 * (worst.lo + worst.hi);
            if !(mid > worst.lo && mid < worst.hi) || (worst.hi - worst.lo) < 1e-15 * mid.abs().max(1e-300) {
                // Cannot refine further; freeze this panel's error.
                heap.push(Panel {
                    error: 0.0,
                    ..worst
                });
                continue;
            }
            for (l, r) in [(worst.lo, mid), (mid, worst.hi)] {
                let (value, error) = gk15(&f, worst.map, l, r);
                evals += 15;
                heap.push(Panel {
                    lo: l,
                    hi: r,
                    map: worst.map,
                    value,
                    error,
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomial_exact() {
        let q = Quadrature::default();
        let r = q.integrate(|x| x * x, 0.0, 1.0);
        assert!((r.value - 1.0 / 3.0).abs() < 1e-14);
        assert!(r.converged);
    }

    #[test]
    fn gaussian_over_real_line() {
        let q = Quadrature::default();
        let r = q.integrate_real_line(|x| (-x * x).exp(), &[0.0]);
        assert!((r.value - PI.sqrt()).abs() < 1e-10, "{r:?}");
    }

    #[test]
    fn cauchy_tails() {
        let q = Quadrature::default();
        let r = q.integrate_real_line(|x| 1.0 / (PI * (1.0 + x * x)), &[]);
        assert!((r.value - 1.0).abs() < 1e-10, "{r:?}");
    }

    #[test]
    fn kink_with_breakpoint() {
        let q = Quadrature::with_abs_tol(1e-12);
        let r = q.integrate_breaks(|x: f64| x.abs(), &[-1.0, 0.0, 2.0]);
        assert!((r.value - 2.5).abs() < 1e-12);
    }

    #[test]
    fn reversed_orientation() {
        let q = Quadrature::default();
        let r = q.integrate(|x| x, 1.0, 0.0);
        assert!((r.value + 0.5).abs() < 1e-14);
    }

    #[test]
    fn semi_infinite() {
        let q = Quadrature::default();
        let r = q.integrate(|x| (-x).exp(), 1.0, f64::INFINITY);
        assert!((r.value - (-1.0f64).exp()).abs() < 1e-10);
    }
}
