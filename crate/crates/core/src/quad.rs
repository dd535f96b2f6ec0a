//! Globally adaptive quadrature.
//!
//! [`integrate_2d`] is an h-adaptive cubature on rectangles using the
//! Genz–Malik degree-7 rule with its embedded degree-5 rule as error
//! estimate; the region with the largest error is bisected along the axis
//! with the largest fourth divided difference. [`integrate_1d`] is the
//! one-dimensional analogue built on the 15-point Gauss–Kronrod rule.
//! [`integrate_2d_log`] integrates a function given by its logarithm over the
//! unit square without overflow.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Value and error estimate returned by the integrators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub abs_error: f64,
    pub evals: usize,
}

impl Estimate {
    pub fn rel_error(&self) -> f64 {
        if self.value == 0.0 {
            self.abs_error
        } else {
            self.abs_error / self.value.abs()
        }
    }
}

/// Integral reported in log space: `log_value = ln ∫ exp(log f)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogEstimate {
    pub log_value: f64,
    pub rel_error: f64,
    pub evals: usize,
}

struct Region<const D: usize> {
    lo: [f64; D],
    hi: [f64; D],
    value: f64,
    error: f64,
    split_axis: usize,
}

impl<const D: usize> PartialEq for Region<D> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<const D: usize> Eq for Region<D> {}
impl<const D: usize> PartialOrd for Region<D> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<const D: usize> Ord for Region<D> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn adaptive<const D: usize, R>(
    rule: R,
    lo: [f64; D],
    hi: [f64; D],
    rel_tol: f64,
    abs_tol: f64,
    max_evals: usize,
) -> std::result::Result<Estimate, Estimate>
where
    R: FnMut(&[f64; D], &[f64; D]) -> (f64, f64, usize, usize),
{
    let mut rule = rule;
    let mut evals = 0;
    let mut eval_region = |lo: [f64; D], hi: [f64; D], evals: &mut usize| {
        let (value, error, axis, n) = rule(&lo, &hi);
        *evals += n;
        Region {
            lo,
            hi,
            value,
            error,
            split_axis: axis,
        }
    };

    let first = eval_region(lo, hi, &mut evals);
    let mut total = first.value;
    let mut total_err = first.error;
    let mut heap = BinaryHeap::new();
    heap.push(first);

    loop {
        let tol = abs_tol.max(rel_tol * total.abs());
        if total_err <= tol || !total_err.is_finite() {
            break;
        }
        if evals >= max_evals {
            return Err(Estimate {
                value: total,
                abs_error: total_err,
                evals,
            });
        }
        let worst = heap.pop().expect("heap never empties");
        let axis = worst.split_axis;
        let mid = 0.5 * (worst.lo[axis] + worst.hi[axis]);
        let mut hi_a = worst.hi;
        hi_a[axis] = mid;
        let mut lo_b = worst.lo;
        lo_b[axis] = mid;
        let a = eval_region(worst.lo, hi_a, &mut evals);
        let b = eval_region(lo_b, worst.hi, &mut evals);
        total += a.value + b.value - worst.value;
        total_err += a.error + b.error - worst.error;
        heap.push(a);
        heap.push(b);
    }

    // Re-sum to shed the drift of the running updates.
    let value = heap.iter().map(|r| r.value).sum();
    let abs_error = heap.iter().map(|r| r.error).sum();
    Ok(Estimate {
        value,
        abs_error,
        evals,
    })
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const GAUSS7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Adaptive Gauss–Kronrod (7/15) quadrature of `f` over `[a, b]`.
pub fn integrate_1d<F>(
    mut f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
    max_evals: usize,
) -> Result<Estimate>
where
    F: FnMut(f64) -> f64,
{
    let rule = |lo: &[f64; 1], hi: &[f64; 1]| {
        let c = 0.5 * (lo[0] + hi[0]);
        let h = 0.5 * (hi[0] - lo[0]);
        let fc = f(c);
        let mut kronrod = GK_WEIGHTS[7] * fc;
        let mut gauss = GAUSS7_WEIGHTS[3] * fc;
        for j in 0..7 {
            let x = h * GK_NODES[j];
            let s = f(c - x) + f(c + x);
            kronrod += GK_WEIGHTS[j] * s;
            if j % 2 == 1 {
                gauss += GAUSS7_WEIGHTS[j / 2] * s;
            }
        }
        (kronrod * h, ((kronrod - gauss) * h).abs(), 0, 15)
    };
    adaptive(rule, [a], [b], rel_tol, abs_tol, max_evals).map_err(|e| Error::QuadratureBudget {
        log_estimate: e.value.ln(),
        rel_error: e.rel_error(),
        evals: e.evals,
    })
}

// Genz–Malik generators and weights for dimension 2.
const GM_L2: f64 = 0.358_568_582_800_318_1; // sqrt(9/70)
const GM_L4: f64 = 0.948_683_298_050_513_8; // sqrt(9/10)
const GM_L5: f64 = 0.688_247_201_611_685_3; // sqrt(9/19)
const GM_W7: [f64; 5] = [
    -3816.0 / 19683.0,
    980.0 / 6561.0,
    1020.0 / 19683.0,
    200.0 / 19683.0,
    6859.0 / 19683.0 / 4.0,
];
const GM_W5: [f64; 4] = [-971.0 / 729.0, 245.0 / 486.0, 65.0 / 1458.0, 25.0 / 729.0];

fn genz_malik_2d<F>(f: &mut F, lo: &[f64; 2], hi: &[f64; 2]) -> (f64, f64, usize, usize)
where
    F: FnMut(f64, f64) -> f64,
{
    let c = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
    let h = [0.5 * (hi[0] - lo[0]), 0.5 * (hi[1] - lo[1])];
    let vol = 4.0 * h[0] * h[1];
    let at = |f: &mut F, a: f64, b: f64| f(c[0] + a * h[0], c[1] + b * h[1]);

    let f0 = at(f, 0.0, 0.0);
    let mut s2 = 0.0;
    let mut s3 = 0.0;
    let mut fourth = [0.0; 2];
    for axis in 0..2 {
        let (p2, m2, p3, m3) = if axis == 0 {
            (
                at(f, GM_L2, 0.0),
                at(f, -GM_L2, 0.0),
                at(f, GM_L4, 0.0),
                at(f, -GM_L4, 0.0),
            )
        } else {
            (
                at(f, 0.0, GM_L2),
                at(f, 0.0, -GM_L2),
                at(f, 0.0, GM_L4),
                at(f, 0.0, -GM_L4),
            )
        };
        s2 += p2 + m2;
        s3 += p3 + m3;
        let ratio = (GM_L2 * GM_L2) / (GM_L4 * GM_L4);
        fourth[axis] = (p2 + m2 - 2.0 * f0 - ratio * (p3 + m3 - 2.0 * f0)).abs();
    }
    let s4 =
        at(f, GM_L4, GM_L4) + at(f, GM_L4, -GM_L4) + at(f, -GM_L4, GM_L4) + at(f, -GM_L4, -GM_L4);
    let s5 =
        at(f, GM_L5, GM_L5) + at(f, GM_L5, -GM_L5) + at(f, -GM_L5, GM_L5) + at(f, -GM_L5, -GM_L5);

    let i7 = vol * (GM_W7[0] * f0 + GM_W7[1] * s2 + GM_W7[2] * s3 + GM_W7[3] * s4 + GM_W7[4] * s5);
    let i5 = vol * (GM_W5[0] * f0 + GM_W5[1] * s2 + GM_W5[2] * s3 + GM_W5[3] * s4);
    // Ties go to the wider side so square regions alternate deterministically.
    let axis = if fourth[0] > fourth[1] || (fourth[0] == fourth[1] && h[0] >= h[1]) {
        0
    } else {
        1
    };
    (i7, (i7 - i5).abs(), axis, 17)
}

/// Adaptive cubature of `f` over the rectangle `[lo, hi]`.
pub fn integrate_2d<F>(
    mut f: F,
    lo: [f64; 2],
    hi: [f64; 2],
    rel_tol: f64,
    abs_tol: f64,
    max_evals: usize,
) -> Result<Estimate>
where
    F: FnMut(f64, f64) -> f64,
{
    adaptive(
        |a, b| genz_malik_2d(&mut f, a, b),
        lo,
        hi,
        rel_tol,
        abs_tol,
        max_evals,
    )
    .map_err(|e| Error::QuadratureBudget {
        log_estimate: e.value.ln(),
        rel_error: e.rel_error(),
        evals: e.evals,
    })
}

/// `ln ∫∫_{[0,1]²} exp(log_f(u, v)) du dv` to relative tolerance `rel_tol`.
///
/// The integrand is evaluated as `exp(log_f - shift)`; the shift starts at the
/// maximum over a 9×9 interior grid and is raised (restarting the cubature)
/// if a later evaluation exceeds it by more than 300 nats.
pub fn integrate_2d_log<F>(mut log_f: F, rel_tol: f64, max_evals: usize) -> Result<LogEstimate>
where
    F: FnMut(f64, f64) -> f64,
{
    let mut shift = f64::NEG_INFINITY;
    for i in 0..9 {
        for j in 0..9 {
            let v = log_f((i as f64 + 0.5) / 9.0, (j as f64 + 0.5) / 9.0);
            if v > shift {
                shift = v;
            }
        }
    }
    if !shift.is_finite() {
        shift = 0.0;
    }
    let mut spent = 81;
    for _ in 0..8 {
        let mut running_max = f64::NEG_INFINITY;
        let result = integrate_2d(
            |u, v| {
                let l = log_f(u, v);
                if l > running_max {
                    running_max = l;
                }
                let e = (l - shift).exp();
                if e.is_finite() {
                    e
                } else {
                    0.0
                }
            },
            [0.0, 0.0],
            [1.0, 1.0],
            rel_tol,
            0.0,
            max_evals.saturating_sub(spent),
        );
        if running_max > shift + 300.0 {
            shift = running_max;
            spent += match &result {
                Ok(e) => e.evals,
                Err(Error::QuadratureBudget { evals, .. }) => *evals,
                Err(_) => 0,
            };
            continue;
        }
        return match result {
            Ok(e) => Ok(LogEstimate {
                log_value: e.value.ln() + shift,
                rel_error: e.rel_error(),
                evals: e.evals + spent,
            }),
            Err(Error::QuadratureBudget {
                log_estimate,
                rel_error,
                evals,
            }) => Err(Error::QuadratureBudget {
                log_estimate: log_estimate + shift,
                rel_error,
                evals: evals + spent,
            }),
            Err(other) => Err(other),
        };
    }
    Err(Error::Domain("integrand scale did not stabilize".into()))
}
