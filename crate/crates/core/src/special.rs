//! Special functions, the handful of distributions the pipeline needs, and
//! the seeded random-number streams.
//!
//! # Random streams
//!
//! Every stochastic component draws from an [`RngStream`], a ChaCha8 generator
//! keyed by `(seed, index)`: the seed is expanded with `seed_from_u64` and the
//! index selects the ChaCha stream. Sub-streams are derived with
//! [`RngStream::child`], which mixes the parent's `(seed, index)` through
//! SplitMix64 into a fresh seed. The same `(seed, index)` therefore yields the
//! same draws on every platform, and no two components share a stream.

use std::f64::consts::PI;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

fn require_positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "{name} requires a positive argument, got {x}"
        )))
    }
}

/// Natural log of the gamma function for `x > 0`.
///
/// Arguments below 10 are shifted up with `Γ(x+1) = xΓ(x)`, then the Stirling
/// series is used.
pub fn log_gamma(x: f64) -> Result<f64> {
    require_positive("log_gamma", x)?;
    Ok(ln_gamma_unchecked(x))
}

pub(crate) fn ln_gamma_unchecked(x: f64) -> f64 {
    let mut z = x;
    let mut prod = 1.0;
    let mut shift = 0.0;
    while z < 15.0 {
        prod *= z;
        z += 1.0;
        // keep the running product in range for tiny x
        if !(1e-280..=1e280).contains(&prod) {
            shift += prod.ln();
            prod = 1.0;
        }
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    let series = inv
        * (1.0 / 12.0
            + inv2
                * (-1.0 / 360.0
                    + inv2
                        * (1.0 / 1260.0
                            + inv2
                                * (-1.0 / 1680.0
                                    + inv2 * (1.0 / 1188.0 - inv2 * (691.0 / 360360.0))))));
    (z - 0.5) * z.ln() - z + LN_SQRT_2PI + series - prod.ln() - shift
}

/// Digamma function ψ(x) for `x > 0`.
pub fn digamma(x: f64) -> Result<f64> {
    require_positive("digamma", x)?;
    let mut z = x;
    let mut acc = 0.0;
    while z < 10.0 {
        acc -= 1.0 / z;
        z += 1.0;
    }
    let inv2 = 1.0 / (z * z);
    let tail = inv2
        * (1.0 / 12.0
            - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 / 132.0))));
    Ok(acc + z.ln() - 0.5 / z - tail)
}

/// Trigamma function ψ'(x) for `x > 0`.
pub fn trigamma(x: f64) -> Result<f64> {
    require_positive("trigamma", x)?;
    let mut z = x;
    let mut acc = 0.0;
    while z < 10.0 {
        acc += 1.0 / (z * z);
        z += 1.0;
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    let tail = inv
        + inv2 / 2.0
        + inv
            * inv2
            * (1.0 / 6.0
                - inv2
                    * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0 - inv2 * 5.0 / 66.0))));
    Ok(acc + tail)
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn incomplete_beta(x: f64, a: f64, b: f64) -> Result<f64> {
    require_positive("incomplete_beta a", a)?;
    require_positive("incomplete_beta b", b)?;
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!(
            "incomplete_beta requires x in [0,1], got {x}"
        )));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(x);
    }
    let ln_front = a * x.ln() + b * (1.0 - x).ln() + ln_gamma_unchecked(a + b)
        - ln_gamma_unchecked(a)
        - ln_gamma_unchecked(b);
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok(ln_front.exp() * beta_continued_fraction(x, a, b) / a)
    } else {
        Ok(1.0 - ln_front.exp() * beta_continued_fraction(1.0 - x, b, a) / b)
    }
}

// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=1000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

/// Upper tail `P(T > t)` of Student's t with `df` (possibly fractional) degrees of freedom.
pub fn student_t_sf(t: f64, df: f64) -> Result<f64> {
    require_positive("student_t_sf df", df)?;
    if t.is_nan() {
        return Err(Error::Domain("student_t_sf got NaN".into()));
    }
    if t == f64::INFINITY {
        return Ok(0.0);
    }
    if t == f64::NEG_INFINITY {
        return Ok(1.0);
    }
    let x = df / (df + t * t);
    let half_tail = 0.5 * incomplete_beta(x, 0.5 * df, 0.5)?;
    Ok(if t >= 0.0 { half_tail } else { 1.0 - half_tail })
}

/// Log density of Student's t with location, scale and `df`.
pub fn log_pdf_student_t(x: f64, df: f64, loc: f64, scale: f64) -> f64 {
    let z = (x - loc) / scale;
    ln_gamma_unchecked(0.5 * (df + 1.0))
        - ln_gamma_unchecked(0.5 * df)
        - 0.5 * (df * PI).ln()
        - scale.ln()
        - 0.5 * (df + 1.0) * (z * z / df).ln_1p()
}

pub fn log_pdf_normal(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    -LN_SQRT_2PI - 0.5 * variance.ln() - 0.5 * d * d / variance
}

/// Log density of the inverse-gamma law, `∝ x^{-α-1} exp(-β/x)`.
pub fn log_pdf_inverse_gamma(x: f64, alpha: f64, beta: f64) -> Result<f64> {
    require_positive("inverse gamma alpha", alpha)?;
    require_positive("inverse gamma beta", beta)?;
    require_positive("inverse gamma x", x)?;
    Ok(ln_pdf_ig_unchecked(x, alpha, beta))
}

#[inline]
pub(crate) fn ln_pdf_ig_unchecked(x: f64, alpha: f64, beta: f64) -> f64 {
    alpha * beta.ln() - ln_gamma_unchecked(alpha) - (alpha + 1.0) * x.ln() - beta / x
}

/// Deterministic random stream keyed by `(seed, index)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    index: u64,
    rng: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        Self { seed, index, rng }
    }

    /// Independent sub-stream `k` of this stream, unaffected by how many
    /// draws have been taken from `self`.
    pub fn child(&self, k: u64) -> Self {
        let derived =
            splitmix64(self.seed ^ splitmix64(self.index.wrapping_add(0x5851_F42D_4C95_7F2D)));
        Self::new(derived, k)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}

pub fn sample_normal(rng: &mut RngStream, mean: f64, sd: f64) -> Result<f64> {
    require_positive("normal sd", sd)?;
    Ok(mean + sd * rng.standard_normal())
}

/// Gamma(shape, 1) draw by Marsaglia and Tsang's squeeze method.
pub fn sample_gamma(rng: &mut RngStream, shape: f64) -> Result<f64> {
    require_positive("gamma shape", shape)?;
    if shape < 1.0 {
        let g = sample_gamma(rng, shape + 1.0)?;
        let u: f64 = 1.0 - rng.uniform();
        return Ok(g * u.powf(1.0 / shape));
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x = rng.standard_normal();
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u = 1.0 - rng.uniform();
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return Ok(d * v);
        }
    }
}

/// Inverse-gamma draw as `beta / Gamma(alpha, 1)`.
pub fn sample_inverse_gamma(rng: &mut RngStream, alpha: f64, beta: f64) -> Result<f64> {
    require_positive("inverse gamma beta", beta)?;
    Ok(beta / sample_gamma(rng, alpha)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

    #[test]
    fn log_gamma_known_values() {
        assert!(log_gamma(1.0).unwrap().abs() < 1e-13);
        assert!(log_gamma(2.0).unwrap().abs() < 1e-13);
        assert!((log_gamma(0.5).unwrap() - 0.572_364_942_924_700_1).abs() < 1e-12);
        let fact9: f64 = (1..=9).map(|k| k as f64).product();
        assert!((log_gamma(10.0).unwrap() - fact9.ln()).abs() < 1e-12);
        assert!(log_gamma(0.0).is_err());
        assert!(log_gamma(-1.0).is_err());
    }

    #[test]
    fn log_gamma_recurrence() {
        let mut x = 0.5;
        while x <= 100.0 {
            let r = log_gamma(x + 1.0).unwrap() - log_gamma(x).unwrap() - x.ln();
            assert!(r.abs() < 1e-10, "x={x} residual {r}");
            x += 0.5;
        }
    }

    #[test]
    fn log_gamma_large_relative_accuracy() {
        // Γ(n) = (n-1)! summed in log space.
        let n = 1000;
        let direct: f64 = (1..n).map(|k| (k as f64).ln()).sum();
        let v = log_gamma(n as f64).unwrap();
        assert!(((v - direct) / direct).abs() < 1e-13);
    }

    #[test]
    fn digamma_values() {
        assert!((digamma(1.0).unwrap() + EULER_GAMMA).abs() < 1e-12);
        assert!((digamma(2.0).unwrap() - (1.0 - EULER_GAMMA)).abs() < 1e-12);
        let harmonic: f64 = (1..=9).map(|k| 1.0 / k as f64).sum();
        assert!((digamma(10.0).unwrap() - (harmonic - EULER_GAMMA)).abs() < 1e-12);
        // ψ(x+1) = ψ(x) + 1/x down to small arguments
        for &x in &[1e-3, 0.01, 0.3, 2.7, 55.0] {
            let r = digamma(x + 1.0).unwrap() - digamma(x).unwrap() - 1.0 / x;
            assert!(r.abs() < 1e-10, "x={x}");
        }
        assert!(digamma(0.0).is_err());
    }

    #[test]
    fn trigamma_matches_difference_of_digamma() {
        for &x in &[0.2, 1.0, 3.3, 12.0, 300.0] {
            let h = 1e-5 * x;
            let fd = (digamma(x + h).unwrap() - digamma(x - h).unwrap()) / (2.0 * h);
            let t = trigamma(x).unwrap();
            assert!(((fd - t) / t).abs() < 1e-6, "x={x}: {fd} vs {t}");
        }
        assert!((trigamma(1.0).unwrap() - PI * PI / 6.0).abs() < 1e-12);
    }

    #[test]
    fn t_tail_values() {
        for df in [0.7, 1.0, 5.88, 30.0] {
            assert!((student_t_sf(0.0, df).unwrap() - 0.5).abs() < 1e-15);
        }
        assert_eq!(student_t_sf(f64::INFINITY, 3.0).unwrap(), 0.0);
        assert!(student_t_sf(1e12, 3.0).unwrap() < 1e-30);
        // df = 1 is Cauchy: P(T > 1) = 1/4
        assert!((student_t_sf(1.0, 1.0).unwrap() - 0.25).abs() < 1e-14);
        // df = 2 has closed form 1/2 - t / (2 sqrt(t^2 + 2))
        let t = 1.7;
        let exact = 0.5 - t / (2.0 * (t * t + 2.0f64).sqrt());
        assert!((student_t_sf(t, 2.0).unwrap() - exact).abs() < 1e-14);
        assert!((student_t_sf(-t, 2.0).unwrap() - (1.0 - exact)).abs() < 1e-14);
        assert!(student_t_sf(1.0, 0.0).is_err());
    }

    #[test]
    fn t_tail_against_simpson_integration() {
        // Density normalizer for df=10 from Γ(5.5) = 4.5·3.5·2.5·1.5·0.5·√π and Γ(5) = 24.
        let df = 10.0;
        let gamma_55 = 4.5 * 3.5 * 2.5 * 1.5 * 0.5 * PI.sqrt();
        let norm = gamma_55 / ((df * PI).sqrt() * 24.0);
        let pdf = |x: f64| norm * (1.0 + x * x / df).powf(-5.5);
        // substitute x = 2 + s/(1-s), s in [0,1)
        let m = 200_000;
        let h = 1.0 / m as f64;
        let f = |s: f64| {
            if s >= 1.0 {
                0.0
            } else {
                let x = 2.0 + s / (1.0 - s);
                pdf(x) / ((1.0 - s) * (1.0 - s))
            }
        };
        let mut acc = f(0.0) + f(1.0);
        for i in 1..m {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(i as f64 * h);
        }
        let oracle = acc * h / 3.0;
        let v = student_t_sf(2.0, df).unwrap();
        assert!((v - oracle).abs() < 1e-10, "{v} vs {oracle}");
        assert!((v - 0.03669).abs() < 5e-6);
    }

    #[test]
    fn inverse_gamma_density() {
        let v = log_pdf_inverse_gamma(1.0, 1.0, 1.0).unwrap();
        assert!((v + 1.0).abs() < 1e-14);
        // mode at beta/(alpha+1): derivative changes sign
        let (a, b) = (3.0, 2.0);
        let mode = b / (a + 1.0);
        let h = 1e-6;
        let left = log_pdf_inverse_gamma(mode - h, a, b).unwrap();
        let at = log_pdf_inverse_gamma(mode, a, b).unwrap();
        let right = log_pdf_inverse_gamma(mode + h, a, b).unwrap();
        assert!(at > left && at > right);
        assert!(log_pdf_inverse_gamma(1.0, 0.0, 1.0).is_err());
        assert!(log_pdf_inverse_gamma(-1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn inverse_gamma_sample_mean() {
        let mut rng = RngStream::new(7, 0);
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| sample_inverse_gamma(&mut rng, 3.0, 2.0).unwrap())
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        // Var of IG(3,2) is β²/((α-1)²(α-2)) = 1
        let se = (1.0 / n as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn streams_are_reproducible() {
        let mut a = RngStream::new(42, 3);
        let mut b = RngStream::new(42, 3);
        for _ in 0..10_000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        let c1 = a.child(1);
        let c2 = RngStream::new(42, 3).child(1);
        assert_eq!(c1.seed(), c2.seed());
        assert_ne!(
            RngStream::new(42, 3).child(1).seed(),
            RngStream::new(42, 4).child(1).seed()
        );
    }

    #[test]
    fn streams_are_uncorrelated() {
        let mut a = RngStream::new(99, 0);
        let mut b = RngStream::new(99, 1);
        let n = 10_000;
        let xs: Vec<f64> = (0..n).map(|_| a.standard_normal()).collect();
        let ys: Vec<f64> = (0..n).map(|_| b.standard_normal()).collect();
        let mx = xs.iter().sum::<f64>() / n as f64;
        let my = ys.iter().sum::<f64>() / n as f64;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for (x, y) in xs.iter().zip(&ys) {
            sxy += (x - mx) * (y - my);
            sxx += (x - mx) * (x - mx);
            syy += (y - my) * (y - my);
        }
        let r = sxy / (sxx * syy).sqrt();
        assert!(r.abs() < 0.05, "r = {r}");
    }

    #[test]
    fn sampler_domain_errors() {
        let mut rng = RngStream::new(1, 0);
        assert!(sample_normal(&mut rng, 0.0, 0.0).is_err());
        assert!(sample_inverse_gamma(&mut rng, -1.0, 1.0).is_err());
        assert!(sample_inverse_gamma(&mut rng, 1.0, 0.0).is_err());
        assert!(sample_gamma(&mut rng, 0.3).unwrap() > 0.0);
    }
}
