//! Scalar math helpers shared across the crate.
//!
//! Transcendentals route through `std` intrinsics when available and `libm`
//! otherwise, so the crate builds under `no_std`. `erf`/`erfc` always come
//! from `libm` (`std` does not provide them).

#[cfg(feature = "std")]
#[inline]
pub fn sqrt(x: f64) -> f64 {
    x.sqrt()
}
#[cfg(not(feature = "std"))]
#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[cfg(feature = "std")]
#[inline]
pub fn ln(x: f64) -> f64 {
    x.ln()
}
#[cfg(not(feature = "std"))]
#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[cfg(feature = "std")]
#[inline]
pub fn exp(x: f64) -> f64 {
    x.exp()
}
#[cfg(not(feature = "std"))]
#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[cfg(feature = "std")]
#[inline]
pub fn floor(x: f64) -> f64 {
    x.floor()
}
#[cfg(not(feature = "std"))]
#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[cfg(feature = "std")]
#[inline]
pub fn ceil(x: f64) -> f64 {
    x.ceil()
}
#[cfg(not(feature = "std"))]
#[inline]
pub fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}

#[cfg(feature = "std")]
#[inline]
pub fn round(x: f64) -> f64 {
    x.round()
}
#[cfg(not(feature = "std"))]
#[inline]
pub fn round(x: f64) -> f64 {
    libm::round(x)
}

#[inline]
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

const FRAC_1_SQRT_2: f64 = core::f64::consts::FRAC_1_SQRT_2;
const SQRT_2PI: f64 = 2.5066282746310002;

/// Standard normal CDF, evaluated through `erfc` for tail accuracy.
#[inline]
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

/// Gaussian density with mean `mu` and variance `var` (> 0).
#[inline]
pub fn gaussian_pdf(x: f64, mu: f64, var: f64) -> f64 {
    let sd = sqrt(var);
    let z = (x - mu) / sd;
    exp(-0.5 * z * z) / (sd * SQRT_2PI)
}

/// Gaussian CDF with mean `mu` and variance `var` (> 0).
#[inline]
pub fn gaussian_cdf(x: f64, mu: f64, var: f64) -> f64 {
    std_normal_cdf((x - mu) / sqrt(var))
}

/// Compensated (Kahan) accumulator.
///
/// Merging two accumulators feeds the other side's sum and carry through the
/// same compensation, so any sharding of a data set agrees with the unsharded
/// sum to ~1e-12 relative error.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn merge(&mut self, other: &Kahan) {
        self.add(other.sum);
        self.add(-other.carry);
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum - self.carry
    }
}

/// Draws an index from an unnormalised weight vector.
///
/// Weights must be nonnegative with a positive total; the caller guarantees
/// this (rows of stochastic matrices).
pub fn sample_categorical<R: rand::Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        u -= w;
        if u <= 0.0 {
            return i;
        }
    }
    weights.len() - 1
}

/// Standard normal draw (Marsaglia polar method, `no_std`-friendly).
pub fn sample_std_normal<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u = 2.0 * rng.random::<f64>() - 1.0;
        let v = 2.0 * rng.random::<f64>() - 1.0;
        let s = u * u + v * v;
        if s > 0.0 && s < 1.0 {
            return u * sqrt(-2.0 * ln(s) / s);
        }
    }
}
