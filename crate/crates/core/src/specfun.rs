//! Bessel and Hankel functions of orders 0 and 1, and the 2D Helmholtz
//! Green's function.
//!
//! Three regimes are used for `H⁽¹⁾ₙ(z)`, `Im z ≥ 0`:
//!
//! * `|z| < SERIES_RADIUS`: ascending power series for `J` and `Y`;
//! * `SERIES_RADIUS ≤ |z| ≤ ASYMPTOTIC_RADIUS`: Miller backward recurrence for
//!   `Jₙ` normalized by the Jacobi–Anger sum for `e^{-iz}`, then the Neumann
//!   series for `Y₀` and `Y₁`;
//! * `|z| > ASYMPTOTIC_RADIUS`: Hankel asymptotic expansion.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use crate::error::{Error, Result};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Below this modulus the ascending series are used.
pub const SERIES_RADIUS: f64 = 2.0;

/// Above this modulus the Hankel asymptotic expansion is used.
pub const ASYMPTOTIC_RADIUS: f64 = 20.0;

/// Between the two radii, `H⁽¹⁾` comes from `K₀, K₁` when `Im z` exceeds
/// this, since `J + iY` cancels like `e^{-2 Im z}`.
pub const IMAG_SWITCH: f64 = 2.0;

/// Largest accepted argument modulus.
pub const MAX_ARGUMENT: f64 = 1.0e10;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Complex wavenumber with positive real part and non-negative imaginary part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wavenumber(C64);

impl Wavenumber {
    pub fn new(value: C64) -> Result<Self> {
        if !(value.re > 0.0) || value.im < 0.0 || !value.is_finite() {
            return Err(Error::Parameter(format!(
                "wavenumber must satisfy Re k > 0 and Im k >= 0, got {value}"
            )));
        }
        Ok(Self(value))
    }

    pub fn real(k: f64) -> Result<Self> {
        Self::new(C64::new(k, 0.0))
    }

    /// `k + iε`, the complexified wavenumber used by regularizing operators.
    pub fn shifted(self, eps: f64) -> Result<Self> {
        Self::new(self.0 + C64::new(0.0, eps))
    }

    pub fn value(self) -> C64 {
        self.0
    }

    pub fn is_real(self) -> bool {
        self.0.im == 0.0
    }
}

/// `J₀, J₁, H⁽¹⁾₀, H⁽¹⁾₁` at one argument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bessel01 {
    pub j0: C64,
    pub j1: C64,
    pub h0: C64,
    pub h1: C64,
}

impl Bessel01 {
    pub fn y0(&self) -> C64 {
        (self.h0 - self.j0) * (-I)
    }

    pub fn y1(&self) -> C64 {
        (self.h1 - self.j1) * (-I)
    }
}

fn check_argument(z: C64) -> Result<()> {
    if z.re == 0.0 && z.im == 0.0 {
        return Err(Error::SingularArgument("Hankel function at z = 0".into()));
    }
    if z.im < 0.0 {
        return Err(Error::Domain(format!("Im z must be >= 0, got {z}")));
    }
    if !z.is_finite() || z.norm() > MAX_ARGUMENT {
        return Err(Error::Domain(format!("|z| exceeds {MAX_ARGUMENT:e}: {z}")));
    }
    Ok(())
}

/// Bessel functions of the first and second kind, orders 0 or 1, at `x > 0`.
pub fn bessel_jy(order: u32, x: f64) -> Result<(f64, f64)> {
    if order > 1 {
        return Err(Error::Parameter(format!("order {order} not supported")));
    }
    if !(x > 0.0) {
        return Err(Error::Domain(format!("bessel_jy needs x > 0, got {x}")));
    }
    check_argument(C64::new(x, 0.0))?;
    let b = bessel01_unchecked(C64::new(x, 0.0));
    // On the real axis J = Re H and Y = Im H exactly.
    Ok(match order {
        0 => (b.h0.re, b.h0.im),
        _ => (b.h1.re, b.h1.im),
    })
}

/// Hankel function of the first kind, order 0 or 1, for `Im z ≥ 0`.
pub fn hankel1(order: u32, z: C64) -> Result<C64> {
    if order > 1 {
        return Err(Error::Parameter(format!("order {order} not supported")));
    }
    check_argument(z)?;
    let (h0, h1) = hankel01_unchecked(z);
    Ok(if order == 0 { h0 } else { h1 })
}

/// `J₀, J₁, H⁽¹⁾₀, H⁽¹⁾₁` with argument validation.
pub fn bessel01(z: C64) -> Result<Bessel01> {
    check_argument(z)?;
    Ok(bessel01_unchecked(z))
}

/// Free-space Green's function `G_k(r) = (i/4) H⁽¹⁾₀(k r)`.
pub fn greens_kernel(k: Wavenumber, r: f64) -> Result<C64> {
    if !(r > 0.0) {
        return Err(Error::SingularArgument(format!(
            "Green's function needs r > 0, got {r}"
        )));
    }
    Ok(0.25 * I * hankel1(0, k.value() * r)?)
}

/// `(H⁽¹⁾₀(z), H⁽¹⁾₁(z))` without argument checks. Callers guarantee
/// `z ≠ 0` and `Im z ≥ 0`.
#[inline]
pub fn hankel01_unchecked(z: C64) -> (C64, C64) {
    let r = z.norm();
    if r > ASYMPTOTIC_RADIUS {
        (
            hankel_asymptotic(0, z, HankelKind::First),
            hankel_asymptotic(1, z, HankelKind::First),
        )
    } else if r >= SERIES_RADIUS && z.im > IMAG_SWITCH {
        let (k0, k1) = macdonald_cf2(-I * z);
        (-I * (2.0 / PI) * k0, -(2.0 / PI) * k1)
    } else {
        let b = bessel01_small(z, r);
        (b.h0, b.h1)
    }
}

/// All of `J₀, J₁, H⁽¹⁾₀, H⁽¹⁾₁` without argument checks.
pub fn bessel01_unchecked(z: C64) -> Bessel01 {
    let r = z.norm();
    if r > ASYMPTOTIC_RADIUS {
        let h0 = hankel_asymptotic(0, z, HankelKind::First);
        let h1 = hankel_asymptotic(1, z, HankelKind::First);
        let g0 = hankel_asymptotic(0, z, HankelKind::Second);
        let g1 = hankel_asymptotic(1, z, HankelKind::Second);
        Bessel01 {
            j0: 0.5 * (h0 + g0),
            j1: 0.5 * (h1 + g1),
            h0,
            h1,
        }
    } else {
        bessel01_small(z, r)
    }
}

fn bessel01_small(z: C64, r: f64) -> Bessel01 {
    let (j0, j1, y0, y1) = if r < SERIES_RADIUS {
        ascending_series(z)
    } else {
        neumann_series(z)
    };
    if r >= SERIES_RADIUS && z.im > IMAG_SWITCH {
        let (k0, k1) = macdonald_cf2(-I * z);
        return Bessel01 {
            j0,
            j1,
            h0: -I * (2.0 / PI) * k0,
            h1: -(2.0 / PI) * k1,
        };
    }
    Bessel01 {
        j0,
        j1,
        h0: j0 + I * y0,
        h1: j1 + I * y1,
    }
}

/// Ascending power series for `J₀, J₁, Y₀, Y₁`.
fn ascending_series(z: C64) -> (C64, C64, C64, C64) {
    let q = -0.25 * z * z;
    let log_term = (0.5 * z).ln() + EULER_GAMMA;

    // J0, and the harmonic-weighted companion sum for Y0.
    let mut t = C64::new(1.0, 0.0);
    let mut j0 = t;
    let mut y0_sum = C64::new(0.0, 0.0);
    let mut harmonic = 0.0;
    // J1/(z/2), and the digamma-weighted companion sum for Y1.
    let mut u = C64::new(1.0, 0.0);
    let mut j1s = u;
    let mut psi_m1 = -EULER_GAMMA; // ψ(m+1)
    let mut psi_m2 = 1.0 - EULER_GAMMA; // ψ(m+2)
    let mut y1_sum = u * (psi_m1 + psi_m2);
    for m in 1..60 {
        let mf = m as f64;
        t *= q / (mf * mf);
        u *= q / (mf * (mf + 1.0));
        harmonic += 1.0 / mf;
        psi_m1 += 1.0 / mf;
        psi_m2 += 1.0 / (mf + 1.0);
        j0 += t;
        // (-1)^{m+1} H_m (z²/4)^m/(m!)² = -H_m t
        y0_sum -= harmonic * t;
        j1s += u;
        y1_sum += u * (psi_m1 + psi_m2);
        if t.norm() < 1e-18 * j0.norm() && u.norm() < 1e-18 * j1s.norm() {
            break;
        }
    }
    let half_z = 0.5 * z;
    let j1 = half_z * j1s;
    let y0 = (2.0 / PI) * (log_term * j0 + y0_sum);
    let y1 = -2.0 / (PI * z) + (2.0 / PI) * (0.5 * z).ln() * j1 - (1.0 / PI) * half_z * y1_sum;
    (j0, j1, y0, y1)
}

/// Miller backward recurrence for `J₀(z) … J_{n_max}(z)`.
///
/// Normalized with `e^{-iz} = J₀ + 2 Σ (-i)ⁿ Jₙ`, whose magnitude tracks
/// `|Jₙ|` for `Im z ≥ 0` so the normalization does not cancel.
pub fn bessel_j_sequence(z: C64, n_max: usize) -> Vec<C64> {
    let r = z.norm();
    let mut start = n_max.max(r as usize) + 40 + (r.cbrt() * 8.0) as usize;
    if start % 2 == 1 {
        start += 1;
    }
    let mut vals = vec![C64::new(0.0, 0.0); start + 2];
    vals[start] = C64::new(1e-100, 0.0);
    let two_over_z = 2.0 / z;
    for n in (1..=start).rev() {
        let next = two_over_z * (n as f64) * vals[n] - vals[n + 1];
        vals[n - 1] = next;
        if next.norm() > 1e100 {
            for v in vals[n - 1..].iter_mut() {
                *v *= 1e-100;
            }
        }
    }
    // (-i)^n cycles 1, -i, -1, i.
    let phases = [
        C64::new(1.0, 0.0),
        C64::new(0.0, -1.0),
        C64::new(-1.0, 0.0),
        C64::new(0.0, 1.0),
    ];
    let mut sum = vals[0];
    for (n, v) in vals.iter().enumerate().take(start + 1).skip(1) {
        sum += 2.0 * phases[n % 4] * v;
    }
    let scale = (-I * z).exp() / sum;
    vals.truncate(n_max + 1);
    for v in vals.iter_mut() {
        *v *= scale;
    }
    vals
}

/// `J` by Miller recurrence and `Y₀, Y₁` by their Neumann series.
fn neumann_series(z: C64) -> (C64, C64, C64, C64) {
    let n_terms = (z.norm() as usize) / 2 + 22;
    let j = bessel_j_sequence(z, 2 * n_terms + 2);
    let log_term = (0.5 * z).ln() + EULER_GAMMA;

    let mut s0 = C64::new(0.0, 0.0);
    let mut s1 = C64::new(0.0, 0.0);
    let mut sign = -1.0;
    for k in 1..=n_terms {
        let kf = k as f64;
        s0 += sign * j[2 * k] / kf;
        s1 += sign * (j[2 * k - 1] - j[2 * k + 1]) / kf;
        sign = -sign;
    }
    let y0 = (2.0 / PI) * log_term * j[0] - (4.0 / PI) * s0;
    let y1 = (2.0 / PI) * (log_term * j[1] - j[0] / z) + (2.0 / PI) * s1;
    (j[0], j[1], y0, y1)
}

/// `K₀(w), K₁(w)` for `Re w > 0`, `|w| ≥ 2` by Steed's continued fraction.
fn macdonald_cf2(w: C64) -> (C64, C64) {
    let one = C64::new(1.0, 0.0);
    let mut b = 2.0 * (one + w);
    let mut d = one / b;
    let mut delh = d;
    let mut h = delh;
    let mut q1 = C64::new(0.0, 0.0);
    let mut q2 = one;
    let a1 = 0.25;
    let mut q = C64::new(a1, 0.0);
    let mut c = C64::new(a1, 0.0);
    let mut a = -a1;
    let mut s = one + q * delh;
    for i in 2..20_000 {
        let fi = i as f64;
        a -= 2.0 * (fi - 1.0);
        c = -a * c / fi;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = one / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        if dels.norm() < 1e-17 * s.norm() {
            break;
        }
    }
    h *= a1;
    let k0 = (PI / (2.0 * w)).sqrt() * (-w).exp() / s;
    let k1 = k0 * (w + 0.5 - h) / w;
    (k0, k1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum HankelKind {
    First,
    Second,
}

/// Hankel asymptotic expansion, truncated at the smallest term.
fn hankel_asymptotic(nu: u32, z: C64, kind: HankelKind) -> C64 {
    let mu = 4.0 * (nu * nu) as f64;
    let omega = z - (nu as f64) * FRAC_PI_2 - FRAC_PI_4;
    let (phase, step) = match kind {
        HankelKind::First => ((I * omega).exp(), I / z),
        HankelKind::Second => ((-I * omega).exp(), -I / z),
    };
    let mut term = C64::new(1.0, 0.0);
    let mut sum = term;
    let mut prev = f64::INFINITY;
    for k in 1..80 {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        term *= step * ((mu - odd * odd) / (8.0 * kf));
        let mag = term.norm();
        if mag > prev {
            break;
        }
        sum += term;
        if mag < 1e-17 * sum.norm() {
            break;
        }
        prev = mag;
    }
    (2.0 / (PI * z)).sqrt() * phase * sum
}
