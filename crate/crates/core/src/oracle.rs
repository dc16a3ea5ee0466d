//! Reference solutions: the separation-of-variables series for one
//! sound-soft circle and a global first-kind integral equation solver for
//! arbitrary clouds.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use crate::bio::{assemble_arc_self_s, assemble_cross, assemble_self, far_field, CrossKind, OperatorKind, PotentialKind};
use crate::error::{Error, Result};
use crate::geometry::{build_scatterer_mesh, BoxGrid, MeshedBoundary, Point, Topology};
use crate::linalg::{CMat, DenseLu};
use crate::specfun::{bessel_j_sequence, bessel_jy, Wavenumber};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Default dense-solve budget of the global solver, in unknowns.
pub const DEFAULT_BUDGET: usize = 20_000;

/// Far-field values on a uniform angle grid over `[0, 2π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FarFieldSamples {
    pub angles: Vec<f64>,
    pub values: Vec<C64>,
}

impl FarFieldSamples {
    pub fn uniform_angles(m: usize) -> Vec<f64> {
        (0..m).map(|i| 2.0 * PI * i as f64 / m as f64).collect()
    }

    pub fn new(angles: Vec<f64>, values: Vec<C64>) -> Result<Self> {
        if angles.len() != values.len() || angles.is_empty() {
            return Err(Error::Parameter("far-field angles and values differ in length".into()));
        }
        let m = angles.len();
        for (i, &a) in angles.iter().enumerate() {
            if (a - 2.0 * PI * i as f64 / m as f64).abs() > 1e-12 {
                return Err(Error::Parameter("far-field directions are not a uniform grid".into()));
            }
        }
        Ok(Self { angles, values })
    }
}

/// `max|a − b| / max|b|`.
pub fn compare_far_fields(a: &FarFieldSamples, b: &FarFieldSamples) -> Result<f64> {
    if a.angles.len() != b.angles.len()
        || a.angles.iter().zip(&b.angles).any(|(x, y)| (x - y).abs() > 1e-12)
    {
        return Err(Error::Parameter("far-field direction grids differ".into()));
    }
    let num = a
        .values
        .iter()
        .zip(&b.values)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).norm()));
    let den = b.values.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    Ok(num / den)
}

/// `Jₙ(x), Yₙ(x)` for `n = 0 … n_max`, `x > 0`: Miller recurrence for `J`,
/// upward recurrence for `Y` from the order 0 and 1 values.
pub fn bessel_jn_yn(n_max: usize, x: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("integer-order Bessel functions need x > 0, got {x}")));
    }
    let j: Vec<f64> = bessel_j_sequence(C64::new(x, 0.0), n_max)
        .into_iter()
        .map(|v| v.re)
        .collect();
    let (_, y0) = bessel_jy(0, x)?;
    let (_, y1) = bessel_jy(1, x)?;
    let mut y = vec![y0, y1];
    for n in 1..n_max {
        let next = 2.0 * n as f64 / x * y[n] - y[n - 1];
        y.push(next);
    }
    y.truncate(n_max + 1);
    Ok((j, y))
}

/// Series solution for plane-wave scattering by a sound-soft circle.
#[derive(Debug, Clone)]
pub struct MieSeries {
    pub radius: f64,
    pub center: Point,
    pub k: f64,
    pub direction: f64,
    /// `aₙ = −Jₙ(ka)/Hₙ(ka)`, `n ≥ 0`; `a₋ₙ = aₙ`.
    pub coefficients: Vec<C64>,
    /// `|a_{n_terms}|`, a bound on the size of the neglected terms.
    pub tail: f64,
}

/// Tail size above which the truncation is reported.
pub const MIE_TAIL_WARNING: f64 = 1e-12;

impl MieSeries {
    pub fn new(radius: f64, center: Point, k: f64, direction: f64, n_terms: usize) -> Result<Self> {
        if !(radius > 0.0 && k > 0.0) {
            return Err(Error::Parameter("radius and wavenumber must be positive".into()));
        }
        if (n_terms as f64) < k * radius + 15.0 {
            return Err(Error::Parameter(format!(
                "{n_terms} terms is below the guard k·a + 15 = {:.1}",
                k * radius + 15.0
            )));
        }
        let ka = k * radius;
        let (j, y) = bessel_jn_yn(n_terms + 1, ka)?;
        let coefficients: Vec<C64> = (0..=n_terms)
            .map(|n| -j[n] / C64::new(j[n], y[n]))
            .collect();
        let tail = (-j[n_terms + 1] / C64::new(j[n_terms + 1], y[n_terms + 1])).norm();
        Ok(Self {
            radius,
            center,
            k,
            direction,
            coefficients,
            tail,
        })
    }

    pub fn truncation_warning(&self) -> Option<String> {
        (self.tail > MIE_TAIL_WARNING).then(|| {
            format!(
                "series truncated with tail {:e} above {MIE_TAIL_WARNING:e}",
                self.tail
            )
        })
    }

    fn phase(&self) -> C64 {
        C64::from_polar(1.0, self.k * Point::unit(self.direction).dot(self.center))
    }

    pub fn far_field(&self, angles: &[f64]) -> Vec<C64> {
        let pre = (2.0 / (PI * self.k)).sqrt() * C64::from_polar(1.0, -0.25 * PI) * self.phase();
        angles
            .iter()
            .map(|&th| {
                let x = Point::unit(th);
                let shift = C64::from_polar(1.0, -self.k * x.dot(self.center));
                let mut s = self.coefficients[0];
                for (n, a) in self.coefficients.iter().enumerate().skip(1) {
                    s += 2.0 * a * (n as f64 * (th - self.direction)).cos();
                }
                pre * shift * s
            })
            .collect()
    }

    /// Scattered field at points outside the circle.
    pub fn scattered_field(&self, points: &[Point]) -> Result<Vec<C64>> {
        let nt = self.coefficients.len() - 1;
        points
            .iter()
            .map(|&p| {
                let d = p - self.center;
                let r = d.norm();
                if r < self.radius * (1.0 - 1e-12) {
                    return Err(Error::Domain("scattered series evaluated inside the circle".into()));
                }
                let th = d.y.atan2(d.x);
                let (j, y) = bessel_jn_yn(nt, self.k * r)?;
                let mut s = C64::new(0.0, 0.0);
                let mut ipow = C64::new(1.0, 0.0);
                for n in 0..=nt {
                    let h = C64::new(j[n], y[n]);
                    let ang = n as f64 * (th - self.direction);
                    let f = if n == 0 { 1.0 } else { 2.0 * ang.cos() };
                    s += ipow * self.coefficients[n] * h * f;
                    ipow *= I;
                }
                Ok(self.phase() * s)
            })
            .collect()
    }

    /// Neumann trace of the total field on the circle, outward normal, at
    /// polar angles `theta` about the center.
    pub fn neumann_trace(&self, theta: &[f64]) -> Result<Vec<C64>> {
        let nt = self.coefficients.len() - 1;
        let ka = self.k * self.radius;
        let (j, y) = bessel_jn_yn(nt, ka)?;
        let pre = -self.phase() * 2.0 * I / (PI * self.radius);
        Ok(theta
            .iter()
            .map(|&th| {
                let mut s = C64::new(0.0, 0.0);
                let mut ipow = C64::new(1.0, 0.0);
                for n in 0..=nt {
                    let ang = n as f64 * (th - self.direction);
                    let f = if n == 0 { 1.0 } else { 2.0 * ang.cos() };
                    s += ipow * f / C64::new(j[n], y[n]);
                    ipow *= I;
                }
                pre * s
            })
            .collect())
    }
}

/// Far field of a sound-soft circle by the series.
pub fn mie_far_field(
    radius: f64,
    center: Point,
    k: f64,
    direction: f64,
    n_terms: usize,
    n_angles: usize,
) -> Result<FarFieldSamples> {
    let series = MieSeries::new(radius, center, k, direction, n_terms)?;
    let angles = FarFieldSamples::uniform_angles(n_angles);
    let values = series.far_field(&angles);
    FarFieldSamples::new(angles, values)
}

/// Solution of the global first-kind system `S φ = −u^{inc}`.
#[derive(Debug, Clone)]
pub struct GlobalBie {
    pub far_field: FarFieldSamples,
    pub unknowns: usize,
    pub densities: Vec<Vec<C64>>,
}

/// Single-layer first-kind solve over every scatterer of the cloud with
/// `nodes` nodes per scatterer.
pub fn global_bie_solve(
    grid: &BoxGrid,
    k: f64,
    direction: f64,
    nodes: usize,
    n_angles: usize,
    budget: usize,
) -> Result<GlobalBie> {
    let meshes: Vec<MeshedBoundary> = grid
        .all_scatterers()
        .map(|s| build_scatterer_mesh(s, nodes))
        .collect::<Result<_>>()?;
    let total: usize = meshes.iter().map(|m| m.len()).sum();
    if total > budget {
        return Err(Error::Budget {
            requested: total,
            budget,
        });
    }
    let wk = Wavenumber::real(k)?;
    let mut offsets = Vec::with_capacity(meshes.len());
    let mut off = 0;
    for m in &meshes {
        offsets.push(off);
        off += m.len();
    }
    let mut a = CMat::zeros(total, total);
    for (t, mt) in meshes.iter().enumerate() {
        for (s, ms) in meshes.iter().enumerate() {
            let blk = if s == t {
                if mt.topology == Topology::OpenArc {
                    assemble_arc_self_s(mt, wk)?.entries
                } else {
                    assemble_self(OperatorKind::S, mt, wk)?.entries
                }
            } else {
                assemble_cross(CrossKind::Sl, ms, mt, wk)?.entries
            };
            a.as_mut()
                .submatrix_mut(offsets[t], offsets[s], mt.len(), ms.len())
                .copy_from(&blk);
        }
    }
    let d = Point::unit(direction);
    let rhs: Vec<C64> = meshes
        .iter()
        .flat_map(|m| m.nodes.iter().map(|x| -C64::from_polar(1.0, k * d.dot(*x))))
        .collect();
    let phi = DenseLu::new(a, "global first-kind system")?.solve_vec(&rhs);
    let angles = FarFieldSamples::uniform_angles(n_angles);
    let mut values = vec![C64::new(0.0, 0.0); n_angles];
    let mut densities = Vec::with_capacity(meshes.len());
    for (m, &o) in meshes.iter().zip(&offsets) {
        let dens = phi[o..o + m.len()].to_vec();
        let f = far_field(PotentialKind::Sl, m, &dens, &angles, wk)?;
        for (v, x) in values.iter_mut().zip(f) {
            *v += x;
        }
        densities.push(dens);
    }
    Ok(GlobalBie {
        far_field: FarFieldSamples::new(angles, values)?,
        unknowns: total,
        densities,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Scatterer;

    #[test]
    fn recurrences_match_order_zero_and_one() {
        let (j, y) = bessel_jn_yn(5, 3.7).unwrap();
        let (j0, y0) = bessel_jy(0, 3.7).unwrap();
        let (j1, y1) = bessel_jy(1, 3.7).unwrap();
        assert!((j[0] - j0).abs() < 1e-14 && (j[1] - j1).abs() < 1e-14);
        assert!((y[0] - y0).abs() < 1e-14 && (y[1] - y1).abs() < 1e-14);
        // Wronskian J_{n+1}Y_n − J_nY_{n+1} = 2/(πx)
        for n in 0..5 {
            let w = j[n + 1] * y[n] - j[n] * y[n + 1];
            assert!((w - 2.0 / (PI * 3.7)).abs() < 1e-13);
        }
    }

    #[test]
    fn small_circles_scatter_less() {
        let f = |a: f64| {
            let s = mie_far_field(a, Point::default(), 1.0, 0.0, 20, 8).unwrap();
            s.values.iter().fold(0.0f64, |m, v| m.max(v.norm()))
        };
        let (a, b) = (f(1e-2), f(1e-3));
        assert!(b < a && a < f(1e-1));
    }

    #[test]
    fn rotation_covariance() {
        let m = 64;
        let alpha = 2.0 * PI * 5.0 / m as f64;
        let s0 = mie_far_field(1.0, Point::default(), 4.0, 0.0, 40, m).unwrap();
        let s1 = mie_far_field(1.0, Point::default(), 4.0, alpha, 40, m).unwrap();
        for i in 0..m {
            let d = (s1.values[(i + 5) % m] - s0.values[i]).norm();
            assert!(d < 1e-12);
        }
    }

    #[test]
    fn series_terms_decay_at_ka_eight() {
        let s = MieSeries::new(1.0, Point::default(), 8.0, 0.0, 45).unwrap();
        for n in 30..=45 {
            assert!(s.coefficients[n].norm() < 1e-14, "{n} {}", s.coefficients[n].norm());
        }
        assert!(s.truncation_warning().is_none());
        assert!(MieSeries::new(1.0, Point::default(), 8.0, 0.0, 20).is_err());
    }

    #[test]
    fn scattered_field_cancels_incident_on_circle() {
        let c = Point::new(0.3, -0.4);
        let s = MieSeries::new(0.7, c, 3.0, 0.9, 40).unwrap();
        let pts: Vec<Point> = (0..12).map(|i| c + Point::unit(i as f64 * 0.5) * 0.7).collect();
        let us = s.scattered_field(&pts).unwrap();
        let d = Point::unit(0.9);
        for (p, u) in pts.iter().zip(us) {
            let inc = C64::from_polar(1.0, 3.0 * d.dot(*p));
            assert!((u + inc).norm() < 1e-12);
        }
    }

    #[test]
    fn global_solver_matches_series_on_one_circle() {
        let c = Point::new(0.5, 0.5);
        let mut g = BoxGrid::new(Point::default(), 1.0, 1.0, 1, 1).unwrap();
        g.scatterers[0].push(Scatterer::circle(c, 0.3).unwrap());
        let bie = global_bie_solve(&g, 8.0, 0.4, 64, 32, DEFAULT_BUDGET).unwrap();
        let mie = mie_far_field(0.3, c, 8.0, 0.4, 40, 32).unwrap();
        assert!(compare_far_fields(&bie.far_field, &mie).unwrap() < 1e-8);
    }

    #[test]
    fn weak_coupling_limit() {
        let dev = |sep: f64| {
            let a = 0.1;
            let mut g = BoxGrid::new(Point::default(), 2.0 * sep, 2.0 * sep, 1, 1).unwrap();
            let c1 = Point::new(0.5 * sep, sep);
            let c2 = Point::new(1.5 * sep, sep);
            g.scatterers[0] = vec![Scatterer::circle(c1, a).unwrap(), Scatterer::circle(c2, a).unwrap()];
            let both = global_bie_solve(&g, 1.0, 0.3, 32, 16, DEFAULT_BUDGET).unwrap().far_field;
            let m1 = mie_far_field(a, c1, 1.0, 0.3, 20, 16).unwrap();
            let m2 = mie_far_field(a, c2, 1.0, 0.3, 20, 16).unwrap();
            let sum = FarFieldSamples::new(
                m1.angles.clone(),
                m1.values.iter().zip(&m2.values).map(|(x, y)| x + y).collect(),
            )
            .unwrap();
            compare_far_fields(&both, &sum).unwrap()
        };
        let (d10, d40) = (dev(1.0), dev(4.0));
        assert!(d40 < d10, "{d10} {d40}");
    }

    #[test]
    fn budget_and_grid_checks() {
        let mut g = BoxGrid::new(Point::default(), 1.0, 1.0, 1, 1).unwrap();
        g.scatterers[0].push(Scatterer::circle(Point::new(0.5, 0.5), 0.2).unwrap());
        assert!(matches!(
            global_bie_solve(&g, 1.0, 0.0, 64, 8, 10),
            Err(Error::Budget { requested: 64, budget: 10 })
        ));
        let a = FarFieldSamples::new(FarFieldSamples::uniform_angles(4), vec![C64::new(1.0, 0.0); 4]).unwrap();
        let b = FarFieldSamples::new(FarFieldSamples::uniform_angles(4), vec![C64::new(2.0, 0.0); 4]).unwrap();
        assert_eq!(compare_far_fields(&a, &a).unwrap(), 0.0);
        assert_eq!(compare_far_fields(&a, &b).unwrap(), 0.5);
        let c = FarFieldSamples::new(FarFieldSamples::uniform_angles(5), vec![C64::new(2.0, 0.0); 5]).unwrap();
        assert!(compare_far_fields(&a, &c).is_err());
    }
}
