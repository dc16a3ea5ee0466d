//! Nyström discretization of the Helmholtz layer potentials and boundary
//! operators.
//!
//! Self-interaction matrices use the Kussmaul–Martensen splitting
//! `M(t, τ) = M₁(t, τ) ln(4 sin²((t−τ)/2)) + M₂(t, τ)` with exact product
//! weights for the logarithmic part and the trapezoid rule for the rest.
//!
//! Trace convention (outward normals): the interior Dirichlet trace of the
//! double layer is `−½I + K`, the exterior one `½I + K`; the interior Neumann
//! trace of the single layer is `½I + Kᵀ`, the exterior one `−½I + Kᵀ`.

use std::f64::consts::PI;
use std::ops::Range;

use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{MeshedBoundary, Point, Topology};
use crate::linalg::{mul, CMat};
use crate::specfun::{bessel01_unchecked, Wavenumber, EULER_GAMMA};

/// Minimum node distance accepted between disjoint curves.
pub const DISJOINT_TOL: f64 = 1e-10;

/// Near-field threshold in units of the source mean spacing.
pub const NEAR_FIELD_SPACINGS: f64 = 3.0;

const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    S,
    K,
    Kt,
    N,
    ArcS,
    SlCross,
    DlCross,
    DnSlCross,
    DnDlCross,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrossKind {
    Sl,
    Dl,
    DnSl,
    DnDl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotentialKind {
    Sl,
    Dl,
}

/// Dense Nyström matrix with its provenance.
#[derive(Debug, Clone)]
pub struct BoundaryOperatorMatrix {
    pub entries: CMat,
    pub kind: OperatorKind,
    pub k: Wavenumber,
}

impl BoundaryOperatorMatrix {
    pub fn into_inner(self) -> CMat {
        self.entries
    }
}

/// Column-parallel dense fill.
pub(crate) fn fill<F>(rows: usize, cols: usize, f: F) -> CMat
where
    F: Fn(usize, usize) -> C64 + Sync,
{
    let columns: Vec<Vec<C64>> = (0..cols)
        .into_par_iter()
        .map(|j| (0..rows).map(|i| f(i, j)).collect())
        .collect();
    CMat::from_fn(rows, cols, |i, j| columns[j][i])
}

/// Kussmaul–Martensen weights `R_m`, `m = 0 … 2n−1`, for the 2n-point grid:
/// `∫₀^{2π} ln(4 sin²((t_i−τ)/2)) f(τ) dτ ≈ Σ_j R_{i−j} f(τ_j)`.
pub fn log_weights(big_n: usize) -> Vec<f64> {
    assert!(big_n % 2 == 0 && big_n >= 2);
    let n = big_n / 2;
    let nf = n as f64;
    (0..big_n)
        .map(|m| {
            let mut s = 0.0;
            for l in 1..n {
                s += (l as f64 * m as f64 * PI / nf).cos() / l as f64;
            }
            let alt = if m % 2 == 0 { 1.0 } else { -1.0 };
            -2.0 * PI / nf * s - PI / (nf * nf) * alt
        })
        .collect()
}

/// Trigonometric differentiation matrix on an even equispaced grid.
pub fn differentiation_matrix(big_n: usize) -> CMat {
    let h = 2.0 * PI / big_n as f64;
    CMat::from_fn(big_n, big_n, |i, j| {
        if i == j {
            C64::new(0.0, 0.0)
        } else {
            let d = i as isize - j as isize;
            let sign = if d.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            C64::new(0.5 * sign / (0.5 * h * d as f64).tan(), 0.0)
        }
    })
}

fn log_sin2(dt: f64) -> f64 {
    (4.0 * (0.5 * dt).sin().powi(2)).ln()
}

fn require_closed(mesh: &MeshedBoundary) -> Result<()> {
    if !mesh.is_closed() {
        return Err(Error::Topology(
            "closed-curve operator requested on an open arc".into(),
        ));
    }
    if mesh.len() % 2 == 1 {
        return Err(Error::Parameter("closed mesh needs an even node count".into()));
    }
    Ok(())
}

/// Single-layer type log splitting for kernel `G(x(t), x(τ)) · g(t, τ)` where
/// `g` is smooth and `g(t, t)` is finite.
fn assemble_log_kernel<F>(mesh: &MeshedBoundary, k: C64, factor: F) -> CMat
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    let rows: Vec<usize> = (0..mesh.len()).collect();
    log_kernel_rows(mesh, &rows, k, factor)
}

fn log_kernel_rows<F>(mesh: &MeshedBoundary, rows: &[usize], k: C64, factor: F) -> CMat
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    let big_n = mesh.len();
    let r_w = log_weights(big_n);
    let h = 2.0 * PI / big_n as f64;
    fill(rows.len(), big_n, |a, j| {
        let i = rows[a];
        let g = factor(i, j);
        if i == j {
            let m2 = 0.25 * I - EULER_GAMMA / (2.0 * PI)
                - (k * mesh.speed[i] * 0.5).ln() / (2.0 * PI);
            return (r_w[0] * (-1.0 / (4.0 * PI)) + h * m2) * g;
        }
        let r = mesh.nodes[i].dist(mesh.nodes[j]);
        let b = bessel01_unchecked(k * r);
        let m = 0.25 * I * b.h0;
        let m1 = -b.j0 / (4.0 * PI);
        let ls = log_sin2(mesh.params[i] - mesh.params[j]);
        let m2 = m - m1 * ls;
        let idx = (i + big_n - j) % big_n;
        (r_w[idx] * m1 + h * m2) * g
    })
}

/// Self-interaction Nyström matrix of `S`, `K`, `Kᵀ` or `N` on a closed mesh.
pub fn assemble_self(
    kind: OperatorKind,
    mesh: &MeshedBoundary,
    k: Wavenumber,
) -> Result<BoundaryOperatorMatrix> {
    require_closed(mesh)?;
    let kv = k.value();
    let entries = match kind {
        OperatorKind::S => assemble_log_kernel(mesh, kv, |_, j| mesh.speed[j]),
        OperatorKind::K | OperatorKind::Kt => assemble_double_layer(mesh, kv, kind == OperatorKind::Kt),
        OperatorKind::N => assemble_hypersingular(mesh, kv),
        other => {
            return Err(Error::Unsupported(format!(
                "{other:?} is not a closed-curve self operator"
            )))
        }
    };
    Ok(BoundaryOperatorMatrix { entries, kind, k })
}

fn assemble_double_layer(mesh: &MeshedBoundary, k: C64, adjoint: bool) -> CMat {
    let rows: Vec<usize> = (0..mesh.len()).collect();
    double_layer_rows(mesh, &rows, k, adjoint)
}

fn double_layer_rows(mesh: &MeshedBoundary, rows: &[usize], k: C64, adjoint: bool) -> CMat {
    let big_n = mesh.len();
    let r_w = log_weights(big_n);
    let h = 2.0 * PI / big_n as f64;
    fill(rows.len(), big_n, |a, j| {
        let i = rows[a];
        if i == j {
            let nu = mesh.d1[i].rot_cw();
            let s2 = mesh.speed[i] * mesh.speed[i];
            return C64::new(h * nu.dot(mesh.d2[i]) / (4.0 * PI * s2), 0.0);
        }
        let diff = mesh.nodes[i] - mesh.nodes[j];
        let r = diff.norm();
        // Both kernels carry ±(ik/4) H₁(kr) · (direction) · (x(t) − x(τ))/r.
        let proj = if adjoint {
            -mesh.normals[i].dot(diff) * mesh.speed[j] / r
        } else {
            mesh.d1[j].rot_cw().dot(diff) / r
        };
        let b = bessel01_unchecked(k * r);
        let m = 0.25 * I * k * b.h1 * proj;
        let m1 = -k * b.j1 * proj / (4.0 * PI);
        let ls = log_sin2(mesh.params[i] - mesh.params[j]);
        let idx = (i + big_n - j) % big_n;
        r_w[idx] * m1 + h * (m - m1 * ls)
    })
}

/// Maue form `N = diag(1/|x′|) D S₀ D + k² S_{nn}`.
fn assemble_hypersingular(mesh: &MeshedBoundary, k: C64) -> CMat {
    let big_n = mesh.len();
    let d = differentiation_matrix(big_n);
    let s0 = assemble_log_kernel(mesh, k, |_, _| 1.0);
    let snn = assemble_log_kernel(mesh, k, |i, j| {
        mesh.normals[i].dot(mesh.normals[j]) * mesh.speed[j]
    });
    let t = mul(s0.as_ref(), d.as_ref());
    let mut out = mul(d.as_ref(), t.as_ref());
    let k2 = k * k;
    for j in 0..big_n {
        for i in 0..big_n {
            out[(i, j)] = out[(i, j)] / mesh.speed[i] + k2 * snn[(i, j)];
        }
    }
    out
}

/// `∂²/∂n_x∂n_y J₀(k|x − y|)`, with `c = (u·n_x)(u·n_y)/r²`.
#[inline]
fn dndn_j0(k: C64, j0: C64, j1: C64, r: f64, c: f64, nxny: f64) -> C64 {
    let j1r = k * j1 / r;
    (k * k * j0 - j1r) * c + j1r * (nxny - c)
}

/// Nyström matrix of `N_k − N_κ`, whose kernel is only log-singular.
pub fn assemble_hypersingular_difference(
    mesh: &MeshedBoundary,
    k: Wavenumber,
    kappa: Wavenumber,
) -> Result<CMat> {
    require_closed(mesh)?;
    let rows: Vec<usize> = (0..mesh.len()).collect();
    Ok(hypersingular_difference_rows(mesh, &rows, k.value(), kappa.value()))
}

fn hypersingular_difference_rows(mesh: &MeshedBoundary, rows: &[usize], k: C64, q: C64) -> CMat {
    let big_n = mesh.len();
    let r_w = log_weights(big_n);
    let h = 2.0 * PI / big_n as f64;
    let dk2 = k * k - q * q;
    let lk = |z: C64| z * z * ((0.5 * z).ln() + EULER_GAMMA);
    let diag_const = I * dk2 / 8.0 + dk2 / (8.0 * PI) - (lk(k) - lk(q)) / (4.0 * PI);
    fill(rows.len(), big_n, |a, j| {
        let i = rows[a];
        let sp = mesh.speed[j];
        if i == j {
            let m1 = -dk2 / (8.0 * PI);
            let m2 = diag_const - dk2 * mesh.speed[i].ln() / (4.0 * PI);
            return (r_w[0] * m1 + h * m2) * sp;
        }
        let (x, y) = (mesh.nodes[i], mesh.nodes[j]);
        let (nx, ny) = (mesh.normals[i], mesh.normals[j]);
        let u = x - y;
        let r = u.norm();
        let c = u.dot(nx) * u.dot(ny) / (r * r);
        let nxny = nx.dot(ny);
        let m = cross_kernel(CrossKind::DnDl, k, x, nx, y, ny)
            - cross_kernel(CrossKind::DnDl, q, x, nx, y, ny);
        let bk = bessel01_unchecked(k * r);
        let bq = bessel01_unchecked(q * r);
        let m1 = -(dndn_j0(k, bk.j0, bk.j1, r, c, nxny) - dndn_j0(q, bq.j0, bq.j1, r, c, nxny))
            / (4.0 * PI);
        let ls = log_sin2(mesh.params[i] - mesh.params[j]);
        let idx = (i + big_n - j) % big_n;
        (r_w[idx] * m1 + h * (m - m1 * ls)) * sp
    })
}

/// The composition `S_κ N_k` through the Calderón identity
/// `S_κ N_k = −¼I + K_κ² + S_κ (N_k − N_κ)`.
///
/// No hypersingular kernel and no spectral differentiation is involved, so
/// the local quadrature errors next to corners of graded meshes stay local.
pub fn assemble_regularized_sn(
    mesh: &MeshedBoundary,
    s_kappa: &CMat,
    k_kappa: &CMat,
    k: Wavenumber,
    kappa: Wavenumber,
) -> Result<CMat> {
    let diff = assemble_hypersingular_difference(mesh, k, kappa)?;
    let mut out = mul(s_kappa.as_ref(), diff.as_ref());
    crate::linalg::mul_acc(out.as_mut(), k_kappa.as_ref(), k_kappa.as_ref(), C64::new(1.0, 0.0));
    for i in 0..mesh.len() {
        out[(i, i)] -= 0.25;
    }
    Ok(out)
}

/// Cosine interpolation from the half-shifted `n`-point grid on `[0, π]` to
/// the half-shifted `m`-point grid.
pub fn cosine_interpolation(n: usize, m: usize) -> CMat {
    CMat::from_fn(m, n, |a, j| {
        let ta = PI * (a as f64 + 0.5) / m as f64;
        let tj = PI * (j as f64 + 0.5) / n as f64;
        let mut acc = 0.5;
        for l in 1..n {
            acc += (l as f64 * ta).cos() * (l as f64 * tj).cos();
        }
        C64::new(2.0 * acc / n as f64, 0.0)
    })
}

/// Points of the local interpolation stencil in [`interpolate_pieces`].
pub const INTERPOLATION_STENCIL: usize = 12;

/// Carries nodal values from a cornered mesh to a refinement with the same
/// labeled pieces. Each piece is interpolated in its uniform parameter by
/// Lagrange polynomials on the nearest [`INTERPOLATION_STENCIL`] nodes, so
/// an error at one node stays local.
pub fn interpolate_pieces(
    coarse: &MeshedBoundary,
    fine: &MeshedBoundary,
    values: &[C64],
) -> Result<Vec<C64>> {
    if values.len() != coarse.len() {
        return Err(Error::Partition("values do not match the coarse mesh".into()));
    }
    if coarse.pieces.is_empty() || coarse.pieces.len() != fine.pieces.len() {
        return Err(Error::Conformity("meshes do not share labeled pieces".into()));
    }
    let mut out = vec![C64::new(0.0, 0.0); fine.len()];
    for ((lc, rc), (lf, rf)) in coarse.pieces.iter().zip(&fine.pieces) {
        if lc != lf {
            return Err(Error::Conformity(format!("piece {lc:?} meets {lf:?}")));
        }
        let (n, m) = (rc.len(), rf.len());
        let q = INTERPOLATION_STENCIL.min(n);
        let v = &values[rc.clone()];
        for a in 0..m {
            // position in units of the coarse spacing, node j at j
            let t = (a as f64 + 0.5) * n as f64 / m as f64 - 0.5;
            let lo = ((t - 0.5 * (q as f64 - 1.0)).round().max(0.0) as usize).min(n - q);
            let mut acc = C64::new(0.0, 0.0);
            for j in lo..lo + q {
                let mut l = 1.0;
                for i in lo..lo + q {
                    if i != j {
                        l *= (t - i as f64) / (j as f64 - i as f64);
                    }
                }
                acc += l * v[j];
            }
            out[rf.start + a] = acc;
        }
    }
    Ok(out)
}

/// `Σ_j K₀(x_i, y_j) + ½` for the Laplace double layer at the selected rows.
/// The continuous operator satisfies `K₀1 = −½` on any closed curve.
fn laplace_double_layer_defect(mesh: &MeshedBoundary, rows: &[usize]) -> Vec<f64> {
    let big_n = mesh.len();
    let h = 2.0 * PI / big_n as f64;
    rows.par_iter()
        .map(|&i| {
            let mut acc = 0.5;
            for j in 0..big_n {
                if i == j {
                    let s2 = mesh.speed[i] * mesh.speed[i];
                    acc += h * mesh.d1[i].rot_cw().dot(mesh.d2[i]) / (4.0 * PI * s2);
                } else {
                    let d = mesh.nodes[i] - mesh.nodes[j];
                    acc += h * mesh.d1[j].rot_cw().dot(d) / (2.0 * PI * d.dot(d));
                }
            }
            acc
        })
        .collect()
}

/// Self operators of a closed curve collocated at the nodes of one mesh with
/// the source integrals taken on a nested refinement of it.
///
/// Densities reach the fine nodes by cosine interpolation piece by piece.
/// The graded parametrization makes each piece's restriction extend evenly
/// through both endpoints, so no corner jump is interpolated across.
/// Double-layer rows also receive the correction that makes `K₀1 = −½` exact.
#[derive(Debug, Clone)]
pub struct SelfQuadrature {
    fine: MeshedBoundary,
    rows: Vec<usize>,
    blocks: Vec<(Range<usize>, Range<usize>, CMat)>,
    coarse_len: usize,
}

impl SelfQuadrature {
    /// Plain Nyström on the mesh itself.
    pub fn direct(mesh: &MeshedBoundary) -> Result<Self> {
        require_closed(mesh)?;
        Ok(Self {
            fine: mesh.clone(),
            rows: (0..mesh.len()).collect(),
            blocks: Vec::new(),
            coarse_len: mesh.len(),
        })
    }

    /// Collocation on `coarse`, integration on `fine`. Both must be piecewise
    /// graded meshes of the same curve with the same pieces, `fine` carrying
    /// an odd multiple of the nodes of every piece.
    pub fn refined(coarse: &MeshedBoundary, fine: MeshedBoundary) -> Result<Self> {
        require_closed(coarse)?;
        require_closed(&fine)?;
        if coarse.pieces.is_empty() || coarse.pieces.len() != fine.pieces.len() {
            return Err(Error::Parameter("refined quadrature needs matching pieces".into()));
        }
        let factor = fine.len() / coarse.len();
        if factor % 2 == 0 || factor * coarse.len() != fine.len() {
            return Err(Error::Parameter(format!(
                "refinement from {} to {} nodes is not an odd multiple",
                coarse.len(),
                fine.len()
            )));
        }
        let rows: Vec<usize> = (0..coarse.len()).map(|i| factor * i + factor / 2).collect();
        let tol = 1e-12 * coarse.total_weight().max(1.0);
        for (i, &r) in rows.iter().enumerate() {
            if coarse.nodes[i].dist(fine.nodes[r]) > tol {
                return Err(Error::Conformity(format!(
                    "coarse node {i} is not a node of the refinement"
                )));
            }
        }
        let mut blocks = Vec::with_capacity(coarse.pieces.len());
        for ((lc, rc), (lf, rf)) in coarse.pieces.iter().zip(&fine.pieces) {
            if lc != lf || rf.start != factor * rc.start || rf.len() != factor * rc.len() {
                return Err(Error::Conformity("pieces of the refinement do not nest".into()));
            }
            blocks.push((rc.clone(), rf.clone(), cosine_interpolation(rc.len(), rf.len())));
        }
        Ok(Self {
            fine,
            rows,
            blocks,
            coarse_len: coarse.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.coarse_len
    }

    pub fn is_empty(&self) -> bool {
        self.coarse_len == 0
    }

    fn restrict(&self, rows_on_fine: CMat) -> CMat {
        if self.blocks.is_empty() {
            return rows_on_fine;
        }
        let mut out = CMat::zeros(self.coarse_len, self.coarse_len);
        for (rc, rf, p) in &self.blocks {
            let part = mul(rows_on_fine.as_ref().subcols(rf.start, rf.len()), p.as_ref());
            out.as_mut().subcols_mut(rc.start, rc.len()).copy_from(&part);
        }
        out
    }

    /// `S`, `K` or `Kᵀ` at wavenumber `k`.
    pub fn assemble(&self, kind: OperatorKind, k: Wavenumber) -> Result<CMat> {
        let kv = k.value();
        let m = &self.fine;
        let rows = match kind {
            OperatorKind::S => log_kernel_rows(m, &self.rows, kv, |_, j| m.speed[j]),
            OperatorKind::K => {
                let mut r = double_layer_rows(m, &self.rows, kv, false);
                let defect = laplace_double_layer_defect(m, &self.rows);
                for (a, &i) in self.rows.iter().enumerate() {
                    r[(a, i)] -= defect[a];
                }
                r
            }
            OperatorKind::Kt => double_layer_rows(m, &self.rows, kv, true),
            other => {
                return Err(Error::Unsupported(format!(
                    "{other:?} has no refined self quadrature"
                )))
            }
        };
        Ok(self.restrict(rows))
    }

    /// `N_k − N_κ`.
    pub fn hypersingular_difference(&self, k: Wavenumber, kappa: Wavenumber) -> CMat {
        self.restrict(hypersingular_difference_rows(
            &self.fine,
            &self.rows,
            k.value(),
            kappa.value(),
        ))
    }
}

/// Single-layer self matrix on an open arc in the cosine variable, acting on
/// the physical jump density at the arc nodes.
pub fn assemble_arc_self_s(mesh: &MeshedBoundary, k: Wavenumber) -> Result<BoundaryOperatorMatrix> {
    if mesh.topology != Topology::OpenArc {
        return Err(Error::Topology("arc operator requested on a closed curve".into()));
    }
    let n = mesh.len();
    let len = mesh.arc_length.ok_or_else(|| Error::Topology("arc without length".into()))?;
    let kv = k.value();
    let r_w = log_weights(2 * n);
    let h = PI / n as f64;
    let entries = fill(n, n, |i, j| {
        let t = mesh.params[i];
        let s = mesh.params[j];
        let ia = (i + 2 * n - j) % (2 * n);
        let ib = (i + j + 1) % (2 * n);
        let val = if i == j {
            let m1 = C64::new(-1.0 / (4.0 * PI), 0.0);
            let m2 = 0.25 * I
                - ((kv * len * t.sin().abs() * 0.25).ln() + EULER_GAMMA) / (2.0 * PI)
                + log_sin2(2.0 * t) / (4.0 * PI);
            (r_w[ia] + r_w[ib]) * m1 + h * m2
        } else {
            let r = mesh.nodes[i].dist(mesh.nodes[j]);
            let b = bessel01_unchecked(kv * r);
            let m1 = -b.j0 / (4.0 * PI);
            let m2 = 0.25 * I * b.h0 - m1 * (log_sin2(t - s) + log_sin2(t + s));
            (r_w[ia] + r_w[ib]) * m1 + h * m2
        };
        val * mesh.speed[j]
    });
    Ok(BoundaryOperatorMatrix {
        entries,
        kind: OperatorKind::ArcS,
        k,
    })
}

/// Values of `∂G/∂n_y`, `∂G/∂n_x` or `∂²G/∂n_x∂n_y` style kernels at a pair.
#[inline]
fn cross_kernel(kind: CrossKind, k: C64, x: Point, nx: Point, y: Point, ny: Point) -> C64 {
    let u = x - y;
    let r = u.norm();
    let b = bessel01_unchecked(k * r);
    match kind {
        CrossKind::Sl => 0.25 * I * b.h0,
        CrossKind::Dl => 0.25 * I * k * b.h1 * (u.dot(ny) / r),
        CrossKind::DnSl => -0.25 * I * k * b.h1 * (u.dot(nx) / r),
        CrossKind::DnDl => {
            let un = u.dot(nx) / r;
            let uy = u.dot(ny) / r;
            let kr = k * r;
            0.25 * I * k * k * (b.h0 - b.h1 / kr) * un * uy
                + 0.25 * I * k * b.h1 * (nx.dot(ny) - un * uy) / r
        }
    }
}

/// Smooth-kernel interaction matrix from `source` to `target` nodes.
pub fn assemble_cross(
    kind: CrossKind,
    source: &MeshedBoundary,
    target: &MeshedBoundary,
    k: Wavenumber,
) -> Result<BoundaryOperatorMatrix> {
    let mut dmin = f64::INFINITY;
    for x in &target.nodes {
        for y in &source.nodes {
            dmin = dmin.min(x.dist(*y));
        }
    }
    if !(dmin > DISJOINT_TOL) {
        return Err(Error::Geometry(format!(
            "cross interaction between curves {dmin:e} apart"
        )));
    }
    let kv = k.value();
    let entries = fill(target.len(), source.len(), |i, j| {
        cross_kernel(
            kind,
            kv,
            target.nodes[i],
            target.normals[i],
            source.nodes[j],
            source.normals[j],
        ) * source.weights[j]
    });
    let kind = match kind {
        CrossKind::Sl => OperatorKind::SlCross,
        CrossKind::Dl => OperatorKind::DlCross,
        CrossKind::DnSl => OperatorKind::DnSlCross,
        CrossKind::DnDl => OperatorKind::DnDlCross,
    };
    Ok(BoundaryOperatorMatrix { entries, kind, k })
}

/// Potential values with the indices of points that were too close to the
/// source curve. Those entries are NaN.
#[derive(Debug, Clone)]
pub struct PotentialValues {
    pub values: Vec<C64>,
    pub near: Vec<usize>,
}

/// Quadrature evaluation of a layer potential off the curve.
pub fn eval_potential(
    kind: PotentialKind,
    source: &MeshedBoundary,
    density: &[C64],
    points: &[Point],
    k: Wavenumber,
) -> Result<PotentialValues> {
    if density.len() != source.len() {
        return Err(Error::Partition(format!(
            "density of length {} on a mesh of {} nodes",
            density.len(),
            source.len()
        )));
    }
    let threshold = NEAR_FIELD_SPACINGS * source.mean_spacing();
    let mut near = Vec::new();
    let mut values = eval_potential_unchecked(kind, source, density, points, k);
    for (i, p) in points.iter().enumerate() {
        if source.min_distance_to(*p) < threshold {
            near.push(i);
            values[i] = C64::new(f64::NAN, f64::NAN);
        }
    }
    Ok(PotentialValues { values, near })
}

/// Quadrature evaluation without the near-field check.
pub fn eval_potential_unchecked(
    kind: PotentialKind,
    source: &MeshedBoundary,
    density: &[C64],
    points: &[Point],
    k: Wavenumber,
) -> Vec<C64> {
    let kv = k.value();
    let ck = match kind {
        PotentialKind::Sl => CrossKind::Sl,
        PotentialKind::Dl => CrossKind::Dl,
    };
    points
        .par_iter()
        .map(|&x| {
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..source.len() {
                if density[j] == C64::new(0.0, 0.0) {
                    continue;
                }
                acc += cross_kernel(ck, kv, x, Point::default(), source.nodes[j], source.normals[j])
                    * (source.weights[j] * density[j]);
            }
            acc
        })
        .collect()
}

/// `γ_k = e^{iπ/4}/√(8πk)`.
pub fn far_field_constant(k: f64) -> C64 {
    C64::from_polar(1.0 / (8.0 * PI * k).sqrt(), 0.25 * PI)
}

/// Far-field pattern of a layer potential at the given angles.
pub fn far_field(
    kind: PotentialKind,
    source: &MeshedBoundary,
    density: &[C64],
    angles: &[f64],
    k: Wavenumber,
) -> Result<Vec<C64>> {
    if !k.is_real() {
        return Err(Error::Unsupported("far field needs a real wavenumber".into()));
    }
    if density.len() != source.len() {
        return Err(Error::Partition("density length does not match mesh".into()));
    }
    let kr = k.value().re;
    let gamma = far_field_constant(kr);
    Ok(angles
        .iter()
        .map(|&th| {
            let d = Point::unit(th);
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..source.len() {
                let phase = C64::from_polar(1.0, -kr * d.dot(source.nodes[j]));
                let f = match kind {
                    PotentialKind::Sl => C64::new(1.0, 0.0),
                    PotentialKind::Dl => -I * kr * d.dot(source.normals[j]),
                };
                acc += f * phase * (source.weights[j] * density[j]);
            }
            gamma * acc
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_arc_mesh, build_box_mesh, build_circle_mesh, Rect, Scatterer};
    use crate::linalg::{matvec, max_abs, max_abs_diff, DenseLu};
    use crate::specfun::hankel1;

    fn k(v: f64) -> Wavenumber {
        Wavenumber::real(v).unwrap()
    }

    fn plane_wave_traces(mesh: &MeshedBoundary, kv: f64, d: Point) -> (Vec<C64>, Vec<C64>) {
        let u: Vec<C64> = mesh
            .nodes
            .iter()
            .map(|x| C64::from_polar(1.0, kv * d.dot(*x)))
            .collect();
        let du = mesh
            .normals
            .iter()
            .zip(&u)
            .map(|(n, v)| I * kv * d.dot(*n) * v)
            .collect();
        (u, du)
    }

    /// Interior Calderón residuals `S∂u − (½ + K)u` and `Nu − (−½ + Kᵀ)∂u`
    /// in the weighted L² norm. Nodes next to corners carry O(1) pointwise
    /// consistency errors with vanishing weight.
    fn calderon(mesh: &MeshedBoundary, kv: f64) -> (f64, f64) {
        let (u, du) = plane_wave_traces(mesh, kv, Point::unit(0.7));
        let s = assemble_self(OperatorKind::S, mesh, k(kv)).unwrap().entries;
        let kk = assemble_self(OperatorKind::K, mesh, k(kv)).unwrap().entries;
        let kt = assemble_self(OperatorKind::Kt, mesh, k(kv)).unwrap().entries;
        let nn = assemble_self(OperatorKind::N, mesh, k(kv)).unwrap().entries;
        let a = matvec(s.as_ref(), &du);
        let b = matvec(kk.as_ref(), &u);
        let wnorm = |r: Vec<f64>| -> f64 {
            r.iter().zip(&mesh.weights).map(|(r, w)| w * r * r).sum::<f64>().sqrt()
        };
        let r1 = wnorm(
            a.iter()
                .zip(&b)
                .zip(&u)
                .map(|((a, b), u)| (a - b - 0.5 * u).norm())
                .collect(),
        );
        let c = matvec(nn.as_ref(), &u);
        let e = matvec(kt.as_ref(), &du);
        let r2 = wnorm(
            c.iter()
                .zip(&e)
                .zip(&du)
                .map(|((c, e), d)| (c - e + 0.5 * d).norm())
                .collect(),
        );
        (r1, r2 / kv)
    }

    #[test]
    fn log_weights_integrate_log_exactly() {
        // ∫ ln(4 sin²((t−τ)/2)) cos(mτ) dτ = −(2π/m) cos(mt)
        let big_n = 32;
        let r = log_weights(big_n);
        for m in 1..10 {
            let approx: f64 = (0..big_n)
                .map(|j| r[j] * (m as f64 * 2.0 * PI * j as f64 / big_n as f64).cos())
                .sum();
            // the sum is evaluated at t_0 = 0 with R_{0−j} = R_{N−j}, symmetric
            assert!((approx + 2.0 * PI / m as f64).abs() < 1e-12);
        }
        let s0: f64 = r.iter().sum();
        assert!(s0.abs() < 1e-12);
    }

    #[test]
    fn single_layer_constant_eigenvalue_on_circle() {
        let mesh = build_circle_mesh(Point::default(), 1.0, 64).unwrap();
        let s = assemble_self(OperatorKind::S, &mesh, k(1.0)).unwrap().entries;
        let ones = vec![C64::new(1.0, 0.0); 64];
        let v = matvec(s.as_ref(), &ones);
        // (iπ/2) J₀(1) H₀⁽¹⁾(1)
        let expected = C64::new(-0.106_082_198_153_077_9, 0.919_744_445_473_465_3);
        for z in &v {
            assert!((z - expected).norm() < 1e-12, "{z}");
        }
        let h = hankel1(0, C64::new(1.0, 0.0)).unwrap();
        let oracle = I * PI / 2.0 * h.re * h;
        assert!((oracle - expected).norm() < 1e-14);
    }

    #[test]
    fn calderon_identities_on_circle_converge() {
        let c = Point::new(0.3, -0.2);
        let (a1, b1) = calderon(&build_circle_mesh(c, 1.0, 16).unwrap(), 3.0);
        let (a2, b2) = calderon(&build_circle_mesh(c, 1.0, 32).unwrap(), 3.0);
        assert!(a2 < 1e-9 && b2 < 1e-8, "{a2} {b2}");
        assert!(a1 / a2 > 8.0 && b1 / b2 > 8.0);
    }

    #[test]
    fn calderon_identities_on_graded_box_converge() {
        let r = Rect::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let (a1, b1) = calderon(&build_box_mesh(&r, 0, 16, 4).unwrap(), 5.0);
        let (a2, b2) = calderon(&build_box_mesh(&r, 0, 32, 4).unwrap(), 5.0);
        let (a3, b3) = calderon(&build_box_mesh(&r, 0, 64, 4).unwrap(), 5.0);
        assert!(a3 < a2 && a2 < a1 && b3 < b2 && b2 < b1, "{a1} {a2} {a3} / {b1} {b2} {b3}");
    }

    /// Max-norm residual of `S∂u − (½ + K)u` with refined sources.
    fn refined_calderon(n: usize) -> f64 {
        let r = Rect::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let coarse = build_box_mesh(&r, 0, n, 4).unwrap();
        let fine = build_box_mesh(&r, 0, 3 * n, 4).unwrap();
        let q = SelfQuadrature::refined(&coarse, fine).unwrap();
        let (u, du) = plane_wave_traces(&coarse, 5.0, Point::unit(0.7));
        let s = q.assemble(OperatorKind::S, k(5.0)).unwrap();
        let kk = q.assemble(OperatorKind::K, k(5.0)).unwrap();
        let a = matvec(s.as_ref(), &du);
        let b = matvec(kk.as_ref(), &u);
        let res: Vec<C64> = a.iter().zip(&b).zip(&u).map(|((a, b), u)| a - b - 0.5 * u).collect();
        max_abs(&res)
    }

    #[test]
    fn refined_quadrature_holds_pointwise_at_corners() {
        let (e16, e32) = (refined_calderon(16), refined_calderon(32));
        assert!(e32 < 1e-6 && e32 < e16, "{e16} {e32}");
    }

    #[test]
    fn refinement_rejects_non_nested_meshes() {
        let r = Rect::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let coarse = build_box_mesh(&r, 0, 8, 4).unwrap();
        assert!(SelfQuadrature::refined(&coarse, build_box_mesh(&r, 0, 16, 4).unwrap()).is_err());
        let other = Rect::new(0.0, 0.0, 2.0, 1.0).unwrap();
        assert!(SelfQuadrature::refined(&coarse, build_box_mesh(&other, 0, 24, 4).unwrap()).is_err());
    }

    #[test]
    fn single_layer_intertwines_with_double_layer_on_circle() {
        // S Kᵀ = K S on any closed curve
        let mesh = build_circle_mesh(Point::new(0.2, 0.1), 0.8, 48).unwrap();
        let s = assemble_self(OperatorKind::S, &mesh, k(3.0)).unwrap().entries;
        let kk = assemble_self(OperatorKind::K, &mesh, k(3.0)).unwrap().entries;
        let kt = assemble_self(OperatorKind::Kt, &mesh, k(3.0)).unwrap().entries;
        let d = &mul(s.as_ref(), kt.as_ref()) - &mul(kk.as_ref(), s.as_ref());
        assert!(crate::linalg::mat_max_abs(d.as_ref()) < 1e-10);
    }

    #[test]
    fn piece_interpolation_is_local_and_accurate() {
        let r = Rect::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let coarse = build_box_mesh(&r, 0, 32, 4).unwrap();
        let fine = build_box_mesh(&r, 0, 96, 4).unwrap();
        let f = |x: Point| C64::from_polar(1.0, 3.0 * x.x - 2.0 * x.y);
        let v: Vec<C64> = coarse.nodes.iter().map(|x| f(*x)).collect();
        let w = interpolate_pieces(&coarse, &fine, &v).unwrap();
        let exact: Vec<C64> = fine.nodes.iter().map(|x| f(*x)).collect();
        // the outermost fine nodes are extrapolated and carry tiny weights
        let e = max_abs_diff(&w[6..90], &exact[6..90]);
        assert!(e < 1e-6, "{e}");
        assert!(max_abs_diff(&w, &exact) < 1e-4);
        let mut spike = vec![C64::new(0.0, 0.0); coarse.len()];
        spike[0] = C64::new(1.0, 0.0);
        let w = interpolate_pieces(&coarse, &fine, &spike).unwrap();
        assert!(w[48..96].iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn hypersingular_annihilates_constants_in_laplace_limit() {
        let mesh = build_circle_mesh(Point::default(), 1.0, 32).unwrap();
        let ones = vec![C64::new(1.0, 0.0); 32];
        let mut last = f64::INFINITY;
        for &kv in &[1e-1, 1e-2, 1e-3] {
            let nn = assemble_self(OperatorKind::N, &mesh, k(kv)).unwrap().entries;
            let v = max_abs(&matvec(nn.as_ref(), &ones));
            assert!(v < last);
            last = v;
        }
        assert!(last < 1e-5);
    }

    #[test]
    fn single_layer_is_symmetric_after_weighting() {
        let mesh = build_circle_mesh(Point::default(), 1.3, 24).unwrap();
        let s = assemble_self(OperatorKind::S, &mesh, k(2.0)).unwrap().entries;
        // S_ij = A(t_i, t_j) |x'_j| with A symmetric; constant speed on a circle.
        for i in 0..24 {
            for j in 0..24 {
                assert!((s[(i, j)] - s[(j, i)]).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn open_arc_rejected_by_closed_assembly() {
        let seg = Scatterer::segment(Point::default(), Point::new(1.0, 0.0)).unwrap();
        let arc = build_arc_mesh(&seg, 16).unwrap();
        assert!(matches!(assemble_self(OperatorKind::S, &arc, k(1.0)), Err(Error::Topology(_))));
        let circ = build_circle_mesh(Point::default(), 1.0, 16).unwrap();
        assert!(matches!(assemble_arc_self_s(&circ, k(1.0)), Err(Error::Topology(_))));
    }

    #[test]
    fn cross_single_node_source_is_greens_function() {
        let mut src = build_circle_mesh(Point::default(), 1.0, 8).unwrap();
        src.nodes.truncate(1);
        src.normals.truncate(1);
        src.weights = vec![1.0];
        src.nodes[0] = Point::default();
        let mut tgt = src.clone();
        tgt.nodes[0] = Point::new(1.0, 0.0);
        let m = assemble_cross(CrossKind::Sl, &src, &tgt, k(1.0)).unwrap().entries;
        assert!((m[(0, 0)] - C64::new(-0.022_064_241_053_919_24, 0.191_299_421_639_491_65)).norm() < 1e-13);
        let ff = far_field(PotentialKind::Sl, &src, &[C64::new(1.0, 0.0)], &[0.0, 1.0, 2.0], k(3.0)).unwrap();
        for v in ff {
            assert!((v - far_field_constant(3.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn cross_reciprocity_and_disjointness() {
        let a = build_circle_mesh(Point::default(), 1.0, 16).unwrap();
        let b = build_circle_mesh(Point::new(3.0, 0.5), 0.5, 12).unwrap();
        let ab = assemble_cross(CrossKind::Sl, &a, &b, k(2.0)).unwrap().entries;
        let ba = assemble_cross(CrossKind::Sl, &b, &a, k(2.0)).unwrap().entries;
        for i in 0..12 {
            for j in 0..16 {
                let lhs = b.weights[i] * ab[(i, j)];
                let rhs = a.weights[j] * ba[(j, i)];
                assert!((lhs - rhs).norm() < 1e-15);
            }
        }
        assert!(matches!(
            assemble_cross(CrossKind::Sl, &a, &a, k(1.0)),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn cross_derivative_kernels_match_finite_differences() {
        let kv = C64::new(2.0, 0.3);
        let x = Point::new(0.4, 0.1);
        let y = Point::new(-0.5, 0.7);
        let nx = Point::unit(0.3);
        let ny = Point::unit(2.0);
        let h = 1e-5;
        let g = |x: Point, y: Point| cross_kernel(CrossKind::Sl, kv, x, nx, y, ny);
        let dny = (g(x, y + ny * h) - g(x, y - ny * h)) / (2.0 * h);
        assert!((dny - cross_kernel(CrossKind::Dl, kv, x, nx, y, ny)).norm() < 1e-8);
        let dnx = (g(x + nx * h, y) - g(x - nx * h, y)) / (2.0 * h);
        assert!((dnx - cross_kernel(CrossKind::DnSl, kv, x, nx, y, ny)).norm() < 1e-8);
        let dl = |x: Point| cross_kernel(CrossKind::Dl, kv, x, nx, y, ny);
        let dd = (dl(x + nx * h) - dl(x - nx * h)) / (2.0 * h);
        assert!((dd - cross_kernel(CrossKind::DnDl, kv, x, nx, y, ny)).norm() < 1e-7);
    }

    #[test]
    fn arc_matrix_commutes_with_reversal_and_tolerates_absorption() {
        let seg = Scatterer::segment(Point::new(-0.3, 0.2), Point::new(0.5, -0.1)).unwrap();
        let arc = build_arc_mesh(&seg, 16).unwrap();
        let s = assemble_arc_self_s(&arc, k(4.0)).unwrap().entries;
        for i in 0..16 {
            for j in 0..16 {
                assert!((s[(i, j)] - s[(15 - i, 15 - j)]).norm() < 1e-13);
            }
        }
        let sc = assemble_arc_self_s(&arc, Wavenumber::new(C64::new(4.0, 0.01)).unwrap())
            .unwrap()
            .entries;
        for i in 0..16 {
            for j in 0..16 {
                assert!(sc[(i, j)].is_finite());
            }
        }
    }

    fn arc_far_field(n: usize) -> Vec<C64> {
        let kv = 8.0;
        let seg = Scatterer::segment(Point::new(-0.2, 0.1), Point::new(0.2, -0.05)).unwrap();
        let arc = build_arc_mesh(&seg, n).unwrap();
        let s = assemble_arc_self_s(&arc, k(kv)).unwrap().entries;
        let d = Point::unit(0.4);
        let rhs: Vec<C64> = arc
            .nodes
            .iter()
            .map(|x| -C64::from_polar(1.0, kv * d.dot(*x)))
            .collect();
        let phi = DenseLu::new(s, "arc").unwrap().solve_vec(&rhs);
        let angles: Vec<f64> = (0..16).map(|i| i as f64 * PI / 8.0).collect();
        far_field(PotentialKind::Sl, &arc, &phi, &angles, k(kv)).unwrap()
    }

    #[test]
    fn arc_far_field_self_converges() {
        let f8 = arc_far_field(8);
        let f16 = arc_far_field(16);
        let f32 = arc_far_field(32);
        let f64_ = arc_far_field(64);
        let scale = max_abs(&f64_);
        let e1 = max_abs_diff(&f8, &f64_) / scale;
        let e2 = max_abs_diff(&f16, &f64_) / scale;
        let e3 = max_abs_diff(&f32, &f64_) / scale;
        assert!(e1 / e2 >= 4.0, "{e1} {e2} {e3}");
        assert!(e2 < 1e-12 && e3 < 1e-12, "{e2} {e3}");
    }

    #[test]
    fn potentials_report_near_points() {
        let mesh = build_circle_mesh(Point::default(), 1.0, 32).unwrap();
        let dens = vec![C64::new(1.0, 0.0); 32];
        let pts = [Point::new(3.0, 0.0), Point::new(1.01, 0.0)];
        let v = eval_potential(PotentialKind::Sl, &mesh, &dens, &pts, k(1.0)).unwrap();
        assert_eq!(v.near, vec![1]);
        assert!(v.values[0].is_finite() && v.values[1].is_nan());
        let z = eval_potential(PotentialKind::Dl, &mesh, &[C64::new(0.0, 0.0); 32], &pts[..1], k(1.0)).unwrap();
        assert_eq!(z.values[0], C64::new(0.0, 0.0));
    }

    #[test]
    fn exterior_double_layer_of_constant_vanishes_in_laplace_limit() {
        let mesh = build_circle_mesh(Point::default(), 1.0, 64).unwrap();
        let dens = vec![C64::new(1.0, 0.0); 64];
        let pts = [Point::new(2.5, 0.3)];
        let v = eval_potential(PotentialKind::Dl, &mesh, &dens, &pts, k(1e-4)).unwrap();
        assert!(v.values[0].norm() < 1e-6);
        let inside = eval_potential(PotentialKind::Dl, &mesh, &dens, &[Point::new(0.1, 0.0)], k(1e-4)).unwrap();
        assert!((inside.values[0] + 1.0).norm() < 1e-6);
    }

    #[test]
    fn far_field_rejects_complex_wavenumber() {
        let mesh = build_circle_mesh(Point::default(), 1.0, 8).unwrap();
        let kc = Wavenumber::new(C64::new(1.0, 0.1)).unwrap();
        assert!(matches!(
            far_field(PotentialKind::Sl, &mesh, &[C64::new(0.0, 0.0); 8], &[0.0], kc),
            Err(Error::Unsupported(_))
        ));
    }
}
