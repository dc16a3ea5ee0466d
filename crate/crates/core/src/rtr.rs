//! Subdomain boundary integral systems and their Robin-to-Robin maps.
//!
//! On a box `B` with outward normal `n` the incoming datum is
//! `f = ∂ₙu − iηu` and the map returns `∂ₙu + iηu = f + 2iη γᴰu`. Scatterer
//! unknowns are the Neumann traces `∂_{n_S}u` (closed curves, outward normal
//! of the obstacle) or the jump densities (open arcs).

use std::ops::Range;

use num_complex::Complex64 as C64;

use crate::bio::{
    assemble_arc_self_s, assemble_cross, assemble_self, CrossKind, OperatorKind, SelfQuadrature,
};
use crate::error::{Error, Result};
use crate::geometry::{
    build_box_mesh, build_outer_mesh, BoxGrid, EdgeLabel, MeshedBoundary, Point, Rect, Topology,
};
use crate::linalg::{identity, mul, mul_acc, CMat, DenseLu};
use crate::specfun::{bessel01, Wavenumber};

const I: C64 = C64 { re: 0.0, im: 1.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Refinement factor of the source quadrature on box boundaries.
pub const BOX_REFINEMENT: usize = 3;

pub type SegmentId = EdgeLabel;

/// Ordered labeled index ranges covering a boundary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryPartition {
    segments: Vec<(SegmentId, Range<usize>)>,
}

impl BoundaryPartition {
    pub fn new(segments: Vec<(SegmentId, Range<usize>)>) -> Result<Self> {
        let mut next = 0;
        for (id, r) in &segments {
            if r.start != next || r.end < r.start {
                return Err(Error::Partition(format!(
                    "segment {id:?} does not continue the partition at {next}"
                )));
            }
            next = r.end;
        }
        for (a, (ia, _)) in segments.iter().enumerate() {
            if segments[..a].iter().any(|(ib, _)| ib == ia) {
                return Err(Error::Partition(format!("segment {ia:?} listed twice")));
            }
        }
        Ok(Self { segments })
    }

    /// Builds a partition from consecutive segment lengths.
    pub fn from_lengths(parts: impl IntoIterator<Item = (SegmentId, usize)>) -> Result<Self> {
        let mut start = 0;
        let segments = parts
            .into_iter()
            .map(|(id, n)| {
                let r = start..start + n;
                start += n;
                (id, r)
            })
            .collect();
        Self::new(segments)
    }

    pub fn len(&self) -> usize {
        self.segments.last().map_or(0, |s| s.1.end)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn segments(&self) -> &[(SegmentId, Range<usize>)] {
        &self.segments
    }

    pub fn find(&self, id: SegmentId) -> Result<Range<usize>> {
        self.segments
            .iter()
            .find(|(s, _)| *s == id)
            .map(|(_, r)| r.clone())
            .ok_or_else(|| Error::Partition(format!("segment {id:?} not in partition")))
    }

    pub fn contains(&self, id: SegmentId) -> bool {
        self.segments.iter().any(|(s, _)| *s == id)
    }
}

/// Discrete Robin-to-Robin map on a (possibly merged) boundary.
#[derive(Debug, Clone)]
pub struct RtrMap {
    pub matrix: CMat,
    pub partition: BoundaryPartition,
    pub eta: f64,
    pub weights: Vec<f64>,
    pub nodes: Vec<Point>,
    pub normals: Vec<Point>,
}

impl RtrMap {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, g: &[C64]) -> Result<Vec<C64>> {
        if g.len() != self.dim() {
            return Err(Error::Partition(format!(
                "datum of length {} for a map of dimension {}",
                g.len(),
                self.dim()
            )));
        }
        Ok(crate::linalg::matvec(self.matrix.as_ref(), g))
    }

    /// `|‖𝒮g‖_W − ‖g‖_W| / ‖g‖_W` in the quadrature-weighted norm.
    pub fn unitarity_defect(&self, g: &[C64]) -> Result<f64> {
        let out = self.apply(g)?;
        let wn = |v: &[C64]| -> f64 {
            v.iter()
                .zip(&self.weights)
                .map(|(z, w)| w * z.norm_sqr())
                .sum::<f64>()
                .sqrt()
        };
        let a = wn(g);
        Ok((wn(&out) - a).abs() / a)
    }
}

/// What the rows of a trace map describe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatumKind {
    NeumannTrace,
    JumpDensity,
}

/// Map from boundary Robin data to the density on one scatterer.
#[derive(Debug, Clone)]
pub struct TraceMap {
    pub matrix: CMat,
    /// Global scatterer index.
    pub scatterer: usize,
    pub datum: DatumKind,
}

/// Formulation constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coupling {
    pub k: Wavenumber,
    pub eta: f64,
    /// Complex shift of the regularizing wavenumber `κ = k + iε`.
    pub eps: f64,
    /// Burton–Miller coupling on closed scatterers.
    pub mu: f64,
}

impl Coupling {
    /// `η = k`, `ε = 0.4 k^{1/3}`, `μ = max(k, 1)`.
    pub fn defaults(k: f64) -> Result<Self> {
        let wk = Wavenumber::real(k)?;
        Ok(Self {
            k: wk,
            eta: k,
            eps: 0.4 * k.cbrt(),
            mu: k.max(1.0),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) {
            return Err(Error::Parameter(format!("eta must be positive, got {}", self.eta)));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Parameter(format!("epsilon must be positive, got {}", self.eps)));
        }
        if !(self.mu != 0.0 && self.mu.is_finite()) {
            return Err(Error::Parameter("mu must be a nonzero real".into()));
        }
        if !self.k.is_real() {
            return Err(Error::Parameter("subdomain wavenumber must be real".into()));
        }
        Ok(())
    }

    pub fn kappa(&self) -> Result<Wavenumber> {
        self.k.shifted(self.eps)
    }
}

/// A graded box boundary together with its source quadrature.
#[derive(Debug, Clone)]
pub struct BoxBoundary {
    pub mesh: MeshedBoundary,
    pub quadrature: SelfQuadrature,
}

impl BoxBoundary {
    pub fn leaf(rect: &Rect, box_index: usize, n_per_edge: usize, p: u32) -> Result<Self> {
        let mesh = build_box_mesh(rect, box_index, n_per_edge, p)?;
        let fine = build_box_mesh(rect, box_index, BOX_REFINEMENT * n_per_edge, p)?;
        let quadrature = SelfQuadrature::refined(&mesh, fine)?;
        Ok(Self { mesh, quadrature })
    }

    pub fn outer(grid: &BoxGrid, n_per_edge: usize, p: u32) -> Result<Self> {
        let mesh = build_outer_mesh(grid, n_per_edge, p)?;
        let fine = build_outer_mesh(grid, BOX_REFINEMENT * n_per_edge, p)?;
        let quadrature = SelfQuadrature::refined(&mesh, fine)?;
        Ok(Self { mesh, quadrature })
    }

    pub fn partition(&self) -> Result<BoundaryPartition> {
        BoundaryPartition::new(self.mesh.pieces.clone())
    }
}

/// The box-boundary operator products shared by the interior and exterior
/// formulations.
struct BoxOperators {
    s: CMat,
    k: CMat,
    s_kappa: CMat,
    /// `S_κ Kᵀ_k = K_κ S_κ + S_κ (Kᵀ_k − Kᵀ_κ)`.
    s_kappa_kt: CMat,
    /// `S_κ N_k = −¼I + K_κ² + S_κ (N_k − N_κ)`.
    s_kappa_n: CMat,
}

impl BoxOperators {
    fn new(q: &SelfQuadrature, c: &Coupling) -> Result<Self> {
        let kappa = c.kappa()?;
        let s = q.assemble(OperatorKind::S, c.k)?;
        let k = q.assemble(OperatorKind::K, c.k)?;
        let kt = q.assemble(OperatorKind::Kt, c.k)?;
        let s_kappa = q.assemble(OperatorKind::S, kappa)?;
        let k_kappa = q.assemble(OperatorKind::K, kappa)?;
        let kt_kappa = q.assemble(OperatorKind::Kt, kappa)?;
        let diff = q.hypersingular_difference(c.k, kappa);

        let mut s_kappa_kt = mul(k_kappa.as_ref(), s_kappa.as_ref());
        mul_acc(s_kappa_kt.as_mut(), s_kappa.as_ref(), (&kt - &kt_kappa).as_ref(), ONE);
        let mut s_kappa_n = mul(s_kappa.as_ref(), diff.as_ref());
        mul_acc(s_kappa_n.as_mut(), k_kappa.as_ref(), k_kappa.as_ref(), ONE);
        for i in 0..q.len() {
            s_kappa_n[(i, i)] -= 0.25;
        }
        Ok(Self {
            s,
            k,
            s_kappa,
            s_kappa_kt,
            s_kappa_n,
        })
    }
}

/// Dense block system of one subdomain.
#[derive(Debug)]
pub struct SubdomainSystem {
    /// `[[𝒜_BB, 𝒜_BS], [𝒜_SB, 𝒜_SS]]`.
    pub matrix: CMat,
    /// Maps the incoming Robin datum on `∂B` to the system right-hand side.
    pub rhs: CMat,
    pub boundary_len: usize,
    /// Row ranges of the scatterer unknowns with their global indices.
    pub scatterers: Vec<(usize, Range<usize>, Topology)>,
    pub eta: f64,
    pub partition: BoundaryPartition,
    pub weights: Vec<f64>,
    pub nodes: Vec<Point>,
    pub normals: Vec<Point>,
}

/// Assembles the combined-field system of a box and the scatterers inside
/// it. `scatterers` pairs global scatterer indices with their meshes.
pub fn assemble_subdomain_system(
    boundary: &BoxBoundary,
    scatterers: &[(usize, MeshedBoundary)],
    c: &Coupling,
) -> Result<SubdomainSystem> {
    c.validate()?;
    let mesh = &boundary.mesh;
    let nb = mesh.len();
    let tol = 0.5 * mesh.mean_spacing().min(1.0) * 1e-6;
    for (idx, sm) in scatterers {
        if sm.nodes.iter().any(|x| !inside_polygon_strict(mesh, *x, tol)) {
            return Err(Error::Geometry(format!(
                "scatterer {idx} is not strictly inside its box"
            )));
        }
    }
    let mut ranges = Vec::with_capacity(scatterers.len());
    let mut total = nb;
    for (idx, sm) in scatterers {
        ranges.push((*idx, total..total + sm.len(), sm.topology));
        total += sm.len();
    }
    let ops = BoxOperators::new(&boundary.quadrature, c)?;
    let ie = I * c.eta;
    let imu = I * c.mu;

    let mut a = CMat::zeros(total, total);
    let mut rhs = CMat::zeros(total, nb);

    // ∂B rows: Dirichlet trace minus 2S_κ times the Neumann trace.
    for j in 0..nb {
        for i in 0..nb {
            let d = if i == j { 0.5 } else { 0.0 };
            a[(i, j)] = d + ops.k[(i, j)] - ie * ops.s[(i, j)] - ie * ops.s_kappa[(i, j)]
                + 2.0 * ie * ops.s_kappa_kt[(i, j)]
                - 2.0 * ops.s_kappa_n[(i, j)];
            rhs[(i, j)] = ops.s[(i, j)] + ops.s_kappa[(i, j)] - 2.0 * ops.s_kappa_kt[(i, j)];
        }
    }
    for ((_, sm), (_, r, _)) in scatterers.iter().zip(&ranges) {
        let sl = assemble_cross(CrossKind::Sl, sm, mesh, c.k)?.entries;
        let dnsl = assemble_cross(CrossKind::DnSl, sm, mesh, c.k)?.entries;
        let mut blk = sl;
        mul_acc(blk.as_mut(), ops.s_kappa.as_ref(), dnsl.as_ref(), C64::new(-2.0, 0.0));
        a.as_mut().submatrix_mut(0, r.start, nb, r.len()).copy_from(&blk);
    }

    // Scatterer rows.
    for ((_, tm), (_, rt, topo)) in scatterers.iter().zip(&ranges) {
        let closed = *topo != Topology::OpenArc;
        let sl = assemble_cross(CrossKind::Sl, mesh, tm, c.k)?.entries;
        let dl = assemble_cross(CrossKind::Dl, mesh, tm, c.k)?.entries;
        let (row_b, row_rhs) = if closed {
            let dnsl = assemble_cross(CrossKind::DnSl, mesh, tm, c.k)?.entries;
            let dndl = assemble_cross(CrossKind::DnDl, mesh, tm, c.k)?.entries;
            let rb = CMat::from_fn(tm.len(), nb, |i, j| {
                -ie * dnsl[(i, j)] + dndl[(i, j)] - imu * (-ie * sl[(i, j)] + dl[(i, j)])
            });
            let rr = CMat::from_fn(tm.len(), nb, |i, j| dnsl[(i, j)] - imu * sl[(i, j)]);
            (rb, rr)
        } else {
            let rb = CMat::from_fn(tm.len(), nb, |i, j| -ie * sl[(i, j)] + dl[(i, j)]);
            (rb, sl)
        };
        a.as_mut().submatrix_mut(rt.start, 0, rt.len(), nb).copy_from(&row_b);
        rhs.as_mut().submatrix_mut(rt.start, 0, rt.len(), nb).copy_from(&row_rhs);

        for ((_, sm), (_, rs, _)) in scatterers.iter().zip(&ranges) {
            let blk = if rs == rt {
                if closed {
                    let s = assemble_self(OperatorKind::S, tm, c.k)?.entries;
                    let kt = assemble_self(OperatorKind::Kt, tm, c.k)?.entries;
                    CMat::from_fn(tm.len(), tm.len(), |i, j| {
                        let d = if i == j { 0.5 } else { 0.0 };
                        d + kt[(i, j)] - imu * s[(i, j)]
                    })
                } else {
                    assemble_arc_self_s(tm, c.k)?.entries
                }
            } else {
                let sl = assemble_cross(CrossKind::Sl, sm, tm, c.k)?.entries;
                if closed {
                    let dnsl = assemble_cross(CrossKind::DnSl, sm, tm, c.k)?.entries;
                    CMat::from_fn(tm.len(), sm.len(), |i, j| dnsl[(i, j)] - imu * sl[(i, j)])
                } else {
                    sl
                }
            };
            a.as_mut().submatrix_mut(rt.start, rs.start, rt.len(), rs.len()).copy_from(&blk);
        }
    }

    Ok(SubdomainSystem {
        matrix: a,
        rhs,
        boundary_len: nb,
        scatterers: ranges,
        eta: c.eta,
        partition: boundary.partition()?,
        weights: mesh.weights.clone(),
        nodes: mesh.nodes.clone(),
        normals: mesh.normals.clone(),
    })
}

/// Strict interior test for a closed polygonal mesh with margin `tol`.
fn inside_polygon_strict(mesh: &MeshedBoundary, x: Point, tol: f64) -> bool {
    let mut winding = 0.0;
    let n = mesh.len();
    for i in 0..n {
        let a = mesh.nodes[i] - x;
        let b = mesh.nodes[(i + 1) % n] - x;
        winding += a.cross(b).atan2(a.dot(b));
    }
    winding.abs() > std::f64::consts::PI && mesh.min_distance_to(x) > tol
}

/// RtR map, trace maps and condition estimate of one subdomain.
#[derive(Debug, Clone)]
pub struct SubdomainMaps {
    pub map: RtrMap,
    pub traces: Vec<TraceMap>,
    pub condition: f64,
}

/// `𝒮 = I + 2iη X_B` and `Y = X_S` where `X = 𝒜⁻¹ · RHS`, from one
/// factorization of the system.
pub fn rtr_interior_subdomain(system: SubdomainSystem) -> Result<SubdomainMaps> {
    let SubdomainSystem {
        matrix,
        rhs,
        boundary_len: nb,
        scatterers,
        eta,
        partition,
        weights,
        nodes,
        normals,
    } = system;
    let lu = DenseLu::new(matrix, "subdomain system")?;
    let condition = lu.cond1_estimate();
    if !condition.is_finite() {
        return Err(Error::Conditioning {
            context: "subdomain system".into(),
            estimate: condition,
        });
    }
    let x = lu.solve(rhs.as_ref());
    let two_ie = 2.0 * I * eta;
    let mut s = identity(nb);
    for j in 0..nb {
        for i in 0..nb {
            s[(i, j)] += two_ie * x[(i, j)];
        }
    }
    let traces = scatterers
        .iter()
        .map(|(idx, r, topo)| TraceMap {
            matrix: x.as_ref().submatrix(r.start, 0, r.len(), nb).to_owned(),
            scatterer: *idx,
            datum: if *topo == Topology::OpenArc {
                DatumKind::JumpDensity
            } else {
                DatumKind::NeumannTrace
            },
        })
        .collect();
    Ok(SubdomainMaps {
        map: RtrMap {
            matrix: s,
            partition,
            eta,
            weights,
            nodes,
            normals,
        },
        traces,
        condition,
    })
}

/// Exterior RtR map on the outer boundary: maps `(∂ₙ − iη)u` to
/// `(∂ₙ + iη)u` for radiating solutions outside, `n` pointing outward.
pub fn rtr_exterior(boundary: &BoxBoundary, c: &Coupling) -> Result<(RtrMap, f64)> {
    c.validate()?;
    let nb = boundary.mesh.len();
    let ops = BoxOperators::new(&boundary.quadrature, c)?;
    let ie = I * c.eta;
    let mut a = CMat::zeros(nb, nb);
    let mut rhs = CMat::zeros(nb, nb);
    for j in 0..nb {
        for i in 0..nb {
            let d = if i == j { 0.5 } else { 0.0 };
            a[(i, j)] = d - ops.k[(i, j)] + ie * ops.s[(i, j)] + ie * ops.s_kappa[(i, j)]
                + 2.0 * ie * ops.s_kappa_kt[(i, j)]
                - 2.0 * ops.s_kappa_n[(i, j)];
            rhs[(i, j)] = -(ops.s[(i, j)] + ops.s_kappa[(i, j)] + 2.0 * ops.s_kappa_kt[(i, j)]);
        }
    }
    let lu = DenseLu::new(a, "exterior system")?;
    let condition = lu.cond1_estimate();
    let x = lu.solve(rhs.as_ref());
    let mut s = identity(nb);
    let two_ie = 2.0 * ie;
    for j in 0..nb {
        for i in 0..nb {
            s[(i, j)] += two_ie * x[(i, j)];
        }
    }
    let mesh = &boundary.mesh;
    Ok((
        RtrMap {
            matrix: s,
            partition: boundary.partition()?,
            eta: c.eta,
            weights: mesh.weights.clone(),
            nodes: mesh.nodes.clone(),
            normals: mesh.normals.clone(),
        },
        condition,
    ))
}

/// Robin data `((∂ₙ − iη)G, (∂ₙ + iη)G)` of `G(x) = (i/4)H₀⁽¹⁾(k|x − x₀|)`.
pub fn point_source_robin(
    nodes: &[Point],
    normals: &[Point],
    k: f64,
    eta: f64,
    source: Point,
) -> Result<(Vec<C64>, Vec<C64>)> {
    let mut minus = Vec::with_capacity(nodes.len());
    let mut plus = Vec::with_capacity(nodes.len());
    for (x, n) in nodes.iter().zip(normals) {
        let d = *x - source;
        let r = d.norm();
        let b = bessel01(C64::new(k * r, 0.0))?;
        let u = 0.25 * I * b.h0;
        let du = -0.25 * I * k * b.h1 * (d.dot(*n) / r);
        minus.push(du - I * eta * u);
        plus.push(du + I * eta * u);
    }
    Ok((minus, plus))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_scatterer_mesh, Scatterer};
    use crate::linalg::{max_abs, max_abs_diff};

    fn unit_box(n: usize) -> BoxBoundary {
        BoxBoundary::leaf(&Rect::new(0.0, 0.0, 1.0, 1.0).unwrap(), 0, n, 4).unwrap()
    }

    fn interior_error(n: usize) -> f64 {
        let c = Coupling::defaults(5.0).unwrap();
        let b = unit_box(n);
        let sys = assemble_subdomain_system(&b, &[], &c).unwrap();
        let maps = rtr_interior_subdomain(sys).unwrap();
        let (gm, gp) =
            point_source_robin(&b.mesh.nodes, &b.mesh.normals, 5.0, c.eta, Point::new(2.0, 0.5))
                .unwrap();
        max_abs_diff(&maps.map.apply(&gm).unwrap(), &gp) / max_abs(&gp)
    }

    #[test]
    fn interior_map_reproduces_point_source() {
        let e16 = interior_error(16);
        let e32 = interior_error(32);
        assert!(e32 < 1e-6, "{e16} {e32}");
        assert!(e16 / e32 >= 4.0);
    }

    #[test]
    fn exterior_map_reproduces_point_source() {
        let c = Coupling::defaults(5.0).unwrap();
        let b = unit_box(32);
        let (map, cond) = rtr_exterior(&b, &c).unwrap();
        assert!(cond < 1e3, "{cond}");
        let (gm, gp) =
            point_source_robin(&b.mesh.nodes, &b.mesh.normals, 5.0, c.eta, Point::new(0.3, 0.6))
                .unwrap();
        let e = max_abs_diff(&map.apply(&gm).unwrap(), &gp) / max_abs(&gp);
        assert!(e < 1e-6, "{e}");
        let zero = map.apply(&vec![C64::new(0.0, 0.0); map.dim()]).unwrap();
        assert_eq!(max_abs(&zero), 0.0);
    }

    #[test]
    fn empty_box_system_is_boundary_block_only() {
        let c = Coupling::defaults(5.0).unwrap();
        let b = unit_box(16);
        let sys = assemble_subdomain_system(&b, &[], &c).unwrap();
        assert_eq!(sys.matrix.nrows(), 64);
        assert_eq!(sys.rhs.ncols(), 64);
        assert!(sys.scatterers.is_empty());
    }

    fn circle_box(n: usize, ns: usize) -> (BoxBoundary, MeshedBoundary) {
        let b = unit_box(n);
        let circ = Scatterer::circle(Point::new(0.5, 0.5), 0.2).unwrap();
        (b, build_scatterer_mesh(&circ, ns).unwrap())
    }

    #[test]
    fn block_dimensions_follow_mesh_sizes() {
        let c = Coupling::defaults(5.0).unwrap();
        let (b, m) = circle_box(16, 24);
        let sys = assemble_subdomain_system(&b, &[(7, m)], &c).unwrap();
        assert_eq!(sys.matrix.nrows(), 64 + 24);
        assert_eq!(sys.scatterers[0].0, 7);
        assert_eq!(sys.scatterers[0].1, 64..88);
    }

    #[test]
    fn one_circle_system_condition_stays_bounded() {
        let c = Coupling::defaults(5.0).unwrap();
        let mut conds = Vec::new();
        for (n, ns) in [(16, 32), (32, 64), (64, 128)] {
            let (b, m) = circle_box(n, ns);
            let sys = assemble_subdomain_system(&b, &[(0, m)], &c).unwrap();
            let lu = DenseLu::new(sys.matrix, "t").unwrap();
            conds.push(lu.cond1_estimate());
        }
        assert!(conds.iter().all(|&x| x < 1e3), "{conds:?}");
    }

    #[test]
    fn scatterer_must_be_inside() {
        let c = Coupling::defaults(5.0).unwrap();
        let b = unit_box(16);
        let circ = Scatterer::circle(Point::new(0.95, 0.5), 0.2).unwrap();
        let m = build_scatterer_mesh(&circ, 16).unwrap();
        assert!(matches!(
            assemble_subdomain_system(&b, &[(0, m)], &c),
            Err(Error::Geometry(_))
        ));
    }
}
