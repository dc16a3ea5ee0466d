//! The outer solve on `∂B₀`, recovery of scatterer data, and field
//! evaluation.

use std::time::Instant;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bio::{eval_potential, eval_potential_unchecked, far_field, interpolate_pieces, PotentialKind, PotentialValues};
use crate::error::{Error, Result};
use crate::geometry::{build_box_mesh, build_outer_mesh, build_scatterer_mesh, BoxGrid, MeshedBoundary, Point};
use crate::linalg::{gather, matvec, max_abs, CMat, DenseLu};
use crate::merge::{back_substitute, hierarchical_merge, InterfaceData, MergeTree, DEFAULT_CONDITION_BOUND};
use crate::oracle::FarFieldSamples;
use crate::rtr::{
    assemble_subdomain_system, rtr_exterior, rtr_interior_subdomain, BoxBoundary, Coupling, DatumKind, RtrMap,
    SubdomainMaps,
};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Relative disagreement between the two density routes that is treated as
/// an internal failure.
pub const ROUTE_TOLERANCE: f64 = 1e-6;

/// RCS floor in dB.
pub const RCS_FLOOR_DB: f64 = -200.0;

/// A plane wave `e^{ik d·x}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncidentField {
    pub k: f64,
    pub direction: Point,
}

impl IncidentField {
    pub fn new(k: f64, direction: Point) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::Parameter(format!("incident wavenumber must be positive, got {k}")));
        }
        if (direction.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::Parameter(format!(
                "incident direction has length {}",
                direction.norm()
            )));
        }
        Ok(Self { k, direction })
    }

    pub fn plane(k: f64, angle: f64) -> Result<Self> {
        Self::new(k, Point::unit(angle))
    }

    pub fn value(&self, x: Point) -> C64 {
        C64::from_polar(1.0, self.k * self.direction.dot(x))
    }

    pub fn normal_derivative(&self, x: Point, n: Point) -> C64 {
        I * self.k * self.direction.dot(n) * self.value(x)
    }
}

/// Nodal `(∂ₙ − iη)u^{inc}` and `(∂ₙ + iη)u^{inc}`.
pub fn incident_traces(
    field: &IncidentField,
    nodes: &[Point],
    normals: &[Point],
    eta: f64,
) -> (Vec<C64>, Vec<C64>) {
    nodes
        .iter()
        .zip(normals)
        .map(|(&x, &n)| {
            let u = field.value(x);
            let du = field.normal_derivative(x, n);
            (du - I * eta * u, du + I * eta * u)
        })
        .unzip()
}

/// Mesh sizes of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Discretization {
    pub n_per_edge: usize,
    pub n_per_scatterer: usize,
    pub grading: u32,
}

/// Wall-clock seconds of the precomputation stages.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    /// Leaf maps and the exterior map.
    pub offline: f64,
    /// Merge tree and the reduced outer factorization.
    pub elimination: f64,
}

/// Reject thresholds for the condition estimates checked during `build`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConditionBounds {
    /// Every `𝒮ℓ_{CC}𝒮ʲ_{CC} − I` in the merge tree.
    pub merge: f64,
    /// `𝒮^{ext} − 𝒮^{int}` on the outer boundary. Its estimate grows with
    /// the boundary resolution, so it gets a looser default.
    pub reduced: f64,
}

pub const DEFAULT_REDUCED_CONDITION_BOUND: f64 = 1e12;

impl Default for ConditionBounds {
    fn default() -> Self {
        Self {
            merge: DEFAULT_CONDITION_BOUND,
            reduced: DEFAULT_REDUCED_CONDITION_BOUND,
        }
    }
}

/// Everything that does not depend on the incident field.
#[derive(Debug)]
pub struct DdSolver {
    pub grid: BoxGrid,
    pub coupling: Coupling,
    pub disc: Discretization,
    /// Scatterer meshes in global order: box by box, then as listed.
    pub scatterer_meshes: Vec<MeshedBoundary>,
    /// Box of each scatterer.
    pub scatterer_box: Vec<usize>,
    pub leaf_meshes: Vec<MeshedBoundary>,
    pub outer_mesh: MeshedBoundary,
    pub tree: MergeTree,
    pub exterior: RtrMap,
    pub exterior_condition: f64,
    /// Root-map index of each outer-mesh node.
    root_index: Vec<usize>,
    /// `𝒮^{int}` in outer-mesh order.
    interior_outer: CMat,
    reduced: DenseLu,
    pub reduced_condition: f64,
    factorizations: usize,
    pub timings: StageTimings,
}

/// Per-scatterer density recovered by the solve.
#[derive(Debug, Clone, PartialEq)]
pub struct ScattererDensity {
    pub scatterer: usize,
    pub datum: DatumKind,
    pub values: Vec<C64>,
}

/// Result of one incidence.
#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub incident: Option<IncidentField>,
    /// `(∂ₙ₀ − iη)u^s` on the outer nodes.
    pub g_minus: Vec<C64>,
    /// `(∂ₙ₀ + iη)u^s` on the outer nodes.
    pub g_plus: Vec<C64>,
    pub dirichlet: Vec<C64>,
    pub neumann: Vec<C64>,
    /// `(∂ₙ₀ − iη)(u^s + u^{inc})` on the outer nodes.
    pub interior_datum: Vec<C64>,
    pub densities: Vec<ScattererDensity>,
    /// Incoming Robin datum of every leaf, in leaf-mesh order.
    pub leaf_incoming: Vec<Vec<C64>>,
    pub interfaces: Vec<InterfaceData>,
    /// Relative max difference between the merged-Y and the
    /// back-substitution densities.
    pub route_discrepancy: f64,
    /// Relative residual of the reduced outer system.
    pub outer_residual: f64,
    pub solution_seconds: f64,
}

impl DdSolver {
    /// Builds every leaf map, the exterior map and the merge tree, and
    /// factors `𝒮^{ext} − 𝒮^{int}` once.
    pub fn build(grid: &BoxGrid, coupling: Coupling, disc: Discretization, bounds: ConditionBounds) -> Result<Self> {
        coupling.validate()?;
        if !coupling.k.is_real() {
            return Err(Error::Unsupported("the outer solve needs a real wavenumber".into()));
        }
        if disc.n_per_edge == 0 || disc.n_per_scatterer == 0 {
            return Err(Error::Parameter("mesh sizes must be positive".into()));
        }
        grid.validate(0.0)?;
        let t0 = Instant::now();
        let mut scatterer_meshes = Vec::with_capacity(grid.total_scatterers());
        let mut scatterer_box = Vec::with_capacity(grid.total_scatterers());
        let mut per_box: Vec<Vec<(usize, MeshedBoundary)>> = vec![Vec::new(); grid.num_boxes()];
        for (b, list) in grid.scatterers.iter().enumerate() {
            for s in list {
                let m = build_scatterer_mesh(s, disc.n_per_scatterer)?;
                per_box[b].push((scatterer_meshes.len(), m.clone()));
                scatterer_meshes.push(m);
                scatterer_box.push(b);
            }
        }
        let built: Vec<(MeshedBoundary, SubdomainMaps)> = (0..grid.num_boxes())
            .into_par_iter()
            .map(|b| {
                let bb = BoxBoundary::leaf(&grid.box_rect(b), b, disc.n_per_edge, disc.grading)?;
                let sys = assemble_subdomain_system(&bb, &per_box[b], &coupling)?;
                Ok((bb.mesh, rtr_interior_subdomain(sys)?))
            })
            .collect::<Result<_>>()?;
        let (leaf_meshes, leaves): (Vec<_>, Vec<_>) = built.into_iter().unzip();
        let outer = BoxBoundary::outer(grid, disc.n_per_edge, disc.grading)?;
        let (exterior, exterior_condition) = rtr_exterior(&outer, &coupling)?;
        let offline = t0.elapsed().as_secs_f64();

        let t1 = Instant::now();
        let tree = hierarchical_merge(grid, leaves, bounds.merge)?;
        let root_index = outer_to_root(&outer.mesh, &tree.root_map)?;
        let interior_outer = gather(tree.root_map.matrix.as_ref(), &root_index, &root_index);
        let reduced_matrix = &exterior.matrix - &interior_outer;
        let reduced = DenseLu::new(reduced_matrix, "reduced outer system")?;
        let reduced_condition = reduced.cond1_estimate();
        if !(reduced_condition.is_finite() && reduced_condition < bounds.reduced) {
            return Err(Error::Conditioning {
                context: "reduced outer system".into(),
                estimate: reduced_condition,
            });
        }
        let elimination = t1.elapsed().as_secs_f64();
        Ok(Self {
            grid: grid.clone(),
            coupling,
            disc,
            scatterer_meshes,
            scatterer_box,
            leaf_meshes,
            outer_mesh: outer.mesh,
            tree,
            exterior,
            exterior_condition,
            root_index,
            interior_outer,
            reduced,
            reduced_condition,
            factorizations: 1,
            timings: StageTimings { offline, elimination },
        })
    }

    pub fn eta(&self) -> f64 {
        self.coupling.eta
    }

    pub fn k(&self) -> f64 {
        self.coupling.k.value().re
    }

    /// Dense factorizations done after the leaf stage. Solves never add any.
    pub fn factorization_count(&self) -> usize {
        self.factorizations
    }

    pub fn solve(&self, field: &IncidentField) -> Result<SolveOutput> {
        if (field.k - self.k()).abs() > 1e-14 * self.k() {
            return Err(Error::Parameter(format!(
                "incident wavenumber {} differs from the solver's {}",
                field.k,
                self.k()
            )));
        }
        let (m, p) = incident_traces(field, &self.outer_mesh.nodes, &self.outer_mesh.normals, self.eta());
        let mut out = self.solve_traces(&m, &p)?;
        out.incident = Some(*field);
        Ok(out)
    }

    /// Outer solve for incident Robin traces given on the outer nodes.
    pub fn solve_traces(&self, inc_minus: &[C64], inc_plus: &[C64]) -> Result<SolveOutput> {
        let t0 = Instant::now();
        let n = self.outer_mesh.len();
        if inc_minus.len() != n || inc_plus.len() != n {
            return Err(Error::Partition(format!("incident traces must have {n} entries")));
        }
        let eta = self.eta();
        let s_inc = matvec(self.interior_outer.as_ref(), inc_minus);
        let rhs: Vec<C64> = s_inc.iter().zip(inc_plus).map(|(a, b)| a - b).collect();
        let g_minus = self.reduced.solve_vec(&rhs);
        let g_plus = matvec(self.exterior.matrix.as_ref(), &g_minus);
        let lhs: Vec<C64> = g_plus
            .iter()
            .zip(&matvec(self.interior_outer.as_ref(), &g_minus))
            .map(|(a, b)| a - b)
            .collect();
        let res: Vec<C64> = lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect();
        let outer_residual = max_abs(&res) / max_abs(&rhs).max(f64::MIN_POSITIVE);
        let (dirichlet, neumann) = cauchy_from_robin(&g_minus, &g_plus, eta);
        let interior_datum: Vec<C64> = g_minus.iter().zip(inc_minus).map(|(a, b)| a + b).collect();

        let mut root_datum = vec![C64::new(0.0, 0.0); n];
        for (i, &r) in self.root_index.iter().enumerate() {
            root_datum[r] = interior_datum[i];
        }
        let route_a: Vec<ScattererDensity> = self
            .tree
            .root_traces
            .iter()
            .map(|t| ScattererDensity {
                scatterer: t.scatterer,
                datum: t.datum,
                values: matvec(t.matrix.as_ref(), &root_datum),
            })
            .collect();
        let back = back_substitute(&self.tree, &root_datum)?;
        let mut route_a = route_a;
        route_a.sort_by_key(|d| d.scatterer);
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        for (b, leaf) in self.tree.leaves.iter().enumerate() {
            for t in &leaf.traces {
                let vb = matvec(t.matrix.as_ref(), &back.leaf_incoming[b]);
                let va = &route_a
                    .iter()
                    .find(|d| d.scatterer == t.scatterer)
                    .ok_or_else(|| Error::Partition(format!("scatterer {} missing from the root", t.scatterer)))?
                    .values;
                for (x, y) in va.iter().zip(&vb) {
                    num = num.max((x - y).norm());
                    den = den.max(x.norm());
                }
            }
        }
        let route_discrepancy = if den > 0.0 { num / den } else { num };
        if route_discrepancy > ROUTE_TOLERANCE {
            return Err(Error::Consistency {
                what: "merged-Y and back-substitution densities".into(),
                discrepancy: route_discrepancy,
                tolerance: ROUTE_TOLERANCE,
            });
        }
        Ok(SolveOutput {
            incident: None,
            g_minus,
            g_plus,
            dirichlet,
            neumann,
            interior_datum,
            densities: route_a,
            leaf_incoming: back.leaf_incoming,
            interfaces: back.interfaces,
            route_discrepancy,
            outer_residual,
            solution_seconds: t0.elapsed().as_secs_f64(),
        })
    }

    /// `u^s = DL u^s − SL ∂u^s` over `∂B₀`, evaluated on the outer mesh
    /// refined `refinement` times.
    pub fn eval_exterior_field(&self, out: &SolveOutput, points: &[Point], refinement: usize) -> Result<PotentialValues> {
        if let Some(i) = points.iter().position(|p| self.grid.outer_rect().contains(*p)) {
            return Err(Error::Domain(format!("point {i} is not outside the outer box")));
        }
        let (mesh, u, du) = if refinement > 1 {
            let fine = build_outer_mesh(&self.grid, refinement * self.disc.n_per_edge, self.disc.grading)?;
            let u = interpolate_pieces(&self.outer_mesh, &fine, &out.dirichlet)?;
            let du = interpolate_pieces(&self.outer_mesh, &fine, &out.neumann)?;
            (fine, u, du)
        } else {
            (self.outer_mesh.clone(), out.dirichlet.clone(), out.neumann.clone())
        };
        let k = self.coupling.k;
        let dl = eval_potential(PotentialKind::Dl, &mesh, &u, points, k)?;
        let sl = eval_potential(PotentialKind::Sl, &mesh, &du, points, k)?;
        Ok(combine(dl, &sl, -1.0))
    }

    /// Total field inside box `box_index` from the leaf Cauchy data and the
    /// densities of its scatterers.
    pub fn eval_interior_field(
        &self,
        out: &SolveOutput,
        box_index: usize,
        points: &[Point],
        refinement: usize,
    ) -> Result<PotentialValues> {
        if box_index >= self.grid.num_boxes() {
            return Err(Error::Parameter(format!("no box {box_index}")));
        }
        let rect = self.grid.box_rect(box_index);
        if let Some(i) = points.iter().position(|p| !rect.contains(*p)) {
            return Err(Error::Domain(format!("point {i} is outside box {box_index}")));
        }
        let leaf = &self.tree.leaves[box_index].map;
        let g_minus = &out.leaf_incoming[box_index];
        let g_plus = leaf.apply(g_minus)?;
        let (u, du) = cauchy_from_robin(g_minus, &g_plus, self.eta());
        let coarse = &self.leaf_meshes[box_index];
        let (mesh, u, du) = if refinement > 1 {
            let fine = build_box_mesh(&rect, box_index, refinement * self.disc.n_per_edge, self.disc.grading)?;
            let fu = interpolate_pieces(coarse, &fine, &u)?;
            let fdu = interpolate_pieces(coarse, &fine, &du)?;
            (fine, fu, fdu)
        } else {
            (coarse.clone(), u, du)
        };
        let k = self.coupling.k;
        let sl = eval_potential(PotentialKind::Sl, &mesh, &du, points, k)?;
        let dl = eval_potential(PotentialKind::Dl, &mesh, &u, points, k)?;
        let mut acc = combine(sl, &dl, -1.0);
        for d in out.densities.iter().filter(|d| self.scatterer_box[d.scatterer] == box_index) {
            let m = &self.scatterer_meshes[d.scatterer];
            let v = eval_potential(PotentialKind::Sl, m, &d.values, points, k)?;
            acc = combine(acc, &v, -1.0);
        }
        Ok(acc)
    }

    /// Total field at arbitrary points: the leaf representation inside a box,
    /// `u^s + u^{inc}` outside the outer box. Points too close to a box edge
    /// for the plain quadrature fall back to [`Self::eval_union_field`];
    /// only points near scatterers stay NaN.
    pub fn eval_total_field(&self, out: &SolveOutput, points: &[Point], refinement: usize) -> Result<PotentialValues> {
        let field = out
            .incident
            .ok_or_else(|| Error::Parameter("total field needs the incident field".into()))?;
        let nb = self.grid.num_boxes();
        let outer = self.grid.outer_rect();
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); nb + 1];
        // points on an edge go straight to the union representation
        let mut near = Vec::new();
        for (i, p) in points.iter().enumerate() {
            if outer.inner_distance(*p) < 0.0 {
                groups[nb].push(i);
            } else {
                match self.grid.locate(*p) {
                    Some(b) if self.grid.box_rect(b).contains(*p) => groups[b].push(i),
                    _ => near.push(i),
                }
            }
        }
        let mut values = vec![C64::new(0.0, 0.0); points.len()];
        for (g, idx) in groups.iter().enumerate() {
            if idx.is_empty() {
                continue;
            }
            let pts: Vec<Point> = idx.iter().map(|&i| points[i]).collect();
            let pv = if g < self.grid.num_boxes() {
                self.eval_interior_field(out, g, &pts, refinement)?
            } else {
                let mut pv = self.eval_exterior_field(out, &pts, refinement)?;
                for (v, p) in pv.values.iter_mut().zip(&pts) {
                    *v += field.value(*p);
                }
                pv
            };
            for (a, &i) in idx.iter().enumerate() {
                values[i] = pv.values[a];
            }
            near.extend(pv.near.iter().map(|&a| idx[a]));
        }
        if !near.is_empty() {
            near.sort_unstable();
            let pts: Vec<Point> = near.iter().map(|&i| points[i]).collect();
            let pv = self.eval_union_field(out, &pts)?;
            for (a, &i) in near.iter().enumerate() {
                values[i] = pv.values[a];
            }
            near = pv.near.iter().map(|&a| near[a]).collect();
        }
        Ok(PotentialValues { values, near })
    }

    /// Total field as the sum of every leaf representation, the exterior
    /// representation of `u^s`, and `u^{inc}` minus its own interior
    /// representation over `∂B₀`. Each term vanishes on the wrong side of its
    /// boundary, and the layer terms at coincident nodes of matched edges
    /// cancel, so points may lie arbitrarily close to box edges. Only
    /// closeness to scatterers is reported.
    pub fn eval_union_field(&self, out: &SolveOutput, points: &[Point]) -> Result<PotentialValues> {
        let field = out
            .incident
            .ok_or_else(|| Error::Parameter("total field needs the incident field".into()))?;
        let k = self.coupling.k;
        let mut values: Vec<C64> = points.iter().map(|p| field.value(*p)).collect();
        let mut add = |mesh: &MeshedBoundary, sl: &[C64], dl: &[C64]| {
            let a = eval_potential_unchecked(PotentialKind::Sl, mesh, sl, points, k);
            let b = eval_potential_unchecked(PotentialKind::Dl, mesh, dl, points, k);
            for ((v, x), y) in values.iter_mut().zip(a).zip(b) {
                *v += x - y;
            }
        };
        for (b, mesh) in self.leaf_meshes.iter().enumerate() {
            let g_minus = &out.leaf_incoming[b];
            let g_plus = self.tree.leaves[b].map.apply(g_minus)?;
            let (u, du) = cauchy_from_robin(g_minus, &g_plus, self.eta());
            add(mesh, &du, &u);
        }
        let m = &self.outer_mesh;
        let u: Vec<C64> = m.nodes.iter().zip(&out.dirichlet).map(|(x, v)| -(v + field.value(*x))).collect();
        let du: Vec<C64> = m
            .nodes
            .iter()
            .zip(&m.normals)
            .zip(&out.neumann)
            .map(|((x, n), v)| -(v + field.normal_derivative(*x, *n)))
            .collect();
        add(m, &du, &u);
        let mut near = Vec::new();
        for d in &out.densities {
            let mesh = &self.scatterer_meshes[d.scatterer];
            let pv = eval_potential(PotentialKind::Sl, mesh, &d.values, points, k)?;
            for (v, x) in values.iter_mut().zip(&pv.values) {
                *v -= x;
            }
            near.extend(pv.near);
        }
        near.sort_unstable();
        near.dedup();
        Ok(PotentialValues { values, near })
    }

    /// `u_∞` of `DL u^s − SL ∂u^s` over `∂B₀`.
    pub fn far_field_pattern(&self, out: &SolveOutput, angles: &[f64]) -> Result<FarFieldSamples> {
        let k = self.coupling.k;
        let dl = far_field(PotentialKind::Dl, &self.outer_mesh, &out.dirichlet, angles, k)?;
        let sl = far_field(PotentialKind::Sl, &self.outer_mesh, &out.neumann, angles, k)?;
        FarFieldSamples::new(angles.to_vec(), dl.iter().zip(&sl).map(|(a, b)| a - b).collect())
    }
}

/// `u = (g₊ − g₋)/(2iη)`, `∂u = (g₊ + g₋)/2`.
pub fn cauchy_from_robin(g_minus: &[C64], g_plus: &[C64], eta: f64) -> (Vec<C64>, Vec<C64>) {
    g_minus
        .iter()
        .zip(g_plus)
        .map(|(m, p)| ((p - m) / (2.0 * I * eta), 0.5 * (p + m)))
        .unzip()
}

/// `10 log₁₀(2π|u_∞|²)`, clamped below at [`RCS_FLOOR_DB`].
pub fn rcs_db(values: &[C64]) -> Vec<f64> {
    values
        .iter()
        .map(|v| {
            let x = 2.0 * std::f64::consts::PI * v.norm_sqr();
            if x > 0.0 {
                (10.0 * x.log10()).max(RCS_FLOOR_DB)
            } else {
                RCS_FLOOR_DB
            }
        })
        .collect()
}

fn combine(mut a: PotentialValues, b: &PotentialValues, sign: f64) -> PotentialValues {
    for (x, y) in a.values.iter_mut().zip(&b.values) {
        *x += sign * y;
    }
    a.near.extend(&b.near);
    a.near.sort_unstable();
    a.near.dedup();
    a
}

/// Matches every outer-mesh piece with the root segment of the same label.
fn outer_to_root(outer: &MeshedBoundary, root: &RtrMap) -> Result<Vec<usize>> {
    if outer.len() != root.dim() {
        return Err(Error::Conformity(format!(
            "outer mesh has {} nodes, the root map {}",
            outer.len(),
            root.dim()
        )));
    }
    let mut idx = vec![0; outer.len()];
    for (label, r) in &outer.pieces {
        let rr = root.partition.find(*label)?;
        if rr.len() != r.len() {
            return Err(Error::Conformity(format!("segment {label:?} differs in size")));
        }
        for (i, j) in r.clone().zip(rr) {
            if outer.nodes[i].dist(root.nodes[j]) > 1e-9 {
                return Err(Error::Conformity(format!("segment {label:?} nodes do not coincide")));
            }
            idx[i] = j;
        }
    }
    Ok(idx)
}
