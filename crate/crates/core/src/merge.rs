//! Pairwise merging of Robin-to-Robin maps by eliminating the Robin data on
//! a shared interface, organized as a tree over the box grid.
//!
//! For maps `𝒮ᵃ` on `L ∪ C` and `𝒮ᵇ` on `R ∪ C` the matching conditions
//! across `C` are `iᵃ_C = −oᵇ_C` and `iᵇ_C = −oᵃ_C` (the normals are
//! opposite). With `D = [[I, 𝒮ᵇ_CC], [𝒮ᵃ_CC, I]]` the eliminated data are
//! `(iᵃ_C, iᵇ_C) = E (i_L, i_R)` with `E = −D⁻¹ [[0, 𝒮ᵇ_CR], [𝒮ᵃ_CL, 0]]`.

use std::ops::Range;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::geometry::{BoxGrid, EdgeLabel, Side};
use crate::linalg::{gather, identity, mul, mul_acc, CMat, DenseLu};
use crate::rtr::{BoundaryPartition, RtrMap, SegmentId, SubdomainMaps, TraceMap};

/// Default bound on the condition estimate of `𝒮ᵇ_CC 𝒮ᵃ_CC − I`.
pub const DEFAULT_CONDITION_BOUND: f64 = 1e8;

/// Nodes closer than this are considered the same interface node.
const MATCH_TOL: f64 = 1e-9;

const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// A shared interface: pairs of segments, the first of each pair in the left
/// map, the second in the right map. Node `i` of a left segment meets node
/// `n − 1 − i` of its partner.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interface {
    pub pairs: Vec<(SegmentId, SegmentId)>,
}

impl Interface {
    /// Interface ids are named by their first left segment.
    pub fn id(&self) -> SegmentId {
        self.pairs[0].0
    }
}

/// Index lists of the left and right interface copies, aligned node by node.
fn interface_indices(a: &RtrMap, b: &RtrMap, iface: &Interface) -> Result<(Vec<usize>, Vec<usize>)> {
    if iface.pairs.is_empty() {
        return Err(Error::Partition("empty interface".into()));
    }
    let mut ca = Vec::new();
    let mut cb = Vec::new();
    for &(sa, sb) in &iface.pairs {
        let ra = a.partition.find(sa)?;
        let rb = b.partition.find(sb)?;
        if ra.len() != rb.len() {
            return Err(Error::Conformity(format!(
                "interface {sa:?}/{sb:?} has {} and {} nodes",
                ra.len(),
                rb.len()
            )));
        }
        let n = ra.len();
        for i in 0..n {
            let ia = ra.start + i;
            let ib = rb.start + n - 1 - i;
            let d = a.nodes[ia].dist(b.nodes[ib]);
            if d > MATCH_TOL {
                return Err(Error::Conformity(format!(
                    "interface {sa:?}/{sb:?} node {i} mismatched by {d:e}"
                )));
            }
            ca.push(ia);
            cb.push(ib);
        }
    }
    Ok((ca, cb))
}

/// Retained segments of a map after removing the interface segments, with
/// their index lists.
fn retained(map: &RtrMap, removed: &[SegmentId]) -> (Vec<(SegmentId, usize)>, Vec<usize>) {
    let mut segs = Vec::new();
    let mut idx = Vec::new();
    for (id, r) in map.partition.segments() {
        if removed.contains(id) {
            continue;
        }
        segs.push((*id, r.len()));
        idx.extend(r.clone());
    }
    (segs, idx)
}

/// Block views of a map around one segment.
#[derive(Debug, Clone)]
pub struct Blocks {
    pub cc: CMat,
    pub c_rest: CMat,
    pub rest_c: CMat,
    pub rest_rest: CMat,
    pub c: Range<usize>,
    pub rest: Vec<usize>,
}

/// Splits `map` into the blocks around segment `id`.
pub fn split_blocks(map: &RtrMap, id: SegmentId) -> Result<Blocks> {
    let c = map.partition.find(id)?;
    let cidx: Vec<usize> = c.clone().collect();
    let rest: Vec<usize> = (0..map.dim()).filter(|i| !c.contains(i)).collect();
    let m = map.matrix.as_ref();
    Ok(Blocks {
        cc: gather(m, &cidx, &cidx),
        c_rest: gather(m, &cidx, &rest),
        rest_c: gather(m, &rest, &cidx),
        rest_rest: gather(m, &rest, &rest),
        c,
        rest,
    })
}

/// What is needed to recover the eliminated interface data of one merge.
#[derive(Debug, Clone)]
pub struct BackSubRecord {
    pub interface: Interface,
    /// `(2 n_C) × (|L| + |R|)`: merged incoming datum to `(iᵃ_C, iᵇ_C)`.
    pub e: CMat,
    /// Positions in the left child of the first `|L|` merged indices.
    pub left_retained: Vec<usize>,
    /// Positions in the right child of the remaining merged indices.
    pub right_retained: Vec<usize>,
    pub left_interface: Vec<usize>,
    pub right_interface: Vec<usize>,
    pub left_dim: usize,
    pub right_dim: usize,
    /// Condition estimate of `𝒮ᵇ_CC 𝒮ᵃ_CC − I`.
    pub condition: f64,
}

/// Merges two maps (with their trace maps) across `iface`.
pub fn merge_pair(
    a: (&RtrMap, &[TraceMap]),
    b: (&RtrMap, &[TraceMap]),
    iface: &Interface,
    condition_bound: f64,
) -> Result<(RtrMap, Vec<TraceMap>, BackSubRecord)> {
    let (ma, ta) = a;
    let (mb, tb) = b;
    if (ma.eta - mb.eta).abs() > 1e-14 * ma.eta.abs() {
        return Err(Error::Parameter("merging maps built with different eta".into()));
    }
    let (ca, cb) = interface_indices(ma, mb, iface)?;
    let left_ids: Vec<SegmentId> = iface.pairs.iter().map(|p| p.0).collect();
    let right_ids: Vec<SegmentId> = iface.pairs.iter().map(|p| p.1).collect();
    let (lsegs, li) = retained(ma, &left_ids);
    let (rsegs, ri) = retained(mb, &right_ids);
    let nc = ca.len();
    let (nl, nr) = (li.len(), ri.len());

    let sa = ma.matrix.as_ref();
    let sb = mb.matrix.as_ref();
    let a_cc = gather(sa, &ca, &ca);
    let b_cc = gather(sb, &cb, &cb);

    let mut prod = mul(b_cc.as_ref(), a_cc.as_ref());
    for i in 0..nc {
        prod[(i, i)] -= 1.0;
    }
    let condition = DenseLu::new(prod, "interface matrix")
        .map(|lu| lu.cond1_estimate())
        .unwrap_or(f64::INFINITY);
    if !(condition < condition_bound) {
        return Err(Error::Conditioning {
            context: format!("merge across interface {:?}", iface.id()),
            estimate: condition,
        });
    }

    let mut d = identity(2 * nc);
    d.as_mut().submatrix_mut(0, nc, nc, nc).copy_from(&b_cc);
    d.as_mut().submatrix_mut(nc, 0, nc, nc).copy_from(&a_cc);
    let mut rhs = CMat::zeros(2 * nc, nl + nr);
    rhs.as_mut()
        .submatrix_mut(0, nl, nc, nr)
        .copy_from(&gather(sb, &cb, &ri));
    rhs.as_mut()
        .submatrix_mut(nc, 0, nc, nl)
        .copy_from(&gather(sa, &ca, &li));
    let lu = DenseLu::new(d, "interface elimination")?;
    let mut e = lu.solve(rhs.as_ref());
    for j in 0..e.ncols() {
        for i in 0..e.nrows() {
            e[(i, j)] = -e[(i, j)];
        }
    }
    let e_a = e.as_ref().submatrix(0, 0, nc, nl + nr);
    let e_b = e.as_ref().submatrix(nc, 0, nc, nl + nr);

    let mut s = CMat::zeros(nl + nr, nl + nr);
    s.as_mut()
        .submatrix_mut(0, 0, nl, nl)
        .copy_from(&gather(sa, &li, &li));
    s.as_mut()
        .submatrix_mut(nl, nl, nr, nr)
        .copy_from(&gather(sb, &ri, &ri));
    mul_acc(
        s.as_mut().submatrix_mut(0, 0, nl, nl + nr),
        gather(sa, &li, &ca).as_ref(),
        e_a,
        ONE,
    );
    mul_acc(
        s.as_mut().submatrix_mut(nl, 0, nr, nl + nr),
        gather(sb, &ri, &cb).as_ref(),
        e_b,
        ONE,
    );

    let merge_traces = |traces: &[TraceMap], keep: &[usize], c: &[usize], ec, offset: usize| {
        traces
            .iter()
            .map(|t| {
                let y = t.matrix.as_ref();
                let rows: Vec<usize> = (0..y.nrows()).collect();
                let mut out = CMat::zeros(y.nrows(), nl + nr);
                out.as_mut()
                    .submatrix_mut(0, offset, y.nrows(), keep.len())
                    .copy_from(&gather(y, &rows, keep));
                mul_acc(out.as_mut(), gather(y, &rows, c).as_ref(), ec, ONE);
                TraceMap {
                    matrix: out,
                    scatterer: t.scatterer,
                    datum: t.datum,
                }
            })
            .collect::<Vec<_>>()
    };
    let mut traces = merge_traces(ta, &li, &ca, e_a, 0);
    traces.extend(merge_traces(tb, &ri, &cb, e_b, nl));

    let gat = |v: &[crate::geometry::Point], idx: &[usize]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
    let mut nodes = gat(&ma.nodes, &li);
    nodes.extend(gat(&mb.nodes, &ri));
    let mut normals = gat(&ma.normals, &li);
    normals.extend(gat(&mb.normals, &ri));
    let mut weights: Vec<f64> = li.iter().map(|&i| ma.weights[i]).collect();
    weights.extend(ri.iter().map(|&i| mb.weights[i]));

    let map = RtrMap {
        matrix: s,
        partition: BoundaryPartition::from_lengths(lsegs.into_iter().chain(rsegs))?,
        eta: ma.eta,
        weights,
        nodes,
        normals,
    };
    let record = BackSubRecord {
        interface: iface.clone(),
        e,
        left_retained: li,
        right_retained: ri,
        left_interface: ca,
        right_interface: cb,
        left_dim: ma.dim(),
        right_dim: mb.dim(),
        condition,
    };
    Ok((map, traces, record))
}

/// `𝒮ᶜ = (𝒮ᵇ_CC 𝒮ᵃ_CC − I)⁻¹` closed form of the eliminated data, used to
/// cross-check the block factorization.
pub fn closed_form_elimination(a: &RtrMap, b: &RtrMap, iface: &Interface) -> Result<CMat> {
    let (ca, cb) = interface_indices(a, b, iface)?;
    let left_ids: Vec<SegmentId> = iface.pairs.iter().map(|p| p.0).collect();
    let right_ids: Vec<SegmentId> = iface.pairs.iter().map(|p| p.1).collect();
    let (_, li) = retained(a, &left_ids);
    let (_, ri) = retained(b, &right_ids);
    let nc = ca.len();
    let (nl, nr) = (li.len(), ri.len());
    let sa = a.matrix.as_ref();
    let sb = b.matrix.as_ref();
    let a_cc = gather(sa, &ca, &ca);
    let b_cc = gather(sb, &cb, &cb);
    let a_cl = gather(sa, &ca, &li);
    let b_cr = gather(sb, &cb, &ri);
    // iᵃ = −𝒮ᵇ_CC iᵇ − 𝒮ᵇ_CR i_R and iᵇ = −𝒮ᵃ_CC iᵃ − 𝒮ᵃ_CL i_L give
    // (𝒮ᵇ_CC 𝒮ᵃ_CC − I) iᵃ = 𝒮ᵇ_CR i_R − 𝒮ᵇ_CC 𝒮ᵃ_CL i_L.
    let mut m = mul(b_cc.as_ref(), a_cc.as_ref());
    for i in 0..nc {
        m[(i, i)] -= 1.0;
    }
    let sc = DenseLu::new(m, "closed form")?.inverse();
    let mut rhs = CMat::zeros(nc, nl + nr);
    let t = mul(b_cc.as_ref(), a_cl.as_ref());
    for j in 0..nl {
        for i in 0..nc {
            rhs[(i, j)] = -t[(i, j)];
        }
    }
    rhs.as_mut().submatrix_mut(0, nl, nc, nr).copy_from(&b_cr);
    let ia = mul(sc.as_ref(), rhs.as_ref());
    let mut ib = mul(a_cc.as_ref(), ia.as_ref());
    for j in 0..nl {
        for i in 0..nc {
            ib[(i, j)] += a_cl[(i, j)];
        }
    }
    let mut e = CMat::zeros(2 * nc, nl + nr);
    e.as_mut().submatrix_mut(0, 0, nc, nl + nr).copy_from(&ia);
    for j in 0..nl + nr {
        for i in 0..nc {
            e[(nc + i, j)] = -ib[(i, j)];
        }
    }
    Ok(e)
}

/// Node of the merge hierarchy.
#[derive(Debug, Clone)]
pub enum MergeNode {
    Leaf { box_index: usize },
    Internal {
        left: Box<MergeNode>,
        right: Box<MergeNode>,
        record: BackSubRecord,
    },
}

/// Per-merge statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeStat {
    pub interface: SegmentId,
    pub interface_nodes: usize,
    pub merged_dim: usize,
    pub condition: f64,
}

/// The merge hierarchy with the root interior map `𝒮^{int}` and `Y^{int}`.
#[derive(Debug, Clone)]
pub struct MergeTree {
    pub root: MergeNode,
    pub root_map: RtrMap,
    pub root_traces: Vec<TraceMap>,
    /// Leaf maps indexed by box.
    pub leaves: Vec<SubdomainMaps>,
    pub stats: Vec<MergeStat>,
}

impl MergeTree {
    pub fn internal_count(&self) -> usize {
        fn count(n: &MergeNode) -> usize {
            match n {
                MergeNode::Leaf { .. } => 0,
                MergeNode::Internal { left, right, .. } => 1 + count(left) + count(right),
            }
        }
        count(&self.root)
    }

    pub fn max_condition(&self) -> f64 {
        self.stats.iter().map(|s| s.condition).fold(0.0, f64::max)
    }
}

struct Partial {
    node: MergeNode,
    map: RtrMap,
    traces: Vec<TraceMap>,
}

fn combine(
    a: Partial,
    b: Partial,
    iface: Interface,
    bound: f64,
    stats: &mut Vec<MergeStat>,
) -> Result<Partial> {
    let (map, traces, record) = merge_pair((&a.map, &a.traces), (&b.map, &b.traces), &iface, bound)
        .map_err(|e| annotate(e, &iface))?;
    stats.push(MergeStat {
        interface: iface.id(),
        interface_nodes: record.left_interface.len(),
        merged_dim: map.dim(),
        condition: record.condition,
    });
    Ok(Partial {
        node: MergeNode::Internal {
            left: Box::new(a.node),
            right: Box::new(b.node),
            record,
        },
        map,
        traces,
    })
}

fn annotate(e: Error, iface: &Interface) -> Error {
    match e {
        Error::Conditioning { context, estimate } => Error::Conditioning {
            context: format!("{context} (tree node at {:?})", iface.id()),
            estimate,
        },
        Error::Partition(m) => Error::Partition(format!("{m} (tree node at {:?})", iface.id())),
        Error::Conformity(m) => Error::Conformity(format!("{m} (tree node at {:?})", iface.id())),
        other => other,
    }
}

/// Folds items `lo..hi` with `join(left, right, split)`: balanced halves
/// when the count is a power of two, a left-to-right fold otherwise.
fn fold_range<T>(
    items: &mut Vec<Option<T>>,
    lo: usize,
    hi: usize,
    join: &mut dyn FnMut(T, T, usize) -> Result<T>,
) -> Result<T> {
    let n = hi - lo;
    if n == 1 {
        return Ok(items[lo].take().expect("each item is consumed once"));
    }
    if n.is_power_of_two() {
        let mid = lo + n / 2;
        let a = fold_range(items, lo, mid, join)?;
        let b = fold_range(items, mid, hi, join)?;
        join(a, b, mid)
    } else {
        let mut acc = items[lo].take().expect("each item is consumed once");
        for m in lo + 1..hi {
            let b = items[m].take().expect("each item is consumed once");
            acc = join(acc, b, m)?;
        }
        Ok(acc)
    }
}

/// Merges the leaves of `grid` (indexed by box): boxes within each row first,
/// then the row strips bottom to top.
pub fn hierarchical_merge(
    grid: &BoxGrid,
    leaves: Vec<SubdomainMaps>,
    condition_bound: f64,
) -> Result<MergeTree> {
    if leaves.len() != grid.num_boxes() {
        return Err(Error::Partition(format!(
            "{} leaf maps for {} boxes",
            leaves.len(),
            grid.num_boxes()
        )));
    }
    let mut stats = Vec::new();
    let mut rows: Vec<Option<Partial>> = Vec::with_capacity(grid.rows);
    for r in 0..grid.rows {
        let mut items: Vec<Option<Partial>> = (0..grid.cols)
            .map(|c| {
                let b = grid.box_index(c, r);
                Some(Partial {
                    node: MergeNode::Leaf { box_index: b },
                    map: leaves[b].map.clone(),
                    traces: leaves[b].traces.clone(),
                })
            })
            .collect();
        let mut join = |a: Partial, b: Partial, mid: usize| {
            let iface = Interface {
                pairs: vec![(
                    EdgeLabel { box_index: grid.box_index(mid - 1, r), side: Side::E },
                    EdgeLabel { box_index: grid.box_index(mid, r), side: Side::W },
                )],
            };
            combine(a, b, iface, condition_bound, &mut stats)
        };
        rows.push(Some(fold_range(&mut items, 0, grid.cols, &mut join)?));
    }
    let cols = grid.cols;
    let mut join = |a: Partial, b: Partial, mid: usize| {
        let iface = Interface {
            pairs: (0..cols)
                .map(|c| {
                    (
                        EdgeLabel { box_index: grid.box_index(c, mid - 1), side: Side::N },
                        EdgeLabel { box_index: grid.box_index(c, mid), side: Side::S },
                    )
                })
                .collect(),
        };
        combine(a, b, iface, condition_bound, &mut stats)
    };
    let n_rows = rows.len();
    let root = fold_range(&mut rows, 0, n_rows, &mut join)?;
    Ok(MergeTree {
        root: root.node,
        root_map: root.map,
        root_traces: root.traces,
        leaves,
        stats,
    })
}

/// Interface Robin data recovered by back-substitution.
#[derive(Debug, Clone)]
pub struct InterfaceData {
    pub interface: Interface,
    /// Incoming data of the left and right copies, aligned node by node.
    pub left: Vec<C64>,
    pub right: Vec<C64>,
}

/// Result of a top-down traversal.
#[derive(Debug, Clone)]
pub struct BackSubstitution {
    pub interfaces: Vec<InterfaceData>,
    /// Incoming Robin datum of every leaf, indexed by box.
    pub leaf_incoming: Vec<Vec<C64>>,
}

/// Recovers all interface data and the incoming datum of every leaf from the
/// incoming datum of the root.
pub fn back_substitute(tree: &MergeTree, root_incoming: &[C64]) -> Result<BackSubstitution> {
    if root_incoming.len() != tree.root_map.dim() {
        return Err(Error::Partition(format!(
            "root datum of length {} for a root map of dimension {}",
            root_incoming.len(),
            tree.root_map.dim()
        )));
    }
    let mut out = BackSubstitution {
        interfaces: Vec::new(),
        leaf_incoming: vec![Vec::new(); tree.leaves.len()],
    };
    descend(&tree.root, root_incoming.to_vec(), &mut out);
    Ok(out)
}

fn descend(node: &MergeNode, incoming: Vec<C64>, out: &mut BackSubstitution) {
    match node {
        MergeNode::Leaf { box_index } => out.leaf_incoming[*box_index] = incoming,
        MergeNode::Internal { left, right, record } => {
            let nc = record.left_interface.len();
            let ic = crate::linalg::matvec(record.e.as_ref(), &incoming);
            let nl = record.left_retained.len();
            let mut a = vec![C64::new(0.0, 0.0); record.left_dim];
            let mut b = vec![C64::new(0.0, 0.0); record.right_dim];
            for (k, &i) in record.left_retained.iter().enumerate() {
                a[i] = incoming[k];
            }
            for (k, &i) in record.right_retained.iter().enumerate() {
                b[i] = incoming[nl + k];
            }
            for k in 0..nc {
                a[record.left_interface[k]] = ic[k];
                b[record.right_interface[k]] = ic[nc + k];
            }
            out.interfaces.push(InterfaceData {
                interface: record.interface.clone(),
                left: ic[..nc].to_vec(),
                right: ic[nc..].to_vec(),
            });
            descend(left, a, out);
            descend(right, b, out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use crate::linalg::{mat_max_abs, max_abs, max_abs_diff};
    use crate::rtr::{assemble_subdomain_system, point_source_robin, rtr_interior_subdomain, BoxBoundary, Coupling};

    fn leaf(grid: &BoxGrid, b: usize, n: usize) -> SubdomainMaps {
        let c = Coupling::defaults(5.0).unwrap();
        let bb = BoxBoundary::leaf(&grid.box_rect(b), b, n, 4).unwrap();
        rtr_interior_subdomain(assemble_subdomain_system(&bb, &[], &c).unwrap()).unwrap()
    }

    fn grid(cols: usize, rows: usize) -> BoxGrid {
        BoxGrid::new(Point::new(0.0, 0.0), 1.0, 1.0, cols, rows).unwrap()
    }

    fn reproduce(map: &RtrMap, x0: Point) -> f64 {
        let (gm, gp) = point_source_robin(&map.nodes, &map.normals, 5.0, map.eta, x0).unwrap();
        max_abs_diff(&map.apply(&gm).unwrap(), &gp) / max_abs(&gp)
    }

    #[test]
    fn split_blocks_reassemble() {
        let g = grid(1, 1);
        let l = leaf(&g, 0, 8);
        let id = EdgeLabel { box_index: 0, side: Side::E };
        let bl = split_blocks(&l.map, id).unwrap();
        assert_eq!(bl.cc.nrows(), 8);
        assert_eq!(bl.c, 8..16);
        let m = &l.map.matrix;
        for (a, &i) in bl.rest.iter().enumerate() {
            for (b, j) in bl.c.clone().enumerate() {
                assert_eq!(bl.rest_c[(a, b)], m[(i, j)]);
            }
        }
        let bad = EdgeLabel { box_index: 3, side: Side::E };
        assert!(matches!(split_blocks(&l.map, bad), Err(Error::Partition(_))));
    }

    #[test]
    fn two_box_merge_matches_point_source_and_closed_form() {
        let g = grid(2, 1);
        let a = leaf(&g, 0, 32);
        let b = leaf(&g, 1, 32);
        let iface = Interface {
            pairs: vec![(
                EdgeLabel { box_index: 0, side: Side::E },
                EdgeLabel { box_index: 1, side: Side::W },
            )],
        };
        let (m, _, rec) = merge_pair((&a.map, &[]), (&b.map, &[]), &iface, 1e8).unwrap();
        assert_eq!(m.dim(), 6 * 32);
        assert!(rec.condition.is_finite());
        let e = reproduce(&m, Point::new(1.0, 2.0));
        assert!(e < 1e-6, "{e}");
        let cf = closed_form_elimination(&a.map, &b.map, &iface).unwrap();
        let diff = &cf - &rec.e;
        assert!(mat_max_abs(diff.as_ref()) < 1e-10 * mat_max_abs(rec.e.as_ref()));
        assert!(matches!(
            merge_pair((&m, &[]), (&b.map, &[]), &iface, 1e8),
            Err(Error::Partition(_))
        ));
    }

    #[test]
    fn tree_shapes() {
        let g = grid(1, 1);
        let t = hierarchical_merge(&g, vec![leaf(&g, 0, 8)], 1e8).unwrap();
        assert_eq!(t.internal_count(), 0);
        let g = grid(3, 2);
        let leaves = (0..6).map(|b| leaf(&g, b, 16)).collect();
        let t = hierarchical_merge(&g, leaves, 1e8).unwrap();
        assert_eq!(t.internal_count(), 5);
        assert_eq!(t.root_map.partition.segments().len(), 10);
        let e = reproduce(&t.root_map, Point::new(1.5, 3.0));
        assert!(e < 1e-5, "{e}");
    }

    #[test]
    fn back_substitution_matches_interface_conditions() {
        let g = grid(2, 2);
        let leaves = (0..4).map(|b| leaf(&g, b, 12)).collect();
        let t = hierarchical_merge(&g, leaves, 1e8).unwrap();
        let (gm, _) = point_source_robin(&t.root_map.nodes, &t.root_map.normals, 5.0, 5.0, Point::new(-1.0, 0.7)).unwrap();
        let bs = back_substitute(&t, &gm).unwrap();
        // iᵇ_C = −oᵃ_C on every eliminated interface, node by node.
        for (b, inc) in bs.leaf_incoming.iter().enumerate() {
            assert_eq!(inc.len(), t.leaves[b].map.dim());
        }
        for side in [Side::E, Side::N] {
            for b in 0..4 {
                if let Some(nb) = g.neighbor(b, side) {
                    let ra = t.leaves[b].map.partition.find(EdgeLabel { box_index: b, side }).unwrap();
                    let rb = t.leaves[nb].map.partition.find(EdgeLabel { box_index: nb, side: side.opposite() }).unwrap();
                    let oa = t.leaves[b].map.apply(&bs.leaf_incoming[b]).unwrap();
                    let n = ra.len();
                    let scale = max_abs(&oa);
                    for i in 0..n {
                        let r = bs.leaf_incoming[nb][rb.start + n - 1 - i] + oa[ra.start + i];
                        assert!(r.norm() < 1e-10 * scale, "{r}");
                    }
                }
            }
        }
        let zero = back_substitute(&t, &vec![C64::new(0.0, 0.0); gm.len()]).unwrap();
        assert!(zero.interfaces.iter().all(|d| max_abs(&d.left) == 0.0 && max_abs(&d.right) == 0.0));
        assert!(back_substitute(&t, &gm[1..]).is_err());
    }
}
