//! Fixtures shared by the benchmarks.

use schur_dd::{BoxGrid, Point, Scatterer};

/// `cols × rows` unit boxes, each with one centered circle of radius 0.2.
pub fn circle_grid(cols: usize, rows: usize) -> BoxGrid {
    let mut g = BoxGrid::new(Point::new(0.0, 0.0), 1.0, 1.0, cols, rows).expect("valid grid");
    for b in 0..g.num_boxes() {
        let c = g.box_rect(b).corners();
        let center = Point::new(0.5 * (c[0].x + c[2].x), 0.5 * (c[0].y + c[2].y));
        g.scatterers[b].push(Scatterer::circle(center, 0.2).expect("valid circle"));
    }
    g
}
