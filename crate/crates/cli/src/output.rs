//! Text serializers for run artifacts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

use schur_dd::geometry::{EdgeLabel, Point};
use schur_dd::merge::InterfaceData;
use schur_dd::oracle::FarFieldSamples;
use schur_dd::{rcs_db, Complex64};

use crate::config::NearFieldWindow;

/// 17 significant digits, enough to round-trip an f64.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Output directory that remembers what it wrote.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    written: Vec<PathBuf>,
    /// Blob hash of every CSV and grid file, by name.
    hashes: BTreeMap<String, String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
            hashes: BTreeMap::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.root.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.written.push(path);
        if name.ends_with(".csv") || name.ends_with(".grid") {
            self.hashes.insert(name.to_string(), blob_hash(contents.as_bytes()));
        }
        Ok(())
    }

    pub fn remove_written(&mut self) {
        for p in self.written.drain(..) {
            let _ = fs::remove_file(p);
        }
        self.hashes.clear();
    }

    /// Hash of the sorted `name hash` listing, in the manner of a git tree.
    pub fn content_hash(&self) -> String {
        let mut listing = String::new();
        for (name, h) in &self.hashes {
            let _ = writeln!(listing, "{name} {h}");
        }
        blob_hash(listing.as_bytes())
    }
}

/// SHA-256 of `blob <len>\0<bytes>`.
pub fn blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn segment_name(id: EdgeLabel) -> String {
    format!("{}:{:?}", id.box_index, id.side)
}

pub fn far_field_csv(s: &FarFieldSamples) -> String {
    let db = rcs_db(&s.values);
    let mut out = String::from("theta,re,im,abs,rcs_db\n");
    for ((t, v), r) in s.angles.iter().zip(&s.values).zip(db) {
        let _ = writeln!(out, "{},{},{},{},{}", num(*t), num(v.re), num(v.im), num(v.norm()), num(r));
    }
    out
}

/// Sample points of a window, row by row from `y0` upward.
pub fn window_points(w: &NearFieldWindow) -> Vec<Point> {
    let (dx, dy) = window_steps(w);
    let mut pts = Vec::with_capacity(w.nx * w.ny);
    for j in 0..w.ny {
        for i in 0..w.nx {
            pts.push(Point::new(w.x0 + i as f64 * dx, w.y0 + j as f64 * dy));
        }
    }
    pts
}

fn window_steps(w: &NearFieldWindow) -> (f64, f64) {
    let step = |a: f64, b: f64, n: usize| if n > 1 { (b - a) / (n - 1) as f64 } else { 0.0 };
    (step(w.x0, w.x1, w.nx), step(w.y0, w.y1, w.ny))
}

/// Header `nx ny x0 y0 dx dy`, then one `re im` line per point.
pub fn near_field_grid(w: &NearFieldWindow, values: &[Complex64]) -> String {
    let (dx, dy) = window_steps(w);
    let mut out = format!("{} {} {} {} {} {}\n", w.nx, w.ny, num(w.x0), num(w.y0), num(dx), num(dy));
    for v in values {
        let _ = writeln!(out, "{} {}", num(v.re), num(v.im));
    }
    out
}

/// Incoming datum of the left copy of each interface.
pub fn interfaces_csv(interfaces: &[InterfaceData]) -> String {
    let mut out = String::from("interface,node,re,im\n");
    for d in interfaces {
        let name = segment_name(d.interface.id());
        for (i, v) in d.left.iter().enumerate() {
            let _ = writeln!(out, "{name},{i},{},{}", num(v.re), num(v.im));
        }
    }
    out
}

pub fn probes_csv(points: &[Point], values: &[Complex64]) -> String {
    let mut out = String::from("x,y,re,im,abs\n");
    for (p, v) in points.iter().zip(values) {
        let _ = writeln!(out, "{},{},{},{},{}", num(p.x), num(p.y), num(v.re), num(v.im), num(v.norm()));
    }
    out
}
