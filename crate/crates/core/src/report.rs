//! Pass/fail ledger shared by every verifier, with CSV emission and a
//! deterministic parallel arg-min used by the grid scans.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Location, Result};
use crate::grid::{Dims, Grid3};

/// One checked inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub check_id: String,
    pub zone: String,
    /// Value minus bound (or a normalized equivalent); negative means failure.
    pub margin: f64,
    /// Worst node, if the check is node-wise.
    pub at: Option<Location>,
    /// Physical coordinates of `at` (NaN when not node-wise).
    pub coords: [f64; 3],
    pub pass: bool,
    /// Check-specific auxiliary value (measured constant, count, …).
    pub aux: f64,
}

impl Entry {
    pub fn scalar(id: impl Into<String>, zone: impl Into<String>, margin: f64) -> Entry {
        Entry {
            check_id: id.into(),
            zone: zone.into(),
            margin,
            at: None,
            coords: [f64::NAN; 3],
            pass: margin >= 0.0,
            aux: f64::NAN,
        }
    }

    pub fn at_node(
        id: impl Into<String>,
        zone: impl Into<String>,
        margin: f64,
        grid: &Grid3,
        at: Location,
    ) -> Entry {
        Entry {
            check_id: id.into(),
            zone: zone.into(),
            margin,
            at: Some(at),
            coords: [grid.x[at.i], grid.y[at.j], grid.z[at.k]],
            pass: margin >= 0.0,
            aux: f64::NAN,
        }
    }

    pub fn with_aux(mut self, aux: f64) -> Entry {
        self.aux = aux;
        self
    }

    /// Marks the entry as passing only when the margin is strictly positive.
    pub fn strict(mut self) -> Entry {
        self.pass = self.margin > 0.0;
        self
    }
}

/// Run metadata kept out of the CSV body so reports stay byte-reproducible.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportMeta {
    /// SHA-256 of the canonical config text, hex.
    pub config_hash: Option<String>,
    pub grid: String,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiagnosticsReport {
    pub entries: Vec<Entry>,
    pub meta: ReportMeta,
}

fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:e}")
    }
}

impl DiagnosticsReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, e: Entry) {
        self.entries.push(e);
    }

    pub fn extend(&mut self, other: DiagnosticsReport) {
        self.entries.extend(other.entries);
        self.meta.notes.extend(other.meta.notes);
    }

    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn failing(&self) -> Vec<&Entry> {
        self.entries.iter().filter(|e| !e.pass).collect()
    }

    pub fn get(&self, id: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.check_id == id)
    }

    pub fn ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.check_id.as_str()).collect()
    }

    /// Every id in `expected` appears exactly once.
    pub fn is_complete(&self, expected: &[&str]) -> bool {
        expected
            .iter()
            .all(|id| self.entries.iter().filter(|e| e.check_id == *id).count() == 1)
    }

    /// `check_id,zone,margin,x,y,z,pass`
    pub fn to_csv(&self) -> String {
        let mut s = String::from("check_id,zone,margin,x,y,z,pass\n");
        for e in &self.entries {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                e.check_id,
                e.zone,
                fmt_num(e.margin),
                fmt_num(e.coords[0]),
                fmt_num(e.coords[1]),
                fmt_num(e.coords[2]),
                e.pass
            );
        }
        s
    }

    /// `inequality,zone,min_margin,x,y,z,c2_est`
    pub fn to_barrier_csv(&self) -> String {
        let mut s = String::from("inequality,zone,min_margin,x,y,z,c2_est\n");
        for e in &self.entries {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                e.check_id,
                e.zone,
                fmt_num(e.margin),
                fmt_num(e.coords[0]),
                fmt_num(e.coords[1]),
                fmt_num(e.coords[2]),
                fmt_num(e.aux)
            );
        }
        s
    }

    pub fn meta_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "config_hash={}",
            self.meta.config_hash.as_deref().unwrap_or("")
        );
        let _ = writeln!(s, "grid={}", self.meta.grid);
        for n in &self.meta.notes {
            let _ = writeln!(s, "note={n}");
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

const CHUNK: usize = 4096;

/// Minimum of `f(n)` over `0..len` (entries returning `None` are skipped) and its
/// first index. NaN counts as −∞. The reduction order depends only on `len`,
/// so the result is identical for any thread count.
pub fn argmin<F>(len: usize, f: F) -> Option<(f64, usize)>
where
    F: Fn(usize) -> Option<f64> + Sync,
{
    let chunks = len.div_ceil(CHUNK);
    let partial: Vec<Option<(f64, usize)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut best: Option<(f64, usize)> = None;
            for n in c * CHUNK..((c + 1) * CHUNK).min(len) {
                if let Some(v) = f(n) {
                    let v = if v.is_nan() { f64::NEG_INFINITY } else { v };
                    if best.is_none_or(|b| v < b.0) {
                        best = Some((v, n));
                    }
                }
            }
            best
        })
        .collect();
    let mut best: Option<(f64, usize)> = None;
    for (v, n) in partial.into_iter().flatten() {
        if best.is_none_or(|b| v < b.0) {
            best = Some((v, n));
        }
    }
    best
}

/// Node-wise minimum over a field's index space.
pub fn field_argmin<F>(dims: Dims, f: F) -> Option<(f64, Location)>
where
    F: Fn(usize, Location) -> Option<f64> + Sync,
{
    argmin(dims.len(), |n| f(n, dims.unravel(n))).map(|(v, n)| (v, dims.unravel(n)))
}
