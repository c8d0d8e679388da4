//! Snapshot CSV files, grayscale PPM heatmaps and the diagnostics log.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::{Grid2D, ScalarField};
use crate::sim::{DiagnosticsRecord, Snapshot};

pub const SNAPSHOT_HEADER: &str = "x,y,rho1,rho2,sum,pressure";

pub const DIAGNOSTICS_HEADER: &str = "step,time,mass1,mass2,energy,dynamic_cost,max_violation,\
complementarity,pressure_l1,sup_sum,fisher1,fisher2,congestion_dissipation,converged,iterations,primal,dual";

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Writes a binary grayscale PPM, one pixel per cell, `0 → black`,
/// `vmax → white`, top row at the largest `y`.
pub fn write_ppm(field: &ScalarField, vmax: f64, path: &Path) -> Result<()> {
    let g = field.grid;
    let mut bytes = format!("P6\n{} {}\n255\n", g.nx, g.ny).into_bytes();
    for j in (0..g.ny).rev() {
        for i in 0..g.nx {
            let v = field.values[g.idx(i, j)];
            let level = if v.is_nan() { 0.0 } else { (v / vmax).clamp(0.0, 1.0) };
            let byte = (255.0 * level).round() as u8;
            bytes.extend_from_slice(&[byte, byte, byte]);
        }
    }
    let mut w = create(path)?;
    w.write_all(&bytes).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// Paths written for snapshot `k`.
pub fn snapshot_paths(dir: &Path, step: usize) -> [PathBuf; 4] {
    [
        dir.join(format!("snap_{step}.csv")),
        dir.join(format!("rho1_{step}.ppm")),
        dir.join(format!("rho2_{step}.ppm")),
        dir.join(format!("sum_{step}.ppm")),
    ]
}

/// Writes `snap_<k>.csv` and the three heatmaps of a snapshot.
pub fn write_snapshot(snap: &Snapshot, dir: &Path, vmax: f64) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let [csv, p1, p2, ps] = snapshot_paths(dir, snap.step);
    let g = snap.rho.rho1.grid;
    let sum = snap.rho.sum();
    let mut w = create(&csv)?;
    let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "{SNAPSHOT_HEADER}")?;
        for (c, (x, y)) in g.centers().enumerate() {
            writeln!(
                w,
                "{:.11e},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e}",
                x, y, snap.rho.rho1.values[c], snap.rho.rho2.values[c], sum.values[c], snap.pressure.values[c]
            )?;
        }
        w.flush()
    };
    write(&mut w).map_err(|e| Error::io(&csv, e))?;
    write_ppm(&snap.rho.rho1, vmax, &p1)?;
    write_ppm(&snap.rho.rho2, vmax, &p2)?;
    write_ppm(&sum, vmax, &ps)
}

/// Columns of a snapshot CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotTable {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub rho1: Vec<f64>,
    pub rho2: Vec<f64>,
    pub sum: Vec<f64>,
    pub pressure: Vec<f64>,
}

impl SnapshotTable {
    pub fn field(&self, grid: Grid2D, column: &[f64]) -> Result<ScalarField> {
        ScalarField::new(grid, column.to_vec())
    }
}

pub fn read_snapshot(path: &Path) -> Result<SnapshotTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next() != Some(SNAPSHOT_HEADER) {
        return Err(Error::config(path.display().to_string(), format!("expected header `{SNAPSHOT_HEADER}`")));
    }
    let mut t = SnapshotTable {
        x: vec![],
        y: vec![],
        rho1: vec![],
        rho2: vec![],
        sum: vec![],
        pressure: vec![],
    };
    for (r, line) in lines.enumerate() {
        let v: Vec<f64> = line
            .split(',')
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::config(path.display().to_string(), format!("row {}: {e}", r + 1)))?;
        if v.len() != 6 {
            return Err(Error::config(path.display().to_string(), format!("row {} has {} columns", r + 1, v.len())));
        }
        for (col, val) in [&mut t.x, &mut t.y, &mut t.rho1, &mut t.rho2, &mut t.sum, &mut t.pressure]
            .into_iter()
            .zip(v)
        {
            col.push(val);
        }
    }
    Ok(t)
}

/// `diagnostics.csv`, one row per record.
pub struct DiagnosticsWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl DiagnosticsWriter {
    /// Creates (or truncates) `dir/diagnostics.csv` and writes the header.
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("diagnostics.csv");
        let mut out = create(&path)?;
        writeln!(out, "{DIAGNOSTICS_HEADER}").map_err(|e| Error::io(&path, e))?;
        Ok(DiagnosticsWriter { path, out })
    }

    pub fn append(&mut self, r: &DiagnosticsRecord) -> Result<()> {
        writeln!(
            self.out,
            "{},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e},{:.11e},{},{},{:.11e},{:.11e}",
            r.step,
            r.time,
            r.mass1,
            r.mass2,
            r.energy,
            r.dynamic_cost,
            r.max_violation,
            r.complementarity,
            r.pressure_l1,
            r.sup_sum,
            r.fisher[0],
            r.fisher[1],
            r.congestion_dissipation,
            r.converged,
            r.iterations,
            r.primal,
            r.dual
        )
        .and_then(|_| self.out.flush())
        .map_err(|e| Error::io(&self.path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::DensityPair;

    fn snapshot(g: Grid2D, f: impl Fn(f64, f64) -> f64) -> Snapshot {
        let rho = DensityPair::new(ScalarField::from_fn(g, &f), ScalarField::from_fn(g, |x, y| f(y, x) / 3.0)).unwrap();
        Snapshot {
            step: 7,
            time: 0.07,
            pressure: rho.rho1.map(|v| v * 1e-3),
            rho,
        }
    }

    fn ppm_pixels(path: &Path) -> (String, Vec<u8>) {
        let bytes = std::fs::read(path).unwrap();
        let header_len = bytes.iter().enumerate().filter(|(_, b)| **b == b'\n').nth(2).unwrap().0 + 1;
        (String::from_utf8(bytes[..header_len].to_vec()).unwrap(), bytes[header_len..].to_vec())
    }

    #[test]
    fn zero_fields_give_black_images_and_zero_rows() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid2D::new(5, 3, [0.0, 1.0, 0.0, 1.0]).unwrap();
        write_snapshot(&snapshot(g, |_, _| 0.0), dir.path(), 1.0).unwrap();
        let [csv, p1, p2, ps] = snapshot_paths(dir.path(), 7);
        for p in [p1, p2, ps] {
            let (header, pixels) = ppm_pixels(&p);
            assert_eq!(header, "P6\n5 3\n255\n");
            assert_eq!(pixels, vec![0; 45]);
        }
        let t = read_snapshot(&csv).unwrap();
        assert_eq!(t.rho1.len(), 15);
        assert!(t.rho1.iter().chain(&t.rho2).chain(&t.sum).chain(&t.pressure).all(|v| *v == 0.0));
    }

    #[test]
    fn csv_round_trip_keeps_twelve_digits() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid2D::new(6, 4, [-0.5, 0.5, -0.5, 0.5]).unwrap();
        let snap = snapshot(g, |x, y| (3.0 * x + 1.7).exp() * (y + 0.9).sqrt() / 7.0);
        write_snapshot(&snap, dir.path(), 1.0).unwrap();
        let t = read_snapshot(&snapshot_paths(dir.path(), 7)[0]).unwrap();
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(u, v)| (u - v).abs() <= 5e-12 * v.abs());
        assert!(close(&t.rho1, &snap.rho.rho1.values));
        assert!(close(&t.rho2, &snap.rho.rho2.values));
        assert!(close(&t.pressure, &snap.pressure.values));
        let centers: Vec<(f64, f64)> = g.centers().collect();
        assert!(t.x.iter().zip(&centers).all(|(x, c)| (x - c.0).abs() < 1e-12));
    }

    #[test]
    fn heatmap_scaling_and_orientation() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid2D::new(2, 2, [0.0, 1.0, 0.0, 1.0]).unwrap();
        let f = ScalarField::new(g, vec![0.0, 0.5, 1.0, 2.0]).unwrap();
        let p = dir.path().join("f.ppm");
        write_ppm(&f, 1.0, &p).unwrap();
        let (_, px) = ppm_pixels(&p);
        // top row is j = 1: values 1.0, 2.0 (clipped)
        assert_eq!(px, vec![255, 255, 255, 255, 255, 255, 0, 0, 0, 128, 128, 128]);
        write_ppm(&f, 2.0, &p).unwrap();
        assert_eq!(ppm_pixels(&p).1[..3], [128, 128, 128]);
    }

    #[test]
    fn diagnostics_rows_match_header() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = DiagnosticsWriter::create(dir.path()).unwrap();
        let r = DiagnosticsRecord {
            step: 1,
            time: 0.01,
            mass1: 0.09,
            mass2: 0.09,
            energy: 1.0,
            dynamic_cost: 0.0,
            max_violation: 0.0,
            complementarity: 0.0,
            pressure_l1: 0.0,
            sup_sum: 1.0,
            fisher: [0.0, 0.0],
            congestion_dissipation: f64::NAN,
            converged: true,
            iterations: 3,
            primal: 0.0,
            dual: 0.0,
        };
        w.append(&r).unwrap();
        drop(w);
        let text = std::fs::read_to_string(dir.path().join("diagnostics.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].split(',').count(), lines[1].split(',').count());
        assert!(lines[1].contains(",true,3,"));
    }
}
