//! Output plumbing: float formatting, atomic writes and CSV helpers.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use faer::MatRef;

use crate::error::Result;
use crate::types::Trajectory;

/// Shortest representation that parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Row-major matrix CSV with a header row of column (cell) indices.
pub fn matrix_csv(m: MatRef<'_, f64>) -> String {
    let mut s = String::from("cell");
    for j in 0..m.ncols() {
        let _ = write!(s, ",{j}");
    }
    s.push('\n');
    for i in 0..m.nrows() {
        let _ = write!(s, "{i}");
        for j in 0..m.ncols() {
            s.push(',');
            s.push_str(&fmt_f64(m[(i, j)]));
        }
        s.push('\n');
    }
    s
}

/// Long-format trajectory: `time,cell_id,kind,species,value`.
///
/// Species are the intracellular components by name, then `u` and, when the
/// trajectory carries them, the sampled field `v`.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let all: Vec<usize> = (0..traj.kinds.len()).collect();
    trajectory_csv_cells(traj, &all)
}

/// [`trajectory_csv`] restricted to the listed cells, which keep their ids.
pub fn trajectory_csv_cells(traj: &Trajectory, cells: &[usize]) -> String {
    let offsets = traj.offsets();
    let mut s = String::from("time,cell_id,kind,species,value\n");
    for (k, &t) in traj.times.iter().enumerate() {
        let t = fmt_f64(t);
        for &c in cells {
            let kind = traj.kinds[c];
            let kname = kind.as_str();
            for (sp, name) in kind.species_names().iter().enumerate() {
                let v = traj.states[k][offsets[c] + sp];
                let _ = writeln!(s, "{t},{c},{kname},{name},{}", fmt_f64(v));
            }
            let _ = writeln!(s, "{t},{c},{kname},u,{}", fmt_f64(traj.signals[k][c]));
            if let Some(f) = &traj.field_samples {
                let _ = writeln!(s, "{t},{c},{kname},v,{}", fmt_f64(f[k][c]));
            }
        }
    }
    s
}

/// Wide, whitespace-separated columns with a `#` header, for one cell.
pub fn plot_data(traj: &Trajectory, cell: usize) -> String {
    let kind = traj.kinds[cell];
    let mut s = String::from("# time");
    for name in kind.species_names() {
        let _ = write!(s, " {name}");
    }
    s.push_str(" u");
    if traj.field_samples.is_some() {
        s.push_str(" v");
    }
    s.push('\n');
    for k in 0..traj.len() {
        let _ = write!(s, "{}", fmt_f64(traj.times[k]));
        for v in traj.cell_state(k, cell) {
            let _ = write!(s, " {}", fmt_f64(*v));
        }
        let _ = write!(s, " {}", fmt_f64(traj.signals[k][cell]));
        if let Some(f) = &traj.field_samples {
            let _ = write!(s, " {}", fmt_f64(f[k][cell]));
        }
        s.push('\n');
    }
    s
}
