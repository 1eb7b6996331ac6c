//! Artifact writers: trajectory/scoreboard/regime-map/sweep CSVs, the catalog
//! JSON, and the run manifest. Numeric CSV fields use 17 significant digits
//! so written values round-trip exactly and golden-file comparisons are
//! byte-stable.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::catalog::RegimeMapRow;
use crate::diagnostics::{regime_name, SweepCell};
use crate::error::Result;
use crate::pipeline::{PipelineOutput, ScoreRow};
use crate::traj::TrajectorySet;

/// Full round-trip float formatting (17 significant digits).
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".to_string() } else { "-inf".to_string() }
    } else {
        format!("{:.16e}", v)
    }
}

/// Write a trajectory set as CSV with columns
/// `traj_id, t, x1..xn, dx1..dxn, regime_label`.
pub fn write_trajectory_csv(path: &Path, set: &TrajectorySet) -> Result<()> {
    let n = set.n_states();
    let mut out = String::new();
    out.push_str("traj_id,t");
    for j in 0..n {
        write!(out, ",x{}", j + 1).unwrap();
    }
    for j in 0..n {
        write!(out, ",dx{}", j + 1).unwrap();
    }
    out.push_str(",regime_label\n");
    for i in 0..set.n_samples() {
        write!(out, "{},{}", set.trajectory_of(i), fmt_f64(set.times[i])).unwrap();
        for j in 0..n {
            write!(out, ",{}", fmt_f64(set.states[(i, j)])).unwrap();
        }
        for j in 0..n {
            write!(out, ",{}", fmt_f64(set.derivs[(i, j)])).unwrap();
        }
        writeln!(out, ",{}", set.regime_labels[i]).unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

#[derive(Serialize)]
struct CatalogJson {
    library: LibraryJson,
    entries: Vec<EntryJson>,
    total_contributions: usize,
}

#[derive(Serialize)]
struct LibraryJson {
    n_states: usize,
    max_order: usize,
    terms: Vec<Vec<u32>>,
    names: Vec<String>,
}

#[derive(Serialize)]
struct EntryJson {
    signature: String,
    positions: Vec<(u16, u16)>,
    frequency: usize,
    mean_aicc: f64,
    representative_coefficients: Vec<Vec<f64>>,
    contributions: Vec<ContributionJson>,
}

#[derive(Serialize)]
struct ContributionJson {
    anchor: usize,
    aicc: f64,
    coefficients: Vec<Vec<f64>>,
}

fn matrix_rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Serialize the catalog (frequency-ranked) together with the library term
/// descriptors. Output is deterministic for a fixed pipeline result.
pub fn catalog_json(output: &PipelineOutput) -> String {
    let entries = output
        .catalog
        .rank_by_frequency(usize::MAX)
        .into_iter()
        .map(|(sig, entry)| EntryJson {
            signature: sig.to_string(),
            positions: sig.0.iter().cloned().collect(),
            frequency: entry.frequency(),
            mean_aicc: entry.mean_aicc(),
            representative_coefficients: entry
                .representative_coefficients()
                .map(|m| matrix_rows(&m))
                .unwrap_or_default(),
            contributions: entry
                .contributions
                .iter()
                .map(|c| ContributionJson {
                    anchor: c.anchor,
                    aicc: c.aicc,
                    coefficients: matrix_rows(&c.coefficients),
                })
                .collect(),
        })
        .collect();
    let doc = CatalogJson {
        library: LibraryJson {
            n_states: output.library.n_states(),
            max_order: output.library.max_order(),
            terms: output.library.terms().to_vec(),
            names: output.library.names().to_vec(),
        },
        entries,
        total_contributions: output.catalog.total_contributions(),
    };
    serde_json::to_string_pretty(&doc).expect("catalog serializes")
}

pub fn write_catalog_json(path: &Path, output: &PipelineOutput) -> Result<()> {
    fs::write(path, catalog_json(output))?;
    Ok(())
}

/// Per-anchor regime map: best retained model (or `unresolved`) with the
/// anchor's clustering coordinates and time.
pub fn write_regime_map_csv(path: &Path, rows: &[RegimeMapRow]) -> Result<()> {
    let d = rows.first().map(|r| r.coordinates.len()).unwrap_or(0);
    let mut out = String::new();
    out.push_str("anchor_index,t");
    for j in 0..d {
        write!(out, ",y{}", j + 1).unwrap();
    }
    out.push_str(",status,signature,k,aicc\n");
    for row in rows {
        write!(out, "{},{}", row.anchor, fmt_f64(row.time)).unwrap();
        for c in &row.coordinates {
            write!(out, ",{}", fmt_f64(*c)).unwrap();
        }
        match &row.best {
            Some(best) => writeln!(
                out,
                ",resolved,{},{},{}",
                best.signature,
                best.k,
                fmt_f64(best.aicc)
            )
            .unwrap(),
            None => writeln!(out, ",unresolved,,,").unwrap(),
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_scoreboard_csv(path: &Path, rows: &[ScoreRow]) -> Result<()> {
    let mut out = String::from("anchor_index,model_signature,k,aicc,rel_aicc\n");
    for row in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            row.anchor,
            row.signature,
            row.k,
            fmt_f64(row.aicc),
            fmt_f64(row.rel_aicc)
        )
        .unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_sweep_csv(path: &Path, cells: &[SweepCell]) -> Result<()> {
    let mut out = String::from("regime,K,epsilon,kappa,kappa_eps,success_fraction,skipped\n");
    for cell in cells {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            regime_name(cell.regime),
            cell.cluster_size,
            fmt_f64(cell.noise_std),
            fmt_f64(cell.condition_number),
            fmt_f64(cell.kappa_eps),
            fmt_f64(cell.success_fraction),
            cell.skipped
        )
        .unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

/// Provenance record written next to every command's outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub root_seed: u64,
    pub version: String,
    pub created_utc: String,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, config_hash: String, root_seed: u64) -> Self {
        RunManifest {
            command: command.to_string(),
            config_hash,
            root_seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            created_utc: chrono::Utc::now().to_rfc3339(),
            outputs: Vec::new(),
        }
    }

    pub fn record(&mut self, path: &Path) {
        self.outputs.push(
            path.file_name()
                .map(|f| f.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string()),
        );
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(self).expect("manifest serializes"))?;
        Ok(path)
    }
}
