//! Search outputs: `history.csv`, `genomes.json`, `pareto.csv`, `stats.csv`
//! and `scatter.svg`. Every writer has a matching reader.

mod svg;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{NetworkGraph, OpKind};
use crate::search::{Candidate, ObjectiveSpec, SearchHistory};
use crate::searchspace::Genome;

pub use svg::{emit_scatter, render_scatter, ScatterAxes, ScatterPoint};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One `history.csv` / `pareto.csv` row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub id: String,
    pub parent_id: Option<String>,
    pub params: u64,
    pub macs: u64,
    pub rom: u64,
    pub ram: u64,
    pub latency_proxy: f64,
    pub val_accuracy: Option<f64>,
    pub status: String,
}

impl From<(&Candidate, &SearchHistory)> for HistoryRow {
    fn from((c, h): (&Candidate, &SearchHistory)) -> Self {
        Self {
            id: c.id.clone(),
            parent_id: c.parent.map(|p| h.candidates[p].id.clone()),
            params: c.cost.params,
            macs: c.cost.macs,
            rom: c.cost.rom_bytes,
            ram: c.cost.ram_bytes,
            latency_proxy: c.cost.latency_proxy,
            val_accuracy: c.val_accuracy,
            status: c.status.label().to_string(),
        }
    }
}

pub fn history_rows(history: &SearchHistory) -> Vec<HistoryRow> {
    history.candidates.iter().map(|c| HistoryRow::from((c, history))).collect()
}

pub fn pareto_rows(history: &SearchHistory, objectives: &[ObjectiveSpec]) -> Vec<HistoryRow> {
    history.pareto(objectives).into_iter().map(|c| HistoryRow::from((c, history))).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenomeRecord {
    pub id: String,
    pub genome: Genome,
}

pub fn genome_records(history: &SearchHistory) -> Vec<GenomeRecord> {
    history.candidates.iter().map(|c| GenomeRecord { id: c.id.clone(), genome: c.genome.clone() }).collect()
}

/// Depth and width of one successfully evaluated candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationStatsRow {
    pub id: String,
    pub birth_index: usize,
    /// Number of descriptor blocks, classifier included.
    pub depth: usize,
    pub max_channels: usize,
    pub params: u64,
    pub val_accuracy: f64,
}

/// Widest channel dimension of any feature map, the input included. The
/// classifier's logit vector is not a feature map and is skipped.
pub fn max_channels(graph: &NetworkGraph) -> usize {
    graph
        .nodes()
        .iter()
        .filter(|n| !matches!(n.op, OpKind::Linear { .. }))
        .map(|n| graph.shape(n.id).channels)
        .max()
        .unwrap_or(0)
}

pub fn population_stats(history: &SearchHistory) -> Vec<PopulationStatsRow> {
    history
        .ok()
        .map(|c| PopulationStatsRow {
            id: c.id.clone(),
            birth_index: c.birth_index,
            depth: c.architecture.depth(),
            max_channels: max_channels(&c.graph),
            params: c.cost.params,
            val_accuracy: c.val_accuracy.expect("ok candidates are scored"),
        })
        .collect()
}

pub fn write_csv<T: Serialize>(rows: &[T], path: impl AsRef<Path>) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<Vec<T>, ReportError> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(ReportError::from)).collect()
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: impl AsRef<Path>) -> Result<(), ReportError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_genomes(path: impl AsRef<Path>) -> Result<Vec<GenomeRecord>, ReportError> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// File names written by [`write_outputs`].
pub const HISTORY_CSV: &str = "history.csv";
pub const GENOMES_JSON: &str = "genomes.json";
pub const PARETO_CSV: &str = "pareto.csv";
pub const STATS_CSV: &str = "stats.csv";
pub const SCATTER_SVG: &str = "scatter.svg";

/// Writes the full output set of a search into `dir`.
pub fn write_outputs(
    history: &SearchHistory,
    pareto_objectives: &[ObjectiveSpec],
    axes: &ScatterAxes,
    dir: impl AsRef<Path>,
) -> Result<(), ReportError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_csv(&history_rows(history), dir.join(HISTORY_CSV))?;
    write_json(&genome_records(history), dir.join(GENOMES_JSON))?;
    write_csv(&pareto_rows(history, pareto_objectives), dir.join(PARETO_CSV))?;
    write_csv(&population_stats(history), dir.join(STATS_CSV))?;
    let points: Vec<ScatterPoint> = history
        .ok()
        .map(|c| ScatterPoint {
            x: c.objective(axes.x.objective).expect("scored"),
            y: c.objective(axes.y.objective).expect("scored"),
        })
        .collect();
    emit_scatter(&points, axes, dir.join(SCATTER_SVG))?;
    Ok(())
}
