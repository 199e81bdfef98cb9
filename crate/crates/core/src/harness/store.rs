use std::fs;
use std::path::{Path, PathBuf};

use super::RunRecord;
use crate::grad::Checkpoint;
use crate::importance::{maps_jsonl, ImportanceMap};
use crate::masking::MaskRecord;

/// Directory layout:
/// `<root>/runs/<plan-hash>/<measure|shared>/<seed>/<iteration>/`
/// holding `record.json`, `checkpoint.json`, `importance.jsonl` and
/// `masks.jsonl`.
#[derive(Clone, Debug)]
pub struct RunStore {
    root: PathBuf,
}

impl RunStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn run_dir(&self, plan_hash: &str, record: &RunRecord) -> PathBuf {
        let group = record.measure.map_or("shared", |m| m.name());
        self.root
            .join("runs")
            .join(plan_hash)
            .join(group)
            .join(record.seed.to_string())
            .join(record.iteration.to_string())
    }

    pub fn write(
        &self,
        plan_hash: &str,
        record: &RunRecord,
        checkpoint: Option<&Checkpoint>,
        maps: Option<&[ImportanceMap]>,
        masks: &[Vec<usize>],
    ) -> std::io::Result<()> {
        let dir = self.run_dir(plan_hash, record);
        fs::create_dir_all(&dir)?;
        let mut json = serde_json::to_string_pretty(record).expect("record serializes");
        json.push('\n');
        fs::write(dir.join("record.json"), json)?;
        if let Some(c) = checkpoint {
            c.save(&dir.join("checkpoint.json"))?;
        }
        if let Some(m) = maps {
            fs::write(dir.join("importance.jsonl"), maps_jsonl(m))?;
        }
        let mut lines = String::new();
        for (obs_id, positions) in masks.iter().enumerate() {
            let rec = MaskRecord { obs_id: obs_id as u64, iteration: record.iteration, masked_positions: positions.clone() };
            lines.push_str(&serde_json::to_string(&rec).expect("mask record serializes"));
            lines.push('\n');
        }
        fs::write(dir.join("masks.jsonl"), lines)
    }

    /// Every `record.json` below `runs/`, in path order.
    pub fn records(&self) -> std::io::Result<Vec<RunRecord>> {
        let mut paths = Vec::new();
        collect(&self.root.join("runs"), &mut paths)?;
        paths.sort();
        paths
            .iter()
            .map(|p| {
                let text = fs::read_to_string(p)?;
                serde_json::from_str(&text)
                    .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}: {e}", p.display())))
            })
            .collect()
    }
}

fn collect(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    if !dir.is_dir() {
        return Ok(());
    }
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect(&path, out)?;
        } else if path.file_name().is_some_and(|n| n == "record.json") {
            out.push(path);
        }
    }
    Ok(())
}
