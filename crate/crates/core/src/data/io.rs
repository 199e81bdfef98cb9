use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tabular::{TabularDataset, TabularRow};
use super::{DataError, GeneratorInfo, Observation, SplitKind, TokenDataset, Vocabulary};

const METADATA_FILE: &str = "metadata.json";

/// One line of a split file, with tokens spelled out as strings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JsonlRecord {
    pub tokens: Vec<String>,
    #[serde(default)]
    pub aux_tokens: Option<Vec<String>>,
    pub label: usize,
    #[serde(default)]
    pub evidence: Option<Vec<usize>>,
}

/// Sidecar `metadata.json` next to the split files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMetadata {
    pub kind: String,
    pub params: serde_json::Value,
    pub seed: u64,
    pub num_classes: usize,
    pub vocabulary: Vec<String>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io { path: path.display().to_string(), source }
}

pub(crate) fn metadata_json(ds: &TokenDataset) -> String {
    let meta = DatasetMetadata {
        kind: ds.generator.kind.clone(),
        params: ds.generator.params.clone(),
        seed: ds.generator.seed,
        num_classes: ds.num_classes,
        vocabulary: ds.vocab.tokens().to_vec(),
    };
    let mut s = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    s.push('\n');
    s
}

pub(crate) fn split_jsonl(ds: &TokenDataset, kind: SplitKind) -> String {
    let spell = |ids: &[usize]| ids.iter().map(|&i| ds.vocab.token(i).to_string()).collect::<Vec<_>>();
    let mut out = String::new();
    for obs in ds.split(kind) {
        let rec = JsonlRecord {
            tokens: spell(&obs.tokens),
            aux_tokens: obs.aux_tokens.as_deref().map(spell),
            label: obs.label,
            evidence: obs.evidence.clone(),
        };
        writeln!(out, "{}", serde_json::to_string(&rec).expect("record serializes")).unwrap();
    }
    out
}

/// Writes `metadata.json` and one `<split>.jsonl` per split into `dir`.
pub fn save_dataset(ds: &TokenDataset, dir: &Path) -> Result<(), DataError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let meta = dir.join(METADATA_FILE);
    fs::write(&meta, metadata_json(ds)).map_err(io_err(&meta))?;
    for kind in SplitKind::ALL {
        let path = dir.join(format!("{}.jsonl", kind.name()));
        fs::write(&path, split_jsonl(ds, kind)).map_err(io_err(&path))?;
    }
    Ok(())
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> DataError {
    DataError::Parse { path: path.display().to_string(), line, message: message.into() }
}

fn read_split(path: &Path, vocab: &Vocabulary, num_classes: usize) -> Result<Vec<Observation>, DataError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonlRecord = serde_json::from_str(line).map_err(|e| parse_error(path, line_no, e.to_string()))?;
        let lookup = |toks: &[String]| -> Result<Vec<usize>, DataError> {
            toks.iter()
                .map(|t| {
                    vocab.id(t).ok_or_else(|| DataError::UnknownToken {
                        path: path.display().to_string(),
                        line: line_no,
                        token: t.clone(),
                    })
                })
                .collect()
        };
        let tokens = lookup(&rec.tokens)?;
        let aux_tokens = rec.aux_tokens.as_deref().map(lookup).transpose()?;
        if rec.label >= num_classes {
            return Err(parse_error(path, line_no, format!("label {} outside [0, {num_classes})", rec.label)));
        }
        if tokens.first() != Some(&super::BOS) || tokens.last() != Some(&super::EOS) || tokens.len() < 2 {
            return Err(parse_error(path, line_no, "sequence must start with [BOS] and end with [EOS]"));
        }
        if let Some(ev) = &rec.evidence {
            if let Some(&bad) = ev.iter().find(|&&p| p >= tokens.len()) {
                return Err(parse_error(path, line_no, format!("evidence position {bad} out of range")));
            }
        }
        out.push(Observation { tokens, aux_tokens, label: rec.label, evidence: rec.evidence });
    }
    Ok(out)
}

pub fn load_dataset(dir: &Path) -> Result<TokenDataset, DataError> {
    let meta_path = dir.join(METADATA_FILE);
    let text = fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
    let meta: DatasetMetadata =
        serde_json::from_str(&text).map_err(|e| parse_error(&meta_path, e.line(), e.to_string()))?;
    let vocab = Vocabulary::from_tokens(meta.vocabulary)
        .ok_or_else(|| parse_error(&meta_path, 1, "vocabulary must start with the reserved special tokens"))?;
    if meta.num_classes < 2 {
        return Err(parse_error(&meta_path, 1, "num_classes must be at least 2"));
    }
    let mut splits = Vec::new();
    for kind in SplitKind::ALL {
        splits.push(read_split(&dir.join(format!("{}.jsonl", kind.name())), &vocab, meta.num_classes)?);
    }
    let test = splits.pop().unwrap();
    let validation = splits.pop().unwrap();
    let train = splits.pop().unwrap();
    Ok(TokenDataset {
        vocab,
        num_classes: meta.num_classes,
        train,
        validation,
        test,
        generator: GeneratorInfo { kind: meta.kind, params: meta.params, seed: meta.seed },
    })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TabularMetadata {
    kind: String,
    seed: u64,
    a: Vec<f64>,
    d: Vec<f64>,
}

pub fn save_tabular(ds: &TabularDataset, dir: &Path) -> Result<(), DataError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let meta = TabularMetadata { kind: "tabular".into(), seed: ds.seed, a: ds.a.clone(), d: ds.d.clone() };
    let meta_path = dir.join(METADATA_FILE);
    fs::write(&meta_path, serde_json::to_string_pretty(&meta).expect("metadata serializes") + "\n")
        .map_err(io_err(&meta_path))?;
    for kind in SplitKind::ALL {
        let mut s = String::new();
        for row in ds.split(kind) {
            writeln!(s, "{}", serde_json::to_string(row).expect("row serializes")).unwrap();
        }
        let path = dir.join(format!("{}.jsonl", kind.name()));
        fs::write(&path, s).map_err(io_err(&path))?;
    }
    Ok(())
}

pub fn load_tabular(dir: &Path) -> Result<TabularDataset, DataError> {
    let meta_path = dir.join(METADATA_FILE);
    let text = fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
    let meta: TabularMetadata =
        serde_json::from_str(&text).map_err(|e| parse_error(&meta_path, e.line(), e.to_string()))?;
    let mut splits = Vec::new();
    for kind in SplitKind::ALL {
        let path = dir.join(format!("{}.jsonl", kind.name()));
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let row: TabularRow = serde_json::from_str(line).map_err(|e| parse_error(&path, i + 1, e.to_string()))?;
            if row.features.len() != super::TABULAR_FEATURES {
                return Err(parse_error(&path, i + 1, format!("expected {} features", super::TABULAR_FEATURES)));
            }
            rows.push(row);
        }
        splits.push(rows);
    }
    let test = splits.pop().unwrap();
    let validation = splits.pop().unwrap();
    let train = splits.pop().unwrap();
    Ok(TabularDataset { a: meta.a, d: meta.d, seed: meta.seed, train, validation, test })
}
