//! Dataset manifests and on-disk formats.
//!
//! A dataset is a JSON manifest naming four data files:
//!
//! - `edges_file`: two-column integer CSV, one edge per line
//! - `features_file`: CSV of reals (one node per row), or raw binary when
//!   the file ends in `.bin` (8-byte header: u32 rows, u32 cols,
//!   little-endian; then row-major little-endian f32)
//! - `labels_file`: one integer per line
//! - `splits_file`: CSV `node_index,split` with split in {train,val,test};
//!   an optional `node_index,split` header line is skipped
//!
//! Paths in the manifest are resolved relative to the manifest location.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{GraphDataset, Splits};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    graph_id: String,
    num_nodes: usize,
    num_classes: usize,
    edges_file: String,
    features_file: String,
    labels_file: String,
    splits_file: String,
}

/// Load and validate a dataset from its manifest.
pub fn load_dataset(manifest_path: impl AsRef<Path>) -> Result<GraphDataset> {
    let manifest_path = manifest_path.as_ref();
    let text =
        fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: manifest_path.into(),
        reason: e.to_string(),
    })?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let resolve = |rel: &str| -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            p.into()
        } else {
            base.join(p)
        }
    };

    let edges = read_edges(&resolve(&manifest.edges_file), manifest.num_nodes)?;
    let features = read_features(&resolve(&manifest.features_file), manifest.num_nodes)?;
    let labels = read_labels(&resolve(&manifest.labels_file))?;
    let splits = read_splits(&resolve(&manifest.splits_file), manifest.num_nodes)?;

    GraphDataset::new(
        manifest.graph_id,
        manifest.num_nodes,
        edges,
        features,
        labels,
        manifest.num_classes,
        splits,
    )
}

/// Write a dataset under `dir` (manifest.json plus the four data files).
/// Returns the manifest path. Feature values are printed in shortest
/// round-trip decimal form, so a reload reproduces the dataset exactly.
pub fn save_dataset(g: &GraphDataset, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, content: String| -> Result<()> {
        let path = dir.join(name);
        let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        f.write_all(content.as_bytes())
            .map_err(|e| Error::io(&path, e))
    };

    let mut edges = String::new();
    for &(u, v) in &g.edges {
        edges.push_str(&format!("{u},{v}\n"));
    }
    write("edges.csv", edges)?;

    let mut feats = String::new();
    for row in g.features.rows() {
        let cells: Vec<String> = row.iter().map(|x| format!("{x}")).collect();
        feats.push_str(&cells.join(","));
        feats.push('\n');
    }
    write("features.csv", feats)?;

    let mut labels = String::new();
    for &l in &g.labels {
        labels.push_str(&format!("{l}\n"));
    }
    write("labels.txt", labels)?;

    let mut splits = String::from("node_index,split\n");
    for (name, ids) in [
        ("train", &g.splits.train),
        ("val", &g.splits.val),
        ("test", &g.splits.test),
    ] {
        for &i in ids.iter() {
            splits.push_str(&format!("{i},{name}\n"));
        }
    }
    write("splits.csv", splits)?;

    let manifest = Manifest {
        graph_id: g.graph_id.clone(),
        num_nodes: g.num_nodes,
        num_classes: g.num_classes,
        edges_file: "edges.csv".into(),
        features_file: "features.csv".into(),
        labels_file: "labels.txt".into(),
        splits_file: "splits.csv".into(),
    };
    let manifest_path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&manifest_path, json).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest_path)
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(|l| l.to_string()).collect())
}

fn read_edges(path: &Path, num_nodes: usize) -> Result<Vec<(usize, usize)>> {
    let mut edges = Vec::new();
    for (idx, line) in read_lines(path)?.iter().enumerate() {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut cells = line.split(',');
        let mut next = |what: &str| -> Result<usize> {
            cells
                .next()
                .map(str::trim)
                .ok_or_else(|| Error::parse(path, lineno, format!("missing {what}")))?
                .parse::<usize>()
                .map_err(|_| Error::parse(path, lineno, format!("invalid {what}: `{line}`")))
        };
        let u = next("source node")?;
        let v = next("target node")?;
        if cells.next().is_some() {
            return Err(Error::parse(path, lineno, "expected exactly two columns"));
        }
        for w in [u, v] {
            if w >= num_nodes {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("node index {w} out of range (num_nodes = {num_nodes})"),
                ));
            }
        }
        edges.push((u, v));
    }
    Ok(edges)
}

fn read_features(path: &Path, num_nodes: usize) -> Result<Array2<f32>> {
    if path.extension().is_some_and(|e| e == "bin") {
        return read_features_binary(path, num_nodes);
    }
    let lines = read_lines(path)?;
    let mut rows: Vec<Vec<f32>> = Vec::new();
    let mut width: Option<usize> = None;
    for (idx, line) in lines.iter().enumerate() {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<f32> = line
            .split(',')
            .map(|cell| {
                cell.trim()
                    .parse::<f32>()
                    .map_err(|_| Error::parse(path, lineno, format!("invalid real: `{cell}`")))
            })
            .collect::<Result<_>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("ragged feature row: {} values, expected {w}", row.len()),
                ))
            }
            _ => {}
        }
        rows.push(row);
    }
    if rows.len() != num_nodes {
        return Err(Error::Format {
            path: path.into(),
            reason: format!("{} feature rows, expected {num_nodes}", rows.len()),
        });
    }
    let dim = width.unwrap_or(0);
    let flat: Vec<f32> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((num_nodes, dim), flat).map_err(|e| Error::Format {
        path: path.into(),
        reason: e.to_string(),
    })
}

fn read_features_binary(path: &Path, num_nodes: usize) -> Result<Array2<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |reason: String| Error::Format {
        path: path.into(),
        reason,
    };
    if bytes.len() < 8 {
        return Err(bad("file shorter than the 8-byte header".into()));
    }
    let rows = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if rows != num_nodes {
        return Err(bad(format!("{rows} feature rows, expected {num_nodes}")));
    }
    let expected = 8 + rows * cols * 4;
    if bytes.len() != expected {
        return Err(bad(format!(
            "expected {expected} bytes for {rows}x{cols} f32 matrix, found {}",
            bytes.len()
        )));
    }
    let data: Vec<f32> = bytes[8..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Array2::from_shape_vec((rows, cols), data).map_err(|e| bad(e.to_string()))
}

/// Write features in the raw binary layout understood by `load_dataset`.
pub fn write_features_binary(features: &Array2<f32>, path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 + features.len() * 4);
    bytes.extend_from_slice(&(features.nrows() as u32).to_le_bytes());
    bytes.extend_from_slice(&(features.ncols() as u32).to_le_bytes());
    for x in features.iter() {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let mut labels = Vec::new();
    for (idx, line) in read_lines(path)?.iter().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let l = line
            .parse::<usize>()
            .map_err(|_| Error::parse(path, idx + 1, format!("invalid label: `{line}`")))?;
        labels.push(l);
    }
    Ok(labels)
}

fn read_splits(path: &Path, num_nodes: usize) -> Result<Splits> {
    let mut splits = Splits::default();
    for (idx, line) in read_lines(path)?.iter().enumerate() {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() || (lineno == 1 && line == "node_index,split") {
            continue;
        }
        let (node, split) = line
            .split_once(',')
            .ok_or_else(|| Error::parse(path, lineno, "expected `node_index,split`"))?;
        let node = node
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::parse(path, lineno, format!("invalid node index: `{node}`")))?;
        if node >= num_nodes {
            return Err(Error::parse(
                path,
                lineno,
                format!("node index {node} out of range (num_nodes = {num_nodes})"),
            ));
        }
        match split.trim() {
            "train" => splits.train.push(node),
            "val" => splits.val.push(node),
            "test" => splits.test.push(node),
            other => {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("unknown split `{other}` (expected train/val/test)"),
                ))
            }
        }
    }
    Ok(splits)
}
