//! On-disk dataset layout and ingestion of public citation-graph dumps.
//!
//! A dataset directory contains:
//!
//! | file          | content                                                         |
//! |---------------|-----------------------------------------------------------------|
//! | `meta.json`   | `{num_nodes, num_features, num_classes, little_endian: true}`    |
//! | `features.f32`| little-endian `f32`, row-major `num_nodes × num_features`        |
//! | `labels.u32`  | little-endian `u32` class id per node                           |
//! | `edges.u32`   | little-endian `u32` pairs, each undirected edge once            |
//! | `masks.json`  | `{train: [ids], val: [ids], test: [ids]}`                        |

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::{build_graph, BuildReport, Graph, GraphError, Masks};
use crate::io::write_atomic;
use crate::rng::Rng;
use crate::sbm::{generate_sbm, SbmError, SbmSpec};
use crate::sparse::CsrMatrix;

pub const META_FILE: &str = "meta.json";
pub const FEATURES_FILE: &str = "features.f32";
pub const LABELS_FILE: &str = "labels.u32";
pub const EDGES_FILE: &str = "edges.u32";
pub const MASKS_FILE: &str = "masks.json";
const FILES: [&str; 5] = [META_FILE, FEATURES_FILE, LABELS_FILE, EDGES_FILE, MASKS_FILE];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset file {0} is missing")]
    Missing(String),
    #[error("{file}: {message}")]
    Malformed { file: &'static str, message: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub num_nodes: usize,
    pub num_features: usize,
    pub num_classes: usize,
    pub little_endian: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskIds {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl MaskIds {
    pub fn from_masks(m: &Masks) -> Self {
        Self {
            train: Masks::ids(&m.train),
            val: Masks::ids(&m.val),
            test: Masks::ids(&m.test),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub graph: Graph,
    pub build_report: BuildReport,
    /// SHA-256 over the five dataset files, hex encoded.
    pub checksum: String,
}

fn malformed(file: &'static str, message: impl Into<String>) -> DatasetError {
    DatasetError::Malformed {
        file,
        message: message.into(),
    }
}

fn read_file(dir: &Path, name: &str) -> Result<Vec<u8>, DatasetError> {
    let path = dir.join(name);
    if !path.is_file() {
        return Err(DatasetError::Missing(path.display().to_string()));
    }
    Ok(fs::read(path)?)
}

fn le_words(bytes: &[u8], file: &'static str) -> Result<Vec<[u8; 4]>, DatasetError> {
    if bytes.len() % 4 != 0 {
        return Err(malformed(file, format!("length {} is not a multiple of 4", bytes.len())));
    }
    Ok(bytes.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]).collect())
}

/// Prefix of a dataset reference that names a generated SBM graph instead
/// of a directory, e.g. `sbm:blocks=7 n=2000 p_in=0.05 p_out=0.002`.
pub const SBM_PREFIX: &str = "sbm:";

/// Loads a dataset directory, or generates an SBM graph (with `seed`) when
/// `reference` starts with `sbm:`.
pub fn open_dataset(reference: &str, seed: u64) -> Result<LoadedDataset, DatasetError> {
    let Some(spec) = reference.strip_prefix(SBM_PREFIX) else {
        return load_dataset(Path::new(reference));
    };
    let spec: SbmSpec = spec.parse().map_err(|e: SbmError| malformed("sbm", e.to_string()))?;
    let graph = generate_sbm(&spec, seed).map_err(|e| malformed("sbm", e.to_string()))?;
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&spec).expect("spec serializes"));
    h.update(seed.to_le_bytes());
    Ok(LoadedDataset {
        graph,
        build_report: BuildReport::default(),
        checksum: hex::encode(h.finalize()),
    })
}

pub fn load_dataset(dir: &Path) -> Result<LoadedDataset, DatasetError> {
    let meta_bytes = read_file(dir, META_FILE)?;
    let meta: DatasetMeta =
        serde_json::from_slice(&meta_bytes).map_err(|e| malformed(META_FILE, e.to_string()))?;
    if !meta.little_endian {
        return Err(malformed(META_FILE, "only little_endian: true is supported"));
    }
    let features_bytes = read_file(dir, FEATURES_FILE)?;
    let labels_bytes = read_file(dir, LABELS_FILE)?;
    let edges_bytes = read_file(dir, EDGES_FILE)?;
    let masks_bytes = read_file(dir, MASKS_FILE)?;

    let features: Vec<f32> = le_words(&features_bytes, FEATURES_FILE)?
        .into_iter()
        .map(f32::from_le_bytes)
        .collect();
    if features.len() != meta.num_nodes * meta.num_features {
        return Err(malformed(
            FEATURES_FILE,
            format!(
                "{} values, expected {} x {}",
                features.len(),
                meta.num_nodes,
                meta.num_features
            ),
        ));
    }
    let labels: Vec<u32> = le_words(&labels_bytes, LABELS_FILE)?
        .into_iter()
        .map(u32::from_le_bytes)
        .collect();
    if labels.len() != meta.num_nodes {
        return Err(malformed(
            LABELS_FILE,
            format!("{} labels for {} nodes", labels.len(), meta.num_nodes),
        ));
    }
    let words: Vec<u32> = le_words(&edges_bytes, EDGES_FILE)?
        .into_iter()
        .map(u32::from_le_bytes)
        .collect();
    if words.len() % 2 != 0 {
        return Err(malformed(EDGES_FILE, "odd number of endpoint ids"));
    }
    let edges: Vec<(usize, usize)> = words
        .chunks_exact(2)
        .map(|p| (p[0] as usize, p[1] as usize))
        .collect();
    let mask_ids: MaskIds =
        serde_json::from_slice(&masks_bytes).map_err(|e| malformed(MASKS_FILE, e.to_string()))?;
    let masks = Masks::from_ids(meta.num_nodes, &mask_ids.train, &mask_ids.val, &mask_ids.test)?;

    let (graph, build_report) = build_graph(
        &edges,
        CsrMatrix::from_dense(meta.num_nodes, meta.num_features, &features),
        labels,
        meta.num_classes,
        masks,
    )?;
    if build_report.dropped() > 0 {
        log::warn!(
            "dataset {}: dropped {} self-loops and {} duplicate edges",
            dir.display(),
            build_report.self_loops_dropped,
            build_report.duplicates_dropped
        );
    }

    let mut hasher = Sha256::new();
    for (name, bytes) in FILES.iter().zip([
        &meta_bytes,
        &features_bytes,
        &labels_bytes,
        &edges_bytes,
        &masks_bytes,
    ]) {
        hasher.update(name.as_bytes());
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(bytes);
    }
    Ok(LoadedDataset {
        graph,
        build_report,
        checksum: hex::encode(hasher.finalize()),
    })
}

/// Writes `g` in the dataset layout. Each edge is written once as `(u, v)`
/// with `u < v`.
pub fn write_dataset(g: &Graph, dir: &Path) -> Result<(), DatasetError> {
    fs::create_dir_all(dir)?;
    let meta = DatasetMeta {
        num_nodes: g.num_nodes(),
        num_features: g.num_features(),
        num_classes: g.num_classes(),
        little_endian: true,
    };
    let mut features = Vec::with_capacity(g.num_nodes() * g.num_features() * 4);
    for x in g.features().to_dense() {
        features.extend_from_slice(&x.to_le_bytes());
    }
    let mut labels = Vec::with_capacity(g.num_nodes() * 4);
    for &l in g.labels() {
        labels.extend_from_slice(&l.to_le_bytes());
    }
    let mut edges = Vec::with_capacity(g.num_edges() * 8);
    for (u, v) in g.edges() {
        edges.extend_from_slice(&(u as u32).to_le_bytes());
        edges.extend_from_slice(&(v as u32).to_le_bytes());
    }
    let masks = MaskIds::from_masks(g.masks());
    write_atomic(
        &dir.join(META_FILE),
        serde_json::to_string_pretty(&meta).expect("meta").as_bytes(),
    )?;
    write_atomic(&dir.join(FEATURES_FILE), &features)?;
    write_atomic(&dir.join(LABELS_FILE), &labels)?;
    write_atomic(&dir.join(EDGES_FILE), &edges)?;
    write_atomic(
        &dir.join(MASKS_FILE),
        serde_json::to_string(&masks).expect("masks").as_bytes(),
    )?;
    Ok(())
}

/// Per-class stratified split with the given train and validation
/// fractions; the rest of each class goes to test.
pub fn stratified_split(labels: &[u32], num_classes: usize, train: f64, val: f64, rng: &mut Rng) -> Masks {
    let n = labels.len();
    let mut masks = Masks::empty(n);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (v, &l) in labels.iter().enumerate() {
        by_class[l as usize].push(v);
    }
    for mut nodes in by_class {
        nodes.shuffle(rng);
        let c = nodes.len();
        let n_train = ((c as f64) * train).round() as usize;
        let n_val = (((c as f64) * val).round() as usize).min(c - n_train);
        for (i, &v) in nodes.iter().enumerate() {
            if i < n_train {
                masks.train[v] = true;
            } else if i < n_train + n_val {
                masks.val[v] = true;
            } else {
                masks.test[v] = true;
            }
        }
    }
    masks
}

/// Raw contents of a LINQS-style dump (`<name>.content` + `<name>.cites`).
#[derive(Debug, Clone)]
pub struct LinqsData {
    pub num_features: usize,
    /// Row-major dense features.
    pub features: Vec<f32>,
    pub labels: Vec<u32>,
    /// Class names, sorted; label `k` is `class_names[k]`.
    pub class_names: Vec<String>,
    pub edges: Vec<(usize, usize)>,
    /// Lines in the cites file.
    pub citation_records: usize,
    /// Citations naming a document absent from the content file.
    pub dangling_citations: usize,
}

/// Parses `<doc> <f_1> … <f_F> <class>` lines and `<cited> <citing>` lines.
pub fn parse_linqs(content: &str, cites: &str) -> Result<LinqsData, DatasetError> {
    const CONTENT: &str = "content";
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut rows: Vec<(Vec<f32>, &str)> = Vec::new();
    let mut num_features = None;
    for (lineno, line) in content.lines().enumerate() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        if tokens.len() < 3 {
            return Err(malformed(CONTENT, format!("line {}: too few fields", lineno + 1)));
        }
        let f = tokens.len() - 2;
        if *num_features.get_or_insert(f) != f {
            return Err(malformed(CONTENT, format!("line {}: {f} features, expected {}", lineno + 1, num_features.unwrap())));
        }
        let values = tokens[1..=f]
            .iter()
            .map(|t| t.parse::<f32>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| malformed(CONTENT, format!("line {}: {e}", lineno + 1)))?;
        if index.insert(tokens[0], rows.len()).is_some() {
            return Err(malformed(CONTENT, format!("duplicate document id {}", tokens[0])));
        }
        rows.push((values, tokens[f + 1]));
    }
    let class_names: Vec<String> = rows
        .iter()
        .map(|(_, c)| c.to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let class_id: HashMap<&str, u32> = class_names
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i as u32))
        .collect();
    let num_features = num_features.unwrap_or(0);
    let mut features = Vec::with_capacity(rows.len() * num_features);
    let mut labels = Vec::with_capacity(rows.len());
    for (values, class) in &rows {
        features.extend_from_slice(values);
        labels.push(class_id[class]);
    }

    let mut edges = Vec::new();
    let mut records = 0;
    let mut dangling = 0;
    for (lineno, line) in cites.lines().enumerate() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        if tokens.len() != 2 {
            return Err(malformed("cites", format!("line {}: expected 2 fields", lineno + 1)));
        }
        records += 1;
        match (index.get(tokens[0]), index.get(tokens[1])) {
            (Some(&a), Some(&b)) => edges.push((a, b)),
            _ => dangling += 1,
        }
    }
    Ok(LinqsData {
        num_features,
        features,
        labels,
        class_names,
        edges,
        citation_records: records,
        dangling_citations: dangling,
    })
}

/// Published statistics of the benchmark graphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KnownDataset {
    pub name: &'static str,
    pub nodes: usize,
    pub features: usize,
    pub edges: usize,
    pub classes: usize,
}

pub const KNOWN_DATASETS: [KnownDataset; 8] = [
    KnownDataset { name: "cora", nodes: 2708, features: 1433, edges: 5429, classes: 7 },
    KnownDataset { name: "citeseer", nodes: 3327, features: 3703, edges: 4732, classes: 6 },
    KnownDataset { name: "pubmed", nodes: 19717, features: 500, edges: 44338, classes: 3 },
    KnownDataset { name: "photo", nodes: 7487, features: 745, edges: 119043, classes: 8 },
    KnownDataset { name: "computers", nodes: 13381, features: 767, edges: 245778, classes: 10 },
    KnownDataset { name: "cs", nodes: 18333, features: 6805, edges: 81894, classes: 15 },
    KnownDataset { name: "physics", nodes: 34493, features: 8415, edges: 247962, classes: 5 },
    KnownDataset { name: "ogbn-arxiv", nodes: 169343, features: 128, edges: 2315598, classes: 40 },
];

pub fn known_dataset(name: &str) -> Option<KnownDataset> {
    let name = name.to_ascii_lowercase();
    KNOWN_DATASETS.iter().copied().find(|d| d.name == name)
}

/// Mismatches against the published statistics, as human-readable warnings.
/// `edges` is compared against both the raw record count and the number of
/// distinct undirected edges; matching either is accepted.
pub fn check_against(
    expected: &KnownDataset,
    nodes: usize,
    features: usize,
    edge_records: usize,
    unique_edges: usize,
    classes: usize,
) -> Vec<String> {
    let mut warnings = Vec::new();
    let mut check = |what: &str, want: usize, got: usize| {
        if want != got {
            warnings.push(format!("{}: expected {want} {what}, found {got}", expected.name));
        }
    };
    check("nodes", expected.nodes, nodes);
    check("features", expected.features, features);
    check("classes", expected.classes, classes);
    if expected.edges != edge_records && expected.edges != unique_edges {
        warnings.push(format!(
            "{}: expected {} edges, found {edge_records} records / {unique_edges} unique",
            expected.name, expected.edges
        ));
    }
    warnings
}
