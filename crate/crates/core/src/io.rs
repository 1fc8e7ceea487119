//! Dataset loaders: edge lists, feature CSVs, TU-format directories and JSON
//! manifests.
//!
//! Edge lists are whitespace-separated `u v` pairs; `#` starts a comment.
//! A `# nodes: N` comment pins the node count and disables reindexing, which
//! is how [`write_edge_list`] preserves isolated nodes.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use nalgebra::DMatrix;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::graph::{Graph, GraphSet};

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Deduplicates undirected pairs and drops self-loops, logging how many
/// loops were discarded.
fn clean_edges(path: &Path, raw: Vec<(usize, usize)>) -> Vec<(usize, usize)> {
    let mut loops = 0usize;
    let mut set = BTreeSet::new();
    for (u, v) in raw {
        if u == v {
            loops += 1;
        } else {
            set.insert((u.min(v), u.max(v)));
        }
    }
    if loops > 0 {
        warn!("{}: dropped {loops} self-loop(s)", path.display());
    }
    set.into_iter().collect()
}

pub fn parse_edge_list(path: &Path, text: &str) -> Result<Graph> {
    let mut declared: Option<usize> = None;
    let mut raw = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(n) = comment.trim().strip_prefix("nodes:") {
                let n = n
                    .trim()
                    .parse::<usize>()
                    .map_err(|e| parse_err(path, lineno, format!("bad node count: {e}")))?;
                declared = Some(n);
            }
            continue;
        }
        let mut fields = line.split_whitespace();
        let (Some(a), Some(b), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(parse_err(path, lineno, "expected two node ids"));
        };
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| parse_err(path, lineno, format!("invalid node id {s:?}")))
        };
        let (u, v) = (parse(a)?, parse(b)?);
        if let Some(n) = declared {
            if u >= n || v >= n {
                return Err(parse_err(
                    path,
                    lineno,
                    format!("node id out of range for declared {n} nodes"),
                ));
            }
        }
        raw.push((u, v));
    }

    if let Some(n) = declared {
        let edges = clean_edges(path, raw);
        return Graph::new(n, edges, None).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            msg: e.to_string(),
        });
    }

    // Reindex densely by ascending original id.
    let ids: BTreeSet<usize> = raw.iter().flat_map(|&(u, v)| [u, v]).collect();
    if ids.is_empty() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: "edge list has no edges".into(),
        });
    }
    let index: BTreeMap<usize, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let raw = raw
        .into_iter()
        .map(|(u, v)| (index[&u], index[&v]))
        .collect();
    let edges = clean_edges(path, raw);
    Graph::new(index.len(), edges, None).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

pub fn load_edge_list(path: impl AsRef<Path>) -> Result<Graph> {
    let path = path.as_ref();
    parse_edge_list(path, &read(path)?)
}

/// Serializes a graph in the edge-list format, including a `# nodes:` line.
pub fn format_edge_list(g: &Graph) -> String {
    let mut out = format!("# nodes: {}\n", g.node_count());
    for &(u, v) in g.edges() {
        out.push_str(&format!("{u} {v}\n"));
    }
    out
}

pub fn write_edge_list(g: &Graph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_edge_list(g)).map_err(|e| Error::io(path, e))
}

/// Parses comma-separated real rows; blank lines and `#` lines are skipped.
pub fn parse_matrix_csv(path: &Path, text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| {
                let f = f.trim();
                f.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| parse_err(path, idx + 1, format!("invalid number {f:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(
                    path,
                    idx + 1,
                    format!("expected {} columns, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn load_feature_csv(path: impl AsRef<Path>, g: Graph) -> Result<Graph> {
    let path = path.as_ref();
    let x = parse_matrix_csv(path, &read(path)?)?;
    if x.nrows() != g.node_count() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: format!(
                "feature file has {} rows but the graph has {} nodes",
                x.nrows(),
                g.node_count()
            ),
        });
    }
    g.with_features(Some(x)).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

pub fn format_matrix_csv(x: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for row in x.row_iter() {
        let fields: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Locates the `<prefix>_A.txt` file of a TU dataset directory.
fn tu_prefix(dir: &Path) -> Result<(PathBuf, String)> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut found = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(prefix) = name.strip_suffix("_A.txt") {
            found.push(prefix.to_string());
        }
    }
    found.sort();
    match found.as_slice() {
        [one] => Ok((dir.to_path_buf(), one.clone())),
        [] => Err(Error::Format {
            path: dir.to_path_buf(),
            msg: "no *_A.txt file found".into(),
        }),
        _ => Err(Error::Format {
            path: dir.to_path_buf(),
            msg: format!("multiple datasets found: {found:?}"),
        }),
    }
}

fn parse_index_lines(path: &Path, text: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v = line
            .parse::<usize>()
            .map_err(|_| parse_err(path, idx + 1, format!("invalid index {line:?}")))?;
        if v == 0 {
            return Err(parse_err(path, idx + 1, "indices are 1-based"));
        }
        out.push(v);
    }
    Ok(out)
}

/// Loads a TU-format dataset (`DS_A.txt`, `DS_graph_indicator.txt`, optional
/// `DS_node_attributes.txt`). Directed pairs are symmetrized.
pub fn load_tu_dataset(dir: impl AsRef<Path>) -> Result<GraphSet> {
    let (dir, prefix) = tu_prefix(dir.as_ref())?;
    let a_path = dir.join(format!("{prefix}_A.txt"));
    let gi_path = dir.join(format!("{prefix}_graph_indicator.txt"));
    let attr_path = dir.join(format!("{prefix}_node_attributes.txt"));

    let indicator = parse_index_lines(&gi_path, &read(&gi_path)?)?;
    let total = indicator.len();
    if total == 0 {
        return Err(Error::Format {
            path: gi_path,
            msg: "graph indicator is empty".into(),
        });
    }
    let graph_count = *indicator.iter().max().unwrap();

    // Local index of every global node within its graph.
    let mut sizes = vec![0usize; graph_count];
    let mut local = Vec::with_capacity(total);
    for &gid in &indicator {
        local.push(sizes[gid - 1]);
        sizes[gid - 1] += 1;
    }
    if let Some(empty) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::Format {
            path: gi_path,
            msg: format!("graph id {} has no nodes", empty + 1),
        });
    }

    let mut raw_edges = vec![Vec::new(); graph_count];
    let a_text = read(&a_path)?;
    for (idx, line) in a_text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        let [a, b] = parts.as_slice() else {
            return Err(parse_err(&a_path, lineno, "expected \"u, v\""));
        };
        let parse = |s: &str| {
            s.parse::<usize>()
                .ok()
                .filter(|&v| v >= 1)
                .ok_or_else(|| parse_err(&a_path, lineno, format!("invalid node id {s:?}")))
        };
        let (u, v) = (parse(a)? - 1, parse(b)? - 1);
        if u >= total || v >= total {
            return Err(parse_err(
                &a_path,
                lineno,
                format!("node id beyond graph indicator ({total} nodes)"),
            ));
        }
        let (gu, gv) = (indicator[u], indicator[v]);
        if gu != gv {
            return Err(parse_err(
                &a_path,
                lineno,
                format!("edge joins graphs {gu} and {gv}"),
            ));
        }
        raw_edges[gu - 1].push((local[u], local[v]));
    }

    let attributes = if attr_path.exists() {
        let x = parse_matrix_csv(&attr_path, &read(&attr_path)?)?;
        if x.nrows() != total {
            return Err(Error::Format {
                path: attr_path,
                msg: format!("{} attribute rows for {total} nodes", x.nrows()),
            });
        }
        Some(x)
    } else {
        None
    };

    let mut members: Vec<Vec<usize>> = sizes.iter().map(|&s| Vec::with_capacity(s)).collect();
    for (node, &gid) in indicator.iter().enumerate() {
        members[gid - 1].push(node);
    }

    let mut graphs = Vec::with_capacity(graph_count);
    for (gid, edges) in raw_edges.into_iter().enumerate() {
        let features = attributes.as_ref().map(|x| {
            let nodes = &members[gid];
            DMatrix::from_fn(nodes.len(), x.ncols(), |i, j| x[(nodes[i], j)])
        });
        let edges = clean_edges(&a_path, edges);
        let g = Graph::new(sizes[gid], edges, features).map_err(|e| Error::Format {
            path: a_path.clone(),
            msg: format!("graph {}: {e}", gid + 1),
        })?;
        graphs.push(g);
    }
    GraphSet::new(graphs)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    graphs: Vec<ManifestEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestEntry {
    edges: PathBuf,
    #[serde(default)]
    features: Option<PathBuf>,
}

/// Loads `{"graphs": [{"edges": <path>, "features": <path|null>}, ...]}`.
/// Relative paths resolve against the manifest's directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<GraphSet> {
    let path = path.as_ref();
    let manifest: Manifest = serde_json::from_str(&read(path)?).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut graphs = Vec::with_capacity(manifest.graphs.len());
    for entry in manifest.graphs {
        let g = load_edge_list(base.join(&entry.edges))?;
        let g = match entry.features {
            Some(f) => load_feature_csv(base.join(f), g)?,
            None => g,
        };
        graphs.push(g);
    }
    GraphSet::new(graphs).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

/// Loads either a manifest file or a TU dataset directory.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<GraphSet> {
    let path = path.as_ref();
    if path.is_dir() {
        load_tu_dataset(path)
    } else {
        load_manifest(path)
    }
}

/// Writes every graph of `set` next to a manifest at `path`.
pub fn write_manifest(set: &GraphSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let stem = path.file_stem().map_or_else(
        || "dataset".to_string(),
        |s| s.to_string_lossy().into_owned(),
    );
    let mut entries = Vec::new();
    for (i, g) in set.graphs().iter().enumerate() {
        let edges = format!("{stem}_g{i}.edges");
        write_edge_list(g, dir.join(&edges))?;
        let features = match g.features() {
            Some(x) => {
                let name = format!("{stem}_g{i}.csv");
                let p = dir.join(&name);
                fs::write(&p, format_matrix_csv(x)).map_err(|e| Error::io(&p, e))?;
                serde_json::Value::String(name)
            }
            None => serde_json::Value::Null,
        };
        entries.push(serde_json::json!({ "edges": edges, "features": features }));
    }
    let text = serde_json::to_string_pretty(&serde_json::json!({ "graphs": entries }))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::fixtures::arb_graph;
    use proptest::prelude::*;

    #[test]
    fn edge_list_basic() {
        let g = parse_edge_list(Path::new("x"), "0 1\n1 2").unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
    }

    #[test]
    fn edge_list_reindexes_and_skips_comments() {
        let g = parse_edge_list(Path::new("x"), "# header\n10 20\n\n20 30\n30 30\n").unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
    }

    #[test]
    fn edge_list_reports_line() {
        let err = parse_edge_list(Path::new("f.txt"), "0 1\n1 x\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_edge_list(Path::new("f"), "0 1 2\n").is_err());
        assert!(parse_edge_list(Path::new("f"), "# only comments\n").is_err());
    }

    #[test]
    fn feature_row_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        fs::write(&p, "1,2\n3,4\n").unwrap();
        let g = parse_edge_list(Path::new("x"), "0 1\n1 2").unwrap();
        assert!(matches!(load_feature_csv(&p, g), Err(Error::Format { .. })));
        let g = parse_edge_list(Path::new("x"), "0 1").unwrap();
        let g = load_feature_csv(&p, g).unwrap();
        assert_eq!(g.feature_dim(), Some(2));
    }

    #[test]
    fn tu_two_graphs() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("DS_A.txt"), "1, 2\n2, 1\n3, 4\n4, 3\n").unwrap();
        fs::write(dir.path().join("DS_graph_indicator.txt"), "1\n1\n2\n2\n").unwrap();
        fs::write(
            dir.path().join("DS_node_attributes.txt"),
            "0.5, 1\n1, 2\n3, 4\n5, 6\n",
        )
        .unwrap();
        let set = load_tu_dataset(dir.path()).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.feature_dim(), Some(2));
        assert_eq!(set.graphs()[1].edges(), &[(0, 1)]);
        assert_eq!(set.graphs()[1].features().unwrap()[(1, 1)], 6.0);
    }

    #[test]
    fn tu_dangling_indicator() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("DS_A.txt"), "1, 2\n").unwrap();
        // Graph 2 is skipped, leaving a gap in the ids.
        fs::write(dir.path().join("DS_graph_indicator.txt"), "1\n1\n3\n").unwrap();
        assert!(load_tu_dataset(dir.path()).is_err());

        fs::write(dir.path().join("DS_graph_indicator.txt"), "1\n").unwrap();
        assert!(load_tu_dataset(dir.path()).is_err());
    }

    #[test]
    fn manifest_missing_file_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("m.json");
        fs::write(
            &m,
            r#"{"graphs": [{"edges": "nope.txt", "features": null}]}"#,
        )
        .unwrap();
        let err = load_manifest(&m).unwrap_err();
        assert!(err.is_io());
        assert!(err.to_string().contains("nope.txt"));
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = parse_edge_list(Path::new("x"), "0 1\n1 2")
            .unwrap()
            .with_features(Some(DMatrix::from_row_slice(3, 1, &[0.1, 0.2, 1e-30])))
            .unwrap();
        let set = GraphSet::new(vec![g.clone(), g]).unwrap();
        let m = dir.path().join("set.json");
        write_manifest(&set, &m).unwrap();
        assert_eq!(load_dataset(&m).unwrap(), set);
    }

    proptest! {
        #[test]
        fn edge_list_round_trip(g in arb_graph(12)) {
            let back = parse_edge_list(Path::new("x"), &format_edge_list(&g)).unwrap();
            prop_assert_eq!(back.node_count(), g.node_count());
            prop_assert_eq!(back.edges(), g.edges());
        }
    }
}
