//! Newline-delimited JSON forest files: one header record, then one tree per line.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{BenchmarkError, DescriptorSchema, Forest, ForestConfig, Tree};
use crate::ids::LabelSet;

pub const FOREST_FORMAT: &str = "pte-forest";
pub const FOREST_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    labels: LabelSet,
    schema: DescriptorSchema,
    config: ForestConfig,
    trees: usize,
}

pub fn write_forest<W: Write>(forest: &Forest, mut out: W) -> std::io::Result<()> {
    let header = Header {
        format: FOREST_FORMAT.to_string(),
        version: FOREST_VERSION,
        labels: forest.labels.clone(),
        schema: forest.schema.clone(),
        config: forest.config.clone(),
        trees: forest.trees.len(),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for tree in &forest.trees {
        serde_json::to_writer(&mut out, tree)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_forest<R: BufRead>(input: R) -> Result<Forest, BenchmarkError> {
    let mut lines = input.lines().enumerate();
    let format_err = |line: usize, message: String| BenchmarkError::Format { line, message };
    let (_, first) = lines
        .next()
        .ok_or_else(|| format_err(1, "missing header".into()))?;
    let first = first.map_err(|e| format_err(1, e.to_string()))?;
    let header: Header = serde_json::from_str(&first).map_err(|e| format_err(1, e.to_string()))?;
    if header.format != FOREST_FORMAT || header.version != FOREST_VERSION {
        return Err(format_err(
            1,
            format!("unsupported format {} v{}", header.format, header.version),
        ));
    }
    let mut trees = Vec::with_capacity(header.trees);
    for (i, line) in lines {
        let line = line.map_err(|e| format_err(i + 1, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let tree: Tree = serde_json::from_str(&line).map_err(|e| format_err(i + 1, e.to_string()))?;
        tree.validate(header.labels.len(), header.schema.feature_count())
            .map_err(|m| format_err(i + 1, m))?;
        trees.push(tree);
    }
    if trees.len() != header.trees || trees.is_empty() {
        return Err(format_err(
            1,
            format!("header announces {} trees, found {}", header.trees, trees.len()),
        ));
    }
    Ok(Forest {
        schema: header.schema,
        labels: header.labels,
        config: header.config,
        trees,
    })
}
