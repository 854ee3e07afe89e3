//! Versioned JSON format for tree networks.

use std::collections::BTreeMap;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{IndexId, IndexInfo, Node, NodeId, TreeNetwork};
use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

pub const FORMAT_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
struct IndexRecord {
    id: IndexId,
    size: usize,
    free: bool,
}

#[derive(Serialize, Deserialize)]
struct NodeRecord {
    id: NodeId,
    indices: Vec<IndexId>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct NetworkFile {
    version: u64,
    indices: Vec<IndexRecord>,
    free_order: Vec<IndexId>,
    reshape_map: IndexMap<IndexId, Vec<IndexId>>,
    nodes: Vec<NodeRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    next_id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    center: Option<NodeId>,
}

#[derive(Deserialize)]
struct VersionProbe {
    version: u64,
}

fn parse_error(e: serde_json::Error) -> Error {
    Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

/// Serializes `net` to JSON. Output is deterministic and floats round-trip exactly.
pub fn serialize(net: &TreeNetwork) -> String {
    let file = NetworkFile {
        version: FORMAT_VERSION,
        indices: net
            .indices
            .iter()
            .map(|(&id, info)| IndexRecord {
                id,
                size: info.size,
                free: info.free,
            })
            .collect(),
        free_order: net.free_order.clone(),
        reshape_map: net.reshape_map.clone(),
        nodes: net
            .nodes
            .iter()
            .map(|(&id, n)| NodeRecord {
                id,
                indices: n.indices.clone(),
                values: n.core.values().to_vec(),
            })
            .collect(),
        next_id: Some(net.next_id),
        center: net.center,
    };
    serde_json::to_string_pretty(&file).expect("network serializes")
}

/// Parses and validates a network written by [`serialize`].
pub fn deserialize(text: &str) -> Result<TreeNetwork> {
    let probe: VersionProbe = serde_json::from_str(text).map_err(parse_error)?;
    if probe.version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(probe.version));
    }
    let file: NetworkFile = serde_json::from_str(text).map_err(parse_error)?;
    let mut indices = BTreeMap::new();
    for r in &file.indices {
        let info = IndexInfo {
            size: r.size,
            free: r.free,
        };
        if indices.insert(r.id, info).is_some() {
            return Err(Error::InvalidArgument(format!(
                "index {} declared twice",
                r.id
            )));
        }
    }
    let mut nodes = BTreeMap::new();
    for r in file.nodes {
        let mut shape = Vec::with_capacity(r.indices.len());
        for i in &r.indices {
            match indices.get(i) {
                Some(info) => shape.push(info.size),
                None => {
                    return Err(Error::InvalidArgument(format!(
                        "node {} references unknown index {i}",
                        r.id
                    )))
                }
            }
        }
        let core = DenseTensor::new(shape, r.values)?;
        if nodes
            .insert(
                r.id,
                Node {
                    indices: r.indices,
                    core,
                },
            )
            .is_some()
        {
            return Err(Error::InvalidArgument(format!(
                "node {} declared twice",
                r.id
            )));
        }
    }
    let mut net = TreeNetwork::from_parts(indices, nodes, file.free_order, file.reshape_map)?;
    if let Some(next) = file.next_id {
        if next < net.next_id {
            return Err(Error::InvalidArgument(format!(
                "next_id {next} collides with existing ids"
            )));
        }
        net.next_id = next;
    }
    if let Some(c) = file.center {
        if !net.nodes.contains_key(&c) {
            return Err(Error::InvalidArgument(format!("center {c} is not a node")));
        }
        net.center = Some(c);
    }
    Ok(net)
}
