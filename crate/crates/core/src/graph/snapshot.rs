//! Versioned little-endian binary snapshot of a [`BipartiteGraph`].
//!
//! Layout: magic `POCGRAPH`, `u32` version, `u64` card/location/edge counts,
//! card offsets (`u64`), card adjacency (`u32`), location offsets (`u64`),
//! location adjacency (`u32`), fraud flags (`u8`), card id table and location
//! key table (`u32` byte length + UTF-8, plus an `i64` week for locations).

use std::io::{self, Read, Write};

use thiserror::Error;

use super::{BipartiteGraph, GraphError, LocationBucket};

const MAGIC: &[u8; 8] = b"POCGRAPH";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a graph snapshot (bad magic)")]
    BadMagic,
    #[error("unsupported snapshot version {0}")]
    Version(u32),
    #[error("corrupt snapshot: {0}")]
    Corrupt(&'static str),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

pub fn write_snapshot<W: Write>(graph: &BipartiteGraph, mut out: W) -> io::Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    for n in [graph.num_cards(), graph.num_locations(), graph.num_edges()] {
        out.write_all(&(n as u64).to_le_bytes())?;
    }
    write_u64s(&mut out, &graph.card_offsets)?;
    write_u32s(&mut out, &graph.card_locations)?;
    write_u64s(&mut out, &graph.location_offsets)?;
    write_u32s(&mut out, &graph.location_cards)?;
    let flags: Vec<u8> = graph.fraud.iter().map(|&f| f as u8).collect();
    out.write_all(&flags)?;
    for id in &graph.card_ids {
        write_str(&mut out, id)?;
    }
    for key in &graph.location_keys {
        write_str(&mut out, &key.terminal_id)?;
        out.write_all(&key.week_index.to_le_bytes())?;
    }
    out.flush()
}

pub fn read_snapshot<R: Read>(mut input: R) -> Result<BipartiteGraph, SnapshotError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(SnapshotError::BadMagic);
    }
    let version = u32::from_le_bytes(read_array(&mut input)?);
    if version != VERSION {
        return Err(SnapshotError::Version(version));
    }
    let num_cards = read_len(&mut input)?;
    let num_locations = read_len(&mut input)?;
    let num_edges = read_len(&mut input)?;

    let card_offsets = read_offsets(&mut input, num_cards + 1)?;
    let card_locations = read_u32s(&mut input, num_edges)?;
    let location_offsets = read_offsets(&mut input, num_locations + 1)?;
    let location_cards = read_u32s(&mut input, num_edges)?;
    let mut flags = vec![0u8; num_cards];
    input.read_exact(&mut flags)?;
    if flags.iter().any(|&f| f > 1) {
        return Err(SnapshotError::Corrupt("fraud flag not 0/1"));
    }
    let card_ids = (0..num_cards)
        .map(|_| read_str(&mut input))
        .collect::<Result<Vec<_>, _>>()?;
    let location_keys = (0..num_locations)
        .map(|_| {
            let terminal = read_str(&mut input)?;
            let week = i64::from_le_bytes(read_array(&mut input)?);
            Ok(LocationBucket::new(terminal, week))
        })
        .collect::<Result<Vec<_>, SnapshotError>>()?;

    if card_offsets.last() != Some(&num_edges) || location_offsets.last() != Some(&num_edges) {
        return Err(SnapshotError::Corrupt("offsets do not match edge count"));
    }
    if card_offsets.windows(2).any(|w| w[0] > w[1]) {
        return Err(SnapshotError::Corrupt("card offsets not monotone"));
    }
    let edges = (0..num_cards).flat_map(|c| {
        card_locations[card_offsets[c]..card_offsets[c + 1]]
            .iter()
            .map(move |&l| (c as u32, l))
    });
    let fraud = flags.iter().map(|&f| f == 1).collect();
    let graph = BipartiteGraph::from_edges(card_ids, location_keys, fraud, edges)?;
    if graph.card_locations != card_locations
        || graph.location_offsets != location_offsets
        || graph.location_cards != location_cards
    {
        return Err(SnapshotError::Corrupt("adjacency arrays are not a sorted transpose pair"));
    }
    Ok(graph)
}

fn write_u64s<W: Write>(out: &mut W, values: &[usize]) -> io::Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 8);
    for &v in values {
        buf.extend_from_slice(&(v as u64).to_le_bytes());
    }
    out.write_all(&buf)
}

fn write_u32s<W: Write>(out: &mut W, values: &[u32]) -> io::Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 4);
    for &v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)
}

fn write_str<W: Write>(out: &mut W, s: &str) -> io::Result<()> {
    out.write_all(&(s.len() as u32).to_le_bytes())?;
    out.write_all(s.as_bytes())
}

fn read_array<R: Read, const N: usize>(input: &mut R) -> io::Result<[u8; N]> {
    let mut buf = [0u8; N];
    input.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_len<R: Read>(input: &mut R) -> Result<usize, SnapshotError> {
    usize::try_from(u64::from_le_bytes(read_array(input)?))
        .map_err(|_| SnapshotError::Corrupt("count overflows usize"))
}

fn read_offsets<R: Read>(input: &mut R, n: usize) -> Result<Vec<usize>, SnapshotError> {
    (0..n).map(|_| read_len(input)).collect()
}

fn read_u32s<R: Read>(input: &mut R, n: usize) -> io::Result<Vec<u32>> {
    let mut raw = vec![0u8; n * 4];
    input.read_exact(&mut raw)?;
    Ok(raw
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn read_str<R: Read>(input: &mut R) -> Result<String, SnapshotError> {
    let len = u32::from_le_bytes(read_array(input)?) as usize;
    let mut raw = vec![0u8; len];
    input.read_exact(&mut raw)?;
    String::from_utf8(raw).map_err(|_| SnapshotError::Corrupt("token is not UTF-8"))
}
