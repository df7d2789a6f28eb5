//! Checkpoint layout: the 8-byte magic `RINCKPT1`, a little-endian `u64`
//! manifest length, the JSON manifest, then every parameter block in the
//! binary matrix format (followed by the optimizer's first and second
//! moments when saved).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bptt::{Network, NetworkConfig};
use crate::error::{Error, Result};
use crate::numerics::{read_matrix, write_matrix, Scalar};
use crate::optim::{OptimConfig, OptimState};

const MAGIC: &[u8; 8] = b"RINCKPT1";

#[derive(Debug, Serialize, Deserialize)]
struct BlockEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct OptimEntry {
    config: OptimConfig,
    step: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    network: NetworkConfig,
    epoch: usize,
    blocks: Vec<BlockEntry>,
    optimizer: Option<OptimEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<S> {
    pub network: Network<S>,
    pub epoch: usize,
    pub optimizer: Option<(OptimConfig, OptimState<S>)>,
}

pub fn save_checkpoint<S: Scalar>(
    path: &Path,
    net: &Network<S>,
    epoch: usize,
    optimizer: Option<(&OptimConfig, &OptimState<S>)>,
) -> Result<()> {
    let blocks = net.blocks();
    let manifest = Manifest {
        network: net.config(),
        epoch,
        blocks: blocks
            .iter()
            .map(|(name, m)| BlockEntry {
                name: name.clone(),
                rows: m.rows(),
                cols: m.cols(),
            })
            .collect(),
        optimizer: optimizer.map(|(config, state)| OptimEntry {
            config: *config,
            step: state.step,
        }),
    };
    let json = serde_json::to_vec(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    let tmp = path.with_extension("partial");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        w.write_all(MAGIC)?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for (_, m) in &blocks {
            write_matrix(&mut w, m)?;
        }
        if let Some((_, state)) = optimizer {
            for m in state.first.iter().chain(&state.second) {
                write_matrix(&mut w, m)?;
            }
        }
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint<S: Scalar>(path: &Path) -> Result<Checkpoint<S>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Format(format!("{}: too short for a checkpoint", path.display())))?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("{}: not a checkpoint", path.display())));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)
        .map_err(|_| Error::Format("truncated checkpoint manifest".into()))?;
    let len = u64::from_le_bytes(len);
    if len > 1 << 24 {
        return Err(Error::Format(format!("implausible manifest length {len}")));
    }
    let mut json = vec![0u8; len as usize];
    r.read_exact(&mut json)
        .map_err(|_| Error::Format("truncated checkpoint manifest".into()))?;
    let manifest: Manifest = serde_json::from_slice(&json).map_err(|e| Error::Format(format!("manifest: {e}")))?;

    let mut network = Network::zeros(&manifest.network)?;
    {
        let mut blocks = network.blocks_mut();
        if blocks.len() != manifest.blocks.len() {
            return Err(Error::Format("manifest block list does not match the network".into()));
        }
        for ((name, block), entry) in blocks.iter_mut().zip(&manifest.blocks) {
            if *name != entry.name || block.shape() != (entry.rows, entry.cols) {
                return Err(Error::Format(format!("manifest entry {} does not match block {name}", entry.name)));
            }
            let m = read_matrix(&mut r)?;
            if m.shape() != block.shape() {
                return Err(Error::Format(format!("{name}: stored {:?}, expected {:?}", m.shape(), block.shape())));
            }
            **block = m;
        }
    }
    let optimizer = match manifest.optimizer {
        None => None,
        Some(entry) => {
            let mut state = OptimState::new(&network);
            state.step = entry.step;
            for m in state.first.iter_mut().chain(state.second.iter_mut()) {
                let stored = read_matrix(&mut r)?;
                if stored.shape() != m.shape() {
                    return Err(Error::Format("optimizer moment shape mismatch".into()));
                }
                *m = stored;
            }
            Some((entry.config, state))
        }
    };
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format(format!("{}: trailing bytes", path.display())));
    }
    Ok(Checkpoint {
        network,
        epoch: manifest.epoch,
        optimizer,
    })
}
