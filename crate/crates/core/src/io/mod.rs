//! On-disk formats: camera text files, PFM float maps, binary PPM/PGM
//! images, PLY point clouds, the weight container and the project directory
//! layout that ties them together.

pub mod cam;
pub mod layout;
pub mod pfm;
pub mod ply;
pub mod pnm;
pub mod weights;

pub use cam::{format_cam, parse_cam, read_cam, write_cam, CamFile};
pub use layout::{read_pairs, write_pairs, ProjectLayout};
pub use pfm::{
    parse_pfm, pfm_bytes, read_confidence, read_depth, read_pfm, write_confidence, write_depth, write_pfm, FloatMap,
};
pub use ply::{ply_bytes, read_ply, write_ply, PlyFormat};
pub use pnm::{read_pnm, write_pnm};
pub use weights::{read_weights, write_weights, ModelWeights};

use std::fs;
use std::path::Path;

use crate::{Error, Result};

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Splits `bytes` at the end of the `count`-th newline-terminated line.
pub(crate) fn split_header_lines(bytes: &[u8], count: usize) -> Option<(Vec<&str>, &[u8])> {
    let mut lines = Vec::with_capacity(count);
    let mut rest = bytes;
    while lines.len() < count {
        let end = rest.iter().position(|&b| b == b'\n')?;
        lines.push(std::str::from_utf8(&rest[..end]).ok()?.trim_end_matches('\r'));
        rest = &rest[end + 1..];
    }
    Some((lines, rest))
}
