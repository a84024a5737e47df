use serde::{Deserialize, Serialize};
use std::path::Path;

use super::{BasisMode, BasisSet};
use crate::domain::{DomainSpec, GridResolution};
use crate::error::{Error, Result};

pub const BASIS_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct BasisFile {
    format_version: u32,
    domain: DomainSpec,
    oversampling: f64,
    nodes: Option<[usize; 3]>,
    grid_shape: [usize; 3],
    hash: String,
    modes: Vec<BasisMode>,
}

/// Serialize a basis to versioned JSON. Floats round-trip exactly.
pub fn export_basis(basis: &BasisSet) -> Result<String> {
    let res = basis.resolution();
    let file = BasisFile {
        format_version: BASIS_FORMAT_VERSION,
        domain: *basis.domain(),
        oversampling: res.oversampling,
        nodes: res.nodes,
        grid_shape: basis.grid().shape,
        hash: basis.hash().to_string(),
        modes: basis.modes().to_vec(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

/// Rebuild a basis from [`export_basis`] output and check its hash.
pub fn import_basis(text: &str) -> Result<BasisSet> {
    let file: BasisFile = serde_json::from_str(text)?;
    if file.format_version != BASIS_FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported basis format version {} (expected {BASIS_FORMAT_VERSION})",
            file.format_version
        )));
    }
    let res = GridResolution {
        oversampling: file.oversampling,
        nodes: file.nodes,
    };
    let basis = BasisSet::from_parts(file.domain, file.modes, res)?;
    if basis.grid().shape != file.grid_shape || basis.hash() != file.hash {
        return Err(Error::Format(format!(
            "basis hash mismatch: file {} rebuilt {}",
            file.hash,
            basis.hash()
        )));
    }
    Ok(basis)
}

pub fn write_basis(basis: &BasisSet, path: &Path) -> Result<()> {
    std::fs::write(path, export_basis(basis)?)?;
    Ok(())
}

pub fn read_basis(path: &Path) -> Result<BasisSet> {
    import_basis(&std::fs::read_to_string(path)?)
}
