//! EFLD binary field files and CSV export.
//!
//! Layout (little-endian): magic `EFLD`, `u32` version, `u32` rank, `u32`
//! spatial dimension (3), `u32 dims[3]`, `f64 lengths[3]`, then one full
//! block of `f64` per component with axis 0 varying fastest. Rank 2 stores
//! the six entries of a trace-free symmetric tensor and rank 3 a general
//! symmetric tensor, both in `SYM_COMPONENTS` order.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use conformal_core::grid::SYM_COMPONENTS;
use conformal_core::{Grid, ScalarField, SymTensorField, TracelessSymField, VectorField};

use crate::CliError;

pub const MAGIC: &[u8; 4] = b"EFLD";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 * 6 + 8 * 3;

#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Scalar(ScalarField),
    Vector(VectorField),
    Traceless(TracelessSymField),
    Symmetric(SymTensorField),
}

impl Field {
    pub fn rank(&self) -> u32 {
        match self {
            Field::Scalar(_) => 0,
            Field::Vector(_) => 1,
            Field::Traceless(_) => 2,
            Field::Symmetric(_) => 3,
        }
    }

    pub fn grid(&self) -> &Grid {
        match self {
            Field::Scalar(f) => f.grid(),
            Field::Vector(f) => f.grid(),
            Field::Traceless(f) => f.grid(),
            Field::Symmetric(f) => f.grid(),
        }
    }

    pub fn blocks(&self) -> Vec<&[f64]> {
        match self {
            Field::Scalar(f) => vec![f.values()],
            Field::Vector(f) => f.components().iter().map(Vec::as_slice).collect(),
            Field::Traceless(f) => f.components().iter().map(Vec::as_slice).collect(),
            Field::Symmetric(f) => f.components().iter().map(Vec::as_slice).collect(),
        }
    }

    fn component_names(&self) -> Vec<String> {
        match self {
            Field::Scalar(_) => vec!["value".into()],
            Field::Vector(_) => (0..3).map(|a| format!("v{a}")).collect(),
            Field::Traceless(_) | Field::Symmetric(_) => {
                SYM_COMPONENTS.iter().map(|(a, b)| format!("t{a}{b}")).collect()
            }
        }
    }

    pub fn into_scalar(self) -> Result<ScalarField, CliError> {
        match self {
            Field::Scalar(f) => Ok(f),
            other => Err(CliError::input(format!("expected a scalar field, found rank {}", other.rank()))),
        }
    }

    pub fn into_vector(self) -> Result<VectorField, CliError> {
        match self {
            Field::Vector(f) => Ok(f),
            other => Err(CliError::input(format!("expected a vector field, found rank {}", other.rank()))),
        }
    }

    pub fn into_traceless(self) -> Result<TracelessSymField, CliError> {
        match self {
            Field::Traceless(f) => Ok(f),
            other => Err(CliError::input(format!(
                "expected a trace-free tensor field, found rank {}",
                other.rank()
            ))),
        }
    }
}

fn block_count(rank: u32) -> Option<usize> {
    match rank {
        0 => Some(1),
        1 => Some(3),
        2 | 3 => Some(6),
        _ => None,
    }
}

pub fn encode(field: &Field) -> Result<Vec<u8>, CliError> {
    let g = field.grid();
    let blocks = field.blocks();
    if blocks.iter().any(|b| b.iter().any(|v| !v.is_finite())) {
        return Err(CliError::input("refusing to write a non-finite field"));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * g.len() * blocks.len());
    out.extend_from_slice(MAGIC);
    for word in [VERSION, field.rank(), 3] {
        out.extend_from_slice(&word.to_le_bytes());
    }
    for d in g.dims() {
        let d = u32::try_from(d).map_err(|_| CliError::input("grid too large for the file format"))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for l in g.lengths() {
        out.extend_from_slice(&l.to_le_bytes());
    }
    for block in blocks {
        for v in block {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

fn f64_at(bytes: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap())
}

pub fn decode(bytes: &[u8]) -> Result<Field, CliError> {
    if bytes.len() < HEADER_LEN {
        return Err(CliError::input("field file is shorter than its header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(CliError::input("bad magic: not an EFLD file"));
    }
    let version = u32_at(bytes, 4);
    if version != VERSION {
        return Err(CliError::input(format!("unsupported EFLD version {version}")));
    }
    let rank = u32_at(bytes, 8);
    let blocks = block_count(rank).ok_or_else(|| CliError::input(format!("unsupported rank {rank}")))?;
    let n = u32_at(bytes, 12);
    if n != 3 {
        return Err(CliError::input(format!("expected a 3-dimensional field, found n = {n}")));
    }
    let dims = [0, 1, 2].map(|a| u32_at(bytes, 16 + 4 * a) as usize);
    let lengths = [0, 1, 2].map(|a| f64_at(bytes, 28 + 8 * a));
    let grid = Grid::new(dims, lengths).map_err(CliError::from)?;
    let len = grid.len();
    let expected = HEADER_LEN + 8 * len * blocks;
    if bytes.len() != expected {
        return Err(CliError::input(format!(
            "payload holds {} bytes, expected {}",
            bytes.len() - HEADER_LEN,
            expected - HEADER_LEN
        )));
    }
    let mut comps: Vec<Vec<f64>> = (0..blocks)
        .map(|b| (0..len).map(|i| f64_at(bytes, HEADER_LEN + 8 * (b * len + i))).collect())
        .collect();
    if comps.iter().flatten().any(|v| !v.is_finite()) {
        return Err(CliError::input("field file contains non-finite values"));
    }
    let field = match rank {
        0 => Field::Scalar(ScalarField::new(grid, comps.pop().unwrap())?),
        1 => Field::Vector(VectorField::new(grid, take_array(comps))?),
        2 => Field::Traceless(TracelessSymField::new(grid, take_array(comps))?),
        _ => Field::Symmetric(SymTensorField::new(grid, take_array(comps))?),
    };
    Ok(field)
}

fn take_array<const N: usize>(comps: Vec<Vec<f64>>) -> [Vec<f64>; N] {
    comps.try_into().expect("block count checked against rank")
}

pub fn write(path: &Path, field: &Field) -> Result<(), CliError> {
    let bytes = encode(field)?;
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn read(path: &Path) -> Result<Field, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode(&bytes).map_err(|e| e.context(&path.display().to_string()))
}

/// Reads a field and checks that its grid matches `expected`.
pub fn read_on(path: &Path, expected: &Grid) -> Result<Field, CliError> {
    let field = read(path)?;
    if field.grid() != expected {
        return Err(CliError::input(format!(
            "{}: grid {:?} x {:?} does not match the configured {:?} x {:?}",
            path.display(),
            field.grid().dims(),
            field.grid().lengths(),
            expected.dims(),
            expected.lengths()
        )));
    }
    Ok(field)
}

/// One row per cell: the integer index, the coordinates, then every component.
pub fn to_csv(field: &Field) -> String {
    let g = field.grid();
    let blocks = field.blocks();
    let mut s = String::from("i,j,k,x,y,z");
    for name in field.component_names() {
        s.push(',');
        s.push_str(&name);
    }
    s.push('\n');
    for idx in 0..g.len() {
        let [i, j, k] = g.multi_index(idx);
        let [x, y, z] = g.coords(idx);
        let _ = write!(s, "{i},{j},{k},{x:e},{y:e},{z:e}");
        for b in &blocks {
            let _ = write!(s, ",{:e}", b[idx]);
        }
        s.push('\n');
    }
    s
}

pub fn write_csv(path: &Path, field: &Field) -> Result<(), CliError> {
    fs::write(path, to_csv(field)).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::new([4, 5, 4], [1.0, 2.5, 0.75]).unwrap()
    }

    #[test]
    fn header_layout() {
        let f = Field::Scalar(ScalarField::constant(grid(), 1.5));
        let bytes = encode(&f).unwrap();
        assert_eq!(&bytes[..4], b"EFLD");
        assert_eq!(u32_at(&bytes, 4), 1);
        assert_eq!(u32_at(&bytes, 8), 0);
        assert_eq!(u32_at(&bytes, 12), 3);
        assert_eq!([u32_at(&bytes, 16), u32_at(&bytes, 20), u32_at(&bytes, 24)], [4, 5, 4]);
        assert_eq!(f64_at(&bytes, 36), 2.5);
        assert_eq!(bytes.len(), HEADER_LEN + 8 * 80);
    }

    #[test]
    fn rejects_wrong_version_and_rank() {
        let mut bytes = encode(&Field::Scalar(ScalarField::zeros(grid()))).unwrap();
        bytes[4] = 2;
        assert!(decode(&bytes).is_err());
        bytes[4] = 1;
        bytes[8] = 7;
        assert!(decode(&bytes).is_err());
    }

    #[test]
    fn csv_has_header_and_one_row_per_cell() {
        let f = Field::Vector(VectorField::constant(grid(), [1.0, 2.0, 3.0]));
        let csv = to_csv(&f);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "i,j,k,x,y,z,v0,v1,v2");
        assert_eq!(lines.len(), 81);
        assert!(lines[1].ends_with(",1e0,2e0,3e0"));
    }
}
