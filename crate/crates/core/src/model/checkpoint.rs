//! MSQA checkpoint format.
//!
//! Little-endian layout: magic `MSQA`, u32 version (=1), u32 tensor count,
//! then per tensor: u32 name length, UTF-8 name, u32 rank, u32 dims[rank],
//! f32 data[product(dims)]. No padding anywhere; round-trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{ModelError, MultiScoreNet, Result};

const MAGIC: [u8; 4] = *b"MSQA";
const VERSION: u32 = 1;

pub fn save_checkpoint(net: &MultiScoreNet, path: &Path) -> Result<()> {
    let io_err = |source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    let entries = net.export_parameters();
    w.write_all(&MAGIC).map_err(io_err)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(entries.len() as u32).to_le_bytes()).map_err(io_err)?;
    for (name, shape, data) in &entries {
        w.write_all(&(name.len() as u32).to_le_bytes()).map_err(io_err)?;
        w.write_all(name.as_bytes()).map_err(io_err)?;
        w.write_all(&(shape.len() as u32).to_le_bytes()).map_err(io_err)?;
        for &dim in shape {
            w.write_all(&(dim as u32).to_le_bytes()).map_err(io_err)?;
        }
        let mut bytes = Vec::with_capacity(data.len() * 4);
        for v in data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&bytes).map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

/// Reads a checkpoint and instantiates the canonical network with its
/// weights. Any structural disagreement is a distinct error.
pub fn load_checkpoint(path: &Path) -> Result<MultiScoreNet> {
    let file = File::open(path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut r = Reader {
        inner: BufReader::new(file),
        path,
    };

    let magic = r.bytes(4, "magic")?;
    if magic != MAGIC {
        return Err(ModelError::BadMagic {
            path: path.to_path_buf(),
            found: [magic[0], magic[1], magic[2], magic[3]],
        });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(ModelError::Version {
            path: path.to_path_buf(),
            got: version,
        });
    }
    let count = r.u32("tensor count")? as usize;
    let mut entries = Vec::with_capacity(count);
    for i in 0..count {
        let ctx = |what: &str| format!("{what} of tensor {i}");
        let name_len = r.u32(&ctx("name length"))? as usize;
        let name_bytes = r.bytes(name_len, &ctx("name"))?;
        let name = String::from_utf8(name_bytes).map_err(|_| ModelError::BadName {
            path: path.to_path_buf(),
        })?;
        let rank = r.u32(&ctx("rank"))? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32(&ctx("dims"))? as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = r.bytes(numel * 4, &format!("data of tensor `{name}`"))?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        entries.push((name, shape, data));
    }
    let mut trailing = [0u8; 1];
    match r.inner.read(&mut trailing) {
        Ok(0) => {}
        Ok(_) => {
            let mut rest = Vec::new();
            r.inner
                .read_to_end(&mut rest)
                .map_err(|source| ModelError::Io {
                    path: path.to_path_buf(),
                    source,
                })?;
            return Err(ModelError::TrailingData {
                path: path.to_path_buf(),
                extra: rest.len() + 1,
            });
        }
        Err(source) => {
            return Err(ModelError::Io {
                path: path.to_path_buf(),
                source,
            })
        }
    }

    let mut net = MultiScoreNet::build(0);
    net.import_parameters(&entries)?;
    Ok(net)
}

struct Reader<'a> {
    inner: BufReader<File>,
    path: &'a Path,
}

impl Reader<'_> {
    fn bytes(&mut self, n: usize, context: &str) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        self.inner.read_exact(&mut buf).map_err(|source| {
            if source.kind() == std::io::ErrorKind::UnexpectedEof {
                ModelError::Truncated {
                    path: self.path.to_path_buf(),
                    context: context.to_string(),
                }
            } else {
                ModelError::Io {
                    path: self.path.to_path_buf(),
                    source,
                }
            }
        })?;
        Ok(buf)
    }

    fn u32(&mut self, context: &str) -> Result<u32> {
        let b = self.bytes(4, context)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
