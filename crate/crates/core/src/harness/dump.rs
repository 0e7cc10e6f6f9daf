//! Binary dumps of gradient sets, parameter sets and ground-truth samples.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic        8 bytes  "GSTANDIN"
//! version      u32      1
//! content      u8       0 = gradients, 1 = parameters, 2 = sample
//! transform    u8       0 = identity, 1 = adadefense, 2 = noise, 3 = clip
//! transform_p  f64      sigma or clip norm, 0 otherwise
//! spec_hash    u64
//! round        u64
//! client_id    u64
//! label        u64      u64::MAX when absent
//! n_tensors    u32
//! per tensor:  ndim u32, dims u64 x ndim, values f64 x prod(dims)
//! ```

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::defense::TransformKind;
use crate::error::{Error, Result};
use crate::nn::{Layer, Params};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"GSTANDIN";
pub const VERSION: u32 = 1;
const NO_LABEL: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DumpContent {
    Gradients,
    Parameters,
    Sample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DumpHeader {
    pub content: DumpContent,
    pub transform: TransformKind,
    pub spec_hash: u64,
    pub round: u64,
    pub client_id: u64,
    pub label: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientDump {
    pub header: DumpHeader,
    pub tensors: Vec<Tensor>,
}

impl GradientDump {
    /// Dump of a gradient or parameter set: weight then bias for every layer.
    pub fn from_params(header: DumpHeader, params: &Params) -> Self {
        let tensors = params
            .layers()
            .iter()
            .flat_map(|l| [l.weight.clone(), l.bias.clone()])
            .collect();
        Self { header, tensors }
    }

    pub fn to_params(&self) -> Result<Params> {
        if self.tensors.len() % 2 != 0 {
            return Err(Error::Format("parameter dump needs weight/bias pairs".into()));
        }
        Params::from_layers(
            self.tensors
                .chunks(2)
                .map(|pair| Layer { weight: pair[0].clone(), bias: pair[1].clone() })
                .collect(),
        )
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.write_u32::<LittleEndian>(VERSION).unwrap();
        out.write_u8(match self.header.content {
            DumpContent::Gradients => 0,
            DumpContent::Parameters => 1,
            DumpContent::Sample => 2,
        })
        .unwrap();
        let (tag, param) = match self.header.transform {
            TransformKind::Identity => (0, 0.0),
            TransformKind::AdaDefense => (1, 0.0),
            TransformKind::GaussianNoise { sigma } => (2, sigma),
            TransformKind::Clip { max_norm } => (3, max_norm),
        };
        out.write_u8(tag).unwrap();
        out.write_f64::<LittleEndian>(param).unwrap();
        out.write_u64::<LittleEndian>(self.header.spec_hash).unwrap();
        out.write_u64::<LittleEndian>(self.header.round).unwrap();
        out.write_u64::<LittleEndian>(self.header.client_id).unwrap();
        out.write_u64::<LittleEndian>(self.header.label.unwrap_or(NO_LABEL)).unwrap();
        out.write_u32::<LittleEndian>(self.tensors.len() as u32).unwrap();
        for t in &self.tensors {
            out.write_u32::<LittleEndian>(t.shape().len() as u32).unwrap();
            for &d in t.shape() {
                out.write_u64::<LittleEndian>(d as u64).unwrap();
            }
            for &v in t.data() {
                out.write_f64::<LittleEndian>(v).unwrap();
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor::new(bytes);
        let t = |_| Error::Truncated("gradient dump".into());
        let mut magic = [0u8; 8];
        cur.read_exact(&mut magic).map_err(t)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a gradient dump (bad magic)".into()));
        }
        let version = cur.read_u32::<LittleEndian>().map_err(t)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported dump version {version}")));
        }
        let content = match cur.read_u8().map_err(t)? {
            0 => DumpContent::Gradients,
            1 => DumpContent::Parameters,
            2 => DumpContent::Sample,
            other => return Err(Error::Format(format!("unknown dump content tag {other}"))),
        };
        let tag = cur.read_u8().map_err(t)?;
        let param = cur.read_f64::<LittleEndian>().map_err(t)?;
        let transform = match tag {
            0 => TransformKind::Identity,
            1 => TransformKind::AdaDefense,
            2 => TransformKind::GaussianNoise { sigma: param },
            3 => TransformKind::Clip { max_norm: param },
            other => return Err(Error::Format(format!("unknown transform tag {other}"))),
        };
        let spec_hash = cur.read_u64::<LittleEndian>().map_err(t)?;
        let round = cur.read_u64::<LittleEndian>().map_err(t)?;
        let client_id = cur.read_u64::<LittleEndian>().map_err(t)?;
        let label = match cur.read_u64::<LittleEndian>().map_err(t)? {
            NO_LABEL => None,
            l => Some(l),
        };
        let n = cur.read_u32::<LittleEndian>().map_err(t)? as usize;
        let mut tensors = Vec::with_capacity(n.min(1024));
        for _ in 0..n {
            let ndim = cur.read_u32::<LittleEndian>().map_err(t)? as usize;
            let mut shape = Vec::with_capacity(ndim.min(8));
            for _ in 0..ndim {
                shape.push(cur.read_u64::<LittleEndian>().map_err(t)? as usize);
            }
            let len: usize = shape.iter().product();
            let remaining = bytes.len() - cur.position() as usize;
            if len.checked_mul(8).is_none_or(|b| b > remaining) {
                return Err(Error::Truncated("gradient dump tensor data".into()));
            }
            let mut data = Vec::with_capacity(len);
            for _ in 0..len {
                data.push(cur.read_f64::<LittleEndian>().map_err(t)?);
            }
            tensors.push(Tensor::new(shape, data)?);
        }
        if cur.position() as usize != bytes.len() {
            return Err(Error::Format("trailing bytes after gradient dump".into()));
        }
        Ok(Self {
            header: DumpHeader { content, transform, spec_hash, round, client_id, label },
            tensors,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
