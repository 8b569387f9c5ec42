//! Binary model checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! | field            | type                                     |
//! |------------------|------------------------------------------|
//! | magic            | 8 bytes `NIDSLM\0\x01`                   |
//! | format version   | u32 (= 1)                                |
//! | vocab_size       | u32                                      |
//! | context          | u32                                      |
//! | layers           | u32                                      |
//! | d_model          | u32                                      |
//! | heads            | u32                                      |
//! | d_ff             | u32                                      |
//! | lambda           | f64                                      |
//! | tau              | f64                                      |
//! | learning_rate    | f64                                      |
//! | lr_decay         | f64                                      |
//! | batch_size       | u32                                      |
//! | max_epochs       | u32                                      |
//! | patience         | u32                                      |
//! | optimizer        | u8 (0 = adam, 1 = sgd)                   |
//! | init_std         | f64                                      |
//! | state hash       | u32 length + UTF-8 bytes                 |
//! | parameter count  | u64                                      |
//! | parameters       | f64 × count, tensors in manifest order   |

use std::io::{Read, Write};

use super::params::{LmParams, ParamLayout};
use super::{LanguageModel, LmConfig, LmError, Optimizer};

const MAGIC: &[u8; 8] = b"NIDSLM\0\x01";
const VERSION: u32 = 1;

/// A model plus the content hash of the preprocessing state it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: LanguageModel,
    pub state_hash: String,
}

fn u32_of(v: usize, what: &str) -> Result<u32, LmError> {
    u32::try_from(v).map_err(|_| LmError::Checkpoint(format!("{what} does not fit in u32")))
}

impl Checkpoint {
    pub fn write<W: Write>(&self, mut w: W) -> Result<(), LmError> {
        let c = &self.model.config;
        let mut buf = Vec::with_capacity(64 + self.model.params.data.len() * 8);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        for (v, name) in [
            (c.vocab_size, "vocab_size"),
            (c.context, "context"),
            (c.layers, "layers"),
            (c.d_model, "d_model"),
            (c.heads, "heads"),
            (c.d_ff, "d_ff"),
        ] {
            buf.extend_from_slice(&u32_of(v, name)?.to_le_bytes());
        }
        for v in [c.lambda, c.tau, c.learning_rate, c.lr_decay] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for (v, name) in [(c.batch_size, "batch_size"), (c.max_epochs, "max_epochs"), (c.patience, "patience")] {
            buf.extend_from_slice(&u32_of(v, name)?.to_le_bytes());
        }
        buf.push(match c.optimizer {
            Optimizer::Adam => 0,
            Optimizer::Sgd => 1,
        });
        buf.extend_from_slice(&c.init_std.to_le_bytes());
        buf.extend_from_slice(&u32_of(self.state_hash.len(), "hash length")?.to_le_bytes());
        buf.extend_from_slice(self.state_hash.as_bytes());
        buf.extend_from_slice(&(self.model.params.data.len() as u64).to_le_bytes());
        for v in &self.model.params.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf).map_err(|e| LmError::Checkpoint(e.to_string()))
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self, LmError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(|e| LmError::Checkpoint(e.to_string()))?;
        let mut cur = Cursor { bytes: &bytes, pos: 0 };
        if cur.take(8)? != MAGIC {
            return Err(LmError::Checkpoint("bad magic".into()));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(LmError::Checkpoint(format!("unsupported format version {version}")));
        }
        let mut config = LmConfig {
            vocab_size: cur.u32()? as usize,
            context: cur.u32()? as usize,
            layers: cur.u32()? as usize,
            d_model: cur.u32()? as usize,
            heads: cur.u32()? as usize,
            d_ff: cur.u32()? as usize,
            ..LmConfig::default()
        };
        config.lambda = cur.f64()?;
        config.tau = cur.f64()?;
        config.learning_rate = cur.f64()?;
        config.lr_decay = cur.f64()?;
        config.batch_size = cur.u32()? as usize;
        config.max_epochs = cur.u32()? as usize;
        config.patience = cur.u32()? as usize;
        config.optimizer = match cur.take(1)?[0] {
            0 => Optimizer::Adam,
            1 => Optimizer::Sgd,
            other => return Err(LmError::Checkpoint(format!("unknown optimizer tag {other}"))),
        };
        config.init_std = cur.f64()?;
        let hash_len = cur.u32()? as usize;
        let state_hash = String::from_utf8(cur.take(hash_len)?.to_vec())
            .map_err(|_| LmError::Checkpoint("state hash is not UTF-8".into()))?;
        let count = cur.u64()? as usize;
        config.validate()?;
        let layout = ParamLayout::new(&config);
        if count != layout.total() {
            return Err(LmError::Checkpoint(format!(
                "parameter count {count} does not match configuration ({})",
                layout.total()
            )));
        }
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            data.push(cur.f64()?);
        }
        if cur.pos != bytes.len() {
            return Err(LmError::Checkpoint("trailing bytes after parameters".into()));
        }
        let model = LanguageModel::new(config, LmParams { layout, data })?;
        Ok(Self { model, state_hash })
    }

    /// Human-readable description of the binary layout.
    pub fn manifest(&self) -> String {
        let c = &self.model.config;
        let mut out = String::new();
        out.push_str("format = NIDSLM v1 (little-endian)\n");
        out.push_str(&format!("state_hash = {}\n", self.state_hash));
        for (k, v) in [
            ("vocab_size", c.vocab_size.to_string()),
            ("context", c.context.to_string()),
            ("layers", c.layers.to_string()),
            ("d_model", c.d_model.to_string()),
            ("heads", c.heads.to_string()),
            ("d_ff", c.d_ff.to_string()),
            ("lambda", c.lambda.to_string()),
            ("tau", c.tau.to_string()),
            ("learning_rate", c.learning_rate.to_string()),
            ("lr_decay", c.lr_decay.to_string()),
            ("batch_size", c.batch_size.to_string()),
            ("max_epochs", c.max_epochs.to_string()),
            ("patience", c.patience.to_string()),
            ("optimizer", c.optimizer.as_str().to_string()),
            ("init_std", c.init_std.to_string()),
        ] {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out.push_str(&format!("parameters = {}\n", self.model.params.data.len()));
        out.push_str("\n# tensor, rows, cols, offset (f64 elements)\n");
        for s in self.model.params.layout.specs() {
            out.push_str(&format!("{}, {}, {}, {}\n", s.name, s.rows, s.cols, s.offset));
        }
        out
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], LmError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| LmError::Checkpoint("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, LmError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, LmError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, LmError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
