use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{contract_err, Error, Result};
use crate::nn::ParamStore;
use crate::numerics::Tensor;

const MAGIC: &[u8; 4] = b"WLCK";
const VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;
/// Config key listing frozen parameter names, comma separated.
const FROZEN_KEY: &str = "params.frozen";

/// Named tensors plus a key-value config snapshot.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub config: BTreeMap<String, String>,
    pub tensors: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    pub fn get(&self, key: &str) -> Option<String> {
        self.config.get(key).cloned()
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.config
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| contract_err!("checkpoint is missing config key `{key}`"))
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        self.config.insert(key.into(), value.to_string());
    }

    pub fn extend_config(&mut self, pairs: Vec<(String, String)>) {
        self.config.extend(pairs);
    }

    /// Stores a parameter set, remembering which entries are frozen.
    pub fn put_params(&mut self, prefix: &str, params: &ParamStore) {
        let mut frozen: Vec<String> = self.get(FROZEN_KEY).map(|s| split_list(&s)).unwrap_or_default();
        for (name, p) in params.iter() {
            let key = format!("{prefix}{name}");
            if !p.trainable {
                frozen.push(key.clone());
            }
            self.tensors.insert(key, p.value.clone());
        }
        if !frozen.is_empty() {
            self.set(FROZEN_KEY, frozen.join(","));
        }
    }

    /// Parameters stored under `prefix`, with the prefix removed.
    pub fn params(&self, prefix: &str) -> ParamStore {
        let frozen: Vec<String> = self.get(FROZEN_KEY).map(|s| split_list(&s)).unwrap_or_default();
        let mut store = ParamStore::new();
        for (name, t) in &self.tensors {
            if let Some(rest) = name.strip_prefix(prefix) {
                store.insert(rest, t.clone(), !frozen.contains(name));
            }
        }
        store
    }

    pub fn write(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        let mut cfg = String::new();
        for (k, v) in &self.config {
            if k.contains(['\n', '=']) || v.contains('\n') {
                return Err(contract_err!("config entry `{k}` cannot be stored"));
            }
            cfg.push_str(&format!("{k} = {v}\n"));
        }
        w.write_all(&(cfg.len() as u64).to_le_bytes())?;
        w.write_all(cfg.as_bytes())?;
        w.write_all(&(self.tensors.len() as u64).to_le_bytes())?;
        let mut offset = 0u64;
        for (name, t) in &self.tensors {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&[DTYPE_F32, t.rank() as u8])?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            w.write_all(&offset.to_le_bytes())?;
            offset += 4 * t.len() as u64;
        }
        let mut buf = Vec::with_capacity(offset as usize);
        for t in self.tensors.values() {
            for v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read(r: &mut impl Read, path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let mut cur = Cursor { bytes: &bytes, pos: 0, path };
        if cur.take(4)? != MAGIC {
            return Err(Error::format(path, 0, "not a WLCK checkpoint"));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(Error::format(path, 0, format!("unsupported checkpoint version {version}")));
        }
        let cfg_len = cur.u64()? as usize;
        let cfg = std::str::from_utf8(cur.take(cfg_len)?).map_err(|_| Error::format(path, 0, "config block is not UTF-8"))?;
        let config = parse_config(cfg, path)?;
        let count = cur.u64()? as usize;
        let mut manifest = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let n = cur.u32()? as usize;
            let name = String::from_utf8(cur.take(n)?.to_vec()).map_err(|_| Error::format(path, 0, "tensor name is not UTF-8"))?;
            let head = cur.take(2)?;
            if head[0] != DTYPE_F32 {
                return Err(Error::format(path, 0, format!("tensor `{name}`: unsupported dtype {}", head[0])));
            }
            let shape = (0..head[1]).map(|_| cur.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let offset = cur.u64()? as usize;
            manifest.push((name, shape, offset));
        }
        let payload = &bytes[cur.pos..];
        let mut tensors = BTreeMap::new();
        for (name, shape, offset) in manifest {
            let len: usize = shape.iter().product();
            let end = offset + 4 * len;
            if end > payload.len() {
                return Err(Error::format(path, 0, format!("tensor `{name}` runs past the end of the file")));
            }
            let data = payload[offset..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let t = Tensor::new(&shape, data).map_err(|e| Error::format(path, 0, format!("tensor `{name}`: {e}")))?;
            tensors.insert(name, t);
        }
        Ok(Self { config, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read(&mut f, path)
    }
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',').filter(|x| !x.is_empty()).map(str::to_string).collect()
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format(self.path, 0, "truncated checkpoint"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Parses `section.key = value` lines. Blank lines and `#` comments are
/// skipped; later keys override earlier ones.
pub fn parse_config(text: &str, path: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::format(path, i + 1, format!("expected `key = value`, found `{line}`")));
        };
        let k = k.trim();
        if k.is_empty() || k.contains(char::is_whitespace) {
            return Err(Error::format(path, i + 1, format!("invalid key `{k}`")));
        }
        out.insert(k.to_string(), v.trim().to_string());
    }
    Ok(out)
}

pub fn format_config(cfg: &BTreeMap<String, String>) -> String {
    cfg.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

pub fn read_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text, path)
}
