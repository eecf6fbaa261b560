//! Binary model file.
//!
//! ```text
//! magic "CR5\0" | version u32 | flags u32 | payload_len u64 | payload | crc32 u32
//! payload = metadata (u64 length + JSON) | rank u64 | n_languages u64
//!           | per language: name, vocab size u64, (word, df u64, idf f64)*, Φ_l row-major
//!           | sigma | [classifier: K u64, concept*, H row-major, b]
//! ```
//! Integers and floats are little-endian; strings are a u32 byte length then UTF-8.
//! The checksum covers every byte before it.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use nalgebra::DMatrix;

use super::{Classifier, Cr5Model, ModelMetadata};
use crate::corpus::{FeatureSpace, Vocabulary};
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"CR5\0";
pub const FORMAT_VERSION: u32 = 1;
const FLAG_CLASSIFIER: u32 = 1;
const HEADER_LEN: u64 = 20;

struct Counter(u64);

impl Write for Counter {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0 += buf.len() as u64;
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

struct Hashing<W> {
    inner: W,
    hasher: crc32fast::Hasher,
}

impl<W: Write> Write for Hashing<W> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

fn put_u64<W: Write>(w: &mut W, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn put_f64s<W: Write>(w: &mut W, vs: impl IntoIterator<Item = f64>) -> std::io::Result<()> {
    for v in vs {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn put_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn encode_payload<W: Write>(model: &Cr5Model, w: &mut W) -> std::io::Result<()> {
    let meta = serde_json::to_vec(&model.metadata).map_err(std::io::Error::other)?;
    put_u64(w, meta.len() as u64)?;
    w.write_all(&meta)?;
    let r = model.rank;
    put_u64(w, r as u64)?;
    put_u64(w, model.space.blocks().len() as u64)?;
    for (block, cols) in model.space.blocks().iter().zip(&model.columns) {
        let vocab = &block.vocabulary;
        put_str(w, vocab.language())?;
        put_u64(w, vocab.len() as u64)?;
        for i in 0..vocab.len() {
            put_str(w, &vocab.words()[i])?;
            put_u64(w, vocab.doc_freq()[i])?;
            put_f64s(w, [vocab.idf()[i]])?;
        }
        let p = vocab.len();
        for i in 0..r {
            put_f64s(w, (0..p).map(|j| cols[j * r + i]))?;
        }
    }
    put_f64s(w, model.sigma.iter().copied())?;
    if let Some(c) = &model.classifier {
        put_u64(w, c.concepts.len() as u64)?;
        for concept in &c.concepts {
            put_str(w, concept)?;
        }
        for k in 0..c.h.nrows() {
            put_f64s(w, c.h.row(k).iter().copied())?;
        }
        put_f64s(w, c.b.iter().copied())?;
    }
    Ok(())
}

/// Serializes `model` into `w`.
pub fn write_model<W: Write>(model: &Cr5Model, w: W) -> std::io::Result<()> {
    let mut counter = Counter(0);
    encode_payload(model, &mut counter)?;
    let mut w = Hashing {
        inner: w,
        hasher: crc32fast::Hasher::new(),
    };
    let flags = if model.classifier.is_some() { FLAG_CLASSIFIER } else { 0 };
    w.write_all(&MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&flags.to_le_bytes())?;
    put_u64(&mut w, counter.0)?;
    encode_payload(model, &mut w)?;
    let crc = w.hasher.clone().finalize();
    w.inner.write_all(&crc.to_le_bytes())?;
    w.flush()
}

pub fn save_model(model: &Cr5Model, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_model(model, &mut w).map_err(|e| Error::io(path, e))?;
    w.into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?
        .sync_all()
        .map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<Cr5Model> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_model(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

fn io_err(e: std::io::Error) -> Error {
    Error::Io {
        path: "<model>".into(),
        source: e,
    }
}

/// Reads exactly `buf.len()` bytes or reports truncation.
fn fill<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::ModelTruncated(format!("end of file inside {what}")),
        _ => io_err(e),
    })
}

/// Validates header, length and checksum, then decodes.
pub fn read_model<R: Read + Seek>(mut r: R) -> Result<Cr5Model> {
    let mut header = [0u8; HEADER_LEN as usize];
    let got = read_up_to(&mut r, &mut header)?;
    if got >= 4 && header[..4] != MAGIC {
        return Err(Error::ModelVersion(format!(
            "bad magic bytes {:02x?}; not a model file",
            &header[..4]
        )));
    }
    if got < header.len() {
        return Err(Error::ModelTruncated(format!("header has {got} of {HEADER_LEN} bytes")));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::ModelVersion(format!(
            "format version {version}, this build reads {FORMAT_VERSION}"
        )));
    }
    let flags = u32::from_le_bytes(header[8..12].try_into().unwrap());
    if flags & !FLAG_CLASSIFIER != 0 {
        return Err(Error::ModelFormat(format!("unknown flags {flags:#x}")));
    }
    let payload_len = u64::from_le_bytes(header[12..20].try_into().unwrap());

    let end = r.seek(SeekFrom::End(0)).map_err(io_err)?;
    let expected = HEADER_LEN
        .checked_add(payload_len)
        .and_then(|v| v.checked_add(4))
        .ok_or_else(|| Error::ModelFormat("payload length overflows".into()))?;
    if end < expected {
        return Err(Error::ModelTruncated(format!(
            "file has {end} bytes, header declares {expected}"
        )));
    }
    if end > expected {
        return Err(Error::ModelFormat(format!(
            "{} trailing bytes after checksum",
            end - expected
        )));
    }

    r.seek(SeekFrom::Start(0)).map_err(io_err)?;
    let mut hasher = crc32fast::Hasher::new();
    let mut remaining = HEADER_LEN + payload_len;
    let mut buf = vec![0u8; 1 << 16];
    while remaining > 0 {
        let n = remaining.min(buf.len() as u64) as usize;
        fill(&mut r, &mut buf[..n], "checksummed region")?;
        hasher.update(&buf[..n]);
        remaining -= n as u64;
    }
    let mut trailer = [0u8; 4];
    fill(&mut r, &mut trailer, "checksum")?;
    let stored = u32::from_le_bytes(trailer);
    let computed = hasher.finalize();
    if stored != computed {
        return Err(Error::ModelChecksum { stored, computed });
    }

    r.seek(SeekFrom::Start(HEADER_LEN)).map_err(io_err)?;
    let mut d = Decoder {
        r: (&mut r).take(payload_len),
        remaining: payload_len,
    };
    let model = d.model(flags & FLAG_CLASSIFIER != 0)?;
    if d.remaining != 0 {
        return Err(Error::ModelFormat(format!("{} unread payload bytes", d.remaining)));
    }
    Ok(model)
}

fn read_up_to<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<usize> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(n) => got += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(io_err(e)),
        }
    }
    Ok(got)
}

struct Decoder<R> {
    r: R,
    remaining: u64,
}

impl<R: Read> Decoder<R> {
    fn bytes(&mut self, n: u64, what: &str) -> Result<Vec<u8>> {
        if n > self.remaining {
            return Err(Error::ModelFormat(format!("{what} overruns the payload")));
        }
        let mut buf = vec![0u8; n as usize];
        fill(&mut self.r, &mut buf, what)?;
        self.remaining -= n;
        Ok(buf)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8, what)?.try_into().unwrap()))
    }

    fn count(&mut self, what: &str) -> Result<usize> {
        let v = self.u64(what)?;
        usize::try_from(v).map_err(|_| Error::ModelFormat(format!("{what} {v} too large")))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = self.bytes((n as u64).saturating_mul(8), what)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let len = u32::from_le_bytes(self.bytes(4, what)?.try_into().unwrap());
        String::from_utf8(self.bytes(len as u64, what)?).map_err(|_| Error::ModelFormat(format!("{what} is not UTF-8")))
    }

    fn model(&mut self, has_classifier: bool) -> Result<Cr5Model> {
        let meta_len = self.u64("metadata length")?;
        let meta: ModelMetadata = serde_json::from_slice(&self.bytes(meta_len, "metadata")?)
            .map_err(|e| Error::ModelFormat(format!("metadata: {e}")))?;
        let r = self.count("rank")?;
        let n_lang = self.count("language count")?;
        let mut vocabs = Vec::new();
        let mut columns = Vec::new();
        for _ in 0..n_lang {
            let language = self.string("language name")?;
            let p = self.count("vocabulary size")?;
            // Each word takes at least 20 bytes; refuse sizes the payload cannot hold.
            if (p as u64).saturating_mul(20) > self.remaining {
                return Err(Error::ModelFormat(format!("vocabulary size {p} overruns the payload")));
            }
            let mut words = Vec::with_capacity(p);
            let mut df = Vec::with_capacity(p);
            let mut idf = Vec::with_capacity(p);
            for _ in 0..p {
                words.push(self.string("word")?);
                df.push(self.u64("document frequency")?);
                idf.push(self.f64s(1, "idf")?[0]);
            }
            vocabs
                .push(Vocabulary::from_parts(language, words, df, idf).map_err(|e| Error::ModelFormat(e.to_string()))?);
            let rows = self.f64s(r.saturating_mul(p), "Φ block")?;
            let mut cols = vec![0.0; p * r];
            for i in 0..r {
                for j in 0..p {
                    cols[j * r + i] = rows[i * p + j];
                }
            }
            columns.push(cols);
        }
        let space = FeatureSpace::new(vocabs).map_err(|e| Error::ModelFormat(e.to_string()))?;
        let sigma = self.f64s(r, "singular values")?;
        let classifier = if has_classifier {
            let k = self.count("class count")?;
            if (k as u64).saturating_mul(4) > self.remaining {
                return Err(Error::ModelFormat(format!("class count {k} overruns the payload")));
            }
            let concepts = (0..k).map(|_| self.string("concept")).collect::<Result<Vec<_>>>()?;
            let h = self.f64s(k.saturating_mul(r), "H")?;
            let b = self.f64s(k, "offsets")?;
            Some(Classifier {
                h: DMatrix::from_row_slice(k, r, &h),
                b,
                concepts,
            })
        } else {
            None
        };
        Cr5Model::from_parts(space, r, columns, sigma, classifier, meta).map_err(|e| Error::ModelFormat(e.to_string()))
    }
}
