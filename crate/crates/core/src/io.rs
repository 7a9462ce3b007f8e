//! On-disk formats.
//!
//! All binary formats are little-endian and start with a 4-byte magic and a
//! `u32` version.
//!
//! Embeddings (`EMB1`): `N: u32`, `D: u32`, dtype tag `u8` (0 = f32,
//! 1 = f64), then `N·D` row-major values.
//!
//! SPD artifact (`SPD1`): attribute name (`u32` length + UTF-8), class count
//! `u32`, `D: u32`, `d_b: u32`, `d_b·D` basis values `f64`, `D` neutral-mean
//! values `f64`, selection mode `u8`, `τ: f64`, selected count `u32`,
//! reinjection flag `u8`, accuracy trail (`u32` count + `f64`s), directions per
//! round (`u32` count + `u32`s), stop reason `u8`.
//!
//! SFID artifact (`SFD1`): attribute name, `D: u32`, `m: u32`, `m` sorted
//! indices `u32`, `m` neutral values `f64`, `τ: f64`, selection mode `u8`,
//! selected count `u32`.
//!
//! Labels are CSV with header `sample_index,<attr>,...` and 0-based class ids.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::debias::{DebiasArtifact, NeutralMean, SelectionMode, SfidArtifact, SpdArtifact};
use crate::error::{Error, Result};
use crate::inlp::{BiasSubspaceArtifact, StopReason};
use crate::linalg::{Matrix, OrthonormalBasis};
use crate::models::LabelVector;

pub const EMB_MAGIC: &[u8; 4] = b"EMB1";
pub const SPD_MAGIC: &[u8; 4] = b"SPD1";
pub const SFD_MAGIC: &[u8; 4] = b"SFD1";
pub const FORMAT_VERSION: u32 = 1;

/// Gram tolerance when reading a stored basis back.
const STORED_BASIS_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn tag(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// Embeddings plus the dtype they were stored with. Values are always held as
/// `f64`; f32 files are widened on read and narrowed on write.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingFile {
    pub matrix: Matrix,
    pub dtype: Dtype,
}

struct Writer(Vec<u8>);

impl Writer {
    fn new(magic: &[u8; 4]) -> Self {
        let mut w = Writer(magic.to_vec());
        w.u32(FORMAT_VERSION);
        w
    }

    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn len(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::format("length", format!("{v} does not fit in u32")))?;
        self.u32(v);
        Ok(())
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64s(&mut self, vs: &[f64]) {
        vs.iter().for_each(|&v| self.f64(v));
    }

    fn str(&mut self, s: &str) -> Result<()> {
        self.len(s.len())?;
        self.0.extend_from_slice(s.as_bytes());
        Ok(())
    }
}

struct Reader<'a> {
    what: &'static str,
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn open(what: &'static str, buf: &'a [u8], magic: &[u8; 4]) -> Result<Self> {
        let mut r = Reader { what, buf, pos: 0 };
        if r.take(4)? != magic {
            return Err(Error::format(what, format!("bad magic, expected {:?}", std::str::from_utf8(magic).unwrap())));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::format(what, format!("unsupported version {version}")));
        }
        Ok(r)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::format(self.what, format!("truncated at byte {} (wanted {n} more)", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// Checks that `count` items of `width` bytes are present before
    /// allocating for them.
    fn reserve(&self, count: usize, width: usize) -> Result<()> {
        let need = count
            .checked_mul(width)
            .ok_or_else(|| Error::format(self.what, "size overflow"))?;
        if need > self.buf.len() - self.pos {
            return Err(Error::format(
                self.what,
                format!("payload needs {need} bytes, {} remain", self.buf.len() - self.pos),
            ));
        }
        Ok(())
    }

    fn f64s(&mut self, count: usize) -> Result<Vec<f64>> {
        self.reserve(count, 8)?;
        (0..count).map(|_| self.f64()).collect()
    }

    fn u32s(&mut self, count: usize) -> Result<Vec<usize>> {
        self.reserve(count, 4)?;
        (0..count).map(|_| self.usize()).collect()
    }

    fn str(&mut self) -> Result<String> {
        let n = self.usize()?;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| Error::format(self.what, "name is not UTF-8"))
    }

    fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::format(self.what, format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

fn matrix_from(what: &'static str, rows: usize, cols: usize, data: Vec<f64>) -> Result<Matrix> {
    Matrix::new(rows, cols, data).map_err(|e| match e {
        Error::NonFinite { row, col } => Error::format(what, format!("non-finite value at row {row}, column {col}")),
        other => other,
    })
}

pub fn encode_embeddings(file: &EmbeddingFile) -> Result<Vec<u8>> {
    let m = &file.matrix;
    let mut w = Writer::new(EMB_MAGIC);
    w.len(m.rows())?;
    w.len(m.cols())?;
    w.u8(file.dtype.tag());
    w.0.reserve(m.as_slice().len() * file.dtype.width());
    match file.dtype {
        Dtype::F32 => m.as_slice().iter().for_each(|&v| w.0.extend_from_slice(&(v as f32).to_le_bytes())),
        Dtype::F64 => w.f64s(m.as_slice()),
    }
    Ok(w.0)
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<EmbeddingFile> {
    let what = "embedding file";
    let mut r = Reader::open(what, bytes, EMB_MAGIC)?;
    let n = r.usize()?;
    let d = r.usize()?;
    let dtype = match r.u8()? {
        0 => Dtype::F32,
        1 => Dtype::F64,
        t => return Err(Error::format(what, format!("unknown dtype tag {t}"))),
    };
    let count = n.checked_mul(d).ok_or_else(|| Error::format(what, "size overflow"))?;
    r.reserve(count, dtype.width())?;
    let data = match dtype {
        Dtype::F32 => (0..count)
            .map(|_| Ok(f32::from_le_bytes(r.take(4)?.try_into().unwrap()) as f64))
            .collect::<Result<Vec<_>>>()?,
        Dtype::F64 => r.f64s(count)?,
    };
    r.finish()?;
    Ok(EmbeddingFile {
        matrix: matrix_from(what, n, d, data)?,
        dtype,
    })
}

pub fn encode_spd(a: &SpdArtifact) -> Result<Vec<u8>> {
    let s = &a.subspace;
    let mut w = Writer::new(SPD_MAGIC);
    w.str(&s.attribute_name)?;
    w.len(s.class_count)?;
    w.len(s.dim_ambient())?;
    w.len(s.dim_subspace())?;
    w.f64s(s.basis.as_matrix().as_slice());
    w.f64s(&a.neutral.vector);
    w.u8(a.neutral.selection_mode.as_u8());
    w.f64(a.neutral.tau);
    w.len(a.neutral.n_selected)?;
    w.u8(u8::from(a.reinjection_enabled));
    w.len(s.per_iteration_accuracy.len())?;
    w.f64s(&s.per_iteration_accuracy);
    w.len(s.directions_per_iteration.len())?;
    for &k in &s.directions_per_iteration {
        w.len(k)?;
    }
    w.u8(s.stop_reason.as_u8());
    Ok(w.0)
}

pub fn decode_spd(bytes: &[u8]) -> Result<SpdArtifact> {
    let what = "SPD artifact";
    let mut r = Reader::open(what, bytes, SPD_MAGIC)?;
    let name = r.str()?;
    let class_count = r.usize()?;
    let d = r.usize()?;
    let db = r.usize()?;
    if db > d {
        return Err(Error::format(what, format!("subspace rank {db} exceeds dimension {d}")));
    }
    let count = db.checked_mul(d).ok_or_else(|| Error::format(what, "size overflow"))?;
    let basis_rows = matrix_from(what, db, d, r.f64s(count)?)?;
    let basis = OrthonormalBasis::from_orthonormal_rows(basis_rows, STORED_BASIS_TOL)
        .map_err(|e| Error::format(what, e.to_string()))?;
    let vector = r.f64s(d)?;
    if vector.iter().any(|v| !v.is_finite()) {
        return Err(Error::format(what, "non-finite neutral mean"));
    }
    let mode = SelectionMode::from_u8(r.u8()?).ok_or_else(|| Error::format(what, "unknown selection mode"))?;
    let tau = r.f64()?;
    let n_selected = r.usize()?;
    let reinjection_enabled = match r.u8()? {
        0 => false,
        1 => true,
        v => return Err(Error::format(what, format!("bad reinjection flag {v}"))),
    };
    let trail_len = r.usize()?;
    let per_iteration_accuracy = r.f64s(trail_len)?;
    let dirs_len = r.usize()?;
    let directions_per_iteration = r.u32s(dirs_len)?;
    let stop_reason = StopReason::from_u8(r.u8()?).ok_or_else(|| Error::format(what, "unknown stop reason"))?;
    r.finish()?;
    if class_count < 2 {
        return Err(Error::format(what, format!("class count {class_count} < 2")));
    }
    let subspace = BiasSubspaceArtifact {
        basis,
        attribute_name: name.clone(),
        per_iteration_accuracy,
        directions_per_iteration,
        class_count,
        stop_reason,
    };
    let neutral = NeutralMean {
        vector,
        selection_mode: mode,
        tau,
        n_selected,
        attribute_name: name,
    };
    SpdArtifact::new(subspace, neutral, reinjection_enabled)
}

pub fn encode_sfid(a: &SfidArtifact) -> Result<Vec<u8>> {
    let mut w = Writer::new(SFD_MAGIC);
    w.str(&a.attribute_name)?;
    w.len(a.dim_ambient)?;
    w.len(a.m())?;
    for &j in &a.dims {
        w.len(j)?;
    }
    w.f64s(&a.neutral_values);
    w.f64(a.tau);
    w.u8(a.selection_mode.as_u8());
    w.len(a.n_selected)?;
    Ok(w.0)
}

pub fn decode_sfid(bytes: &[u8]) -> Result<SfidArtifact> {
    let what = "SFID artifact";
    let mut r = Reader::open(what, bytes, SFD_MAGIC)?;
    let name = r.str()?;
    let d = r.usize()?;
    let m = r.usize()?;
    if m > d {
        return Err(Error::format(what, format!("m = {m} exceeds dimension {d}")));
    }
    let dims = r.u32s(m)?;
    let values = r.f64s(m)?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::format(what, "non-finite neutral value"));
    }
    let tau = r.f64()?;
    let mode = SelectionMode::from_u8(r.u8()?).ok_or_else(|| Error::format(what, "unknown selection mode"))?;
    let n_selected = r.usize()?;
    r.finish()?;
    let mut a = SfidArtifact::new(&name, d, dims, values, tau).map_err(|e| Error::format(what, e.to_string()))?;
    a.selection_mode = mode;
    a.n_selected = n_selected;
    Ok(a)
}

pub fn encode_artifact(a: &DebiasArtifact) -> Result<Vec<u8>> {
    match a {
        DebiasArtifact::Spd(s) => encode_spd(s),
        DebiasArtifact::Sfid(s) => encode_sfid(s),
    }
}

/// Dispatches on the magic bytes.
pub fn decode_artifact(bytes: &[u8]) -> Result<DebiasArtifact> {
    match bytes.get(..4) {
        Some(m) if m == SPD_MAGIC => decode_spd(bytes).map(DebiasArtifact::Spd),
        Some(m) if m == SFD_MAGIC => decode_sfid(bytes).map(DebiasArtifact::Sfid),
        _ => Err(Error::format("artifact", "unrecognized magic")),
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingFile> {
    decode_embeddings(&fs::read(path)?)
}

pub fn write_embeddings(path: &Path, file: &EmbeddingFile) -> Result<()> {
    write_atomic(path, &encode_embeddings(file)?)
}

pub fn read_artifact(path: &Path) -> Result<DebiasArtifact> {
    decode_artifact(&fs::read(path)?)
}

pub fn write_artifact(path: &Path, a: &DebiasArtifact) -> Result<()> {
    write_atomic(path, &encode_artifact(a)?)
}

/// Parses a label table. Every column must use the ids `0..C` with each id
/// present at least once; `C` becomes the column's class count.
pub fn parse_labels(text: &str) -> Result<Vec<(String, LabelVector)>> {
    let what = "label file";
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| Error::format(what, e.to_string()))?
        .clone();
    if header.get(0) != Some("sample_index") {
        return Err(Error::format(what, "first header column must be sample_index"));
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    if names.is_empty() {
        return Err(Error::format(what, "no attribute columns"));
    }
    if let Some(dup) = names.iter().enumerate().find(|(i, n)| names[..*i].contains(n)) {
        return Err(Error::format(what, format!("duplicate column {:?}", dup.1)));
    }
    let mut columns: Vec<Vec<usize>> = vec![Vec::new(); names.len()];
    for (row, rec) in rdr.records().enumerate() {
        let line = row + 2;
        let rec = rec.map_err(|e| Error::format(what, format!("line {line}: {e}")))?;
        if rec.len() != names.len() + 1 {
            return Err(Error::format(what, format!("line {line}: expected {} fields, found {}", names.len() + 1, rec.len())));
        }
        let idx: usize = rec[0]
            .parse()
            .map_err(|_| Error::format(what, format!("line {line}: bad sample_index {:?}", &rec[0])))?;
        if idx != row {
            return Err(Error::format(what, format!("line {line}: sample_index {idx}, expected {row}")));
        }
        for (k, col) in columns.iter_mut().enumerate() {
            let v = rec[k + 1]
                .parse()
                .map_err(|_| Error::format(what, format!("line {line}: bad class id {:?}", &rec[k + 1])))?;
            col.push(v);
        }
    }
    names
        .into_iter()
        .zip(columns)
        .map(|(name, col)| {
            let c = col.iter().max().map_or(0, |m| m + 1);
            let y = LabelVector::new(col, c)?;
            if let Some(missing) = y.counts().iter().position(|&n| n == 0) {
                return Err(Error::format(what, format!("column {name:?}: class ids not contiguous, {missing} unused")));
            }
            Ok((name, y))
        })
        .collect()
}

pub fn format_labels(labels: &[(String, LabelVector)]) -> Result<String> {
    let n = labels.first().map_or(0, |(_, y)| y.len());
    if let Some((_, y)) = labels.iter().find(|(_, y)| y.len() != n) {
        return Err(Error::dims(n, y.len()));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["sample_index".to_string()];
    header.extend(labels.iter().map(|(name, _)| name.clone()));
    let csv_err = |e: csv::Error| Error::format("label file", e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..n {
        let mut rec = vec![i.to_string()];
        rec.extend(labels.iter().map(|(_, y)| y.get(i).to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::format("label file", e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn read_labels(path: &Path) -> Result<Vec<(String, LabelVector)>> {
    parse_labels(&fs::read_to_string(path)?)
}

pub fn write_labels(path: &Path, labels: &[(String, LabelVector)]) -> Result<()> {
    write_atomic(path, format_labels(labels)?.as_bytes())
}
